//! Stress metrics over the post-contingency loading table.
//!
//! The table holds, per monitored branch (row) and single outage (column),
//! the post-outage loading `|f0_i + LODF(i,j) * f0_j| / rating_i`. From it:
//!
//! * vulnerability rank / degree: per monitored branch, the worst loading
//!   and the count of outages pushing it past its threshold;
//! * criticality rank / degree: per outage, the worst loading it induces and
//!   the count of branches it pushes past their thresholds;
//! * the two scalar system degrees, counting non-radial branches
//!   (respectively non-radial contingencies) whose rank exceeds a threshold;
//! * emergency / contingency violation counts against the limit fractions.
//!
//! Islanding outages have no column; they are excluded from every reduction
//! and surface only through `column_valid` and the report's
//! `valid_outage_count`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dc::{FlowState, LodfMatrix, MonitorSets};
use crate::error::{GridError, Result};
use crate::model::{BranchId, Network, TopologyClassification};

/// Loading ceilings as fractions of the normal rating.
///
/// Defaults follow the usual planning assumptions: contingency limit 120%
/// of normal (4 h), emergency limit 135% (15 min). Degree thresholds default
/// to the rating itself and may be overridden per branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSet {
    pub normal_fraction: f64,
    pub contingency_fraction: f64,
    pub contingency_duration_hours: f64,
    pub emergency_fraction: f64,
    pub emergency_duration_minutes: f64,
    /// Default threshold for the degree metrics, as a fraction of rating.
    pub degree_threshold_fraction: f64,
    /// Per-branch overrides of the degree threshold.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_branch_thresholds: BTreeMap<BranchId, f64>,
}

impl Default for LimitSet {
    fn default() -> Self {
        LimitSet {
            normal_fraction: 1.0,
            contingency_fraction: 1.2,
            contingency_duration_hours: 4.0,
            emergency_fraction: 1.35,
            emergency_duration_minutes: 15.0,
            degree_threshold_fraction: 1.0,
            per_branch_thresholds: BTreeMap::new(),
        }
    }
}

impl LimitSet {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.normal_fraction
            && self.normal_fraction <= self.contingency_fraction
            && self.contingency_fraction <= self.emergency_fraction;
        if !ordered {
            return Err(GridError::Invalid(format!(
                "limit fractions must satisfy 0 < normal <= contingency <= emergency, got {}/{}/{}",
                self.normal_fraction, self.contingency_fraction, self.emergency_fraction
            )));
        }
        if !(self.degree_threshold_fraction > 0.0) {
            return Err(GridError::Invalid("degree threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn degree_threshold_for(&self, branch: BranchId) -> f64 {
        self.per_branch_thresholds
            .get(&branch)
            .copied()
            .unwrap_or(self.degree_threshold_fraction)
    }
}

/// Whether a branch counts once per line or once per overloading cell in the
/// violation totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCountMode {
    /// A line is counted once no matter how many contingencies overload it.
    #[default]
    PerLine,
    /// Every overloaded (line, contingency) cell counts.
    PerCell,
}

/// Post-contingency loading of every monitored branch under every outage,
/// in per-unit of each branch's rating.
#[derive(Debug, Clone)]
pub struct PostContingencyTable {
    /// monitored (row) x outage (column); invalid columns are zero-filled.
    pub loading: DMatrix<f64>,
    pub monitored: Vec<BranchId>,
    pub outages: Vec<BranchId>,
    pub column_valid: Vec<bool>,
}

impl PostContingencyTable {
    pub fn valid_outage_count(&self) -> usize {
        self.column_valid.iter().filter(|v| **v).count()
    }
}

/// Evaluate the loading table from base flows and the LODF matrix.
pub fn build_table(
    flow: &FlowState,
    lodf: &LodfMatrix,
    monitors: &MonitorSets,
    net: &Network,
) -> Result<PostContingencyTable> {
    let position_of = |id: BranchId| -> Result<usize> {
        let pos = lodf.position(id).ok_or(GridError::UnknownBranch(id))?;
        let branch = net.branch(id).ok_or(GridError::UnknownBranch(id))?;
        if !branch.in_service {
            return Err(GridError::MonitorOutOfService(id));
        }
        Ok(pos)
    };

    let rows: Vec<usize> = monitors.monitored.iter().map(|&id| position_of(id)).collect::<Result<_>>()?;
    let cols: Vec<usize> = monitors.outages.iter().map(|&id| position_of(id)).collect::<Result<_>>()?;

    let ratings: Vec<f64> = monitors
        .monitored
        .iter()
        .map(|&id| net.branch(id).expect("checked above").rating_mw)
        .collect();

    let mut loading = DMatrix::zeros(rows.len(), cols.len());
    let mut column_valid = Vec::with_capacity(cols.len());
    for (jj, &j) in cols.iter().enumerate() {
        let valid = lodf.validity[j].is_valid();
        column_valid.push(valid);
        if !valid {
            continue;
        }
        let f_out = flow.flows_mw[j];
        for (ii, &i) in rows.iter().enumerate() {
            if i == j {
                continue; // the outaged line carries nothing
            }
            let post = flow.flows_mw[i] + lodf.entries[(i, j)] * f_out;
            loading[(ii, jj)] = post.abs() / ratings[ii];
        }
    }

    Ok(PostContingencyTable {
        loading,
        monitored: monitors.monitored.clone(),
        outages: monitors.outages.clone(),
        column_valid,
    })
}

/// Per-monitored-branch worst loading over all valid outages, in percent.
pub fn vulnerability_rank(table: &PostContingencyTable) -> Result<Vec<f64>> {
    if table.valid_outage_count() == 0 {
        return Err(GridError::NoContingencies);
    }
    Ok((0..table.monitored.len())
        .map(|i| {
            let worst = (0..table.outages.len())
                .filter(|&j| table.column_valid[j])
                .map(|j| table.loading[(i, j)])
                .fold(0.0, f64::max);
            worst * 100.0
        })
        .collect())
}

/// Per-monitored-branch count of valid outages loading it past its
/// threshold.
pub fn vulnerability_degree(table: &PostContingencyTable, limits: &LimitSet) -> Vec<usize> {
    (0..table.monitored.len())
        .map(|i| {
            let threshold = limits.degree_threshold_for(table.monitored[i]);
            (0..table.outages.len())
                .filter(|&j| table.column_valid[j] && table.loading[(i, j)] > threshold)
                .count()
        })
        .collect()
}

/// Count of non-radial monitored branches whose vulnerability rank exceeds
/// the threshold fraction.
pub fn system_vulnerability_degree(
    v_rank_pct: &[f64],
    monitored: &[BranchId],
    topology: &TopologyClassification,
    threshold_fraction: f64,
) -> usize {
    v_rank_pct
        .iter()
        .zip(monitored)
        .filter(|(rank, id)| !topology.is_radial(**id) && **rank > threshold_fraction * 100.0)
        .count()
}

/// Per-outage worst induced loading on the other branches, in percent;
/// `None` for invalid (islanding) columns.
pub fn criticality_rank(table: &PostContingencyTable) -> Vec<Option<f64>> {
    (0..table.outages.len())
        .map(|j| {
            if !table.column_valid[j] {
                return None;
            }
            let worst = (0..table.monitored.len())
                .filter(|&i| table.monitored[i] != table.outages[j])
                .map(|i| table.loading[(i, j)])
                .fold(0.0, f64::max);
            Some(worst * 100.0)
        })
        .collect()
}

/// Per-outage count of monitored branches loaded past their thresholds.
pub fn criticality_degree(table: &PostContingencyTable, limits: &LimitSet) -> Vec<Option<usize>> {
    (0..table.outages.len())
        .map(|j| {
            if !table.column_valid[j] {
                return None;
            }
            let count = (0..table.monitored.len())
                .filter(|&i| {
                    table.loading[(i, j)] > limits.degree_threshold_for(table.monitored[i])
                })
                .count();
            Some(count)
        })
        .collect()
}

/// Count of non-radial contingencies whose criticality rank exceeds the
/// threshold fraction.
pub fn system_criticality_degree(
    c_rank_pct: &[Option<f64>],
    outages: &[BranchId],
    topology: &TopologyClassification,
    threshold_fraction: f64,
) -> usize {
    c_rank_pct
        .iter()
        .zip(outages)
        .filter(|(rank, id)| {
            !topology.is_radial(**id)
                && rank.map_or(false, |r| r > threshold_fraction * 100.0)
        })
        .count()
}

/// `(emergency, contingency)` violation totals against the limit fractions.
pub fn violation_counts(
    table: &PostContingencyTable,
    limits: &LimitSet,
    mode: ViolationCountMode,
) -> (usize, usize) {
    let count = |fraction: f64| -> usize {
        match mode {
            ViolationCountMode::PerLine => (0..table.monitored.len())
                .filter(|&i| {
                    (0..table.outages.len())
                        .any(|j| table.column_valid[j] && table.loading[(i, j)] > fraction)
                })
                .count(),
            ViolationCountMode::PerCell => (0..table.monitored.len())
                .map(|i| {
                    (0..table.outages.len())
                        .filter(|&j| table.column_valid[j] && table.loading[(i, j)] > fraction)
                        .count()
                })
                .sum(),
        }
    };
    (count(limits.emergency_fraction), count(limits.contingency_fraction))
}

/// All metric families for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub label: String,
    pub monitored: Vec<BranchId>,
    pub outages: Vec<BranchId>,
    /// V_rank per monitored branch, percent of rating.
    pub v_rank_pct: Vec<f64>,
    pub v_degree: Vec<usize>,
    pub v_system: usize,
    /// C_rank per outage branch, percent; `null` for islanding outages.
    pub c_rank_pct: Vec<Option<f64>>,
    pub c_degree: Vec<Option<usize>>,
    pub c_system: usize,
    pub emergency_violations: usize,
    pub contingency_violations: usize,
    pub valid_outage_count: usize,
}

impl StressReport {
    pub fn max_v_rank_pct(&self) -> f64 {
        self.v_rank_pct.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_v_degree(&self) -> usize {
        self.v_degree.iter().copied().max().unwrap_or(0)
    }

    pub fn max_c_rank_pct(&self) -> f64 {
        self.c_rank_pct.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn max_c_degree(&self) -> usize {
        self.c_degree.iter().flatten().copied().max().unwrap_or(0)
    }

    /// The monitored branch with the worst rank; ties break to the lowest id.
    pub fn worst_monitored(&self) -> Option<BranchId> {
        let mut best: Option<(f64, BranchId)> = None;
        for (rank, id) in self.v_rank_pct.iter().zip(&self.monitored) {
            let better = match best {
                None => true,
                Some((r, b)) => *rank > r || (*rank == r && *id < b),
            };
            if better {
                best = Some((*rank, *id));
            }
        }
        best.map(|(_, id)| id)
    }
}

/// Run every metric over a table. A table with no valid outage column yields
/// the all-zero report rather than an error, so fully radial post-switch
/// states still report cleanly.
pub fn compute_stress_report(
    table: &PostContingencyTable,
    topology: &TopologyClassification,
    limits: &LimitSet,
    system_threshold_fraction: f64,
    mode: ViolationCountMode,
    label: &str,
) -> StressReport {
    if table.valid_outage_count() == 0 {
        return StressReport {
            label: label.to_string(),
            monitored: table.monitored.clone(),
            outages: table.outages.clone(),
            v_rank_pct: vec![0.0; table.monitored.len()],
            v_degree: vec![0; table.monitored.len()],
            v_system: 0,
            c_rank_pct: vec![None; table.outages.len()],
            c_degree: vec![None; table.outages.len()],
            c_system: 0,
            emergency_violations: 0,
            contingency_violations: 0,
            valid_outage_count: 0,
        };
    }
    let v_rank_pct = vulnerability_rank(table).expect("table has valid columns");
    let v_degree = vulnerability_degree(table, limits);
    let v_system =
        system_vulnerability_degree(&v_rank_pct, &table.monitored, topology, system_threshold_fraction);
    let c_rank_pct = criticality_rank(table);
    let c_degree = criticality_degree(table, limits);
    let c_system =
        system_criticality_degree(&c_rank_pct, &table.outages, topology, system_threshold_fraction);
    let (emergency_violations, contingency_violations) = violation_counts(table, limits, mode);
    StressReport {
        label: label.to_string(),
        monitored: table.monitored.clone(),
        outages: table.outages.clone(),
        v_rank_pct,
        v_degree,
        v_system,
        c_rank_pct,
        c_degree,
        c_system,
        emergency_violations,
        contingency_violations,
        valid_outage_count: table.valid_outage_count(),
    }
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

pub const TABLE_CSV_HEADER: &str =
    "loading,v_rank,v_degree,v_system,c_rank,c_degree,c_system,emergency_violations,contingency_violations";

/// One summary row in the report table's column order: scalar metrics take
/// the maximum over branches, ranks formatted as percentages.
pub fn table_csv_row(report: &StressReport) -> String {
    format!(
        "{},{:.2}%,{},{},{:.2}%,{},{},{},{}",
        csv_field(&report.label),
        report.max_v_rank_pct(),
        report.max_v_degree(),
        report.v_system,
        report.max_c_rank_pct(),
        report.max_c_degree(),
        report.c_system,
        report.emergency_violations,
        report.contingency_violations
    )
}

/// Full summary table for a list of scenarios (header always present).
pub fn to_summary_csv(reports: &[StressReport]) -> String {
    let mut out = String::from(TABLE_CSV_HEADER);
    out.push('\n');
    for report in reports {
        out.push_str(&table_csv_row(report));
        out.push('\n');
    }
    out
}

/// Tidy `(scenario, metric, value)` rows for external plotting.
pub fn to_chart_csv(reports: &[StressReport]) -> String {
    let mut out = String::from("scenario,metric,value\n");
    for r in reports {
        let label = csv_field(&r.label);
        let rows: [(&str, f64); 8] = [
            ("v_rank_max_pct", r.max_v_rank_pct()),
            ("v_degree_max", r.max_v_degree() as f64),
            ("v_system", r.v_system as f64),
            ("c_rank_max_pct", r.max_c_rank_pct()),
            ("c_degree_max", r.max_c_degree() as f64),
            ("c_system", r.c_system as f64),
            ("emergency_violations", r.emergency_violations as f64),
            ("contingency_violations", r.contingency_violations as f64),
        ];
        for (metric, value) in rows {
            writeln!(out, "{label},{metric},{value}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dc::{compute_lodf, compute_ptdf, solve_dc};
    use crate::fixtures;
    use crate::model::classify_topology;
    use approx::assert_abs_diff_eq;

    fn triangle_table() -> (crate::model::Network, PostContingencyTable) {
        let net = fixtures::triangle();
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let monitors = MonitorSets::all_in_service(&net);
        let table = build_table(&flow, &lodf, &monitors, &net).unwrap();
        (net, table)
    }

    #[test]
    fn triangle_table_values() {
        let (_, table) = triangle_table();
        // outage of 1-2 loads 1-3 to 90/100
        assert_abs_diff_eq!(table.loading[(1, 0)], 0.90, epsilon = 1e-12);
        assert_abs_diff_eq!(table.loading[(2, 0)], 0.0, epsilon = 1e-12);
        // diagonal is zero by definition
        for k in 0..3 {
            assert_eq!(table.loading[(k, k)], 0.0);
        }
    }

    #[test]
    fn zero_flows_give_zero_table() {
        let mut net = fixtures::triangle();
        net.buses[2].load_mw = 0.0;
        net.generators[0].output_mw = 0.0;
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let table = build_table(&flow, &lodf, &MonitorSets::all_in_service(&net), &net).unwrap();
        assert!(table.loading.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn triangle_ranks_are_ninety_percent() {
        let (_, table) = triangle_table();
        let ranks = vulnerability_rank(&table).unwrap();
        for rank in &ranks {
            assert_abs_diff_eq!(*rank, 90.0, epsilon = 1e-9);
        }
        let cranks = criticality_rank(&table);
        for rank in cranks.iter().flatten() {
            assert_abs_diff_eq!(*rank, 90.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn triangle_degrees_at_various_thresholds() {
        let (net, table) = triangle_table();
        let topo = classify_topology(&net);

        let at_rating = LimitSet::default();
        assert_eq!(vulnerability_degree(&table, &at_rating), vec![0, 0, 0]);

        let tight = LimitSet { degree_threshold_fraction: 0.85, ..LimitSet::default() };
        assert_eq!(vulnerability_degree(&table, &tight), vec![1, 2, 1]);
        assert_eq!(
            criticality_degree(&table, &tight),
            vec![Some(1), Some(2), Some(1)]
        );

        let ranks = vulnerability_rank(&table).unwrap();
        assert_eq!(system_vulnerability_degree(&ranks, &table.monitored, &topo, 1.0), 0);
        assert_eq!(system_vulnerability_degree(&ranks, &table.monitored, &topo, 0.85), 3);
        let cranks = criticality_rank(&table);
        assert_eq!(system_criticality_degree(&cranks, &table.outages, &topo, 0.85), 3);
        assert_eq!(system_criticality_degree(&cranks, &table.outages, &topo, 1.0), 0);
    }

    #[test]
    fn degree_threshold_is_per_branch_overridable() {
        let (_, table) = triangle_table();
        let mut limits = LimitSet::default();
        limits.per_branch_thresholds.insert(BranchId(2), 0.5);
        assert_eq!(vulnerability_degree(&table, &limits), vec![0, 2, 0]);
    }

    #[test]
    fn total_exceedance_identity() {
        let (_, table) = triangle_table();
        let limits = LimitSet { degree_threshold_fraction: 0.85, ..LimitSet::default() };
        let v: usize = vulnerability_degree(&table, &limits).iter().sum();
        let c: usize = criticality_degree(&table, &limits).iter().flatten().sum();
        assert_eq!(v, c);
    }

    #[test]
    fn violation_counts_modes() {
        let (_, table) = triangle_table();
        let limits = LimitSet::default();
        assert_eq!(violation_counts(&table, &limits, ViolationCountMode::PerLine), (0, 0));

        // Force one cell over both fractions.
        let mut scaled = table.clone();
        scaled.loading[(1, 0)] = 1.40;
        let (emer, cont) = violation_counts(&scaled, &limits, ViolationCountMode::PerLine);
        assert_eq!((emer, cont), (1, 1));
        scaled.loading[(1, 2)] = 1.25;
        assert_eq!(violation_counts(&scaled, &limits, ViolationCountMode::PerLine), (1, 1));
        assert_eq!(violation_counts(&scaled, &limits, ViolationCountMode::PerCell), (1, 2));
    }

    #[test]
    fn no_valid_columns_yields_zero_report_and_rank_error() {
        let net = fixtures::two_bus();
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let table = build_table(&flow, &lodf, &MonitorSets::all_in_service(&net), &net).unwrap();
        assert!(matches!(vulnerability_rank(&table), Err(GridError::NoContingencies)));
        let topo = classify_topology(&net);
        let report = compute_stress_report(
            &table,
            &topo,
            &LimitSet::default(),
            1.0,
            ViolationCountMode::PerLine,
            "radial",
        );
        assert_eq!(report.v_system, 0);
        assert_eq!(report.valid_outage_count, 0);
        assert_eq!(report.max_v_rank_pct(), 0.0);
        assert_eq!(report.c_rank_pct, vec![None]);
    }

    #[test]
    fn monitor_set_rejects_out_of_service_branch() {
        let net = fixtures::triangle();
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let monitors = MonitorSets::all_in_service(&net);
        let opened = net.with_branch_open(BranchId(3)).unwrap();
        assert!(matches!(
            build_table(&flow, &lodf, &monitors, &opened),
            Err(GridError::MonitorOutOfService(BranchId(3)))
        ));
    }

    #[test]
    fn summary_row_formats_percentages() {
        let (net, table) = triangle_table();
        let topo = classify_topology(&net);
        let report = compute_stress_report(
            &table,
            &topo,
            &LimitSet::default(),
            1.0,
            ViolationCountMode::PerLine,
            "base",
        );
        let row = table_csv_row(&report);
        assert_eq!(row, "base,90.00%,0,0,90.00%,0,0,0,0");
        assert_eq!(row.split(',').count(), 9);
        let csv = to_summary_csv(&[report.clone()]);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(to_summary_csv(&[]).lines().count(), 1);

        // JSON round-trip keeps every value
        let json = serde_json::to_string(&report).unwrap();
        let back: StressReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn global_rank_maxima_agree() {
        let (net, table) = triangle_table();
        let topo = classify_topology(&net);
        let report = compute_stress_report(
            &table,
            &topo,
            &LimitSet::default(),
            1.0,
            ViolationCountMode::PerLine,
            "base",
        );
        assert_abs_diff_eq!(report.max_v_rank_pct(), report.max_c_rank_pct(), epsilon = 1e-12);
        let _ = net;
    }
}
