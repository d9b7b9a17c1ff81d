//! PTDF and LODF matrices.
//!
//! The LODF is formed from PTDF differences: with `phi(k, j)` the fraction
//! of a unit transfer between branch j's endpoints that appears on branch k,
//!
//! ```text
//! LODF(k, j) = phi(k, j) / (1 - phi(j, j))
//! ```
//!
//! A radial (bridge) branch has `phi(j, j) = 1`; its column is marked
//! invalid rather than approximated, and so is any column whose denominator
//! vanishes for other reasons. Entries below the sparsity threshold are
//! stored as zero; the matrix is not symmetrical and no code may assume it
//! is.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::dc::{injections_pu, reduced_susceptance, BusIndex, FlowState};
use crate::error::{GridError, Result};
use crate::model::{classify_topology, BranchId, BusId, Network};

/// Denominator magnitude below which an outage column is ruled degenerate.
pub const LODF_DENOMINATOR_TOLERANCE: f64 = 1e-8;

/// Branch-flow sensitivity to a 1 MW injection, withdrawn at the slack bus.
#[derive(Debug, Clone)]
pub struct PtdfMatrix {
    /// branches x buses, in network order; the slack column is zero.
    pub entries: DMatrix<f64>,
    pub slack_bus: BusId,
    pub bus_ids: Vec<BusId>,
    pub branch_ids: Vec<BranchId>,
}

/// Why an outage column is or is not usable.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum OutageValidity {
    Valid,
    /// Bridge of the in-service graph; the outage islands the network.
    Radial,
    OutOfService,
    /// Non-radial branch whose transfer denominator vanished numerically.
    Degenerate { denominator: f64 },
}

impl OutageValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, OutageValidity::Valid)
    }
}

/// Line outage distribution factors over all branch pairs.
#[derive(Debug, Clone)]
pub struct LodfMatrix {
    /// monitored branch (row) x outaged branch (column). Diagonal entries of
    /// valid columns hold -1 by convention: the outaged branch's own
    /// post-outage flow is zero. Invalid columns are zero-filled and must be
    /// gated on `validity`.
    pub entries: DMatrix<f64>,
    pub validity: Vec<OutageValidity>,
    pub branch_ids: Vec<BranchId>,
    pub sparsity_threshold: f64,
}

impl LodfMatrix {
    pub fn position(&self, id: BranchId) -> Option<usize> {
        self.branch_ids.iter().position(|&b| b == id)
    }

    pub fn is_valid_outage(&self, id: BranchId) -> bool {
        self.position(id).map_or(false, |j| self.validity[j].is_valid())
    }

    /// CSV dump (row = monitored branch, column = outaged branch); invalid
    /// columns are labelled in the header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("monitored");
        for (j, id) in self.branch_ids.iter().enumerate() {
            match &self.validity[j] {
                OutageValidity::Valid => write!(out, ",outage_{id}").unwrap(),
                other => write!(out, ",outage_{id}_invalid_{other:?}").unwrap(),
            }
        }
        out.push('\n');
        for (i, id) in self.branch_ids.iter().enumerate() {
            write!(out, "{id}").unwrap();
            for j in 0..self.branch_ids.len() {
                write!(out, ",{}", self.entries[(i, j)]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

impl PtdfMatrix {
    /// CSV dump (row = branch, column = bus).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("branch");
        for id in &self.bus_ids {
            write!(out, ",bus_{id}").unwrap();
        }
        out.push('\n');
        for (k, id) in self.branch_ids.iter().enumerate() {
            write!(out, "{id}").unwrap();
            for b in 0..self.bus_ids.len() {
                write!(out, ",{}", self.entries[(k, b)]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Monitored and outage branch selections, in evaluation order.
///
/// Defaults to every in-service branch on both axes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MonitorSets {
    pub monitored: Vec<BranchId>,
    pub outages: Vec<BranchId>,
}

impl MonitorSets {
    pub fn all_in_service(net: &Network) -> MonitorSets {
        let ids: Vec<BranchId> =
            net.branches.iter().filter(|b| b.in_service).map(|b| b.id).collect();
        MonitorSets { monitored: ids.clone(), outages: ids }
    }

    /// Drop branches that are no longer in service in `net`.
    pub fn restricted_to(&self, net: &Network) -> MonitorSets {
        let keep = |ids: &[BranchId]| {
            ids.iter()
                .copied()
                .filter(|&id| net.branch(id).map_or(false, |b| b.in_service))
                .collect()
        };
        MonitorSets { monitored: keep(&self.monitored), outages: keep(&self.outages) }
    }
}

/// Build the PTDF matrix by inverting the reduced susceptance system once.
pub fn compute_ptdf(net: &Network) -> Result<PtdfMatrix> {
    net.validate()?;
    let islands = classify_topology(net).islands.len();
    if islands > 1 {
        return Err(GridError::Disconnected { islands });
    }
    let index = BusIndex::build(net)?;
    let n = net.buses.len();
    let m = net.branches.len();

    let b_red = reduced_susceptance(net, &index);
    let inverse = b_red
        .lu()
        .try_inverse()
        .ok_or_else(|| GridError::SingularSystem("reduced susceptance matrix".into()))?;

    // x(i, j) extended with the zero slack row/column
    let x = |pos_i: usize, pos_j: usize| -> f64 {
        match (index.reduced[pos_i], index.reduced[pos_j]) {
            (Some(i), Some(j)) => inverse[(i, j)],
            _ => 0.0,
        }
    };

    let positions = net.bus_positions();
    let mut entries = DMatrix::zeros(m, n);
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let susceptance = 1.0 / br.reactance;
        let f = positions[&br.from_bus];
        let t = positions[&br.to_bus];
        for b in 0..n {
            entries[(k, b)] = susceptance * (x(f, b) - x(t, b));
        }
    }

    Ok(PtdfMatrix {
        entries,
        slack_bus: net.slack_bus,
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        branch_ids: net.branches.iter().map(|b| b.id).collect(),
    })
}

/// Derive the LODF matrix from PTDFs.
///
/// `sparsity_threshold` zeroes entries with smaller magnitude; 0 keeps the
/// matrix exact.
pub fn compute_lodf(ptdf: &PtdfMatrix, net: &Network, sparsity_threshold: f64) -> Result<LodfMatrix> {
    if sparsity_threshold < 0.0 || !sparsity_threshold.is_finite() {
        return Err(GridError::Invalid(format!(
            "sparsity threshold must be finite and non-negative, got {sparsity_threshold}"
        )));
    }
    let m = net.branches.len();
    if ptdf.branch_ids.len() != m {
        return Err(GridError::Invalid(
            "PTDF matrix does not match the network's branch set".into(),
        ));
    }
    let topology = classify_topology(net);
    let positions = net.bus_positions();

    let mut entries = DMatrix::zeros(m, m);
    let mut validity = Vec::with_capacity(m);

    for (j, outaged) in net.branches.iter().enumerate() {
        if !outaged.in_service {
            validity.push(OutageValidity::OutOfService);
            continue;
        }
        if topology.is_radial(outaged.id) {
            validity.push(OutageValidity::Radial);
            continue;
        }
        let f = positions[&outaged.from_bus];
        let t = positions[&outaged.to_bus];
        let phi_jj = ptdf.entries[(j, f)] - ptdf.entries[(j, t)];
        let denominator = 1.0 - phi_jj;
        if denominator.abs() < LODF_DENOMINATOR_TOLERANCE {
            validity.push(OutageValidity::Degenerate { denominator });
            continue;
        }
        for i in 0..m {
            if i == j {
                continue;
            }
            let phi_ij = ptdf.entries[(i, f)] - ptdf.entries[(i, t)];
            let factor = phi_ij / denominator;
            entries[(i, j)] = if factor.abs() < sparsity_threshold { 0.0 } else { factor };
        }
        entries[(j, j)] = -1.0;
        validity.push(OutageValidity::Valid);
    }

    Ok(LodfMatrix {
        entries,
        validity,
        branch_ids: ptdf.branch_ids.clone(),
        sparsity_threshold,
    })
}

/// Apply a single-branch outage to a flow state through the LODF column.
///
/// Each monitored flow picks up `LODF(i, j) * f_j`; the outaged branch's own
/// flow goes to zero (its diagonal factor is -1). Injections are unchanged;
/// angles are dropped because the reconstruction does not track them.
pub fn post_outage_flows(
    flow: &FlowState,
    lodf: &LodfMatrix,
    outage: BranchId,
) -> Result<FlowState> {
    let j = lodf.position(outage).ok_or(GridError::UnknownBranch(outage))?;
    match &lodf.validity[j] {
        OutageValidity::Valid => {}
        OutageValidity::Radial => return Err(GridError::IslandingOutage(outage)),
        OutageValidity::OutOfService => return Err(GridError::BranchOutOfService(outage)),
        OutageValidity::Degenerate { denominator } => {
            return Err(GridError::SingularSystem(format!(
                "outage column for branch {outage} is degenerate (denominator {denominator:.3e})"
            )))
        }
    }
    let m = lodf.branch_ids.len();
    if flow.flows_mw.len() != m {
        return Err(GridError::Invalid("flow state does not match the LODF branch set".into()));
    }
    let f_j = flow.flows_mw[j];
    let flows_mw = (0..m).map(|i| flow.flows_mw[i] + lodf.entries[(i, j)] * f_j).collect();
    Ok(FlowState { flows_mw, injections_mw: flow.injections_mw.clone(), angles_rad: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dc::solve_dc;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triangle_ptdf_matches_impedance_divider() {
        let net = fixtures::triangle();
        let ptdf = compute_ptdf(&net).unwrap();
        // injection at bus 1 (col 0), slack bus 2: 2/3 on 1-2, 1/3 on 1-3
        assert_abs_diff_eq!(ptdf.entries[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ptdf.entries[(1, 0)], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ptdf.entries[(2, 0)], -1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn slack_column_is_zero() {
        let net = fixtures::ieee118();
        let ptdf = compute_ptdf(&net).unwrap();
        let slack_col = ptdf.bus_ids.iter().position(|&b| b == net.slack_bus).unwrap();
        for k in 0..ptdf.branch_ids.len() {
            assert_eq!(ptdf.entries[(k, slack_col)], 0.0);
        }
    }

    #[test]
    fn ptdf_times_injections_reproduces_flows() {
        let net = fixtures::ieee118();
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        for (k, &f) in flow.flows_mw.iter().enumerate() {
            let mut acc = 0.0;
            for b in 0..net.buses.len() {
                acc += ptdf.entries[(k, b)] * flow.injections_mw[b];
            }
            assert_abs_diff_eq!(acc, f, epsilon = 1e-6);
        }
    }

    #[test]
    fn triangle_lodf_is_plus_minus_one() {
        let net = fixtures::triangle();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        // outage of 1-2 (col 0): everything reroutes over 1-3 and 2-3
        assert_abs_diff_eq!(lodf.entries[(1, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lodf.entries[(2, 0)], -1.0, epsilon = 1e-12);
        assert_eq!(lodf.entries[(0, 0)], -1.0);
        assert!(lodf.validity.iter().all(|v| v.is_valid()));
    }

    #[test]
    fn bridge_outage_column_is_invalid() {
        let net = fixtures::two_bus();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        assert_eq!(lodf.validity[0], OutageValidity::Radial);
        assert!(!lodf.is_valid_outage(crate::model::BranchId(1)));
        assert!(matches!(
            post_outage_flows(&solve_dc(&net).unwrap(), &lodf, crate::model::BranchId(1)),
            Err(GridError::IslandingOutage(_))
        ));
    }

    #[test]
    fn lodf_entries_stay_within_unit_bounds() {
        let net = fixtures::ieee118();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        for (j, v) in lodf.validity.iter().enumerate() {
            if !v.is_valid() {
                continue;
            }
            for i in 0..lodf.branch_ids.len() {
                if i == j {
                    continue;
                }
                let value = lodf.entries[(i, j)];
                assert!(
                    (-1.0 - 1e-9..=1.0 + 1e-9).contains(&value),
                    "LODF({i},{j}) = {value}"
                );
            }
        }
    }

    #[test]
    fn post_outage_reproduces_triangle_by_hand() {
        let net = fixtures::triangle();
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let after = post_outage_flows(&flow, &lodf, crate::model::BranchId(1)).unwrap();
        assert_abs_diff_eq!(after.flows_mw[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(after.flows_mw[1], 90.0, epsilon = 1e-9); // 1-3 takes everything
        assert_abs_diff_eq!(after.flows_mw[2], 0.0, epsilon = 1e-9); // 30 + (-1)(30)
        assert!(after.angles_rad.is_none());
        assert_eq!(after.injections_mw, flow.injections_mw);
    }

    #[test]
    fn eq1_matches_full_resolve_on_ieee118() {
        let net = fixtures::ieee118();
        let flow = solve_dc(&net).unwrap();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        for (j, br) in net.branches.iter().enumerate() {
            if !lodf.validity[j].is_valid() {
                continue;
            }
            let predicted = post_outage_flows(&flow, &lodf, br.id).unwrap();
            let resolved = solve_dc(&net.with_branch_open(br.id).unwrap()).unwrap();
            for k in 0..net.branches.len() {
                let err = (predicted.flows_mw[k] - resolved.flows_mw[k]).abs() / net.base_mva;
                assert!(
                    err < 1e-6,
                    "outage {}: branch {} differs by {err:.2e} pu",
                    br.id,
                    net.branches[k].id
                );
            }
        }
    }

    #[test]
    fn sparsification_drops_small_entries_only() {
        let net = fixtures::ieee118();
        let ptdf = compute_ptdf(&net).unwrap();
        let exact = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let threshold = 0.02;
        let sparse = compute_lodf(&ptdf, &net, threshold).unwrap();
        let m = net.branches.len();
        let mut dropped = 0usize;
        for j in 0..m {
            if !exact.validity[j].is_valid() {
                continue;
            }
            for i in 0..m {
                let (e, s) = (exact.entries[(i, j)], sparse.entries[(i, j)]);
                if s == 0.0 && e != 0.0 {
                    assert!(e.abs() < threshold);
                    dropped += 1;
                } else {
                    assert_eq!(e, s);
                }
            }
        }
        assert!(dropped > 0, "threshold {threshold} should drop something");
    }

    #[test]
    fn csv_dumps_have_expected_shape() {
        let net = fixtures::triangle();
        let ptdf = compute_ptdf(&net).unwrap();
        let lodf = compute_lodf(&ptdf, &net, 0.0).unwrap();
        let ptdf_csv = ptdf.to_csv();
        assert_eq!(ptdf_csv.lines().count(), 4);
        assert!(ptdf_csv.starts_with("branch,bus_1,bus_2,bus_3"));
        let lodf_csv = lodf.to_csv();
        assert_eq!(lodf_csv.lines().count(), 4);
        assert!(lodf_csv.starts_with("monitored,outage_1,outage_2,outage_3"));
    }
}
