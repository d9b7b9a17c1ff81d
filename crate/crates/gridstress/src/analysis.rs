//! One-call pipeline: topology, base flows, sensitivities, loading table and
//! the stress report. Both the CLI and the switching search go through
//! [`analyze`], so a switched network is evaluated by exactly the same code
//! path as a freshly parsed case.

use crate::dc::{
    compute_lodf, compute_ptdf, solve_dc, FlowState, LodfMatrix, MonitorSets, PtdfMatrix,
};
use crate::error::Result;
use crate::metrics::{
    build_table, compute_stress_report, LimitSet, PostContingencyTable, StressReport,
    ViolationCountMode,
};
use crate::model::{classify_topology, Network, TopologyClassification};

/// Knobs for a single pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub limits: LimitSet,
    /// LODF magnitudes below this are stored as zero; 0 keeps them all.
    pub sparsity_threshold: f64,
    /// Threshold fraction for the two system degrees; defaults to the
    /// limit set's degree threshold.
    pub system_threshold_fraction: Option<f64>,
    /// Monitored/outage selections; defaults to every in-service branch of
    /// the analyzed network.
    pub monitors: Option<MonitorSets>,
    pub violation_mode: ViolationCountMode,
    pub label: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            limits: LimitSet::default(),
            sparsity_threshold: 0.0,
            system_threshold_fraction: None,
            monitors: None,
            violation_mode: ViolationCountMode::PerLine,
            label: "base".to_string(),
        }
    }
}

impl AnalysisConfig {
    pub fn labelled(label: impl Into<String>) -> Self {
        AnalysisConfig { label: label.into(), ..AnalysisConfig::default() }
    }

    pub fn system_threshold(&self) -> f64 {
        self.system_threshold_fraction.unwrap_or(self.limits.degree_threshold_fraction)
    }
}

/// Everything the pipeline produced for one network and one configuration.
#[derive(Debug, Clone)]
pub struct StressAnalysis {
    pub network: Network,
    pub topology: TopologyClassification,
    pub flow: FlowState,
    pub ptdf: PtdfMatrix,
    pub lodf: LodfMatrix,
    pub table: PostContingencyTable,
    pub report: StressReport,
}

/// Run the full pipeline on a network.
pub fn analyze(net: &Network, config: &AnalysisConfig) -> Result<StressAnalysis> {
    config.limits.validate()?;
    let topology = classify_topology(net);
    let flow = solve_dc(net)?;
    let ptdf = compute_ptdf(net)?;
    let lodf = compute_lodf(&ptdf, net, config.sparsity_threshold)?;
    let monitors = match &config.monitors {
        Some(sets) => sets.restricted_to(net),
        None => MonitorSets::all_in_service(net),
    };
    let table = build_table(&flow, &lodf, &monitors, net)?;
    let report = compute_stress_report(
        &table,
        &topology,
        &config.limits,
        config.system_threshold(),
        config.violation_mode,
        &config.label,
    );
    Ok(StressAnalysis {
        network: net.clone(),
        topology,
        flow,
        ptdf,
        lodf,
        table,
        report,
    })
}
