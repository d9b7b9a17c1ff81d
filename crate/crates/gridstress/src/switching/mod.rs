//! Transmission-switching search.
//!
//! Candidates are screened from the LODF matrix instead of brute force: for
//! the worst-stressed branch, opening branch j changes its flow by
//! `LODF(worst, j) * f_j`, so branches whose factor-times-flow points
//! against the overload direction are the quality candidates. Each candidate
//! is then validated with a full pipeline re-run (no shortcuts), in score
//! order, until one meets the acceptance policy or the list runs out; if
//! none is acceptable the best strictly-improving candidate is returned.
//!
//! Preventive mode searches the intact network when the stress policy
//! triggers. Corrective mode first applies a contingency and searches the
//! post-contingency network, with the stricter requirement that an accepted
//! switch clears every emergency-limit exceedance.

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, AnalysisConfig, StressAnalysis};
use crate::dc::{FlowState, LodfMatrix};
use crate::error::{GridError, Result};
use crate::metrics::StressReport;
use crate::model::{classify_topology, BranchId, Network, TopologyClassification};

/// When a switching action is applied relative to the disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchMode {
    Preventive,
    Corrective,
}

/// Which stress signal fired and therefore which metric the search must
/// improve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerMetric {
    EmergencyViolations,
    SystemVulnerability,
    MaxRank,
}

/// Defines "atypical stress" and what counts as a successful switch.
///
/// The trigger is the disjunction of the configured clauses, checked in the
/// order emergency violations, system vulnerability degree, maximum rank;
/// the first firing clause names the metric the search optimizes. A switch
/// is accepted when that metric drops to the clause threshold, it strictly
/// improves, and no new emergency violations appear; otherwise the search
/// falls back to the best strictly-improving candidate it evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressPolicy {
    /// Trigger when the emergency violation count exceeds this.
    pub max_emergency_violations: Option<usize>,
    /// Trigger when the system vulnerability degree exceeds this baseline.
    pub v_system_baseline: Option<usize>,
    /// Trigger when the maximum vulnerability rank exceeds this percentage.
    pub max_rank_threshold_pct: Option<f64>,
}

impl Default for StressPolicy {
    fn default() -> Self {
        StressPolicy {
            max_emergency_violations: Some(0),
            v_system_baseline: None,
            max_rank_threshold_pct: None,
        }
    }
}

impl StressPolicy {
    pub fn validate(&self) -> Result<()> {
        if let Some(pct) = self.max_rank_threshold_pct {
            if !(pct > 0.0) {
                return Err(GridError::Invalid(format!(
                    "rank trigger threshold must be positive, got {pct}"
                )));
            }
        }
        if self.max_emergency_violations.is_none()
            && self.v_system_baseline.is_none()
            && self.max_rank_threshold_pct.is_none()
        {
            return Err(GridError::Invalid("stress policy has no trigger clause".into()));
        }
        Ok(())
    }

    pub fn triggered(&self, report: &StressReport) -> Option<TriggerMetric> {
        if let Some(max) = self.max_emergency_violations {
            if report.emergency_violations > max {
                return Some(TriggerMetric::EmergencyViolations);
            }
        }
        if let Some(baseline) = self.v_system_baseline {
            if report.v_system > baseline {
                return Some(TriggerMetric::SystemVulnerability);
            }
        }
        if let Some(pct) = self.max_rank_threshold_pct {
            if report.max_v_rank_pct() > pct {
                return Some(TriggerMetric::MaxRank);
            }
        }
        None
    }

    pub fn metric_value(&self, metric: TriggerMetric, report: &StressReport) -> f64 {
        match metric {
            TriggerMetric::EmergencyViolations => report.emergency_violations as f64,
            TriggerMetric::SystemVulnerability => report.v_system as f64,
            TriggerMetric::MaxRank => report.max_v_rank_pct(),
        }
    }

    fn clause_threshold(&self, metric: TriggerMetric) -> f64 {
        match metric {
            TriggerMetric::EmergencyViolations => {
                self.max_emergency_violations.unwrap_or(0) as f64
            }
            TriggerMetric::SystemVulnerability => self.v_system_baseline.unwrap_or(0) as f64,
            TriggerMetric::MaxRank => self.max_rank_threshold_pct.unwrap_or(f64::INFINITY),
        }
    }

    /// Acceptance for the firing clause: metric back at or below the
    /// trigger threshold.
    pub fn resolves(&self, metric: TriggerMetric, report: &StressReport) -> bool {
        self.metric_value(metric, report) <= self.clause_threshold(metric)
    }
}

/// An LODF-screened candidate with its predicted effect on the target
/// branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub branch: BranchId,
    /// Predicted drop of the overloaded branch's absolute flow, in MW.
    pub predicted_relief_mw: f64,
}

/// A switching decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingAction {
    pub branch: BranchId,
    pub mode: SwitchMode,
    /// Scenario label (preventive) or contingency description (corrective).
    pub triggering_context: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStatus {
    /// Either the trigger never fired, or an action was found.
    Improved,
    NoCandidate,
    ListDepleted,
}

/// Post-switch metrics recorded for every evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostSwitchSummary {
    pub triggering_metric_value: f64,
    pub max_v_rank_pct: f64,
    pub v_system: usize,
    pub emergency_violations: usize,
    pub contingency_violations: usize,
}

/// Audit-trail entry: one candidate, its screening score and what its full
/// evaluation showed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub branch: BranchId,
    pub score_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PostSwitchSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRecommendation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<SwitchingAction>,
    pub status: SearchStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerMetric>,
    pub pre_report: StressReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_report: Option<StressReport>,
    /// Every candidate that was evaluated, in descending score order.
    pub candidates_evaluated: Vec<CandidateOutcome>,
}

/// Rank switching candidates for one overloaded branch.
///
/// A branch qualifies when its outage column is valid (in service,
/// non-radial, non-degenerate) and opening it is predicted to shrink the
/// overloaded branch's absolute flow. Sorted by predicted relief, ties by
/// ascending branch id, truncated to `budget`.
pub fn rank_candidates(
    lodf: &LodfMatrix,
    overloaded: BranchId,
    flow: &FlowState,
    topology: &TopologyClassification,
    budget: usize,
) -> Result<Vec<Candidate>> {
    if budget == 0 {
        return Err(GridError::EmptyBudget);
    }
    let target = lodf.position(overloaded).ok_or(GridError::UnknownBranch(overloaded))?;
    if flow.flows_mw.len() != lodf.branch_ids.len() {
        return Err(GridError::Invalid("flow state does not match the LODF branch set".into()));
    }
    let base = flow.flows_mw[target].abs();

    let mut candidates: Vec<Candidate> = lodf
        .branch_ids
        .iter()
        .enumerate()
        .filter(|(j, id)| {
            *j != target && lodf.validity[*j].is_valid() && !topology.is_radial(**id)
        })
        .filter_map(|(j, id)| {
            let shifted = flow.flows_mw[target] + lodf.entries[(target, j)] * flow.flows_mw[j];
            let relief = base - shifted.abs();
            (relief > 0.0).then_some(Candidate { branch: *id, predicted_relief_mw: relief })
        })
        .collect();

    candidates.sort_by(|a, b| {
        b.predicted_relief_mw
            .partial_cmp(&a.predicted_relief_mw)
            .expect("relief scores are finite")
            .then(a.branch.cmp(&b.branch))
    });
    candidates.truncate(budget);
    Ok(candidates)
}

/// Open one branch and re-run the whole pipeline on the switched network.
///
/// The dispatch is left untouched. Refuses radial branches: switching must
/// never island the system.
pub fn evaluate_switch(
    net: &Network,
    open_branch: BranchId,
    config: &AnalysisConfig,
) -> Result<StressAnalysis> {
    let branch = net.branch(open_branch).ok_or(GridError::UnknownBranch(open_branch))?;
    if !branch.in_service {
        return Err(GridError::BranchOutOfService(open_branch));
    }
    if classify_topology(net).is_radial(open_branch) {
        return Err(GridError::IslandingOutage(open_branch));
    }
    let switched = net.with_branch_open(open_branch)?;
    let label = format!("{} (open {})", config.label, net.branch_label(open_branch));
    let config = AnalysisConfig { label, ..config.clone() };
    analyze(&switched, &config)
}

/// Preventive search on the intact network (nothing to do unless the policy
/// triggers).
pub fn preventive_search(
    net: &Network,
    policy: &StressPolicy,
    config: &AnalysisConfig,
    budget: usize,
) -> Result<SwitchingRecommendation> {
    let pre = analyze(net, config)?;
    search(net, pre, policy, config, budget, SwitchMode::Preventive, config.label.clone(), false)
}

/// Corrective search: apply the contingency, then look for a switch that
/// relieves the post-contingency stress. Acceptance additionally requires
/// that no emergency-limit exceedance survives.
pub fn corrective_search(
    net: &Network,
    contingency: BranchId,
    policy: &StressPolicy,
    config: &AnalysisConfig,
    budget: usize,
) -> Result<SwitchingRecommendation> {
    let branch = net.branch(contingency).ok_or(GridError::UnknownBranch(contingency))?;
    if !branch.in_service {
        return Err(GridError::BranchOutOfService(contingency));
    }
    if classify_topology(net).is_radial(contingency) {
        return Err(GridError::IslandingOutage(contingency));
    }
    let context = format!("contingency {}", net.branch_label(contingency));
    let degraded = net.with_branch_open(contingency)?;
    let config = AnalysisConfig {
        label: format!("{} / {}", config.label, context),
        ..config.clone()
    };
    let pre = analyze(&degraded, &config)?;
    search(&degraded, pre, policy, &config, budget, SwitchMode::Corrective, context, true)
}

#[allow(clippy::too_many_arguments)]
fn search(
    net: &Network,
    pre: StressAnalysis,
    policy: &StressPolicy,
    config: &AnalysisConfig,
    budget: usize,
    mode: SwitchMode,
    context: String,
    require_no_emergency: bool,
) -> Result<SwitchingRecommendation> {
    policy.validate()?;
    let Some(metric) = policy.triggered(&pre.report) else {
        return Ok(SwitchingRecommendation {
            action: None,
            status: SearchStatus::Improved,
            trigger: None,
            pre_report: pre.report,
            post_report: None,
            candidates_evaluated: Vec::new(),
        });
    };

    let Some(worst) = worst_branch(&pre.report, &pre.topology, metric) else {
        return Ok(depleted(pre.report, metric, Vec::new(), SearchStatus::NoCandidate));
    };
    let candidates = rank_candidates(&pre.lodf, worst, &pre.flow, &pre.topology, budget)?;
    if candidates.is_empty() {
        return Ok(depleted(pre.report, metric, Vec::new(), SearchStatus::NoCandidate));
    }

    let pre_value = policy.metric_value(metric, &pre.report);
    let mut outcomes: Vec<CandidateOutcome> = Vec::with_capacity(candidates.len());
    let mut accepted: Option<StressAnalysis> = None;
    let mut best: Option<(f64, usize, StressAnalysis)> = None;

    for candidate in &candidates {
        let evaluation = evaluate_switch(net, candidate.branch, config);
        match evaluation {
            Err(error) => outcomes.push(CandidateOutcome {
                branch: candidate.branch,
                score_mw: candidate.predicted_relief_mw,
                summary: None,
                error: Some(error.to_string()),
                accepted: false,
            }),
            Ok(post) => {
                let value = policy.metric_value(metric, &post.report);
                let safe =
                    post.report.emergency_violations <= pre.report.emergency_violations;
                let strictly_improves = value < pre_value && safe;
                let meets = strictly_improves
                    && policy.resolves(metric, &post.report)
                    && (!require_no_emergency || post.report.emergency_violations == 0);
                outcomes.push(CandidateOutcome {
                    branch: candidate.branch,
                    score_mw: candidate.predicted_relief_mw,
                    summary: Some(PostSwitchSummary {
                        triggering_metric_value: value,
                        max_v_rank_pct: post.report.max_v_rank_pct(),
                        v_system: post.report.v_system,
                        emergency_violations: post.report.emergency_violations,
                        contingency_violations: post.report.contingency_violations,
                    }),
                    error: None,
                    accepted: meets,
                });
                if meets {
                    accepted = Some(post);
                    break;
                }
                if strictly_improves && best.as_ref().map_or(true, |(b, _, _)| value < *b) {
                    best = Some((value, outcomes.len() - 1, post));
                }
            }
        }
    }

    let chosen = match accepted {
        Some(post) => Some(post),
        None => match best {
            Some((_, index, post)) => {
                outcomes[index].accepted = true;
                Some(post)
            }
            None => None,
        },
    };

    match chosen {
        Some(post) => {
            let branch = outcomes
                .iter()
                .find(|o| o.accepted)
                .map(|o| o.branch)
                .expect("accepted outcome recorded");
            Ok(SwitchingRecommendation {
                action: Some(SwitchingAction { branch, mode, triggering_context: context }),
                status: SearchStatus::Improved,
                trigger: Some(metric),
                pre_report: pre.report,
                post_report: Some(post.report),
                candidates_evaluated: outcomes,
            })
        }
        None => Ok(depleted(pre.report, metric, outcomes, SearchStatus::ListDepleted)),
    }
}

fn depleted(
    pre_report: StressReport,
    metric: TriggerMetric,
    outcomes: Vec<CandidateOutcome>,
    status: SearchStatus,
) -> SwitchingRecommendation {
    SwitchingRecommendation {
        action: None,
        status,
        trigger: Some(metric),
        pre_report,
        post_report: None,
        candidates_evaluated: outcomes,
    }
}

/// The branch the search tries to relieve: highest vulnerability rank among
/// those eligible for the firing metric, ties to the lowest id.
fn worst_branch(
    report: &StressReport,
    topology: &TopologyClassification,
    metric: TriggerMetric,
) -> Option<BranchId> {
    let mut best: Option<(f64, BranchId)> = None;
    for (rank, id) in report.v_rank_pct.iter().zip(&report.monitored) {
        if metric == TriggerMetric::SystemVulnerability && topology.is_radial(*id) {
            continue;
        }
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
