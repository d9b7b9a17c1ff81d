//! DC power flow: susceptance assembly, base-case solve, and the PTDF/LODF
//! sensitivity matrices.
//!
//! Everything is linear in the injections. The reduced susceptance system
//! (slack row and column removed) is factored once per topology with a dense
//! LU; at the sizes this tool targets (hundreds of buses) a dense
//! factorization comfortably beats the bookkeeping cost of a sparse one.

use nalgebra::{DMatrix, DVector};

use crate::error::{GridError, Result};
use crate::model::{classify_topology, BusId, Network};

mod sensitivity;

pub use sensitivity::{
    compute_lodf, compute_ptdf, post_outage_flows, LodfMatrix, MonitorSets, OutageValidity,
    PtdfMatrix,
};

/// Residual bound for the reduced linear solve, in per-unit.
pub const SOLVE_TOLERANCE_PU: f64 = 1e-9;

/// A solved operating state.
///
/// `flows_mw[k]` is the signed real-power flow on branch position `k`
/// (positive from `from_bus` to `to_bus`), `injections_mw[b]` the net
/// injection at bus position `b`. `angles_rad` is present for states produced
/// by [`solve_dc`]; states reconstructed through LODFs carry no angles.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub flows_mw: Vec<f64>,
    pub injections_mw: Vec<f64>,
    pub angles_rad: Option<Vec<f64>>,
}

/// Bus bookkeeping shared by the solver and the sensitivity builders.
pub(crate) struct BusIndex {
    /// bus position -> reduced-system row, None for the slack bus
    pub reduced: Vec<Option<usize>>,
    pub slack_pos: usize,
    pub n_reduced: usize,
}

impl BusIndex {
    pub fn build(net: &Network) -> Result<BusIndex> {
        let positions = net.bus_positions();
        let slack_pos = *positions
            .get(&net.slack_bus)
            .ok_or(GridError::UnknownSlack(net.slack_bus))?;
        let mut reduced = vec![None; net.buses.len()];
        let mut next = 0;
        for (pos, slot) in reduced.iter_mut().enumerate() {
            if pos != slack_pos {
                *slot = Some(next);
                next += 1;
            }
        }
        Ok(BusIndex { reduced, slack_pos, n_reduced: next })
    }
}

/// Per-unit net injections with the base-case imbalance assigned to the
/// slack bus, so the vector always sums to zero.
pub(crate) fn injections_pu(net: &Network, index: &BusIndex) -> Vec<f64> {
    let positions = net.bus_positions();
    let mut inj = vec![0.0; net.buses.len()];
    for (pos, bus) in net.buses.iter().enumerate() {
        inj[pos] -= bus.load_mw / net.base_mva;
    }
    for gen in &net.generators {
        inj[positions[&gen.bus]] += gen.output_mw / net.base_mva;
    }
    let residual: f64 = inj.iter().sum();
    inj[index.slack_pos] -= residual;
    inj
}

/// Reduced susceptance matrix over the in-service branches.
pub(crate) fn reduced_susceptance(net: &Network, index: &BusIndex) -> DMatrix<f64> {
    let positions = net.bus_positions();
    let n = index.n_reduced;
    let mut b = DMatrix::zeros(n, n);
    for br in net.branches.iter().filter(|br| br.in_service) {
        let susceptance = 1.0 / br.reactance;
        let f = index.reduced[positions[&br.from_bus]];
        let t = index.reduced[positions[&br.to_bus]];
        if let Some(f) = f {
            b[(f, f)] += susceptance;
        }
        if let Some(t) = t {
            b[(t, t)] += susceptance;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b[(f, t)] -= susceptance;
            b[(t, f)] -= susceptance;
        }
    }
    b
}

fn require_connected(net: &Network) -> Result<()> {
    let islands = classify_topology(net).islands.len();
    if islands > 1 {
        return Err(GridError::Disconnected { islands });
    }
    Ok(())
}

/// Solve the DC base case.
///
/// Angles solve the reduced susceptance system with the slack angle pinned
/// to zero; branch flows follow from the angle difference over each
/// in-service branch.
pub fn solve_dc(net: &Network) -> Result<FlowState> {
    net.validate()?;
    require_connected(net)?;
    let index = BusIndex::build(net)?;
    let inj = injections_pu(net, &index);

    let b_red = reduced_susceptance(net, &index);
    let p_red = DVector::from_iterator(
        index.n_reduced,
        (0..net.buses.len()).filter(|&pos| pos != index.slack_pos).map(|pos| inj[pos]),
    );

    let lu = b_red.clone().lu();
    let theta_red = lu
        .solve(&p_red)
        .ok_or_else(|| GridError::SingularSystem("reduced susceptance matrix".into()))?;

    let residual = (&b_red * &theta_red - &p_red).amax();
    if !(residual < SOLVE_TOLERANCE_PU) {
        return Err(GridError::SingularSystem(format!(
            "solve residual {residual:.3e} pu exceeds {SOLVE_TOLERANCE_PU:.0e}"
        )));
    }

    let mut angles = vec![0.0; net.buses.len()];
    for (pos, slot) in index.reduced.iter().enumerate() {
        if let Some(row) = slot {
            angles[pos] = theta_red[*row];
        }
    }

    let positions = net.bus_positions();
    let flows = net
        .branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return 0.0;
            }
            let f = positions[&br.from_bus];
            let t = positions[&br.to_bus];
            (angles[f] - angles[t]) / br.reactance * net.base_mva
        })
        .collect();

    Ok(FlowState {
        flows_mw: flows,
        injections_mw: inj.iter().map(|p| p * net.base_mva).collect(),
        angles_rad: Some(angles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triangle_splits_flow_by_impedance() {
        let net = fixtures::triangle();
        let flow = solve_dc(&net).unwrap();
        // two paths from bus 1 to bus 3: direct (x=0.1) takes 2/3 of 90 MW
        assert_abs_diff_eq!(flow.flows_mw[0], 30.0, epsilon = 1e-9); // 1-2
        assert_abs_diff_eq!(flow.flows_mw[1], 60.0, epsilon = 1e-9); // 1-3
        assert_abs_diff_eq!(flow.flows_mw[2], 30.0, epsilon = 1e-9); // 2-3
    }

    #[test]
    fn zero_injections_give_zero_flows() {
        let mut net = fixtures::triangle();
        net.buses[2].load_mw = 0.0;
        net.generators[0].output_mw = 0.0;
        let flow = solve_dc(&net).unwrap();
        for f in &flow.flows_mw {
            assert_abs_diff_eq!(*f, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn injections_sum_to_zero_and_flows_match_angles() {
        let net = fixtures::ieee118();
        let flow = solve_dc(&net).unwrap();
        let total: f64 = flow.injections_mw.iter().sum();
        assert!(total.abs() / net.base_mva < 1e-9, "imbalance {total} MW");

        let angles = flow.angles_rad.as_ref().unwrap();
        let positions = net.bus_positions();
        for (k, br) in net.branches.iter().enumerate() {
            let expect =
                (angles[positions[&br.from_bus]] - angles[positions[&br.to_bus]]) / br.reactance
                    * net.base_mva;
            assert_abs_diff_eq!(flow.flows_mw[k], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn per_bus_power_balance_holds() {
        let net = fixtures::ieee118();
        let flow = solve_dc(&net).unwrap();
        let positions = net.bus_positions();
        let mut residual = flow.injections_mw.clone();
        for (k, br) in net.branches.iter().enumerate() {
            residual[positions[&br.from_bus]] -= flow.flows_mw[k];
            residual[positions[&br.to_bus]] += flow.flows_mw[k];
        }
        for r in residual {
            assert!(r.abs() / net.base_mva < 1e-9, "bus residual {r} MW");
        }
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let net = fixtures::triangle();
        let opened = net
            .with_branch_open(crate::model::BranchId(1))
            .unwrap()
            .with_branch_open(crate::model::BranchId(2))
            .unwrap();
        assert!(matches!(solve_dc(&opened), Err(GridError::Disconnected { islands: 2 })));
    }
}
