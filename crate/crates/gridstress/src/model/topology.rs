//! Island and radial-branch classification of the in-service graph.
//!
//! A branch is *radial* exactly when it is a bridge of the in-service graph:
//! its outage splits the island it belongs to. Radial branches get no LODF
//! column and are excluded from the system-degree metrics.

use std::collections::BTreeSet;

use crate::model::{BranchId, Network};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyClassification {
    /// Connected components of the in-service graph, each a sorted list of
    /// bus ids; islands ordered by their smallest bus id. Every bus appears
    /// in exactly one island (an isolated bus forms its own).
    pub islands: Vec<Vec<crate::model::BusId>>,
    /// Bridges of the in-service graph, by branch id.
    pub radial_branches: BTreeSet<BranchId>,
}

impl TopologyClassification {
    pub fn is_radial(&self, id: BranchId) -> bool {
        self.radial_branches.contains(&id)
    }
}

/// Adjacency over in-service branches; multi-edges kept distinct so a pair
/// of parallel circuits is never classified as a bridge.
struct InServiceGraph {
    /// per bus: (neighbor bus index, branch index)
    adj: Vec<Vec<(usize, usize)>>,
}

impl InServiceGraph {
    fn build(net: &Network) -> Self {
        let positions = net.bus_positions();
        let mut adj = vec![Vec::new(); net.buses.len()];
        for (k, br) in net.branches.iter().enumerate() {
            if !br.in_service {
                continue;
            }
            let f = positions[&br.from_bus];
            let t = positions[&br.to_bus];
            adj[f].push((t, k));
            adj[t].push((f, k));
        }
        InServiceGraph { adj }
    }
}

pub fn classify_topology(net: &Network) -> TopologyClassification {
    let graph = InServiceGraph::build(net);
    let n = net.buses.len();

    // Islands by BFS.
    let mut component = vec![usize::MAX; n];
    let mut islands: Vec<Vec<crate::model::BusId>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let idx = islands.len();
        let mut members = vec![start];
        component[start] = idx;
        let mut queue = vec![start];
        while let Some(u) = queue.pop() {
            for &(v, _) in &graph.adj[u] {
                if component[v] == usize::MAX {
                    component[v] = idx;
                    members.push(v);
                    queue.push(v);
                }
            }
        }
        let mut ids: Vec<_> = members.into_iter().map(|i| net.buses[i].id).collect();
        ids.sort();
        islands.push(ids);
    }
    islands.sort_by_key(|island| island[0]);

    TopologyClassification {
        islands,
        radial_branches: bridges(net, &graph),
    }
}

/// Iterative low-link bridge search. The edge used to enter a node is
/// skipped by its index, not by parent bus, so parallel circuits survive.
fn bridges(net: &Network, graph: &InServiceGraph) -> BTreeSet<BranchId> {
    let n = graph.adj.len();
    let mut visit = vec![usize::MAX; n];
    let mut low = vec![usize::MAX; n];
    let mut clock = 0usize;
    let mut out = BTreeSet::new();

    for root in 0..n {
        if visit[root] != usize::MAX {
            continue;
        }
        // stack frame: (bus, entering branch index, next adjacency cursor)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        visit[root] = clock;
        low[root] = clock;
        clock += 1;

        while !stack.is_empty() {
            let frame = stack.len() - 1;
            let (u, entered_by, cursor) = stack[frame];
            if cursor < graph.adj[u].len() {
                stack[frame].2 += 1;
                let (v, edge) = graph.adj[u][cursor];
                if edge == entered_by {
                    continue;
                }
                if visit[v] == usize::MAX {
                    visit[v] = clock;
                    low[v] = clock;
                    clock += 1;
                    stack.push((v, edge, 0));
                } else {
                    low[u] = low[u].min(visit[v]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > visit[parent] {
                        out.insert(net.branches[entered_by].id);
                    }
                }
            }
        }
    }
    out
}
