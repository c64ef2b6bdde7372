//! Weighted modularity and deterministic Louvain community detection.
//!
//! The implementation follows the usual two-phase scheme: greedy local moves
//! until no vertex can improve modularity, then aggregation of each community
//! into a single node, repeated until a level produces no improvement.
//!
//! Every decision is made in exact integer arithmetic. For a node `i` with
//! weighted degree `k_i`, the scaled gain of joining community `C` is
//!
//! ```text
//! gain(C) = 2m * w(i, C) - tot(C) * k_i
//! ```
//!
//! where `w(i, C)` is the weight between `i` and `C` and `tot(C)` excludes `i`.
//! This is `2m²` times the textbook `ΔQ`, so comparisons are exact and every
//! replica computing a partition of the same graph gets the same bytes.
//!
//! Nodes are visited in canonical host order and ties go to the smallest
//! community id. A previous partition can be supplied as a seed; seeded
//! vertices start in their old community and new vertices start alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MutualContactsGraph;
use crate::host::HostId;

pub type CommunityId = u32;

/// Assignment of vertices to communities.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: BTreeMap<HostId, CommunityId>,
}

impl Partition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_assignment(assignment: BTreeMap<HostId, CommunityId>) -> Self {
        Partition { assignment }
    }

    /// Every vertex in its own community, ids in canonical order.
    pub fn singletons(vertices: impl IntoIterator<Item = HostId>) -> Self {
        let mut sorted: Vec<HostId> = vertices.into_iter().collect();
        sorted.sort();
        sorted.dedup();
        Partition {
            assignment: sorted.into_iter().zip(0..).collect(),
        }
    }

    /// Builds a partition from groups of members; group `k` gets id `k`.
    pub fn from_groups<I, G>(groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = HostId>,
    {
        let mut assignment = BTreeMap::new();
        for (id, group) in groups.into_iter().enumerate() {
            for h in group {
                assignment.insert(h, id as CommunityId);
            }
        }
        Partition { assignment }
    }

    pub fn get(&self, h: HostId) -> Option<CommunityId> {
        self.assignment.get(&h).copied()
    }

    pub fn insert(&mut self, h: HostId, c: CommunityId) {
        self.assignment.insert(h, c);
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (HostId, CommunityId)> + '_ {
        self.assignment.iter().map(|(h, c)| (*h, *c))
    }

    /// Members of every community, keyed by id.
    pub fn communities(&self) -> BTreeMap<CommunityId, BTreeSet<HostId>> {
        let mut out: BTreeMap<CommunityId, BTreeSet<HostId>> = BTreeMap::new();
        for (h, c) in self.iter() {
            out.entry(c).or_default().insert(h);
        }
        out
    }

    pub fn community_count(&self) -> usize {
        self.assignment.values().collect::<BTreeSet<_>>().len()
    }

    /// Relabels communities to `0..k` in order of their smallest member.
    pub fn normalized(&self) -> Partition {
        let mut relabel: BTreeMap<CommunityId, CommunityId> = BTreeMap::new();
        let mut assignment = BTreeMap::new();
        for (h, c) in self.iter() {
            let next = relabel.len() as CommunityId;
            let id = *relabel.entry(c).or_insert(next);
            assignment.insert(h, id);
        }
        Partition { assignment }
    }

    /// Restriction to `vertices`; vertices without an assignment are left out.
    pub fn restricted_to(&self, vertices: impl IntoIterator<Item = HostId>) -> Partition {
        Partition {
            assignment: vertices
                .into_iter()
                .filter_map(|v| self.get(v).map(|c| (v, c)))
                .collect(),
        }
    }
}

/// Weighted graph whose nodes are communities of a finer graph.
///
/// Node `k` stands for community `nodes[k]`. `self_loops[k]` holds the summed
/// weight of edges inside that community, each edge counted once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondensedGraph {
    pub nodes: Vec<CommunityId>,
    pub adjacency: Vec<BTreeMap<usize, u64>>,
    pub self_loops: Vec<u64>,
}

impl CondensedGraph {
    /// Level-zero view of a mutual-contacts graph; node order is canonical
    /// host order.
    fn from_graph(graph: &MutualContactsGraph, index: &BTreeMap<HostId, usize>) -> Self {
        let n = index.len();
        let mut adjacency = vec![BTreeMap::new(); n];
        for (u, v, w) in graph.edges() {
            let (a, b) = (index[&u], index[&v]);
            adjacency[a].insert(b, w);
            adjacency[b].insert(a, w);
        }
        CondensedGraph {
            nodes: (0..n as CommunityId).collect(),
            adjacency,
            self_loops: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of all edge weights including self-loops, each counted once.
    pub fn total_weight(&self) -> u64 {
        let between: u64 = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.range(u + 1..).map(|(_, w)| *w))
            .sum();
        between + self.self_loops.iter().sum::<u64>()
    }

    fn degrees(&self) -> Vec<u64> {
        self.adjacency
            .iter()
            .zip(&self.self_loops)
            .map(|(row, sl)| row.values().sum::<u64>() + 2 * sl)
            .collect()
    }

    /// Collapses each community of `comm` (indexed by node) into one node.
    fn aggregate(&self, comm: &[CommunityId]) -> CondensedGraph {
        let ids: BTreeSet<CommunityId> = comm.iter().copied().collect();
        let nodes: Vec<CommunityId> = ids.into_iter().collect();
        let pos: BTreeMap<CommunityId, usize> =
            nodes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut adjacency = vec![BTreeMap::new(); nodes.len()];
        let mut self_loops = vec![0u64; nodes.len()];
        for (u, row) in self.adjacency.iter().enumerate() {
            let cu = pos[&comm[u]];
            self_loops[cu] += self.self_loops[u];
            for (&v, &w) in row.range(u + 1..) {
                let cv = pos[&comm[v]];
                if cu == cv {
                    self_loops[cu] += w;
                } else {
                    *adjacency[cu].entry(cv).or_insert(0) += w;
                    *adjacency[cv].entry(cu).or_insert(0) += w;
                }
            }
        }
        CondensedGraph {
            nodes,
            adjacency,
            self_loops,
        }
    }

    /// Exact modularity numerator and denominator for a node-level partition:
    /// `Q = num / den`.
    fn modularity_ratio(&self, comm: &[CommunityId]) -> Option<(i128, i128)> {
        let m = self.total_weight() as i128;
        if m == 0 {
            return None;
        }
        let degrees = self.degrees();
        let mut inside: BTreeMap<CommunityId, i128> = BTreeMap::new();
        let mut total: BTreeMap<CommunityId, i128> = BTreeMap::new();
        for (u, row) in self.adjacency.iter().enumerate() {
            *inside.entry(comm[u]).or_insert(0) += 2 * self.self_loops[u] as i128;
            *total.entry(comm[u]).or_insert(0) += degrees[u] as i128;
            for (&v, &w) in row {
                if comm[u] == comm[v] {
                    *inside.entry(comm[u]).or_insert(0) += w as i128;
                }
            }
        }
        let two_m = 2 * m;
        let num: i128 = total
            .iter()
            .map(|(c, tot)| inside.get(c).copied().unwrap_or(0) * two_m - tot * tot)
            .sum();
        Some((num, two_m * two_m))
    }

    /// Greedy local moves until a full sweep moves nothing. Returns whether
    /// any node moved.
    fn local_moves(&self, comm: &mut [CommunityId]) -> bool {
        let n = self.len();
        let degrees = self.degrees();
        let two_m: i128 = degrees.iter().map(|d| *d as i128).sum();
        if two_m == 0 {
            return false;
        }
        let mut tot: BTreeMap<CommunityId, i128> = BTreeMap::new();
        for u in 0..n {
            *tot.entry(comm[u]).or_insert(0) += degrees[u] as i128;
        }

        let mut any_move = false;
        loop {
            let mut moved = false;
            for u in 0..n {
                let k_u = degrees[u] as i128;
                if k_u == 0 {
                    continue;
                }
                let own = comm[u];
                *tot.get_mut(&own).unwrap() -= k_u;

                let mut links: BTreeMap<CommunityId, i128> = BTreeMap::new();
                links.insert(own, 0);
                for (&v, &w) in &self.adjacency[u] {
                    *links.entry(comm[v]).or_insert(0) += w as i128;
                }
                let gain = |c: CommunityId, w: i128| {
                    two_m * w - tot.get(&c).copied().unwrap_or(0) * k_u
                };
                let stay = gain(own, links[&own]);
                // BTreeMap iteration is ascending, so strict `>` keeps the
                // smallest id among equal gains.
                let mut best = (own, stay);
                for (&c, &w) in &links {
                    let g = gain(c, w);
                    if g > best.1 || (g == best.1 && c < best.0 && g > stay) {
                        best = (c, g);
                    }
                }
                let target = if best.1 > stay { best.0 } else { own };
                *tot.entry(target).or_insert(0) += k_u;
                if target != own {
                    comm[u] = target;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            any_move = true;
        }
        any_move
    }
}

fn vertex_index(graph: &MutualContactsGraph) -> (Vec<HostId>, BTreeMap<HostId, usize>) {
    let order: Vec<HostId> = graph.vertices().collect();
    let index = order.iter().enumerate().map(|(i, h)| (*h, i)).collect();
    (order, index)
}

fn assignment_vector(order: &[HostId], p: &Partition) -> Result<Vec<CommunityId>> {
    order
        .iter()
        .map(|h| p.get(*h).ok_or(Error::UnknownVertex(*h)))
        .collect()
}

fn partition_from(order: &[HostId], comm: &[CommunityId]) -> Partition {
    Partition {
        assignment: order.iter().copied().zip(comm.iter().copied()).collect(),
    }
}

/// Weighted modularity `Q = (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j)`.
pub fn modularity(graph: &MutualContactsGraph, p: &Partition) -> Result<f64> {
    let (order, index) = vertex_index(graph);
    let comm = assignment_vector(&order, p)?;
    let level = CondensedGraph::from_graph(graph, &index);
    let (num, den) = level.modularity_ratio(&comm).ok_or(Error::NoEdges)?;
    Ok(num as f64 / den as f64)
}

/// Repeated greedy sweeps in canonical vertex order until no vertex moves.
pub fn local_move_pass(graph: &MutualContactsGraph, p: &Partition) -> Result<(Partition, bool)> {
    let (order, index) = vertex_index(graph);
    let mut comm = assignment_vector(&order, p)?;
    let level = CondensedGraph::from_graph(graph, &index);
    let improved = level.local_moves(&mut comm);
    Ok((partition_from(&order, &comm), improved))
}

/// Collapses each community of `p` into a single node.
pub fn aggregate(graph: &MutualContactsGraph, p: &Partition) -> Result<CondensedGraph> {
    let (order, index) = vertex_index(graph);
    let comm = assignment_vector(&order, p)?;
    Ok(CondensedGraph::from_graph(graph, &index).aggregate(&comm))
}

/// Result of a Louvain run together with vertex-level modularity after the
/// starting partition and after every local-move pass.
#[derive(Clone, Debug)]
pub struct LouvainRun {
    pub partition: Partition,
    pub modularity_trace: Vec<f64>,
    pub levels: usize,
}

/// Runs Louvain, optionally seeded with a previous partition.
pub fn louvain(graph: &MutualContactsGraph, seed: Option<&Partition>) -> Partition {
    louvain_traced(graph, seed).partition
}

/// Starting assignment: seeded vertices keep their (normalized) community,
/// vertices absent from the seed become singletons.
fn starting_assignment(order: &[HostId], seed: Option<&Partition>) -> Vec<CommunityId> {
    let Some(seed) = seed else {
        return (0..order.len() as CommunityId).collect();
    };
    let seeded = seed.restricted_to(order.iter().copied()).normalized();
    let mut next = seeded.community_count() as CommunityId;
    order
        .iter()
        .map(|h| {
            seeded.get(*h).unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

pub fn louvain_traced(graph: &MutualContactsGraph, seed: Option<&Partition>) -> LouvainRun {
    let (order, index) = vertex_index(graph);
    let start = starting_assignment(&order, seed);
    if graph.edge_count() == 0 {
        return LouvainRun {
            partition: Partition::singletons(order),
            modularity_trace: Vec::new(),
            levels: 0,
        };
    }

    let base = CondensedGraph::from_graph(graph, &index);
    let flatten = |membership: &[usize], comm: &[CommunityId]| -> Vec<CommunityId> {
        membership.iter().map(|&node| comm[node]).collect()
    };
    let vertex_q = |assignment: &[CommunityId]| {
        let (num, den) = base.modularity_ratio(assignment).expect("graph has edges");
        num as f64 / den as f64
    };

    // membership[v]: node of the current level that contains vertex v.
    let mut membership: Vec<usize> = (0..order.len()).collect();
    let mut level = base.clone();
    let mut comm = start;
    let mut trace = vec![vertex_q(&comm)];
    let mut levels = 0;

    loop {
        let improved = level.local_moves(&mut comm);
        trace.push(vertex_q(&flatten(&membership, &comm)));
        levels += 1;
        let condensed = level.aggregate(&comm);
        // Every community is a single node: the next level would start from a
        // fixpoint of this one.
        if condensed.len() == level.len() {
            break;
        }
        debug_assert!(improved || levels == 1, "only a seeded first level merges without moves");
        let pos: BTreeMap<CommunityId, usize> = condensed
            .nodes
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i))
            .collect();
        for node in membership.iter_mut() {
            *node = pos[&comm[*node]];
        }
        comm = (0..condensed.len() as CommunityId).collect();
        level = condensed;
    }

    let final_assignment = flatten(&membership, &comm);
    LouvainRun {
        partition: partition_from(&order, &final_assignment).normalized(),
        modularity_trace: trace,
        levels,
    }
}
