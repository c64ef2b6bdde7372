use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::contacts::ordered;
use crate::host::HostId;

/// Weighted symmetric graph whose edge weights are mutual-contact counts.
///
/// Stored as a sparse symmetric adjacency map. Every vertex has an entry even
/// when it has no incident edge; an edge is present iff its weight is at least
/// one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutualContactsGraph {
    adj: BTreeMap<HostId, BTreeMap<HostId, u64>>,
}

/// Changes that carry one mutual-contacts graph to the next.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub vertex_additions: BTreeSet<HostId>,
    pub vertex_removals: BTreeSet<HostId>,
    /// New weight per canonically ordered pair; zero removes the edge.
    pub weight_updates: BTreeMap<(HostId, HostId), u64>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.vertex_additions.is_empty()
            && self.vertex_removals.is_empty()
            && self.weight_updates.is_empty()
    }

    pub fn set_weight(&mut self, a: HostId, b: HostId, weight: u64) {
        self.weight_updates.insert(ordered(a, b), weight);
    }
}

impl MutualContactsGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from vertices and canonically keyed weights. Zero weights
    /// are dropped.
    pub fn from_parts(
        vertices: impl IntoIterator<Item = HostId>,
        weights: impl IntoIterator<Item = ((HostId, HostId), u64)>,
    ) -> Result<Self> {
        let mut g = MutualContactsGraph::new();
        for v in vertices {
            g.adj.entry(v).or_default();
        }
        for ((a, b), w) in weights {
            g.set_weight(a, b, w)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, v: HostId) {
        self.adj.entry(v).or_default();
    }

    /// Removes `v` together with all incident edges.
    pub fn remove_vertex(&mut self, v: HostId) -> Result<()> {
        let neighbours = self.adj.remove(&v).ok_or(Error::UnknownVertex(v))?;
        for n in neighbours.keys() {
            if let Some(row) = self.adj.get_mut(n) {
                row.remove(&v);
            }
        }
        Ok(())
    }

    /// Sets the weight of edge `a`-`b`; zero removes it.
    pub fn set_weight(&mut self, a: HostId, b: HostId, weight: u64) -> Result<()> {
        if a == b {
            return Err(Error::SamePair(a));
        }
        for v in [a, b] {
            if !self.adj.contains_key(&v) {
                return Err(Error::UnknownVertex(v));
            }
        }
        for (x, y) in [(a, b), (b, a)] {
            let row = self.adj.get_mut(&x).expect("checked above");
            if weight == 0 {
                row.remove(&y);
            } else {
                row.insert(y, weight);
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: HostId) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn vertices(&self) -> impl Iterator<Item = HostId> + '_ {
        self.adj.keys().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn weight(&self, a: HostId, b: HostId) -> u64 {
        self.adj.get(&a).and_then(|r| r.get(&b)).copied().unwrap_or(0)
    }

    pub fn neighbours(&self, v: HostId) -> impl Iterator<Item = (HostId, u64)> + '_ {
        self.adj
            .get(&v)
            .into_iter()
            .flat_map(|r| r.iter().map(|(k, w)| (*k, *w)))
    }

    /// Edges as `(u, v, w)` with `u < v`, in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = (HostId, HostId, u64)> + '_ {
        self.adj.iter().flat_map(|(u, row)| {
            row.range((std::ops::Bound::Excluded(*u), std::ops::Bound::Unbounded))
                .map(move |(v, w)| (*u, *v, *w))
        })
    }

    /// Sum of row `v` of the matrix.
    pub fn row_sum(&self, v: HostId) -> u64 {
        self.adj.get(&v).map_or(0, |r| r.values().sum())
    }

    /// Sum of all edge weights, each edge counted once.
    pub fn total_weight(&self) -> u64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Edges with both endpoints in `members`, keyed canonically.
    pub fn induced_edges(&self, members: &BTreeSet<HostId>) -> BTreeMap<(HostId, HostId), u64> {
        let mut out = BTreeMap::new();
        for &u in members {
            for (v, w) in self.neighbours(u) {
                if u < v && members.contains(&v) {
                    out.insert((u, v), w);
                }
            }
        }
        out
    }

    /// Applies `delta`: removals first (with incident edges), then additions,
    /// then weight updates.
    pub fn apply_delta(&self, delta: &GraphDelta) -> Result<MutualContactsGraph> {
        if let Some(v) = delta.vertex_additions.intersection(&delta.vertex_removals).next() {
            return Err(Error::Config(format!("{v} is both added and removed")));
        }
        let mut g = self.clone();
        for &v in &delta.vertex_removals {
            g.remove_vertex(v)?;
        }
        for &v in &delta.vertex_additions {
            g.add_vertex(v);
        }
        for (&(a, b), &w) in &delta.weight_updates {
            let gone = delta.vertex_removals.contains(&a) || delta.vertex_removals.contains(&b);
            match (gone, w) {
                (true, 0) => {}
                _ => g.set_weight(a, b, w)?,
            }
        }
        Ok(g)
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (u, row) in &self.adj {
            for (v, w) in row {
                if u == v {
                    return Err(format!("self-loop on {u}"));
                }
                if *w == 0 {
                    return Err(format!("zero-weight edge {u}-{v} stored"));
                }
                match self.adj.get(v) {
                    None => return Err(format!("edge {u}-{v} references unknown vertex")),
                    Some(r) if r.get(u) != Some(w) => {
                        return Err(format!("asymmetric weight on {u}-{v}"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`MutualContactsGraph::apply_delta`].
pub fn apply_graph_delta(graph: &MutualContactsGraph, delta: &GraphDelta) -> Result<MutualContactsGraph> {
    graph.apply_delta(delta)
}
