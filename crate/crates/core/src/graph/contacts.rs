use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphDelta, MutualContactsGraph};
use crate::host::HostId;

/// Symmetric contact relation between hosts with the round in which each
/// contact was last observed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactMap {
    entries: BTreeMap<HostId, BTreeMap<HostId, u64>>,
}

/// Contact edges added or dropped by an in-place update, used to derive the
/// matching [`GraphDelta`] without rebuilding the whole matrix.
#[derive(Clone, Debug, Default)]
pub struct ContactChanges {
    pub added: BTreeSet<(HostId, HostId)>,
    pub removed: BTreeSet<(HostId, HostId)>,
    pub hosts_added: BTreeSet<HostId>,
    pub hosts_removed: BTreeSet<HostId>,
}

impl ContactChanges {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    fn merge(&mut self, other: ContactChanges) {
        for e in other.removed {
            if !self.added.remove(&e) {
                self.removed.insert(e);
            }
        }
        for e in other.added {
            if !self.removed.remove(&e) {
                self.added.insert(e);
            }
        }
        for h in other.hosts_removed {
            if !self.hosts_added.remove(&h) {
                self.hosts_removed.insert(h);
            }
        }
        for h in other.hosts_added {
            if !self.hosts_removed.remove(&h) {
                self.hosts_added.insert(h);
            }
        }
    }
}

pub(crate) fn ordered(a: HostId, b: HostId) -> (HostId, HostId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ContactMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hosts(&self) -> impl Iterator<Item = HostId> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains_host(&self, h: HostId) -> bool {
        self.entries.contains_key(&h)
    }

    /// Contacts of `h` with their last-seen round, in canonical order.
    pub fn contacts(&self, h: HostId) -> impl Iterator<Item = (HostId, u64)> + '_ {
        self.entries
            .get(&h)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (*k, *v)))
    }

    pub fn contact_set(&self, h: HostId) -> BTreeSet<HostId> {
        self.contacts(h).map(|(c, _)| c).collect()
    }

    pub fn degree(&self, h: HostId) -> usize {
        self.entries.get(&h).map_or(0, BTreeMap::len)
    }

    pub fn last_seen(&self, a: HostId, b: HostId) -> Option<u64> {
        self.entries.get(&a)?.get(&b).copied()
    }

    /// Records every flow as a two-way contact last seen in `round`.
    pub fn record_contacts(&self, flows: &[(HostId, HostId)], round: u64) -> Result<ContactMap> {
        let mut next = self.clone();
        next.record_in_place(flows, round)?;
        Ok(next)
    }

    /// In-place variant of [`ContactMap::record_contacts`]. The map is left
    /// untouched if any flow is a self-flow.
    pub fn record_in_place(
        &mut self,
        flows: &[(HostId, HostId)],
        round: u64,
    ) -> Result<ContactChanges> {
        if let Some((src, _)) = flows.iter().find(|(s, d)| s == d) {
            return Err(Error::SelfFlow(*src));
        }
        let mut changes = ContactChanges::default();
        for &(src, dst) in flows {
            for (a, b) in [(src, dst), (dst, src)] {
                let entry = self.entries.entry(a).or_insert_with(|| {
                    changes.hosts_added.insert(a);
                    BTreeMap::new()
                });
                if entry.insert(b, round).is_none() {
                    changes.added.insert(ordered(a, b));
                }
            }
        }
        Ok(changes)
    }

    /// Drops contacts last seen before `round - window` and reports hosts
    /// left without any contact as vertex removals.
    pub fn expire_contacts(&self, round: u64, window: u64) -> (ContactMap, GraphDelta) {
        let mut next = self.clone();
        let changes = next.expire_in_place(round, window);
        let delta = GraphDelta {
            vertex_removals: changes.hosts_removed,
            ..GraphDelta::default()
        };
        (next, delta)
    }

    pub fn expire_in_place(&mut self, round: u64, window: u64) -> ContactChanges {
        assert!(window >= 1, "contact window must be at least one round");
        let mut changes = ContactChanges::default();
        let Some(cutoff) = round.checked_sub(window) else {
            return changes;
        };
        for (host, contacts) in self.entries.iter_mut() {
            contacts.retain(|other, seen| {
                let keep = *seen >= cutoff;
                if !keep {
                    changes.removed.insert(ordered(*host, *other));
                }
                keep
            });
        }
        self.entries.retain(|host, contacts| {
            let keep = !contacts.is_empty();
            if !keep {
                changes.hosts_removed.insert(*host);
            }
            keep
        });
        changes
    }

    /// Number of hosts contacted by both `i` and `j`, not counting `i` and `j`
    /// themselves.
    pub fn mutual_contacts(&self, i: HostId, j: HostId) -> Result<u64> {
        if i == j {
            return Err(Error::SamePair(i));
        }
        Ok(self.mutual_unchecked(i, j))
    }

    fn mutual_unchecked(&self, i: HostId, j: HostId) -> u64 {
        let (Some(a), Some(b)) = (self.entries.get(&i), self.entries.get(&j)) else {
            return 0;
        };
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        small
            .keys()
            .filter(|h| **h != i && **h != j && large.contains_key(h))
            .count() as u64
    }

    /// Builds the full mutual-contacts graph.
    ///
    /// Each host `h` contributes one unit of weight to every pair of its
    /// contacts, so the matrix is accumulated from contact pairs rather than
    /// by intersecting every pair of sets.
    pub fn build_mcm(&self) -> MutualContactsGraph {
        let mut weights: BTreeMap<(HostId, HostId), u64> = BTreeMap::new();
        for contacts in self.entries.values() {
            let ids: Vec<HostId> = contacts.keys().copied().collect();
            for (k, &a) in ids.iter().enumerate() {
                for &b in &ids[k + 1..] {
                    *weights.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        MutualContactsGraph::from_parts(self.entries.keys().copied(), weights)
            .expect("weights only reference known hosts")
    }

    /// Graph delta that carries `graph` (built from the map before `changes`)
    /// to the graph of the current map.
    pub fn delta_for(&self, graph: &MutualContactsGraph, changes: &ContactChanges) -> GraphDelta {
        let mut touched: BTreeSet<(HostId, HostId)> = BTreeSet::new();
        let mut dropped: BTreeMap<HostId, Vec<HostId>> = BTreeMap::new();
        for &(a, b) in &changes.removed {
            dropped.entry(a).or_default().push(b);
            dropped.entry(b).or_default().push(a);
        }
        for &(a, b) in changes.added.iter().chain(&changes.removed) {
            // Edge a-b changed: a's neighbours pair with b and vice versa.
            for (pivot, other) in [(a, b), (b, a)] {
                let still = self.contacts(pivot).map(|(c, _)| c);
                let gone = dropped.get(&pivot).into_iter().flatten().copied();
                for y in still.chain(gone) {
                    if y != other {
                        touched.insert(ordered(other, y));
                    }
                }
            }
        }

        let mut delta = GraphDelta::default();
        for h in self.hosts() {
            if !graph.contains(h) {
                delta.vertex_additions.insert(h);
            }
        }
        for h in graph.vertices() {
            if !self.contains_host(h) {
                delta.vertex_removals.insert(h);
            }
        }
        for (a, b) in touched {
            let new_weight = if self.contains_host(a) && self.contains_host(b) {
                self.mutual_unchecked(a, b)
            } else {
                0
            };
            if graph.weight(a, b) != new_weight {
                delta.weight_updates.insert((a, b), new_weight);
            }
        }
        delta
    }

    /// Records a round of flows, expires stale contacts, and returns the graph
    /// delta relative to `graph`, which must be the mutual-contacts graph of
    /// `self` before the call.
    pub fn advance_round(
        &mut self,
        graph: &MutualContactsGraph,
        flows: &[(HostId, HostId)],
        round: u64,
        window: u64,
    ) -> Result<GraphDelta> {
        let mut changes = self.record_in_place(flows, round)?;
        changes.merge(self.expire_in_place(round, window));
        Ok(self.delta_for(graph, &changes))
    }

    /// Checks symmetry, absence of self-contacts and the last-seen bound.
    pub fn check_invariants(&self, current_round: u64) -> std::result::Result<(), String> {
        for (h, contacts) in &self.entries {
            if contacts.is_empty() {
                return Err(format!("{h} has an empty contact set"));
            }
            for (c, seen) in contacts {
                if c == h {
                    return Err(format!("{h} contacts itself"));
                }
                if *seen > current_round {
                    return Err(format!("{h}-{c} seen in future round {seen}"));
                }
                if self.last_seen(*c, *h) != Some(*seen) {
                    return Err(format!("contact {h}-{c} is not symmetric"));
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`ContactMap::record_contacts`].
pub fn record_contacts(map: &ContactMap, flows: &[(HostId, HostId)], round: u64) -> Result<ContactMap> {
    map.record_contacts(flows, round)
}

/// Functional form of [`ContactMap::expire_contacts`].
pub fn expire_contacts(map: &ContactMap, round: u64, window: u64) -> (ContactMap, GraphDelta) {
    map.expire_contacts(round, window)
}

/// Functional form of [`ContactMap::mutual_contacts`].
pub fn mutual_contacts(map: &ContactMap, i: HostId, j: HostId) -> Result<u64> {
    map.mutual_contacts(i, j)
}

/// Functional form of [`ContactMap::build_mcm`].
pub fn build_mcm(map: &ContactMap) -> MutualContactsGraph {
    map.build_mcm()
}
