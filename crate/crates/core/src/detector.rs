//! Community tracking and botnet classification.
//!
//! A community is a botnet *candidate* when the average intra-community
//! mutual-contact weight per member exceeds `theta`. A candidate becomes a
//! botnet when at least one member is a pivotal node, i.e. its full row sum in
//! the mutual-contacts matrix reaches `rho`.
//!
//! Between rounds, each new community is matched to the previous community it
//! overlaps most. Matched communities whose perturbation ratio stays within
//! `phi` keep their old label; everything else is classified from scratch.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::MutualContactsGraph;
use crate::host::HostId;
use crate::louvain::{CommunityId, Partition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Botnet,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Botnet => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Botnet),
            other => Err(Error::Decode(format!("unknown label code {other}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "benign",
            Label::Botnet => "botnet",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityRecord {
    pub id: CommunityId,
    pub members: BTreeSet<HostId>,
    pub label: Label,
}

/// Labelled communities of one state, ordered by id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySet {
    records: Vec<CommunityRecord>,
}

impl CommunitySet {
    pub fn new(mut records: Vec<CommunityRecord>) -> Self {
        records.sort_by_key(|r| r.id);
        CommunitySet { records }
    }

    pub fn records(&self) -> &[CommunityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: CommunityId) -> Option<&CommunityRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn partition(&self) -> Partition {
        Partition::from_assignment(
            self.records
                .iter()
                .flat_map(|r| r.members.iter().map(move |h| (*h, r.id)))
                .collect(),
        )
    }

    /// Union of members of botnet-labelled communities.
    pub fn blacklist(&self) -> BTreeSet<HostId> {
        self.records
            .iter()
            .filter(|r| r.label == Label::Botnet)
            .flat_map(|r| r.members.iter().copied())
            .collect()
    }

    pub fn botnet_count(&self) -> usize {
        self.records.iter().filter(|r| r.label == Label::Botnet).count()
    }

    /// `(host, community, label)` triples in host order.
    pub fn triples(&self) -> Vec<(HostId, CommunityId, Label)> {
        let mut out: Vec<_> = self
            .records
            .iter()
            .flat_map(|r| r.members.iter().map(move |h| (*h, r.id, r.label)))
            .collect();
        out.sort();
        out
    }
}

/// Pivotal-node threshold: a fixed value or the deviation rule
/// `max(mean + 3·stddev, 10)` over all row sums of the current matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rho {
    Auto,
    Fixed(f64),
}

impl Rho {
    pub const AUTO_FLOOR: f64 = 10.0;
    pub const AUTO_SIGMAS: f64 = 3.0;

    pub fn resolve(&self, graph: &MutualContactsGraph) -> f64 {
        match *self {
            Rho::Fixed(v) => v,
            Rho::Auto => auto_rho(graph),
        }
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rho::Auto => f.write_str("auto"),
            Rho::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Rho {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Rho::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("rho must be a number or \"auto\", got {s:?}")))?;
        Ok(Rho::Fixed(v))
    }
}

impl Serialize for Rho {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rho::Auto => serializer.serialize_str("auto"),
            Rho::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Rho {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Rho::Fixed(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Detection thresholds. The defaults are tuned for the bundled synthetic
/// workload, not derived from measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub theta: f64,
    pub phi: f64,
    pub rho: Rho,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            theta: 5.0,
            phi: 0.5,
            rho: Rho::Auto,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("detector.{name} must be finite and >= 0, got {v}")))
            }
        };
        finite_nonneg("theta", self.theta)?;
        finite_nonneg("phi", self.phi)?;
        if self.phi > 1.0 {
            return Err(Error::Config(format!("detector.phi must be <= 1, got {}", self.phi)));
        }
        if let Rho::Fixed(v) = self.rho {
            finite_nonneg("rho", v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistDelta {
    pub additions: BTreeSet<HostId>,
    pub removals: BTreeSet<HostId>,
}

impl BlacklistDelta {
    pub fn is_empty(&self) -> bool {
        self.additions.is_empty() && self.removals.is_empty()
    }
}

pub fn auto_rho(graph: &MutualContactsGraph) -> f64 {
    let rows: Vec<f64> = graph.vertices().map(|v| graph.row_sum(v) as f64).collect();
    if rows.is_empty() {
        return Rho::AUTO_FLOOR;
    }
    let n = rows.len() as f64;
    let mean = rows.iter().sum::<f64>() / n;
    let var = rows.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    (mean + Rho::AUTO_SIGMAS * var.sqrt()).max(Rho::AUTO_FLOOR)
}

/// Maps each new community to the previous community it overlaps most.
///
/// Pairs are claimed greedily by descending overlap, ties going to the
/// smaller previous id and then the smaller new id. Each side is claimed at
/// most once; communities without a positive-overlap partner map to `None`.
pub fn match_communities(
    prev: &CommunitySet,
    new_partition: &Partition,
) -> BTreeMap<CommunityId, Option<CommunityId>> {
    let prev_of: BTreeMap<HostId, CommunityId> = prev
        .records()
        .iter()
        .flat_map(|r| r.members.iter().map(move |h| (*h, r.id)))
        .collect();
    let mut overlap: BTreeMap<(CommunityId, CommunityId), usize> = BTreeMap::new();
    let mut result: BTreeMap<CommunityId, Option<CommunityId>> = BTreeMap::new();
    for (h, new_id) in new_partition.iter() {
        result.insert(new_id, None);
        if let Some(&old) = prev_of.get(&h) {
            *overlap.entry((new_id, old)).or_insert(0) += 1;
        }
    }
    let mut candidates: Vec<(usize, CommunityId, CommunityId)> =
        overlap.into_iter().map(|((n, p), o)| (o, p, n)).collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut claimed: BTreeSet<CommunityId> = BTreeSet::new();
    for (_, old, new_id) in candidates {
        if result[&new_id].is_none() && !claimed.contains(&old) {
            result.insert(new_id, Some(old));
            claimed.insert(old);
        }
    }
    result
}

/// Ratio of total changes to the previous size of a matched community.
///
/// Changes are member additions and removals plus intra-community edge
/// additions, removals and weight changes. The size is the previous member
/// count plus the previous intra-community edge count, and is at least one.
pub fn perturbation_ratio(
    prev: &CommunityRecord,
    members_new: &BTreeSet<HostId>,
    graph_prev: &MutualContactsGraph,
    graph_new: &MutualContactsGraph,
) -> f64 {
    let members_changed = prev.members.symmetric_difference(members_new).count();
    let edges_prev = graph_prev.induced_edges(&prev.members);
    let edges_new = graph_new.induced_edges(members_new);
    let mut edge_changes = 0usize;
    for (pair, w) in &edges_prev {
        match edges_new.get(pair) {
            None => edge_changes += 1,
            Some(nw) if nw != w => edge_changes += 1,
            _ => {}
        }
    }
    edge_changes += edges_new.keys().filter(|k| !edges_prev.contains_key(k)).count();
    let size = (prev.members.len() + edges_prev.len()).max(1);
    (members_changed + edge_changes) as f64 / size as f64
}

/// Average intra-community weight per member, counting every unordered pair
/// once for each endpoint.
pub fn intra_average(members: &BTreeSet<HostId>, mcm: &MutualContactsGraph) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let pair_sum: u64 = mcm.induced_edges(members).values().sum();
    (2 * pair_sum) as f64 / members.len() as f64
}

/// Classifies with an already resolved pivotal threshold.
pub fn classify_with_rho(
    members: &BTreeSet<HostId>,
    mcm: &MutualContactsGraph,
    theta: f64,
    rho: f64,
) -> Label {
    if intra_average(members, mcm) <= theta {
        return Label::Benign;
    }
    let pivotal = members.iter().any(|&h| mcm.row_sum(h) as f64 >= rho);
    if pivotal {
        Label::Botnet
    } else {
        Label::Benign
    }
}

pub fn classify_community(
    members: &BTreeSet<HostId>,
    mcm: &MutualContactsGraph,
    cfg: &DetectorConfig,
) -> Label {
    classify_with_rho(members, mcm, cfg.theta, cfg.rho.resolve(mcm))
}

pub fn diff_blacklists(prev: &CommunitySet, new: &CommunitySet) -> BlacklistDelta {
    let before = prev.blacklist();
    let after = new.blacklist();
    BlacklistDelta {
        additions: after.difference(&before).copied().collect(),
        removals: before.difference(&after).copied().collect(),
    }
}

/// Per-round bookkeeping of how labels were assigned.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelingStats {
    pub matched: usize,
    pub carried: usize,
    pub reclassified: usize,
    pub rho: f64,
}

/// Labels every community of `partition`: stable matched communities carry
/// their previous label, new or heavily perturbed ones are classified.
pub fn label_communities(
    prev: &CommunitySet,
    graph_prev: &MutualContactsGraph,
    partition: &Partition,
    graph_new: &MutualContactsGraph,
    cfg: &DetectorConfig,
) -> (CommunitySet, LabelingStats) {
    let matching = match_communities(prev, partition);
    let rho = cfg.rho.resolve(graph_new);
    let mut stats = LabelingStats {
        rho,
        ..LabelingStats::default()
    };
    let mut records = Vec::new();
    for (id, members) in partition.communities() {
        let carried = matching.get(&id).copied().flatten().and_then(|old| {
            let prev_rec = prev.get(old)?;
            stats.matched += 1;
            let ratio = perturbation_ratio(prev_rec, &members, graph_prev, graph_new);
            (ratio <= cfg.phi).then_some(prev_rec.label)
        });
        let label = match carried {
            Some(label) => {
                stats.carried += 1;
                label
            }
            None => {
                stats.reclassified += 1;
                classify_with_rho(&members, graph_new, cfg.theta, rho)
            }
        };
        records.push(CommunityRecord { id, members, label });
    }
    (CommunitySet::new(records), stats)
}
