//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's graph, modularity or detector code:
//! each function recomputes its answer from first principles so it can act as
//! an oracle.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use botwatch::graph::{ContactMap, MutualContactsGraph};
use botwatch::louvain::Partition;
use botwatch::HostId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn host(i: usize) -> HostId {
    HostId::new(10, (i / 65536) as u8, (i / 256 % 256) as u8, (i % 256) as u8)
}

/// Random undirected flows among `n` hosts, no self flows.
pub fn random_flows(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<(HostId, HostId)> {
    assert!(n >= 2);
    (0..count)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (host(a), host(b))
        })
        .collect()
}

/// Contact sets from a flow list, as plain sets.
pub fn contact_sets(flows: &[(HostId, HostId)]) -> BTreeMap<HostId, BTreeSet<HostId>> {
    let mut out: BTreeMap<HostId, BTreeSet<HostId>> = BTreeMap::new();
    for &(a, b) in flows {
        out.entry(a).or_default().insert(b);
        out.entry(b).or_default().insert(a);
    }
    out
}

pub fn contact_sets_of(map: &ContactMap) -> BTreeMap<HostId, BTreeSet<HostId>> {
    map.hosts().map(|h| (h, map.contact_set(h))).collect()
}

/// All-pairs intersection oracle: weight of `{i, j}` is
/// `|(N(i) ∩ N(j)) \ {i, j}|`, zero weights omitted.
pub fn brute_mcm(sets: &BTreeMap<HostId, BTreeSet<HostId>>) -> BTreeMap<(HostId, HostId), u64> {
    let hosts: Vec<HostId> = sets.keys().copied().collect();
    let mut out = BTreeMap::new();
    for (x, &i) in hosts.iter().enumerate() {
        for &j in &hosts[x + 1..] {
            let w = sets[&i]
                .intersection(&sets[&j])
                .filter(|&&h| h != i && h != j)
                .count() as u64;
            if w > 0 {
                out.insert((i, j), w);
            }
        }
    }
    out
}

pub fn edge_map(g: &MutualContactsGraph) -> BTreeMap<(HostId, HostId), u64> {
    g.edges().map(|(u, v, w)| ((u, v), w)).collect()
}

/// Dense weight matrix over `vertices` (in the given order).
pub fn dense(g: &MutualContactsGraph, vertices: &[HostId]) -> Vec<Vec<f64>> {
    vertices
        .iter()
        .map(|&a| vertices.iter().map(|&b| g.weight(a, b) as f64).collect())
        .collect()
}

/// Textbook double-sum modularity
/// `Q = 1/(2m) Σ_ij [A_ij − k_i k_j / (2m)] δ(c_i, c_j)`.
pub fn modularity_oracle(g: &MutualContactsGraph, labels: &BTreeMap<HostId, u32>) -> f64 {
    let vertices: Vec<HostId> = g.vertices().collect();
    let a = dense(g, &vertices);
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..vertices.len() {
        for j in 0..vertices.len() {
            if labels[&vertices[i]] == labels[&vertices[j]] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

pub fn labels_of(p: &Partition) -> BTreeMap<HostId, u32> {
    p.iter().collect()
}

/// Best modularity over every set partition of the vertices, enumerated as
/// restricted growth strings. Feasible up to about ten vertices.
pub fn exhaustive_best_modularity(g: &MutualContactsGraph) -> f64 {
    let vertices: Vec<HostId> = g.vertices().collect();
    let n = vertices.len();
    let mut rgs = vec![0u32; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        let labels: BTreeMap<HostId, u32> = vertices.iter().copied().zip(rgs.iter().copied()).collect();
        best = best.max(modularity_oracle(g, &labels));
        // Next restricted growth string: rgs[i] <= 1 + max(rgs[..i]).
        let mut i = n;
        loop {
            if i <= 1 {
                return best;
            }
            i -= 1;
            let prefix_max = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
        }
    }
}

/// Random weighted graph on `n` vertices with edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, max_w: u64) -> MutualContactsGraph {
    let vertices: Vec<HostId> = (0..n).map(host).collect();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                weights.push(((vertices[i], vertices[j]), rng.gen_range(1..=max_w)));
            }
        }
    }
    MutualContactsGraph::from_parts(vertices, weights).expect("valid graph")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` cliques of `size` vertices, each joined to the next by one edge.
pub fn ring_of_cliques(count: usize, size: usize) -> (MutualContactsGraph, Vec<BTreeSet<HostId>>) {
    let groups: Vec<BTreeSet<HostId>> = (0..count)
        .map(|c| (0..size).map(|i| host(c * size + i)).collect())
        .collect();
    let mut weights = Vec::new();
    for g in &groups {
        let members: Vec<HostId> = g.iter().copied().collect();
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                weights.push(((a, b), 1));
            }
        }
    }
    for c in 0..count {
        let a = host(c * size + size - 1);
        let b = host(((c + 1) % count) * size);
        weights.push(((a.min(b), a.max(b)), 1));
    }
    let vertices = groups.iter().flatten().copied();
    let g = MutualContactsGraph::from_parts(vertices, weights).expect("valid graph");
    (g, groups)
}

/// Average pairwise weight within a host set.
pub fn mean_pair_weight(g: &MutualContactsGraph, hosts: &[HostId]) -> f64 {
    let mut sum = 0u64;
    let mut pairs = 0u64;
    for (x, &a) in hosts.iter().enumerate() {
        for &b in &hosts[x + 1..] {
            sum += g.weight(a, b);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum as f64 / pairs as f64
    }
}
