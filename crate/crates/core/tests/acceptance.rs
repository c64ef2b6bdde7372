//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use botwatch::detector::{classify_with_rho, Label};
use botwatch::experiment::{replay, Experiment, ExperimentConfig, Report};
use botwatch::graph::{ContactMap, MutualContactsGraph};
use botwatch::ledger::Fault;
use botwatch::louvain::{louvain, louvain_traced, modularity, Partition};
use botwatch::traffic::WorldConfig;
use botwatch::HostId;
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;

const MONOTONE_TOL: f64 = 1e-12;
const TRIANGLES_TOL: f64 = 1e-12;
const QUALITY_RATIO: f64 = 0.95;
const MIN_PRECISION: f64 = 0.9;
const RECALL_LAG: u64 = 3;
const MIN_RETAINED: f64 = 0.9;
const MCM_BUDGET_S: f64 = 5.0;
const REPLICA_BUDGET_S: f64 = 30.0;
const E2E_ROUNDS: u64 = 12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mcm_oracle() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut largest = 0;
    for seed in 1..=50u64 {
        let mut r = rng(seed);
        let n = r.gen_range(2..=200);
        let count = r.gen_range(1..=3 * n);
        let flows = random_flows(&mut r, n, count);
        let map = ContactMap::new().record_contacts(&flows, 0).unwrap();
        largest = largest.max(map.len());
        if edge_map(&map.build_mcm()) != brute_mcm(&contact_sets(&flows)) {
            mismatches.push(seed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < MCM_BUDGET_S,
        format!("50 maps (max {largest} hosts), mismatched seeds {mismatches:?}, {secs:.2}s (limit {MCM_BUDGET_S}s)"),
    )
}

/// The fixed instance family: G(n, 1/2) with weights 1..=3, n = 4 + seed % 5.
fn small_instances() -> Vec<(u64, MutualContactsGraph)> {
    (1..=20u64)
        .map(|seed| {
            let mut r = rng(seed);
            (seed, random_graph(&mut r, 4 + (seed % 5) as usize, 0.5, 3))
        })
        .collect()
}

fn two_triangles() -> MutualContactsGraph {
    let e = |a: usize, b: usize| ((host(a), host(b)), 1u64);
    MutualContactsGraph::from_parts(
        (0..6).map(host),
        [e(0, 1), e(0, 2), e(1, 2), e(3, 4), e(3, 5), e(4, 5)],
    )
    .unwrap()
}

fn modularity_quality() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    for (seed, g) in small_instances() {
        if g.edge_count() == 0 {
            continue;
        }
        let q = modularity(&g, &louvain(&g, None)).unwrap();
        let best = exhaustive_best_modularity(&g);
        let ratio = if best > 0.0 { q / best } else { 1.0 };
        worst = worst.min(ratio);
        if q < QUALITY_RATIO * best - 1e-12 {
            failed.push(format!("seed {seed} (n={}): Q={q:.4} best={best:.4}", g.vertex_count()));
        }
    }
    let g = two_triangles();
    let q2 = modularity(&g, &louvain(&g, None)).unwrap();
    let triangles_ok = (q2 - 0.5).abs() <= TRIANGLES_TOL;
    outcome(
        failed.is_empty() && triangles_ok,
        format!(
            "worst Q/best {worst:.4} (need >= {QUALITY_RATIO}), below bar: {failed:?}; two triangles Q={q2} (|Q-0.5| <= {TRIANGLES_TOL:e})"
        ),
    )
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - MONOTONE_TOL)
}

fn monotonicity(runs: &[Report]) -> Outcome {
    let mut traces = 0;
    let mut bad = 0;
    for (_, g) in small_instances() {
        traces += 1;
        if !monotone(&louvain_traced(&g, None).modularity_trace) {
            bad += 1;
        }
    }
    for r in runs.iter().flat_map(|rep| &rep.rounds) {
        traces += 1;
        if !monotone(&r.modularity_trace) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of {traces} traces decrease by more than {MONOTONE_TOL:e}"))
}

fn planted_recovery() -> Outcome {
    let (g, groups) = ring_of_cliques(8, 6);
    let hosts: Vec<HostId> = g.vertices().collect();
    let mut failed = Vec::new();
    for seed in 1..=10u64 {
        let mut r = rng(seed);
        let mut relabel = hosts.clone();
        relabel.shuffle(&mut r);
        let map: BTreeMap<HostId, HostId> = hosts.iter().copied().zip(relabel).collect();
        let mut edges: Vec<((HostId, HostId), u64)> = g.edges().map(|(a, b, w)| ((map[&a], map[&b]), w)).collect();
        edges.shuffle(&mut r);
        let h = MutualContactsGraph::from_parts(map.values().copied(), edges).unwrap();
        let planted: BTreeSet<BTreeSet<HostId>> =
            groups.iter().map(|grp| grp.iter().map(|v| map[v]).collect()).collect();
        let found: BTreeSet<BTreeSet<HostId>> = louvain(&h, None).communities().into_values().collect();
        if found != planted {
            failed.push(seed);
        }
    }
    outcome(failed.is_empty(), format!("ring of 8 six-cliques under 10 relabellings, failed seeds {failed:?}"))
}

fn replica_determinism() -> Outcome {
    let start = Instant::now();
    let run = |faults: Vec<Fault>| -> Result<(usize, usize, u64), String> {
        let cfg = ExperimentConfig { rounds: 20, faults, ..ExperimentConfig::default() };
        let mut exp = Experiment::new(cfg).map_err(|e| e.to_string())?;
        let mut agreeing = 0;
        let mut live = 0;
        for _ in 0..20 {
            let r = exp.step_round().map_err(|e| e.to_string())?;
            let roots: Vec<_> = r.replica_roots.iter().flatten().collect();
            live = roots.len();
            if r.blocks > 0 && roots.iter().all(|x| **x == r.state_root) {
                agreeing += 1;
            }
        }
        Ok((agreeing, live, exp.cluster().height()))
    };
    let honest = run(vec![]);
    let crashed = run(vec![Fault::CrashSilent]);
    let secs = start.elapsed().as_secs_f64();
    let pass = matches!(honest, Ok((20, 4, 60))) && matches!(crashed, Ok((20, 3, 60))) && secs < REPLICA_BUDGET_S;
    outcome(
        pass,
        format!(
            "honest (agreeing rounds, live, height) {honest:?}; one crash-silent {crashed:?}; {secs:.2}s (limit {REPLICA_BUDGET_S}s)"
        ),
    )
}

fn e2e_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        world: WorldConfig { n_benign: 100, n_servers: 5, n_bots: 20, n_cnc: 3, rng_seed: seed, ..WorldConfig::default() },
        rounds: E2E_ROUNDS,
        ..ExperimentConfig::default()
    }
}

fn detection(runs: &[Report]) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (i, rep) in runs.iter().enumerate() {
        let Some(active) = rep.all_bots_active_round else {
            pass = false;
            notes.push(format!("seed {}: bots never all active", i + 1));
            continue;
        };
        let full = rep.rounds.iter().find(|r| r.recall == Some(1.0)).map(|r| r.round);
        let min_prec = rep
            .rounds
            .iter()
            .filter(|r| r.round >= active)
            .filter_map(|r| r.precision)
            .fold(1.0f64, f64::min);
        let ok = full.is_some_and(|f| f <= active + RECALL_LAG) && min_prec >= MIN_PRECISION;
        pass &= ok;
        notes.push(format!("seed {}: active {active}, recall 1 at {full:?}, min precision {min_prec:.3}", i + 1));
    }
    outcome(pass, notes.join("; "))
}

/// Greedy max-overlap matching; returns the fraction of vertices whose new
/// community is matched to their old one.
fn retained_fraction(old: &Partition, new: &Partition) -> f64 {
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (h, c) in new.iter() {
        if let Some(o) = old.get(h) {
            *overlap.entry((o, c)).or_default() += 1;
        }
    }
    let mut pairs: Vec<(usize, u32, u32)> = overlap.into_iter().map(|((o, c), k)| (k, o, c)).collect();
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_old, mut used_new, mut kept) = (BTreeSet::new(), BTreeSet::new(), 0);
    for (k, o, c) in pairs {
        if !used_old.contains(&o) && !used_new.contains(&c) {
            used_old.insert(o);
            used_new.insert(c);
            kept += k;
        }
    }
    kept as f64 / new.len().max(1) as f64
}

fn seeded_stability() -> Outcome {
    let mut fractions = Vec::new();
    for seed in 1..=5u64 {
        let mut exp = Experiment::new(ExperimentConfig { rounds: 4, ..e2e_config(seed) }).unwrap();
        for _ in 0..4 {
            exp.step_round().unwrap();
        }
        let g = exp.state().graph.clone();
        let before = exp.state().commset.partition();
        let mut r = rng(1000 + seed);
        let mut edges: Vec<(HostId, HostId, u64)> = g.edges().collect();
        let changes = edges.len() / 100;
        edges.shuffle(&mut r);
        for e in edges.iter_mut().take(changes) {
            e.2 = if r.gen_bool(0.5) || e.2 == 1 { e.2 + 1 } else { e.2 - 1 };
        }
        let perturbed =
            MutualContactsGraph::from_parts(g.vertices(), edges.iter().map(|&(a, b, w)| ((a, b), w))).unwrap();
        fractions.push(retained_fraction(&before, &louvain(&perturbed, Some(&before))));
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let shown: Vec<String> = fractions.iter().map(|f| format!("{f:.3}")).collect();
    outcome(
        mean >= MIN_RETAINED,
        format!("retained per seed [{}], mean {mean:.3} (need >= {MIN_RETAINED})", shown.join(", ")),
    )
}

fn replay_integrity(runs: &[(Report, std::path::PathBuf)]) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (i, (rep, dir)) in runs.iter().enumerate() {
        match replay(dir) {
            Ok(r) => {
                let ok = r.rounds == rep.rounds.len() as u64 && Some(r.final_root) == rep.rounds.last().map(|x| x.state_root);
                pass &= ok;
                notes.push(format!("seed {}: {} rounds {}", i + 1, r.rounds, if ok { "match" } else { "MISMATCH" }));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("seed {}: {e}", i + 1));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

fn threshold_monotonicity() -> Outcome {
    let mut flips = 0;
    let mut benign = 0;
    for seed in 1..=200u64 {
        let mut r = rng(seed);
        let n = r.gen_range(2..25);
        let g = random_graph(&mut r, n, 0.4, 6);
        let mut members: BTreeSet<HostId> = g.vertices().filter(|_| r.gen_bool(0.5)).collect();
        if members.is_empty() {
            members.insert(host(0));
        }
        let (theta, rho) = (r.gen_range(0.0..20.0), r.gen_range(0.0..60.0));
        let (dt, dr) = (r.gen_range(0.0..10.0), r.gen_range(0.0..30.0));
        if classify_with_rho(&members, &g, theta, rho) != Label::Benign {
            continue;
        }
        benign += 1;
        for (t, p) in [(theta + dt, rho), (theta, rho + dr), (theta + dt, rho + dr)] {
            if classify_with_rho(&members, &g, t, p) == Label::Botnet {
                flips += 1;
            }
        }
    }
    outcome(flips == 0, format!("200 cases ({benign} benign at base thresholds), {flips} flips"))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut persisted = Vec::new();
    for seed in 1..=5u64 {
        let dir = tmp.path().join(format!("seed{seed}"));
        let cfg = ExperimentConfig { output_dir: Some(dir.clone()), ..e2e_config(seed) };
        let mut exp = Experiment::new(cfg).expect("valid config");
        for _ in 0..E2E_ROUNDS {
            exp.step_round().expect("round");
        }
        persisted.push((exp.finish().expect("report"), dir));
    }
    let reports: Vec<Report> = persisted.iter().map(|(r, _)| r.clone()).collect();

    let results = [
        ("MCM oracle equivalence", mcm_oracle()),
        ("modularity vs exhaustive optimum", modularity_quality()),
        ("modularity trace monotone", monotonicity(&reports)),
        ("planted ring of cliques", planted_recovery()),
        ("replica determinism", replica_determinism()),
        ("end-to-end detection", detection(&reports)),
        ("seeded Louvain stability", seeded_stability()),
        ("replay integrity", replay_integrity(&persisted)),
        ("detector threshold monotonicity", threshold_monotonicity()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
