//! End-to-end driver: traffic → agents → ledger → replicated state
//! transitions, with per-round reporting, persistence and replay.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, Flow};
use crate::codec::Hash256;
use crate::detector::{DetectorConfig, LabelingStats};
use crate::error::{Error, Result};
use crate::host::HostId;
use crate::ledger::{
    read_chain, transition, write_segment, ChainState, Cluster, Fault, LedgerConfig, Manifest,
    PublicKey, RoundRecord,
};
use crate::traffic::{build_world, step, World, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub ledger: LedgerConfig,
    pub detector: DetectorConfig,
    pub rounds: u64,
    pub output_dir: Option<PathBuf>,
    /// Fault of each generator by index; missing entries are honest.
    pub faults: Vec<Fault>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            ledger: LedgerConfig::default(),
            detector: DetectorConfig::default(),
            rounds: 10,
            output_dir: None,
            faults: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.faults.len() > self.ledger.n_generators as usize {
            return Err(Error::Config("more faults than generators".into()));
        }
        self.world.validate()?;
        self.ledger.validate()?;
        self.detector.validate()
    }
}

/// One round of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    pub blocks: usize,
    pub nts: usize,
    pub view_changes: u64,
    pub vertices: usize,
    pub edges: usize,
    pub communities: usize,
    pub botnet_communities: usize,
    pub blacklist_size: usize,
    pub additions: Vec<HostId>,
    pub removals: Vec<HostId>,
    pub quarantined: usize,
    /// Against planted ground truth; absent for offline logs.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub labeling: LabelingStats,
    pub modularity_trace: Vec<f64>,
    pub state_root: Hash256,
    /// Root computed by each generator, `None` for crash-silent ones.
    pub replica_roots: Vec<Option<Hash256>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub genesis_root: Hash256,
    pub rounds: Vec<RoundReport>,
    /// First round by whose end every bot had emitted at least one flow.
    pub all_bots_active_round: Option<u64>,
}

impl Report {
    /// Fixed-width human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::from(
            "round blocks   nts views  verts  edges comms bots-c  black   +   -  prec recall  root\n",
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        for r in &self.rounds {
            out.push_str(&format!(
                "{:>5} {:>6} {:>5} {:>5} {:>6} {:>6} {:>5} {:>6} {:>6} {:>3} {:>3} {:>5} {:>6}  {}\n",
                r.round,
                r.blocks,
                r.nts,
                r.view_changes,
                r.vertices,
                r.edges,
                r.communities,
                r.botnet_communities,
                r.blacklist_size,
                r.additions.len(),
                r.removals.len(),
                opt(r.precision),
                opt(r.recall),
                &r.state_root.to_hex()[..16],
            ));
        }
        out
    }
}

/// Ledger side of a run: consensus cluster, one chain state per generator and
/// the optional on-disk chain.
struct Ledger {
    cfg: LedgerConfig,
    detector: DetectorConfig,
    cluster: Cluster,
    states: Vec<ChainState>,
    out: Option<PathBuf>,
    manifest: Manifest,
}

struct RoundResult {
    report: RoundReport,
    delta: crate::detector::BlacklistDelta,
}

impl Ledger {
    fn new(cfg: LedgerConfig, detector: DetectorConfig, faults: &[Fault], out: Option<PathBuf>) -> Result<Self> {
        let cluster = Cluster::new(cfg.n_generators, cfg.max_block_txs as usize, faults)?;
        let genesis = ChainState::genesis();
        if let Some(dir) = &out {
            fs::create_dir_all(dir)?;
        }
        Ok(Ledger {
            manifest: Manifest {
                ledger: cfg,
                detector,
                genesis_root: genesis.state_root,
                rounds: Vec::new(),
            },
            states: vec![genesis; cfg.n_generators as usize],
            cfg,
            detector,
            cluster,
            out,
        })
    }

    /// Index of a live generator whose state serves as the reference.
    fn reference(&self) -> usize {
        self.cluster
            .replicas
            .iter()
            .position(|r| r.is_live())
            .expect("validated: at least one live generator")
    }

    fn state(&self) -> &ChainState {
        &self.states[self.reference()]
    }

    /// Commits one block per slot, feeding each slot's ticks through `feed`
    /// first, then runs the state transition on every live generator.
    fn round(
        &mut self,
        tick: &mut u64,
        mut feed: impl FnMut(u64, &mut Cluster) -> Result<()>,
    ) -> Result<RoundResult> {
        let first_height = self.cluster.height();
        let views_before = self.cluster.view_changes;
        for _ in 0..self.cfg.blocks_per_round {
            for _ in 0..self.cfg.tau_ticks {
                feed(*tick, &mut self.cluster)?;
                *tick += 1;
            }
            let height = self.cluster.height();
            if self.cluster.commit_next(*tick)?.is_none() {
                return Err(Error::Stalled { height });
            }
        }
        let last_height = self.cluster.height();
        let range = first_height as usize..last_height as usize;

        let mut outcomes = BTreeMap::new();
        for (i, replica) in self.cluster.replicas.iter().enumerate() {
            if !replica.is_live() {
                continue;
            }
            let outcome = transition(&self.states[i], &replica.chain[range.clone()], &self.cfg, &self.detector)?;
            outcomes.insert(i, outcome);
        }
        let reference = self.reference();
        let round = self.states[reference].round_index;
        let root = outcomes[&reference].state.state_root;
        if let Some((&bad, _)) = outcomes.iter().find(|(_, o)| o.state.state_root != root) {
            return Err(self.divergence(round, reference, bad, &outcomes));
        }
        let replica_roots = (0..self.states.len())
            .map(|i| outcomes.get(&i).map(|o| o.state.state_root))
            .collect();
        let outcome = outcomes.remove(&reference).expect("reference is live");
        for (i, o) in outcomes {
            self.states[i] = o.state;
        }

        if let Some(dir) = &self.out {
            let blocks = &self.cluster.replicas[reference].chain[range];
            write_segment(dir, blocks)?;
        }
        self.manifest.rounds.push(RoundRecord {
            round,
            first_height,
            block_count: last_height - first_height,
            state_root: root,
        });

        let s = &outcome.state;
        let report = RoundReport {
            round,
            blocks: (last_height - first_height) as usize,
            nts: outcome.nt_count,
            view_changes: self.cluster.view_changes - views_before,
            vertices: s.graph.vertex_count(),
            edges: s.graph.edge_count(),
            communities: s.commset.len(),
            botnet_communities: s.commset.botnet_count(),
            blacklist_size: s.blacklist.len(),
            additions: outcome.blacklist_delta.additions.iter().copied().collect(),
            removals: outcome.blacklist_delta.removals.iter().copied().collect(),
            quarantined: 0,
            precision: None,
            recall: None,
            labeling: outcome.labeling.clone(),
            modularity_trace: outcome.modularity_trace.clone(),
            state_root: root,
            replica_roots,
        };
        let delta = outcome.blacklist_delta.clone();
        self.states[reference] = outcome.state;
        Ok(RoundResult { report, delta })
    }

    fn divergence(
        &self,
        round: u64,
        a: usize,
        b: usize,
        outcomes: &BTreeMap<usize, crate::ledger::RoundOutcome>,
    ) -> Error {
        let (ra, rb) = (&outcomes[&a].state, &outcomes[&b].state);
        let mut detail = format!(
            "generator {a} root {} vs generator {b} root {}",
            ra.state_root, rb.state_root
        );
        if let Some(dir) = &self.out {
            for (i, s) in [(a, ra), (b, rb)] {
                let path = dir.join(format!("divergence_round_{round}_generator_{i}.json"));
                if let Ok(json) = serde_json::to_vec_pretty(s) {
                    if fs::write(&path, json).is_ok() {
                        detail.push_str(&format!("; state dumped to {}", path.display()));
                    }
                }
            }
        }
        Error::Divergence { round, detail }
    }

    fn finish(&self) -> Result<()> {
        if let Some(dir) = &self.out {
            self.manifest.write(dir)?;
        }
        Ok(())
    }
}

fn score(blacklist: &BTreeSet<HostId>, world: &World) -> (f64, f64) {
    let malicious = world.malicious();
    let precision = if blacklist.is_empty() {
        1.0
    } else {
        blacklist.intersection(&malicious).count() as f64 / blacklist.len() as f64
    };
    let recall = if world.bots.is_empty() {
        1.0
    } else {
        blacklist.intersection(&world.bots).count() as f64 / world.bots.len() as f64
    };
    (precision, recall)
}

/// A planted-botnet simulation that can be advanced round by round.
pub struct Experiment {
    cfg: ExperimentConfig,
    world: World,
    agents: Vec<AgentState>,
    ledger: Ledger,
    tick: u64,
    active_bots: BTreeSet<HostId>,
    report: Report,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let world = build_world(&cfg.world)?;
        let n_gen = cfg.ledger.n_generators;
        let agents = world
            .subnets
            .iter()
            .enumerate()
            .map(|(i, subnet)| {
                AgentState::new(
                    PublicKey::derive("agent", i as u32),
                    subnet.clone(),
                    PublicKey::derive("pool", i as u32 % n_gen),
                )
            })
            .collect();
        let ledger = Ledger::new(cfg.ledger, cfg.detector, &cfg.faults, cfg.output_dir.clone())?;
        let report = Report {
            genesis_root: ledger.state().state_root,
            rounds: Vec::new(),
            all_bots_active_round: None,
        };
        Ok(Experiment {
            cfg,
            world,
            agents,
            ledger,
            tick: 0,
            active_bots: BTreeSet::new(),
            report,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// State of the reference (first live) generator.
    pub fn state(&self) -> &ChainState {
        self.ledger.state()
    }

    pub fn cluster(&self) -> &Cluster {
        &self.ledger.cluster
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn report(&self) -> &Report {
        &self.report
    }

    pub fn step_round(&mut self) -> Result<&RoundReport> {
        let world = &self.world;
        let agents = &mut self.agents;
        let active = &mut self.active_bots;
        let result = self.ledger.round(&mut self.tick, |tick, cluster| {
            for flow in step(world, tick) {
                if world.is_bot(flow.src) {
                    active.insert(flow.src);
                }
                let agent = world
                    .agent_of(flow.src)
                    .or_else(|| world.agent_of(flow.dst))
                    .ok_or(Error::OutsideSubnet { src: flow.src, dst: flow.dst })?;
                let action = agents[agent].process_flow(flow)?;
                if let Some(nt) = action.nt {
                    cluster.submit(&nt, tick)?;
                }
            }
            Ok(())
        })?;
        for a in self.agents.iter_mut() {
            a.apply_blacklist_update(&result.delta);
        }
        let mut report = result.report;
        let (p, r) = score(&self.ledger.state().blacklist, &self.world);
        report.precision = Some(p);
        report.recall = Some(r);
        report.quarantined = self.agents.iter().map(|a| a.quarantined.len()).sum();
        if self.report.all_bots_active_round.is_none() && self.active_bots.len() == self.world.bots.len() {
            self.report.all_bots_active_round = Some(report.round);
        }
        info!(
            "round {} blocks {} nts {} communities {} botnet {} precision {p:.3} recall {r:.3}",
            report.round, report.blocks, report.nts, report.communities, report.botnet_communities
        );
        self.report.rounds.push(report);
        Ok(self.report.rounds.last().expect("just pushed"))
    }

    pub fn finish(self) -> Result<Report> {
        self.ledger.finish()?;
        if let Some(dir) = &self.cfg.output_dir {
            fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&self.report)?)?;
        }
        Ok(self.report)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let mut exp = Experiment::new(cfg.clone())?;
    for _ in 0..cfg.rounds {
        exp.step_round()?;
    }
    exp.finish()
}

/// Offline run over a flow log: one virtual agent monitoring every flow
/// source and a single generator.
pub struct AnalyzeConfig {
    pub ledger: LedgerConfig,
    pub detector: DetectorConfig,
    pub whitelist: BTreeSet<HostId>,
    pub blacklist: BTreeSet<HostId>,
    pub output_dir: Option<PathBuf>,
}

pub fn analyze(flows: &[Flow], cfg: &AnalyzeConfig) -> Result<Report> {
    let ledger_cfg = LedgerConfig {
        n_generators: 1,
        ..cfg.ledger
    };
    ledger_cfg.validate()?;
    cfg.detector.validate()?;
    let subnet: BTreeSet<HostId> = flows.iter().map(|f| f.src).collect();
    let mut agent = AgentState::new(PublicKey::derive("agent", 0), subnet, PublicKey::derive("pool", 0))
        .with_lists(cfg.whitelist.clone(), cfg.blacklist.clone());
    let mut by_tick: BTreeMap<u64, Vec<Flow>> = BTreeMap::new();
    for f in flows {
        by_tick.entry(f.tick).or_default().push(*f);
    }
    let (Some(&start), Some(&end)) = (by_tick.keys().next(), by_tick.keys().next_back()) else {
        return Err(Error::Config("flow log holds no valid flows".into()));
    };
    let per_round = ledger_cfg.tau_ticks * ledger_cfg.blocks_per_round as u64;
    let rounds = (end - start) / per_round + 1;

    let mut ledger = Ledger::new(ledger_cfg, cfg.detector, &[], cfg.output_dir.clone())?;
    let mut report = Report {
        genesis_root: ledger.state().state_root,
        rounds: Vec::new(),
        all_bots_active_round: None,
    };
    let mut tick = start;
    for _ in 0..rounds {
        let result = ledger.round(&mut tick, |t, cluster| {
            for f in by_tick.get(&t).into_iter().flatten() {
                let action = agent.process_flow(*f)?;
                if let Some(nt) = action.nt {
                    cluster.submit(&nt, t)?;
                }
            }
            Ok(())
        })?;
        agent.apply_blacklist_update(&result.delta);
        let mut r = result.report;
        r.quarantined = agent.quarantined.len();
        debug!("analyzed round {}", r.round);
        report.rounds.push(r);
    }
    ledger.finish()?;
    if let Some(dir) = &cfg.output_dir {
        fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub rounds: u64,
    pub blocks: u64,
    pub final_root: Hash256,
}

/// Re-executes every persisted round and checks each state root against the
/// manifest.
pub fn replay(dir: &Path) -> Result<ReplayReport> {
    let manifest = Manifest::read(dir)?;
    let chain = read_chain(dir)?;
    let mut state = ChainState::genesis();
    if state.state_root != manifest.genesis_root {
        return Err(Error::Divergence {
            round: 0,
            detail: format!("genesis root {} vs recorded {}", state.state_root, manifest.genesis_root),
        });
    }
    let mut consumed = 0u64;
    for rec in &manifest.rounds {
        if rec.first_height != consumed {
            return Err(Error::NonContiguous {
                expected: consumed,
                got: rec.first_height,
            });
        }
        let end = consumed + rec.block_count;
        if end > chain.len() as u64 {
            return Err(Error::Decode(format!(
                "round {} needs blocks up to {} but the chain holds {}",
                rec.round,
                end,
                chain.len()
            )));
        }
        let blocks = &chain[consumed as usize..end as usize];
        state = transition(&state, blocks, &manifest.ledger, &manifest.detector)?.state;
        if state.state_root != rec.state_root {
            return Err(Error::Divergence {
                round: rec.round,
                detail: format!("replayed root {} vs recorded {}", state.state_root, rec.state_root),
            });
        }
        consumed = end;
    }
    Ok(ReplayReport {
        rounds: manifest.rounds.len() as u64,
        blocks: consumed,
        final_root: state.state_root,
    })
}
