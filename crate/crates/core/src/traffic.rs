//! Seeded synthetic traffic: benign devices talking to popular servers and a
//! P2P botnet in its waiting stage, keeping in touch with shared C&C hosts
//! and overlay peers.
//!
//! All randomness comes from ChaCha8 (`rand_chacha` 0.3). The world is built
//! from stream 0 of a generator seeded with `rng_seed`; the flows of tick `t`
//! come from stream `t + 1` of the same seed, so any tick can be regenerated
//! on its own.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Flow;
use crate::error::{Error, Result};
use crate::host::HostId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_benign: usize,
    pub n_bots: usize,
    pub n_servers: usize,
    pub n_cnc: usize,
    pub bot_degree: usize,
    pub flows_per_tick: usize,
    pub rng_seed: u64,
    pub n_agents: usize,
    /// Chance that a benign flow goes to another benign device instead of the
    /// device's preferred server.
    pub benign_peer_prob: f64,
    /// Chance that a bot flow goes to a C&C host instead of an overlay peer.
    pub cnc_prob: f64,
    /// Zipf exponent of server popularity.
    pub zipf_exponent: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_benign: 100,
            n_bots: 20,
            n_servers: 5,
            n_cnc: 3,
            bot_degree: 6,
            flows_per_tick: 400,
            rng_seed: 1,
            n_agents: 4,
            benign_peer_prob: 0.005,
            cnc_prob: 0.5,
            zipf_exponent: 1.1,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 && self.n_benign + self.n_bots > 0 {
            return Err(Error::Config("world.n_agents must be >= 1".into()));
        }
        if self.n_agents > 255 {
            return Err(Error::Config("world.n_agents must be <= 255".into()));
        }
        if self.n_servers > 254 * 256 || self.n_cnc > 254 * 256 {
            return Err(Error::Config("too many servers or C&C hosts".into()));
        }
        for (name, p) in [
            ("benign_peer_prob", self.benign_peer_prob),
            ("cnc_prob", self.cnc_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("world.{name} must lie in [0, 1]")));
            }
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent < 0.0 {
            return Err(Error::Config("world.zipf_exponent must be >= 0".into()));
        }
        if self.n_bots > 0 && self.bot_degree >= self.n_bots {
            return Err(Error::InfeasibleOverlay(format!(
                "bot_degree {} needs more than {} bots",
                self.bot_degree, self.n_bots
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub cfg: WorldConfig,
    pub benign: BTreeSet<HostId>,
    pub bots: BTreeSet<HostId>,
    pub servers: Vec<HostId>,
    pub cnc: Vec<HostId>,
    /// Preferred server of each benign device.
    pub preference: BTreeMap<HostId, HostId>,
    pub overlay: BTreeMap<HostId, Vec<HostId>>,
    /// Monitored devices of each agent.
    pub subnets: Vec<BTreeSet<HostId>>,
    /// Benign devices and bots in address order; flow sources are drawn from here.
    devices: Vec<HostId>,
    benign_list: Vec<HostId>,
}

fn external(first: u8, second: u8, third: u8, i: usize) -> HostId {
    HostId::new(first, second, third + (i / 254) as u8, (i % 254) as u8 + 1)
}

impl World {
    pub fn agent_of(&self, h: HostId) -> Option<usize> {
        self.subnets.iter().position(|s| s.contains(&h))
    }

    pub fn is_bot(&self, h: HostId) -> bool {
        self.bots.contains(&h)
    }

    /// Hosts a perfect detector would blacklist: the bots and their C&C hosts.
    pub fn malicious(&self) -> BTreeSet<HostId> {
        self.bots.iter().chain(&self.cnc).copied().collect()
    }

    pub fn devices(&self) -> &[HostId] {
        &self.devices
    }

    /// Every contact the generator can ever produce for `h`.
    pub fn possible_contacts(&self, h: HostId) -> BTreeSet<HostId> {
        if let Some(peers) = self.overlay.get(&h) {
            return peers.iter().chain(&self.cnc).copied().collect();
        }
        let mut out: BTreeSet<HostId> = self.preference.get(&h).copied().into_iter().collect();
        if self.cfg.benign_peer_prob > 0.0 {
            out.extend(self.benign.iter().filter(|&&b| b != h));
        }
        out
    }
}

/// Ring lattice on `order`: each vertex links to the `k / 2` next vertices on
/// both sides, plus the antipodal vertex when `k` is odd.
fn ring_overlay(order: &[HostId], k: usize) -> BTreeMap<HostId, Vec<HostId>> {
    let n = order.len();
    let mut peers: BTreeMap<HostId, BTreeSet<HostId>> =
        order.iter().map(|&h| (h, BTreeSet::new())).collect();
    let mut link = |a: HostId, b: HostId| {
        peers.get_mut(&a).expect("known bot").insert(b);
        peers.get_mut(&b).expect("known bot").insert(a);
    };
    for i in 0..n {
        for off in 1..=k / 2 {
            link(order[i], order[(i + off) % n]);
        }
    }
    if k % 2 == 1 {
        for i in 0..n / 2 {
            link(order[i], order[i + n / 2]);
        }
    }
    peers
        .into_iter()
        .map(|(h, p)| (h, p.into_iter().collect()))
        .collect()
}

pub fn build_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    // Bots and benign devices are interleaved so that no subnet or address
    // range gives the bots away.
    let mut is_bot = vec![false; cfg.n_benign];
    is_bot.extend(std::iter::repeat_n(true, cfg.n_bots));
    is_bot.shuffle(&mut rng);
    let mut benign = BTreeSet::new();
    let mut bots = BTreeSet::new();
    let mut subnets = vec![BTreeSet::new(); cfg.n_agents];
    for (i, bot) in is_bot.into_iter().enumerate() {
        let agent = i % cfg.n_agents.max(1);
        let local = i / cfg.n_agents.max(1);
        let h = HostId::new(10, agent as u8, (local / 250) as u8, (local % 250) as u8 + 1);
        subnets[agent].insert(h);
        if bot {
            bots.insert(h);
        } else {
            benign.insert(h);
        }
    }
    let servers: Vec<HostId> = (0..cfg.n_servers).map(|i| external(203, 0, 113, i)).collect();
    let cnc: Vec<HostId> = (0..cfg.n_cnc).map(|i| external(198, 51, 100, i)).collect();

    let mut preference = BTreeMap::new();
    if !servers.is_empty() {
        let weights = (0..servers.len()).map(|r| ((r + 1) as f64).powf(-cfg.zipf_exponent));
        let zipf = WeightedIndex::new(weights).map_err(|e| Error::Config(e.to_string()))?;
        for &d in &benign {
            preference.insert(d, servers[zipf.sample(&mut rng)]);
        }
    }

    let mut order: Vec<HostId> = bots.iter().copied().collect();
    order.shuffle(&mut rng);
    let overlay = ring_overlay(&order, cfg.bot_degree);

    let devices: Vec<HostId> = benign.iter().chain(&bots).copied().collect::<BTreeSet<_>>().into_iter().collect();
    Ok(World {
        cfg: cfg.clone(),
        benign_list: benign.iter().copied().collect(),
        benign,
        bots,
        servers,
        cnc,
        preference,
        overlay,
        subnets,
        devices,
    })
}

/// Flows of one tick: `flows_per_tick` draws of a uniformly chosen device
/// and one destination for it. Pure in `(rng_seed, tick)`.
pub fn step(world: &World, tick: u64) -> Vec<Flow> {
    let cfg = &world.cfg;
    let mut out = Vec::with_capacity(cfg.flows_per_tick);
    if world.devices.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(tick.wrapping_add(1));
    for _ in 0..cfg.flows_per_tick {
        let src = *world.devices.choose(&mut rng).expect("non-empty");
        let dst = if let Some(peers) = world.overlay.get(&src) {
            let to_cnc = !world.cnc.is_empty() && (peers.is_empty() || rng.gen_bool(cfg.cnc_prob));
            if to_cnc {
                world.cnc.choose(&mut rng).copied()
            } else {
                peers.choose(&mut rng).copied()
            }
        } else {
            let server = world.preference.get(&src).copied();
            if server.is_none() || rng.gen_bool(cfg.benign_peer_prob) {
                pick_other(&world.benign_list, src, &mut rng)
            } else {
                server
            }
        };
        if let Some(dst) = dst {
            out.push(Flow { tick, src, dst });
        }
    }
    out
}

fn pick_other(pool: &[HostId], not: HostId, rng: &mut ChaCha8Rng) -> Option<HostId> {
    if pool.len() < 2 {
        return None;
    }
    loop {
        let h = *pool.choose(rng).expect("non-empty");
        if h != not {
            return Some(h);
        }
    }
}

/// Flows of ticks `from..to`, concatenated.
pub fn flows_between(world: &World, from: u64, to: u64) -> Vec<Flow> {
    (from..to).flat_map(|t| step(world, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world_and_flows() {
        let cfg = WorldConfig::default();
        let a = build_world(&cfg).unwrap();
        let b = build_world(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(step(&a, 3), step(&b, 3));
        assert_ne!(step(&a, 3), step(&a, 4));
        let other = build_world(&WorldConfig { rng_seed: 2, ..cfg }).unwrap();
        assert_ne!(a.bots, other.bots);
    }

    #[test]
    fn pure_benign_world() {
        let cfg = WorldConfig {
            n_bots: 0,
            n_cnc: 0,
            ..WorldConfig::default()
        };
        let w = build_world(&cfg).unwrap();
        assert!(w.bots.is_empty() && w.overlay.is_empty());
        assert!(step(&w, 0).iter().all(|f| w.benign.contains(&f.src)));
    }

    #[test]
    fn zero_flow_rate_is_silent() {
        let cfg = WorldConfig {
            flows_per_tick: 0,
            ..WorldConfig::default()
        };
        assert!(step(&build_world(&cfg).unwrap(), 0).is_empty());
    }

    #[test]
    fn overlay_is_regular_and_symmetric() {
        for k in [1usize, 4, 5, 6, 19] {
            let cfg = WorldConfig {
                bot_degree: k,
                ..WorldConfig::default()
            };
            let w = build_world(&cfg).unwrap();
            for (b, peers) in &w.overlay {
                assert_eq!(peers.len(), k, "degree of {b} for k={k}");
                assert!(!peers.contains(b));
                assert!(peers.iter().all(|p| w.overlay[p].contains(b)));
            }
        }
    }

    #[test]
    fn infeasible_overlay_is_rejected() {
        let cfg = WorldConfig {
            n_bots: 5,
            bot_degree: 5,
            ..WorldConfig::default()
        };
        assert!(matches!(build_world(&cfg), Err(Error::InfeasibleOverlay(_))));
    }

    #[test]
    fn hosts_are_partitioned_across_agents() {
        let w = build_world(&WorldConfig::default()).unwrap();
        let total: usize = w.subnets.iter().map(BTreeSet::len).sum();
        assert_eq!(total, 120);
        for d in w.devices() {
            assert!(w.agent_of(*d).is_some());
        }
        assert!(w.servers.iter().chain(&w.cnc).all(|h| w.agent_of(*h).is_none()));
        // Bots are spread over more than one agent.
        let agents: BTreeSet<usize> = w.bots.iter().filter_map(|b| w.agent_of(*b)).collect();
        assert!(agents.len() > 1);
    }

    #[test]
    fn flows_stay_within_possible_contacts() {
        let w = build_world(&WorldConfig::default()).unwrap();
        for f in flows_between(&w, 0, 10) {
            assert_ne!(f.src, f.dst);
            assert!(w.possible_contacts(f.src).contains(&f.dst), "{f:?}");
        }
    }
}
