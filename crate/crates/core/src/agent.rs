//! Gateway agents: flow filtering, transaction emission and quarantine.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detector::BlacklistDelta;
use crate::error::{Error, Result};
use crate::host::HostId;
use crate::ledger::{NetworkDataTransaction, PublicKey};

/// One observed flow at a logical tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Flow {
    pub tick: u64,
    pub src: HostId,
    pub dst: HostId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Skip,
    EmitNT,
    QuarantineAndEmitNT,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowAction {
    pub kind: ActionKind,
    pub nt: Option<NetworkDataTransaction>,
    pub quarantined_host: Option<HostId>,
}

impl FlowAction {
    fn skip() -> Self {
        FlowAction {
            kind: ActionKind::Skip,
            nt: None,
            quarantined_host: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentState {
    pub agent_id: PublicKey,
    pub subnet: BTreeSet<HostId>,
    pub whitelist: BTreeSet<HostId>,
    pub blacklist: BTreeSet<HostId>,
    pub quarantined: BTreeSet<HostId>,
    pub pool_addr: PublicKey,
}

impl AgentState {
    pub fn new(agent_id: PublicKey, subnet: BTreeSet<HostId>, pool_addr: PublicKey) -> Self {
        AgentState {
            agent_id,
            subnet,
            whitelist: BTreeSet::new(),
            blacklist: BTreeSet::new(),
            quarantined: BTreeSet::new(),
            pool_addr,
        }
    }

    /// Seeds the lists, resolving overlaps in favour of the blacklist.
    pub fn with_lists(mut self, whitelist: BTreeSet<HostId>, blacklist: BTreeSet<HostId>) -> Self {
        self.whitelist = whitelist;
        self.apply_blacklist_update(&BlacklistDelta {
            additions: blacklist,
            removals: BTreeSet::new(),
        });
        self
    }

    pub fn monitors(&self, h: HostId) -> bool {
        self.subnet.contains(&h)
    }

    /// Filters one flow.
    ///
    /// Whitelisting is checked on the endpoint outside the subnet; a flow
    /// between two monitored devices has no such endpoint. When an endpoint is
    /// blacklisted the agent quarantines the blacklisted device itself if it
    /// is monitored, otherwise the monitored device talking to it.
    pub fn process_flow(&mut self, flow: Flow) -> Result<FlowAction> {
        let Flow { tick, src, dst } = flow;
        let (src_in, dst_in) = (self.monitors(src), self.monitors(dst));
        if !src_in && !dst_in {
            return Err(Error::OutsideSubnet { src, dst });
        }
        if self.quarantined.contains(&src) || self.quarantined.contains(&dst) {
            return Ok(FlowAction::skip());
        }
        let external = match (src_in, dst_in) {
            (true, false) => Some(dst),
            (false, true) => Some(src),
            _ => None,
        };
        if external.is_some_and(|h| self.whitelist.contains(&h)) {
            return Ok(FlowAction::skip());
        }
        let nt = NetworkDataTransaction::new(self.agent_id, src, dst, self.pool_addr, tick)?;

        let flagged = |h: HostId| self.blacklist.contains(&h);
        if !flagged(src) && !flagged(dst) {
            return Ok(FlowAction {
                kind: ActionKind::EmitNT,
                nt: Some(nt),
                quarantined_host: None,
            });
        }
        let target = [src, dst]
            .into_iter()
            .find(|&h| flagged(h) && self.monitors(h))
            .unwrap_or(if src_in { src } else { dst });
        self.quarantined.insert(target);
        Ok(FlowAction {
            kind: ActionKind::QuarantineAndEmitNT,
            nt: Some(nt),
            quarantined_host: Some(target),
        })
    }

    pub fn apply_blacklist_update(&mut self, delta: &BlacklistDelta) {
        for h in &delta.additions {
            if self.whitelist.remove(h) {
                warn!("{h} is whitelisted and blacklisted; keeping it blacklisted");
            }
            self.blacklist.insert(*h);
        }
        for h in &delta.removals {
            self.blacklist.remove(h);
            self.quarantined.remove(h);
        }
    }
}

/// Functional form of [`AgentState::process_flow`].
pub fn process_flow(agent: &AgentState, flow: Flow) -> Result<(AgentState, FlowAction)> {
    let mut next = agent.clone();
    let action = next.process_flow(flow)?;
    Ok((next, action))
}

/// Functional form of [`AgentState::apply_blacklist_update`].
pub fn apply_blacklist_update(agent: &AgentState, delta: &BlacklistDelta) -> AgentState {
    let mut next = agent.clone();
    next.apply_blacklist_update(delta);
    next
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowLog {
    pub flows: Vec<Flow>,
    /// Lines that were neither blank, comments, nor valid records.
    pub malformed: usize,
}

/// Parses `tick,src_ip,dst_ip` lines. Blank lines and `#` comments are
/// ignored; anything else that does not parse is counted and skipped.
pub fn parse_flow_log(text: &str) -> FlowLog {
    let mut log = FlowLog::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_flow_line(line) {
            Some(f) => log.flows.push(f),
            None => log.malformed += 1,
        }
    }
    log
}

fn parse_flow_line(line: &str) -> Option<Flow> {
    let mut parts = line.split(',').map(str::trim);
    let tick = parts.next()?.parse().ok()?;
    let src = parts.next()?.parse().ok()?;
    let dst = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some(Flow { tick, src, dst })
}

pub fn format_flow_log(flows: &[Flow]) -> String {
    let mut out = String::new();
    for f in flows {
        let _ = writeln!(out, "{},{},{}", f.tick, f.src, f.dst);
    }
    out
}

/// Reads a host list: one dotted quad per line, blank lines and `#` comments
/// ignored.
pub fn parse_host_list(text: &str) -> Result<BTreeSet<HostId>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}
