mod common;

use std::collections::BTreeSet;

use botwatch::agent::{process_flow, ActionKind, AgentState, Flow};
use botwatch::detector::BlacklistDelta;
use botwatch::ledger::PublicKey;
use botwatch::HostId;
use common::host;
use proptest::prelude::*;

const SUBNET: usize = 8;
const OUTSIDE: usize = 8;

fn outside(i: usize) -> HostId {
    HostId::new(203, 0, 113, i as u8 + 1)
}

fn any_host(i: usize) -> HostId {
    if i < SUBNET {
        host(i)
    } else {
        outside(i - SUBNET)
    }
}

fn agent() -> AgentState {
    AgentState::new(
        PublicKey::derive("agent", 0),
        (0..SUBNET).map(host).collect(),
        PublicKey::derive("pool", 0),
    )
}

#[derive(Clone, Debug)]
enum Event {
    Flow(usize, usize),
    Blacklist(Vec<usize>, Vec<usize>),
    Whitelist(usize),
}

fn event() -> impl Strategy<Value = Event> {
    let n = SUBNET + OUTSIDE;
    prop_oneof![
        6 => (0..SUBNET, 0..n).prop_map(|(a, b)| Event::Flow(a, b)),
        2 => (0..n, 0..SUBNET).prop_map(|(a, b)| Event::Flow(a, b)),
        1 => (proptest::collection::vec(0..n, 0..3), proptest::collection::vec(0..n, 0..3))
            .prop_map(|(a, r)| Event::Blacklist(a, r)),
        1 => (SUBNET..n).prop_map(Event::Whitelist),
    ]
}

/// Replays events, checking the filtering rules after every step.
fn run(events: &[Event]) -> Result<AgentState, TestCaseError> {
    let mut a = agent();
    for (tick, e) in events.iter().enumerate() {
        match e {
            Event::Flow(s, d) => {
                let (src, dst) = (any_host(*s), any_host(*d));
                if src == dst {
                    continue;
                }
                let was_quarantined = a.quarantined.contains(&src) || a.quarantined.contains(&dst);
                let whitelisted = [src, dst].iter().any(|h| !a.monitors(*h) && a.whitelist.contains(h));
                let flagged = a.blacklist.contains(&src) || a.blacklist.contains(&dst);
                let flow = Flow { tick: tick as u64, src, dst };
                let (next, act) = process_flow(&a, flow).unwrap();
                prop_assert_eq!(act.nt.is_some(), act.kind != ActionKind::Skip);
                prop_assert_eq!(act.quarantined_host.is_some(), act.kind == ActionKind::QuarantineAndEmitNT);
                if was_quarantined || whitelisted {
                    prop_assert_eq!(act.kind, ActionKind::Skip);
                } else if flagged {
                    prop_assert_eq!(act.kind, ActionKind::QuarantineAndEmitNT);
                    let q = act.quarantined_host.unwrap();
                    prop_assert!(q == src || q == dst);
                    prop_assert!(next.monitors(q));
                } else {
                    prop_assert_eq!(act.kind, ActionKind::EmitNT);
                }
                if let Some(nt) = &act.nt {
                    prop_assert_eq!((nt.ip_src, nt.ip_dest, nt.tick), (src, dst, tick as u64));
                    prop_assert!(nt.is_well_formed());
                }
                a = next;
            }
            Event::Blacklist(add, remove) => {
                let additions: BTreeSet<HostId> = add.iter().map(|&i| any_host(i)).collect();
                let removals: BTreeSet<HostId> =
                    remove.iter().map(|&i| any_host(i)).filter(|h| !additions.contains(h)).collect();
                a.apply_blacklist_update(&BlacklistDelta { additions: additions.clone(), removals: removals.clone() });
                prop_assert!(additions.is_subset(&a.blacklist));
                prop_assert!(a.blacklist.is_disjoint(&removals));
                prop_assert!(a.quarantined.is_disjoint(&removals));
            }
            Event::Whitelist(i) => {
                let h = any_host(*i);
                if !a.blacklist.contains(&h) {
                    a.whitelist.insert(h);
                }
            }
        }
        prop_assert!(a.whitelist.is_disjoint(&a.blacklist));
        prop_assert!(a.quarantined.is_subset(&a.subnet));
    }
    Ok(a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filtering_rules_hold(events in proptest::collection::vec(event(), 0..60)) {
        run(&events)?;
    }

    #[test]
    fn agents_are_deterministic(events in proptest::collection::vec(event(), 0..60)) {
        prop_assert_eq!(run(&events)?, run(&events)?);
    }

    /// Blacklisting monitored devices, letting them get quarantined, then
    /// removing them leaves no trace.
    #[test]
    fn add_then_remove_is_identity(targets in proptest::collection::btree_set(0..SUBNET, 1..4)) {
        let hosts: BTreeSet<HostId> = targets.iter().map(|&i| any_host(i)).collect();
        let mut a = agent();
        a.apply_blacklist_update(&BlacklistDelta { additions: hosts.clone(), removals: BTreeSet::new() });
        for h in &hosts {
            a.process_flow(Flow { tick: 0, src: outside(7), dst: *h }).unwrap();
            prop_assert!(a.quarantined.contains(h));
        }
        a.apply_blacklist_update(&BlacklistDelta { additions: BTreeSet::new(), removals: hosts });
        prop_assert_eq!(a, agent());
    }
}

#[test]
fn quarantined_device_stays_silent_until_released() {
    let bot = host(3);
    let cnc = outside(0);
    let mut a = agent();
    a.apply_blacklist_update(&BlacklistDelta { additions: [cnc].into(), removals: BTreeSet::new() });
    assert_eq!(
        a.process_flow(Flow { tick: 0, src: bot, dst: cnc }).unwrap().quarantined_host,
        Some(bot)
    );
    for t in 1..10 {
        for dst in [outside(1), host(4), cnc] {
            assert_eq!(a.process_flow(Flow { tick: t, src: bot, dst }).unwrap().kind, ActionKind::Skip);
        }
    }
    // Releasing the C&C host does not release the device that contacted it.
    a.apply_blacklist_update(&BlacklistDelta { additions: BTreeSet::new(), removals: [cnc].into() });
    assert!(a.quarantined.contains(&bot));
    a.apply_blacklist_update(&BlacklistDelta { additions: BTreeSet::new(), removals: [bot].into() });
    assert_eq!(a.process_flow(Flow { tick: 11, src: bot, dst: cnc }).unwrap().kind, ActionKind::EmitNT);
}
