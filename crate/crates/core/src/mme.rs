//! The SmartMME: connection registry, switching policies and the periodic
//! ON/OFF evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SimDuration, SimTime};
use crate::mobility::{nearest_bs, Position};
use crate::node::{BsId, UeId};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MmeError {
    #[error("{ue} cannot connect to {bs}: BS is switched off")]
    BsOff { ue: UeId, bs: BsId },
    #[error("unknown {0}")]
    UnknownBs(BsId),
    #[error("unknown {0}")]
    UnknownUe(UeId),
}

#[derive(Debug, Clone, Default)]
struct Occupancy {
    since: SimTime,
    area: u128,
}

/// Who is attached where, plus the time integral of each BS's UE count.
#[derive(Debug, Clone)]
pub struct ConnectionTable {
    by_bs: BTreeMap<BsId, BTreeSet<UeId>>,
    serving: BTreeMap<UeId, Option<BsId>>,
    occupancy: BTreeMap<BsId, Occupancy>,
    birth: SimTime,
}

impl ConnectionTable {
    pub fn new(bss: impl IntoIterator<Item = BsId>, ues: impl IntoIterator<Item = UeId>, birth: SimTime) -> Self {
        let by_bs: BTreeMap<BsId, BTreeSet<UeId>> = bss.into_iter().map(|b| (b, BTreeSet::new())).collect();
        let occupancy = by_bs.keys().map(|b| (*b, Occupancy { since: birth, area: 0 })).collect();
        ConnectionTable { by_bs, serving: ues.into_iter().map(|u| (u, None)).collect(), occupancy, birth }
    }

    pub fn serving(&self, ue: UeId) -> Option<BsId> {
        self.serving.get(&ue).copied().flatten()
    }

    pub fn connected(&self, bs: BsId) -> impl Iterator<Item = UeId> + '_ {
        self.by_bs.get(&bs).into_iter().flatten().copied()
    }

    pub fn count(&self, bs: BsId) -> usize {
        self.by_bs.get(&bs).map_or(0, BTreeSet::len)
    }

    fn accumulate(&mut self, bs: BsId, at: SimTime) {
        let n = self.by_bs[&bs].len() as u128;
        let occ = self.occupancy.get_mut(&bs).expect("bs registered");
        occ.area += n * u128::from(at.since(occ.since).as_micros());
        occ.since = at;
    }

    /// Attaches `ue` to `bs`, dropping any prior association. The caller is
    /// responsible for checking that `bs` is ON.
    pub fn connect(&mut self, ue: UeId, bs: BsId, at: SimTime) -> Result<(), MmeError> {
        if !self.by_bs.contains_key(&bs) {
            return Err(MmeError::UnknownBs(bs));
        }
        self.disconnect(ue, at)?;
        self.accumulate(bs, at);
        self.by_bs.get_mut(&bs).expect("checked").insert(ue);
        self.serving.insert(ue, Some(bs));
        Ok(())
    }

    /// Returns the BS the UE was attached to, if any.
    pub fn disconnect(&mut self, ue: UeId, at: SimTime) -> Result<Option<BsId>, MmeError> {
        let prev = *self.serving.get(&ue).ok_or(MmeError::UnknownUe(ue))?;
        if let Some(b) = prev {
            self.accumulate(b, at);
            self.by_bs.get_mut(&b).expect("consistent").remove(&ue);
            self.serving.insert(ue, None);
        }
        Ok(prev)
    }

    pub fn is_consistent(&self) -> bool {
        let forward = self.by_bs.iter().all(|(b, ues)| ues.iter().all(|u| self.serving.get(u) == Some(&Some(*b))));
        let backward =
            self.serving.iter().all(|(u, s)| s.is_none_or(|b| self.by_bs.get(&b).is_some_and(|set| set.contains(u))));
        forward && backward
    }

    /// Time-weighted mean of the BS's UE count over `[birth, end]`.
    pub fn avg_connected(&self, bs: BsId, end: SimTime) -> f64 {
        let span = end.since(self.birth).as_micros();
        if span == 0 {
            return self.count(bs) as f64;
        }
        let occ = &self.occupancy[&bs];
        let area = occ.area + self.count(bs) as u128 * u128::from(end.since(occ.since).as_micros());
        area as f64 / span as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    AlwaysOn,
    RandomOff,
    UeAware,
    UeDataAware,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::AlwaysOn, PolicyKind::RandomOff, PolicyKind::UeAware, PolicyKind::UeDataAware];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::AlwaysOn => "always_on",
            PolicyKind::RandomOff => "random_off",
            PolicyKind::UeAware => "ue_aware",
            PolicyKind::UeDataAware => "ue_data_aware",
        }
    }

    fn switches_on_demand(self) -> bool {
        matches!(self, PolicyKind::UeAware | PolicyKind::UeDataAware)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        PolicyKind::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// Per-BS sleep windows `[X, X + length)` with integer-second `X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomOffSchedule {
    pub windows: BTreeMap<BsId, SimTime>,
    pub length: SimDuration,
}

impl RandomOffSchedule {
    pub const MAX_START_S: u32 = 8;

    /// One draw of `X` per BS, in BS order, from the policy stream.
    pub fn draw(bss: impl IntoIterator<Item = BsId>, rng: &mut RandomSource) -> Self {
        let windows =
            bss.into_iter().map(|b| (b, SimTime::from_secs(u64::from(rng.below(Self::MAX_START_S + 1))))).collect();
        RandomOffSchedule { windows, length: SimDuration::from_secs(2) }
    }

    pub fn window(&self, bs: BsId) -> Option<(SimTime, SimTime)> {
        self.windows.get(&bs).map(|&s| (s, s + self.length))
    }

    pub fn is_off(&self, bs: BsId, at: SimTime) -> bool {
        self.window(bs).is_some_and(|(s, e)| s <= at && at < e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyCommand {
    SwitchOff(BsId),
    SwitchOn(BsId),
    Handover { ue: UeId, from: Option<BsId>, to: BsId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    NoUes,
    Idle,
    Demand,
    Nearest,
    Evicted,
    WindowStart,
    WindowEnd,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::NoUes => "no_ues",
            Cause::Idle => "idle",
            Cause::Demand => "demand",
            Cause::Nearest => "nearest",
            Cause::Evicted => "evicted",
            Cause::WindowStart => "window_start",
            Cause::WindowEnd => "window_end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub command: PolicyCommand,
    pub cause: Cause,
}

/// One applied command, rendered as `t_us,command,args`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub at: SimTime,
    pub decision: Decision,
}

impl DecisionRecord {
    pub fn command_name(&self) -> &'static str {
        match self.decision.command {
            PolicyCommand::SwitchOff(_) => "switch_off",
            PolicyCommand::SwitchOn(_) => "switch_on",
            PolicyCommand::Handover { .. } => "handover",
        }
    }

    pub fn args(&self) -> String {
        let cause = self.decision.cause.as_str();
        match self.decision.command {
            PolicyCommand::SwitchOff(b) | PolicyCommand::SwitchOn(b) => format!("bs={b} cause={cause}"),
            PolicyCommand::Handover { ue, from, to } => {
                let from = from.map_or_else(|| "-".to_string(), |b| b.to_string());
                format!("ue={ue} from={from} to={to} cause={cause}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsView {
    pub id: BsId,
    pub pos: Position,
    pub off: bool,
    pub idle_time: SimDuration,
    pub connected: usize,
    /// Handovers in flight towards this BS.
    pub incoming: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeView {
    pub id: UeId,
    pub pos: Position,
    pub serving: Option<BsId>,
    pub in_handover: bool,
    /// Time since the UE last had data delivered or waiting.
    pub idle_time: SimDuration,
}

/// One policy evaluation over a snapshot of the network. Returned commands
/// are ordered switch-ons, switch-offs, then handovers.
pub fn evaluate(policy: PolicyKind, idle_off: SimDuration, bss: &[BsView], ues: &[UeView]) -> Vec<Decision> {
    if bss.is_empty() {
        return Vec::new();
    }
    let all = || bss.iter().map(|b| (b.id, b.pos));
    let view: BTreeMap<BsId, &BsView> = bss.iter().map(|b| (b.id, b)).collect();
    let needs_service = |u: &UeView| policy != PolicyKind::UeDataAware || u.idle_time < idle_off;

    let mut wanted = BTreeSet::new();
    if policy.switches_on_demand() {
        for u in ues.iter().filter(|u| needs_service(u)) {
            wanted.insert(nearest_bs(&u.pos, all()).expect("nonempty"));
        }
    }
    let switch_on: Vec<BsId> = wanted.iter().copied().filter(|b| view[b].off).collect();

    let mut switch_off: Vec<(BsId, Cause)> = Vec::new();
    if policy.switches_on_demand() {
        for b in bss.iter().filter(|b| !b.off && b.incoming == 0 && !wanted.contains(&b.id)) {
            if b.connected == 0 {
                switch_off.push((b.id, Cause::NoUes));
            } else if policy == PolicyKind::UeDataAware && b.idle_time >= idle_off {
                switch_off.push((b.id, Cause::Idle));
            }
        }
    }
    let going_off: BTreeSet<BsId> = switch_off.iter().map(|(b, _)| *b).collect();
    let on_after: Vec<(BsId, Position)> = bss
        .iter()
        .filter(|b| (!b.off || switch_on.contains(&b.id)) && !going_off.contains(&b.id))
        .map(|b| (b.id, b.pos))
        .collect();

    let mut out: Vec<Decision> =
        switch_on.iter().map(|&b| Decision { command: PolicyCommand::SwitchOn(b), cause: Cause::Demand }).collect();
    out.extend(switch_off.iter().map(|&(b, cause)| Decision { command: PolicyCommand::SwitchOff(b), cause }));
    for u in ues.iter().filter(|u| !u.in_handover) {
        let Ok(target) = nearest_bs(&u.pos, on_after.iter().copied()) else {
            continue;
        };
        if u.serving == Some(target) {
            continue;
        }
        let evicted = u.serving.is_some_and(|s| going_off.contains(&s));
        out.push(Decision {
            command: PolicyCommand::Handover { ue: u.id, from: u.serving, to: target },
            cause: if evicted { Cause::Evicted } else { Cause::Nearest },
        });
    }
    out
}

/// Commands for the start of a random off-window: the switch-off, then a
/// handover of every UE on `bs` to its nearest other ON BS.
pub fn window_start_commands(bs: BsId, bss: &[BsView], ues: &[UeView]) -> Vec<Decision> {
    let mut out = vec![Decision { command: PolicyCommand::SwitchOff(bs), cause: Cause::WindowStart }];
    let on: Vec<(BsId, Position)> = bss.iter().filter(|b| !b.off && b.id != bs).map(|b| (b.id, b.pos)).collect();
    for u in ues.iter().filter(|u| u.serving == Some(bs) && !u.in_handover) {
        if let Ok(to) = nearest_bs(&u.pos, on.iter().copied()) {
            out.push(Decision {
                command: PolicyCommand::Handover { ue: u.id, from: Some(bs), to },
                cause: Cause::Evicted,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn bs(id: u32, x: f64, off: bool, idle: f64, connected: usize) -> BsView {
        BsView {
            id: BsId(id),
            pos: Position { x, y: 0.0 },
            off,
            idle_time: SimDuration::from_secs_f64(idle),
            connected,
            incoming: 0,
        }
    }

    fn ue(id: u32, x: f64, serving: Option<u32>, idle: f64) -> UeView {
        UeView {
            id: UeId(id),
            pos: Position { x, y: 0.0 },
            serving: serving.map(BsId),
            in_handover: false,
            idle_time: SimDuration::from_secs_f64(idle),
        }
    }

    fn commands(d: Vec<Decision>) -> Vec<PolicyCommand> {
        d.into_iter().map(|d| d.command).collect()
    }

    const SEC: SimDuration = SimDuration::from_secs(1);

    #[test]
    fn table_moves_ue_between_bss() {
        let mut tab = ConnectionTable::new([BsId(1), BsId(2)], [UeId(1)], SimTime::ZERO);
        tab.connect(UeId(1), BsId(1), t(0.0)).unwrap();
        assert_eq!(tab.serving(UeId(1)), Some(BsId(1)));
        tab.connect(UeId(1), BsId(2), t(1.0)).unwrap();
        assert_eq!(tab.count(BsId(1)), 0);
        assert_eq!(tab.connected(BsId(2)).collect::<Vec<_>>(), vec![UeId(1)]);
        assert!(tab.is_consistent());
        assert!((tab.avg_connected(BsId(1), t(4.0)) - 0.25).abs() < 1e-12);
        assert!((tab.avg_connected(BsId(2), t(4.0)) - 0.75).abs() < 1e-12);
        assert_eq!(tab.connect(UeId(9), BsId(1), t(1.0)), Err(MmeError::UnknownUe(UeId(9))));
    }

    #[test]
    fn data_aware_switches_off_empty_bs() {
        let got = evaluate(PolicyKind::UeDataAware, SEC, &[bs(1, 0.0, false, 0.2, 0)], &[]);
        assert_eq!(commands(got), vec![PolicyCommand::SwitchOff(BsId(1))]);
    }

    #[test]
    fn data_aware_evicts_idle_ues_to_next_nearest() {
        let bss = [bs(1, 0.0, false, 1.5, 2), bs(2, 100.0, false, 0.0, 1), bs(3, 300.0, false, 0.0, 0)];
        let ues = [ue(1, 5.0, Some(1), 1.5), ue(2, -5.0, Some(1), 1.5), ue(3, 100.0, Some(2), 0.0)];
        let got = evaluate(PolicyKind::UeDataAware, SEC, &bss, &ues);
        assert_eq!(
            commands(got),
            vec![
                PolicyCommand::SwitchOff(BsId(1)),
                PolicyCommand::SwitchOff(BsId(3)),
                PolicyCommand::Handover { ue: UeId(1), from: Some(BsId(1)), to: BsId(2) },
                PolicyCommand::Handover { ue: UeId(2), from: Some(BsId(1)), to: BsId(2) },
            ]
        );
    }

    #[test]
    fn idle_ue_does_not_wake_its_nearest_bs() {
        let bss = [bs(1, 0.0, true, 0.0, 0), bs(2, 100.0, false, 0.0, 2)];
        let ues = [ue(1, 5.0, Some(2), 3.0), ue(2, 100.0, Some(2), 0.0)];
        assert!(evaluate(PolicyKind::UeDataAware, SEC, &bss, &ues).is_empty());
        let woke = evaluate(PolicyKind::UeAware, SEC, &bss, &ues);
        assert_eq!(
            commands(woke),
            vec![
                PolicyCommand::SwitchOn(BsId(1)),
                PolicyCommand::Handover { ue: UeId(1), from: Some(BsId(2)), to: BsId(1) },
            ]
        );
    }

    #[test]
    fn always_on_fixed_point() {
        let bss = [bs(1, 0.0, false, 5.0, 1), bs(2, 100.0, false, 5.0, 0)];
        let ues = [ue(1, 10.0, Some(1), 5.0)];
        assert!(evaluate(PolicyKind::AlwaysOn, SEC, &bss, &ues).is_empty());
        let moved = [ue(1, 90.0, Some(1), 5.0)];
        assert_eq!(
            commands(evaluate(PolicyKind::AlwaysOn, SEC, &bss, &moved)),
            vec![PolicyCommand::Handover { ue: UeId(1), from: Some(BsId(1)), to: BsId(2) }]
        );
    }

    #[test]
    fn equidistant_tie_is_stable() {
        let bss = [bs(1, -10.0, false, 0.0, 1), bs(2, 10.0, false, 0.0, 0)];
        let ues = [ue(1, 0.0, Some(1), 0.0)];
        assert!(commands(evaluate(PolicyKind::UeDataAware, SEC, &bss, &ues))
            .iter()
            .all(|c| !matches!(c, PolicyCommand::Handover { .. })));
    }

    #[test]
    fn incoming_handover_keeps_target_on() {
        let mut target = bs(2, 100.0, false, 0.0, 0);
        target.incoming = 1;
        let got = evaluate(PolicyKind::UeAware, SEC, &[target], &[]);
        assert!(got.is_empty());
    }

    #[test]
    fn window_start_evicts_to_nearest_on() {
        let bss = [bs(1, 0.0, false, 0.0, 1), bs(2, 100.0, true, 0.0, 0), bs(3, 200.0, false, 0.0, 0)];
        let ues = [ue(1, 1.0, Some(1), 0.0)];
        assert_eq!(
            commands(window_start_commands(BsId(1), &bss, &ues)),
            vec![
                PolicyCommand::SwitchOff(BsId(1)),
                PolicyCommand::Handover { ue: UeId(1), from: Some(BsId(1)), to: BsId(3) },
            ]
        );
    }

    #[test]
    fn random_windows() {
        let s = RandomOffSchedule {
            windows: [(BsId(1), t(3.0)), (BsId(2), t(0.0))].into(),
            length: SimDuration::from_secs(2),
        };
        assert!(!s.is_off(BsId(1), t(2.999999)));
        assert!(s.is_off(BsId(1), t(3.0)));
        assert!(s.is_off(BsId(1), t(4.999999)));
        assert!(!s.is_off(BsId(1), t(5.0)));
        assert!(s.is_off(BsId(2), t(0.0)));

        let mut seen = BTreeSet::new();
        for seed in 0..200 {
            let mut rng = RandomSource::new(seed, Stream::Policy);
            let d = RandomOffSchedule::draw((1..=10).map(BsId), &mut rng);
            for (_, (start, end)) in d.windows.keys().map(|b| (b, d.window(*b).unwrap())) {
                assert!(end <= t(11.24));
                assert_eq!(start.as_micros() % 1_000_000, 0);
                seen.insert(start.as_micros() / 1_000_000);
            }
        }
        assert_eq!(seen, (0..=8).collect());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.as_str().parse::<PolicyKind>(), Ok(p));
        }
        assert!("sometimes".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn decision_rows() {
        let r = DecisionRecord {
            at: t(1.0),
            decision: Decision {
                command: PolicyCommand::Handover { ue: UeId(3), from: None, to: BsId(2) },
                cause: Cause::Nearest,
            },
        };
        assert_eq!(r.command_name(), "handover");
        assert_eq!(r.args(), "ue=ue3 from=- to=bs2 cause=nearest");
    }

    fn arb_views() -> impl Strategy<Value = (Vec<BsView>, Vec<UeView>, usize)> {
        let bss = prop::collection::vec((0.0..1000.0f64, 0.0..1000.0f64, any::<bool>(), 0.0..3.0f64, 0usize..2), 1..6);
        let ues = prop::collection::vec((0.0..1000.0f64, 0.0..1000.0f64, 0.0..3.0f64, any::<bool>()), 0..8);
        (bss, ues, 0usize..4).prop_map(|(b, u, p)| {
            let bss: Vec<BsView> = b
                .into_iter()
                .enumerate()
                .map(|(i, (x, y, off, idle, inc))| BsView {
                    id: BsId(i as u32 + 1),
                    pos: Position { x, y },
                    off,
                    idle_time: SimDuration::from_secs_f64(idle),
                    connected: 0,
                    incoming: if off { 0 } else { inc },
                })
                .collect();
            let on: Vec<BsId> = bss.iter().filter(|b| !b.off).map(|b| b.id).collect();
            let mut bss = bss;
            let ues = u
                .into_iter()
                .enumerate()
                .map(|(i, (x, y, idle, attached))| {
                    let serving = if attached && !on.is_empty() { Some(on[i % on.len()]) } else { None };
                    if let Some(s) = serving {
                        bss.iter_mut().find(|b| b.id == s).unwrap().connected += 1;
                    }
                    UeView {
                        id: UeId(i as u32 + 1),
                        pos: Position { x, y },
                        serving,
                        in_handover: false,
                        idle_time: SimDuration::from_secs_f64(idle),
                    }
                })
                .collect();
            (bss, ues, p)
        })
    }

    proptest! {
        #[test]
        fn batches_are_consistent((bss, ues, p) in arb_views()) {
            let policy = PolicyKind::ALL[p];
            let out = commands(evaluate(policy, SEC, &bss, &ues));
            let offs: BTreeSet<BsId> = out.iter().filter_map(|c| match c { PolicyCommand::SwitchOff(b) => Some(*b), _ => None }).collect();
            let ons: BTreeSet<BsId> = out.iter().filter_map(|c| match c { PolicyCommand::SwitchOn(b) => Some(*b), _ => None }).collect();
            prop_assert!(offs.is_disjoint(&ons));
            let mut moved = BTreeSet::new();
            for c in &out {
                if let PolicyCommand::Handover { ue, from, to } = *c {
                    prop_assert!(!offs.contains(&to));
                    prop_assert!(ons.contains(&to) || bss.iter().any(|b| b.id == to && !b.off));
                    prop_assert_ne!(from, Some(to));
                    prop_assert!(moved.insert(ue));
                }
            }
            // Every UE left on a BS going off is moved, unless nothing stays on.
            let on_after = bss.iter().any(|b| (!b.off || ons.contains(&b.id)) && !offs.contains(&b.id));
            for u in &ues {
                if u.serving.is_some_and(|s| offs.contains(&s)) && on_after {
                    prop_assert!(moved.contains(&u.id));
                }
            }
            if matches!(policy, PolicyKind::AlwaysOn | PolicyKind::RandomOff) {
                prop_assert!(offs.is_empty() && ons.is_empty());
            }
        }

        #[test]
        fn table_stays_consistent(ops in prop::collection::vec((0u32..4, 0u32..5, any::<bool>()), 0..60)) {
            let mut tab = ConnectionTable::new((1..=4).map(BsId), (1..=3).map(UeId), SimTime::ZERO);
            for (i, (u, b, connect)) in ops.into_iter().enumerate() {
                let at = SimTime::from_millis(i as u64);
                let ue = UeId(u % 3 + 1);
                if connect && b > 0 {
                    tab.connect(ue, BsId(b), at).unwrap();
                } else {
                    tab.disconnect(ue, at).unwrap();
                }
                prop_assert!(tab.is_consistent());
                let total: usize = (1..=4).map(|b| tab.count(BsId(b))).sum();
                prop_assert!(total <= 3);
            }
            let end = SimTime::from_millis(100);
            for b in 1..=4 {
                let avg = tab.avg_connected(BsId(b), end);
                prop_assert!((0.0..=3.0).contains(&avg));
            }
        }
    }
}
