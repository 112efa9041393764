//! The simulated network: glues the engine, PHY layer, radio scheduler and
//! SmartMME together and drives a run to completion.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::energy::{Energy, EnergyLedger, PhyState, PowerProfile};
use crate::engine::{Engine, EngineError, Event, EventHandler, SimDuration, SimTime};
use crate::event::SimEvent;
use crate::mme::{
    evaluate, window_start_commands, BsView, Cause, ConnectionTable, Decision, DecisionRecord, MmeError, PolicyCommand,
    PolicyKind, RandomOffSchedule, UeView,
};
use crate::mobility::{self, MobilitySpec, MobilityState, Position, TopologyError};
use crate::node::{BsId, NodeId, UeId};
use crate::phy::{PhyError, PhyLayer};
use crate::radio::{HandoverId, Job, JobId, JobKind, JobSegment, RadioScheduler, SignalRole};
use crate::rng::{RandomSource, Stream};
use crate::traffic::{ActivityClock, FlowSpec, ServiceModel};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Mme(#[from] MmeError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("packet for {ue} offered to {bs}, which is switched off")]
    ServeThroughOff { bs: BsId, ue: UeId },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Everything needed to build a world; positions already resolved.
#[derive(Debug, Clone)]
pub struct WorldSpec {
    pub policy: PolicyKind,
    pub seed: u64,
    pub end: SimTime,
    pub bss: Vec<(BsId, Position)>,
    pub ues: Vec<(UeId, Position, MobilitySpec)>,
    pub flows: Vec<FlowSpec>,
    pub ue_profile: PowerProfile,
    pub bs_profile: PowerProfile,
    pub service: ServiceModel,
    pub deep_sleep_after: SimDuration,
    pub idle_off: SimDuration,
    pub tick: SimDuration,
    pub ho_ctrl: SimDuration,
    pub mobility_step: SimDuration,
    pub off_window: SimDuration,
    /// Overrides the per-seed draw under `RandomOff`.
    pub random_schedule: Option<RandomOffSchedule>,
    pub record_events: bool,
}

#[derive(Debug, Clone)]
struct UeRuntime {
    mobility: MobilityState,
    spec: MobilitySpec,
    rng: RandomSource,
    held: VecDeque<u32>,
    last_demand: Option<SimTime>,
    handover: Option<HandoverId>,
    handovers: u64,
}

#[derive(Debug, Clone)]
struct InFlight {
    ue: UeId,
    to: BsId,
    legs: Vec<JobId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub packets_offered: u64,
    pub packets_served: u64,
    pub drops: u64,
    pub handovers: u64,
    pub handovers_aborted: u64,
    /// Energy spent by BSs in handover signaling legs.
    pub bs_signaling: Energy,
    pub ue_signaling: Energy,
}

#[derive(Debug, Clone)]
pub struct BsOutcome {
    pub id: BsId,
    pub position: Position,
    pub ledger: EnergyLedger,
    pub avg_connected_ues: f64,
}

#[derive(Debug, Clone)]
pub struct UeOutcome {
    pub id: UeId,
    pub ledger: EnergyLedger,
    pub handovers: u64,
}

/// Finalized state of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub policy: PolicyKind,
    pub seed: u64,
    pub end: SimTime,
    pub bss: Vec<BsOutcome>,
    pub ues: Vec<UeOutcome>,
    pub stats: RunStats,
    pub decisions: Vec<DecisionRecord>,
    pub random_schedule: Option<RandomOffSchedule>,
    pub event_log: Option<Vec<String>>,
}

impl RunOutcome {
    pub fn bs_total(&self) -> Energy {
        self.bss.iter().map(|b| b.ledger.total_energy()).sum()
    }

    pub fn ue_total(&self) -> Energy {
        self.ues.iter().map(|u| u.ledger.total_energy()).sum()
    }
}

pub struct World {
    policy: PolicyKind,
    end: SimTime,
    tick: SimDuration,
    idle_off: SimDuration,
    ho_ctrl: SimDuration,
    mobility_step: SimDuration,
    service: ServiceModel,
    phy: PhyLayer,
    radio: RadioScheduler,
    table: ConnectionTable,
    activity: ActivityClock,
    bs_pos: BTreeMap<BsId, Position>,
    ues: BTreeMap<UeId, UeRuntime>,
    flows: Vec<FlowSpec>,
    handovers: BTreeMap<HandoverId, InFlight>,
    next_handover: u64,
    schedule: Option<RandomOffSchedule>,
    decisions: Vec<DecisionRecord>,
    stats: RunStats,
}

/// A world plus the engine that drives it.
pub struct Simulation {
    pub engine: Engine<SimEvent>,
    pub world: World,
    seed: u64,
}

impl Simulation {
    pub fn new(spec: WorldSpec) -> Result<Self, WorldError> {
        let mut engine = Engine::new();
        if spec.record_events {
            engine = engine.with_event_log();
        }
        let birth = SimTime::ZERO;
        let mut phy = PhyLayer::new(spec.deep_sleep_after);
        let mut activity = ActivityClock::default();
        for &(bs, _) in &spec.bss {
            phy.add_bs(bs, spec.bs_profile, birth, &mut engine)?;
            activity.register(NodeId::Bs(bs), birth);
        }
        let mut ues = BTreeMap::new();
        for (i, (ue, pos, mspec)) in spec.ues.iter().enumerate() {
            phy.add_ue(NodeId::Ue(*ue), spec.ue_profile, birth)?;
            activity.register(NodeId::Ue(*ue), birth);
            let mut rng = RandomSource::new(spec.seed, Stream::Mobility(i as u32));
            let mobility = MobilityState::new(*pos, mspec, &mut rng);
            ues.insert(
                *ue,
                UeRuntime {
                    mobility,
                    spec: *mspec,
                    rng,
                    held: VecDeque::new(),
                    last_demand: None,
                    handover: None,
                    handovers: 0,
                },
            );
        }
        let table = ConnectionTable::new(spec.bss.iter().map(|b| b.0), spec.ues.iter().map(|u| u.0), birth);
        let schedule = (spec.policy == PolicyKind::RandomOff).then(|| {
            spec.random_schedule.clone().unwrap_or_else(|| {
                let mut rng = RandomSource::new(spec.seed, Stream::Policy);
                let mut s = RandomOffSchedule::draw(spec.bss.iter().map(|b| b.0), &mut rng);
                s.length = spec.off_window;
                s
            })
        });
        let mut world = World {
            policy: spec.policy,
            end: spec.end,
            tick: spec.tick,
            idle_off: spec.idle_off,
            ho_ctrl: spec.ho_ctrl,
            mobility_step: spec.mobility_step,
            service: spec.service,
            phy,
            radio: RadioScheduler::new(),
            table,
            activity,
            bs_pos: spec.bss.iter().copied().collect(),
            ues,
            flows: spec.flows.clone(),
            handovers: BTreeMap::new(),
            next_handover: 0,
            schedule,
            decisions: Vec::new(),
            stats: RunStats::default(),
        };

        if let Some(s) = world.schedule.clone() {
            for (&bs, &start) in &s.windows {
                let stop = start + s.length;
                if start == birth {
                    world.apply(
                        vec![Decision { command: PolicyCommand::SwitchOff(bs), cause: Cause::WindowStart }],
                        birth,
                        &mut engine,
                    )?;
                } else if start < spec.end {
                    engine.schedule(start, SimEvent::OffWindowStart { bs }).expect("future");
                }
                if stop < spec.end {
                    engine.schedule(stop, SimEvent::OffWindowEnd { bs }).expect("future");
                }
            }
        }
        world.attach_initial(birth)?;
        if !spec.mobility_step.is_zero()
            && spec.ues.iter().any(|u| u.2.kind != mobility::MobilityKind::ConstantPosition)
        {
            world.schedule_if_due(&mut engine, birth + spec.mobility_step, SimEvent::MobilityStep);
        }
        if !spec.tick.is_zero() {
            engine.schedule(birth, SimEvent::PolicyTick).expect("future");
        }
        for (i, f) in world.flows.iter().enumerate() {
            if f.start <= spec.end {
                engine.schedule(f.start, SimEvent::PacketArrival { flow: i, index: 0 }).expect("future");
            }
        }
        Ok(Simulation { engine, world, seed: spec.seed })
    }

    pub fn run(mut self) -> Result<RunOutcome, EngineError<WorldError>> {
        let end = self.world.end;
        self.engine.run_until(end, &mut self.world)?;
        self.finish().map_err(|source| EngineError::Handler { at: end, seq: u64::MAX, kind: "Finalize", source })
    }

    fn finish(mut self) -> Result<RunOutcome, WorldError> {
        let end = self.world.end;
        let w = &mut self.world;
        let open: Vec<JobId> = w.handovers.values().flat_map(|h| h.legs.iter().copied()).collect();
        for id in open {
            if let Some(job) = w.radio.job(id).cloned() {
                w.account_signaling(&job, end);
            }
        }
        w.phy.finalize_all(end, &mut self.engine)?;
        let bss = w
            .bs_pos
            .iter()
            .map(|(&id, &position)| BsOutcome {
                id,
                position,
                ledger: w.phy.ledger(NodeId::Bs(id)).expect("registered").clone(),
                avg_connected_ues: w.table.avg_connected(id, end),
            })
            .collect();
        let ues = w
            .ues
            .iter()
            .map(|(&id, rt)| UeOutcome {
                id,
                ledger: w.phy.ledger(NodeId::Ue(id)).expect("registered").clone(),
                handovers: rt.handovers,
            })
            .collect();
        Ok(RunOutcome {
            policy: w.policy,
            seed: self.seed,
            end,
            bss,
            ues,
            stats: w.stats,
            decisions: std::mem::take(&mut w.decisions),
            random_schedule: w.schedule.clone(),
            event_log: self.engine.event_log().map(<[String]>::to_vec),
        })
    }
}

impl World {
    pub fn table(&self) -> &ConnectionTable {
        &self.table
    }

    pub fn phy(&self) -> &PhyLayer {
        &self.phy
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn ue_position(&self, ue: UeId) -> Option<Position> {
        self.ues.get(&ue).map(|u| u.mobility.pos)
    }

    fn schedule_if_due(&self, engine: &mut Engine<SimEvent>, at: SimTime, ev: SimEvent) {
        if at < self.end {
            engine.schedule(at, ev).expect("scheduled forward");
        }
    }

    fn on_bss(&self) -> Vec<(BsId, Position)> {
        self.bs_pos.iter().filter(|(b, _)| !self.phy.is_off(**b)).map(|(b, p)| (*b, *p)).collect()
    }

    fn attach_initial(&mut self, at: SimTime) -> Result<(), WorldError> {
        let on = self.on_bss();
        let ids: Vec<UeId> = self.ues.keys().copied().collect();
        for ue in ids {
            if let Ok(bs) = mobility::nearest_bs(&self.ues[&ue].mobility.pos, on.iter().copied()) {
                self.connect(ue, bs, at)?;
            }
        }
        Ok(())
    }

    /// The connection callback: rejects attachment to an OFF BS.
    pub fn connect(&mut self, ue: UeId, bs: BsId, at: SimTime) -> Result<(), WorldError> {
        if self.phy.is_off(bs) {
            return Err(MmeError::BsOff { ue, bs }.into());
        }
        self.table.connect(ue, bs, at)?;
        Ok(())
    }

    fn views(&self, now: SimTime) -> (Vec<BsView>, Vec<UeView>) {
        let mut incoming: BTreeMap<BsId, usize> = BTreeMap::new();
        for h in self.handovers.values() {
            *incoming.entry(h.to).or_default() += 1;
        }
        let bss = self
            .bs_pos
            .iter()
            .map(|(&id, &pos)| {
                let serving =
                    matches!(self.radio.current(NodeId::Bs(id)), Some(j) if matches!(j.kind, JobKind::Packet { .. }));
                BsView {
                    id,
                    pos,
                    off: self.phy.is_off(id),
                    idle_time: if serving { SimDuration::ZERO } else { self.activity.idle_time(NodeId::Bs(id), now) },
                    connected: self.table.count(id),
                    incoming: incoming.get(&id).copied().unwrap_or(0),
                }
            })
            .collect();
        let ues = self
            .ues
            .iter()
            .map(|(&id, rt)| {
                let mut idle = self.activity.idle_time(NodeId::Ue(id), now);
                if let Some(d) = rt.last_demand {
                    idle = idle.min(now.since(d));
                }
                UeView {
                    id,
                    pos: rt.mobility.pos,
                    serving: self.table.serving(id),
                    in_handover: rt.handover.is_some(),
                    idle_time: idle,
                }
            })
            .collect();
        (bss, ues)
    }

    fn packet_segments(&self, bs: BsId, ue: UeId, bytes: u32) -> Vec<JobSegment> {
        self.service
            .packet_segments(bytes)
            .into_iter()
            .map(|s| JobSegment {
                duration: s.duration,
                states: vec![(NodeId::Bs(bs), s.bs_state), (NodeId::Ue(ue), s.ue_state)],
            })
            .collect()
    }

    /// Queues one packet for service at `bs` and returns its projected
    /// completion time.
    pub fn serve_packet(&mut self, bs: BsId, ue: UeId, bytes: u32, at: SimTime) -> Result<SimTime, WorldError> {
        if self.phy.is_off(bs) {
            return Err(WorldError::ServeThroughOff { bs, ue });
        }
        let done = self.radio.projected_completion(NodeId::Bs(bs), self.service.service_time(bytes), at);
        let segs = self.packet_segments(bs, ue, bytes);
        self.radio.enqueue(JobKind::Packet { bs, ue, bytes }, NodeId::Bs(bs), segs);
        Ok(done)
    }

    fn on_packet(
        &mut self,
        flow: usize,
        index: u64,
        now: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<(), WorldError> {
        let f = self.flows[flow];
        if let Some(next) = f.arrival(index + 1) {
            if next <= self.end {
                engine.schedule(next, SimEvent::PacketArrival { flow, index: index + 1 }).expect("forward");
            }
        }
        self.stats.packets_offered += 1;
        let rt = self.ues.get_mut(&f.ue).expect("validated flow");
        rt.last_demand = Some(now);
        if rt.handover.is_some() {
            rt.held.push_back(f.packet_size);
        } else if let Some(bs) = self.table.serving(f.ue) {
            self.serve_packet(bs, f.ue, f.packet_size, now)?;
        } else {
            self.stats.drops += 1;
        }
        self.settle(now, engine)
    }

    fn settle(&mut self, now: SimTime, engine: &mut Engine<SimEvent>) -> Result<(), WorldError> {
        loop {
            let instant = self.radio.settle(now, &mut self.phy, engine)?;
            if instant.is_empty() {
                return Ok(());
            }
            for job in instant {
                self.job_done(job, now)?;
            }
        }
    }

    fn account_signaling(&mut self, job: &Job, now: SimTime) {
        for (node, state, d) in job.executed(now) {
            let e = self.phy.ledger(node).expect("registered").profile().power(state).over(d);
            match node {
                NodeId::Bs(_) => self.stats.bs_signaling += e,
                NodeId::Ue(_) => self.stats.ue_signaling += e,
            }
        }
    }

    fn job_done(&mut self, job: Job, now: SimTime) -> Result<(), WorldError> {
        match job.kind {
            JobKind::Packet { bs, ue, .. } => {
                self.activity.touch(NodeId::Bs(bs), now);
                self.activity.touch(NodeId::Ue(ue), now);
                self.stats.packets_served += 1;
            }
            JobKind::Signal { handover, .. } => {
                self.account_signaling(&job, now);
                let h = self.handovers.get_mut(&handover).expect("leg of a live handover");
                h.legs.retain(|l| *l != job.id);
                if h.legs.is_empty() {
                    self.complete_handover(handover, now)?;
                }
            }
        }
        Ok(())
    }

    fn complete_handover(&mut self, id: HandoverId, now: SimTime) -> Result<(), WorldError> {
        let h = self.handovers.remove(&id).expect("live handover");
        self.connect(h.ue, h.to, now)?;
        let rt = self.ues.get_mut(&h.ue).expect("known ue");
        rt.handover = None;
        rt.handovers += 1;
        self.stats.handovers += 1;
        let held: Vec<u32> = rt.held.drain(..).collect();
        for bytes in held {
            self.serve_packet(h.to, h.ue, bytes, now)?;
        }
        Ok(())
    }

    fn abort_handover(
        &mut self,
        id: HandoverId,
        now: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<(), WorldError> {
        let h = self.handovers.remove(&id).expect("live handover");
        for leg in h.legs {
            if let Some(job) = self.radio.remove(leg, engine) {
                self.account_signaling(&job, now);
            }
        }
        self.stats.handovers_aborted += 1;
        let rt = self.ues.get_mut(&h.ue).expect("known ue");
        rt.handover = None;
        let held: Vec<u32> = rt.held.drain(..).collect();
        match self.table.serving(h.ue) {
            Some(bs) => {
                for bytes in held {
                    self.serve_packet(bs, h.ue, bytes, now)?;
                }
            }
            None => self.stats.drops += held.len() as u64,
        }
        Ok(())
    }

    /// Starts the signaling exchange moving `ue` to `to`. Returns the
    /// earliest completion, or `None` when nothing was started.
    pub fn handover(
        &mut self,
        ue: UeId,
        to: BsId,
        now: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<Option<SimTime>, WorldError> {
        let from = self.table.serving(ue);
        let rt = &self.ues[&ue];
        if from == Some(to) || rt.handover.is_some() || self.phy.is_off(to) {
            return Ok(None);
        }
        let mut resend: Vec<u32> = Vec::new();
        if let Some(cur) = self.radio.current(NodeId::Ue(ue)).map(|j| j.id) {
            if let Some(Job { kind: JobKind::Packet { bytes, .. }, .. }) = self.radio.remove(cur, engine) {
                resend.push(bytes);
            }
        }
        if let Some(src) = from {
            for job in self.radio.take_queued_packets(src, ue) {
                if let JobKind::Packet { bytes, .. } = job.kind {
                    resend.push(bytes);
                }
            }
        }
        let id = HandoverId(self.next_handover);
        self.next_handover += 1;
        let ho = self.ho_ctrl;
        let seg =
            |node: NodeId, state: PhyState, d: SimDuration| JobSegment { duration: d, states: vec![(node, state)] };
        let mut legs = vec![(
            SignalRole::Ue,
            NodeId::Ue(ue),
            vec![seg(NodeId::Ue(ue), PhyState::RxCtrl, ho), seg(NodeId::Ue(ue), PhyState::Tx, ho)],
        )];
        legs.push((SignalRole::Target, NodeId::Bs(to), vec![seg(NodeId::Bs(to), PhyState::RxCtrl, ho + ho)]));
        if let Some(src) = from.filter(|b| !self.phy.is_off(*b)) {
            legs.push((SignalRole::Source, NodeId::Bs(src), vec![seg(NodeId::Bs(src), PhyState::RxCtrl, ho)]));
        }
        let mut ids = Vec::new();
        for (role, owner, segs) in legs {
            let segs: Vec<JobSegment> = segs.into_iter().filter(|s| !s.duration.is_zero()).collect();
            ids.push(self.radio.enqueue(JobKind::Signal { handover: id, role }, owner, segs));
        }
        self.handovers.insert(id, InFlight { ue, to, legs: ids });
        let rt = self.ues.get_mut(&ue).expect("known ue");
        rt.handover = Some(id);
        for bytes in resend.into_iter().rev() {
            rt.held.push_front(bytes);
        }
        Ok(Some(now + ho + ho))
    }

    fn switch_off(&mut self, bs: BsId, now: SimTime, engine: &mut Engine<SimEvent>) -> Result<(), WorldError> {
        let mut resend: BTreeMap<UeId, Vec<u32>> = BTreeMap::new();
        let mut failed = Vec::new();
        for job in self.radio.abort_node(NodeId::Bs(bs), engine) {
            match job.kind {
                JobKind::Packet { ue, bytes, .. } => resend.entry(ue).or_default().push(bytes),
                JobKind::Signal { handover, role } => {
                    self.account_signaling(&job, now);
                    if let Some(h) = self.handovers.get_mut(&handover) {
                        h.legs.retain(|l| *l != job.id);
                        if role == SignalRole::Target {
                            failed.push(handover);
                        } else if h.legs.is_empty() {
                            self.complete_handover(handover, now)?;
                        }
                    }
                }
            }
        }
        let attached: Vec<UeId> = self.table.connected(bs).collect();
        for ue in attached {
            self.table.disconnect(ue, now)?;
        }
        self.phy.switch_off(bs, now, engine)?;
        for id in failed {
            if self.handovers.contains_key(&id) {
                self.abort_handover(id, now, engine)?;
            }
        }
        for (ue, packets) in resend {
            let rt = self.ues.get_mut(&ue).expect("known ue");
            if rt.handover.is_some() {
                for bytes in packets.into_iter().rev() {
                    rt.held.push_front(bytes);
                }
            } else {
                // Parked until a handover command in the same batch picks the UE up.
                rt.held.extend(packets);
            }
        }
        Ok(())
    }

    /// Applies one command batch, re-validating each command against the
    /// current state; stale commands are skipped.
    pub fn apply(
        &mut self,
        batch: Vec<Decision>,
        now: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<(), WorldError> {
        for d in batch {
            let applied = match d.command {
                PolicyCommand::SwitchOn(bs) => self.phy.switch_on(bs, now, engine)?,
                PolicyCommand::SwitchOff(bs) => {
                    let on = !self.phy.is_off(bs);
                    if on {
                        self.switch_off(bs, now, engine)?;
                    }
                    on
                }
                PolicyCommand::Handover { ue, to, .. } => {
                    let from = self.table.serving(ue);
                    let started = self.handover(ue, to, now, engine)?.is_some();
                    if started {
                        self.decisions.push(DecisionRecord {
                            at: now,
                            decision: Decision { command: PolicyCommand::Handover { ue, from, to }, cause: d.cause },
                        });
                    }
                    continue;
                }
            };
            if applied {
                self.decisions.push(DecisionRecord { at: now, decision: d });
            }
        }
        // UEs left without a BS and without a handover lose whatever they held.
        for (ue, rt) in self.ues.iter_mut() {
            if rt.handover.is_none() && self.table.serving(*ue).is_none() && !rt.held.is_empty() {
                self.stats.drops += rt.held.len() as u64;
                rt.held.clear();
            }
        }
        self.settle(now, engine)?;
        self.check_invariants()
    }

    fn check_invariants(&self) -> Result<(), WorldError> {
        if !self.table.is_consistent() {
            return Err(WorldError::Invariant("connection table maps disagree".into()));
        }
        for &bs in self.bs_pos.keys() {
            if self.phy.is_off(bs) && self.table.count(bs) > 0 {
                return Err(WorldError::Invariant(format!("UEs attached to switched-off {bs}")));
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, now: SimTime, engine: &mut Engine<SimEvent>) -> Result<(), WorldError> {
        let (bss, ues) = self.views(now);
        let batch = evaluate(self.policy, self.idle_off, &bss, &ues);
        self.apply(batch, now, engine)?;
        self.schedule_if_due(engine, now + self.tick, SimEvent::PolicyTick);
        Ok(())
    }

    fn on_mobility(&mut self, now: SimTime, engine: &mut Engine<SimEvent>) {
        let dt = self.mobility_step;
        for rt in self.ues.values_mut() {
            rt.mobility = mobility::step(rt.mobility, &rt.spec, dt, &mut rt.rng);
        }
        self.schedule_if_due(engine, now + dt, SimEvent::MobilityStep);
    }
}

impl EventHandler<SimEvent> for World {
    type Error = WorldError;

    fn handle(&mut self, ev: Event<SimEvent>, engine: &mut Engine<SimEvent>) -> Result<(), WorldError> {
        let now = ev.fire_at;
        match ev.payload {
            SimEvent::PacketArrival { flow, index } => self.on_packet(flow, index, now, engine),
            SimEvent::PolicyTick => self.on_tick(now, engine),
            SimEvent::MobilityStep => {
                self.on_mobility(now, engine);
                Ok(())
            }
            SimEvent::DeepSleepTimer { bs } => {
                self.phy.on_deep_sleep_timer(bs, now, engine)?;
                Ok(())
            }
            SimEvent::OffWindowStart { bs } => {
                let (bss, ues) = self.views(now);
                self.apply(window_start_commands(bs, &bss, &ues), now, engine)
            }
            SimEvent::OffWindowEnd { bs } => self.apply(
                vec![Decision { command: PolicyCommand::SwitchOn(bs), cause: Cause::WindowEnd }],
                now,
                engine,
            ),
            SimEvent::RadioStep { job } => {
                if let Some(done) = self.radio.on_step(job, now, &mut self.phy, engine)? {
                    self.job_done(done, now)?;
                }
                self.settle(now, engine)
            }
        }
    }
}
