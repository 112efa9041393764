//! FIFO radio-job execution.
//!
//! A job is a sequence of PHY segments applied to one or more nodes at once
//! (a packet service touches the BS and the UE; each handover signaling leg
//! touches one node). Jobs queue at their owner node and run one at a time
//! per node. Segment boundaries are `RadioStep` events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::energy::PhyState;
use crate::engine::{Engine, EventHandle, SimDuration, SimTime};
use crate::event::SimEvent;
use crate::node::{BsId, NodeId, UeId};
use crate::phy::{PhyError, PhyLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HandoverId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalRole {
    Ue,
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    Packet { bs: BsId, ue: UeId, bytes: u32 },
    Signal { handover: HandoverId, role: SignalRole },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSegment {
    pub duration: SimDuration,
    pub states: Vec<(NodeId, PhyState)>,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: JobId,
    pub kind: JobKind,
    pub owner: NodeId,
    pub segments: Vec<JobSegment>,
    step: usize,
    started_at: Option<SimTime>,
    step_event: Option<EventHandle>,
}

impl Job {
    pub fn participants(&self) -> BTreeSet<NodeId> {
        let mut p: BTreeSet<NodeId> = self.segments.iter().flat_map(|s| s.states.iter().map(|(n, _)| *n)).collect();
        p.insert(self.owner);
        p
    }

    pub fn duration(&self) -> SimDuration {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn started_at(&self) -> Option<SimTime> {
        self.started_at
    }

    /// Time spent in each (node, state) pair, up to `now` for a job cut short.
    pub fn executed(&self, now: SimTime) -> Vec<(NodeId, PhyState, SimDuration)> {
        let Some(start) = self.started_at else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut t = start;
        for seg in &self.segments {
            if t >= now {
                break;
            }
            let end = t + seg.duration;
            let d = if end <= now { seg.duration } else { now.since(t) };
            for &(n, s) in &seg.states {
                out.push((n, s, d));
            }
            t = end;
        }
        out
    }
}

/// Scheduler for all radio jobs in a run.
#[derive(Debug, Default)]
pub struct RadioScheduler {
    jobs: BTreeMap<JobId, Job>,
    queues: BTreeMap<NodeId, VecDeque<JobId>>,
    busy: BTreeMap<NodeId, JobId>,
    to_idle: BTreeSet<NodeId>,
    next_id: u64,
}

impl RadioScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.jobs.get(&id)
    }

    pub fn current(&self, node: NodeId) -> Option<&Job> {
        self.busy.get(&node).and_then(|id| self.jobs.get(id))
    }

    pub fn is_busy(&self, node: NodeId) -> bool {
        self.busy.contains_key(&node)
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.queues.get(&node).map_or(0, VecDeque::len)
    }

    /// Completion time of a job appended now at `owner`, assuming no
    /// participant is held up elsewhere.
    pub fn projected_completion(&self, owner: NodeId, extra: SimDuration, now: SimTime) -> SimTime {
        let mut t = now;
        if let Some(cur) = self.current(owner) {
            let start = cur.started_at.expect("current job has started");
            t = t.max(start + cur.duration());
        }
        let queued: SimDuration =
            self.queues.get(&owner).into_iter().flatten().filter_map(|id| self.jobs.get(id)).map(Job::duration).sum();
        t + queued + extra
    }

    pub fn enqueue(&mut self, kind: JobKind, owner: NodeId, segments: Vec<JobSegment>) -> JobId {
        let id = JobId(self.next_id);
        self.next_id += 1;
        self.jobs.insert(id, Job { id, kind, owner, segments, step: 0, started_at: None, step_event: None });
        self.queues.entry(owner).or_default().push_back(id);
        id
    }

    /// Starts every queued job whose participants are all free, then parks
    /// any node left without work in IDLE. Returns jobs that completed on the
    /// spot (no segments).
    pub fn settle(
        &mut self,
        now: SimTime,
        phy: &mut PhyLayer,
        engine: &mut Engine<SimEvent>,
    ) -> Result<Vec<Job>, PhyError> {
        let mut instant = Vec::new();
        loop {
            let mut started_any = false;
            let owners: Vec<NodeId> = self.queues.iter().filter(|(_, q)| !q.is_empty()).map(|(n, _)| *n).collect();
            for owner in owners {
                if self.busy.contains_key(&owner) {
                    continue;
                }
                let Some(&head) = self.queues.get(&owner).and_then(|q| q.front()) else {
                    continue;
                };
                let parts = self.jobs[&head].participants();
                if parts.iter().any(|p| self.busy.contains_key(p)) {
                    continue;
                }
                self.queues.get_mut(&owner).expect("nonempty").pop_front();
                started_any = true;
                if let Some(done) = self.start(head, now, phy, engine)? {
                    instant.push(done);
                }
            }
            if !started_any {
                break;
            }
        }
        let idle: Vec<NodeId> = std::mem::take(&mut self.to_idle).into_iter().collect();
        for node in idle {
            if self.busy.contains_key(&node) {
                continue;
            }
            if let NodeId::Bs(bs) = node {
                if phy.is_off(bs) {
                    continue;
                }
            }
            if phy.state(node)?.is_active() {
                phy.notify_state_change(node, PhyState::Idle, now, engine)?;
            }
        }
        Ok(instant)
    }

    fn start(
        &mut self,
        id: JobId,
        now: SimTime,
        phy: &mut PhyLayer,
        engine: &mut Engine<SimEvent>,
    ) -> Result<Option<Job>, PhyError> {
        let job = self.jobs.get_mut(&id).expect("queued job exists");
        job.started_at = Some(now);
        if job.segments.is_empty() {
            let job = self.jobs.remove(&id).expect("exists");
            return Ok(Some(job));
        }
        for p in job.participants() {
            self.busy.insert(p, id);
        }
        let seg = &job.segments[0];
        for &(n, s) in &seg.states {
            phy.notify_state_change(n, s, now, engine)?;
        }
        job.step_event = Some(engine.schedule_in(seg.duration, SimEvent::RadioStep { job: id }));
        Ok(None)
    }

    /// Advances a job at a segment boundary. Returns the job once its last
    /// segment has ended; its nodes are released but stay in their last state
    /// until the next [`settle`](Self::settle).
    pub fn on_step(
        &mut self,
        id: JobId,
        now: SimTime,
        phy: &mut PhyLayer,
        engine: &mut Engine<SimEvent>,
    ) -> Result<Option<Job>, PhyError> {
        let Some(job) = self.jobs.get_mut(&id) else {
            return Ok(None);
        };
        job.step += 1;
        if job.step < job.segments.len() {
            let seg = &job.segments[job.step];
            for &(n, s) in &seg.states {
                phy.notify_state_change(n, s, now, engine)?;
            }
            job.step_event = Some(engine.schedule_in(seg.duration, SimEvent::RadioStep { job: id }));
            return Ok(None);
        }
        let job = self.jobs.remove(&id).expect("exists");
        self.release(&job);
        Ok(Some(job))
    }

    fn release(&mut self, job: &Job) {
        for p in job.participants() {
            if self.busy.get(&p) == Some(&job.id) {
                self.busy.remove(&p);
                self.to_idle.insert(p);
            }
        }
    }

    /// Removes a job whether queued or running. A running job stops at `now`.
    pub fn remove(&mut self, id: JobId, engine: &mut Engine<SimEvent>) -> Option<Job> {
        let job = self.jobs.remove(&id)?;
        if job.started_at.is_some() {
            if let Some(h) = job.step_event {
                engine.cancel(h);
            }
            self.release(&job);
        } else if let Some(q) = self.queues.get_mut(&job.owner) {
            q.retain(|j| *j != id);
        }
        Some(job)
    }

    /// Drops everything owned by or running on `node` (a BS being switched
    /// off). The node itself is not parked in IDLE.
    pub fn abort_node(&mut self, node: NodeId, engine: &mut Engine<SimEvent>) -> Vec<Job> {
        let mut ids: Vec<JobId> = Vec::new();
        if let Some(cur) = self.busy.get(&node) {
            ids.push(*cur);
        }
        ids.extend(self.queues.get(&node).into_iter().flatten().copied());
        let out: Vec<Job> = ids.into_iter().filter_map(|id| self.remove(id, engine)).collect();
        self.to_idle.remove(&node);
        out
    }

    /// Queued (not yet started) packets for `ue` at `bs`, in FIFO order.
    pub fn take_queued_packets(&mut self, bs: BsId, ue: UeId) -> Vec<Job> {
        let owner = NodeId::Bs(bs);
        let Some(q) = self.queues.get_mut(&owner) else {
            return Vec::new();
        };
        let mut taken = Vec::new();
        q.retain(|id| {
            let is_match = matches!(self.jobs[id].kind, JobKind::Packet { ue: u, .. } if u == ue);
            if is_match {
                taken.push(*id);
            }
            !is_match
        });
        taken.into_iter().filter_map(|id| self.jobs.remove(&id)).collect()
    }

    pub fn pending_jobs(&self) -> usize {
        self.jobs.len()
    }
}
