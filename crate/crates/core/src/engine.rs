//! Discrete-event kernel: integer-microsecond clock and a cancellable event
//! queue dispatched in `(fire_at, seq)` order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// A point on the simulation clock, in whole microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(u64);

/// A non-negative span of simulated time, in whole microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimDuration(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SEC)
    }

    /// Rounds to the nearest microsecond. Negative or non-finite input maps to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime(secs_to_micros(secs))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    /// Time elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimDuration(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimDuration(s * MICROS_PER_SEC)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        SimDuration(secs_to_micros(secs))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

fn secs_to_micros(secs: f64) -> u64 {
    if secs.is_finite() && secs > 0.0 {
        (secs * MICROS_PER_SEC as f64).round() as u64
    } else {
        0
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl AddAssign for SimDuration {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    fn sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 - rhs.0)
    }
}

impl std::iter::Sum for SimDuration {
    fn sum<I: Iterator<Item = SimDuration>>(iter: I) -> SimDuration {
        iter.fold(SimDuration::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

/// Payloads carried by the queue must be able to describe themselves for the
/// event log.
pub trait EventPayload {
    fn kind_name(&self) -> &'static str;
    fn summary(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

/// Opaque cancellation token returned by [`Engine::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

#[derive(Debug, Error)]
pub enum EngineError<E: std::error::Error + 'static> {
    #[error("cannot schedule at {at}: clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("run_until called while a run is in progress")]
    AlreadyRunning,
    #[error("handler failed at {at} while dispatching {kind} (seq {seq})")]
    Handler {
        at: SimTime,
        seq: u64,
        kind: &'static str,
        #[source]
        source: E,
    },
}

/// Error raised by [`Engine::schedule`] alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot schedule at {at}: clock is already at {now}")]
pub struct PastSchedule {
    pub at: SimTime,
    pub now: SimTime,
}

pub trait EventHandler<P> {
    type Error: std::error::Error + 'static;

    fn handle(&mut self, event: Event<P>, engine: &mut Engine<P>) -> Result<(), Self::Error>;
}

struct Queued<P> {
    key: Reverse<(SimTime, u64)>,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Queued<P>>,
    pending: HashSet<u64>,
    running: bool,
    log: Option<Vec<String>>,
}

impl<P: EventPayload> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: EventPayload> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            running: false,
            log: None,
        }
    }

    /// Records every dispatched event as `t_us,kind,payload_summary`.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<EventHandle, PastSchedule> {
        if fire_at < self.now {
            return Err(PastSchedule { at: fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued { key: Reverse((fire_at, seq)), payload });
        self.pending.insert(seq);
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimDuration, payload: P) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was still pending; it will never fire.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    fn pop_due(&mut self, end: SimTime) -> Option<Event<P>> {
        loop {
            let top = self.heap.peek()?;
            let Reverse((at, seq)) = top.key;
            if at > end {
                return None;
            }
            let q = self.heap.pop().expect("peeked");
            if self.pending.remove(&seq) {
                return Some(Event { fire_at: at, seq, payload: q.payload });
            }
        }
    }

    /// Dispatches every pending event with `fire_at <= end`, then leaves the
    /// clock at `end`.
    pub fn run_until<H>(&mut self, end: SimTime, handler: &mut H) -> Result<usize, EngineError<H::Error>>
    where
        H: EventHandler<P>,
    {
        if self.running {
            return Err(EngineError::AlreadyRunning);
        }
        if end < self.now {
            return Err(EngineError::ScheduleInPast { at: end, now: self.now });
        }
        self.running = true;
        let mut dispatched = 0;
        while let Some(ev) = self.pop_due(end) {
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            if let Some(log) = self.log.as_mut() {
                log.push(format!("{},{},{}", ev.fire_at.as_micros(), ev.payload.kind_name(), ev.payload.summary()));
            }
            let (at, seq, kind) = (ev.fire_at, ev.seq, ev.payload.kind_name());
            if let Err(source) = handler.handle(ev, self) {
                self.running = false;
                return Err(EngineError::Handler { at, seq, kind, source });
            }
            dispatched += 1;
        }
        self.now = end;
        self.running = false;
        Ok(dispatched)
    }

    pub fn event_log(&self) -> Option<&[String]> {
        self.log.as_deref()
    }
}
