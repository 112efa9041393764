//! Downlink constant-bitrate flows, the packet service model and per-node
//! data-activity clocks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::PhyState;
use crate::engine::{SimDuration, SimTime};
use crate::node::{NodeId, UeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("flow for {ue}: packet size must be > 0")]
    EmptyPacket { ue: UeId },
    #[error("flow for {ue}: inter-packet interval must be > 0")]
    ZeroInterval { ue: UeId },
    #[error("flow for {ue}: start {start} after stop {stop}")]
    Inverted { ue: UeId, start: SimTime, stop: SimTime },
    #[error("service model: {0}")]
    Service(String),
}

/// A downlink UDP-style constant-bitrate application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowSpec {
    pub ue: UeId,
    pub packet_size: u32,
    pub interval: SimDuration,
    pub start: SimTime,
    pub stop: SimTime,
}

impl FlowSpec {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.packet_size == 0 {
            return Err(FlowError::EmptyPacket { ue: self.ue });
        }
        if self.interval.is_zero() {
            return Err(FlowError::ZeroInterval { ue: self.ue });
        }
        if self.start > self.stop {
            return Err(FlowError::Inverted { ue: self.ue, start: self.start, stop: self.stop });
        }
        Ok(())
    }

    /// Arrival time of packet `index`, or `None` past `stop`.
    pub fn arrival(&self, index: u64) -> Option<SimTime> {
        let t = SimTime::from_micros(self.start.as_micros() + index * self.interval.as_micros());
        (t <= self.stop).then_some(t)
    }

    /// `start, start + interval, ...` up to and including `stop`.
    pub fn arrivals(&self) -> impl Iterator<Item = SimTime> + '_ {
        (0u64..).map_while(|i| self.arrival(i))
    }
}

/// Abstract air interface: every packet costs a fixed control exchange
/// followed by `size * 8 / data_rate` of data transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub data_rate_bps: u64,
    pub ctrl_overhead: SimDuration,
}

impl Default for ServiceModel {
    fn default() -> Self {
        ServiceModel { data_rate_bps: 100_000_000, ctrl_overhead: SimDuration::from_micros(200) }
    }
}

/// PHY segments of one radio job, shared by its participants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub duration: SimDuration,
    pub bs_state: PhyState,
    pub ue_state: PhyState,
}

impl ServiceModel {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.data_rate_bps == 0 {
            return Err(FlowError::Service("data rate must be > 0".into()));
        }
        Ok(())
    }

    /// Rounded to the nearest microsecond.
    pub fn airtime(&self, bytes: u32) -> SimDuration {
        let bits = u128::from(bytes) * 8 * 1_000_000;
        let rate = u128::from(self.data_rate_bps);
        SimDuration::from_micros(((bits + rate / 2) / rate) as u64)
    }

    /// Control exchange (RX_CTRL on both ends) then data (BS TX, UE RX_DATA).
    /// Zero-length segments are omitted.
    pub fn packet_segments(&self, bytes: u32) -> Vec<Segment> {
        [
            Segment { duration: self.ctrl_overhead, bs_state: PhyState::RxCtrl, ue_state: PhyState::RxCtrl },
            Segment { duration: self.airtime(bytes), bs_state: PhyState::Tx, ue_state: PhyState::RxData },
        ]
        .into_iter()
        .filter(|s| !s.duration.is_zero())
        .collect()
    }

    pub fn service_time(&self, bytes: u32) -> SimDuration {
        self.ctrl_overhead + self.airtime(bytes)
    }
}

/// Last data activity per node, for idle-time queries.
#[derive(Debug, Clone, Default)]
pub struct ActivityClock {
    birth: BTreeMap<NodeId, SimTime>,
    last: BTreeMap<NodeId, SimTime>,
}

impl ActivityClock {
    pub fn register(&mut self, node: NodeId, birth: SimTime) {
        self.birth.insert(node, birth);
    }

    pub fn touch(&mut self, node: NodeId, at: SimTime) {
        let e = self.last.entry(node).or_insert(at);
        if at > *e {
            *e = at;
        }
    }

    pub fn last_activity(&self, node: NodeId) -> Option<SimTime> {
        self.last.get(&node).copied()
    }

    /// `now - last activity`, or `now - birth` for a node never active.
    pub fn idle_time(&self, node: NodeId, now: SimTime) -> SimDuration {
        let since = self.last.get(&node).or_else(|| self.birth.get(&node)).copied().unwrap_or(SimTime::ZERO);
        now.since(since)
    }
}
