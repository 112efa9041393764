//! PHY state machines for every node, fed through a single state-change sink
//! that keeps the energy ledgers and the BS deep-sleep timers in step.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::energy::{EnergyLedger, LedgerError, NodeClass, PhyState, PowerProfile};
use crate::engine::{Engine, EventHandle, SimDuration, SimTime};
use crate::event::SimEvent;
use crate::node::{BsId, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhyError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} registered twice")]
    Duplicate(NodeId),
    #[error("{node}: {source}")]
    Ledger {
        node: NodeId,
        #[source]
        source: LedgerError,
    },
    #[error("{0} is switched off; radio activity rejected")]
    BsOff(BsId),
    #[error("{0}: DEEP_SLEEP may only be entered from IDLE (was {1})")]
    DeepSleepNotFromIdle(BsId, PhyState),
    #[error("{0}: OFF is only reachable through switch_off")]
    OffViaNotify(BsId),
}

#[derive(Debug, Clone)]
struct NodePhy {
    ledger: EnergyLedger,
    sleep_timer: Option<EventHandle>,
}

#[derive(Debug, Clone)]
pub struct PhyLayer {
    nodes: BTreeMap<NodeId, NodePhy>,
    deep_sleep_after: SimDuration,
}

impl PhyLayer {
    pub fn new(deep_sleep_after: SimDuration) -> Self {
        PhyLayer { nodes: BTreeMap::new(), deep_sleep_after }
    }

    pub fn deep_sleep_after(&self) -> SimDuration {
        self.deep_sleep_after
    }

    /// Registers a BS in IDLE at `birth` and arms its deep-sleep timer.
    pub fn add_bs(
        &mut self,
        bs: BsId,
        profile: PowerProfile,
        birth: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<(), PhyError> {
        let node = NodeId::Bs(bs);
        self.insert(node, NodeClass::Bs, profile, birth)?;
        self.arm_sleep_timer(bs, birth, engine);
        Ok(())
    }

    pub fn add_ue(&mut self, node: NodeId, profile: PowerProfile, birth: SimTime) -> Result<(), PhyError> {
        self.insert(node, NodeClass::Ue, profile, birth)
    }

    fn insert(
        &mut self,
        node: NodeId,
        class: NodeClass,
        profile: PowerProfile,
        birth: SimTime,
    ) -> Result<(), PhyError> {
        if self.nodes.contains_key(&node) {
            return Err(PhyError::Duplicate(node));
        }
        let ledger = EnergyLedger::new(class, profile, PhyState::Idle, birth)
            .map_err(|source| PhyError::Ledger { node, source })?;
        self.nodes.insert(node, NodePhy { ledger, sleep_timer: None });
        Ok(())
    }

    fn get(&self, node: NodeId) -> Result<&NodePhy, PhyError> {
        self.nodes.get(&node).ok_or(PhyError::UnknownNode(node))
    }

    fn get_mut(&mut self, node: NodeId) -> Result<&mut NodePhy, PhyError> {
        self.nodes.get_mut(&node).ok_or(PhyError::UnknownNode(node))
    }

    pub fn state(&self, node: NodeId) -> Result<PhyState, PhyError> {
        Ok(self.get(node)?.ledger.current())
    }

    pub fn is_off(&self, bs: BsId) -> bool {
        matches!(self.state(NodeId::Bs(bs)), Ok(PhyState::Off))
    }

    pub fn ledger(&self, node: NodeId) -> Option<&EnergyLedger> {
        self.nodes.get(&node).map(|n| &n.ledger)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &EnergyLedger)> {
        self.nodes.iter().map(|(id, n)| (*id, &n.ledger))
    }

    fn arm_sleep_timer(&mut self, bs: BsId, at: SimTime, engine: &mut Engine<SimEvent>) {
        let fire = at + self.deep_sleep_after;
        let handle = engine.schedule(fire, SimEvent::DeepSleepTimer { bs }).expect("timer lies in the future");
        if let Some(n) = self.nodes.get_mut(&NodeId::Bs(bs)) {
            if let Some(old) = n.sleep_timer.replace(handle) {
                engine.cancel(old);
            }
        }
    }

    fn disarm_sleep_timer(&mut self, bs: BsId, engine: &mut Engine<SimEvent>) {
        if let Some(n) = self.nodes.get_mut(&NodeId::Bs(bs)) {
            if let Some(h) = n.sleep_timer.take() {
                engine.cancel(h);
            }
        }
    }

    fn apply(&mut self, node: NodeId, to: PhyState, at: SimTime) -> Result<PhyState, PhyError> {
        self.get_mut(node)?.ledger.transition(to, at).map_err(|source| PhyError::Ledger { node, source })
    }

    /// The state-change sink. Closes the open dwell interval and enters `to`.
    /// A BS entering IDLE arms its deep-sleep timer; leaving IDLE disarms it.
    pub fn notify_state_change(
        &mut self,
        node: NodeId,
        to: PhyState,
        at: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<PhyState, PhyError> {
        let from = self.state(node)?;
        if let NodeId::Bs(bs) = node {
            if to == PhyState::Off {
                return Err(PhyError::OffViaNotify(bs));
            }
            if from == PhyState::Off {
                return Err(PhyError::BsOff(bs));
            }
            if to == PhyState::DeepSleep && from != PhyState::Idle {
                return Err(PhyError::DeepSleepNotFromIdle(bs, from));
            }
        }
        self.apply(node, to, at)?;
        if let NodeId::Bs(bs) = node {
            match (from == PhyState::Idle, to == PhyState::Idle) {
                (false, true) => self.arm_sleep_timer(bs, at, engine),
                (true, false) => self.disarm_sleep_timer(bs, engine),
                _ => {}
            }
        }
        Ok(from)
    }

    /// Deep-sleep timer expiry. Stale timers (BS no longer IDLE) are ignored.
    pub fn on_deep_sleep_timer(
        &mut self,
        bs: BsId,
        at: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<bool, PhyError> {
        let n = self.get_mut(NodeId::Bs(bs))?;
        n.sleep_timer = None;
        if n.ledger.current() != PhyState::Idle {
            return Ok(false);
        }
        self.notify_state_change(NodeId::Bs(bs), PhyState::DeepSleep, at, engine)?;
        Ok(true)
    }

    /// Returns false (and changes nothing) when the BS is already OFF.
    pub fn switch_off(&mut self, bs: BsId, at: SimTime, engine: &mut Engine<SimEvent>) -> Result<bool, PhyError> {
        if self.state(NodeId::Bs(bs))? == PhyState::Off {
            return Ok(false);
        }
        self.disarm_sleep_timer(bs, engine);
        self.apply(NodeId::Bs(bs), PhyState::Off, at)?;
        Ok(true)
    }

    /// OFF -> IDLE, re-arming the deep-sleep timer. Returns false for a BS
    /// that is not OFF.
    pub fn switch_on(&mut self, bs: BsId, at: SimTime, engine: &mut Engine<SimEvent>) -> Result<bool, PhyError> {
        if self.state(NodeId::Bs(bs))? != PhyState::Off {
            return Ok(false);
        }
        self.apply(NodeId::Bs(bs), PhyState::Idle, at)?;
        self.arm_sleep_timer(bs, at, engine);
        Ok(true)
    }

    pub fn finalize(
        &mut self,
        node: NodeId,
        at: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> Result<&EnergyLedger, PhyError> {
        if let NodeId::Bs(bs) = node {
            self.disarm_sleep_timer(bs, engine);
        }
        let n = self.get_mut(node)?;
        n.ledger.finalize(at).map_err(|source| PhyError::Ledger { node, source })?;
        Ok(&n.ledger)
    }

    pub fn finalize_all(&mut self, at: SimTime, engine: &mut Engine<SimEvent>) -> Result<(), PhyError> {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            self.finalize(id, at, engine)?;
        }
        Ok(())
    }
}
