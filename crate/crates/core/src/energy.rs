//! PHY states, per-state power profiles and the dwell-time energy ledger.
//!
//! Power is held in whole milliwatts and time in whole microseconds, so every
//! energy figure is an exact integer number of nanojoules
//! (1 mW x 1 us = 1 nJ). The incremental ledger and the trace-based
//! recomputation must therefore agree exactly, not merely within a tolerance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhyState {
    Idle,
    RxCtrl,
    RxData,
    Tx,
    DeepSleep,
    Off,
}

impl PhyState {
    pub const ALL: [PhyState; 6] =
        [PhyState::Idle, PhyState::RxCtrl, PhyState::RxData, PhyState::Tx, PhyState::DeepSleep, PhyState::Off];
    pub const UE_STATES: [PhyState; 4] = [PhyState::Idle, PhyState::RxCtrl, PhyState::RxData, PhyState::Tx];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhyState::Idle => "IDLE",
            PhyState::RxCtrl => "RX_CTRL",
            PhyState::RxData => "RX_DATA",
            PhyState::Tx => "TX",
            PhyState::DeepSleep => "DEEP_SLEEP",
            PhyState::Off => "OFF",
        }
    }

    /// Radio activity, as opposed to the resting states.
    pub fn is_active(self) -> bool {
        matches!(self, PhyState::RxCtrl | PhyState::RxData | PhyState::Tx)
    }
}

impl fmt::Display for PhyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhyState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhyState::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown PHY state {s:?}"))
    }
}

/// UEs only have the four radio states; BSs add DEEP_SLEEP and OFF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Ue,
    Bs,
}

impl NodeClass {
    pub fn allows(self, s: PhyState) -> bool {
        match self {
            NodeClass::Bs => true,
            NodeClass::Ue => !matches!(s, PhyState::DeepSleep | PhyState::Off),
        }
    }
}

/// Power draw in whole milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Power(pub u64);

impl Power {
    pub const fn milliwatts(mw: u64) -> Self {
        Power(mw)
    }

    /// Rounds to the nearest milliwatt; rejects negative or non-finite input.
    pub fn from_watts(w: f64) -> Option<Self> {
        (w.is_finite() && w >= 0.0).then(|| Power((w * 1000.0).round() as u64))
    }

    pub fn as_watts(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn over(self, d: SimDuration) -> Energy {
        Energy(self.0 * d.as_micros())
    }
}

/// Energy in whole nanojoules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(pub u64);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    pub fn from_joules(j: f64) -> Self {
        Energy((j * 1e9).round() as u64)
    }

    pub const fn as_nanojoules(self) -> u64 {
        self.0
    }

    pub fn as_joules(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl std::ops::Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, |a, b| a + b)
    }
}

/// Exact decimal joules, e.g. `149.788000000`.
impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / 1_000_000_000, self.0 % 1_000_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerProfile {
    draw: [Power; 6],
}

impl PowerProfile {
    pub fn new(entries: &[(PhyState, Power)]) -> Self {
        let mut draw = [Power::default(); 6];
        for &(s, p) in entries {
            draw[s.index()] = p;
        }
        PowerProfile { draw }
    }

    pub fn default_ue() -> Self {
        PowerProfile::new(&[
            (PhyState::Idle, Power(45)),
            (PhyState::RxCtrl, Power(175)),
            (PhyState::RxData, Power(350)),
            (PhyState::Tx, Power(350)),
        ])
    }

    /// OFF draws nothing; DEEP_SLEEP is the low-power standby.
    pub fn default_bs() -> Self {
        PowerProfile::new(&[
            (PhyState::Idle, Power(86_300)),
            (PhyState::RxCtrl, Power(138_900)),
            (PhyState::RxData, Power(138_900)),
            (PhyState::Tx, Power(742_200)),
            (PhyState::DeepSleep, Power(6_200)),
            (PhyState::Off, Power(0)),
        ])
    }

    pub fn power(&self, s: PhyState) -> Power {
        self.draw[s.index()]
    }

    pub fn set(&mut self, s: PhyState, p: Power) {
        self.draw[s.index()] = p;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChangeRecord {
    pub at: SimTime,
    pub from: PhyState,
    pub to: PhyState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("state change at {at} precedes current interval start {since}")]
    TimeRegression { at: SimTime, since: SimTime },
    #[error("{class:?} nodes have no {state} state")]
    StateNotAllowed { class: NodeClass, state: PhyState },
    #[error("ledger already finalized at {0}")]
    AlreadyFinalized(SimTime),
    #[error("ledger not finalized")]
    NotFinalized,
}

/// Dwell time and energy per PHY state for one node, plus the full trace of
/// state changes that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    class: NodeClass,
    profile: PowerProfile,
    birth: SimTime,
    initial: PhyState,
    current: PhyState,
    entered_at: SimTime,
    dwell: [SimDuration; 6],
    energy: [Energy; 6],
    trace: Vec<StateChangeRecord>,
    finalized_at: Option<SimTime>,
}

impl EnergyLedger {
    pub fn new(
        class: NodeClass,
        profile: PowerProfile,
        initial: PhyState,
        birth: SimTime,
    ) -> Result<Self, LedgerError> {
        if !class.allows(initial) {
            return Err(LedgerError::StateNotAllowed { class, state: initial });
        }
        Ok(EnergyLedger {
            class,
            profile,
            birth,
            initial,
            current: initial,
            entered_at: birth,
            dwell: [SimDuration::ZERO; 6],
            energy: [Energy::ZERO; 6],
            trace: Vec::new(),
            finalized_at: None,
        })
    }

    pub fn class(&self) -> NodeClass {
        self.class
    }

    pub fn profile(&self) -> &PowerProfile {
        &self.profile
    }

    pub fn current(&self) -> PhyState {
        self.current
    }

    pub fn entered_at(&self) -> SimTime {
        self.entered_at
    }

    pub fn birth(&self) -> SimTime {
        self.birth
    }

    pub fn initial_state(&self) -> PhyState {
        self.initial
    }

    pub fn trace(&self) -> &[StateChangeRecord] {
        &self.trace
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized_at.is_some()
    }

    fn close_interval(&mut self, at: SimTime) -> Result<(), LedgerError> {
        if let Some(t) = self.finalized_at {
            return Err(LedgerError::AlreadyFinalized(t));
        }
        if at < self.entered_at {
            return Err(LedgerError::TimeRegression { at, since: self.entered_at });
        }
        let d = at.since(self.entered_at);
        let i = self.current.index();
        self.dwell[i] += d;
        self.energy[i] += self.profile.power(self.current).over(d);
        self.entered_at = at;
        Ok(())
    }

    /// Closes the open interval and enters `to`. Returns the state left.
    ///
    /// Self-transitions only split the interval. Several changes at one
    /// instant are folded into a single trace record so the trace stays
    /// strictly time-ordered.
    pub fn transition(&mut self, to: PhyState, at: SimTime) -> Result<PhyState, LedgerError> {
        if !self.class.allows(to) {
            return Err(LedgerError::StateNotAllowed { class: self.class, state: to });
        }
        self.close_interval(at)?;
        let from = self.current;
        if from == to {
            return Ok(from);
        }
        match self.trace.last_mut() {
            Some(last) if last.at == at => {
                if last.from == to {
                    self.trace.pop();
                } else {
                    last.to = to;
                }
            }
            _ => self.trace.push(StateChangeRecord { at, from, to }),
        }
        self.current = to;
        Ok(from)
    }

    pub fn finalize(&mut self, at: SimTime) -> Result<(), LedgerError> {
        self.close_interval(at)?;
        self.finalized_at = Some(at);
        Ok(())
    }

    pub fn finalized_at(&self) -> Option<SimTime> {
        self.finalized_at
    }

    /// Closed dwell so far (excludes the open interval until finalize).
    pub fn dwell(&self, s: PhyState) -> SimDuration {
        self.dwell[s.index()]
    }

    pub fn energy(&self, s: PhyState) -> Energy {
        self.energy[s.index()]
    }

    pub fn total_energy(&self) -> Energy {
        self.energy.iter().copied().sum()
    }

    pub fn total_dwell(&self) -> SimDuration {
        self.dwell.iter().copied().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("record {index}: time {at} precedes previous change at {prev}")]
    TimeRegression { index: usize, at: SimTime, prev: SimTime },
    #[error("record {index}: leaves {from} but node was in {expected}")]
    StateMismatch { index: usize, from: PhyState, expected: PhyState },
    #[error("end {end} precedes last change at {last}")]
    EndBeforeLastChange { end: SimTime, last: SimTime },
}

/// Energy of a node recomputed directly from its state-change trace by summing
/// `power x interval length` over every interval between `birth` and `end`.
/// Independent of [`EnergyLedger`]'s incremental bookkeeping.
pub fn recompute_from_trace(
    initial: PhyState,
    birth: SimTime,
    trace: &[StateChangeRecord],
    profile: &PowerProfile,
    end: SimTime,
) -> Result<Energy, TraceError> {
    let mut state = initial;
    let mut since = birth;
    let mut total: u128 = 0;
    for (index, rec) in trace.iter().enumerate() {
        if rec.at < since || (index > 0 && rec.at == since) {
            return Err(TraceError::TimeRegression { index, at: rec.at, prev: since });
        }
        if rec.from != state {
            return Err(TraceError::StateMismatch { index, from: rec.from, expected: state });
        }
        let len = u128::from(rec.at.as_micros() - since.as_micros());
        total += u128::from(profile.power(state).0) * len;
        state = rec.to;
        since = rec.at;
    }
    if end < since {
        return Err(TraceError::EndBeforeLastChange { end, last: since });
    }
    total += u128::from(profile.power(state).0) * u128::from(end.as_micros() - since.as_micros());
    Ok(Energy(u64::try_from(total).expect("energy exceeds u64 nanojoules")))
}
