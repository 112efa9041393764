//! Node positions, constant-position and bounded random-walk mobility, and the
//! nearest-BS association rule.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimDuration;
use crate::node::BsId;
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance_sq(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Position) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

/// Axis-aligned rectangle, inclusive on all edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub const fn square(side: f64) -> Self {
        Rect { min_x: 0.0, min_y: 0.0, max_x: side, max_y: side }
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn is_valid(&self) -> bool {
        self.min_x.is_finite()
            && self.min_y.is_finite()
            && self.max_x.is_finite()
            && self.max_y.is_finite()
            && self.max_x >= self.min_x
            && self.max_y >= self.min_y
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(self.min_x, self.max_x), p.y.clamp(self.min_y, self.max_y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityKind {
    ConstantPosition,
    RandomWalk2D { speed: f64, heading_change_period: SimDuration },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilitySpec {
    pub kind: MobilityKind,
    pub bounds: Rect,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("nearest-BS query with an empty candidate set")]
    NoCandidates,
    #[error("invalid mobility spec: {0}")]
    InvalidMobility(String),
}

impl MobilitySpec {
    pub fn constant(bounds: Rect) -> Self {
        MobilitySpec { kind: MobilityKind::ConstantPosition, bounds }
    }

    pub fn random_walk(speed: f64, heading_change_period: SimDuration, bounds: Rect) -> Self {
        MobilitySpec { kind: MobilityKind::RandomWalk2D { speed, heading_change_period }, bounds }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if !self.bounds.is_valid() {
            return Err(TopologyError::InvalidMobility("degenerate bounds".into()));
        }
        if let MobilityKind::RandomWalk2D { speed, heading_change_period } = self.kind {
            if !(speed.is_finite() && speed >= 0.0) {
                return Err(TopologyError::InvalidMobility(format!("speed {speed} must be >= 0")));
            }
            if heading_change_period.is_zero() {
                return Err(TopologyError::InvalidMobility("heading change period must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub pos: Position,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    /// Walk time left before the heading is redrawn.
    pub heading_remaining: SimDuration,
}

impl MobilityState {
    /// Initial state; random walkers draw their first heading from `rng`.
    pub fn new(pos: Position, spec: &MobilitySpec, rng: &mut RandomSource) -> Self {
        match spec.kind {
            MobilityKind::ConstantPosition => MobilityState { pos, heading: 0.0, heading_remaining: SimDuration::ZERO },
            MobilityKind::RandomWalk2D { heading_change_period, .. } => {
                MobilityState { pos, heading: rng.uniform(0.0, TAU), heading_remaining: heading_change_period }
            }
        }
    }
}

/// Advances one node by `dt`. Random walkers move in straight segments,
/// redrawing the heading each time a full period of walking has elapsed, and
/// reflect off the bounds.
pub fn step(state: MobilityState, spec: &MobilitySpec, dt: SimDuration, rng: &mut RandomSource) -> MobilityState {
    let MobilityKind::RandomWalk2D { speed, heading_change_period } = spec.kind else {
        return state;
    };
    let mut st = state;
    let mut remaining = dt;
    while !remaining.is_zero() {
        if st.heading_remaining.is_zero() {
            st.heading = rng.uniform(0.0, TAU);
            st.heading_remaining = heading_change_period;
        }
        let seg = remaining.min(st.heading_remaining);
        let t = seg.as_secs_f64();
        let (vx, vy) = (speed * st.heading.cos(), speed * st.heading.sin());
        let (x, vx) = fold(st.pos.x, vx, t, spec.bounds.min_x, spec.bounds.max_x);
        let (y, vy) = fold(st.pos.y, vy, t, spec.bounds.min_y, spec.bounds.max_y);
        st.pos = spec.bounds.clamp(Position::new(x, y));
        if vx != 0.0 || vy != 0.0 {
            st.heading = normalize_heading(vy.atan2(vx));
        }
        remaining = remaining - seg;
        st.heading_remaining = st.heading_remaining - seg;
    }
    st
}

fn normalize_heading(h: f64) -> f64 {
    let h = h.rem_euclid(TAU);
    if h >= TAU {
        0.0
    } else {
        h
    }
}

/// Moves along one axis for `t` seconds, folding the path back into
/// `[lo, hi]`. Returns the new coordinate and velocity (sign flipped after an
/// odd number of bounces).
fn fold(x: f64, v: f64, t: f64, lo: f64, hi: f64) -> (f64, f64) {
    let len = hi - lo;
    if len <= 0.0 {
        return (lo, v);
    }
    let raw = x + v * t - lo;
    let m = raw.rem_euclid(2.0 * len);
    if m <= len {
        (lo + m, v)
    } else {
        (hi - (m - len), -v)
    }
}

/// Closest candidate by Euclidean distance; ties go to the smallest id.
pub fn nearest_bs<I>(ue_pos: &Position, candidates: I) -> Result<BsId, TopologyError>
where
    I: IntoIterator<Item = (BsId, Position)>,
{
    candidates
        .into_iter()
        .map(|(id, p)| (ue_pos.distance_sq(&p), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(TopologyError::NoCandidates)
}

pub fn place_uniform(n: usize, bounds: &Rect, rng: &mut RandomSource) -> Vec<Position> {
    (0..n)
        .map(|_| {
            let x = rng.uniform(bounds.min_x, bounds.max_x);
            let y = rng.uniform(bounds.min_y, bounds.max_y);
            Position::new(x, y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn walk(speed: f64) -> MobilitySpec {
        MobilitySpec::random_walk(speed, SimDuration::from_secs(1), Rect::square(1000.0))
    }

    fn rng() -> RandomSource {
        RandomSource::new(1, Stream::Mobility(0))
    }

    #[test]
    fn constant_position_is_identity() {
        let spec = MobilitySpec::constant(Rect::square(1000.0));
        let st = MobilityState { pos: Position::new(3.0, 4.0), heading: 1.0, heading_remaining: SimDuration::ZERO };
        assert_eq!(step(st, &spec, SimDuration::from_secs(7), &mut rng()), st);
    }

    #[test]
    fn straight_line_step() {
        let st = MobilityState {
            pos: Position::new(100.0, 100.0),
            heading: 0.0,
            heading_remaining: SimDuration::from_secs(5),
        };
        let out = step(st, &walk(5.0), SimDuration::from_secs(1), &mut rng());
        assert!((out.pos.x - 105.0).abs() < 1e-9);
        assert!((out.pos.y - 100.0).abs() < 1e-9);
    }

    /// Walks in tiny increments, bouncing whenever a step leaves the segment.
    fn fold_oracle(mut x: f64, mut v: f64, t: f64, lo: f64, hi: f64) -> (f64, f64) {
        let n = 100_000;
        let dt = t / n as f64;
        for _ in 0..n {
            x += v * dt;
            if x > hi {
                x = 2.0 * hi - x;
                v = -v;
            } else if x < lo {
                x = 2.0 * lo - x;
                v = -v;
            }
        }
        (x, v)
    }

    #[test]
    fn reflection_at_boundary() {
        let st = MobilityState {
            pos: Position::new(999.0, 500.0),
            heading: 0.0,
            heading_remaining: SimDuration::from_secs(5),
        };
        let out = step(st, &walk(5.0), SimDuration::from_secs(1), &mut rng());
        let (ox, ov) = fold_oracle(999.0, 5.0, 1.0, 0.0, 1000.0);
        assert!((ox - 996.0).abs() < 1e-6);
        assert!(ov < 0.0);
        assert!((out.pos.x - 996.0).abs() < 1e-9);
        assert!((out.pos.y - 500.0).abs() < 1e-9);
        assert!((out.heading - PI).abs() < 1e-12);
    }

    #[test]
    fn fold_matches_oracle_over_many_bounces() {
        for &(x, v, t) in &[(10.0, -7.0, 3.0), (500.0, 900.0, 2.5), (1.0, 1234.5, 4.0)] {
            let (a, av) = fold(x, v, t, 0.0, 1000.0);
            let (b, bv) = fold_oracle(x, v, t, 0.0, 1000.0);
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
            assert_eq!(av.signum(), bv.signum());
        }
    }

    #[test]
    fn heading_redrawn_after_period() {
        let st = MobilityState {
            pos: Position::new(500.0, 500.0),
            heading: 0.0,
            heading_remaining: SimDuration::from_millis(500),
        };
        let out = step(st, &walk(5.0), SimDuration::from_secs(1), &mut rng());
        assert_eq!(out.heading_remaining, SimDuration::from_millis(500));
        assert_ne!(out.heading, 0.0);
    }

    #[test]
    fn nearest_examples() {
        let a = (BsId(1), Position::new(10.0, 0.0));
        let b = (BsId(2), Position::new(0.0, 5.0));
        let origin = Position::new(0.0, 0.0);
        assert_eq!(nearest_bs(&origin, [a, b]).unwrap(), BsId(2));
        assert_eq!(nearest_bs(&origin, [a]).unwrap(), BsId(1));
        let c = (BsId(3), Position::new(-10.0, 0.0));
        assert_eq!(nearest_bs(&origin, [c, a]).unwrap(), BsId(1));
        assert_eq!(nearest_bs(&origin, []), Err(TopologyError::NoCandidates));
    }

    #[test]
    fn place_uniform_basics() {
        let b = Rect::square(1000.0);
        assert!(place_uniform(0, &b, &mut rng()).is_empty());
        let pts = place_uniform(1000, &b, &mut RandomSource::new(42, Stream::Topology));
        let mean_x = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        assert!((mean_x - 500.0).abs() <= 50.0, "mean {mean_x}");
        assert!(pts.iter().all(|p| b.contains(p)));
        let again = place_uniform(1000, &b, &mut RandomSource::new(42, Stream::Topology));
        assert_eq!(pts, again);
    }

    fn bs_set() -> impl Strategy<Value = Vec<(BsId, Position)>> {
        proptest::collection::vec((0.0..1000.0f64, 0.0..1000.0f64), 1..12)
            .prop_map(|v| v.into_iter().enumerate().map(|(i, (x, y))| (BsId(i as u32), Position::new(x, y))).collect())
    }

    proptest! {
        #[test]
        fn walk_stays_in_bounds(
            x in 0.0..1000.0f64, y in 0.0..1000.0f64,
            heading in 0.0..TAU, speed in 0.0..500.0f64,
            dt_us in 1u64..20_000_000, seed in any::<u64>(),
        ) {
            let st = MobilityState { pos: Position::new(x, y), heading, heading_remaining: SimDuration::from_millis(300) };
            let mut r = RandomSource::new(seed, Stream::Mobility(0));
            let out = step(st, &walk(speed), SimDuration::from_micros(dt_us), &mut r);
            prop_assert!(Rect::square(1000.0).contains(&out.pos));
            prop_assert!((0.0..TAU).contains(&out.heading));
        }

        #[test]
        fn nearest_is_permutation_invariant(cands in bs_set(), ux in 0.0..1000.0f64, uy in 0.0..1000.0f64, rot in 0usize..12) {
            let u = Position::new(ux, uy);
            let mut shuffled = cands.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(nearest_bs(&u, cands.clone()).unwrap(), nearest_bs(&u, shuffled).unwrap());
        }

        #[test]
        fn nearest_matches_linear_scan(cands in bs_set(), ux in 0.0..1000.0f64, uy in 0.0..1000.0f64) {
            let u = Position::new(ux, uy);
            let got = nearest_bs(&u, cands.clone()).unwrap();
            let got_d = cands.iter().find(|c| c.0 == got).unwrap().1.distance(&u);
            for (_, p) in &cands {
                prop_assert!(got_d <= p.distance(&u));
            }
            let mut sorted: Vec<(f64, BsId)> = cands.iter().map(|(id, p)| (p.distance_sq(&u), *id)).collect();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            prop_assert_eq!(got, sorted[0].1);
        }
    }
}
