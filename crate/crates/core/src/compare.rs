//! Cross-scenario comparison: all four presets per seed, the energy
//! ordering check and a breakdown of the random-vs-default gap.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{Energy, PhyState};
use crate::mme::{Cause, PolicyCommand};
use crate::scenario::{preset, run, Preset, ScenarioConfig, ScenarioError};
use crate::world::RunOutcome;

/// Where the extra energy of random switching goes, relative to the
/// always-on baseline on the same topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBreakdown {
    pub gap_j: f64,
    /// Extra BS energy spent in handover signaling.
    pub signaling_j: f64,
    /// BS energy spent in IDLE right after each off-window ends.
    pub rewarm_j: f64,
    /// `(signaling + rewarm) / gap`; `None` when random is not costlier.
    pub explained: Option<f64>,
    pub random_handovers: u64,
    pub default_handovers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub data_aware_j: f64,
    pub ue_aware_j: f64,
    pub default_j: f64,
    pub random_j: f64,
    pub ordering_holds: bool,
    pub violations: String,
    pub gap_j: f64,
    pub signaling_j: f64,
    pub rewarm_j: f64,
    pub explained: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SeedComparison {
    pub seed: u64,
    /// Indexed like [`Preset::ALL`].
    pub runs: Vec<(Preset, RunOutcome)>,
}

impl SeedComparison {
    pub fn outcome(&self, p: Preset) -> &RunOutcome {
        &self.runs.iter().find(|(q, _)| *q == p).expect("all presets run").1
    }

    pub fn bs_total(&self, p: Preset) -> Energy {
        self.outcome(p).bs_total()
    }

    /// Broken links of `data_aware <= ue_aware <= default < random`.
    pub fn violations(&self) -> Vec<String> {
        let e = |p| self.bs_total(p);
        let mut v = Vec::new();
        if e(Preset::DataAware) > e(Preset::UeAware) {
            v.push("data_aware > ue_aware".to_string());
        }
        if e(Preset::UeAware) > e(Preset::Default) {
            v.push("ue_aware > default".to_string());
        }
        if e(Preset::Default) >= e(Preset::Random) {
            v.push("default >= random".to_string());
        }
        v
    }

    pub fn gap(&self) -> GapBreakdown {
        let random = self.outcome(Preset::Random);
        let default = self.outcome(Preset::Default);
        let gap_j = random.bs_total().as_joules() - default.bs_total().as_joules();
        let signaling_j = random.stats.bs_signaling.as_joules() - default.stats.bs_signaling.as_joules();
        let rewarm_j = rewarm_energy(random).as_joules();
        GapBreakdown {
            gap_j,
            signaling_j,
            rewarm_j,
            explained: (gap_j > 0.0).then(|| (signaling_j + rewarm_j) / gap_j),
            random_handovers: random.stats.handovers,
            default_handovers: default.stats.handovers,
        }
    }

    pub fn row(&self) -> ComparisonRow {
        let g = self.gap();
        let v = self.violations();
        ComparisonRow {
            seed: self.seed,
            data_aware_j: self.bs_total(Preset::DataAware).as_joules(),
            ue_aware_j: self.bs_total(Preset::UeAware).as_joules(),
            default_j: self.bs_total(Preset::Default).as_joules(),
            random_j: self.bs_total(Preset::Random).as_joules(),
            ordering_holds: v.is_empty(),
            violations: v.join("; "),
            gap_j: g.gap_j,
            signaling_j: g.signaling_j,
            rewarm_j: g.rewarm_j,
            explained: g.explained,
        }
    }
}

/// IDLE energy of each BS from a window-end switch-on until its next state
/// change (or the end of the run), located through the decision log.
pub fn rewarm_energy(out: &RunOutcome) -> Energy {
    let mut total = Energy::ZERO;
    for d in out.decisions.iter().filter(|d| d.decision.cause == Cause::WindowEnd) {
        let PolicyCommand::SwitchOn(bs) = d.decision.command else {
            continue;
        };
        let Some(b) = out.bss.iter().find(|b| b.id == bs) else {
            continue;
        };
        let trace = b.ledger.trace();
        let Some(i) = trace.iter().position(|r| r.at == d.at && r.from == PhyState::Off && r.to == PhyState::Idle)
        else {
            continue;
        };
        let until = trace.get(i + 1).map_or(out.end, |r| r.at);
        total += b.ledger.profile().power(PhyState::Idle).over(until.since(d.at));
    }
    total
}

/// Runs every preset for every seed; `tweak` adjusts each config before the
/// run (e.g. to shorten it).
pub fn compare_with<F>(seeds: &[u64], tweak: F) -> Result<Vec<SeedComparison>, ScenarioError>
where
    F: Fn(&mut ScenarioConfig) + Sync,
{
    let jobs: Vec<(u64, Preset)> = seeds.iter().flat_map(|&s| Preset::ALL.map(|p| (s, p))).collect();
    let results: Vec<(u64, Preset, RunOutcome)> = jobs
        .par_iter()
        .map(|&(seed, p)| {
            let mut cfg = preset(p, seed);
            tweak(&mut cfg);
            run(&cfg).map(|o| (seed, p, o))
        })
        .collect::<Result<_, _>>()?;
    let mut out: Vec<SeedComparison> = seeds.iter().map(|&seed| SeedComparison { seed, runs: Vec::new() }).collect();
    for (seed, p, o) in results {
        let slot = out.iter_mut().find(|c| c.seed == seed).expect("seed listed");
        slot.runs.push((p, o));
    }
    Ok(out)
}

pub fn compare_scenarios(seeds: &[u64]) -> Result<Vec<SeedComparison>, ScenarioError> {
    compare_with(seeds, |_| {})
}
