use std::io::Write;
use std::time::{Duration, Instant};

use smartmme::compare::compare_scenarios;
use smartmme::energy::{recompute_from_trace, Energy, PhyState};
use smartmme::engine::{SimDuration, SimTime};
use smartmme::mme::{Cause, PolicyCommand, PolicyKind};
use smartmme::node::BsId;
use smartmme::report::{emit, Format};
use smartmme::scenario::{preset, run, BsConfig, MobilityConfig, Preset, ScenarioConfig, Thresholds};
use smartmme::world::RunOutcome;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Written straight to the process stdout so the verdict shows even when the
/// harness captures test output.
fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let tag = if ok { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {n} [{name}]: {tag} - {detail}").unwrap();
}

fn ledgers(out: &RunOutcome) -> impl Iterator<Item = (String, &smartmme::energy::EnergyLedger)> {
    out.bss.iter().map(|b| (b.id.to_string(), &b.ledger)).chain(out.ues.iter().map(|u| (u.id.to_string(), &u.ledger)))
}

fn all_runs() -> Vec<(Preset, u64, RunOutcome)> {
    let mut v = Vec::new();
    for p in Preset::ALL {
        for s in SEEDS {
            v.push((p, s, run(&preset(p, s)).unwrap()));
        }
    }
    v
}

#[test]
fn c1_idle_bs_energy() {
    let started = Instant::now();
    let mut cfg = preset(Preset::Default, 1).without_traffic();
    cfg.ues.clear();
    cfg.bss = vec![BsConfig { id: 1, position: None }];
    let out = run(&cfg).unwrap();
    let l = &out.bss[0].ledger;
    let oracle = recompute_from_trace(l.initial_state(), l.birth(), l.trace(), l.profile(), out.end).unwrap();
    // 86.3 W for the first second, 6.2 W for the remaining 10.24 s.
    let analytic = Energy((86_300 * 1_000_000) + (6_200 * 10_240_000));
    let elapsed = started.elapsed();
    let ok = l.total_energy() == analytic && oracle == analytic && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "idle BS energy",
        ok,
        &format!("ledger {} J, oracle {oracle} J, expected {analytic} J, {elapsed:.2?}", l.total_energy()),
    );
    assert!(ok);
}

#[test]
fn c2_ledger_oracle_equivalence() {
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    for (p, s, out) in all_runs() {
        for (id, l) in ledgers(&out) {
            let oracle = recompute_from_trace(l.initial_state(), l.birth(), l.trace(), l.profile(), out.end).unwrap();
            checked += 1;
            if oracle != l.total_energy() {
                mismatches.push(format!("{p}/seed{s}/{id}: ledger {} oracle {oracle}", l.total_energy()));
            }
        }
    }
    let ok = mismatches.is_empty();
    verdict(
        2,
        "ledger-oracle equivalence",
        ok,
        &format!("{checked} node ledgers, {} mismatches {mismatches:?}", mismatches.len()),
    );
    assert!(ok);
}

#[test]
fn c3_dwell_conservation() {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for (p, s, out) in all_runs() {
        let span = out.end.since(SimTime::ZERO);
        for (id, l) in ledgers(&out) {
            let sum: SimDuration = PhyState::ALL.iter().map(|st| l.dwell(*st)).sum();
            checked += 1;
            if sum != span {
                bad.push(format!("{p}/seed{s}/{id}: {sum} != {span}"));
            }
        }
    }
    let ok = bad.is_empty();
    verdict(3, "dwell conservation", ok, &format!("{checked} nodes, violations {bad:?}"));
    assert!(ok);
}

#[test]
fn c4_scenario_ordering() {
    let cmp = compare_scenarios(&SEEDS).unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    for c in &cmp {
        let row = c.row();
        let explained_ok = row.explained.is_some_and(|x| x >= 0.9);
        ok &= row.ordering_holds && explained_ok;
        lines.push(format!(
            "seed {}: data_aware {:.1} ue_aware {:.1} default {:.1} random {:.1} J; gap {:.1} J, signaling {:.1} J, re-warm {:.1} J, explained {}{}",
            row.seed,
            row.data_aware_j,
            row.ue_aware_j,
            row.default_j,
            row.random_j,
            row.gap_j,
            row.signaling_j,
            row.rewarm_j,
            row.explained.map_or("n/a".to_string(), |x| format!("{:.0}%", x * 100.0)),
            if row.violations.is_empty() { String::new() } else { format!(" [{}]", row.violations) },
        ));
    }
    verdict(4, "scenario energy ordering", ok, &lines.join(" | "));
    assert!(ok, "{}", lines.join("\n"));
}

#[test]
fn c5_lone_bs_switched_off() {
    let mut ok = true;
    let mut lines = Vec::new();
    let deadline = SimTime::from_millis(1_100);
    for s in SEEDS {
        let cfg = preset(Preset::DataAware, s);
        let out = run(&cfg).unwrap();
        let off_at = out.decisions.iter().find_map(|d| match d.decision.command {
            PolicyCommand::SwitchOff(BsId(1)) => Some(d.at),
            _ => None,
        });
        let serving: Vec<f64> = out
            .bss
            .iter()
            .filter(|b| b.ledger.dwell(PhyState::Tx) > SimDuration::ZERO)
            .map(|b| b.ledger.total_energy().as_joules())
            .collect();
        let mean = serving.iter().sum::<f64>() / serving.len() as f64;
        let lone = out.bss[0].ledger.total_energy().as_joules();
        let pass = off_at.is_some_and(|t| t <= deadline) && !serving.is_empty() && lone < 0.1 * mean;
        ok &= pass;
        lines.push(format!(
            "seed {s}: bs1 off at {}, {lone:.1} J vs serving mean {mean:.1} J ({:.1}%)",
            off_at.map_or("never".to_string(), |t| t.to_string()),
            100.0 * lone / mean
        ));
    }
    verdict(5, "data-aware lone BS", ok, &lines.join(" | "));
    assert!(ok);
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

#[test]
fn spearman_oracle_sanity() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
}

#[test]
fn c6_connected_ues_track_energy() {
    let (mut ues, mut energy) = (Vec::new(), Vec::new());
    for s in SEEDS {
        let out = run(&preset(Preset::Default, s)).unwrap();
        for b in &out.bss {
            ues.push(b.avg_connected_ues);
            energy.push(b.ledger.total_energy().as_joules());
        }
    }
    let rho = spearman(&ues, &energy);
    let ok = rho >= 0.6;
    verdict(6, "connected UEs vs BS energy", ok, &format!("Spearman rho {rho:.3} over {} BSs", ues.len()));
    assert!(ok);
}

#[test]
fn c7_zero_traffic_fixed_point() {
    let cutoff = SimTime::from_millis(1_100);
    let mut ok = true;
    let mut lines = Vec::new();
    for s in SEEDS {
        let mut cfg = preset(Preset::Default, s).without_traffic();
        cfg.policy = PolicyKind::UeDataAware;
        let out = run(&cfg).unwrap();
        let mut latest_off = SimTime::ZERO;
        let mut remainder = Energy::ZERO;
        let mut all_off = true;
        for b in &out.bss {
            let l = &b.ledger;
            all_off &= l.current() == PhyState::Off;
            if let Some(r) = l.trace().iter().rev().find(|r| r.to == PhyState::Off) {
                latest_off = latest_off.max(r.at);
            }
            let upto = recompute_from_trace(
                l.initial_state(),
                l.birth(),
                &l.trace().iter().copied().filter(|r| r.at <= cutoff).collect::<Vec<_>>(),
                l.profile(),
                cutoff,
            )
            .unwrap();
            remainder += Energy(l.total_energy().0 - upto.0);
        }
        let pass = all_off && latest_off <= cutoff && remainder == Energy::ZERO;
        ok &= pass;
        lines.push(format!("seed {s}: last switch-off {latest_off}, energy after 1.1 s {remainder} J"));
    }
    verdict(7, "zero-traffic fixed point", ok, &lines.join(" | "));
    assert!(ok);
}

#[test]
fn c8_byte_identical_reports() {
    let mut ok = true;
    let mut compared = 0;
    for p in Preset::ALL {
        let cfg = preset(p, 42);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let files = emit(&run(&cfg).unwrap(), Format::Csv, a.path(), true).unwrap();
        emit(&run(&cfg).unwrap(), Format::Csv, b.path(), true).unwrap();
        for f in files {
            let name = f.file_name().unwrap();
            compared += 1;
            ok &= std::fs::read(&f).unwrap() == std::fs::read(b.path().join(name)).unwrap();
        }
    }
    verdict(8, "deterministic CSV output", ok, &format!("{compared} file pairs compared"));
    assert!(ok);
}

#[test]
fn c9_desk_scale() {
    let suite = Instant::now();
    let mut worst = Duration::ZERO;
    let mut lines = Vec::new();
    for p in Preset::ALL {
        let started = Instant::now();
        run(&preset(p, 1)).unwrap();
        let t = started.elapsed();
        worst = worst.max(t);
        lines.push(format!("{p} {t:.2?}"));
    }
    // Re-run every criterion's workload to bound the whole suite.
    let _ = all_runs();
    let _ = compare_scenarios(&SEEDS).unwrap();
    let total = suite.elapsed();
    let ok = worst < Duration::from_secs(1) && total < Duration::from_secs(60);
    verdict(9, "desk scale", ok, &format!("{}; workload {total:.2?}", lines.join(", ")));
    assert!(ok);
}

#[test]
fn decision_log_reflects_window_edges() {
    let out = run(&preset(Preset::Random, 3)).unwrap();
    let s = out.random_schedule.clone().unwrap();
    for (bs, start) in &s.windows {
        let off = out.decisions.iter().any(|d| d.at == *start && d.decision.command == PolicyCommand::SwitchOff(*bs));
        assert!(off, "{bs} not switched off at {start}");
        let on = out
            .decisions
            .iter()
            .any(|d| d.decision.cause == Cause::WindowEnd && d.decision.command == PolicyCommand::SwitchOn(*bs));
        assert!(on);
        assert_eq!(out.bss.iter().find(|b| b.id == *bs).unwrap().ledger.dwell(PhyState::Off), s.length);
    }
}

#[test]
fn custom_thresholds_flow_through() {
    let mut cfg: ScenarioConfig = preset(Preset::Default, 1).without_traffic();
    cfg.ues.iter_mut().for_each(|u| u.mobility = MobilityConfig::ConstantPosition);
    cfg.thresholds = Thresholds { deep_sleep_s: 2.0, ..Thresholds::default() };
    let out = run(&cfg).unwrap();
    for b in &out.bss {
        assert_eq!(b.ledger.dwell(PhyState::Idle), SimDuration::from_secs(2));
    }
}
