use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use smartmme::compare::compare_with;
use smartmme::report::{self, Format, RunReport};
use smartmme::scenario::{preset, run, Preset, ScenarioConfig};

#[derive(Parser)]
#[command(name = "smartmme", version, about = "mmWave BS switching energy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PresetArg {
    Default,
    Random,
    UeAware,
    DataAware,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Default => Preset::Default,
            PresetArg::Random => Preset::Random,
            PresetArg::UeAware => Preset::UeAware,
            PresetArg::DataAware => Preset::DataAware,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Simulate {
        #[arg(long, value_enum, conflicts_with = "config")]
        preset: Option<PresetArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// TOML scenario file; flags given on the command line win.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write every node's PHY state changes to trace.csv.
        #[arg(long)]
        emit_trace: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Print a preset as a TOML scenario file, a starting point for --config.
    Config {
        #[arg(long, value_enum, default_value = "default")]
        preset: PresetArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run all four presets per seed and compare mmWave BS energy.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
    },
}

fn simulate(
    preset_arg: Option<PresetArg>,
    seed: Option<u64>,
    duration: Option<f64>,
    out: PathBuf,
    config: Option<PathBuf>,
    emit_trace: bool,
    format: FormatArg,
) -> Result<(), Box<dyn Error>> {
    let mut cfg = match config {
        Some(path) => ScenarioConfig::load(&path)?,
        None => preset(preset_arg.map_or(Preset::Default, Preset::from), seed.unwrap_or(1)),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration_s = d;
    }
    let outcome = run(&cfg)?;
    let format = match format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let files = report::emit(&outcome, format, &out, emit_trace)?;
    let t = RunReport::from_outcome(&outcome).totals;
    println!(
        "policy={} seed={} bs_total_j={:.6} ue_total_j={:.6} handovers={} drops={}",
        t.policy, t.seed, t.bs_total_j, t.ue_total_j, t.handovers, t.drops
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn compare(seeds: Vec<u64>, out: PathBuf, duration: Option<f64>) -> Result<(), Box<dyn Error>> {
    let cmp = compare_with(&seeds, |c| {
        if let Some(d) = duration {
            c.duration_s = d;
        }
    })?;
    report::ensure_dir(&out)?;
    let mut totals = Vec::new();
    for seed in &cmp {
        for (p, o) in &seed.runs {
            report::emit(o, Format::Csv, &out.join(format!("{p}_seed{}", seed.seed)), false)?;
            totals.push(RunReport::from_outcome(o).totals);
        }
    }
    let rows: Vec<_> = cmp.iter().map(|c| c.row()).collect();
    report::write_csv(&out.join("comparison.csv"), &rows)?;
    report::write_csv(&out.join("totals.csv"), &totals)?;

    println!("{:>6} {:>12} {:>12} {:>12} {:>12}  ordering", "seed", "data_aware", "ue_aware", "default", "random");
    for r in &rows {
        let verdict = if r.ordering_holds { "ok".to_string() } else { format!("VIOLATED ({})", r.violations) };
        println!(
            "{:>6} {:>12.3} {:>12.3} {:>12.3} {:>12.3}  {verdict}",
            r.seed, r.data_aware_j, r.ue_aware_j, r.default_j, r.random_j
        );
    }
    println!("wrote {}", out.join("comparison.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate { preset, seed, duration, out, config, emit_trace, format } => {
            simulate(preset, seed, duration, out, config, emit_trace, format)
        }
        Command::Config { preset: p, seed } => {
            print!("{}", preset(p.into(), seed).to_toml());
            Ok(())
        }
        Command::Compare { seeds, out, duration } => compare(seeds, out, duration),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = e.source();
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
