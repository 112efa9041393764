//! Run reports and their CSV / JSON renderings.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{Energy, EnergyLedger, PhyState};
use crate::world::RunOutcome;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("encoding {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("encoding {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsRow {
    pub bs_id: u32,
    pub total_energy_j: f64,
    pub idle_s: f64,
    pub rx_ctrl_s: f64,
    pub rx_data_s: f64,
    pub tx_s: f64,
    pub deep_sleep_s: f64,
    pub off_s: f64,
    pub avg_connected_ues: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeRow {
    pub ue_id: u32,
    pub total_energy_j: f64,
    pub idle_s: f64,
    pub rx_ctrl_s: f64,
    pub rx_data_s: f64,
    pub tx_s: f64,
    pub handover_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalsRow {
    pub policy: String,
    pub seed: u64,
    pub bs_total_j: f64,
    pub ue_total_j: f64,
    pub handovers: u64,
    pub drops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub node_id: String,
    pub t_us: u64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub t_us: u64,
    pub command: String,
    pub args: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub bss: Vec<BsRow>,
    pub ues: Vec<UeRow>,
    pub totals: TotalsRow,
    #[serde(skip)]
    pub bs_total: Energy,
    #[serde(skip)]
    pub ue_total: Energy,
}

fn dwell_s(l: &EnergyLedger, s: PhyState) -> f64 {
    l.dwell(s).as_secs_f64()
}

impl RunReport {
    pub fn from_outcome(out: &RunOutcome) -> Self {
        let bss: Vec<BsRow> = out
            .bss
            .iter()
            .map(|b| BsRow {
                bs_id: b.id.0,
                total_energy_j: b.ledger.total_energy().as_joules(),
                idle_s: dwell_s(&b.ledger, PhyState::Idle),
                rx_ctrl_s: dwell_s(&b.ledger, PhyState::RxCtrl),
                rx_data_s: dwell_s(&b.ledger, PhyState::RxData),
                tx_s: dwell_s(&b.ledger, PhyState::Tx),
                deep_sleep_s: dwell_s(&b.ledger, PhyState::DeepSleep),
                off_s: dwell_s(&b.ledger, PhyState::Off),
                avg_connected_ues: b.avg_connected_ues,
            })
            .collect();
        let ues: Vec<UeRow> = out
            .ues
            .iter()
            .map(|u| UeRow {
                ue_id: u.id.0,
                total_energy_j: u.ledger.total_energy().as_joules(),
                idle_s: dwell_s(&u.ledger, PhyState::Idle),
                rx_ctrl_s: dwell_s(&u.ledger, PhyState::RxCtrl),
                rx_data_s: dwell_s(&u.ledger, PhyState::RxData),
                tx_s: dwell_s(&u.ledger, PhyState::Tx),
                handover_count: u.handovers,
            })
            .collect();
        let bs_total = out.bs_total();
        let ue_total = out.ue_total();
        RunReport {
            bss,
            ues,
            totals: TotalsRow {
                policy: out.policy.to_string(),
                seed: out.seed,
                bs_total_j: bs_total.as_joules(),
                ue_total_j: ue_total.as_joules(),
                handovers: out.stats.handovers,
                drops: out.stats.drops,
            },
            bs_total,
            ue_total,
        }
    }
}

pub fn trace_rows(out: &RunOutcome) -> Vec<TraceRow> {
    let bs = out.bss.iter().map(|b| (b.id.to_string(), &b.ledger));
    let ue = out.ues.iter().map(|u| (u.id.to_string(), &u.ledger));
    bs.chain(ue)
        .flat_map(|(id, l)| {
            l.trace().iter().map(move |r| TraceRow {
                node_id: id.clone(),
                t_us: r.at.as_micros(),
                from: r.from.as_str().to_string(),
                to: r.to.as_str().to_string(),
            })
        })
        .collect()
}

pub fn decision_rows(out: &RunOutcome) -> Vec<DecisionRow> {
    out.decisions
        .iter()
        .map(|d| DecisionRow { t_us: d.at.as_micros(), command: d.command_name().to_string(), args: d.args() })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let wrap = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), ReportError> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let wrap = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })
}

/// Writes the report tables (`bs`, `ue`, `totals`) in the chosen format,
/// plus `decisions.csv`, and `trace.csv` when asked. Returns the files written.
pub fn emit(out: &RunOutcome, format: Format, dir: &Path, with_trace: bool) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(dir)?;
    let report = RunReport::from_outcome(out);
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            for (name, res) in [
                ("bs.csv", write_csv(&dir.join("bs.csv"), &report.bss)),
                ("ue.csv", write_csv(&dir.join("ue.csv"), &report.ues)),
                ("totals.csv", write_csv(&dir.join("totals.csv"), std::slice::from_ref(&report.totals))),
            ] {
                res?;
                written.push(dir.join(name));
            }
        }
        Format::Json => {
            let path = dir.join("report.json");
            let text = serde_json::to_string_pretty(&report)
                .map_err(|source| ReportError::Json { path: path.clone(), source })?;
            fs::write(&path, text + "\n").map_err(|source| ReportError::Io { path: path.clone(), source })?;
            written.push(path);
        }
    }
    let path = dir.join("decisions.csv");
    write_csv_with_header(&path, &["t_us", "command", "args"], &decision_rows(out))?;
    written.push(path);
    if with_trace {
        let path = dir.join("trace.csv");
        write_csv_with_header(&path, &["node_id", "t_us", "from", "to"], &trace_rows(out))?;
        written.push(path);
    }
    Ok(written)
}
