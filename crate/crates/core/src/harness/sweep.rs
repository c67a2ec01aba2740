//! Power sweeps with paired gate-off/gate-on runs, and report output.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coincidence::{cross_correlation, reduction_factor, CountSummary};
use crate::error::{Error, Result};
use crate::rng::split_seed;

use super::config::ExperimentConfig;
use super::simulate::run_paired;

/// One sweep point: both gate states simulated from the same run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub power_mw: f64,
    pub config: ExperimentConfig,
    pub ungated: CountSummary,
    pub gated: CountSummary,
    pub g_off: Option<f64>,
    pub g_on: Option<f64>,
    pub reduction: Option<f64>,
    /// Seconds spent simulating. Not serialised, so reports stay reproducible.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

// Equality ignores wall-clock time, matching what gets serialised.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.power_mw == other.power_mw
            && self.config == other.config
            && self.ungated == other.ungated
            && self.gated == other.gated
            && self.g_off == other.g_off
            && self.g_on == other.g_on
            && self.reduction == other.reduction
    }
}

impl RunRecord {
    pub fn from_summaries(config: ExperimentConfig, ungated: CountSummary, gated: CountSummary) -> Self {
        Self {
            power_mw: config.source.pump_power_mw,
            g_off: cross_correlation(&ungated).ok(),
            g_on: cross_correlation(&gated).ok(),
            reduction: reduction_factor(&ungated, &gated).ok(),
            config,
            ungated,
            gated,
            wall_clock_s: 0.0,
        }
    }
}

/// Runs every power in `powers`, ascending.
///
/// Point `i` of the sorted list runs with seed `split_seed(config.seed, i)`;
/// both gate states use that seed. Points run in parallel and the result does
/// not depend on scheduling.
pub fn sweep(config: &ExperimentConfig, powers: &[f64]) -> Result<Vec<RunRecord>> {
    if powers.is_empty() {
        return Err(Error::domain("sweep needs at least one power"));
    }
    if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::domain(format!("sweep power {p} must be finite and >= 0")));
    }
    config.validate()?;
    let mut sorted = powers.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut point = config.clone();
            point.source.pump_power_mw = p;
            point.seed = split_seed(config.seed, i as u64);
            point.power_sweep = Vec::new();
            let start = Instant::now();
            let (off, on) = run_paired(&point)?;
            let mut record = RunRecord::from_summaries(point, off, on);
            record.wall_clock_s = start.elapsed().as_secs_f64();
            log::info!(
                "P = {p} mW: N_s = {:.1}/s, N_i {:.1} -> {:.1}/s in {:.2} s",
                record.ungated.n_signal,
                record.ungated.n_idler,
                record.gated.n_idler,
                record.wall_clock_s
            );
            Ok(record)
        })
        .collect()
}

pub const CSV_HEADER: &str = "power,N_s,N_i_off,N_i_on,N_si_off,N_si_on,g_off,g_on,reduction";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV body: one row per record, undefined statistics left empty.
pub fn format_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.power_mw,
            r.ungated.n_signal,
            r.ungated.n_idler,
            r.gated.n_idler,
            r.ungated.n_coincidence,
            r.gated.n_coincidence,
            opt(r.g_off),
            opt(r.g_on),
            opt(r.reduction)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<RunRecord>,
}

/// Writes the JSON report to `json_path` and the CSV table to `csv_path`.
/// Nothing is written for an empty record list.
pub fn emit_report(records: &[RunRecord], json_path: &Path, csv_path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::domain("no records to report"));
    }
    let report = Report {
        records: records.to_vec(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(json_path, json).map_err(|e| Error::io(json_path, e))?;
    std::fs::write(csv_path, format_csv(records)).map_err(|e| Error::io(csv_path, e))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> ExperimentConfig {
        ExperimentConfig {
            duration: 0.05,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_point() {
        let r = sweep(&short(), &[0.2]).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].gated.n_idler <= r[0].ungated.n_idler);
    }

    #[test]
    fn empty_and_negative_powers_are_rejected() {
        assert!(sweep(&short(), &[]).is_err());
        assert!(sweep(&short(), &[0.1, -0.1]).is_err());
    }

    #[test]
    fn output_is_sorted_and_monotone() {
        let r = sweep(&short(), &[0.22, 0.14, 0.18, 0.16, 0.2]).unwrap();
        let p: Vec<f64> = r.iter().map(|x| x.power_mw).collect();
        assert_eq!(p, vec![0.14, 0.16, 0.18, 0.2, 0.22]);
        assert!(r.windows(2).all(|w| w[0].ungated.n_signal < w[1].ungated.n_signal));
    }

    #[test]
    fn reproducible_regardless_of_input_order() {
        let a = sweep(&short(), &[0.1, 0.2]).unwrap();
        let b = sweep(&short(), &[0.2, 0.1]).unwrap();
        assert_eq!(
            serde_json::to_string(&Report { records: a }).unwrap(),
            serde_json::to_string(&Report { records: b }).unwrap()
        );
    }

    #[test]
    fn csv_shape() {
        let r = sweep(&short(), &[0.2]).unwrap();
        let csv = format_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 9);
    }

    #[test]
    fn undefined_statistics_are_blank() {
        let mut c = short();
        c.herald_detector.dark_rate = 0.0;
        c.idler_detector.dark_rate = 0.0;
        let r = sweep(&c, &[0.0]).unwrap();
        assert!(r[0].g_off.is_none());
        assert!(format_csv(&r).lines().nth(1).unwrap().ends_with(",,,"));
    }
}
