//! Monte Carlo runs.
//!
//! Pulse `k` emits at `(k + ½)/R_p`. Herald clicks are reported on that
//! clock; the idler arm is simulated in its own frame, shifted by the idler
//! delay, so idler pulse `k` also arrives at `(k + ½)/R_p` locally and both
//! channels bin with zero offset. Exported click streams carry absolute times,
//! with idler clicks shifted back by the delay.
//!
//! Collection and detector efficiencies are folded into one binomial thinning
//! per arm before the switch. Both gate states therefore see identical
//! photons, dark counts and insertion-loss draws; only the window test
//! differs.

use crate::coincidence::{count_events, CountSummary};
use crate::error::Result;
use crate::optical_chain::{detect_times, gate_filter, thin_unchecked, Channel, ClickRecord, DetectorConfig};
use crate::pair_source::EmissionSampler;
use crate::rng::{stage_rng, Stage};

use super::config::ExperimentConfig;

/// Number of pulses in `duration` at `rep_rate`.
pub fn pulse_count(duration: f64, rep_rate: f64) -> u64 {
    // The nudge keeps products like 0.3 · 1e7 from rounding down a pulse.
    (duration * rep_rate * (1.0 + 1e-12)).floor() as u64
}

struct Prepared {
    duration: f64,
    rep_rate: f64,
    herald_clicks: Vec<f64>,
    /// Idler photons reaching the switch, idler frame.
    idler_arrivals: Vec<f64>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    config.gate.check_timing(config.channels.idler_delay)?;
    let rep_rate = config.source.rep_rate;
    let duration = config.duration;
    let n_pulses = pulse_count(duration, rep_rate);
    let seed = config.seed;

    let sampler = EmissionSampler::new(&config.source)?;
    let eta_s = config.eta_signal_total();
    let eta_i = config.eta_idler_pre_switch();
    let mut emission_rng = stage_rng(seed, Stage::Emission);
    let mut signal_rng = stage_rng(seed, Stage::SignalLoss);
    let mut idler_rng = stage_rng(seed, Stage::IdlerLoss);

    let mut herald_arrivals = Vec::new();
    let mut idler_arrivals = Vec::new();
    for (k, em) in sampler.nonempty_pulses(n_pulses, &mut emission_rng) {
        let t = (k as f64 + 0.5) / rep_rate;
        if thin_unchecked(em.signal_photons() as u64, eta_s, &mut signal_rng) > 0 {
            herald_arrivals.push(t);
        }
        let n_i = thin_unchecked(em.idler_photons() as u64, eta_i, &mut idler_rng);
        for _ in 0..n_i {
            idler_arrivals.push(t);
        }
    }

    let herald = DetectorConfig {
        efficiency: 1.0,
        ..config.herald_detector.clone()
    };
    let mut herald_rng = stage_rng(seed, Stage::HeraldDetector);
    let herald_clicks = detect_times(&herald_arrivals, &herald, duration, &mut herald_rng)?;
    Ok(Prepared {
        duration,
        rep_rate,
        herald_clicks,
        idler_arrivals,
    })
}

fn finish(
    config: &ExperimentConfig,
    prepared: &Prepared,
    gate_enabled: bool,
) -> Result<(CountSummary, Vec<f64>)> {
    let seed = config.seed;
    let delay = config.channels.idler_delay;
    let gate = crate::optical_chain::GateConfig {
        enabled: gate_enabled,
        ..config.gate.clone()
    };
    // Herald clicks moved into the idler frame.
    let heralds_local: Vec<f64> = prepared.herald_clicks.iter().map(|h| h - delay).collect();
    let mut switch_rng = stage_rng(seed, Stage::Switch);
    let passed = gate_filter(
        &heralds_local,
        &prepared.idler_arrivals,
        &gate,
        config.channels.switch_insertion_transmission,
        &mut switch_rng,
    )?;
    let idler = DetectorConfig {
        efficiency: 1.0,
        ..config.idler_detector.clone()
    };
    let mut idler_rng = stage_rng(seed, Stage::IdlerDetector);
    let idler_clicks = detect_times(&passed, &idler, prepared.duration, &mut idler_rng)?;

    let as_records = |times: &[f64], channel| -> Vec<ClickRecord> {
        times.iter().map(|&time| ClickRecord { time, channel }).collect()
    };
    let summary = count_events(
        &as_records(&prepared.herald_clicks, Channel::Signal),
        &as_records(&idler_clicks, Channel::Idler),
        prepared.rep_rate,
        (0.0, 0.0),
        prepared.duration,
    )?;
    Ok((summary, idler_clicks))
}

/// Simulates `floor(duration · rep_rate)` pulses with the gate on or off.
/// Deterministic in `config.seed`; `config.gate.enabled` is ignored.
pub fn run(config: &ExperimentConfig, gate_enabled: bool) -> Result<CountSummary> {
    Ok(finish(config, &prepare(config)?, gate_enabled)?.0)
}

/// Like [`run`], also returning every click in absolute time order.
pub fn run_with_clicks(
    config: &ExperimentConfig,
    gate_enabled: bool,
) -> Result<(CountSummary, Vec<ClickRecord>)> {
    let prepared = prepare(config)?;
    let (summary, idler_local) = finish(config, &prepared, gate_enabled)?;
    let delay = config.channels.idler_delay;
    let mut clicks: Vec<ClickRecord> = prepared
        .herald_clicks
        .iter()
        .map(|&time| ClickRecord {
            time,
            channel: Channel::Signal,
        })
        .chain(idler_local.iter().map(|&t| ClickRecord {
            time: t + delay,
            channel: Channel::Idler,
        }))
        .collect();
    clicks.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.channel.cmp(&b.channel)));
    Ok((summary, clicks))
}

/// Gate-off and gate-on runs from one seed, sharing the upstream simulation.
/// Identical to two calls of [`run`].
pub fn run_paired(config: &ExperimentConfig) -> Result<(CountSummary, CountSummary)> {
    let prepared = prepare(config)?;
    let off = finish(config, &prepared, false)?.0;
    let on = finish(config, &prepared, true)?.0;
    Ok((off, on))
}
