//! Lumped losses, the feed-forward switch, and click detectors.
//!
//! All photons of pulse `k` share one arrival time per channel; intra-pulse
//! structure is far below every timing scale in the system.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, check_probability, Error, Result};
use crate::rng::SimRng;

/// Timing slack when checking the nominal-arrival condition.
const TIMING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Every signal-arm loss between fibre and herald detector.
    pub signal_transmission: f64,
    /// Idler-arm transmission up to the switch input.
    pub idler_transmission_pre_switch: f64,
    /// Switch insertion transmission; 1 dB is 0.794.
    pub switch_insertion_transmission: f64,
    /// Idler delay line, seconds.
    pub idler_delay: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            signal_transmission: 0.4,
            idler_transmission_pre_switch: 0.072,
            switch_insertion_transmission: db_to_transmission(1.0),
            idler_delay: 250e-9,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("channels.signal_transmission", self.signal_transmission)?;
        check_probability(
            "channels.idler_transmission_pre_switch",
            self.idler_transmission_pre_switch,
        )?;
        check_probability(
            "channels.switch_insertion_transmission",
            self.switch_insertion_transmission,
        )?;
        check_non_negative("channels.idler_delay", self.idler_delay)
    }
}

/// Converts an insertion loss in dB to a power transmission.
pub fn db_to_transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Feed-forward switch timing. The window for a herald click at `h` is
/// `[h + latency, h + latency + window)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub enabled: bool,
    /// Herald click to window opening, seconds.
    pub latency: f64,
    /// Window width, seconds.
    pub window: f64,
    /// Window opening to nominal heralded-photon arrival, seconds.
    pub arrival_offset: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            latency: 200e-9,
            window: 100e-9,
            arrival_offset: 50e-9,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("gate.window", self.window)?;
        check_non_negative("gate.latency", self.latency)?;
        check_non_negative("gate.arrival_offset", self.arrival_offset)?;
        if self.arrival_offset >= self.window {
            return Err(Error::domain(format!(
                "gate.arrival_offset = {} s must be smaller than gate.window = {} s",
                self.arrival_offset, self.window
            )));
        }
        Ok(())
    }

    /// Rejects timings where a photon heralded by its own pulse misses the
    /// window: the idler delay must equal `latency + arrival_offset`.
    pub fn check_timing(&self, idler_delay: f64) -> Result<()> {
        self.validate()?;
        let nominal = self.latency + self.arrival_offset;
        if (nominal - idler_delay).abs() > TIMING_TOLERANCE {
            return Err(Error::domain(format!(
                "gate timing mismatch: latency + arrival_offset = {nominal:e} s but idler delay is {idler_delay:e} s"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Non-paralyzable dead time, seconds.
    pub dead_time: f64,
}

impl DetectorConfig {
    /// Silicon APD heralding the signal arm.
    pub fn silicon_default() -> Self {
        Self {
            efficiency: 0.5,
            dark_rate: 100.0,
            dead_time: 50e-9,
        }
    }

    /// Free-running InGaAs APD on the idler arm.
    pub fn ingaas_default() -> Self {
        Self {
            efficiency: 0.1,
            dark_rate: 50.0,
            dead_time: 10e-6,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        check_probability(&format!("{name}.efficiency"), self.efficiency)?;
        check_non_negative(&format!("{name}.dark_rate"), self.dark_rate)?;
        check_non_negative(&format!("{name}.dead_time"), self.dead_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Idler,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Signal => "signal",
            Channel::Idler => "idler",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" | "s" => Ok(Channel::Signal),
            "idler" | "i" => Ok(Channel::Idler),
            other => Err(Error::domain(format!("unknown channel '{other}'"))),
        }
    }
}

/// A detector click. `time` is measured from the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub time: f64,
    pub channel: Channel,
}

fn check_sorted(name: &str, times: &[f64]) -> Result<()> {
    match times.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::contract(format!(
            "{name} not sorted: element {} ({}) precedes element {} ({})",
            i,
            times[i],
            i + 1,
            times[i + 1]
        ))),
        None => Ok(()),
    }
}

/// Binomial loss: each of `n` photons survives independently with
/// probability `transmission`.
pub fn thin(n: u64, transmission: f64, rng: &mut SimRng) -> Result<u64> {
    check_probability("transmission", transmission)?;
    Ok(thin_unchecked(n, transmission, rng))
}

pub(crate) fn thin_unchecked(n: u64, transmission: f64, rng: &mut SimRng) -> u64 {
    if n == 0 || transmission == 0.0 {
        return 0;
    }
    if transmission == 1.0 {
        return n;
    }
    if n <= 8 {
        return (0..n).filter(|_| rng.random::<f64>() < transmission).count() as u64;
    }
    Binomial::new(n, transmission)
        .expect("validated probability")
        .sample(rng)
}

/// Homogeneous Poisson process on `[0, duration)`, ascending.
pub fn generate_dark_counts(rate: f64, duration: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
    check_non_negative("dark rate", rate)?;
    check_non_negative("duration", duration)?;
    let mut times = Vec::new();
    if rate == 0.0 || duration == 0.0 {
        return Ok(times);
    }
    let gaps = Exp::new(rate).map_err(|e| Error::domain(e.to_string()))?;
    let mut t = gaps.sample(rng);
    while t < duration {
        times.push(t);
        t += gaps.sample(rng);
    }
    Ok(times)
}

/// Non-paralyzable dead time: a click is accepted iff it comes at least
/// `dead_time` after the last accepted click.
pub fn apply_dead_time(times: &[f64], dead_time: f64) -> Result<Vec<f64>> {
    check_non_negative("dead_time", dead_time)?;
    check_sorted("click times", times)?;
    let mut accepted: Vec<f64> = Vec::with_capacity(times.len());
    for &t in times {
        match accepted.last() {
            Some(&last) if t < last + dead_time => {}
            _ => accepted.push(t),
        }
    }
    Ok(accepted)
}

/// Passes idler arrivals through the switch.
///
/// Every arrival takes an insertion-loss draw, whatever the gate state, so
/// gate-on and gate-off runs from one seed consume identical randomness.
/// With the gate enabled an arrival must also fall inside the union of
/// herald windows; with no heralds the switch shows vacuum and nothing passes.
pub fn gate_filter(
    herald_times: &[f64],
    idler_arrivals: &[f64],
    gate: &GateConfig,
    switch_transmission: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    gate.validate()?;
    check_probability("switch transmission", switch_transmission)?;
    check_sorted("herald times", herald_times)?;
    check_sorted("idler arrivals", idler_arrivals)?;

    let mut out = Vec::with_capacity(idler_arrivals.len());
    // First herald whose window could still cover the current arrival.
    let mut h = 0usize;
    for &a in idler_arrivals {
        let survives = switch_transmission == 1.0 || rng.random::<f64>() < switch_transmission;
        if !gate.enabled {
            if survives {
                out.push(a);
            }
            continue;
        }
        // Window [t + latency, t + latency + window) covers `a` iff
        // a - latency - window < t <= a - latency.
        let earliest = a - gate.latency - gate.window;
        while h < herald_times.len() && herald_times[h] <= earliest {
            h += 1;
        }
        let open = h < herald_times.len() && herald_times[h] <= a - gate.latency;
        if open && survives {
            out.push(a);
        }
    }
    Ok(out)
}

/// Click detection: efficiency thinning per photon, merged dark counts, then
/// dead time. `photon_arrivals` must be ascending and lie in `[0, duration)`.
pub fn detect(
    photon_arrivals: &[f64],
    detector: &DetectorConfig,
    duration: f64,
    channel: Channel,
    rng: &mut SimRng,
) -> Result<Vec<ClickRecord>> {
    let times = detect_times(photon_arrivals, detector, duration, rng)?;
    Ok(times
        .into_iter()
        .map(|time| ClickRecord { time, channel })
        .collect())
}

pub(crate) fn detect_times(
    photon_arrivals: &[f64],
    detector: &DetectorConfig,
    duration: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    detector.validate("detector")?;
    check_non_negative("duration", duration)?;
    check_sorted("photon arrivals", photon_arrivals)?;
    if let Some(&t) = photon_arrivals
        .iter()
        .find(|&&t| !(0.0..duration).contains(&t))
    {
        return Err(Error::contract(format!(
            "photon arrival {t} s outside [0, {duration})"
        )));
    }

    let detected: Vec<f64> = if detector.efficiency == 1.0 {
        photon_arrivals.to_vec()
    } else {
        photon_arrivals
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < detector.efficiency)
            .collect()
    };
    let dark = generate_dark_counts(detector.dark_rate, duration, rng)?;
    let merged = merge_sorted(&detected, &dark);
    apply_dead_time(&merged, detector.dead_time)
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
