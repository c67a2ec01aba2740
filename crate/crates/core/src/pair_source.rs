//! Per-pulse photon-number generation.
//!
//! Each pump pulse emits a thermally distributed number of signal/idler pairs
//! (one Schmidt mode) plus independent Poissonian noise photons in each arm.
//! The mean pair number scales with the square of the pump power and the
//! noise means scale linearly.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::rng::SimRng;

/// Inverse-CDF tables stop once the cumulative mass reaches `1 - TAIL_CUTOFF`.
pub const TAIL_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Average pump power in mW.
    pub pump_power_mw: f64,
    /// Mean pairs per pulse per mW².
    pub pair_coeff: f64,
    /// Mean signal-arm noise photons per pulse per mW.
    pub noise_coeff_signal: f64,
    /// Mean idler-arm noise photons per pulse per mW.
    pub noise_coeff_idler: f64,
    /// Pump repetition rate in Hz.
    pub rep_rate: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            pump_power_mw: 0.2,
            pair_coeff: 0.5,
            noise_coeff_signal: 0.0,
            noise_coeff_idler: 0.07,
            rep_rate: 1e7,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("source.pump_power_mw", self.pump_power_mw)?;
        check_non_negative("source.pair_coeff", self.pair_coeff)?;
        check_non_negative("source.noise_coeff_signal", self.noise_coeff_signal)?;
        check_non_negative("source.noise_coeff_idler", self.noise_coeff_idler)?;
        check_positive("source.rep_rate", self.rep_rate)
    }

    /// Mean pair number per pulse, `pair_coeff · power²`.
    pub fn mean_pairs(&self) -> f64 {
        self.pair_coeff * self.pump_power_mw * self.pump_power_mw
    }

    pub fn mean_noise_signal(&self) -> f64 {
        self.noise_coeff_signal * self.pump_power_mw
    }

    pub fn mean_noise_idler(&self) -> f64 {
        self.noise_coeff_idler * self.pump_power_mw
    }

    pub fn with_power(&self, pump_power_mw: f64) -> Self {
        Self {
            pump_power_mw,
            ..self.clone()
        }
    }
}

/// Photon numbers generated by one pump pulse. Each pair puts one photon in
/// each arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseEmission {
    pub n_pairs: u32,
    pub n_noise_signal: u32,
    pub n_noise_idler: u32,
}

impl PulseEmission {
    pub fn signal_photons(&self) -> u32 {
        self.n_pairs + self.n_noise_signal
    }

    pub fn idler_photons(&self) -> u32 {
        self.n_pairs + self.n_noise_idler
    }

    pub fn is_empty(&self) -> bool {
        self.n_pairs == 0 && self.n_noise_signal == 0 && self.n_noise_idler == 0
    }
}

fn thermal_pmf_unchecked(mu: f64, n: u64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ratio = mu / (1.0 + mu);
    let tail = if n <= i32::MAX as u64 {
        ratio.powi(n as i32)
    } else {
        ratio.powf(n as f64)
    };
    tail / (1.0 + mu)
}

/// Single-mode thermal photon-number distribution `μⁿ / (1+μ)ⁿ⁺¹`.
pub fn thermal_pmf(mu: f64, n: i64) -> Result<f64> {
    check_non_negative("mu", mu)?;
    if n < 0 {
        return Err(Error::domain(format!("photon number n = {n} must be >= 0")));
    }
    Ok(thermal_pmf_unchecked(mu, n as u64))
}

/// Poisson probability mass, evaluated in log space for stability.
pub(crate) fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut log_fact = 0.0;
    for i in 2..=k {
        log_fact += (i as f64).ln();
    }
    (k as f64 * mean.ln() - mean - log_fact).exp()
}

/// The maximiser of the single-pair probability `P(1) = μ/(1+μ)²`.
///
/// `dP/dμ = (1-μ)/(1+μ)³` vanishes only at `μ = 1`, where `P(1) = 1/4`.
pub fn single_pair_probability_max() -> (f64, f64) {
    let mu_star = 1.0;
    (mu_star, thermal_pmf_unchecked(mu_star, 1))
}

/// Inverse-CDF table over a discrete distribution on `0..len`.
#[derive(Debug, Clone)]
struct CdfTable {
    cdf: Vec<f64>,
}

impl CdfTable {
    fn build(pmf: impl Fn(u64) -> f64) -> Self {
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        let mut n = 0u64;
        loop {
            acc += pmf(n);
            cdf.push(acc.min(1.0));
            if acc >= 1.0 - TAIL_CUTOFF || n > 100_000 {
                break;
            }
            n += 1;
        }
        *cdf.last_mut().expect("table has at least one entry") = 1.0;
        Self { cdf }
    }

    fn p_zero(&self) -> f64 {
        self.cdf[0]
    }

    fn invert(&self, u: f64) -> u32 {
        // Most draws land on the first entries, so scan before bisecting.
        for (n, &c) in self.cdf.iter().take(4).enumerate() {
            if u < c {
                return n as u32;
            }
        }
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u32
    }

    fn sample(&self, rng: &mut SimRng) -> u32 {
        self.invert(rng.random::<f64>())
    }

    /// Draw conditioned on a non-zero outcome.
    fn sample_positive(&self, rng: &mut SimRng) -> u32 {
        let q0 = self.p_zero();
        let u = q0 + rng.random::<f64>() * (1.0 - q0);
        self.invert(u).max(1)
    }
}

/// Precomputed samplers for one source configuration.
#[derive(Debug, Clone)]
pub struct EmissionSampler {
    pairs: CdfTable,
    noise_signal: CdfTable,
    noise_idler: CdfTable,
}

impl EmissionSampler {
    pub fn new(config: &SourceConfig) -> Result<Self> {
        config.validate()?;
        let mu = config.mean_pairs();
        let ms = config.mean_noise_signal();
        let mi = config.mean_noise_idler();
        Ok(Self {
            pairs: CdfTable::build(|n| thermal_pmf_unchecked(mu, n)),
            noise_signal: CdfTable::build(|k| poisson_pmf(ms, k)),
            noise_idler: CdfTable::build(|k| poisson_pmf(mi, k)),
        })
    }

    /// Probability that a pulse emits at least one photon in either arm.
    pub fn p_nonempty(&self) -> f64 {
        1.0 - self.pairs.p_zero() * self.noise_signal.p_zero() * self.noise_idler.p_zero()
    }

    pub fn sample(&self, rng: &mut SimRng) -> PulseEmission {
        PulseEmission {
            n_pairs: self.pairs.sample(rng),
            n_noise_signal: self.noise_signal.sample(rng),
            n_noise_idler: self.noise_idler.sample(rng),
        }
    }

    /// Samples a pulse conditioned on it emitting at least one photon.
    ///
    /// The three counts are independent, so the condition is resolved one
    /// component at a time: pairs first, then signal noise given no pairs, then
    /// idler noise given neither.
    pub fn sample_nonempty(&self, rng: &mut SimRng) -> PulseEmission {
        let qp = self.pairs.p_zero();
        let qs = self.noise_signal.p_zero();
        let qi = self.noise_idler.p_zero();
        let p_nonempty = 1.0 - qp * qs * qi;
        if rng.random::<f64>() * p_nonempty < 1.0 - qp {
            return PulseEmission {
                n_pairs: self.pairs.sample_positive(rng),
                n_noise_signal: self.noise_signal.sample(rng),
                n_noise_idler: self.noise_idler.sample(rng),
            };
        }
        let p_noise = 1.0 - qs * qi;
        if rng.random::<f64>() * p_noise < 1.0 - qs {
            PulseEmission {
                n_pairs: 0,
                n_noise_signal: self.noise_signal.sample_positive(rng),
                n_noise_idler: self.noise_idler.sample(rng),
            }
        } else {
            PulseEmission {
                n_pairs: 0,
                n_noise_signal: 0,
                n_noise_idler: self.noise_idler.sample_positive(rng),
            }
        }
    }

    /// Iterates over the non-empty pulses among `n_pulses`, yielding
    /// `(pulse_index, emission)` in increasing index order.
    ///
    /// Empty pulses are skipped with geometric gaps, which has the same joint
    /// distribution as calling [`EmissionSampler::sample`] once per pulse.
    pub fn nonempty_pulses<'a>(&'a self, n_pulses: u64, rng: &'a mut SimRng) -> NonEmptyPulses<'a> {
        let p = self.p_nonempty();
        let gaps = if p > 0.0 {
            Some(Geometric::new(p.min(1.0)).expect("p in (0, 1]"))
        } else {
            None
        };
        NonEmptyPulses {
            sampler: self,
            rng,
            gaps,
            next: 0,
            n_pulses,
        }
    }
}

pub struct NonEmptyPulses<'a> {
    sampler: &'a EmissionSampler,
    rng: &'a mut SimRng,
    gaps: Option<Geometric>,
    next: u64,
    n_pulses: u64,
}

impl Iterator for NonEmptyPulses<'_> {
    type Item = (u64, PulseEmission);

    fn next(&mut self) -> Option<Self::Item> {
        let gaps = self.gaps.as_ref()?;
        let skip = gaps.sample(self.rng);
        let idx = self.next.checked_add(skip)?;
        if idx >= self.n_pulses {
            self.next = self.n_pulses;
            return None;
        }
        self.next = idx + 1;
        Some((idx, self.sampler.sample_nonempty(self.rng)))
    }
}

/// Draws one pulse. Builds the inverse-CDF tables on every call; loops should
/// hold an [`EmissionSampler`] instead.
pub fn sample_emission(config: &SourceConfig, rng: &mut SimRng) -> Result<PulseEmission> {
    Ok(EmissionSampler::new(config)?.sample(rng))
}
