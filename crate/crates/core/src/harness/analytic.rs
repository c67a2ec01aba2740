//! Closed-form per-pulse click probabilities, summed exactly over photon
//! numbers up to a truncation.
//!
//! Pairs, signal noise and idler noise are independent, so every "no click"
//! probability factorises into one-dimensional sums such as
//! `Σₙ P(n) (1 - η)ⁿ`. Dark counts add an independent per-bin click
//! probability `1 - exp(-rate / R_p)`.
//!
//! The gated idler rate uses the window-duty model: a photon in slot `k`
//! passes if the herald clicked in bin `k`, or otherwise if one of the
//! `m = window · R_p - 1` further slots a window can reach was heralded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_source::thermal_pmf;

use super::config::ExperimentConfig;

/// Largest tail mass allowed outside the enumerated photon numbers.
pub const TAIL_LIMIT: f64 = 1e-10;

/// Expected rates in counts per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub n_signal: f64,
    pub n_idler_off: f64,
    pub n_idler_on: f64,
    pub n_coincidence_off: f64,
    pub n_coincidence_on: f64,
    pub rep_rate: f64,
}

impl Expectation {
    pub fn g_off(&self) -> f64 {
        self.n_coincidence_off * self.rep_rate / (self.n_signal * self.n_idler_off)
    }

    pub fn g_on(&self) -> f64 {
        self.n_coincidence_on * self.rep_rate / (self.n_signal * self.n_idler_on)
    }

    pub fn reduction(&self) -> f64 {
        self.n_idler_off / self.n_idler_on
    }

    /// Applies non-paralyzable dead-time losses `N/(1 + Nτ)` to the singles
    /// and the idler live-time fraction to the coincidences.
    ///
    /// Photons arrive on the pulse clock, so only whole blocked periods
    /// matter: `τ` is rounded down to a multiple of `1/R_p`. A herald detector
    /// that recovers within one period loses nothing.
    pub fn with_dead_time(&self, config: &ExperimentConfig) -> Self {
        let r = self.rep_rate;
        let eff = |tau: f64| (tau * r * (1.0 + 1e-12)).floor() / r;
        let ts = eff(config.herald_detector.dead_time);
        let ti = eff(config.idler_detector.dead_time);
        let live_s = 1.0 / (1.0 + self.n_signal * ts);
        let live_off = 1.0 / (1.0 + self.n_idler_off * ti);
        let live_on = 1.0 / (1.0 + self.n_idler_on * ti);
        Self {
            n_signal: self.n_signal * live_s,
            n_idler_off: self.n_idler_off * live_off,
            n_idler_on: self.n_idler_on * live_on,
            n_coincidence_off: self.n_coincidence_off * live_s * live_off,
            n_coincidence_on: self.n_coincidence_on * live_s * live_on,
            rep_rate: r,
        }
    }
}

/// `Σ_{n ≤ N} p(n) xⁿ` for each `x` in `xs`.
fn truncated_pgf(pmf: &[f64], xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let mut acc = 0.0;
            let mut pow = 1.0;
            for &p in pmf {
                acc += p * pow;
                pow *= x;
            }
            acc
        })
        .collect()
}

fn poisson_terms(mean: f64, truncation: usize) -> (Vec<f64>, f64) {
    let mut pmf = Vec::with_capacity(truncation + 1);
    let mut p = (-mean).exp();
    for k in 0..=truncation {
        if k > 0 {
            p *= mean / k as f64;
        }
        pmf.push(p);
    }
    // Tail by summing forward until the terms vanish; avoids 1 - cdf cancellation.
    let mut tail = 0.0;
    let mut k = truncation + 1;
    let mut term = p * mean / k as f64;
    while term > 0.0 && (term > tail * 1e-17 || (k as f64) < mean) {
        tail += term;
        k += 1;
        term *= mean / k as f64;
    }
    (pmf, tail)
}

fn thermal_terms(mu: f64, truncation: usize) -> Result<(Vec<f64>, f64)> {
    let pmf = (0..=truncation)
        .map(|n| thermal_pmf(mu, n as i64))
        .collect::<Result<Vec<f64>>>()?;
    let tail = if mu == 0.0 {
        0.0
    } else {
        (mu / (1.0 + mu)).powi(truncation as i32 + 1)
    };
    Ok((pmf, tail))
}

/// Smallest truncation meeting [`TAIL_LIMIT`] for every photon-number
/// distribution in `config`.
pub fn required_truncation(config: &ExperimentConfig) -> Result<usize> {
    config.source.validate()?;
    for n in 1..100_000usize {
        if tail_mass(config, n)? <= TAIL_LIMIT {
            return Ok(n);
        }
    }
    Err(Error::domain("mean photon numbers too large to enumerate"))
}

fn tail_mass(config: &ExperimentConfig, truncation: usize) -> Result<f64> {
    let s = &config.source;
    let (_, t_pairs) = thermal_terms(s.mean_pairs(), truncation)?;
    let (_, t_ns) = poisson_terms(s.mean_noise_signal(), truncation);
    let (_, t_ni) = poisson_terms(s.mean_noise_idler(), truncation);
    Ok(t_pairs.max(t_ns).max(t_ni))
}

/// Expected rates with photon numbers enumerated up to `truncation`.
///
/// Dead time is not modelled here; see [`Expectation::with_dead_time`].
pub fn analytic_expectations(config: &ExperimentConfig, truncation: usize) -> Result<Expectation> {
    config.validate()?;
    let s = &config.source;
    let r = s.rep_rate;
    let (pairs, t_pairs) = thermal_terms(s.mean_pairs(), truncation)?;
    let (noise_s, t_ns) = poisson_terms(s.mean_noise_signal(), truncation);
    let (noise_i, t_ni) = poisson_terms(s.mean_noise_idler(), truncation);
    let tail = t_pairs.max(t_ns).max(t_ni);
    if tail > TAIL_LIMIT {
        return Err(Error::Truncation {
            truncation,
            tail,
            limit: TAIL_LIMIT,
        });
    }

    let a_s = 1.0 - config.eta_signal_total();
    let a_i = 1.0 - config.eta_idler_total();
    let q_s = (-config.herald_detector.dark_rate / r).exp();
    let q_i = (-config.idler_detector.dark_rate / r).exp();

    let tp = truncated_pgf(&pairs, &[a_s, a_i, a_s * a_i]);
    let ps = truncated_pgf(&noise_s, &[a_s])[0];
    let pi = truncated_pgf(&noise_i, &[a_i])[0];

    // "No click" probabilities; `_ph` ignores dark counts.
    let none_s = q_s * tp[0] * ps;
    let none_i_ph = tp[1] * pi;
    let none_i = q_i * none_i_ph;
    let none_both_ph = q_s * tp[2] * ps * pi;

    let p_s = 1.0 - none_s;
    let p_i = 1.0 - none_i;
    let p_si = 1.0 - none_s - none_i + q_i * none_both_ph;

    let herald_and_photon = 1.0 - none_s - none_i_ph + none_both_ph;
    let photon_unheralded = (1.0 - none_i_ph) - herald_and_photon;
    let extra_slots = (config.gate.window * r - 1.0).max(0.0);
    let passed = herald_and_photon + photon_unheralded * (1.0 - (1.0 - p_s).powf(extra_slots));
    let p_i_on = 1.0 - q_i * (1.0 - passed);

    Ok(Expectation {
        n_signal: p_s * r,
        n_idler_off: p_i * r,
        n_idler_on: p_i_on * r,
        n_coincidence_off: p_si * r,
        // The own-slot photon always passes, so the gate removes no coincidences.
        n_coincidence_on: p_si * r,
        rep_rate: r,
    })
}

/// [`analytic_expectations`] at the smallest adequate truncation.
pub fn expectations(config: &ExperimentConfig) -> Result<Expectation> {
    analytic_expectations(config, required_truncation(config)?)
}
