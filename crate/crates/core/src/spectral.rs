//! Joint spectral amplitudes, Schmidt decomposition and heralded purity.
//!
//! The amplitude over signal/idler detunings `(νs, νi)` is modelled as
//!
//! ```text
//! f(νs, νi) = α(νs + νi) · sinc(Δk L / 2)
//! α(Ω)      = exp(-Ω² / (4 σp²))                 (pump width √2 σp)
//! Δk L / 2  = κs νs + κi νi,  κj = (sj - sp) L / 2
//! ```
//!
//! with `sj` the group slowness (inverse group velocity) of each field.
//! Matching the signal slowness to the pump removes the `νs` dependence of
//! the phase-matching function, which is what makes the state nearly
//! separable.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

/// Normalisation tolerance on `Σ|f|² dνs dνi`.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Points required across the main sinc lobe before a warning is raised.
pub const MIN_POINTS_PER_LOBE: f64 = 8.0;
/// Equivalent-Gaussian fit of `sinc²(x)`: `sinc²(x) ≈ exp(-SINC_GAUSS · x²)`.
const SINC_GAUSS: f64 = 0.193 * 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasematchConfig {
    /// Group slowness of the pump, s/m.
    pub slowness_pump: f64,
    pub slowness_signal: f64,
    pub slowness_idler: f64,
    /// Fibre length, m.
    pub fibre_length: f64,
    /// Pump angular-frequency standard deviation, rad/s.
    pub pump_bandwidth: f64,
}

impl PhasematchConfig {
    /// Enforces `v_s ≤ v_p ≤ v_i`, i.e. signal slowness ≥ pump ≥ idler.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("slowness_pump", self.slowness_pump),
            ("slowness_signal", self.slowness_signal),
            ("slowness_idler", self.slowness_idler),
        ] {
            check_positive(name, v)?;
        }
        check_positive("fibre_length", self.fibre_length)?;
        check_positive("pump_bandwidth", self.pump_bandwidth)?;
        if !(self.slowness_signal >= self.slowness_pump && self.slowness_pump >= self.slowness_idler) {
            return Err(Error::domain(format!(
                "group velocities must satisfy v_s <= v_p <= v_i (slowness s {} , p {}, i {})",
                self.slowness_signal, self.slowness_pump, self.slowness_idler
            )));
        }
        Ok(())
    }

    /// `(κs, κi)`: phase-mismatch slopes `(sj - sp) L / 2`.
    pub fn mismatch_slopes(&self) -> (f64, f64) {
        let half = 0.5 * self.fibre_length;
        (
            (self.slowness_signal - self.slowness_pump) * half,
            (self.slowness_idler - self.slowness_pump) * half,
        )
    }

    /// Standard deviations of the signal and idler marginals of `|f|²`,
    /// using the Gaussian equivalent of the sinc.
    pub fn marginal_widths(&self) -> Result<(f64, f64)> {
        let (ks, ki) = self.mismatch_slopes();
        let inv_var = 1.0 / (self.pump_bandwidth * self.pump_bandwidth);
        // |f|² = exp(-½ vᵀ P v) with precision matrix P.
        let a = inv_var + 2.0 * SINC_GAUSS * ks * ks;
        let b = inv_var + 2.0 * SINC_GAUSS * ks * ki;
        let d = inv_var + 2.0 * SINC_GAUSS * ki * ki;
        let det = a * d - b * b;
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::domain(
                "phase matching does not confine the joint spectrum (κs = κi = 0)",
            ));
        }
        Ok(((d / det).sqrt(), (a / det).sqrt()))
    }
}

/// A uniform frequency axis `start + k · step`, `k < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    /// `len` points evenly spaced over `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, len: usize) -> Self {
        let step = if len > 1 {
            2.0 * half_width / (len - 1) as f64
        } else {
            0.0
        };
        Self {
            start: -half_width,
            step,
            len,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.value(k)).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.len < 2 || !(self.step > 0.0) || !self.step.is_finite() || !self.start.is_finite() {
            return Err(Error::domain(format!(
                "{name} axis must have >= 2 points and a positive finite step (len {}, step {})",
                self.len, self.step
            )));
        }
        Ok(())
    }
}

/// Signal and idler axes for a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub signal: Axis,
    pub idler: Axis,
}

impl GridAxes {
    /// `points × points` covering ±`span_sigmas` marginal standard deviations.
    pub fn covering(config: &PhasematchConfig, points: usize, span_sigmas: f64) -> Result<Self> {
        config.validate()?;
        let (ws, wi) = config.marginal_widths()?;
        Ok(Self {
            signal: Axis::symmetric(span_sigmas * ws, points),
            idler: Axis::symmetric(span_sigmas * wi, points),
        })
    }

    /// The default 256 × 256 grid over ±4σ.
    pub fn default_for(config: &PhasematchConfig) -> Result<Self> {
        Self::covering(config, 256, 4.0)
    }
}

/// Returns a message when the grid puts fewer than eight points across the
/// main sinc lobe along either axis.
pub fn resolution_warning(config: &PhasematchConfig, axes: &GridAxes) -> Option<String> {
    let (ks, ki) = config.mismatch_slopes();
    let mut issues = Vec::new();
    for (name, kappa, axis) in [("signal", ks, axes.signal), ("idler", ki, axes.idler)] {
        if kappa == 0.0 {
            continue;
        }
        // Main lobe spans |κ ν| < π.
        let lobe = 2.0 * std::f64::consts::PI / kappa.abs();
        let points = lobe / axis.step;
        if points < MIN_POINTS_PER_LOBE {
            issues.push(format!(
                "{name} axis resolves the main sinc lobe with {points:.1} points (< {MIN_POINTS_PER_LOBE})"
            ));
        }
    }
    (!issues.is_empty()).then(|| issues.join("; "))
}

/// Discretised joint spectral amplitude, indexed `[signal, idler]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JsaGrid {
    pub axes: GridAxes,
    pub amplitude: DMatrix<Complex64>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl JsaGrid {
    /// Wraps an amplitude matrix, normalising it so `Σ|f|² dνs dνi = 1`.
    pub fn new(axes: GridAxes, amplitude: DMatrix<Complex64>) -> Result<Self> {
        axes.signal.validate("signal")?;
        axes.idler.validate("idler")?;
        if amplitude.nrows() != axes.signal.len || amplitude.ncols() != axes.idler.len {
            return Err(Error::domain(format!(
                "amplitude is {}x{} but axes are {}x{}",
                amplitude.nrows(),
                amplitude.ncols(),
                axes.signal.len,
                axes.idler.len
            )));
        }
        if amplitude.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("amplitude contains non-finite values"));
        }
        let mut grid = Self { axes, amplitude };
        let norm = grid.norm_squared();
        if !(norm > 0.0) {
            return Err(Error::domain("amplitude is identically zero"));
        }
        grid.amplitude.unscale_mut(norm.sqrt());
        Ok(grid)
    }

    /// Builds an amplitude from a measured intensity, taking `f = √JSI`
    /// (flat spectral phase).
    pub fn from_intensity(axes: GridAxes, intensity: &DMatrix<f64>) -> Result<Self> {
        if intensity.iter().any(|&x| x < 0.0) {
            return Err(Error::domain("joint spectral intensity must be non-negative"));
        }
        Self::new(axes, intensity.map(|x| Complex64::new(x.sqrt(), 0.0)))
    }

    pub fn cell_area(&self) -> f64 {
        self.axes.signal.step * self.axes.idler.step
    }

    /// `Σ|f|² dνs dνi`.
    pub fn norm_squared(&self) -> f64 {
        self.amplitude.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_area()
    }

    pub fn intensity(&self) -> DMatrix<f64> {
        self.amplitude.map(|z| z.norm_sqr())
    }

    pub fn transpose(&self) -> Self {
        Self {
            axes: GridAxes {
                signal: self.axes.idler,
                idler: self.axes.signal,
            },
            amplitude: self.amplitude.transpose(),
        }
    }
}

/// Samples the Gaussian-pump × sinc phase-matching amplitude on `axes`.
pub fn build_jsa(config: &PhasematchConfig, axes: &GridAxes) -> Result<JsaGrid> {
    config.validate()?;
    axes.signal.validate("signal")?;
    axes.idler.validate("idler")?;
    let (ks, ki) = config.mismatch_slopes();
    let four_var = 4.0 * config.pump_bandwidth * config.pump_bandwidth;
    let amplitude = DMatrix::from_fn(axes.signal.len, axes.idler.len, |r, c| {
        let vs = axes.signal.value(r);
        let vi = axes.idler.value(c);
        let sum = vs + vi;
        let pump = (-sum * sum / four_var).exp();
        Complex64::new(pump * sinc(ks * vs + ki * vi), 0.0)
    });
    JsaGrid::new(*axes, amplitude)
}

/// Schmidt coefficients λₙ, descending, summing to one.
///
/// These are the squared singular values of `f · √(dνs dνi)`.
pub fn schmidt_decompose(jsa: &JsaGrid) -> Result<Vec<f64>> {
    let norm = jsa.norm_squared();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::contract(format!(
            "JSA is not normalised: Σ|f|² dA = {norm}"
        )));
    }
    let weight = jsa.cell_area().sqrt();
    let singular = if jsa.amplitude.iter().all(|z| z.im == 0.0) {
        let real = jsa.amplitude.map(|z| z.re * weight);
        real.singular_values().iter().copied().collect::<Vec<f64>>()
    } else {
        let scaled = jsa.amplitude.map(|z| z * weight);
        scaled.singular_values().iter().copied().collect::<Vec<f64>>()
    };
    let mut lambdas: Vec<f64> = singular.iter().map(|s| s * s).collect();
    let total: f64 = lambdas.iter().sum();
    lambdas.iter_mut().for_each(|l| *l /= total);
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok(lambdas)
}

/// Heralded-state purity `Σ λₙ²`.
pub fn purity(lambdas: &[f64]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::domain("empty Schmidt spectrum"));
    }
    if let Some(&l) = lambdas.iter().find(|&&l| !(l >= 0.0)) {
        return Err(Error::domain(format!("negative Schmidt coefficient {l}")));
    }
    let total: f64 = lambdas.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("Schmidt coefficients sum to {total}, not 1")));
    }
    Ok(lambdas.iter().map(|l| l * l).sum())
}

/// Effective number of Schmidt modes, `1 / purity`.
pub fn schmidt_number(lambdas: &[f64]) -> Result<f64> {
    Ok(1.0 / purity(lambdas)?)
}

/// Reduced-state purity from the marginal second-order coherence,
/// `P = g2 - 1`, valid for `g2 ∈ [1, 2]`.
pub fn purity_from_g2(g2: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&g2) {
        return Err(Error::domain(format!(
            "marginal g2 = {g2} is outside [1, 2] and cannot come from a thermal marginal"
        )));
    }
    Ok(g2 - 1.0)
}

pub fn g2_from_purity(purity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&purity) {
        return Err(Error::domain(format!("purity {purity} is outside [0, 1]")));
    }
    Ok(1.0 + purity)
}

const JSA_MAGIC: &str = "# noisegate jsa v1";

/// Text matrix format:
///
/// ```text
/// # noisegate jsa v1
/// signal_axis <len> <start> <step>
/// idler_axis <len> <start> <step>
/// <re> <im> <re> <im> ...      one line per signal sample, idler along the line
/// ```
pub fn format_jsa(jsa: &JsaGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{JSA_MAGIC}");
    for (name, a) in [("signal_axis", jsa.axes.signal), ("idler_axis", jsa.axes.idler)] {
        let _ = writeln!(out, "{name} {} {:e} {:e}", a.len, a.start, a.step);
    }
    for r in 0..jsa.amplitude.nrows() {
        let row: Vec<String> = (0..jsa.amplitude.ncols())
            .map(|c| {
                let z = jsa.amplitude[(r, c)];
                format!("{:e} {:e}", z.re, z.im)
            })
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_jsa(path: &Path, jsa: &JsaGrid) -> Result<()> {
    std::fs::write(path, format_jsa(jsa)).map_err(|e| Error::io(path, e))
}

/// Parses the JSA text format. The amplitude is renormalised on load.
pub fn parse_jsa(reader: impl Read, source_name: &str) -> Result<JsaGrid> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut axes: [Option<Axis>; 2] = [None, None];
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| err(line_no, e.to_string()))?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut fields = body.split_whitespace();
        let head = fields.next().unwrap_or("");
        let slot = match head {
            "signal_axis" => Some(0),
            "idler_axis" => Some(1),
            _ => None,
        };
        if let Some(slot) = slot {
            let vals: Vec<&str> = fields.collect();
            if vals.len() != 3 {
                return Err(err(line_no, format!("{head} needs <len> <start> <step>")));
            }
            let len = vals[0]
                .parse::<usize>()
                .map_err(|_| err(line_no, format!("bad length '{}'", vals[0])))?;
            let start = vals[1]
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("bad start '{}'", vals[1])))?;
            let step = vals[2]
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("bad step '{}'", vals[2])))?;
            axes[slot] = Some(Axis { start, step, len });
            continue;
        }
        let nums: Vec<f64> = body
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(line_no, format!("bad number '{t}'"))))
            .collect::<Result<_>>()?;
        if nums.len() % 2 != 0 {
            return Err(err(line_no, "row has an odd number of values".into()));
        }
        rows.push(nums.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
    }
    let (Some(signal), Some(idler)) = (axes[0], axes[1]) else {
        return Err(err(0, "missing signal_axis or idler_axis header".into()));
    };
    if rows.len() != signal.len || rows.iter().any(|r| r.len() != idler.len) {
        return Err(err(
            0,
            format!(
                "expected {} rows of {} complex values, found {} rows",
                signal.len,
                idler.len,
                rows.len()
            ),
        ));
    }
    let amplitude = DMatrix::from_fn(signal.len, idler.len, |r, c| rows[r][c]);
    JsaGrid::new(GridAxes { signal, idler }, amplitude)
}

pub fn read_jsa(path: &Path) -> Result<JsaGrid> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsa(file, &path.display().to_string())
}

/// Long-format CSV of `|f|²` for plotting.
pub fn format_jsi_csv(jsa: &JsaGrid) -> String {
    let mut out = String::from("signal_detuning,idler_detuning,intensity\n");
    for r in 0..jsa.amplitude.nrows() {
        for c in 0..jsa.amplitude.ncols() {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e}",
                jsa.axes.signal.value(r),
                jsa.axes.idler.value(c),
                jsa.amplitude[(r, c)].norm_sqr()
            );
        }
    }
    out
}

pub fn write_jsi_csv(path: &Path, jsa: &JsaGrid) -> Result<()> {
    std::fs::write(path, format_jsi_csv(jsa)).map_err(|e| Error::io(path, e))
}
