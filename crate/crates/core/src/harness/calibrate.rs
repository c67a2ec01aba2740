//! Fits source and efficiency parameters to observed operating points.
//!
//! The forward model is the analytic expectation with dead-time losses. The
//! objective is the sum of squared relative errors over `N_s`, `N_i` gate off
//! and `N_i` gate on at every target. The fit works in log-parameter space:
//! a few rounds of coordinate descent over a fixed grid, then cyclic
//! golden-section line searches.
//!
//! A single operating point gives three equations for four parameters, so at
//! least one parameter has to be fixed. The result carries a profile of the
//! objective along each parameter (the others re-fitted) to show which
//! directions the data actually constrain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::analytic::{expectations, Expectation};
use super::config::{parse_entries, ExperimentConfig};

/// Default bound on the largest relative residual of an accepted fit.
pub const DEFAULT_THRESHOLD: f64 = 0.10;
const GRID_POINTS: usize = 61;
const GRID_ROUNDS: usize = 3;
const MAX_CYCLES: usize = 400;
const PROFILE_POINTS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    PairCoeff,
    NoiseCoeffIdler,
    EtaSignalTotal,
    EtaIdlerTotal,
}

impl Param {
    pub const ALL: [Param; 4] = [
        Param::PairCoeff,
        Param::NoiseCoeffIdler,
        Param::EtaSignalTotal,
        Param::EtaIdlerTotal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::PairCoeff => "pair_coeff",
            Param::NoiseCoeffIdler => "noise_coeff_idler",
            Param::EtaSignalTotal => "eta_signal_total",
            Param::EtaIdlerTotal => "eta_idler_total",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn default_range(self) -> (f64, f64) {
        match self {
            Param::PairCoeff => (1e-4, 1e2),
            Param::NoiseCoeffIdler => (1e-5, 10.0),
            Param::EtaSignalTotal => (1e-4, 1.0),
            Param::EtaIdlerTotal => (1e-5, 1.0),
        }
    }

    fn get(self, c: &ExperimentConfig) -> f64 {
        match self {
            Param::PairCoeff => c.source.pair_coeff,
            Param::NoiseCoeffIdler => c.source.noise_coeff_idler,
            Param::EtaSignalTotal => c.eta_signal_total(),
            Param::EtaIdlerTotal => c.eta_idler_total(),
        }
    }

    fn set(self, c: &mut ExperimentConfig, v: f64) {
        match self {
            Param::PairCoeff => c.source.pair_coeff = v,
            Param::NoiseCoeffIdler => c.source.noise_coeff_idler = v,
            Param::EtaSignalTotal => c.set_eta_signal_total(v),
            Param::EtaIdlerTotal => c.set_eta_idler_total(v),
        }
    }
}

/// Observed rates at one pump power, counts per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub power_mw: f64,
    pub n_signal: f64,
    pub n_idler_off: f64,
    pub n_idler_on: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProblem {
    /// Supplies the fixed parameters and every setting that is not fitted.
    pub base: ExperimentConfig,
    pub targets: Vec<Target>,
    pub free: Vec<Param>,
    /// Search interval per parameter, indexed like [`Param::ALL`].
    pub ranges: [(f64, f64); 4],
    pub threshold: f64,
}

impl CalibrationProblem {
    /// Fits pair and noise coefficients and the idler efficiency; the herald
    /// efficiency stays at its value in `base`.
    pub fn new(base: ExperimentConfig, targets: Vec<Target>) -> Self {
        Self {
            base,
            targets,
            free: vec![Param::PairCoeff, Param::NoiseCoeffIdler, Param::EtaIdlerTotal],
            ranges: Param::ALL.map(Param::default_range),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    fn range(&self, p: Param) -> (f64, f64) {
        self.ranges[Param::ALL.iter().position(|&q| q == p).unwrap()]
    }

    /// Parses a targets file: any experiment-config key, plus
    ///
    /// ```text
    /// target.<label>.power_mw = 0.2
    /// target.<label>.n_s = 40000
    /// target.<label>.n_i_off = 2000
    /// target.<label>.n_i_on = 290
    /// fit.free = pair_coeff, noise_coeff_idler, eta_idler_total
    /// fit.range.pair_coeff = 1e-3, 10
    /// fit.threshold = 0.1
    /// ```
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut base = ExperimentConfig::default();
        let mut problem = Self::new(ExperimentConfig::default(), Vec::new());
        let mut labels: Vec<(String, [Option<f64>; 4], usize)> = Vec::new();
        for entry in parse_entries(text, source_name)? {
            if base.apply(&entry)? {
                continue;
            }
            let key = entry.key.as_str();
            if let Some(rest) = key.strip_prefix("target.") {
                let Some((label, field)) = rest.rsplit_once('.') else {
                    return Err(entry.error(format!("expected target.<label>.<field>, found '{key}'")));
                };
                let slot = match field {
                    "power_mw" => 0,
                    "n_s" => 1,
                    "n_i_off" => 2,
                    "n_i_on" => 3,
                    _ => return Err(entry.error(format!("unknown target field '{field}'"))),
                };
                let idx = match labels.iter().position(|(l, _, _)| l == label) {
                    Some(i) => i,
                    None => {
                        labels.push((label.to_string(), [None; 4], entry.line));
                        labels.len() - 1
                    }
                };
                labels[idx].1[slot] = Some(entry.number()?);
            } else if key == "fit.free" {
                problem.free = entry
                    .value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        Param::from_name(s).ok_or_else(|| entry.error(format!("unknown parameter '{s}'")))
                    })
                    .collect::<Result<_>>()?;
            } else if let Some(name) = key.strip_prefix("fit.range.") {
                let p = Param::from_name(name)
                    .ok_or_else(|| entry.error(format!("unknown parameter '{name}'")))?;
                let v = entry.numbers()?;
                if v.len() != 2 || !(v[0] > 0.0 && v[1] > v[0]) {
                    return Err(entry.error(format!("{key} needs 'lo, hi' with 0 < lo < hi")));
                }
                let i = Param::ALL.iter().position(|&q| q == p).unwrap();
                problem.ranges[i] = (v[0], v[1]);
            } else if key == "fit.threshold" {
                problem.threshold = entry.number()?;
            } else {
                return Err(entry.error(format!("unknown key '{key}'")));
            }
        }
        base.validate()?;
        for (label, fields, line) in labels {
            let missing: Vec<&str> = ["power_mw", "n_s", "n_i_off", "n_i_on"]
                .iter()
                .zip(fields.iter())
                .filter(|(_, v)| v.is_none())
                .map(|(n, _)| *n)
                .collect();
            if !missing.is_empty() {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line,
                    message: format!("target '{label}' is missing {}", missing.join(", ")),
                });
            }
            problem.targets.push(Target {
                power_mw: fields[0].unwrap(),
                n_signal: fields[1].unwrap(),
                n_idler_off: fields[2].unwrap(),
                n_idler_on: fields[3].unwrap(),
            });
        }
        problem.base = base;
        Ok(problem)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub power_mw: f64,
    pub quantity: String,
    pub target: f64,
    pub model: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub objective: f64,
    pub max_relative_residual: f64,
}

/// Objective along one parameter with the free parameters re-fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub parameter: Param,
    pub points: Vec<ProfilePoint>,
    /// True when a point away from the optimum still fits every target within
    /// 1%: the data do not pin this parameter down.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pair_coeff: f64,
    pub noise_coeff_idler: f64,
    pub eta_signal_total: f64,
    pub eta_idler_total: f64,
    pub free: Vec<Param>,
    pub objective: f64,
    pub max_relative_residual: f64,
    pub residuals: Vec<Residual>,
    pub landscape: Vec<Profile>,
    /// `base` with the fitted values substituted and the pump set to the
    /// first target's power.
    pub config: ExperimentConfig,
}

/// Forward model: analytic expectation at `power` with dead-time losses.
pub fn model_rates(config: &ExperimentConfig, power_mw: f64) -> Result<Expectation> {
    let mut c = config.clone();
    c.source.pump_power_mw = power_mw;
    Ok(expectations(&c)?.with_dead_time(&c))
}

struct Fitter<'a> {
    problem: &'a CalibrationProblem,
}

impl Fitter<'_> {
    fn config_at(&self, u: &[f64; 4]) -> ExperimentConfig {
        let mut c = self.problem.base.clone();
        for (p, &x) in Param::ALL.iter().zip(u) {
            p.set(&mut c, x.exp());
        }
        c
    }

    fn residuals(&self, u: &[f64; 4]) -> Result<Vec<Residual>> {
        let c = self.config_at(u);
        let mut out = Vec::with_capacity(3 * self.problem.targets.len());
        for t in &self.problem.targets {
            let m = model_rates(&c, t.power_mw)?;
            for (q, target, model) in [
                ("n_signal", t.n_signal, m.n_signal),
                ("n_idler_off", t.n_idler_off, m.n_idler_off),
                ("n_idler_on", t.n_idler_on, m.n_idler_on),
            ] {
                out.push(Residual {
                    power_mw: t.power_mw,
                    quantity: q.to_string(),
                    target,
                    model,
                    relative: (model - target) / target,
                });
            }
        }
        Ok(out)
    }

    fn objective(&self, u: &[f64; 4]) -> f64 {
        match self.residuals(u) {
            Ok(r) => r.iter().map(|r| r.relative * r.relative).sum(),
            Err(_) => f64::INFINITY,
        }
    }

    fn bounds(&self, j: usize) -> (f64, f64) {
        let (lo, hi) = self.problem.range(Param::ALL[j]);
        (lo.ln(), hi.ln())
    }

    fn grid_step(&self, j: usize) -> f64 {
        let (lo, hi) = self.bounds(j);
        (hi - lo) / (GRID_POINTS - 1) as f64
    }

    fn grid_scan(&self, u: &mut [f64; 4], j: usize) -> f64 {
        let (lo, _) = self.bounds(j);
        let step = self.grid_step(j);
        let mut best = (self.objective(u), u[j]);
        for k in 0..GRID_POINTS {
            let mut trial = *u;
            trial[j] = lo + k as f64 * step;
            let f = self.objective(&trial);
            if f < best.0 {
                best = (f, trial[j]);
            }
        }
        u[j] = best.1;
        best.0
    }

    /// Golden-section search for coordinate `j` within `±half_width`.
    fn golden(&self, u: &mut [f64; 4], j: usize, half_width: f64) -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let (blo, bhi) = self.bounds(j);
        let mut a = (u[j] - half_width).max(blo);
        let mut b = (u[j] + half_width).min(bhi);
        let f_at = |x: f64| {
            let mut t = *u;
            t[j] = x;
            self.objective(&t)
        };
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = f_at(c);
        let mut fd = f_at(d);
        while b - a > 1e-12 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = f_at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = f_at(d);
            }
        }
        let x = 0.5 * (a + b);
        let fx = f_at(x);
        let current = self.objective(u);
        if fx < current {
            u[j] = x;
            fx
        } else {
            current
        }
    }

    fn refine(&self, u: &mut [f64; 4], free: &[usize]) -> f64 {
        let mut f = self.objective(u);
        for _ in 0..MAX_CYCLES {
            let before = f;
            for &j in free {
                f = self.golden(u, j, self.grid_step(j));
            }
            if before - f <= 1e-14 * before.max(1e-300) {
                break;
            }
        }
        f
    }

    fn fit(&self, u: &mut [f64; 4], free: &[usize]) -> f64 {
        for _ in 0..GRID_ROUNDS {
            for &j in free {
                self.grid_scan(u, j);
            }
        }
        self.refine(u, free)
    }
}

fn check_targets(problem: &CalibrationProblem) -> Result<()> {
    if problem.targets.is_empty() {
        return Err(Error::Calibration("no targets given".into()));
    }
    if problem.free.is_empty() {
        return Err(Error::Calibration("no free parameters".into()));
    }
    let r = problem.base.source.rep_rate;
    for t in &problem.targets {
        for (name, v) in [
            ("power_mw", t.power_mw),
            ("n_s", t.n_signal),
            ("n_i_off", t.n_idler_off),
            ("n_i_on", t.n_idler_on),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Calibration(format!(
                    "infeasible target at {} mW: {name} = {v} must be positive",
                    t.power_mw
                )));
            }
        }
        if t.n_idler_on > t.n_idler_off {
            return Err(Error::Calibration(format!(
                "infeasible target at {} mW: gated idler rate {} exceeds ungated rate {}",
                t.power_mw, t.n_idler_on, t.n_idler_off
            )));
        }
        if t.n_signal >= r || t.n_idler_off >= r {
            return Err(Error::Calibration(format!(
                "infeasible target at {} mW: rates must stay below the {r} Hz repetition rate",
                t.power_mw
            )));
        }
    }
    Ok(())
}

pub fn calibrate(problem: &CalibrationProblem) -> Result<Calibration> {
    problem.base.validate()?;
    check_targets(problem)?;
    let fitter = Fitter { problem };
    let free: Vec<usize> = Param::ALL
        .iter()
        .enumerate()
        .filter(|(_, p)| problem.free.contains(p))
        .map(|(i, _)| i)
        .collect();

    let mut u = [0.0; 4];
    for (j, p) in Param::ALL.iter().enumerate() {
        let (lo, hi) = problem.range(*p);
        let v = p.get(&problem.base);
        u[j] = if free.contains(&j) && !(lo..=hi).contains(&v) {
            (lo * hi).sqrt().ln()
        } else {
            v.max(f64::MIN_POSITIVE).ln()
        };
    }
    let objective = fitter.fit(&mut u, &free);
    let residuals = fitter.residuals(&u)?;
    let max_rel = residuals.iter().map(|r| r.relative.abs()).fold(0.0, f64::max);

    let mut landscape = Vec::new();
    for (j, &p) in Param::ALL.iter().enumerate() {
        let others: Vec<usize> = free.iter().copied().filter(|&k| k != j).collect();
        let mut points = Vec::with_capacity(PROFILE_POINTS);
        for k in 0..PROFILE_POINTS {
            let factor = 2f64.powf(-1.0 + 2.0 * k as f64 / (PROFILE_POINTS - 1) as f64);
            let mut v = u;
            v[j] = u[j] + factor.ln();
            let f = if others.is_empty() {
                fitter.objective(&v)
            } else {
                fitter.refine(&mut v, &others)
            };
            let m = fitter
                .residuals(&v)
                .map(|r| r.iter().map(|r| r.relative.abs()).fold(0.0, f64::max))
                .unwrap_or(f64::INFINITY);
            points.push(ProfilePoint {
                value: v[j].exp(),
                objective: f,
                max_relative_residual: m,
            });
        }
        let centre = PROFILE_POINTS / 2;
        let degenerate = points
            .iter()
            .enumerate()
            .any(|(k, pt)| k != centre && pt.max_relative_residual < 0.01);
        landscape.push(Profile {
            parameter: p,
            points,
            degenerate,
        });
    }

    let mut config = fitter.config_at(&u);
    config.source.pump_power_mw = problem.targets[0].power_mw;
    let result = Calibration {
        pair_coeff: u[0].exp(),
        noise_coeff_idler: u[1].exp(),
        eta_signal_total: u[2].exp(),
        eta_idler_total: u[3].exp(),
        free: problem.free.clone(),
        objective,
        max_relative_residual: max_rel,
        residuals,
        landscape,
        config,
    };
    if !(max_rel <= problem.threshold) {
        let detail: Vec<String> = result
            .residuals
            .iter()
            .map(|r| {
                format!(
                    "{} mW {}: target {} model {:.4} ({:+.1}%)",
                    r.power_mw,
                    r.quantity,
                    r.target,
                    r.model,
                    100.0 * r.relative
                )
            })
            .collect();
        return Err(Error::Calibration(format!(
            "infeasible targets: largest relative residual {:.3} exceeds {}; {}",
            max_rel,
            problem.threshold,
            detail.join("; ")
        )));
    }
    Ok(result)
}
