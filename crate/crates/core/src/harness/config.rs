//! Experiment configuration and its line-oriented text format.
//!
//! ```text
//! # comment
//! source.pump_power_mw = 0.2
//! gate.window_ns = 100
//! run.power_sweep_mw = 0.14, 0.16, 0.18
//! ```
//!
//! Keys are dotted, one per line. Times are in nanoseconds, rates in counts
//! per second. Keys not given keep their defaults.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::optical_chain::{db_to_transmission, ChannelConfig, DetectorConfig, GateConfig};
use crate::pair_source::SourceConfig;

const NS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub channels: ChannelConfig,
    pub gate: GateConfig,
    pub herald_detector: DetectorConfig,
    pub idler_detector: DetectorConfig,
    /// Simulated time per run, seconds.
    pub duration: f64,
    pub seed: u64,
    /// Pump powers for `sweep`, mW.
    pub power_sweep: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: SourceConfig::default(),
            channels: ChannelConfig::default(),
            gate: GateConfig::default(),
            herald_detector: DetectorConfig::silicon_default(),
            idler_detector: DetectorConfig::ingaas_default(),
            duration: 1.0,
            seed: 1,
            power_sweep: vec![0.14, 0.16, 0.18, 0.2, 0.22],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.channels.validate()?;
        self.gate.validate()?;
        self.herald_detector.validate("herald_detector")?;
        self.idler_detector.validate("idler_detector")?;
        check_positive("run.duration_s", self.duration)?;
        for &p in &self.power_sweep {
            check_non_negative("run.power_sweep_mw entry", p)?;
        }
        Ok(())
    }

    /// Herald-arm probability that one signal photon produces a click.
    pub fn eta_signal_total(&self) -> f64 {
        self.channels.signal_transmission * self.herald_detector.efficiency
    }

    /// Idler-arm probability that one photon produces a click, switch included.
    pub fn eta_idler_total(&self) -> f64 {
        self.eta_idler_pre_switch() * self.channels.switch_insertion_transmission
    }

    /// Idler-arm losses and detector efficiency, switch excluded.
    pub fn eta_idler_pre_switch(&self) -> f64 {
        self.channels.idler_transmission_pre_switch * self.idler_detector.efficiency
    }

    /// Sets the herald-arm total efficiency by adjusting the detector
    /// efficiency, and the channel transmission only if that is not enough.
    pub fn set_eta_signal_total(&mut self, eta: f64) {
        let t = self.channels.signal_transmission;
        if t > 0.0 && eta <= t {
            self.herald_detector.efficiency = eta / t;
        } else {
            self.herald_detector.efficiency = 1.0;
            self.channels.signal_transmission = eta;
        }
    }

    /// Idler counterpart of [`Self::set_eta_signal_total`]; the switch
    /// transmission is left alone.
    pub fn set_eta_idler_total(&mut self, eta: f64) {
        let sw = self.channels.switch_insertion_transmission;
        let pre = if sw > 0.0 { eta / sw } else { 0.0 };
        let t = self.channels.idler_transmission_pre_switch;
        if t > 0.0 && pre <= t {
            self.idler_detector.efficiency = pre / t;
        } else {
            self.idler_detector.efficiency = 1.0;
            self.channels.idler_transmission_pre_switch = pre.min(1.0);
        }
    }

    /// Applies one `key = value` entry. Returns `Ok(false)` for keys this type
    /// does not know, so callers can layer extra sections on top.
    pub fn apply(&mut self, entry: &Entry) -> Result<bool> {
        let v = &entry.value;
        match entry.key.as_str() {
            "source.pump_power_mw" => self.source.pump_power_mw = entry.number()?,
            "source.pair_coeff" => self.source.pair_coeff = entry.number()?,
            "source.noise_coeff_signal" => self.source.noise_coeff_signal = entry.number()?,
            "source.noise_coeff_idler" => self.source.noise_coeff_idler = entry.number()?,
            "source.rep_rate_hz" => self.source.rep_rate = entry.number()?,
            "channels.signal_transmission" => self.channels.signal_transmission = entry.number()?,
            "channels.idler_transmission_pre_switch" => {
                self.channels.idler_transmission_pre_switch = entry.number()?
            }
            "channels.switch_insertion_transmission" => {
                self.channels.switch_insertion_transmission = entry.number()?
            }
            "channels.switch_insertion_loss_db" => {
                self.channels.switch_insertion_transmission = db_to_transmission(entry.number()?)
            }
            "channels.idler_delay_ns" => self.channels.idler_delay = entry.number()? * NS,
            "gate.enabled" => self.gate.enabled = entry.boolean()?,
            "gate.latency_ns" => self.gate.latency = entry.number()? * NS,
            "gate.window_ns" => self.gate.window = entry.number()? * NS,
            "gate.arrival_offset_ns" => self.gate.arrival_offset = entry.number()? * NS,
            "run.duration_s" => self.duration = entry.number()?,
            "run.seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| entry.error(format!("'{v}' is not an unsigned 64-bit integer")))?
            }
            "run.power_sweep_mw" => self.power_sweep = entry.numbers()?,
            key => {
                let Some((section, field)) = key.split_once('.') else {
                    return Ok(false);
                };
                let det = match section {
                    "herald_detector" => &mut self.herald_detector,
                    "idler_detector" => &mut self.idler_detector,
                    _ => return Ok(false),
                };
                match field {
                    "efficiency" => det.efficiency = entry.number()?,
                    "dark_rate" => det.dark_rate = entry.number()?,
                    "dead_time_ns" => det.dead_time = entry.number()? * NS,
                    _ => return Ok(false),
                }
            }
        }
        Ok(true)
    }

    /// Parses a config file body. Unknown keys are errors.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut config = Self::default();
        for entry in parse_entries(text, source_name)? {
            if !config.apply(&entry)? {
                return Err(entry.error(format!("unknown key '{}'", entry.key)));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serialises to the text format; `parse` of the result gives back `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let ns = |s: f64| {
            // Undo the 1e-9 scaling error so 250 ns prints as 250.
            let v = s / NS;
            let r = (v * 1e6).round() / 1e6;
            if (r - v).abs() <= 1e-12 * v.abs() { r } else { v }.to_string()
        };
        kv("source.pump_power_mw", self.source.pump_power_mw.to_string());
        kv("source.pair_coeff", self.source.pair_coeff.to_string());
        kv("source.noise_coeff_signal", self.source.noise_coeff_signal.to_string());
        kv("source.noise_coeff_idler", self.source.noise_coeff_idler.to_string());
        kv("source.rep_rate_hz", self.source.rep_rate.to_string());
        kv("channels.signal_transmission", self.channels.signal_transmission.to_string());
        kv(
            "channels.idler_transmission_pre_switch",
            self.channels.idler_transmission_pre_switch.to_string(),
        );
        kv(
            "channels.switch_insertion_transmission",
            self.channels.switch_insertion_transmission.to_string(),
        );
        kv("channels.idler_delay_ns", ns(self.channels.idler_delay));
        kv("gate.enabled", self.gate.enabled.to_string());
        kv("gate.latency_ns", ns(self.gate.latency));
        kv("gate.window_ns", ns(self.gate.window));
        kv("gate.arrival_offset_ns", ns(self.gate.arrival_offset));
        for (name, d) in [
            ("herald_detector", &self.herald_detector),
            ("idler_detector", &self.idler_detector),
        ] {
            kv(&format!("{name}.efficiency"), d.efficiency.to_string());
            kv(&format!("{name}.dark_rate"), d.dark_rate.to_string());
            kv(&format!("{name}.dead_time_ns"), ns(d.dead_time));
        }
        kv("run.duration_s", self.duration.to_string());
        kv("run.seed", self.seed.to_string());
        let sweep: Vec<String> = self.power_sweep.iter().map(|p| p.to_string()).collect();
        kv("run.power_sweep_mw", sweep.join(", "));
        out
    }
}

/// Speed of light in vacuum, m/s.
const C: f64 = 299_792_458.0;

/// Phase-matching parameters and grid for `purity --phasematch`.
///
/// ```text
/// phasematch.group_index_pump = 1.47     # or slowness_pump_s_per_m
/// phasematch.group_index_signal = 1.47
/// phasematch.group_index_idler = 1.465
/// phasematch.fibre_length_m = 0.2
/// phasematch.pump_bandwidth_rad_s = 1.2e12
/// grid.points = 256
/// grid.span_sigmas = 4
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct PhasematchFile {
    pub config: crate::spectral::PhasematchConfig,
    pub points: usize,
    pub span_sigmas: f64,
}

impl PhasematchFile {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut slowness = [None::<f64>; 3];
        let mut length = None;
        let mut bandwidth = None;
        let mut points = 256usize;
        let mut span_sigmas = 4.0;
        for entry in parse_entries(text, source_name)? {
            let key = entry.key.as_str();
            let field = |name: &str| ["pump", "signal", "idler"].iter().position(|f| *f == name);
            if let Some(f) = key.strip_prefix("phasematch.group_index_").and_then(field) {
                slowness[f] = Some(entry.number()? / C);
            } else if let Some(f) = key
                .strip_prefix("phasematch.slowness_")
                .and_then(|k| k.strip_suffix("_s_per_m"))
                .and_then(field)
            {
                slowness[f] = Some(entry.number()?);
            } else if key == "phasematch.fibre_length_m" {
                length = Some(entry.number()?);
            } else if key == "phasematch.pump_bandwidth_rad_s" {
                bandwidth = Some(entry.number()?);
            } else if key == "grid.points" {
                points = entry
                    .value
                    .parse()
                    .map_err(|_| entry.error(format!("'{}' is not a point count", entry.value)))?;
            } else if key == "grid.span_sigmas" {
                span_sigmas = entry.number()?;
            } else {
                return Err(entry.error(format!("unknown key '{key}'")));
            }
        }
        let missing = |what: &str| Error::domain(format!("{source_name}: missing {what}"));
        let [Some(sp), Some(ss), Some(si)] = slowness else {
            return Err(missing("a group index or slowness for pump, signal and idler"));
        };
        let config = crate::spectral::PhasematchConfig {
            slowness_pump: sp,
            slowness_signal: ss,
            slowness_idler: si,
            fibre_length: length.ok_or_else(|| missing("phasematch.fibre_length_m"))?,
            pump_bandwidth: bandwidth.ok_or_else(|| missing("phasematch.pump_bandwidth_rad_s"))?,
        };
        config.validate()?;
        check_positive("grid.span_sigmas", span_sigmas)?;
        Ok(Self {
            config,
            points,
            span_sigmas,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn axes(&self) -> Result<crate::spectral::GridAxes> {
        crate::spectral::GridAxes::covering(&self.config, self.points, self.span_sigmas)
    }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    pub source_name: String,
}

impl Entry {
    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source_name.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    pub fn number(&self) -> Result<f64> {
        parse_number(&self.value).map_err(|m| self.error(format!("{}: {m}", self.key)))
    }

    pub fn numbers(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_number(s).map_err(|m| self.error(format!("{}: {m}", self.key))))
            .collect()
    }

    pub fn boolean(&self) -> Result<bool> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            other => Err(self.error(format!("{}: '{other}' is not a boolean", self.key))),
        }
    }
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !x.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(x)
}

/// Splits a config body into entries. Blank lines and `#` comments are
/// skipped; repeated keys are errors.
pub fn parse_entries(text: &str, source_name: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', found '{body}'")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err(format!("invalid key '{key}'")));
        }
        if value.is_empty() {
            return Err(err(format!("missing value for '{key}'")));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(err(format!("duplicate key '{key}' (first set on line {})", prev.line)));
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
            source_name: source_name.to_string(),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("", "x").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn units_are_converted() {
        let c = ExperimentConfig::parse(
            "gate.window_ns = 80\ngate.arrival_offset_ns = 40 # mid-window\nchannels.idler_delay_ns = 240\n\
             idler_detector.dead_time_ns = 10000\nchannels.switch_insertion_loss_db = 3\n",
            "x",
        )
        .unwrap();
        assert!((c.gate.window - 80e-9).abs() < 1e-20);
        assert!((c.channels.idler_delay - 240e-9).abs() < 1e-20);
        assert!((c.idler_detector.dead_time - 10e-6).abs() < 1e-18);
        assert!((c.channels.switch_insertion_transmission - 0.501187).abs() < 1e-6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("\n\ngate.window_ns = abc\n", 3),
            ("source.pair_coeff = 1\nbogus.key = 2\n", 2),
            ("run.seed = 1\nrun.seed = 2\n", 2),
            ("# c\nno equals sign\n", 2),
            ("gate.enabled = maybe\n", 1),
        ];
        for (text, expected) in cases {
            match ExperimentConfig::parse(text, "f.conf").unwrap_err() {
                Error::Parse { line, source_name, .. } => {
                    assert_eq!(line, expected, "{text:?}");
                    assert_eq!(source_name, "f.conf");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_values_are_domain_errors() {
        assert!(matches!(
            ExperimentConfig::parse("channels.signal_transmission = 1.5\n", "x"),
            Err(Error::Domain(_))
        ));
        assert!(ExperimentConfig::parse("run.duration_s = 0\n", "x").is_err());
        assert!(ExperimentConfig::parse("run.power_sweep_mw = 0.1, -0.2\n", "x").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.source.pair_coeff = 0.123456789012345;
        c.gate.enabled = false;
        c.seed = u64::MAX;
        let back = ExperimentConfig::parse(&c.to_config_string(), "x").unwrap();
        assert_eq!(back.source, c.source);
        assert_eq!(back.seed, c.seed);
        assert_eq!(back.gate.enabled, false);
        assert!((back.gate.latency - c.gate.latency).abs() < 1e-20);
    }

    #[test]
    fn phasematch_file() {
        let text = "phasematch.group_index_pump = 1.47\nphasematch.group_index_signal = 1.47\n\
                    phasematch.slowness_idler_s_per_m = 4.88e-9\nphasematch.fibre_length_m = 0.2\n\
                    phasematch.pump_bandwidth_rad_s = 1.2e12\ngrid.points = 64\n";
        let f = PhasematchFile::parse(text, "p").unwrap();
        assert_eq!(f.points, 64);
        assert_eq!(f.config.slowness_idler, 4.88e-9);
        assert!((f.config.slowness_pump * C - 1.47).abs() < 1e-12);
        assert!(PhasematchFile::parse("phasematch.fibre_length_m = 1\n", "p").is_err());
        assert!(matches!(
            PhasematchFile::parse("grid.colour = red\n", "p"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn efficiency_setters_preserve_totals() {
        let mut c = ExperimentConfig::default();
        c.set_eta_signal_total(0.13);
        assert!((c.eta_signal_total() - 0.13).abs() < 1e-15);
        c.set_eta_signal_total(0.9);
        assert!((c.eta_signal_total() - 0.9).abs() < 1e-15);
        c.set_eta_idler_total(0.004);
        assert!((c.eta_idler_total() - 0.004).abs() < 1e-15);
        c.set_eta_idler_total(0.5);
        assert!((c.eta_idler_total() - 0.5).abs() < 1e-15);
    }
}
