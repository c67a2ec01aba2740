//! Pulse-indexed coincidence counting and the signal-idler cross-correlation.
//!
//! Clicks are binned by pump period after removing each channel's fixed
//! delay. A channel counts at most once per bin, so the per-bin probabilities
//! are `p = N / R_p` and the cross-correlation is
//! `g = p_si / (p_s p_i) = N_si R_p / (N_s N_i)`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::optical_chain::{Channel, ClickRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    /// Signal (herald) count rate N_s, per second.
    pub n_signal: f64,
    /// Idler count rate N_i, per second.
    pub n_idler: f64,
    /// Coincidence rate N_si, per second.
    pub n_coincidence: f64,
    /// Integration time, seconds.
    pub duration: f64,
    /// Pump repetition rate R_p, Hz.
    pub rep_rate: f64,
    pub signal_counts: u64,
    pub idler_counts: u64,
    pub coincidence_counts: u64,
}

impl CountSummary {
    pub fn from_counts(
        signal_counts: u64,
        idler_counts: u64,
        coincidence_counts: u64,
        duration: f64,
        rep_rate: f64,
    ) -> Result<Self> {
        check_positive("duration", duration)?;
        check_positive("rep_rate", rep_rate)?;
        if coincidence_counts > signal_counts.min(idler_counts) {
            return Err(Error::contract(format!(
                "{coincidence_counts} coincidences exceed singles ({signal_counts}, {idler_counts})"
            )));
        }
        Ok(Self {
            n_signal: signal_counts as f64 / duration,
            n_idler: idler_counts as f64 / duration,
            n_coincidence: coincidence_counts as f64 / duration,
            duration,
            rep_rate,
            signal_counts,
            idler_counts,
            coincidence_counts,
        })
    }

    /// Builds a summary from rates alone; the raw counts are rounded.
    pub fn from_rates(
        n_signal: f64,
        n_idler: f64,
        n_coincidence: f64,
        duration: f64,
        rep_rate: f64,
    ) -> Self {
        Self {
            n_signal,
            n_idler,
            n_coincidence,
            duration,
            rep_rate,
            signal_counts: (n_signal * duration).round() as u64,
            idler_counts: (n_idler * duration).round() as u64,
            coincidence_counts: (n_coincidence * duration).round() as u64,
        }
    }

    pub fn p_signal(&self) -> f64 {
        self.n_signal / self.rep_rate
    }

    pub fn p_idler(&self) -> f64 {
        self.n_idler / self.rep_rate
    }

    pub fn p_coincidence(&self) -> f64 {
        self.n_coincidence / self.rep_rate
    }
}

fn pulse_indices(
    clicks: &[ClickRecord],
    offset: f64,
    rep_rate: f64,
    duration: f64,
    channel: &str,
) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = Vec::with_capacity(clicks.len());
    let mut last_time = f64::NEG_INFINITY;
    for c in clicks {
        if c.time < last_time {
            return Err(Error::contract(format!("{channel} clicks are not sorted")));
        }
        last_time = c.time;
        let local = c.time - offset;
        if !(0.0..duration).contains(&local) {
            return Err(Error::contract(format!(
                "{channel} click at {} s is outside [0, {duration}) after removing the {offset} s offset",
                c.time
            )));
        }
        let idx = (local * rep_rate).floor() as u64;
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    Ok(out)
}

fn sorted_intersection_len(a: &[u64], b: &[u64]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Pulse-indexed coincidence logic.
///
/// A click at `t` in a channel with offset `o` belongs to pulse
/// `floor((t - o) · rep_rate)`. A channel counts once per pulse, and a
/// coincidence is a pulse with clicks in both channels.
pub fn count_events(
    signal_clicks: &[ClickRecord],
    idler_clicks: &[ClickRecord],
    rep_rate: f64,
    channel_offsets: (f64, f64),
    duration: f64,
) -> Result<CountSummary> {
    check_positive("duration", duration)?;
    check_positive("rep_rate", rep_rate)?;
    let s = pulse_indices(signal_clicks, channel_offsets.0, rep_rate, duration, "signal")?;
    let i = pulse_indices(idler_clicks, channel_offsets.1, rep_rate, duration, "idler")?;
    let si = sorted_intersection_len(&s, &i);
    CountSummary::from_counts(s.len() as u64, i.len() as u64, si, duration, rep_rate)
}

/// `g = N_si R_p / (N_s N_i)`.
pub fn cross_correlation(summary: &CountSummary) -> Result<f64> {
    if summary.n_signal <= 0.0 || summary.n_idler <= 0.0 {
        return Err(Error::undefined(format!(
            "cross-correlation needs non-zero singles (N_s = {}, N_i = {})",
            summary.n_signal, summary.n_idler
        )));
    }
    Ok(summary.n_coincidence * summary.rep_rate / (summary.n_signal * summary.n_idler))
}

/// Poisson standard error of `g`, propagated from the three raw counts
/// (treated as independent, which slightly overstates it).
pub fn cross_correlation_std_error(summary: &CountSummary) -> Result<f64> {
    let g = cross_correlation(summary)?;
    if summary.coincidence_counts == 0 {
        return Err(Error::undefined("standard error needs at least one coincidence"));
    }
    let rel = 1.0 / summary.coincidence_counts as f64
        + 1.0 / summary.signal_counts as f64
        + 1.0 / summary.idler_counts as f64;
    Ok(g * rel.sqrt())
}

/// Idler-singles reduction `N_i(off) / N_i(on)`.
pub fn reduction_factor(off: &CountSummary, on: &CountSummary) -> Result<f64> {
    if on.n_idler <= 0.0 {
        return Err(Error::undefined("gated idler rate is zero"));
    }
    Ok(off.n_idler / on.n_idler)
}

/// Writes clicks as `<channel> <time_in_seconds>` lines, fixed-point with
/// picosecond resolution.
pub fn format_clicks(clicks: &[ClickRecord]) -> String {
    let mut out = String::with_capacity(clicks.len() * 24);
    for c in clicks {
        let _ = writeln!(out, "{} {:.12}", c.channel, c.time);
    }
    out
}

pub fn write_clicks(path: &Path, clicks: &[ClickRecord]) -> Result<()> {
    std::fs::write(path, format_clicks(clicks)).map_err(|e| Error::io(path, e))
}

/// Parses the click text format. Blank lines and `#` comments are skipped.
pub fn parse_clicks(reader: impl Read, source_name: &str) -> Result<Vec<ClickRecord>> {
    let mut clicks = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut fields = body.split_whitespace();
        let (Some(ch), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected '<channel> <time>', got '{body}'")));
        };
        let channel: Channel = ch.parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let time: f64 = t
            .parse()
            .map_err(|_| parse_err(format!("bad time '{t}'")))?;
        if !time.is_finite() || time < 0.0 {
            return Err(parse_err(format!("time {t} must be finite and >= 0")));
        }
        clicks.push(ClickRecord { time, channel });
    }
    Ok(clicks)
}

pub fn read_clicks(path: &Path) -> Result<Vec<ClickRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_clicks(file, &path.display().to_string())
}

/// Splits a mixed click list into time-sorted signal and idler streams.
pub fn split_channels(clicks: &[ClickRecord]) -> (Vec<ClickRecord>, Vec<ClickRecord>) {
    let (mut s, mut i): (Vec<ClickRecord>, Vec<ClickRecord>) =
        clicks.iter().partition(|c| c.channel == Channel::Signal);
    s.sort_by(|a, b| a.time.total_cmp(&b.time));
    i.sort_by(|a, b| a.time.total_cmp(&b.time));
    (s, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn clicks(times: &[f64], channel: Channel) -> Vec<ClickRecord> {
        times.iter().map(|&time| ClickRecord { time, channel }).collect()
    }

    #[test]
    fn same_pulse_is_a_coincidence() {
        let s = clicks(&[0.25e-7], Channel::Signal);
        let i = clicks(&[0.35e-7], Channel::Idler);
        let summary = count_events(&s, &i, 1e7, (0.0, 0.0), 1.0).unwrap();
        assert_eq!(summary.coincidence_counts, 1);
        assert_eq!(summary.n_coincidence * summary.duration, 1.0);
    }

    #[test]
    fn adjacent_pulses_are_not() {
        let s = clicks(&[0.5e-7], Channel::Signal);
        let i = clicks(&[1.5e-7], Channel::Idler);
        let summary = count_events(&s, &i, 1e7, (0.0, 0.0), 1.0).unwrap();
        assert_eq!(summary.coincidence_counts, 0);
        // Removing the idler channel offset brings them into one bin.
        let summary = count_events(&s, &i, 1e7, (0.0, 1e-7), 1.0).unwrap();
        assert_eq!(summary.coincidence_counts, 1);
    }

    #[test]
    fn multiple_clicks_per_pulse_count_once() {
        let s = clicks(&[0.1e-7, 0.2e-7, 0.3e-7], Channel::Signal);
        let i = clicks(&[0.5e-7, 0.6e-7], Channel::Idler);
        let summary = count_events(&s, &i, 1e7, (0.0, 0.0), 1.0).unwrap();
        assert_eq!((summary.signal_counts, summary.idler_counts, summary.coincidence_counts), (1, 1, 1));
    }

    #[test]
    fn out_of_range_click_is_rejected() {
        let s = clicks(&[2.0], Channel::Signal);
        assert!(matches!(
            count_events(&s, &[], 1e7, (0.0, 0.0), 1.0),
            Err(Error::Contract(_))
        ));
        let s = clicks(&[0.1], Channel::Signal);
        assert!(matches!(
            count_events(&s, &[], 1e7, (0.2, 0.0), 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn independent_bernoulli_coincidences() {
        let mut rng = rng_from_seed(21);
        let rep = 1e7;
        let pulses = 10_000u64;
        let mut s = Vec::new();
        let mut i = Vec::new();
        for k in 0..pulses {
            let t = (k as f64 + 0.5) / rep;
            if rng.random::<f64>() < 0.1 {
                s.push(ClickRecord { time: t, channel: Channel::Signal });
            }
            if rng.random::<f64>() < 0.1 {
                i.push(ClickRecord { time: t, channel: Channel::Idler });
            }
        }
        let summary = count_events(&s, &i, rep, (0.0, 0.0), pulses as f64 / rep).unwrap();
        let c = summary.coincidence_counts as f64;
        assert!((c - 100.0).abs() < 3.0 * (100.0f64 * 0.99).sqrt(), "{c}");
    }

    #[test]
    fn eq2_substitution() {
        let summary = CountSummary::from_rates(1e5, 1e3, 100.0, 1.0, 1e7);
        assert_eq!(cross_correlation(&summary).unwrap(), 10.0);
        let p = summary.p_coincidence() / (summary.p_signal() * summary.p_idler());
        assert!((p - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_singles_are_undefined() {
        let summary = CountSummary::from_rates(0.0, 1e3, 0.0, 1.0, 1e7);
        assert!(matches!(cross_correlation(&summary), Err(Error::Undefined(_))));
        let on = CountSummary::from_rates(1.0, 0.0, 0.0, 1.0, 1e7);
        assert!(matches!(reduction_factor(&summary, &on), Err(Error::Undefined(_))));
    }

    #[test]
    fn reduction_examples() {
        let off = CountSummary::from_rates(1e4, 2000.0, 50.0, 1.0, 1e7);
        let on = CountSummary::from_rates(1e4, 290.0, 50.0, 1.0, 1e7);
        let r = reduction_factor(&off, &on).unwrap();
        assert!((r - 6.897).abs() < 1e-3);
        assert_eq!(reduction_factor(&off, &off).unwrap(), 1.0);
        let ratio = cross_correlation(&on).unwrap() / cross_correlation(&off).unwrap();
        assert!((ratio - r).abs() < 1e-12);
    }

    #[test]
    fn click_text_round_trip() {
        let original = vec![
            ClickRecord { time: 1.25e-7, channel: Channel::Signal },
            ClickRecord { time: 0.5, channel: Channel::Idler },
        ];
        let text = format_clicks(&original);
        assert_eq!(text, "signal 0.000000125000\nidler 0.500000000000\n");
        let parsed = parse_clicks(text.as_bytes(), "mem").unwrap();
        assert_eq!(parsed, original);
    }

    #[test]
    fn click_parse_errors_carry_line_numbers() {
        let err = parse_clicks("signal 0.1\n\nphoton 0.2\n".as_bytes(), "clicks.txt").unwrap_err();
        match err {
            Error::Parse { line, source_name, .. } => {
                assert_eq!(line, 3);
                assert_eq!(source_name, "clicks.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_clicks("idler -1.0\n".as_bytes(), "x").is_err());
        assert!(parse_clicks("idler 1.0 extra\n".as_bytes(), "x").is_err());
    }

    fn random_clicks(seed: u64, n: usize, channel: Channel) -> Vec<ClickRecord> {
        let mut rng = rng_from_seed(seed);
        let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1e-5).collect();
        t.sort_by(f64::total_cmp);
        clicks(&t, channel)
    }

    proptest! {
        #[test]
        fn symmetric_in_channel_order(seed in any::<u64>(), ns in 0usize..200, ni in 0usize..200) {
            let s = random_clicks(seed, ns, Channel::Signal);
            let i = random_clicks(seed ^ 1, ni, Channel::Idler);
            let a = count_events(&s, &i, 1e7, (0.0, 0.0), 1e-5).unwrap();
            let b = count_events(&i, &s, 1e7, (0.0, 0.0), 1e-5).unwrap();
            prop_assert_eq!(a.coincidence_counts, b.coincidence_counts);
            prop_assert!(a.coincidence_counts <= a.signal_counts.min(a.idler_counts));
        }

        #[test]
        fn invariant_under_global_translation(seed in any::<u64>(), k in 0u32..50) {
            // Shift by whole nanoseconds so the translation is exact after rounding.
            let shift = k as f64 * 1e-9 * 64.0;
            let s = random_clicks(seed, 100, Channel::Signal);
            let i = random_clicks(seed ^ 7, 100, Channel::Idler);
            let moved = |v: &[ClickRecord]| -> Vec<ClickRecord> {
                v.iter().map(|c| ClickRecord { time: c.time + shift, ..*c }).collect()
            };
            let a = count_events(&s, &i, 1e7, (0.0, 0.0), 1e-5).unwrap();
            let b = count_events(&moved(&s), &moved(&i), 1e7, (shift, shift), 1e-5).unwrap();
            // Bin assignment can only change for clicks within rounding of a bin edge.
            prop_assert!((a.coincidence_counts as i64 - b.coincidence_counts as i64).abs() <= 1);
            prop_assert!((a.signal_counts as i64 - b.signal_counts as i64).abs() <= 1);
        }

        #[test]
        fn g_scales_inversely_with_idler_rate(ni in 1.0f64..1e6, factor in 1.0f64..100.0) {
            let a = CountSummary::from_rates(1e4, ni, 10.0, 1.0, 1e7);
            let b = CountSummary::from_rates(1e4, ni * factor, 10.0, 1.0, 1e7);
            let ga = cross_correlation(&a).unwrap();
            let gb = cross_correlation(&b).unwrap();
            prop_assert!((ga / gb - factor).abs() < 1e-9 * factor);
            prop_assert!(ga >= 0.0);
        }
    }
}
