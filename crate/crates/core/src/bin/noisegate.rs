use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noisegate::coincidence::{count_events, cross_correlation, read_clicks, split_channels, write_clicks, CountSummary};
use noisegate::harness::{self, calibrate::CalibrationProblem, ExperimentConfig, PhasematchFile};
use noisegate::spectral::{self, build_jsa, purity, read_jsa, resolution_warning, schmidt_decompose};
use noisegate::Result;

#[derive(Parser)]
#[command(name = "noisegate", version, about = "Heralded single-photon source simulator with a feed-forward noise gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gate {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// One Monte Carlo run.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        gate: Option<Gate>,
        /// Simulated time in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// JSON count summary.
        #[arg(long)]
        out: PathBuf,
        /// Also write the click stream.
        #[arg(long)]
        clicks: Option<PathBuf>,
    },
    /// Paired gate-off/gate-on runs over pump powers.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated powers in mW; defaults to run.power_sweep_mw.
        #[arg(long)]
        powers: Option<String>,
        /// JSON report; the CSV table goes next to it with a .csv extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit source and efficiency parameters to observed rates.
    Calibrate {
        #[arg(long)]
        targets: PathBuf,
        /// JSON fit report.
        #[arg(long)]
        out: PathBuf,
        /// Write the fitted experiment config here.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
    /// Schmidt decomposition of a joint spectrum.
    Purity {
        #[arg(long, conflicts_with = "phasematch", required_unless_present = "phasematch")]
        jsa: Option<PathBuf>,
        #[arg(long)]
        phasematch: Option<PathBuf>,
        /// Export the joint spectral intensity as CSV.
        #[arg(long)]
        jsi_out: Option<PathBuf>,
        /// Export the amplitude in the JSA text format.
        #[arg(long)]
        jsa_out: Option<PathBuf>,
    },
    /// Coincidence counting on a click file.
    Count {
        #[arg(long)]
        clicks: PathBuf,
        #[arg(long, default_value_t = 1e7)]
        rep_rate: f64,
        #[arg(long)]
        duration: f64,
        /// Idler channel offset in ns.
        #[arg(long, default_value_t = 0.0)]
        idler_offset_ns: f64,
    },
    /// Analytic expected rates for a config, dead time excluded and included.
    Expect {
        #[arg(long)]
        config: PathBuf,
    },
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|source| noisegate::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct SimulateOutput {
    gate: bool,
    summary: CountSummary,
    g: Option<f64>,
    config: ExperimentConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            seed,
            gate,
            duration,
            out,
            clicks,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = duration {
                cfg.duration = d;
            }
            let enabled = match gate {
                Some(Gate::On) => true,
                Some(Gate::Off) => false,
                None => cfg.gate.enabled,
            };
            cfg.gate.enabled = enabled;
            let summary = match &clicks {
                Some(path) => {
                    let (summary, records) = harness::run_with_clicks(&cfg, enabled)?;
                    write_clicks(path, &records)?;
                    summary
                }
                None => harness::run(&cfg, enabled)?,
            };
            let g = cross_correlation(&summary).ok();
            println!(
                "N_s = {:.3}/s  N_i = {:.3}/s  N_si = {:.3}/s  g = {}",
                summary.n_signal,
                summary.n_idler,
                summary.n_coincidence,
                g.map_or("undefined".to_string(), |g| format!("{g:.3}"))
            );
            write_json(&out, &SimulateOutput {
                gate: enabled,
                summary,
                g,
                config: cfg,
            })
        }
        Command::Sweep { config, powers, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let powers = match powers {
                Some(text) => text
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| noisegate::Error::Domain(format!("bad power '{s}'")))
                    })
                    .collect::<Result<Vec<f64>>>()?,
                None => cfg.power_sweep.clone(),
            };
            let records = harness::sweep(&cfg, &powers)?;
            println!("{}", harness::sweep::format_csv(&records).trim_end());
            harness::emit_report(&records, &out, &out.with_extension("csv"))
        }
        Command::Calibrate {
            targets,
            out,
            config_out,
        } => {
            let problem = CalibrationProblem::load(&targets)?;
            let cal = harness::calibrate(&problem)?;
            println!(
                "pair_coeff = {:.6}  noise_coeff_idler = {:.6}  eta_signal_total = {:.6}  eta_idler_total = {:.6}",
                cal.pair_coeff, cal.noise_coeff_idler, cal.eta_signal_total, cal.eta_idler_total
            );
            for r in &cal.residuals {
                println!(
                    "  {} mW {:<12} target {:>12.3} model {:>12.3} ({:+.2e})",
                    r.power_mw, r.quantity, r.target, r.model, r.relative
                );
            }
            for p in cal.landscape.iter().filter(|p| p.degenerate) {
                println!("  {} is not constrained by the targets", p.parameter.name());
            }
            if let Some(path) = config_out {
                std::fs::write(&path, cal.config.to_config_string())
                    .map_err(|source| noisegate::Error::Io { path: path.clone(), source })?;
            }
            write_json(&out, &cal)
        }
        Command::Purity {
            jsa,
            phasematch,
            jsi_out,
            jsa_out,
        } => {
            let grid = match (jsa, phasematch) {
                (Some(path), _) => read_jsa(&path)?,
                (None, Some(path)) => {
                    let file = PhasematchFile::load(&path)?;
                    let axes = file.axes()?;
                    if let Some(w) = resolution_warning(&file.config, &axes) {
                        log::warn!("{w}");
                    }
                    build_jsa(&file.config, &axes)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let lambdas = schmidt_decompose(&grid)?;
            let p = purity(&lambdas)?;
            println!("purity = {p:.6}");
            println!("schmidt_number = {:.6}", 1.0 / p);
            let top: Vec<String> = lambdas.iter().take(5).map(|l| format!("{l:.6}")).collect();
            println!("lambda = [{}]", top.join(", "));
            if let Some(path) = jsi_out {
                spectral::write_jsi_csv(&path, &grid)?;
            }
            if let Some(path) = jsa_out {
                spectral::write_jsa(&path, &grid)?;
            }
            Ok(())
        }
        Command::Count {
            clicks,
            rep_rate,
            duration,
            idler_offset_ns,
        } => {
            let records = read_clicks(&clicks)?;
            let (s, i) = split_channels(&records);
            let summary = count_events(&s, &i, rep_rate, (0.0, idler_offset_ns * 1e-9), duration)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            match cross_correlation(&summary) {
                Ok(g) => println!("g = {g:.6}"),
                Err(e) => println!("g undefined: {e}"),
            }
            Ok(())
        }
        Command::Expect { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let e = harness::expectations(&cfg)?;
            let d = e.with_dead_time(&cfg);
            for (label, x) in [("without dead time", e), ("with dead time", d)] {
                println!(
                    "{label}: N_s = {:.3}  N_i_off = {:.3}  N_i_on = {:.3}  N_si = {:.3}  g_off = {:.3}  g_on = {:.3}  reduction = {:.4}",
                    x.n_signal, x.n_idler_off, x.n_idler_on, x.n_coincidence_off, x.g_off(), x.g_on(), x.reduction()
                );
            }
            Ok(())
        }
    }
}
