use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use splitnlc::analytic::{self, BudgetCoefficients, Scheme};
use splitnlc::labharness::{
    calibrate_b2b, link_budget, read_csv, summary_path, sweep_distance, sweep_power, sweep_split, with_workers,
    write_csv, write_plot_series, write_summary, Experiment, ExperimentConfig, Summary, SweepOutput,
};
use splitnlc::{Error, Result};

#[derive(Parser)]
#[command(name = "splitnlc", version, about = "Split digital backpropagation transmission simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    steps_per_span: Option<usize>,
    /// Output file or directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a single point and print one CSV row per channel.
    Run {
        #[arg(long)]
        spans: usize,
        /// Spans pre-compensated at the transmitter; omit for EDC.
        #[arg(long)]
        tx_spans: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        power: f64,
        #[arg(long, default_value_t = 0)]
        realization: usize,
    },
    /// Run a campaign and write the results CSV plus a summary sidecar.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Fit transmitter and receiver noise to a back-to-back SNR target.
    Calibrate {
        #[arg(long)]
        target: f64,
        /// Fraction of the noise power that comes from the transmitter.
        #[arg(long, default_value_t = 0.5)]
        tx_share: f64,
    },
    /// Evaluate the analytic budget with coefficients from a summary file.
    Predict {
        /// Summary JSON holding fitted coefficients.
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        spans: usize,
        /// Launch power; the optimum is used when omitted.
        #[arg(long, allow_negative_numbers = true)]
        power: Option<f64>,
    },
    /// Derive per-figure series files from a results CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum SweepKind {
    Power,
    Split {
        #[arg(long)]
        spans: usize,
    },
    Distance,
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seeds.master = s;
    }
    if let Some(n) = g.steps_per_span {
        cfg.ssfm.steps_per_span = n;
    }
    if let Some(out) = &g.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn write_outputs(campaign: &str, cfg: &ExperimentConfig, out: &SweepOutput) -> Result<()> {
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(&out.records, File::create(&cfg.output)?)?;
    let summary = summary_path(&cfg.output);
    write_summary(&summary, &Summary::new(campaign, out))?;
    info!("wrote {} and {}", cfg.output.display(), summary.display());
    let mut stdout = io::stdout().lock();
    for p in &out.peaks {
        writeln!(
            stdout,
            "{:<7} N={:<3} k={:<3} peak {:>7.3} dB at {:>6.2} dBm{}",
            p.scheme,
            p.spans,
            p.tx_spans,
            p.snr_db,
            p.power_dbm,
            if p.on_edge { " (edge)" } else { "" }
        )?;
    }
    for g in out.gains.iter().filter(|g| g.scheme != "edc") {
        writeln!(stdout, "gain over EDC  N={} k={}: {:+.3} dB", g.spans, g.tx_spans, g.gain_db)?;
    }
    if let Some(c) = &out.crossover {
        match (c.spans, c.distance_km) {
            (Some(n), Some(km)) => writeln!(stdout, "analytic crossover: {n} spans ({km:.0} km)")?,
            _ => writeln!(stdout, "analytic crossover: none within the search limit")?,
        }
    }
    if !out.failures.is_empty() {
        writeln!(stdout, "{} point(s) failed; see the summary file", out.failures.len())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { spans, tx_spans, power, realization } => {
            let cfg = load_config(g)?;
            let scheme = match tx_spans {
                None => Scheme::Edc,
                Some(k) if *k > *spans => return Err(Error::Plan(format!("{k} transmitter spans of {spans}"))),
                Some(k) => Scheme::from_split(*spans, *k),
            };
            let exp = Experiment::new(cfg)?;
            let records = with_workers(g.workers, || exp.run_point(*spans, scheme, *power, *realization))??;
            write_csv(&records, io::stdout().lock())?;
        }
        Command::Sweep { kind } => {
            let cfg = load_config(g)?;
            let exp = Experiment::new(cfg.clone())?;
            let (name, out) = match kind {
                SweepKind::Power => ("power", with_workers(g.workers, || sweep_power(&exp))??),
                SweepKind::Split { spans } => ("split", with_workers(g.workers, || sweep_split(&exp, *spans))??),
                SweepKind::Distance => ("distance", with_workers(g.workers, || sweep_distance(&exp))??),
            };
            write_outputs(name, &cfg, &out)?;
        }
        Command::Calibrate { target, tx_share } => {
            let cfg = load_config(g)?;
            let exp = Experiment::new(cfg)?;
            let trx = with_workers(g.workers, || calibrate_b2b(&exp, *target, *tx_share))??;
            let text = serde_json::to_string_pretty(&trx)?;
            match &g.out {
                Some(path) => std::fs::write(path, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Predict { summary, spans, power } => {
            let cfg = load_config(g)?;
            let coeffs = read_coefficients(summary)?;
            let budget = link_budget(&Experiment::new(cfg)?);
            let n = *spans;
            let schemes = [Scheme::Edc, Scheme::TxDbp, Scheme::RxDbp, Scheme::from_split(n, n.div_ceil(2))];
            println!("scheme,spans,tx_spans,power_dbm,snr_db");
            for s in schemes {
                let p = match power {
                    Some(p) => *p,
                    None => analytic::optimal_power(&budget, n, s, &coeffs)?,
                };
                let snr = analytic::budget_snr(&budget, n, s, p, &coeffs)?;
                println!("{},{n},{},{p:.3},{snr:.3}", s.label(), s.tx_spans(n));
            }
            match analytic::crossover_distance(&budget, &coeffs)? {
                Some(c) => eprintln!("analytic crossover: {} spans ({:.0} km)", c.spans, c.distance_km),
                None => eprintln!("analytic crossover: none within the search limit"),
            }
        }
        Command::Plot { input } => {
            let records = read_csv(File::open(input)?)?;
            let dir = g.out.clone().unwrap_or_else(|| input.with_extension("plots"));
            let files = write_plot_series(&records, &dir)?;
            println!("{}", files.snr_vs_power.display());
            println!("{}", files.gain_vs_split.display());
            println!("{}", files.peak_vs_distance.display());
        }
    }
    Ok(())
}

fn read_coefficients(path: &Path) -> Result<BudgetCoefficients> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let summary: Summary = serde_json::from_str(&text)?;
    summary
        .calibration
        .ok_or_else(|| Error::Calibration(format!("{} holds no calibration; run `sweep distance` first", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
