//! Experiment CLI: synthesize data, check the forward process, sample,
//! evaluate, and join results into an ablation table. All behavior lives
//! in the library; this binary parses arguments, applies config
//! overrides, and maps outcomes to exit codes (0 success, 1 error,
//! 2 diagnostics failed).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vdd::run::{cmd_check_forward, cmd_eval, cmd_report, cmd_sample, cmd_synth, RunConfig};

#[derive(Parser)]
#[command(name = "vdd", version, about = "Anchored volumetric diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path config overrides, e.g. `--set sampler.n_samples=4`
    /// or `--set schedule.kind=\"cosine\"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Dataset directory (overrides the config's `dataset`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> vdd::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.resolve_roots();
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-rater dataset.
    Synth(ConfigArgs),
    /// Run Monte-Carlo diagnostics of the forward process.
    CheckForward(ConfigArgs),
    /// Sample reverse trajectories for every case.
    Sample(ConfigArgs),
    /// Score samples against raters into metrics.csv.
    Eval(ConfigArgs),
    /// Join labelled metrics.csv files into one ablation table.
    Report {
        /// Output CSV path.
        #[arg(long, default_value = "ablation.csv")]
        out: PathBuf,
        /// Inputs as `label=path/to/metrics.csv`.
        inputs: Vec<String>,
    },
}

fn run() -> vdd::Result<ExitCode> {
    match Cli::parse().command {
        Command::Synth(args) => {
            let cfg = args.load()?;
            let manifest = cmd_synth(&cfg)?;
            println!(
                "wrote {} cases to {}",
                manifest.cases.len(),
                cfg.dataset.display()
            );
        }
        Command::CheckForward(args) => {
            let cfg = args.load()?;
            let diag = cmd_check_forward(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&diag).expect("serializable"));
            if !diag.pass {
                eprintln!("forward-process diagnostics FAILED");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sample(args) => {
            let cfg = args.load()?;
            cmd_sample(&cfg)?;
            println!("samples written to {}", cfg.out.display());
        }
        Command::Eval(args) => {
            let cfg = args.load()?;
            let csv = cmd_eval(&cfg)?;
            println!("metrics written to {}", csv.display());
        }
        Command::Report { out, inputs } => {
            let parsed: Vec<(String, PathBuf)> = inputs
                .iter()
                .map(|item| {
                    item.split_once('=')
                        .map(|(l, p)| (l.to_string(), PathBuf::from(p)))
                        .ok_or_else(|| {
                            vdd::VddError::InvalidConfig(format!(
                                "input {item:?} is not label=path"
                            ))
                        })
                })
                .collect::<vdd::Result<_>>()?;
            let table = cmd_report(&parsed, &out)?;
            print!("{table}");
            println!("table written to {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
