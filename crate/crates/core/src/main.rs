use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mersim::RunConfig;

#[derive(Parser)]
#[command(name = "mersim", version, about = "Monte Carlo sizing of movable energy resources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate contingencies and write the sizing report.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    feeder: Option<PathBuf>,
    #[arg(long)]
    reliability: Option<PathBuf>,
    #[arg(long)]
    roads: Option<PathBuf>,
    /// Hourly load multipliers applied to every load.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    years: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// MER installation time in minutes.
    #[arg(long = "install-min")]
    install_min: Option<f64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Keep tie switches open.
    #[arg(long = "no-reconfig")]
    no_reconfig: bool,
    /// Use the summed load instead of the solved substation injection.
    #[arg(long = "lossless-base")]
    lossless_base: bool,
    /// Directory for contingencies.jsonl and voltages.csv.
    #[arg(long = "dump-diagnostics")]
    dump_diagnostics: Option<PathBuf>,
    /// Output directory for report.json and report.txt [default: .]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.feeder {
            cfg.feeder = v;
        }
        if let Some(v) = self.reliability {
            cfg.reliability = Some(v);
        }
        if let Some(v) = self.roads {
            cfg.roads = v;
        }
        if let Some(v) = self.profile {
            cfg.profile = Some(v);
        }
        if let Some(v) = self.years {
            cfg.years = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.install_min {
            cfg.install_min = v;
        }
        if let Some(v) = self.replications {
            cfg.replications = v;
        }
        if self.no_reconfig {
            cfg.reconfiguration = false;
        }
        if self.lossless_base {
            cfg.lossless_base = true;
        }
        if let Some(v) = self.dump_diagnostics {
            cfg.dump_diagnostics = Some(v);
        }
        if let Some(v) = self.out {
            cfg.out = Some(v);
        }
        if cfg.out.is_none() {
            cfg.out = Some(PathBuf::from("."));
        }
        if let Some(v) = self.workers {
            cfg.workers = Some(v);
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let Cli { command: Command::Run(args) } = Cli::parse();
    let cfg = args.into_config()?;
    let output = mersim::run(&cfg)?;
    print!("{}", output.report_text(&cfg));
    Ok(())
}
