use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use desot::config::GeneratorConfig;
use desot::error::CliResult;
use desot::pipeline;
use desot::{Overrides, RunConfig};
use desot_core::Strategy;

#[derive(Parser)]
#[command(
    name = "desot",
    version,
    about = "Sequence classification with ensemble members scheduled across frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic sign dataset.
    GenData(GenArgs),
    /// Split the data and train the ensemble members for every seed.
    Train(StageArgs),
    /// Fit per-strategy temperatures on the validation split.
    Calibrate(StageArgs),
    /// Evaluate strategies on test sequences; writes metrics.csv.
    Eval(StageArgs),
    /// Entropy-threshold OOD detection; writes ood.csv and entropy histograms.
    Ood(StageArgs),
    /// Augmentation-severity sweep; writes sweep.csv.
    Sweep(StageArgs),
    /// All of the above in order.
    Run(StageArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    tail_exponent: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset file.
    #[arg(long, default_value = "dataset.dset")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to one strategy.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    temp_scaled: Option<OnOff>,
    /// Run directory.
    #[arg(long, default_value = "desot-run")]
    out: PathBuf,
}

fn load_config(path: &Option<PathBuf>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn stage_config(a: &StageArgs) -> CliResult<RunConfig> {
    let mut cfg = load_config(&a.config)?;
    let mode = a.mode.as_deref().map(str::parse::<Strategy>).transpose()?;
    cfg.apply(&Overrides {
        mode,
        members: a.members,
        seeds: a.seeds.clone(),
        temp_scaled: a.temp_scaled.map(|t| matches!(t, OnOff::On)),
    })?;
    Ok(cfg)
}

fn gen_config(a: &GenArgs) -> CliResult<GeneratorConfig> {
    let mut g = load_config(&a.config)?.generator;
    if let Some(c) = a.classes {
        g.classes = c;
    }
    if let Some(t) = a.tail_exponent {
        g.tail_exponent = t;
    }
    if let Some(s) = a.seed {
        g.seed = s;
    }
    Ok(g)
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenData(a) => pipeline::cmd_gen_data(&gen_config(&a)?, &a.out).map(drop),
        Command::Train(a) => pipeline::cmd_train(&stage_config(&a)?, &a.out).map(drop),
        Command::Calibrate(a) => pipeline::cmd_calibrate(&stage_config(&a)?, &a.out).map(drop),
        Command::Eval(a) => pipeline::cmd_eval(&stage_config(&a)?, &a.out).map(drop),
        Command::Ood(a) => pipeline::cmd_ood(&stage_config(&a)?, &a.out).map(drop),
        Command::Sweep(a) => pipeline::cmd_sweep(&stage_config(&a)?, &a.out).map(drop),
        Command::Run(a) => pipeline::run_all(&stage_config(&a)?, &a.out).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
