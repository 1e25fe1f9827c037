use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ensemble_control_cli::run::{self, Overrides};
use ensemble_control_cli::{presets, CliError, CliResult, ExperimentConfig};

/// Minimum-norm open-loop control for ensembles of linear systems.
///
/// Exit codes: 0 success, 2 invalid configuration or arguments,
/// 3 overdetermined shape (n·P > m·N), 4 integration failure,
/// 5 SVD failure, 6 input file does not match the config, 7 I/O error.
#[derive(Parser, Debug)]
#[command(name = "ensemble", version)]
struct Cli {
    #[command(flatten)]
    source: Source,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for the random time-varying system.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Truncation ratio cap on s1/sJ.
    #[arg(long, global = true)]
    ratio_cap: Option<f64>,

    /// Upper bound on retained singular values.
    #[arg(long, global = true)]
    hard_cap: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in experiment: fig1, fig2, fig3, fig4 or null.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the control; writes control.csv, spectrum.csv, picard.csv, report.toml.
    Synthesize {
        /// Also write flow.bin and operator.bin.
        #[arg(long)]
        dump: bool,
    },
    /// Simulate the ensemble under a control; writes outcome.csv, trajectories.csv.
    Verify {
        /// Control file; defaults to <out>/control.csv.
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Error against time step over the [convergence] grid of T and N.
    Convergence,
    /// Singular values and Picard table only.
    Spectrum,
    /// Print a preset's config file.
    ShowPreset,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&cli.source.config, &cli.source.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        ratio_cap: cli.ratio_cap,
        hard_cap: cli.hard_cap,
    }
    .apply(&mut cfg)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::config("--threads: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    if let Command::ShowPreset = cli.command {
        let name = cli
            .source
            .preset
            .as_deref()
            .ok_or_else(|| CliError::config("show-preset: needs --preset"))?;
        let text = presets::source(name)
            .ok_or_else(|| CliError::config(format!("preset: unknown preset `{name}`")))?;
        print!("{text}");
        return Ok(());
    }
    let cfg = load(cli)?;
    match &cli.command {
        Command::Synthesize { dump } => run::run_synthesize(&cfg, *dump).map(drop),
        Command::Verify { control } => run::run_verify(&cfg, control.as_deref()).map(drop),
        Command::Convergence => run::run_convergence(&cfg).map(drop),
        Command::Spectrum => run::run_spectrum(&cfg).map(drop),
        Command::ShowPreset => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
