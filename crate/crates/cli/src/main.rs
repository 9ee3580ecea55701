use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advlin_cli::{chart_for, run_experiment, CliError, CliResult, ExperimentConfig, ExperimentKind};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "advlin",
    version,
    about = "Adversarially robust linear estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo samples for risk estimates.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write an SVG chart next to the CSV.
    #[arg(long, global = true)]
    svg: bool,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case perturbation of a single residual.
    Perturb,
    /// Monte Carlo standard and adversarial risk.
    Risk,
    /// Gap bounds against the Monte Carlo gap.
    Bounds,
    /// Trace the (SR, AR) frontier over the lambda grid.
    Pareto,
    /// Kalman estimator risks and gap bounds.
    Kalman,
    /// Reproduce one of the figure experiments.
    Experiment {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum Figure {
    FigCondition,
    FigObservability,
    FigKfVsAdv,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Self::Perturb => ExperimentKind::Perturb,
            Self::Risk => ExperimentKind::Risk,
            Self::Bounds => ExperimentKind::Bounds,
            Self::Pareto => ExperimentKind::Pareto,
            Self::Kalman => ExperimentKind::KalmanBounds,
            Self::Experiment {
                figure: Figure::FigCondition,
            } => ExperimentKind::FigCondition,
            Self::Experiment {
                figure: Figure::FigObservability,
            } => ExperimentKind::FigObservability,
            Self::Experiment {
                figure: Figure::FigKfVsAdv,
            } => ExperimentKind::FigKfVsAdv,
        }
    }
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    config.kind = cli.command.kind();
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.samples {
        config.n_samples = n;
    }
    if let Some(out) = &cli.out {
        config.output_path = out.to_string_lossy().into_owned();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> CliResult<()> {
    let config = load(cli)?;
    if cli.print_config {
        println!("{}", config.to_json());
        return Ok(());
    }
    let table = run_experiment(&config)?;
    let out = Path::new(&config.output_path);
    table.write_csv(out)?;
    eprintln!("wrote {}", out.display());
    if cli.svg {
        match chart_for(config.kind, &table) {
            Some(svg) => {
                let path = out.with_extension("svg");
                std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
                eprintln!("wrote {}", path.display());
            }
            None => eprintln!("no chart for {}", config.kind.name()),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
