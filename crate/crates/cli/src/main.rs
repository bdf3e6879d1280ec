use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use volquad::scenes::ColorIndexing;
use volquad::ModelKind;
use volquad_cli::commands::{self, Options};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Convergence,
    ShiftSensitivity,
    SamplerTest,
    GradCheck,
    QuadraticProbe,
    Render,
    Depth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Convergence => "convergence",
            Command::ShiftSensitivity => "shift-sensitivity",
            Command::SamplerTest => "sampler-test",
            Command::GradCheck => "grad-check",
            Command::QuadraticProbe => "quadratic-probe",
            Command::Render => "render",
            Command::Depth => "depth",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ColorAt {
    Left,
    Midpoint,
}

/// Volume-rendering quadrature experiments. Writes `{command}.csv` and
/// `{command}_summary.csv` into the output directory and exits with 1 when
/// any threshold fails.
#[derive(Debug, Parser)]
#[command(name = "volquad", version)]
struct Cli {
    command: Command,
    /// Scene file (TOML); each command has a built-in default.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Comma-separated models.
    #[arg(long, value_delimiter = ',', default_value = "constant,linear")]
    models: Vec<ModelKind>,
    /// Interior sample count (largest N for convergence).
    #[arg(long)]
    n_coarse: Option<usize>,
    /// Importance samples added per ray by the render command.
    #[arg(long, default_value_t = 64)]
    n_fine: usize,
    /// Size of offset sweeps (image width for render).
    #[arg(long, default_value_t = 32)]
    offsets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Oracle integration tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Where interval colors are queried.
    #[arg(long, value_enum, default_value = "left")]
    color_at: ColorAt,
    /// Random instances or patches for the randomized commands.
    #[arg(long)]
    instances: Option<usize>,
    /// Draws per KS test, or Monte Carlo samples for depth.
    #[arg(long)]
    samples: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        scene: cli.scene,
        models: cli.models,
        n_coarse: cli.n_coarse,
        n_fine: cli.n_fine,
        offsets: cli.offsets,
        seed: cli.seed,
        out: cli.out,
        tol: cli.tol,
        color_at: match cli.color_at {
            ColorAt::Left => ColorIndexing::Left,
            ColorAt::Midpoint => ColorIndexing::Midpoint,
        },
        instances: cli.instances,
        samples: cli.samples,
    };
    match commands::run(cli.command.name(), &opts) {
        Ok(outcome) => {
            for c in &outcome.checks {
                let verdict = if c.pass { "ok  " } else { "FAIL" };
                println!("{verdict} {:<40} {:>24.16e}  ({})", c.name, c.value, c.requirement);
            }
            if outcome.passes() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
