use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "robust-sonc",
    version,
    about = "Second-order conditions for robust singular stochastic control"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed of the Brownian paths.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub paths: usize,
    /// Override the number of grid steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Output directory for reports and panels.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Built-in problem (example, lq, cubic, linear-drift).
    #[arg(long, global = true, conflicts_with = "config")]
    pub builtin: Option<String>,
    /// Problem file in TOML.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Adjoint solver.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Polynomial degree of the regression basis.
    #[arg(long, global = true)]
    pub basis_degree: Option<usize>,
    /// Source of the Malliavin terms.
    #[arg(long, global = true, value_enum)]
    pub malliavin: Option<MalliavinArg>,
    /// Decision tolerance: `auto` or a number.
    #[arg(
        long,
        global = true,
        default_value = "auto",
        allow_hyphen_values = true
    )]
    pub tol: String,
    /// Also write gnuplot-ready data files.
    #[arg(long, global = true)]
    pub emit_gnuplot: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Analytic,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MalliavinArg {
    Zero,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ControlArg {
    Reference,
    Candidate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the state under a control and export the panels.
    Simulate(SimulateArgs),
    /// Solve the adjoint equations at the reference control and export them with 𝕊.
    Adjoint(PanelArgs),
    /// Robust costs of the reference and candidate controls.
    Cost,
    /// Singularity and the second-order conditions at the reference control.
    Check(CheckArgs),
    /// Second-order expansion of the cost along the candidate direction.
    Expand(ExpandArgs),
    /// Walk through the built-in two-scenario example.
    Example,
    /// Validate the problem definition.
    Validate,
}

#[derive(Debug, Args)]
pub struct PanelArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[arg(long, value_enum, default_value = "reference")]
    pub control: ControlArg,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Comma-separated times of the pointwise grid.
    #[arg(long)]
    pub tau_grid: Option<String>,
    /// Semicolon-separated controls of the pointwise grid, components
    /// separated by commas.
    #[arg(long)]
    pub v_grid: Option<String>,
    /// Run the window scan at this time, with `v` the first entry of the
    /// pointwise control grid.
    #[arg(long)]
    pub window_tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Comma-separated decreasing geometric ε values in (0, 1).
    #[arg(long)]
    pub eps: Option<String>,
}
