use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use intfactor::contribution::{ThresholdRule, DEFAULT_C_OMEGA};
use intfactor::dantzig::{DantzigOptions, DEFAULT_C2, FEASIBILITY_TOL};
use intfactor::factor::{FactorOptions, IcPenalty};
use intfactor::modality_test::{ScoreTestOptions, DEFAULT_C1};
use intfactor::penalized::{
    CvOptions, CvRule, NoiseEstimator, PenaltyKind, Solver, SolverOptions, DEFAULT_MCP_GAMMA,
    DEFAULT_SCAD_A,
};
use intfactor::simulation::presets::PRESET_SEED;
use intfactor::wald_test::WaldOptions;

#[derive(Parser, Debug)]
#[command(name = "intfactor", version)]
#[command(about = "Integrative factor regression for multimodal data")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// Directory for the JSON and CSV artifacts.
    #[arg(long, global = true, env = "INTFACTOR_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// File stem for the artifacts; defaults to the subcommand name.
    #[arg(long, global = true)]
    pub stem: Option<String>,
    /// Also write tabular results as CSV.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Worker threads for replications, CV folds and projection columns.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Factor counts and spectra per modality.
    Factors(FactorsArgs),
    /// Penalized regression of y on estimated factors and idiosyncratic parts.
    Fit(FitArgs),
    /// Score test that one modality has no effect.
    TestModality(TestModalityArgs),
    /// Wald test of a linear hypothesis on selected coefficients.
    TestLinear(TestLinearArgs),
    /// Sequential variance contributions of the modalities.
    Contribution(ContributionArgs),
    /// Monte Carlo size and power curve for one scenario.
    Simulate(SimulateArgs),
    /// Size and power of the score test in the three two-modality examples.
    Table2(Table2Args),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Headered CSV holding the response and every covariate.
    #[arg(long)]
    pub input: PathBuf,
    /// TOML partition of the CSV columns into modalities.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Args, Debug)]
pub struct FactorArgs {
    /// Information-criterion penalty used to pick factor counts.
    #[arg(long, default_value = "g1", value_parser = parse_ic)]
    pub ic: IcPenalty,
    /// Largest factor count considered by the criterion.
    #[arg(long)]
    pub max_k: Option<usize>,
}

impl FactorArgs {
    pub fn options(&self) -> FactorOptions {
        FactorOptions {
            max_k: self.max_k,
            penalty: self.ic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    /// Coordinate descent.
    Cd,
    /// Proximal gradient.
    Pg,
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SolverArg::Cd)]
    pub solver: SolverArg,
    /// Convergence tolerance of the penalized solver.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Iteration cap of the penalized solver.
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

impl SolverArgs {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            method: match self.solver {
                SolverArg::Cd => Solver::CoordinateDescent,
                SolverArg::Pg => Solver::ProximalGradient,
            },
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Cross-validation overrides; unset values keep the command's default.
#[derive(Args, Debug)]
pub struct CvArgs {
    /// Folds [default: 10, or 5 for simulations].
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Grid points [default: 50, or 20 for simulations].
    #[arg(long)]
    pub cv_grid: Option<usize>,
    /// Smallest grid value as a fraction of λ_max [default: 0.01].
    #[arg(long)]
    pub cv_min_ratio: Option<f64>,
    /// λ chosen from the CV curve: min or 1se.
    #[arg(long, value_parser = parse_cv_rule)]
    pub cv_rule: Option<CvRule>,
}

impl CvArgs {
    pub fn options(&self, base: CvOptions, solver: SolverOptions) -> CvOptions {
        CvOptions {
            folds: self.cv_folds.unwrap_or(base.folds),
            grid_size: self.cv_grid.unwrap_or(base.grid_size),
            min_ratio: self.cv_min_ratio.unwrap_or(base.min_ratio),
            rule: self.cv_rule.unwrap_or(base.rule),
            solver,
        }
    }
}

#[derive(Args, Debug)]
pub struct PenaltyArgs {
    #[arg(long, default_value = "scad", value_parser = parse_penalty)]
    pub penalty: PenaltyKind,
    /// Fixed penalty level; chosen by cross-validation when absent.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SCAD_A)]
    pub scad_a: f64,
    #[arg(long, default_value_t = DEFAULT_MCP_GAMMA)]
    pub mcp_gamma: f64,
}

impl PenaltyArgs {
    pub fn shape(&self) -> Option<f64> {
        match self.penalty {
            PenaltyKind::Lasso => None,
            PenaltyKind::Scad => Some(self.scad_a),
            PenaltyKind::Mcp => Some(self.mcp_gamma),
        }
    }
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    /// Known noise variance; estimated when absent.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Noise-variance estimator: factor-adjusted (SCAD fit on F̂, Û) or lasso (raw design).
    #[arg(long, default_value = "factor-adjusted", value_parser = parse_noise)]
    pub noise: NoiseEstimator,
    /// Fixed level for the raw-design Lasso noise fit; implies --noise lasso.
    #[arg(long)]
    pub lambda_eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Constant in the default λ₁ of the null fit.
    #[arg(long, default_value_t = DEFAULT_C1)]
    pub c1: f64,
    /// Fixed λ₁; overrides --c1.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Pick λ₁ by cross-validation.
    #[arg(long)]
    pub lambda1_cv: bool,
    /// Constant in the default λ₂ of the projection program.
    #[arg(long, default_value_t = DEFAULT_C2)]
    pub c2: f64,
    /// Fixed λ₂; overrides --c2.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Feasibility tolerance of the projection program.
    #[arg(long, default_value_t = FEASIBILITY_TOL)]
    pub dantzig_tol: f64,
    /// Pivot cap per projection column [default: 200 q + 5000].
    #[arg(long)]
    pub dantzig_max_pivots: Option<usize>,
}

impl ScoreArgs {
    pub fn options(
        &self,
        alpha: f64,
        noise: &NoiseArgs,
        factors: FactorOptions,
        cv: CvOptions,
    ) -> ScoreTestOptions {
        ScoreTestOptions {
            alpha,
            c1: self.c1,
            lambda1: self.lambda1,
            lambda1_cv: self.lambda1_cv,
            c2: self.c2,
            lambda2: self.lambda2,
            sigma2: noise.sigma2,
            noise: noise.noise,
            lambda_eps: noise.lambda_eps,
            k: None,
            factors,
            cv,
            dantzig: DantzigOptions {
                feasibility_tol: self.dantzig_tol,
                max_pivots: self.dantzig_max_pivots,
            },
        }
    }
}

pub fn wald_options(
    alpha: f64,
    penalty: &PenaltyArgs,
    noise: &NoiseArgs,
    factors: FactorOptions,
    cv: CvOptions,
) -> WaldOptions {
    WaldOptions {
        alpha,
        penalty: penalty.penalty,
        shape: penalty.shape(),
        lambda_a: penalty.lambda,
        sigma2: noise.sigma2,
        noise: noise.noise,
        lambda_eps: noise.lambda_eps,
        k: None,
        factors,
        cv,
    }
}

#[derive(Args, Debug)]
pub struct FactorsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub factors: FactorArgs,
    /// One decomposition of all columns instead of one per modality.
    #[arg(long)]
    pub joint: bool,
    /// Fixed factor counts, comma separated, one per block.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Write F̂, Λ̂, Û and the eigenvalues of each block as CSV.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub factors: FactorArgs,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
}

#[derive(Args, Debug)]
pub struct TestModalityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Modality to test (1-based).
    #[arg(long, visible_alias = "m")]
    pub modality: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Fixed factor count of the tested modality.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub factors: FactorArgs,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
}

#[derive(Args, Debug)]
pub struct TestLinearArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Term `MODALITY:INDEX[:WEIGHT]` (1-based) of a single constraint
    /// `Σ w x = value`; repeat for each coefficient.
    #[arg(long = "term", conflicts_with = "hypothesis")]
    pub terms: Vec<String>,
    /// Right-hand side of the --term constraint.
    #[arg(long, default_value_t = 0.0)]
    pub value: f64,
    /// TOML file with `coordinates = ["m:i", ...]`, matrix `a` and vector `b`.
    #[arg(long, conflicts_with = "a_csv")]
    pub hypothesis: Option<PathBuf>,
    /// Headerless CSV holding the r × t matrix A; needs --b and --T.
    #[arg(long = "A", value_name = "CSV", requires_all = ["b_csv", "t_cols"], conflicts_with = "terms")]
    pub a_csv: Option<PathBuf>,
    /// Headerless CSV holding the r entries of b.
    #[arg(long = "b", value_name = "CSV", requires = "a_csv")]
    pub b_csv: Option<PathBuf>,
    /// Global column indices of T (1-based, comma separated).
    #[arg(
        long = "T",
        value_name = "INDICES",
        value_delimiter = ',',
        requires = "a_csv"
    )]
    pub t_cols: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Fixed factor counts, comma separated, one per modality.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[command(flatten)]
    pub factors: FactorArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
}

#[derive(Args, Debug)]
pub struct ContributionArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Order in which modalities enter (1-based, comma separated); all in
    /// file order by default.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// Fixed joint factor count.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub factors: FactorArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Constant in the default threshold of the residual covariance.
    #[arg(long, default_value_t = DEFAULT_C_OMEGA)]
    pub c_omega: f64,
    /// Fixed threshold; overrides --c-omega.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, default_value = "soft", value_parser = parse_rule)]
    pub threshold: ThresholdRule,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
}

/// Settings shared by the Monte Carlo commands.
#[derive(Args, Debug)]
pub struct MonteCarloArgs {
    /// Replications per δ [default: 600, or 200 with --fast].
    #[arg(long = "R", visible_alias = "replications")]
    pub replications: Option<usize>,
    /// Use 200 replications unless --R is given.
    #[arg(long)]
    pub fast: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub factors: FactorArgs,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
}

impl MonteCarloArgs {
    pub fn replications(&self) -> usize {
        self.replications
            .unwrap_or(if self.fast { 200 } else { 600 })
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario name (see the README for the list).
    #[arg(long)]
    pub preset: Option<String>,
    /// Sample size for presets.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Total dimension for presets.
    #[arg(long, default_value_t = 900)]
    pub p: usize,
    /// Master seed; overrides the scenario's.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated δ grid; overrides the scenario's.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub deltas: Option<Vec<f64>>,
    /// Also write `delta rate` columns for plotting.
    #[arg(long)]
    pub emit_plot_data: bool,
    #[command(flatten)]
    pub mc: MonteCarloArgs,
}

#[derive(Args, Debug)]
pub struct Table2Args {
    /// Master seed; example `e` uses `seed + e`.
    #[arg(long, default_value_t = PRESET_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub mc: MonteCarloArgs,
}

fn parse_ic(s: &str) -> Result<IcPenalty, String> {
    s.parse().map_err(|e: intfactor::Error| e.to_string())
}

fn parse_penalty(s: &str) -> Result<PenaltyKind, String> {
    s.parse().map_err(|e: intfactor::Error| e.to_string())
}

fn parse_rule(s: &str) -> Result<ThresholdRule, String> {
    s.parse().map_err(|e: intfactor::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseEstimator, String> {
    s.parse().map_err(|e: intfactor::Error| e.to_string())
}

fn parse_cv_rule(s: &str) -> Result<CvRule, String> {
    s.parse().map_err(|e: intfactor::Error| e.to_string())
}
