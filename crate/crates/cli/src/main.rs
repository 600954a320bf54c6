mod commands;
mod parse;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

/// Synthesize scattering data from boundary jets and recover the jets by layer stripping.
#[derive(Parser, Debug)]
#[command(name = "layerstrip", version)]
pub struct Cli {
    /// Log stage formulas (-v) or per-point detail (-vv). `RUST_LOG` overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample the principal symbol
    /// `S(ξ) = 2^{n−2σ} Γ(n/2 − σ)/Γ(σ − n/2) |ξ|_{h₀}^{2σ−n}` over the patch and,
    /// given a second patch, the first-order singularity coefficient
    /// `F(ω) = C(σ)[t₁ Σ H_ij D_ij(ω) + t₂(W⁽¹⁾ − α²(1 − n)T/4)]`.
    Forward(ForwardArgs),
    /// Layer stripping: `σ` from symbol ratios, `h₀` by polarization,
    /// `(α², V₀)` from two energies via `α²σ(n − σ) + V₀ − λ² − n²/4 = 0`,
    /// then `(H, W⁽¹⁾)` by a minimum-norm solve on the probe samples.
    Invert(InvertArgs),
    /// Exceptional sets: the interval
    /// `λ² ∈ [min V₀ − max α² n²/4 + n²/4, max V₀ − min α² n²/4 + n²/4]`,
    /// the modes `λ² = V₀ − n²/4 + α²(n² − k²)/4` where `σ₋ = (n − k)/2`,
    /// admissibility of given energies, and a grid scan for zeros of `T₁(σ)`, `T₂(σ)`.
    Sets(SetsArgs),
    /// Model integrals `T₁`, `T₂` (limit integrals), `J(l, k, σ)`, `I_l(σ, s, z)`
    /// and the Green kernel `G(s, z) = c(σ) s^σ (1 + s² + |z|²)^{−σ}`.
    Integrals(IntegralsArgs),
    /// Finite-difference verification checks.
    Verify {
        #[command(subcommand)]
        check: VerifyCheck,
    },
    /// Generate a seeded synthetic pair of patches, run forward then invert, and
    /// compare against the known jets.
    Roundtrip(RoundtripArgs),
}

#[derive(Subcommand, Debug)]
pub enum VerifyCheck {
    /// Grid residual of `(Δ₀ − σ(n − σ))K` with
    /// `Δ₀ = −(s∂_s)² + n s∂_s − s² Σ ∂²_{z_i}` on a logarithmic `s` grid, on the
    /// grid and on its refinement. Second order means a ratio in `[3.5, 4.5]`.
    Green(GreenArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMode {
    /// `t₁ = t₂ = 1`, or the values of `--t1`, `--t2`.
    Injected,
    /// Adaptive quadrature of `T₁(σ)`, `T₂(σ)` at each point.
    Quadrature,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TSource {
    /// Whatever the dataset recorded; quadrature at the recovered `σ` if the
    /// dataset used quadrature.
    Dataset,
    Injected,
    Quadrature,
}

#[derive(Args, Debug, Clone)]
pub struct FactorArgs {
    #[arg(long, value_parser = parse::complex, default_value = "1")]
    pub t1: Complex64,
    #[arg(long, value_parser = parse::complex, default_value = "1")]
    pub t2: Complex64,
    /// Relative tolerance for quadrature-computed factors.
    #[arg(long, default_value_t = 1e-8)]
    pub t_tol: f64,
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    /// Patch JSON with the jets of the first pair member.
    #[arg(long)]
    pub patch1: PathBuf,
    /// Second patch; enables singularity samples.
    #[arg(long)]
    pub patch2: Option<PathBuf>,
    /// Spectral parameters λ (`a+bi`), comma separated or repeated.
    #[arg(long = "lambda", required = true, value_delimiter = ',', value_parser = parse::complex)]
    pub lambdas: Vec<Complex64>,
    /// Covector scales t for `S(tξ)`, in addition to t = 1.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    /// Constant `C(σ)` multiplying every singularity coefficient.
    #[arg(long, value_parser = parse::complex, default_value = "1")]
    pub prefactor: Complex64,
    #[arg(long, value_enum, default_value = "injected")]
    pub t_mode: TMode,
    #[command(flatten)]
    pub factors: FactorArgs,
    /// Index of the energy used for singularity samples.
    #[arg(long, default_value_t = 0)]
    pub singularity_energy: usize,
    /// Resolvent-pole λ values to exclude, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse::complex)]
    pub exclude: Vec<Complex64>,
    #[arg(long, default_value_t = 4)]
    pub k_max: u32,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV dump of the σ field over the grid.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    /// SymbolDataset JSON written by `forward`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Known α, one value or one per grid point; enables single-energy mode.
    #[arg(long, value_delimiter = ',')]
    pub alpha_known: Option<Vec<f64>>,
    /// Required distance from the exceptional set.
    #[arg(long, default_value_t = 1e-3)]
    pub margin: f64,
    #[arg(long, value_enum, default_value = "dataset")]
    pub t_source: TSource,
    #[command(flatten)]
    pub factors: FactorArgs,
    /// Replaces the constant `C(σ)` recorded in the dataset.
    #[arg(long, value_parser = parse::complex)]
    pub prefactor: Option<Complex64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV dump of the recovered fields over the grid.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SetsArgs {
    #[arg(long)]
    pub patch: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k_max: u32,
    #[arg(long, value_delimiter = ',', value_parser = parse::complex)]
    pub exclude: Vec<Complex64>,
    /// Energies to test for admissibility.
    #[arg(long = "lambda", value_delimiter = ',', value_parser = parse::complex)]
    pub lambdas: Vec<Complex64>,
    #[arg(long, default_value_t = 1e-3)]
    pub margin: f64,
    /// σ-plane rectangle `re0,re1,im0,im1` scanned for zeros of T₁, T₂.
    #[arg(long, value_parser = parse::region, allow_hyphen_values = true)]
    pub scan: Option<[f64; 4]>,
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    /// Dimension used for the integrals; defaults to the patch dimension.
    #[arg(long)]
    pub scan_n: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub zero_tol: f64,
    /// Relative tolerance of each T evaluation in the scan.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
#[value(rename_all = "verbatim")]
pub enum Which {
    T1,
    T2,
    J,
    I,
    G,
}

#[derive(Args, Debug)]
pub struct IntegralsArgs {
    #[arg(long, value_enum)]
    pub which: Which,
    #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
    pub sigma: Complex64,
    #[arg(long)]
    pub n: usize,
    /// Term index for J and I.
    #[arg(long, default_value_t = 2)]
    pub l: u32,
    /// Power index for J.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub k: i64,
    /// `s` for I and G.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// `z` for I and G, comma separated; zero vector when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub z: Option<Vec<f64>>,
    /// Second center for T₁, T₂ (normalized); `e₁` when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelArg {
    /// `s^σ (1 + s² + |z|²)^{−σ}`.
    Leading,
    /// `e^{−σd} ₂F₁(σ, n/2; σ − n/2 + 1; e^{−2d})`.
    Full,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignArg {
    /// `Δ₀ − σ(n − σ)`.
    Annihilating,
    /// `Δ₀ − σ(σ − n)`.
    Reversed,
}

#[derive(Args, Debug)]
pub struct GreenArgs {
    #[arg(long, value_parser = parse::complex)]
    pub sigma: Complex64,
    #[arg(long)]
    pub n: usize,
    /// Points per axis of the coarse grid.
    #[arg(long, default_value_t = 25)]
    pub grid_size: usize,
    #[arg(long, value_enum, default_value = "leading")]
    pub kernel: KernelArg,
    #[arg(long, value_enum, default_value = "annihilating")]
    pub sign: SignArg,
    /// Half width of the `τ = log s` window.
    #[arg(long, default_value_t = 1.5)]
    pub tau_half_width: f64,
    #[arg(long, default_value_t = 2.0)]
    pub z_half_width: f64,
    /// Radius of the ball around `(s, z) = (1, 0)` left out of the maxima.
    #[arg(long, default_value_t = 0.6)]
    pub exclusion: f64,
    /// Exit with status 1 unless the ratio lies in `[3.5, 4.5]`.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyArg {
    Complex,
    Imaginary,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub points_per_axis: usize,
    #[arg(long, value_enum, default_value = "injected")]
    pub t_mode: TMode,
    #[arg(long, value_enum, default_value = "complex")]
    pub energy_kind: EnergyArg,
    /// Only the first K grid points carry singularity samples.
    #[arg(long)]
    pub singular_points: Option<usize>,
    /// Largest accepted recovery error.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Directory for patches, dataset, report and summary.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{code}: {message}")]
    Numeric { code: String, message: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric { .. } => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
        }
    }
}

impl From<layerstrip::Error> for CliError {
    fn from(e: layerstrip::Error) -> Self {
        use layerstrip::dataset::DatasetError;
        match &e {
            layerstrip::Error::Patch(_) => CliError::Config(format!("{}: {e}", e.code())),
            layerstrip::Error::Dataset(DatasetError::InvalidConfig(_) | DatasetError::Malformed(_)) => {
                CliError::Config(format!("{}: {e}", e.code()))
            }
            _ => CliError::Numeric {
                code: e.code(),
                message: e.to_string(),
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
