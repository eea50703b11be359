//! `algebroid-lab`: command-line front end for algebroid-core.

mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const THREADS_ENV: &str = "ALGEBROID_LAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] algebroid_core::Error),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for numerical non-convergence, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

/// Comma-separated reals; each entry may be a constant expression such as `pi/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

fn parse_list(s: &str) -> Result<List, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let e: algebroid_core::Expr = t.parse().map_err(|e| format!("`{t}`: {e}"))?;
            e.eval_at(&[], &[]).map_err(|e| format!("`{t}`: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(List)
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((a.parse().map_err(|e| format!("{e}"))?, b.parse().map_err(|e| format!("{e}"))?)),
        _ => Err(format!("expected Ntheta,Nphi, got `{s}`")),
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v < 1.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("expected a positive integer, got `{s}`"));
    }
    Ok(v as u64)
}

#[derive(Debug, Parser)]
#[command(name = "algebroid-lab", version, about = "Lie algebroids in local coordinates: axioms, paths, monodromy, integrability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Where the algebroid comes from: a spec file or a catalog entry.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// JSON spec file.
    pub spec: Option<PathBuf>,
    /// Catalog entry instead of a spec file.
    #[arg(long, conflicts_with = "spec")]
    pub catalog: Option<String>,
    /// Catalog parameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", requires = "catalog")]
    pub params: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct Numerics {
    /// Quadrature grid Ntheta,Nphi.
    #[arg(long, value_parser = parse_grid, default_value = "200,400")]
    pub grid: (usize, usize),
    /// Threshold below which r_N counts as zero.
    #[arg(long, default_value_t = 1e-9)]
    pub eps: f64,
    /// Largest denominator tried when looking for rational relations.
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    pub qmax: u64,
    /// Relative tolerance on the Richardson estimate of each sphere integral.
    #[arg(long, default_value_t = 1e-4)]
    pub quad_tol: f64,
    /// `builtin` for the catalog's leaf data, or a JSON spheres file.
    #[arg(long, default_value = "builtin")]
    pub spheres: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// Reparametrizations a^{τ_ε} of the path.
    Reparam,
    /// The family constant in ε.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConnectionKind {
    Flat,
    Adjoint,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Anchor compatibility and Jacobi residuals at seeded random points.
    Axioms {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Isotropy Lie algebra and anchor rank at a point.
    Isotropy {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
    },
    /// Geodesic of the flat frame connection, t ↦ x(t) with a(t) = v.
    Geodesic {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        velocity: List,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Look for a period up to this time.
        #[arg(long)]
        period_tmax: Option<f64>,
        /// Write the path as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide whether a family of A-paths is an A-homotopy.
    Homotopy {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        velocity: Option<List>,
        /// Base path from a CSV file instead of a geodesic.
        #[arg(long, conflicts_with = "velocity")]
        path: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Family::Reparam)]
        family: Family,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        eps_steps: usize,
        /// Acceptance threshold on max |b(ε, 1)|.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Parallel transport along the geodesic with initial velocity v.
    Transport {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        velocity: List,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = ConnectionKind::Adjoint)]
        connection: ConnectionKind,
    },
    /// Monodromy lattice of the leaf through a point.
    Monodromy {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
        #[command(flatten)]
        numerics: Numerics,
    },
    /// Integrability verdict at a point from its lattice and nearby leaves.
    Verdict {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
        /// Leaf parameters of transversal samples.
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        transversal: Option<List>,
        /// Minimum log-log slope for a transversal decay to count as r_N → 0.
        #[arg(long, default_value_t = 0.5)]
        min_decay_slope: f64,
        #[command(flatten)]
        numerics: Numerics,
    },
    /// r_N along a family of leaves.
    Profile {
        #[command(flatten)]
        source: Source,
        /// Leaf parameters (radii for the su2 families).
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        radii: Option<List>,
        /// Write the CSV (param, r_n, generator).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        numerics: Numerics,
    },
    /// Chevalley–Eilenberg cohomology dimensions.
    Cohomology {
        #[command(flatten)]
        source: Source,
        /// A named Lie algebra (su2, heisenberg, book, abelianN).
        #[arg(long, conflicts_with_all = ["spec", "catalog"])]
        algebra: Option<String>,
        /// Use the isotropy algebra at this point.
        #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
        point: Option<List>,
    },
    /// Browse the built-in examples.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogAction {
    List,
    Show {
        name: String,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(report) => {
            print!("{}", output::render(&report.json));
            ExitCode::from(report.exit)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
