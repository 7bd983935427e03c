use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbms::mesh::StepRule;
use fbms::Shape;

#[derive(Debug, Parser)]
#[command(
    name = "fbms",
    version,
    about = "Calibration fields, admissible radii and discrete free boundary surfaces in rotationally symmetric balls",
    after_help = "Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 numeric failure."
)]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "FBMS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the radial profile and its conformal chart.
    #[command(after_help = "CSV columns (metric.csv): r,s,h,hp,hpp,K,I,phi,J,rho\n\
        r geodesic radius, s chart radius, h warping function, hp/hpp its derivatives,\n\
        K radial curvature -h''/h, I area potential, phi radial field, J = 2 I h' - h^2,\n\
        rho conformal factor at s.")]
    Metric(MetricArgs),
    /// Compute the admissible radius R̄.
    #[command(after_help = "CSV columns (star.csv): r,star\n(*)(r, R̄) on a uniform grid of (0, R̄].")]
    Threshold(ThresholdArgs),
    /// Monte-Carlo check of the calibration field on random tangent planes.
    #[command(after_help = "CSV columns (samples.csv, with --csv): index,s,grad_sigma_r_sq,div_exact,div_bound,oracle\n\
        oracle is the finite-difference divergence (empty with --no-oracle).")]
    FieldCheck(FieldCheckArgs),
    /// Minimize the curved area of a discrete surface with free boundary.
    #[command(after_help = "Artifacts: mesh.obj (chart coordinates), report.txt, and with --trace\n\
        trace.csv with columns iteration,area,residual.")]
    Solve(SolveArgs),
    /// Audit the calibration argument on a discrete surface.
    #[command(after_help = "Without --mesh the surface is built and minimized as in `solve`.\n\
        Artifacts: report.txt, and mesh.obj when a surface was solved.")]
    Verify(VerifyArgs),
    /// Re-emit the artifacts of a previous run directory in canonical form.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct MetricSel {
    /// Preset (euclidean, sphere, gaussian-shrinker) or path to a metric config.
    #[arg(long)]
    pub metric: String,
}

/// Radii accept plain numbers and multiples of pi: `pi`, `pi/2`, `2pi/3`.
pub fn parse_radius(text: &str) -> Result<f64, String> {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().map_err(|_| format!("bad radius `{text}`"))?),
        None => (t, 1.0),
    };
    let k = match num.strip_suffix("pi") {
        Some("") => 1.0,
        Some(k) => k.trim_end_matches('*').parse::<f64>().map_err(|_| format!("bad radius `{text}`"))?,
        None => return Err(format!("bad radius `{text}`")),
    };
    Ok(k * std::f64::consts::PI / den)
}

#[derive(Debug, Clone, Args)]
pub struct RadiusArgs {
    /// Geodesic ball radius R.
    #[arg(long = "R-geodesic", visible_alias = "R", value_parser = parse_radius, conflicts_with = "s_chart")]
    pub r_geodesic: Option<f64>,
    /// Chart ball radius S = s(R).
    #[arg(long = "S-chart", value_parser = parse_radius)]
    pub s_chart: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Directory for artifacts; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[command(flatten)]
    pub metric: MetricSel,
    /// Last radius of the table (default: min(0.95 r̄, 4)).
    #[arg(long, value_parser = parse_radius)]
    pub r_end: Option<f64>,
    /// Number of grid intervals.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub metric: MetricSel,
    /// Grid size for the maximum of (*) over (0, R].
    #[arg(long, default_value_t = fbms::threshold::DEFAULT_GRID)]
    pub grid: usize,
    /// Bisection tolerance on R̄.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Construction {
    /// W = Φ - 2 I(R) V in the conformal chart.
    Conformal,
    /// Combination of Φ_p and Ψ_y on the round sphere (sphere preset only).
    SphereExtrinsic,
}

#[derive(Debug, Args)]
pub struct FieldCheckArgs {
    #[command(flatten)]
    pub metric: MetricSel,
    #[command(flatten)]
    pub radius: RadiusArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step of the oracle, relative to S.
    #[arg(long, default_value_t = 1e-4)]
    pub oracle_step: f64,
    /// Skip the finite-difference oracle.
    #[arg(long)]
    pub no_oracle: bool,
    /// Boundary points for the tangency check.
    #[arg(long, default_value_t = 1000)]
    pub tangency_samples: usize,
    /// Directions per radius for the singular flux check.
    #[arg(long, default_value_t = 64)]
    pub flux_directions: usize,
    #[arg(long, value_enum, default_value_t = Construction::Conformal)]
    pub construction: Construction,
    /// Run even when R exceeds the admissible radius.
    #[arg(long)]
    pub force: bool,
    /// Write per-sample records to samples.csv.
    #[arg(long, requires = "out")]
    pub csv: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MeshArgs {
    #[arg(long, default_value_t = Shape::PerturbedDisk)]
    pub shape: Shape,
    /// Rings of the disk (6 m² triangles) or rows of the annulus.
    #[arg(long, default_value_t = 58)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbation amplitude in chart units (default 0.05 S).
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grad_tol: f64,
    #[arg(long, default_value = "sobolev", value_parser = parse_step)]
    pub step: StepRule,
    /// Write the per-iteration trace to trace.csv.
    #[arg(long)]
    pub trace: bool,
}

fn parse_step(text: &str) -> Result<StepRule, String> {
    text.parse().map_err(|e: fbms::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub metric: MetricSel,
    #[command(flatten)]
    pub radius: RadiusArgs,
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Relative tolerance of the area bound check.
    #[arg(long, default_value_t = 0.01)]
    pub tol_area: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub metric: MetricSel,
    #[command(flatten)]
    pub radius: RadiusArgs,
    /// Audit this OBJ mesh instead of solving one.
    #[arg(long)]
    pub mesh_file: Option<PathBuf>,
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Radius of the excised chart ball around y (default 5.5 local edge lengths).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = Construction::Conformal)]
    pub construction: Construction,
    #[arg(long, default_value_t = 0.01)]
    pub tol_divergence: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tol_boundary_flux: f64,
    #[arg(long, default_value_t = 0.02)]
    pub tol_singular: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tol_area: f64,
    /// Run even when R exceeds the admissible radius.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Directory of a previous run.
    #[arg(long)]
    pub from: PathBuf,
    /// Destination directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_forms() {
        assert_eq!(parse_radius("1.5").unwrap(), 1.5);
        assert_eq!(parse_radius("pi/2").unwrap(), std::f64::consts::FRAC_PI_2);
        assert_eq!(parse_radius("2pi/3").unwrap(), 2.0 * std::f64::consts::PI / 3.0);
        assert_eq!(parse_radius("pi").unwrap(), std::f64::consts::PI);
        assert!(parse_radius("tau").is_err());
    }

    #[test]
    fn radius_flags_conflict() {
        let r = Cli::try_parse_from(["fbms", "solve", "--metric", "sphere", "--R", "1", "--S-chart", "1"]);
        assert!(r.is_err());
        let ok = Cli::try_parse_from(["fbms", "solve", "--metric", "sphere", "--R-geodesic", "pi/3"]).unwrap();
        assert!(matches!(ok.command, Command::Solve(_)));
    }
}
