use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use fbms::audit::{area_bound_report, equality_alignment, isoperimetric_check, local_edge_length};
use fbms::config::load_metric;
use fbms::fields::{singular_flux_check, star_term, sweep, tangency_sweep, SweepOptions, SAMPLER_EXCLUSION};
use fbms::mesh::{read_obj, write_obj};
use fbms::threshold::{gaussian_conventions, STAR_TOL};
use fbms::{
    calibration_audit, find_r_bar, make_mesh, minimize, AuditTolerances, CalibrationField, ConformalChart,
    MinimizeOptions, Preset, RadialGeometry, Shape, ThresholdReport, TriMesh, WarpProfile,
};

use crate::args::{
    Command, Construction, ExportArgs, FieldCheckArgs, MeshArgs, MetricArgs, RadiusArgs, SolveArgs, ThresholdArgs,
    VerifyArgs,
};
use crate::report::{csv_text, num, Output, Report};
use crate::UsageError;

/// Radii up to this relative excess over R̄ are still accepted, so that
/// decimal inputs such as 1.5708 for π/2 are not refused.
const ADMISSIBLE_SLACK: f64 = 1e-5;

const THRESHOLD_TOL: f64 = 1e-10;

/// Runs one subcommand; `Ok(false)` when a check failed.
pub fn run(command: &Command) -> Result<bool> {
    let report = match command {
        Command::Metric(a) => metric(a)?,
        Command::Threshold(a) => threshold(a)?,
        Command::FieldCheck(a) => field_check(a)?,
        Command::Solve(a) => solve(a)?,
        Command::Verify(a) => verify(a)?,
        Command::Export(a) => export(a)?,
    };
    let (report, out) = report;
    let text = report.render();
    print!("{text}");
    out.write("report.txt", text.as_bytes())?;
    Ok(report.all_pass())
}

struct Space {
    profile: WarpProfile,
    geom: RadialGeometry,
    chart: ConformalChart,
}

fn space(metric: &str) -> Result<Space> {
    let profile = load_metric(metric).map_err(|e| UsageError(e.to_string()))?;
    let chart = ConformalChart::for_profile(&profile)?;
    Ok(Space { geom: RadialGeometry::new(profile.clone()), profile, chart })
}

/// `(R, S)` from exactly one of the radius flags.
fn resolve_radius(r: &RadiusArgs, sp: &Space) -> Result<(f64, f64)> {
    match (r.r_geodesic, r.s_chart) {
        (Some(big_r), None) => {
            if !(big_r > 0.0 && big_r < sp.geom.r_max()) {
                bail!(UsageError(format!("R = {big_r} must lie in (0, {})", sp.geom.r_max())));
            }
            Ok((big_r, sp.chart.s_of_r(big_r)?))
        }
        (None, Some(s)) => {
            if !(s > 0.0 && s < sp.chart.s_max()) {
                bail!(UsageError(format!("S = {s} must lie in (0, {})", sp.chart.s_max())));
            }
            Ok((sp.chart.r_of_s(s)?, s))
        }
        _ => bail!(UsageError("exactly one of --R-geodesic (--R) or --S-chart is required".into())),
    }
}

fn header(report: &mut Report, sp: &Space, metric: &str) {
    report.kv("metric", metric);
    report.kv("profile", sp.profile.name());
    report.kv("chart", sp.chart.kind_name());
}

fn radius_header(report: &mut Report, big_r: f64, big_s: f64) {
    report.num("R_geodesic", big_r);
    report.num("S_chart", big_s);
}

/// Refuse radii beyond the admissible one unless forced.
fn admissible(report: &mut Report, sp: &Space, big_r: f64, force: bool) -> Result<ThresholdReport> {
    let th = find_r_bar(&sp.geom, THRESHOLD_TOL, fbms::threshold::DEFAULT_GRID)?;
    report.num("R_bar_geodesic", th.r_bar);
    report.num("R_bar_chart", th.r_bar_chart);
    report.kv("force", force);
    if big_r > th.r_bar * (1.0 + ADMISSIBLE_SLACK) && !force {
        bail!(UsageError(format!(
            "R = {big_r} exceeds the admissible radius R̄ = {} (chart {}); pass --force to run anyway",
            num(th.r_bar),
            num(th.r_bar_chart)
        )));
    }
    Ok(th)
}

fn metric(a: &MetricArgs) -> Result<(Report, Output)> {
    let sp = space(&a.metric.metric)?;
    let out = Output::new(a.out.out.as_deref())?;
    let mut report = Report::new("metric");
    header(&mut report, &sp, &a.metric.metric);
    let r_max = sp.geom.r_max();
    let r_end = a.r_end.unwrap_or(if r_max.is_finite() { (0.95 * r_max).min(4.0) } else { 4.0 });
    if !(r_end > 0.0 && r_end < r_max) || a.points == 0 {
        bail!(UsageError(format!("--r-end must lie in (0, {r_max}) and --points must be positive")));
    }
    report.num("r_end", r_end);
    report.kv("points", a.points);
    report.num("r_max", r_max);
    report.num("K0", sp.profile.k0());
    let mut rows = Vec::with_capacity(a.points + 1);
    for k in 0..=a.points {
        let r = r_end * k as f64 / a.points as f64;
        let st = sp.geom.state(r)?;
        let s = sp.chart.s_of_r(r)?;
        rows.push(vec![
            num(r),
            num(s),
            num(st.h),
            num(st.dh),
            num(st.d2h),
            num(sp.profile.curvature_k(r)?),
            num(st.i),
            num(st.phi),
            num(st.j),
            num(sp.chart.rho(s)?),
        ]);
    }
    let csv = csv_text(&["r", "s", "h", "hp", "hpp", "K", "I", "phi", "J", "rho"], rows)?;
    if out.enabled() {
        out.write("metric.csv", &csv)?;
    } else {
        print!("{}", String::from_utf8_lossy(&csv));
    }
    let grid: Vec<f64> = (1..=a.points).map(|k| r_end * k as f64 / a.points as f64).collect();
    let adm = sp.profile.check_admissibility(&grid, 1e-8)?;
    report.kv("C2_positive_curvature", adm.c2_pass);
    report.kv("C2_degenerate", adm.degenerate_c2);
    report.num("min_K", adm.min_k);
    report.check("C1-normalization", adm.c1_pass, format!("h(0) = {} h'(0) = {} h''(0) = {}", num(adm.h0), num(adm.dh0), num(adm.d2h0)));
    Ok((report, out))
}

fn threshold(a: &ThresholdArgs) -> Result<(Report, Output)> {
    let sp = space(&a.metric.metric)?;
    let out = Output::new(a.out.out.as_deref())?;
    let mut report = Report::new("threshold");
    header(&mut report, &sp, &a.metric.metric);
    report.kv("grid", a.grid);
    report.num("tol", a.tol);
    let th = find_r_bar(&sp.geom, a.tol, a.grid)?;
    report.num("R_bar_geodesic", th.r_bar);
    report.num("R_bar_chart", th.r_bar_chart);
    report.num("binding_r", th.binding_r);
    report.num("certificate_below", th.certificate_below);
    report.opt("certificate_above", th.certificate_above);
    report.kv("hits_domain_bound", th.hits_domain_bound);
    report.kv("identically_zero", th.identically_zero);
    if sp.profile.is_preset(Preset::GaussianShrinker) {
        let g = gaussian_conventions(a.tol, a.grid)?;
        report.num("reference_root", g.reference_root);
        report.num("reference_root_chart_scaled", g.reference_root_scaled);
        report.num("alternative_R_bar_geodesic", g.alternative.r_bar);
        report.num("alternative_R_bar_chart", g.alternative.r_bar_chart);
        report.num("solver_chart_minus_scaled_root", th.r_bar_chart - g.reference_root_scaled);
    }
    report.check_le("certificate-below", th.certificate_below, STAR_TOL);
    if let Some(above) = th.certificate_above {
        report.check("certificate-above", above > STAR_TOL, format!("value = {} must exceed {}", num(above), num(STAR_TOL)));
    }
    if th.r_bar.is_finite() && out.enabled() {
        let n = 200;
        let rows = (1..=n)
            .map(|k| {
                let r = th.r_bar * k as f64 / n as f64;
                Ok(vec![num(r), num(star_term(&sp.geom, r, th.r_bar)?)])
            })
            .collect::<Result<Vec<_>>>()?;
        out.write("star.csv", &csv_text(&["r", "star"], rows)?)?;
    }
    Ok((report, out))
}

fn build_field(sp: &Space, construction: Construction, big_r: f64, y: Vec<f64>) -> Result<CalibrationField> {
    Ok(match construction {
        Construction::Conformal => CalibrationField::conformal(sp.geom.clone(), sp.chart.clone(), big_r, y)?,
        Construction::SphereExtrinsic => {
            if !sp.profile.is_preset(Preset::Sphere) {
                bail!(UsageError("--construction sphere-extrinsic needs --metric sphere".into()));
            }
            CalibrationField::sphere_extrinsic(big_r, y)?
        }
    })
}

fn construction_name(c: Construction) -> &'static str {
    match c {
        Construction::Conformal => "conformal",
        Construction::SphereExtrinsic => "sphere-extrinsic",
    }
}

fn field_check(a: &FieldCheckArgs) -> Result<(Report, Output)> {
    let sp = space(&a.metric.metric)?;
    let out = Output::new(a.out.out.as_deref())?;
    let mut report = Report::new("field-check");
    header(&mut report, &sp, &a.metric.metric);
    let (big_r, big_s) = resolve_radius(&a.radius, &sp)?;
    radius_header(&mut report, big_r, big_s);
    report.kv("samples", a.samples);
    report.kv("seed", a.seed);
    report.num("oracle_step_rel", a.oracle_step);
    report.kv("oracle", !a.no_oracle);
    report.kv("tangency_samples", a.tangency_samples);
    report.kv("flux_directions", a.flux_directions);
    report.kv("construction", construction_name(a.construction));
    admissible(&mut report, &sp, big_r, a.force)?;

    let field = build_field(&sp, a.construction, big_r, vec![big_s, 0.0, 0.0])?;
    let opts = SweepOptions {
        samples: a.samples,
        seed: a.seed,
        exclusion: SAMPLER_EXCLUSION,
        oracle_step: (!a.no_oracle).then_some(a.oracle_step * big_s),
    };
    let records = sweep(&field, &opts)?;
    let max_div = records.iter().map(|r| r.div_exact).fold(f64::NEG_INFINITY, f64::max);
    let violations = records.iter().filter(|r| r.div_exact > 1.0 + 1e-9).count();
    let over_bound = records.iter().map(|r| r.div_exact - r.div_bound).fold(f64::NEG_INFINITY, f64::max);
    report.num("max_div", max_div);
    report.kv("violations", violations);
    report.num("max_div_minus_bound", over_bound);
    let tangency = tangency_sweep(&field, a.tangency_samples, a.seed)?;
    let max_tangency = tangency.iter().copied().fold(0.0, f64::max);
    report.num("max_tangency_residual", max_tangency);
    let oracle_err = if a.no_oracle {
        None
    } else {
        Some(records.iter().filter_map(|r| r.oracle_rel_err()).fold(0.0, f64::max))
    };
    report.opt("oracle_max_rel_err", oracle_err);
    let eps_list = [1e-2, 1e-3];
    let flux = singular_flux_check(&field, &eps_list, a.flux_directions, a.seed)?;
    for row in &flux {
        report.num(&format!("flux_ratio_mean[eps={}]", num(row.eps)), row.mean_ratio);
        report.num(&format!("flux_ratio_min[eps={}]", num(row.eps)), row.min_ratio);
        report.num(&format!("flux_ratio_max[eps={}]", num(row.eps)), row.max_ratio);
    }

    report.check("calibration-bound", violations == 0, format!("max_div = {} limit = 1 + 1e-9", num(max_div)));
    report.check_le("div-below-pointwise-bound", over_bound, 1e-9);
    report.check_le("boundary-tangency", max_tangency, 1e-10);
    if let Some(e) = oracle_err {
        report.check_le("fd-oracle", e, 1e-6);
    }
    let last = flux.last().expect("non-empty eps list");
    let dev = (last.min_ratio - 1.0).abs().max((last.max_ratio - 1.0).abs());
    report.check_le("singular-flux", dev, 0.01);

    if a.csv {
        let rows = records.iter().map(|r| {
            vec![
                r.index.to_string(),
                num(r.s),
                num(r.grad_sigma_r_sq),
                num(r.div_exact),
                num(r.div_bound),
                r.oracle.map(num).unwrap_or_default(),
            ]
        });
        out.write(
            "samples.csv",
            &csv_text(&["index", "s", "grad_sigma_r_sq", "div_exact", "div_bound", "oracle"], rows)?,
        )?;
    }
    Ok((report, out))
}

fn mesh_header(report: &mut Report, m: &MeshArgs, amplitude: f64) {
    report.kv("shape", m.shape);
    report.kv("resolution", m.resolution);
    report.kv("seed", m.seed);
    report.num("amplitude", amplitude);
    report.kv("max_iter", m.max_iter);
    report.num("grad_tol", m.grad_tol);
    report.kv("step", m.step.name());
}

/// Build the initial surface and minimize it; flat disks are returned as built.
fn solve_mesh(report: &mut Report, out: &Output, sp: &Space, m: &MeshArgs, big_r: f64, big_s: f64, tol_area: f64) -> Result<TriMesh> {
    let amplitude = m.amplitude.unwrap_or(0.05 * big_s);
    mesh_header(report, m, amplitude);
    let initial = make_mesh(m.shape, big_s, m.resolution, m.seed, amplitude).map_err(|e| match e {
        fbms::Error::InvalidParameter(s) => anyhow::Error::new(UsageError(s)),
        other => other.into(),
    })?;
    report.kv("triangles", initial.triangles().len());
    report.kv("vertices", initial.vertices().len());
    let opts = MinimizeOptions { max_iter: m.max_iter, grad_tol: m.grad_tol, step_rule: m.step, trace: m.trace };
    let (mesh, rep) = minimize(&initial, &sp.geom, &sp.chart, &opts)?;
    report.kv("topology", rep.topology);
    report.num("area_g", rep.area_g);
    report.num("boundary_length_g", rep.boundary_length_g);
    report.num("bound", rep.bound);
    report.num("gap", rep.gap);
    report.num("relative_gap", rep.gap / rep.bound);
    report.num("orthogonality_defect_rad", rep.orthogonality_defect);
    report.num("orthogonality_defect_deg", rep.orthogonality_defect.to_degrees());
    report.num("gradient_residual", rep.gradient_residual);
    report.kv("iterations", rep.iterations);
    report.kv("converged", rep.converged);
    report.kv("line_search_failed", rep.line_search_failed);
    report.num("gauss_bonnet_defect", fbms::mesh::gauss_bonnet_defect(&mesh, &sp.chart));
    let align = equality_alignment(&mesh);
    report.num("equality_alignment", align);

    let mut obj = Vec::new();
    write_obj(&mesh, &mut obj)?;
    out.write("mesh.obj", &obj)?;
    if m.trace {
        let rows = rep.trace.iter().map(|t| vec![t.iter.to_string(), num(t.area), num(t.residual)]);
        out.write("trace.csv", &csv_text(&["iteration", "area", "residual"], rows)?)?;
    }

    report.check("converged", rep.converged, format!("residual = {} grad_tol = {}", num(rep.gradient_residual), num(m.grad_tol)));
    let ab = area_bound_report(&mesh, &sp.geom, &sp.chart, big_r, tol_area)?;
    report.check("area-bound", ab.pass, format!("relative gap = {} limit = -{}", num(ab.relative_gap), num(tol_area)));
    if m.shape != Shape::Annulus {
        report.check_le("orthogonality", rep.orthogonality_defect.to_degrees(), 2.0);
    }
    if ab.relative_gap.abs() <= 0.01 && m.shape != Shape::Annulus {
        report.check("equality-alignment", align >= 0.95, format!("fraction = {} limit = 0.95", num(align)));
    }
    isoperimetric(report, sp, &mesh, big_r)?;
    Ok(mesh)
}

fn isoperimetric(report: &mut Report, sp: &Space, mesh: &TriMesh, big_r: f64) -> Result<()> {
    if sp.profile.is_preset(Preset::Sphere) && big_r <= FRAC_PI_2 + 1e-12 {
        let iso = isoperimetric_check(mesh, &sp.geom, &sp.chart, big_r, 1e-3)?;
        report.num("isoperimetric_rhs", iso.rhs);
        report.num("isoperimetric_relative_slack", iso.relative_slack);
        report.check("isoperimetric", iso.pass, format!("relative slack = {} limit = -0.001", num(iso.relative_slack)));
    }
    Ok(())
}

fn solve(a: &SolveArgs) -> Result<(Report, Output)> {
    let sp = space(&a.metric.metric)?;
    let out = Output::new(a.out.out.as_deref())?;
    let mut report = Report::new("solve");
    header(&mut report, &sp, &a.metric.metric);
    let (big_r, big_s) = resolve_radius(&a.radius, &sp)?;
    radius_header(&mut report, big_r, big_s);
    report.num("tol_area", a.tol_area);
    solve_mesh(&mut report, &out, &sp, &a.mesh, big_r, big_s, a.tol_area)?;
    Ok((report, out))
}

fn verify(a: &VerifyArgs) -> Result<(Report, Output)> {
    let sp = space(&a.metric.metric)?;
    let out = Output::new(a.out.out.as_deref())?;
    let mut report = Report::new("verify");
    header(&mut report, &sp, &a.metric.metric);
    let mesh_in = match &a.mesh_file {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            Some(read_obj(BufReader::new(f)).map_err(|e| UsageError(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let (big_r, big_s) = match (&mesh_in, a.radius.r_geodesic.is_none() && a.radius.s_chart.is_none()) {
        (Some(m), true) => (sp.chart.r_of_s(m.chart_radius())?, m.chart_radius()),
        _ => resolve_radius(&a.radius, &sp)?,
    };
    radius_header(&mut report, big_r, big_s);
    report.kv("construction", construction_name(a.construction));
    report.opt("eps_flag", a.eps);
    report.num("tol_divergence", a.tol_divergence);
    report.num("tol_boundary_flux", a.tol_boundary_flux);
    report.num("tol_singular", a.tol_singular);
    report.num("tol_area", a.tol_area);
    admissible(&mut report, &sp, big_r, a.force)?;

    let mesh = match mesh_in {
        Some(m) => {
            if (m.chart_radius() - big_s).abs() > 1e-9 * big_s {
                bail!(UsageError(format!("mesh chart radius {} does not match S = {big_s}", m.chart_radius())));
            }
            report.kv("mesh_file", a.mesh_file.as_ref().unwrap().display());
            report.kv("topology", m.topology());
            let ab = area_bound_report(&m, &sp.geom, &sp.chart, big_r, a.tol_area)?;
            report.num("area_g", ab.area);
            report.num("relative_gap", ab.relative_gap);
            report.check("area-bound", ab.pass, format!("relative gap = {} limit = -{}", num(ab.relative_gap), num(a.tol_area)));
            isoperimetric(&mut report, &sp, &m, big_r)?;
            m
        }
        None => solve_mesh(&mut report, &out, &sp, &a.mesh, big_r, big_s, a.tol_area)?,
    };

    let yv = mesh
        .nearest_boundary_vertex(&[big_s, 0.0, 0.0])
        .ok_or_else(|| UsageError("mesh has no boundary".into()))?;
    let y = mesh.vertices()[yv].to_vec();
    let field = build_field(&sp, a.construction, big_r, y)?;
    let eps = a.eps.unwrap_or(5.5 * local_edge_length(&mesh, yv));
    if eps.is_nan() || eps >= big_s / 6.0 {
        bail!(UsageError(format!("eps = {eps} must be below S/6 = {}; refine the mesh or pass --eps", big_s / 6.0)));
    }
    let rec = calibration_audit(&mesh, &field, eps)?;
    report.num("audit.eps", rec.eps);
    report.kv("audit.y_vertex", rec.y_vertex);
    report.num("audit.area_g", rec.area_g);
    report.num("audit.area_outside", rec.area_outside);
    report.num("audit.div_integral", rec.div_integral);
    report.num("audit.boundary_flux", rec.boundary_flux);
    report.num("audit.singular_flux", rec.singular_flux);
    report.num("audit.singular_limit", rec.singular_limit);
    report.num("audit.arc_angle", rec.arc_angle);
    report.num("audit.curvature_term", rec.curvature_term);
    report.num("audit.bound", rec.bound);
    report.num("audit.max_div", rec.max_div);
    report.num("audit.slack_area", rec.slack_area);
    report.num("audit.slack_flux", rec.slack_flux);
    report.num("audit.divergence_residual", rec.divergence_residual);
    report.num("audit.quadrature_residual", rec.quadrature_residual);
    let tol = AuditTolerances {
        divergence: a.tol_divergence,
        boundary_flux: a.tol_boundary_flux,
        singular: a.tol_singular,
    };
    for c in rec.checks(&tol) {
        report.check(c.name, c.pass, format!("value = {} limit = {}", num(c.value), num(c.limit)));
    }
    Ok((report, out))
}

fn export(a: &ExportArgs) -> Result<(Report, Output)> {
    if a.from == a.out {
        bail!(UsageError("--from and --out must differ".into()));
    }
    let mut names: Vec<_> = fs::read_dir(&a.from)
        .with_context(|| format!("cannot read {}", a.from.display()))?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let out = Output::new(Some(&a.out))?;
    let mut report = Report::new("export");
    report.kv("from", a.from.display());
    report.kv("out", a.out.display());
    for name in names {
        let src = a.from.join(&name);
        let bytes = if name.ends_with(".obj") {
            let mesh = read_obj(BufReader::new(fs::File::open(&src)?))?;
            let mut buf = Vec::new();
            write_obj(&mesh, &mut buf)?;
            buf
        } else if name.ends_with(".csv") {
            let mut rdr = csv::Reader::from_path(&src)?;
            let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
            let rows = rdr
                .records()
                .map(|r| Ok(r?.iter().map(str::to_string).collect()))
                .collect::<Result<Vec<Vec<String>>>>()?;
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            csv_text(&h, rows)?
        } else if name == "report.txt" {
            // re-emitted below under a separate name so this run's report does not overwrite it
            fs::read(&src)?
        } else {
            continue;
        };
        let target = if name == "report.txt" { "source_report.txt" } else { name.as_str() };
        out.write(target, &bytes)?;
        report.kv("exported", target);
    }
    Ok((report, out))
}
