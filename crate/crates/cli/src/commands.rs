use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lambda1_core::expr::Expr;
use lambda1_core::grid::{DirectionSet, GridDomain};
use lambda1_core::hermitian::{eigenvalues, HermitianMatrix};
use lambda1_core::operators::{
    comparability_estimate, concavity_counterexample, evaluate, positive_cone_check,
    property_counts, OperatorKind, OperatorSpec,
};
use lambda1_core::oracle::{quadratic_solution, verify_viscosity, RadialSolution};
use lambda1_core::scheme::{GridFunction, ResidualReport, Stencil};
use lambda1_core::solver::{
    barrier_subsolution, comparison_check, harmonic_supersolution, solve_general, solve_lambda1,
    ProblemSpec, SolveReport, SolverError,
};
use num_complex::Complex64;
use serde_json::Value;

use crate::config::{number_list, Config, ConfigError};
use crate::io::{field_csv, field_from_rows, read_field_csv, write_atomic, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_FLAGGED: i32 = 3;

pub struct RunContext {
    pub config: Config,
    pub out: PathBuf,
}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(ConfigError(e.to_string()))
}

fn preamble(ctx: &RunContext, command: &str) -> Vec<String> {
    let mut lines = vec![
        format!("lambda1 {}", env!("CARGO_PKG_VERSION")),
        format!("command = {command}"),
    ];
    lines.extend(ctx.config.entries().map(|(k, v)| format!("{k} = {v}")));
    lines
}

/// Domain from either `domain.level` (with `grid.box`) or `domain.preset`,
/// plus the exhaustion used by the barrier.
fn build_stencil(cfg: &Config) -> Result<(Stencil, Option<Expr>)> {
    let n = cfg.dim()?;
    let h: f64 = cfg.get("grid.h")?;
    let width: u32 = cfg.get("directions.W")?;
    if width == 0 {
        return Err(config_err("directions.W must be at least 1"));
    }
    let (level, bbox, psi) = if cfg.is_set("domain.level") {
        let bbox = cfg
            .bbox()?
            .ok_or_else(|| config_err("domain.level needs grid.box"))?;
        (cfg.expr("domain.level")?, bbox, cfg.opt_expr("domain.psi")?)
    } else {
        let preset = cfg.preset()?;
        let bbox = match cfg.bbox()? {
            Some(b) => b,
            None => preset.bbox(n, h),
        };
        let psi = match cfg.opt_expr("domain.psi")? {
            Some(p) => Some(p),
            None => preset.exhaustion_for(n),
        };
        (preset.level_for(n), bbox, psi)
    };
    let domain = GridDomain::build(n, h, level, &bbox).map_err(config_err)?;
    let stencil = Stencil::new(domain, DirectionSet::new(n, width)).map_err(config_err)?;
    Ok((stencil, psi))
}

fn build_problem(cfg: &Config) -> Result<ProblemSpec> {
    cfg.require(&["rhs.f", "boundary.phi"])?;
    let f = cfg.expr("rhs.f")?;
    let phi = cfg.expr("boundary.phi")?;
    let phi_tilde = cfg.opt_expr("boundary.phi_tilde")?;
    let operator = cfg.operator()?;
    let options = cfg.solver_options()?;
    let (stencil, psi) = build_stencil(cfg)?;
    ProblemSpec::new(stencil, f, phi, phi_tilde, psi, operator, options).map_err(config_err)
}

fn residual_fields(r: &mut Report, rr: &ResidualReport) {
    r.set("max_abs_wide", rr.max_abs_wide)
        .set("mean_abs_wide", rr.mean_abs_wide)
        .set("max_abs_spectral", rr.max_abs_spectral)
        .set("mean_abs_spectral", rr.mean_abs_spectral)
        .set("wide_nodes", rr.wide_nodes)
        .set("spectral_nodes", rr.spectral_nodes)
        .set("cone_exits", rr.cone_exits)
        .set("subsolution", rr.subsolution)
        .set("supersolution", rr.supersolution);
}

fn grid_fields(r: &mut Report, cfg: &Config, s: &Stencil) -> Result<()> {
    r.set("n", cfg.dim()?)
        .set("h", s.domain().spacing())
        .set("W", s.directions().width())
        .set("directions", s.directions().len())
        .set("unknowns", s.len())
        .set("boundary_points", s.boundary_points().len())
        .set("slaved_nodes", s.slaved_count());
    Ok(())
}

pub fn solve(ctx: &RunContext) -> Result<i32> {
    let cfg = &ctx.config;
    let p = build_problem(cfg)?;
    let exact = cfg.opt_expr("solve.exact")?;
    let run: Result<SolveReport, SolverError> = if p.operator.kind() == &OperatorKind::Lambda1 {
        solve_lambda1(&p)
    } else {
        solve_general(&p, None)
    };
    let run = run.map_err(config_err)?;

    let s = &p.stencil;
    let mut report = Report::new("solve");
    grid_fields(&mut report, cfg, s)?;
    report
        .set("operator", p.operator.kind().to_string())
        .set("experimental", run.experimental)
        .set("converged", run.converged)
        .set("sweeps", run.sweeps)
        .set("final_max_update", run.final_max_update)
        .set("min_update", run.min_update())
        .set("cone_projections", run.cone_projections)
        .set("wall_time_s", run.wall_time.as_secs_f64());
    residual_fields(&mut report, &run.residual);
    if let Some(e) = &exact {
        let n = cfg.dim()?;
        let mut err = 0.0f64;
        for (q, &idx) in s.nodes().iter().enumerate() {
            let want = e.eval_at(&s.coords(q)[..2 * n]).map_err(config_err)?;
            err = err.max((run.solution.at_node(idx) - want).abs());
        }
        report.set("linf_error", err);
    }

    let pre = preamble(ctx, "solve");
    write_atomic(
        &ctx.out.join("solution.csv"),
        field_csv(s, &run.solution, Some(&run.residual.wide), &pre).as_bytes(),
    )?;
    if cfg.get::<bool>("solve.write_bounds")? {
        let barrier = barrier_subsolution(&p, p.options.margin).map_err(config_err)?;
        let rb = p.lambda1_residuals(&barrier)?;
        write_atomic(
            &ctx.out.join("barrier.csv"),
            field_csv(s, &barrier, Some(&rb.wide), &pre).as_bytes(),
        )?;
        let harm = harmonic_supersolution(&p).map_err(config_err)?;
        let rh = p.lambda1_residuals(&harm.solution)?;
        write_atomic(
            &ctx.out.join("harmonic.csv"),
            field_csv(s, &harm.solution, Some(&rh.wide), &pre).as_bytes(),
        )?;
        report.set("harmonic_converged", harm.converged);
    }
    report.write(&ctx.out.join("report.json"))?;
    Ok(if run.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn load_field(s: &Stencil, path: &Path) -> Result<GridFunction> {
    let rows = read_field_csv(path)?;
    field_from_rows(s, &rows).with_context(|| format!("{} does not match the configured grid", path.display()))
}

pub fn verify(ctx: &RunContext, field: &Path) -> Result<i32> {
    let cfg = &ctx.config;
    let p = build_problem(cfg)?;
    let s = &p.stencil;
    let u = load_field(s, field)?;
    let rr = p.residuals(&u)?;
    let tol = p.options.certify_tol;

    let mut report = Report::new("verify");
    grid_fields(&mut report, cfg, s)?;
    report
        .set("field", field.display().to_string())
        .set("operator", p.operator.kind().to_string())
        .set("certify_tol", tol);
    residual_fields(&mut report, &rr);
    // Unknowns whose wide residual misses f by more than the tolerance,
    // as 1-based data rows of the field file.
    let failures: Vec<(usize, f64)> = rr
        .wide
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > tol)
        .map(|(q, &r)| (q + 1, r))
        .collect();
    report
        .set("failure_rows", failures.iter().map(|f| f.0).collect::<Vec<_>>())
        .set("failure_residuals", failures.iter().map(|f| f.1).collect::<Vec<_>>());
    let boundary_defect = u
        .boundary()
        .iter()
        .zip(p.phi.boundary())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.set("boundary_max_defect", boundary_defect);

    if p.operator.kind() == &OperatorKind::Lambda1 {
        let probe_tol: f64 = cfg.get("verify.probe_tol")?;
        let v = verify_viscosity(s, &u, &p.f, probe_tol);
        report
            .set("probe_tol", v.tol)
            .set("probes_passed", v.passed)
            .set("probes_failed", v.failed)
            .set("probes_skipped", v.skipped)
            .set("probes_excluded", v.excluded)
            .set("probe_pass_rate", v.pass_rate)
            .set(
                "probe_failure_rows",
                v.failures().iter().map(|q| q + 1).collect::<Vec<_>>(),
            );
    }
    report.write(&ctx.out.join("report.json"))?;
    Ok(EXIT_OK)
}

pub fn compare(ctx: &RunContext, u_path: &Path, v_path: &Path) -> Result<i32> {
    let cfg = &ctx.config;
    let p = build_problem(cfg)?;
    let s = &p.stencil;
    let u = load_field(s, u_path)?;
    let v = load_field(s, v_path)?;
    let tol: f64 = cfg.get("compare.tol")?;
    let claimed: Option<f64> = if cfg.is_set("compare.claimed_gap") {
        Some(cfg.get("compare.claimed_gap")?)
    } else {
        None
    };

    let mut report = Report::new("compare");
    grid_fields(&mut report, cfg, s)?;
    report
        .set("u", u_path.display().to_string())
        .set("v", v_path.display().to_string())
        .set("tol", tol)
        .set("claimed_gap", claimed.map_or(Value::Null, Value::from));
    let code = match comparison_check(s, &u, &v, &p.f, tol, p.options.certify_tol, claimed) {
        Ok(rep) => {
            report
                .set("certified", true)
                .set("boundary_gap", rep.boundary_gap)
                .set("interior_violation", rep.interior_violation)
                .set(
                    "argmax_point",
                    rep.argmax
                        .map_or(Value::Null, |q| Value::from(s.coords(q)[..2 * s.domain().dim()].to_vec())),
                )
                .set("shift_probe_defect", rep.shift_probe_defect)
                .set("shift_probe_ok", rep.shift_probe_ok)
                .set("pass", rep.pass);
            if rep.pass {
                EXIT_OK
            } else {
                EXIT_CONTRACT
            }
        }
        Err(SolverError::Certification { which, point, value }) => {
            eprintln!("{which} certification failed: residual {value:e} at {point:?}");
            report
                .set("certified", false)
                .set("failed_verdict", which)
                .set("failed_point", point)
                .set("failed_residual", value)
                .set("pass", false);
            EXIT_CONTRACT
        }
        Err(e) => return Err(config_err(e)),
    };
    report.write(&ctx.out.join("report.json"))?;
    Ok(code)
}

fn spectrum_text(m: &HermitianMatrix) -> String {
    let parts: Vec<String> = eigenvalues(m).iter().map(|x| format!("{x:.6e}")).collect();
    parts.join(" ")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn operators(ctx: &RunContext) -> Result<i32> {
    let cfg = &ctx.config;
    let specs = cfg.operator_list()?;
    if specs.is_empty() {
        return Err(config_err("operators.list is empty"));
    }
    let samples: usize = cfg.get("operators.samples")?;
    let trials: usize = cfg.get("operators.trials")?;
    let seed: u64 = cfg.get("seed")?;
    if samples == 0 {
        return Err(config_err("operators.samples must be positive"));
    }

    let mut table = String::new();
    for line in preamble(ctx, "operators") {
        let _ = writeln!(table, "# {line}");
    }
    table.push_str(
        "operator,n,samples,empirical_C,analytic_C,worst_A_spectrum,worst_P_spectrum,\
         positive_cone_pass,positive_cone_min_ratio,trials,homogeneity_pass,ellipticity_pass,\
         concavity_pass,concavity_counterexample\n",
    );
    let mut report = Report::new("operators");
    let mut names = Vec::new();
    let mut empirical = Vec::new();
    for spec in &specs {
        let comp = comparability_estimate(spec, samples, seed).map_err(config_err)?;
        let cone = positive_cone_check(spec, samples, seed).map_err(config_err)?;
        let props = property_counts(spec, trials, seed).map_err(config_err)?;
        let counter = match concavity_counterexample(spec) {
            Some((a, b)) => {
                let mid = &a.scale(0.5) + &b.scale(0.5);
                let g = |m: &HermitianMatrix| evaluate(spec, m).map_err(config_err);
                format!(
                    "A=[{}] B=[{}] G(mid)={:.6e} mean={:.6e}",
                    spectrum_text(&a),
                    spectrum_text(&b),
                    g(&mid)?,
                    0.5 * (g(&a)? + g(&b)?)
                )
            }
            None => String::new(),
        };
        let _ = writeln!(
            table,
            "{},{},{},{:.16e},{},{},{},{},{:.16e},{},{},{},{},{}",
            quote(&spec.kind().to_string()),
            spec.dim(),
            comp.samples,
            comp.empirical_c,
            comp.analytic_c.map_or(String::new(), |c| format!("{c:.16e}")),
            quote(&spectrum_text(&comp.worst_pair.0)),
            quote(&spectrum_text(&comp.worst_pair.1)),
            cone.passed,
            cone.min_ratio,
            props.trials,
            props.homogeneity_pass,
            props.ellipticity_pass,
            props.concavity_pass.map_or(String::new(), |c| c.to_string()),
            if counter.is_empty() { counter } else { quote(&counter) },
        );
        names.push(spec.kind().to_string());
        empirical.push(comp.empirical_c);
    }
    write_atomic(&ctx.out.join("table.csv"), table.as_bytes())?;
    report
        .set("n", cfg.dim()?)
        .set("seed", seed)
        .set("samples", samples)
        .set("trials", trials)
        .set("operators", names)
        .set("empirical_C", empirical);
    report.write(&ctx.out.join("report.json"))?;
    Ok(EXIT_OK)
}

fn hessian_from_config(cfg: &Config, n: usize) -> Result<HermitianMatrix> {
    cfg.require(&["oracle.hessian"])?;
    let re = number_list(cfg.raw("oracle.hessian").unwrap_or_default()).map_err(config_err)?;
    let im = match cfg.raw("oracle.hessian_im") {
        Some(raw) => number_list(raw).map_err(config_err)?,
        None => vec![0.0; n * n],
    };
    if re.len() != n * n || im.len() != n * n {
        bail!(ConfigError(format!("oracle.hessian needs {} entries per part", n * n)));
    }
    let entries: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
    HermitianMatrix::new(n, entries).map_err(config_err)
}

pub fn oracle(ctx: &RunContext) -> Result<i32> {
    let cfg = &ctx.config;
    let n = cfg.dim()?;
    let mut report = Report::new("oracle");
    let pre = preamble(ctx, "oracle");
    let kind = cfg.raw("oracle.kind").unwrap_or("radial").to_string();
    let (stencil, field, f, op, code) = match kind.as_str() {
        "radial" => {
            let key = if cfg.is_set("oracle.profile") { "oracle.profile" } else { "rhs.f" };
            cfg.require(&[key])?;
            let profile = cfg.expr(key)?;
            let radius: f64 = cfg.get("oracle.radius")?;
            let rad = RadialSolution::new(profile, radius, n).map_err(config_err)?;
            let mut local = cfg.clone();
            local.set("domain.preset", &format!("ball({radius:?})"))?;
            let (stencil, _) = build_stencil(&local)?;
            let field = GridFunction::sample(&stencil, |p| rad.u(&p[..2 * n]));
            let f = GridFunction::sample(&stencil, |p| rad.f(p[..2 * n].iter().map(|x| x * x).sum()));
            report
                .set("kind", "radial")
                .set("profile", cfg.raw(key).unwrap_or_default())
                .set("radius", radius)
                .set("admissible", rad.admissible)
                .set("max_chi2", rad.max_chi2)
                .set("min_chi1", rad.min_chi1)
                .set("roundtrip_defect", rad.roundtrip_defect())
                .set("boundary_value", rad.chi(radius * radius));
            let code = if rad.admissible { EXIT_OK } else { EXIT_FLAGGED };
            (stencil, field, f, OperatorSpec::lambda1(n), code)
        }
        "quadratic" => {
            let spec = cfg.operator()?;
            let h0 = hessian_from_config(cfg, n)?;
            let q = quadratic_solution(&h0, &spec).map_err(config_err)?;
            let (stencil, _) = build_stencil(cfg)?;
            let field = GridFunction::sample(&stencil, |p| q.value(&p[..2 * n]));
            let f = GridFunction::sample(&stencil, |_| q.f_value);
            report
                .set("kind", "quadratic")
                .set("operator", spec.kind().to_string())
                .set("f_value", q.f_value)
                .set("u_expr", q.expr_source())
                .set("hessian_spectrum", eigenvalues(&h0));
            (stencil, field, f, spec, EXIT_OK)
        }
        other => return Err(config_err(format!("oracle.kind: unknown kind '{other}'"))),
    };
    // Wide-stencil consistency of the exact field, as in solution.csv.
    let rr = stencil.residual_report(&field, &f, &op, cfg.get("solver.certify_tol")?)?;
    grid_fields(&mut report, cfg, &stencil)?;
    report
        .set("max_abs_wide", rr.max_abs_wide)
        .set("flagged", code == EXIT_FLAGGED);
    write_atomic(
        &ctx.out.join("oracle.csv"),
        field_csv(&stencil, &field, Some(&rr.wide), &pre).as_bytes(),
    )?;
    report.write(&ctx.out.join("report.json"))?;
    if code == EXIT_FLAGGED {
        eprintln!("radial profile is not admissible (chi'' > 0 somewhere); field emitted and flagged");
    }
    Ok(code)
}
