//! Discrete Dirichlet problem for `L1(D^2_C u) = f`.
//!
//! The main path starts from the barrier `B psi + phi~` (a strict discrete
//! subsolution) and runs Gauss-Seidel sweeps of the exact node solve. From a
//! subsolution each update can only raise a node, so the iterates increase
//! monotonically to the discrete Perron envelope. A damped explicit iteration
//! handles the other operators of the family on an experimental basis.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::Expr;
use crate::grid::{GridDomain, Point};
use crate::hermitian::HermitianMatrix;
use crate::operators::{cone_shift, evaluate, OperatorError, OperatorKind, OperatorSpec};
use crate::scheme::{GridFunction, ResidualReport, SchemeError, Stencil};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("operator dimension {op} does not match the domain dimension {domain}")]
    DimensionMismatch { op: usize, domain: usize },
    #[error("f must be positive; f = {value} at node {point:?}")]
    NonPositiveRhs { point: Vec<f64>, value: f64 },
    #[error("no plurisubharmonic exhaustion is known for this domain")]
    NoExhaustion,
    #[error("extension of the boundary data is not plurisubharmonic: S_h = {value} at {point:?}")]
    NotPsh { point: Vec<f64>, value: f64 },
    #[error("this solver handles only the least-eigenvalue operator, got {0}")]
    WrongOperator(String),
    #[error("{which} certification failed: residual {value} at {point:?}")]
    Certification {
        which: &'static str,
        point: Vec<f64>,
        value: f64,
    },
    #[error("u exceeds v by {excess} on the rim of the gluing region at {point:?}")]
    BoundaryOrder { point: Vec<f64>, excess: f64 },
    #[error("parallel sweeps refused: {0}")]
    ParallelRefused(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    /// Forward then backward lexicographic sweeps.
    Alternating,
    /// Two-colour parity ordering, colours updated in parallel.
    RedBlack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop when the largest node update of a sweep is at most this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Barrier scale `B = (max f)(1 + margin)`.
    pub margin: f64,
    /// Slack for subsolution and supersolution verdicts.
    pub certify_tol: f64,
    /// Stop threshold on the max residual for the general solver.
    pub residual_tol: f64,
    pub order: SweepOrder,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
            margin: 0.1,
            certify_tol: 1e-6,
            residual_tol: 1e-9,
            order: SweepOrder::Alternating,
        }
    }
}

/// A discrete Dirichlet problem on a fixed stencil.
#[derive(Debug)]
pub struct ProblemSpec {
    pub stencil: Stencil,
    pub f_expr: Expr,
    pub phi_expr: Expr,
    pub phi_tilde_expr: Option<Expr>,
    /// Exhaustion `psi <= 0` vanishing on the boundary with `L1(D^2 psi) >= 1`.
    pub psi_expr: Option<Expr>,
    pub operator: OperatorSpec,
    pub options: SolverOptions,
    /// `f` sampled at unknowns and boundary points.
    pub f: GridFunction,
    /// Boundary data `phi` sampled at unknowns and boundary points.
    pub phi: GridFunction,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        stencil: Stencil,
        f_expr: Expr,
        phi_expr: Expr,
        phi_tilde_expr: Option<Expr>,
        psi_expr: Option<Expr>,
        operator: OperatorSpec,
        options: SolverOptions,
    ) -> Result<Self, SolverError> {
        let n = stencil.domain().dim();
        if operator.dim() != n {
            return Err(SolverError::DimensionMismatch {
                op: operator.dim(),
                domain: n,
            });
        }
        let f = GridFunction::from_expr(&stencil, &f_expr)?;
        for (p, &idx) in stencil.nodes().iter().enumerate() {
            let v = f.at_node(idx);
            if !(v > 0.0) {
                return Err(SolverError::NonPositiveRhs {
                    point: stencil.coords(p)[..2 * n].to_vec(),
                    value: v,
                });
            }
        }
        let phi = GridFunction::from_expr(&stencil, &phi_expr)?;
        Ok(Self {
            stencil,
            f_expr,
            phi_expr,
            phi_tilde_expr,
            psi_expr,
            operator,
            options,
            f,
            phi,
        })
    }

    pub fn domain(&self) -> &GridDomain {
        self.stencil.domain()
    }

    pub fn f_max(&self) -> f64 {
        self.stencil
            .nodes()
            .iter()
            .map(|&i| self.f.at_node(i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn f_min(&self) -> f64 {
        self.stencil
            .nodes()
            .iter()
            .map(|&i| self.f.at_node(i))
            .fold(f64::INFINITY, f64::min)
    }

    fn point(&self, p: usize) -> Vec<f64> {
        self.stencil.coords(p)[..2 * self.domain().dim()].to_vec()
    }

    pub fn residuals(&self, u: &GridFunction) -> Result<ResidualReport, SolverError> {
        Ok(self
            .stencil
            .residual_report(u, &self.f, &self.operator, self.options.certify_tol)?)
    }

    pub fn lambda1_residuals(&self, u: &GridFunction) -> Result<ResidualReport, SolverError> {
        let spec = OperatorSpec::lambda1(self.domain().dim());
        Ok(self
            .stencil
            .residual_report(u, &self.f, &spec, self.options.certify_tol)?)
    }

    /// Extension used in the barrier: `phi~` if given, else `phi` itself.
    /// Either must pass the discrete psh check `S_h >= -tol`.
    pub fn psh_extension(&self) -> Result<GridFunction, SolverError> {
        let ext = match &self.phi_tilde_expr {
            Some(e) => GridFunction::from_expr(&self.stencil, e)?,
            None => self.phi.clone(),
        };
        let sh = self.stencil.apply_lambda1(&ext)?;
        let worst = sh
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1));
        if let Some((p, &v)) = worst {
            if v < -self.options.certify_tol {
                return Err(SolverError::NotPsh {
                    point: self.point(p),
                    value: v,
                });
            }
        }
        Ok(ext)
    }
}

/// `B psi + phi~` with `B = (max f)(1 + margin)`.
pub fn barrier_subsolution(p: &ProblemSpec, margin: f64) -> Result<GridFunction, SolverError> {
    let psi_expr = p.psi_expr.as_ref().ok_or(SolverError::NoExhaustion)?;
    let psi = GridFunction::from_expr(&p.stencil, psi_expr)?;
    let ext = p.psh_extension()?;
    let b = p.f_max() * (1.0 + margin.max(0.0));
    Ok(ext.zip_with(&psi, |e, s| b * s + e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub sweeps: usize,
    pub final_max_update: f64,
    pub converged: bool,
    pub residual: ResidualReport,
    /// Smallest node update of each sweep.
    pub monotonicity_log: Vec<f64>,
    /// Largest node update of each sweep.
    pub update_log: Vec<f64>,
    /// Cone projections applied by the general solver.
    pub cone_projections: usize,
    pub experimental: bool,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn min_update(&self) -> f64 {
        self.monotonicity_log
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solution with boundary data of `phi` and unknowns from `init`.
fn seeded(p: &ProblemSpec, init: &GridFunction) -> GridFunction {
    let mut u = GridFunction::with_boundary(init, &p.phi);
    for (q, &idx) in p.stencil.nodes().iter().enumerate() {
        if p.stencil.is_slaved(q) {
            u.set_node(idx, p.stencil.node_solve(&u, q, 0.0));
        }
    }
    u
}

fn red_black_allowed(stencil: &Stencil) -> Result<(), SolverError> {
    for w in stencil.directions().members() {
        for o in [w.real_offset(), w.times_i().real_offset()] {
            let l1: i32 = o.iter().map(|x| x.abs()).sum();
            if l1 % 2 == 0 {
                return Err(SolverError::ParallelRefused(format!(
                    "direction {:?} joins nodes of the same colour",
                    w.entries()
                )));
            }
        }
    }
    Ok(())
}

fn colour(stencil: &Stencil, p: usize) -> usize {
    let m = stencil.domain().multi_index(stencil.nodes()[p]);
    (m.iter().sum::<usize>()) % 2
}

/// Gauss-Seidel iteration of the node solve; `update` maps
/// `(u, position)` to the new node value.
fn sweep_loop(
    stencil: &Stencil,
    mut u: GridFunction,
    options: &SolverOptions,
    update: impl Fn(&GridFunction, usize) -> f64 + Sync,
) -> Result<(GridFunction, Vec<f64>, Vec<f64>, bool), SolverError> {
    let n = stencil.len();
    let mut min_log = Vec::new();
    let mut max_log = Vec::new();
    let mut converged = false;
    let colours: Option<[Vec<usize>; 2]> = match options.order {
        SweepOrder::Alternating => None,
        SweepOrder::RedBlack => {
            red_black_allowed(stencil)?;
            let mut c = [Vec::new(), Vec::new()];
            for p in 0..n {
                c[colour(stencil, p)].push(p);
            }
            Some(c)
        }
    };
    for sweep in 0..options.max_sweeps {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        match &colours {
            None => {
                let mut visit = |p: usize| {
                    let idx = stencil.nodes()[p];
                    let old = u.at_node(idx);
                    let new = update(&u, p);
                    u.set_node(idx, new);
                    let d = new - old;
                    lo = lo.min(d);
                    hi = hi.max(d.abs());
                };
                if sweep % 2 == 0 {
                    (0..n).for_each(&mut visit);
                } else {
                    (0..n).rev().for_each(&mut visit);
                }
            }
            Some(c) => {
                for class in c {
                    let fresh: Vec<f64> = class.par_iter().map(|&p| update(&u, p)).collect();
                    for (&p, new) in class.iter().zip(fresh) {
                        let idx = stencil.nodes()[p];
                        let d = new - u.at_node(idx);
                        lo = lo.min(d);
                        hi = hi.max(d.abs());
                        u.set_node(idx, new);
                    }
                }
            }
        }
        if n == 0 {
            lo = 0.0;
        }
        min_log.push(lo);
        max_log.push(hi);
        if hi <= options.tol {
            converged = true;
            break;
        }
    }
    Ok((u, min_log, max_log, converged))
}

/// Discrete harmonic function with boundary data `phi` (star Laplacian over
/// the coordinate directions).
pub fn harmonic_supersolution(p: &ProblemSpec) -> Result<SolveReport, SolverError> {
    let start = Instant::now();
    let u0 = seeded(p, &p.phi);
    let (u, min_log, max_log, converged) =
        sweep_loop(&p.stencil, u0, &p.options, |u, q| p.stencil.star_solve(u, q))?;
    let residual = p.lambda1_residuals(&u)?;
    Ok(SolveReport {
        final_max_update: max_log.last().copied().unwrap_or(0.0),
        sweeps: max_log.len(),
        solution: u,
        converged,
        residual,
        monotonicity_log: min_log,
        update_log: max_log,
        cone_projections: 0,
        experimental: false,
        wall_time: start.elapsed(),
    })
}

/// Perron iteration from the barrier subsolution.
pub fn solve_lambda1(p: &ProblemSpec) -> Result<SolveReport, SolverError> {
    let barrier = barrier_subsolution(p, p.options.margin)?;
    solve_lambda1_from(p, &barrier)
}

/// Perron iteration from an explicit initial field (its boundary values are
/// replaced by `phi`).
pub fn solve_lambda1_from(p: &ProblemSpec, init: &GridFunction) -> Result<SolveReport, SolverError> {
    match p.operator.kind() {
        OperatorKind::Lambda1 | OperatorKind::LambdaK(1) => {}
        other => return Err(SolverError::WrongOperator(other.to_string())),
    }
    let start = Instant::now();
    let u0 = seeded(p, init);
    let f = &p.f;
    let (u, min_log, max_log, converged) = sweep_loop(&p.stencil, u0, &p.options, |u, q| {
        p.stencil.node_solve(u, q, f.at_node(p.stencil.nodes()[q]))
    })?;
    let residual = p.lambda1_residuals(&u)?;
    Ok(SolveReport {
        final_max_update: max_log.last().copied().unwrap_or(0.0),
        sweeps: max_log.len(),
        solution: u,
        converged,
        residual,
        monotonicity_log: min_log,
        update_log: max_log,
        cone_projections: 0,
        experimental: false,
        wall_time: start.elapsed(),
    })
}

/// Damped explicit iteration `u <- u + tau (G(H) - f)` for any operator of
/// the family. `H` is the central Hessian where it fits and the directional
/// reconstruction elsewhere. Experimental: no monotonicity guarantee.
pub fn solve_general(p: &ProblemSpec, init: Option<&GridFunction>) -> Result<SolveReport, SolverError> {
    let start = Instant::now();
    let init = match init {
        Some(u) => u.clone(),
        None => barrier_subsolution(p, p.options.margin)?,
    };
    let st = &p.stencil;
    let mut u = seeded(p, &init);
    let h2 = st.domain().spacing().powi(2);
    // Local step: the centre weight of the Hessian entries is 1/h^2 in the
    // interior and up to 1/(rho h)^2 next to the boundary.
    let stiffness: Vec<f64> = (0..st.len())
        .map(|q| {
            if st.is_slaved(q) || st.central_hessian(&u, q).is_some() {
                1.0 / h2
            } else {
                (0..st.directions().len())
                    .map(|d| st.directional_value(&u, q, d).map(|e| e.center).unwrap_or(0.0))
                    .fold(1.0 / h2, f64::max)
            }
        })
        .collect();
    let hessian = |u: &GridFunction, q: usize| -> Option<HermitianMatrix> {
        st.central_hessian(u, q).or_else(|| st.directional_hessian(u, q))
    };
    let residual_at = |u: &GridFunction, q: usize| -> (f64, bool) {
        let fv = p.f.at_node(st.nodes()[q]);
        let Some(h) = hessian(u, q) else {
            return (0.0, false);
        };
        match evaluate(&p.operator, &h) {
            Ok(g) => (g - fv, false),
            Err(_) => {
                let mu = cone_shift(&p.operator, &h).unwrap_or(0.0);
                let g = evaluate(&p.operator, &h.shift(mu)).unwrap_or(0.0);
                (g - fv, true)
            }
        }
    };

    let mut theta: f64 = 0.5;
    let theta_floor = 1e-6;
    let mut prev = f64::INFINITY;
    let mut projections = 0usize;
    let mut min_log = Vec::new();
    let mut max_log = Vec::new();
    let mut converged = false;
    for _ in 0..p.options.max_sweeps {
        let rows: Vec<(f64, bool)> = (0..st.len())
            .into_par_iter()
            .map(|q| if st.is_slaved(q) { (0.0, false) } else { residual_at(&u, q) })
            .collect();
        let worst = rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
        projections += rows.iter().filter(|r| r.1).count();
        if worst <= p.options.residual_tol {
            converged = true;
            min_log.push(0.0);
            max_log.push(0.0);
            break;
        }
        if worst > prev {
            theta = (theta * 0.5).max(theta_floor);
        }
        prev = worst;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (q, (r, _)) in rows.into_iter().enumerate() {
            let d = theta * r / stiffness[q];
            let idx = st.nodes()[q];
            u.set_node(idx, u.at_node(idx) + d);
            lo = lo.min(d);
            hi = hi.max(d.abs());
        }
        min_log.push(lo);
        max_log.push(hi);
    }
    let residual = p.residuals(&u)?;
    Ok(SolveReport {
        final_max_update: max_log.last().copied().unwrap_or(0.0),
        sweeps: max_log.len(),
        solution: u,
        converged,
        residual,
        monotonicity_log: min_log,
        update_log: max_log,
        cone_projections: projections,
        experimental: true,
        wall_time: start.elapsed(),
    })
}

/// Max over unknowns of `|G(H) - f|` using the solver's Hessian choice.
pub fn general_residual(p: &ProblemSpec, u: &GridFunction) -> f64 {
    let st = &p.stencil;
    (0..st.len())
        .into_par_iter()
        .filter(|&q| !st.is_slaved(q))
        .map(|q| {
            let fv = p.f.at_node(st.nodes()[q]);
            st.central_hessian(u, q)
                .or_else(|| st.directional_hessian(u, q))
                .and_then(|h| evaluate(&p.operator, &h).ok())
                .map_or(f64::INFINITY, |g| (g - fv).abs())
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `max (u - v)` over boundary data (or the claimed value).
    pub boundary_gap: f64,
    /// `max (u - v, 0)` over the unknowns.
    pub interior_violation: f64,
    /// Unknown where `u - v` is largest.
    pub argmax: Option<usize>,
    pub tol: f64,
    pub pass: bool,
    /// Largest defect of the shift identity over full-arm nodes.
    pub shift_probe_defect: f64,
    pub shift_probe_ok: bool,
}

/// Tolerance used by the strict-shift probe.
pub const SHIFT_PROBE_TOL: f64 = 1e-12;

/// Comparison of a certified subsolution `u` with a certified supersolution
/// `v` for the same `f`. `claimed_gap` replaces the measured boundary gap.
pub fn comparison_check(
    stencil: &Stencil,
    u: &GridFunction,
    v: &GridFunction,
    f: &GridFunction,
    tol: f64,
    certify_tol: f64,
    claimed_gap: Option<f64>,
) -> Result<ComparisonReport, SolverError> {
    let n = stencil.domain().dim();
    let spec = OperatorSpec::lambda1(n);
    let point = |q: usize| stencil.coords(q)[..2 * n].to_vec();
    let ru = stencil.residual_report(u, f, &spec, certify_tol)?;
    if !ru.subsolution {
        let (q, value) = ru.worst_sub.unwrap_or((0, f64::NAN));
        return Err(SolverError::Certification {
            which: "subsolution",
            point: point(q),
            value,
        });
    }
    let rv = stencil.residual_report(v, f, &spec, certify_tol)?;
    if !rv.supersolution {
        let (q, value) = rv.worst_super.unwrap_or((0, f64::NAN));
        return Err(SolverError::Certification {
            which: "supersolution",
            point: point(q),
            value,
        });
    }
    Ok(compare_fields(stencil, u, v, tol, claimed_gap))
}

/// The comparison verdict without certification.
pub fn compare_fields(
    stencil: &Stencil,
    u: &GridFunction,
    v: &GridFunction,
    tol: f64,
    claimed_gap: Option<f64>,
) -> ComparisonReport {
    let measured = u
        .boundary()
        .iter()
        .zip(v.boundary())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let boundary_gap = claimed_gap.unwrap_or(if measured.is_finite() { measured } else { 0.0 });
    let mut argmax = None;
    let mut best = f64::NEG_INFINITY;
    for (q, &idx) in stencil.nodes().iter().enumerate() {
        if stencil.is_slaved(q) {
            continue;
        }
        let d = u.at_node(idx) - v.at_node(idx);
        if d > best {
            best = d;
            argmax = Some(q);
        }
    }
    let interior_violation = best.max(0.0);
    let pass = interior_violation <= boundary_gap.max(0.0) + tol;

    // Strictness probe: S_h(u - eps/2 |z - z0|^2) = S_h u - eps/2.
    let mut defect = 0.0f64;
    if let Some(q0) = argmax {
        let z0 = stencil.coords(q0);
        let base = stencil.apply_lambda1(u).expect("shape checked by caller");
        for eps in [1e-2, 1e-1] {
            let shifted = u.add_field(stencil, |p: &Point| {
                -0.5 * eps * (0..4).map(|a| (p[a] - z0[a]).powi(2)).sum::<f64>()
            });
            let after = stencil.apply_lambda1(&shifted).expect("same shape");
            for q in 0..stencil.len() {
                if stencil.has_full_arms(q) {
                    let scale = 1.0 + base[q].abs();
                    defect = defect.max((after[q] - base[q] + 0.5 * eps).abs() / scale);
                }
            }
        }
    }
    ComparisonReport {
        boundary_gap,
        interior_violation,
        argmax,
        tol,
        pass,
        shift_probe_defect: defect,
        shift_probe_ok: defect <= SHIFT_PROBE_TOL,
    }
}

/// `max(u, v)` on the region `in_g`, `v` elsewhere. `u` must be a
/// subsolution on the nodes of the region whose arms stay in the region,
/// `v` a subsolution everywhere, and `u <= v` on the rim of the region.
pub fn glue_max(
    stencil: &Stencil,
    u: &GridFunction,
    v: &GridFunction,
    f: &GridFunction,
    in_g: impl Fn(&Point) -> bool + Sync,
    certify_tol: f64,
) -> Result<(GridFunction, ResidualReport), SolverError> {
    let n = stencil.domain().dim();
    let d = stencil.domain();
    let spec = OperatorSpec::lambda1(n);
    let point = |q: usize| stencil.coords(q)[..2 * n].to_vec();
    let inside_g: Vec<bool> = (0..stencil.len()).map(|q| in_g(&stencil.coords(q))).collect();
    let rim: Vec<bool> = (0..stencil.len())
        .map(|q| {
            if !inside_g[q] {
                return false;
            }
            let idx = stencil.nodes()[q];
            stencil.directions().members().iter().any(|w| {
                let b = w.real_offset();
                let r = w.times_i().real_offset();
                [b, b.map(|x| -x), r, r.map(|x| -x)].iter().any(|o| {
                    match d.offset_node(idx, o).and_then(|t| stencil.position(t)) {
                        Some(t) => !inside_g[t],
                        None => false,
                    }
                })
            })
        })
        .collect();

    let rv = stencil.residual_report(v, f, &spec, certify_tol)?;
    if !rv.subsolution {
        let (q, value) = rv.worst_sub.unwrap_or((0, f64::NAN));
        return Err(SolverError::Certification {
            which: "subsolution (v)",
            point: point(q),
            value,
        });
    }
    let ru = stencil.residual_report(u, f, &spec, certify_tol)?;
    for q in 0..stencil.len() {
        if inside_g[q] && !rim[q] && !stencil.is_slaved(q) && ru.wide[q] < -certify_tol {
            return Err(SolverError::Certification {
                which: "subsolution (u on the region)",
                point: point(q),
                value: ru.wide[q],
            });
        }
    }
    for q in 0..stencil.len() {
        if rim[q] {
            let idx = stencil.nodes()[q];
            let excess = u.at_node(idx) - v.at_node(idx);
            if excess > certify_tol {
                return Err(SolverError::BoundaryOrder {
                    point: point(q),
                    excess,
                });
            }
        }
    }

    let mut out = v.clone();
    for (q, &idx) in stencil.nodes().iter().enumerate() {
        if inside_g[q] {
            out.set_node(idx, u.at_node(idx).max(v.at_node(idx)));
        }
    }
    for (b, pt) in stencil.boundary_points().iter().enumerate() {
        if in_g(pt) {
            out.boundary_mut()[b] = u.boundary()[b].max(v.boundary()[b]);
        }
    }
    let report = stencil.residual_report(&out, f, &spec, certify_tol)?;
    if !report.subsolution {
        let (q, value) = report.worst_sub.unwrap_or((0, f64::NAN));
        return Err(SolverError::Certification {
            which: "subsolution (glued)",
            point: point(q),
            value,
        });
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::grid::{DirectionSet, DomainPreset};

    fn problem(n: usize, h: f64, w: u32, f: &str, phi: &str, tilde: Option<&str>) -> ProblemSpec {
        let preset = DomainPreset::Ball { radius: 1.0 };
        let domain = preset.build(n, h).unwrap();
        let stencil = Stencil::new(domain, DirectionSet::new(n, w)).unwrap();
        ProblemSpec::new(
            stencil,
            parse(f).unwrap(),
            parse(phi).unwrap(),
            tilde.map(|t| parse(t).unwrap()),
            preset.exhaustion(),
            OperatorSpec::lambda1(n),
            SolverOptions::default(),
        )
        .unwrap()
    }

    fn max_err(p: &ProblemSpec, u: &GridFunction, exact: impl Fn(&Point) -> f64) -> f64 {
        (0..p.stencil.len())
            .map(|q| (u.at_node(p.stencil.nodes()[q]) - exact(&p.stencil.coords(q))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn barrier_examples() {
        let p = problem(2, 0.25, 1, "1", "t", None);
        let b = barrier_subsolution(&p, 0.0).unwrap();
        let r = p.lambda1_residuals(&b).unwrap();
        assert!(r.subsolution && !r.supersolution);
        let sh = p.stencil.apply_lambda1(&b).unwrap();
        assert!(sh.iter().filter(|v| v.is_finite()).all(|v| (v - 2.0).abs() < 1e-10));

        let p = problem(1, 0.125, 1, "1", "0", None);
        let b = barrier_subsolution(&p, 0.1).unwrap();
        assert!(b.unknowns(&p.stencil).iter().all(|&v| v <= 0.0));
        assert!(b.boundary().iter().all(|v| v.abs() < 1e-9));

        let p = problem(1, 0.125, 1, "1", "0", Some("-t"));
        assert!(matches!(barrier_subsolution(&p, 0.1), Err(SolverError::NotPsh { .. })));
    }

    #[test]
    fn rejects_nonpositive_rhs() {
        let preset = DomainPreset::Ball { radius: 1.0 };
        let stencil = Stencil::new(preset.build(1, 0.25).unwrap(), DirectionSet::new(1, 1)).unwrap();
        let err = ProblemSpec::new(
            stencil,
            parse("x1").unwrap(),
            parse("0").unwrap(),
            None,
            preset.exhaustion(),
            OperatorSpec::lambda1(1),
            SolverOptions::default(),
        );
        assert!(matches!(err, Err(SolverError::NonPositiveRhs { .. })));
    }

    #[test]
    fn harmonic_examples() {
        let p = problem(1, 0.125, 1, "1", "0.5", None);
        let h = harmonic_supersolution(&p).unwrap();
        assert!(h.converged);
        assert!(max_err(&p, &h.solution, |_| 0.5) < 1e-12);
        let p = problem(1, 0.125, 1, "1", "x1", None);
        let h = harmonic_supersolution(&p).unwrap();
        assert!(max_err(&p, &h.solution, |z| z[0]) < 1e-9);
        assert!(h.residual.supersolution);
        let p = problem(2, 0.25, 1, "1", "x1^2 - 3*y2 + x2*y1", None);
        let h = harmonic_supersolution(&p).unwrap();
        assert!(h.converged && h.residual.supersolution);
    }

    #[test]
    fn poisson_in_one_variable() {
        let p = problem(1, 0.0625, 1, "1", "0", None);
        let r = solve_lambda1(&p).unwrap();
        assert!(r.converged);
        assert!(max_err(&p, &r.solution, |z| z[0] * z[0] + z[1] * z[1] - 1.0) <= 1e-8);
        assert!(r.min_update() >= -1e-14);
        assert!(r.residual.max_abs_wide <= 1e-7);
    }

    #[test]
    fn ball_quadratic_in_two_variables() {
        let p = problem(2, 0.25, 1, "1", "t", None);
        let r = solve_lambda1(&p).unwrap();
        assert!(r.converged);
        assert!(max_err(&p, &r.solution, |z| z.iter().map(|x| x * x).sum()) <= 1e-8);
        assert!(r.min_update() >= -1e-14);
    }

    #[test]
    fn red_black_refusal_and_agreement() {
        let mut p = problem(2, 0.25, 1, "1", "t", None);
        p.options.order = SweepOrder::RedBlack;
        assert!(matches!(solve_lambda1(&p), Err(SolverError::ParallelRefused(_))));
        let mut p = problem(1, 0.125, 1, "1", "0", None);
        let seq = solve_lambda1(&p).unwrap();
        p.options.order = SweepOrder::RedBlack;
        let par = solve_lambda1(&p).unwrap();
        assert!(par.converged && par.min_update() >= -1e-14);
        for &idx in p.stencil.nodes() {
            assert!((par.solution.at_node(idx) - seq.solution.at_node(idx)).abs() < 1e-9);
        }
    }

    #[test]
    fn sandwich_and_comparison() {
        let p = problem(1, 0.125, 1, "2 - t", "x1 + t", None);
        let barrier = barrier_subsolution(&p, 0.1).unwrap();
        let harm = harmonic_supersolution(&p).unwrap().solution;
        let sol = solve_lambda1(&p).unwrap().solution;
        for &idx in p.stencil.nodes() {
            assert!(barrier.at_node(idx) <= sol.at_node(idx) + 1e-9);
            assert!(sol.at_node(idx) <= harm.at_node(idx) + 1e-9);
        }
        let tol = 1e-9;
        let ct = p.options.certify_tol;
        let r = comparison_check(&p.stencil, &barrier, &harm, &p.f, tol, ct, None).unwrap();
        assert!(r.pass && r.shift_probe_ok);
        let r = comparison_check(&p.stencil, &sol, &sol.add_constant(0.1), &p.f, tol, ct, None).unwrap();
        assert!(r.pass && (r.boundary_gap + 0.1).abs() < 1e-12);
        let r = comparison_check(&p.stencil, &sol.add_constant(0.1), &sol, &p.f, tol, ct, Some(0.0)).unwrap();
        assert!(!r.pass && (r.interior_violation - 0.1).abs() < 1e-9);
        // Missing certification.
        assert!(comparison_check(&p.stencil, &harm, &barrier, &p.f, tol, ct, None).is_err());
    }

    #[test]
    fn gluing() {
        let p = problem(1, 0.125, 1, "1", "0", None);
        let v = barrier_subsolution(&p, 3.0).unwrap();
        let (same, _) = glue_max(&p.stencil, &v, &v, &p.f, |z| z[0] < 0.0, 1e-9).unwrap();
        assert_eq!(same, v);
        // u = v + bump that is negative on the rim of the disk |z - c| < 0.4.
        let c = [0.2, -0.1];
        let bump = |z: &Point| 0.1 - 2.0 * ((z[0] - c[0]).powi(2) + (z[1] - c[1]).powi(2));
        let u = v.add_field(&p.stencil, bump);
        let in_g = |z: &Point| (z[0] - c[0]).powi(2) + (z[1] - c[1]).powi(2) < 0.16;
        let (glued, rep) = glue_max(&p.stencil, &u, &v, &p.f, in_g, 1e-9).unwrap();
        assert!(rep.subsolution);
        let centre = p.stencil.nodes().iter().copied().find(|&i| {
            let z = p.domain().coords(i);
            (z[0] - 0.25).abs() < 1e-12 && z[1].abs() < 1e-12
        });
        if let Some(i) = centre {
            assert!(glued.at_node(i) > v.at_node(i));
        }
        let worse = v.add_constant(0.05).add_field(&p.stencil, |_| 0.0);
        assert!(matches!(
            glue_max(&p.stencil, &worse, &v, &p.f, in_g, 1e-9),
            Err(SolverError::BoundaryOrder { .. })
        ));
    }

    #[test]
    fn general_solver_on_quadratics() {
        let preset = DomainPreset::Ball { radius: 1.0 };
        let domain = GridDomain::build(2, 0.25, preset.level(), &[(-1.0, 1.0); 4]).unwrap();
        let stencil = Stencil::new(domain, DirectionSet::new(2, 1)).unwrap();
        let p = ProblemSpec::new(
            stencil,
            parse("2").unwrap(),
            parse("x1^2 + y1^2 + 4*(x2^2 + y2^2)").unwrap(),
            None,
            preset.exhaustion(),
            OperatorSpec::new(OperatorKind::MongeAmpere, 2).unwrap(),
            SolverOptions::default(),
        )
        .unwrap();
        let r = solve_general(&p, None).unwrap();
        assert!(r.converged, "{} sweeps", r.sweeps);
        assert!(general_residual(&p, &r.solution) <= 1e-6);
        assert!(max_err(&p, &r.solution, |z| z[0] * z[0] + z[1] * z[1] + 4.0 * (z[2] * z[2] + z[3] * z[3])) < 1e-6);
    }

    #[test]
    fn determinism() {
        let p = problem(1, 0.125, 1, "2 - t", "t", None);
        let a = solve_lambda1(&p).unwrap();
        let b = solve_lambda1(&p).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.monotonicity_log, b.monotonicity_log);
    }
}
