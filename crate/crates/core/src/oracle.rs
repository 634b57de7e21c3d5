//! Ground truth for the solver: closed-form 2x2 spectra, radial solutions,
//! constant-Hessian exact pairs and a local quadratic-fit verifier.
//!
//! # Radial reduction
//!
//! For `u(z) = chi(|z|^2)` one has `u_{j kbar} = chi'(t) delta_jk + chi''(t) zbar_j z_k`,
//! so the complex Hessian has eigenvalue `chi'` on `z^perp` (multiplicity
//! `n - 1`) and `chi' + t chi'' = (t chi')'` along `z`. Taking
//! `t chi'(t) = int_0^t f` makes the radial eigenvalue equal `f`; it is the
//! least one exactly when `chi'' <= 0`, and `u` is psh when `chi' >= 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Env, EvalError, Expr, Var};
use crate::hermitian::{eigenvalues, q11_part, HermitianMatrix, MatrixError, Spectrum, SymmetricForm};
use crate::operators::{evaluate, in_closure, OperatorError, OperatorSpec};
use crate::scheme::{GridFunction, Stencil};

/// Simpson panels on `[0, R^2]`.
pub const RADIAL_PANELS: usize = 20_000;
/// Slack for the admissibility conditions.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;
const ADMISSIBILITY_CHECKS: usize = 1000;
const ROUNDTRIP_STEP: f64 = 1e-3;
/// Fits whose residual scale exceeds this are excluded from verification.
pub const FIT_RESIDUAL_CAP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("radial profile may only use t and r, found {0}")]
    NotRadial(String),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("profile must be positive on [0, R^2]; f({t}) = {value}")]
    NonPositive { t: f64, value: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("Hessian lies outside the operator's closed cone")]
    OutsideCone,
}

/// `u = chi(|z|^2)` with `t chi'(t) = int_0^t f(s) ds`, `chi(0) = 0`.
#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub radius: f64,
    pub n: usize,
    pub profile: Expr,
    step: f64,
    /// `F(t_i) = int_0^{t_i} f`.
    cumulative: Vec<f64>,
    /// `chi(t_i)`.
    chi_table: Vec<f64>,
    pub admissible: bool,
    /// Largest sampled `chi''`.
    pub max_chi2: f64,
    /// Smallest sampled `chi'`.
    pub min_chi1: f64,
}

fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (g(a) + 4.0 * g(0.5 * (a + b)) + g(b))
}

impl RadialSolution {
    pub fn new(profile: Expr, radius: f64, n: usize) -> Result<Self, OracleError> {
        if let Some(v) = profile.variables().into_iter().find(|v| !matches!(v, Var::T | Var::R)) {
            return Err(OracleError::NotRadial(v.name().to_string()));
        }
        if !(radius > 0.0) {
            return Err(OracleError::BadRadius(radius));
        }
        let t_max = radius * radius;
        let step = t_max / RADIAL_PANELS as f64;
        let eval = |t: f64| -> Result<f64, EvalError> {
            profile.eval(&Env::new().with(Var::T, t).with(Var::R, t.max(0.0).sqrt()))
        };
        let mut fs = Vec::with_capacity(2 * RADIAL_PANELS + 1);
        for i in 0..=2 * RADIAL_PANELS {
            let t = 0.5 * step * i as f64;
            let v = eval(t)?;
            if !(v > 0.0) {
                return Err(OracleError::NonPositive { t, value: v });
            }
            fs.push(v);
        }
        let mut cumulative = vec![0.0; RADIAL_PANELS + 1];
        for i in 0..RADIAL_PANELS {
            cumulative[i + 1] =
                cumulative[i] + step / 6.0 * (fs[2 * i] + 4.0 * fs[2 * i + 1] + fs[2 * i + 2]);
        }
        let mut sol = Self {
            radius,
            n,
            profile,
            step,
            cumulative,
            chi_table: vec![0.0; RADIAL_PANELS + 1],
            admissible: true,
            max_chi2: f64::NEG_INFINITY,
            min_chi1: f64::INFINITY,
        };
        for i in 0..RADIAL_PANELS {
            let a = step * i as f64;
            sol.chi_table[i + 1] = sol.chi_table[i] + simpson(|t| sol.chi_prime(t), a, a + step);
        }
        for k in 1..=ADMISSIBILITY_CHECKS {
            let t = t_max * k as f64 / ADMISSIBILITY_CHECKS as f64;
            sol.max_chi2 = sol.max_chi2.max(sol.chi_second(t));
            sol.min_chi1 = sol.min_chi1.min(sol.chi_prime(t));
        }
        sol.min_chi1 = sol.min_chi1.min(sol.chi_prime(0.0));
        sol.admissible = sol.max_chi2 <= ADMISSIBILITY_TOL && sol.min_chi1 >= -ADMISSIBILITY_TOL;
        Ok(sol)
    }

    pub fn f(&self, t: f64) -> f64 {
        self.profile
            .eval(&Env::new().with(Var::T, t).with(Var::R, t.max(0.0).sqrt()))
            .unwrap_or(f64::NAN)
    }

    fn panel(&self, t: f64) -> usize {
        ((t / self.step) as usize).min(RADIAL_PANELS - 1)
    }

    /// `int_0^t f` for `t in [0, R^2]`.
    pub fn integral(&self, t: f64) -> f64 {
        let i = self.panel(t);
        let a = self.step * i as f64;
        self.cumulative[i] + simpson(|s| self.f(s), a, t)
    }

    pub fn chi_prime(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.f(0.0)
        } else {
            self.integral(t) / t
        }
    }

    /// `chi'' = (f - chi') / t`.
    pub fn chi_second(&self, t: f64) -> f64 {
        if t <= 0.0 {
            // f'(0) / 2 by a one-sided difference.
            let d = 1e-6 * self.radius * self.radius;
            return (self.f(d) - self.f(0.0)) / (2.0 * d);
        }
        (self.f(t) - self.chi_prime(t)) / t
    }

    pub fn chi(&self, t: f64) -> f64 {
        let i = self.panel(t);
        let a = self.step * i as f64;
        self.chi_table[i] + simpson(|s| self.chi_prime(s), a, t)
    }

    pub fn u(&self, coords: &[f64]) -> f64 {
        self.chi(coords.iter().map(|x| x * x).sum())
    }

    /// Complex-Hessian eigenvalues at `|z|^2 = t`: `chi'` (`n - 1` times) and
    /// `chi' + t chi''`.
    pub fn eigenvalues_at(&self, t: f64) -> Vec<f64> {
        let c1 = self.chi_prime(t);
        let mut v = vec![c1; self.n - 1];
        v.push(c1 + t * self.chi_second(t));
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn lambda1(&self, t: f64) -> f64 {
        self.eigenvalues_at(t)[0]
    }

    /// Sup-norm of `d/dt (t chi') - f` by five-point differences at interior
    /// sample points.
    pub fn roundtrip_defect(&self) -> f64 {
        let t_max = self.radius * self.radius;
        let d = ROUNDTRIP_STEP * t_max;
        let g = |t: f64| t * self.chi_prime(t);
        (0..=200)
            .map(|k| 2.0 * d + (t_max - 4.0 * d) * k as f64 / 200.0)
            .map(|t| {
                let deriv = (-g(t + 2.0 * d) + 8.0 * g(t + d) - 8.0 * g(t - d) + g(t - 2.0 * d)) / (12.0 * d);
                (deriv - self.f(t)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Closed-form spectrum of a 2x2 Hermitian matrix.
pub fn brute_eig2(h: &HermitianMatrix) -> Result<Spectrum, MatrixError> {
    if h.dim() != 2 {
        return Err(MatrixError::DimensionMismatch(h.dim(), 2));
    }
    let a = h.get(0, 0).re;
    let c = h.get(1, 1).re;
    let b = h.get(0, 1);
    let m = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
    Ok(Spectrum {
        values: vec![m - d, m + d],
        vectors: None,
    })
}

/// `u(z) = sum H0[j][k] z_j conj(z_k)` with `G(D^2 u) = f_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSolution {
    pub hessian: HermitianMatrix,
    pub f_value: f64,
}

impl QuadraticSolution {
    pub fn value(&self, coords: &[f64]) -> f64 {
        let n = self.hessian.dim();
        let z: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new(coords[2 * j], coords[2 * j + 1]))
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                acc += self.hessian.get(j, k) * z[j] * z[k].conj();
            }
        }
        acc.re
    }

    /// Source text of `u` in the expression language.
    pub fn expr_source(&self) -> String {
        let n = self.hessian.dim();
        let mut terms = Vec::new();
        for j in 0..n {
            let c = self.hessian.get(j, j).re;
            terms.push(format!("{c:?} * (x{0}^2 + y{0}^2)", j + 1));
        }
        for j in 0..n {
            for k in j + 1..n {
                // 2 Re(b z_j conj(z_k)), z_j conj(z_k) = (xj xk + yj yk) + i (yj xk - xj yk)
                let b = self.hessian.get(j, k);
                let (a, c) = (j + 1, k + 1);
                terms.push(format!(
                    "{:?} * (x{a}*x{c} + y{a}*y{c}) - {:?} * (y{a}*x{c} - x{a}*y{c})",
                    2.0 * b.re,
                    2.0 * b.im
                ));
            }
        }
        terms.join(" + ")
    }

    pub fn expr(&self) -> Expr {
        crate::expr::parse(&self.expr_source()).expect("generated source parses")
    }
}

pub fn quadratic_solution(h0: &HermitianMatrix, spec: &OperatorSpec) -> Result<QuadraticSolution, OracleError> {
    if !in_closure(spec, h0)? {
        return Err(OracleError::OutsideCone);
    }
    Ok(QuadraticSolution {
        hessian: h0.clone(),
        f_value: evaluate(spec, h0)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetProbe {
    /// Position of the node among the stencil unknowns.
    pub position: usize,
    pub gradient: Vec<f64>,
    pub form: SymmetricForm,
    pub lambda1: f64,
    pub f: f64,
    /// RMS fit residual divided by `h^2`.
    pub residual_scale: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityReport {
    pub tol: f64,
    pub probes: Vec<JetProbe>,
    pub passed: usize,
    pub failed: usize,
    /// Nodes whose radius-`2h` ball leaves the unknowns.
    pub skipped: usize,
    /// Fits above [`FIT_RESIDUAL_CAP`].
    pub excluded: usize,
    pub pass_rate: f64,
}

impl ViscosityReport {
    pub fn failures(&self) -> Vec<usize> {
        self.probes.iter().filter(|p| !p.pass).map(|p| p.position).collect()
    }
}

/// Fits a quadratic to `u` on the lattice ball of radius `2h` around each
/// unknown and checks `L1(Q^{1,1})` against `f` within
/// `tol (1 + residual scale)`.
pub fn verify_viscosity(stencil: &Stencil, u: &GridFunction, f: &GridFunction, tol: f64) -> ViscosityReport {
    let d = stencil.domain();
    let n = d.dim();
    let m = 2 * n;
    let h = d.spacing();
    let mut ball: Vec<[i32; 4]> = Vec::new();
    let r = 2i32;
    let span = if m == 4 { [r, r, r, r] } else { [r, r, 0, 0] };
    for a in -span[0]..=span[0] {
        for b in -span[1]..=span[1] {
            for c in -span[2]..=span[2] {
                for e in -span[3]..=span[3] {
                    if a * a + b * b + c * c + e * e <= r * r {
                        ball.push([a, b, c, e]);
                    }
                }
            }
        }
    }
    let params = 1 + m + m * (m + 1) / 2;

    let results: Vec<Option<(Option<JetProbe>, bool)>> = (0..stencil.len())
        .into_par_iter()
        .map(|q| {
            if stencil.is_slaved(q) {
                return None;
            }
            let idx = stencil.nodes()[q];
            let samples: Vec<([i32; 4], f64)> = ball
                .iter()
                .filter_map(|o| {
                    d.offset_node(idx, o)
                        .filter(|&t| stencil.position(t).is_some())
                        .map(|t| (*o, u.at_node(t)))
                })
                .collect();
            // Only symmetric neighbourhoods keep the fit bias at O(h^2).
            if samples.len() < ball.len() || samples.len() < 2 * params {
                return Some((None, false));
            }
            let mut a = DMatrix::<f64>::zeros(samples.len(), params);
            let mut rhs = DVector::<f64>::zeros(samples.len());
            for (row, (o, val)) in samples.iter().enumerate() {
                let s: Vec<f64> = o[..m].iter().map(|&x| x as f64).collect();
                a[(row, 0)] = 1.0;
                for i in 0..m {
                    a[(row, 1 + i)] = s[i];
                }
                let mut col = 1 + m;
                for i in 0..m {
                    for j in i..m {
                        a[(row, col)] = if i == j { 0.5 * s[i] * s[i] } else { s[i] * s[j] };
                        col += 1;
                    }
                }
                rhs[row] = *val;
            }
            let ata = a.transpose() * &a;
            let eig = ata.clone().symmetric_eigen();
            if eig.eigenvalues.min() <= 1e-12 * eig.eigenvalues.max() {
                return Some((None, false));
            }
            let Some(chol) = ata.cholesky() else {
                return Some((None, false));
            };
            let coef = chol.solve(&(a.transpose() * &rhs));
            let resid = &a * &coef - &rhs;
            let rms = (resid.norm_squared() / samples.len() as f64).sqrt();
            let scale = rms / (h * h);
            let gradient: Vec<f64> = (0..m).map(|i| coef[1 + i] / h).collect();
            let mut q_entries = vec![0.0; m * m];
            let mut col = 1 + m;
            for i in 0..m {
                for j in i..m {
                    let v = coef[col] / (h * h);
                    q_entries[i * m + j] = v;
                    q_entries[j * m + i] = v;
                    col += 1;
                }
            }
            let form = SymmetricForm::new(m, &q_entries).expect("square");
            let hess = q11_part(&form).expect("even dimension");
            let lambda1 = eigenvalues(&hess)[0];
            let fv = f.at_node(idx);
            if scale > FIT_RESIDUAL_CAP {
                return Some((None, true));
            }
            let pass = (lambda1 - fv).abs() <= tol * (1.0 + scale);
            Some((
                Some(JetProbe {
                    position: q,
                    gradient,
                    form,
                    lambda1,
                    f: fv,
                    residual_scale: scale,
                    pass,
                }),
                false,
            ))
        })
        .collect();

    let mut report = ViscosityReport {
        tol,
        probes: Vec::new(),
        passed: 0,
        failed: 0,
        skipped: 0,
        excluded: 0,
        pass_rate: 0.0,
    };
    for r in results.into_iter().flatten() {
        match r {
            (Some(p), _) => {
                if p.pass {
                    report.passed += 1;
                } else {
                    report.failed += 1;
                }
                report.probes.push(p);
            }
            (None, true) => report.excluded += 1,
            (None, false) => report.skipped += 1,
        }
    }
    let probed = report.passed + report.failed;
    report.pass_rate = if probed > 0 {
        report.passed as f64 / probed as f64
    } else {
        0.0
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::grid::{DirectionSet, DomainPreset};
    use crate::hermitian::eig_hermitian;
    use crate::operators::OperatorKind;

    #[test]
    fn brute_eig2_examples() {
        let s = brute_eig2(&HermitianMatrix::from_real(2, &[2.0, 1.0, 1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(s.values, vec![1.0, 3.0]);
        let s = brute_eig2(&HermitianMatrix::diag(&[0.7, 0.7]).unwrap()).unwrap();
        assert_eq!(s.values, vec![0.7, 0.7]);
        let i = Complex64::new(0.0, 1.0);
        let h = HermitianMatrix::new(2, vec![0.0.into(), i, -i, 0.0.into()]).unwrap();
        assert_eq!(brute_eig2(&h).unwrap().values, vec![-1.0, 1.0]);
        let s = eig_hermitian(&h, false);
        assert!((s.values[0] + 1.0).abs() < 1e-12);
        assert!(brute_eig2(&HermitianMatrix::identity(3).unwrap()).is_err());
    }

    #[test]
    fn radial_constant_profile() {
        let r = RadialSolution::new(parse("1").unwrap(), 1.0, 2).unwrap();
        assert!(r.admissible);
        for t in [0.0, 0.3, 1.0] {
            assert!((r.chi_prime(t) - 1.0).abs() < 1e-12);
            assert!((r.chi(t) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_decreasing_profile() {
        let r = RadialSolution::new(parse("2 - t").unwrap(), 1.0, 2).unwrap();
        assert!(r.admissible);
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert!((r.chi_prime(t) - (2.0 - t / 2.0)).abs() < 1e-12);
            assert!((r.chi(t) - (2.0 * t - t * t / 4.0)).abs() < 1e-12);
            assert!((r.lambda1(t) - (2.0 - t)).abs() < 1e-9);
        }
        assert!(r.roundtrip_defect() <= 1e-8);
    }

    #[test]
    fn radial_increasing_profile_is_flagged() {
        let r = RadialSolution::new(parse("1 + t").unwrap(), 1.0, 2).unwrap();
        assert!(!r.admissible);
        assert!((r.max_chi2 - 0.5).abs() < 1e-9);
        assert!(RadialSolution::new(parse("x1").unwrap(), 1.0, 2).is_err());
        assert!(RadialSolution::new(parse("t - 0.5").unwrap(), 1.0, 2).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let q = quadratic_solution(&HermitianMatrix::identity(2).unwrap(), &OperatorSpec::lambda1(2)).unwrap();
        assert_eq!(q.f_value, 1.0);
        assert!((q.value(&[0.3, 0.4, 0.0, 1.0]) - 1.25).abs() < 1e-15);
        let ma = OperatorSpec::new(OperatorKind::MongeAmpere, 2).unwrap();
        let q = quadratic_solution(&HermitianMatrix::diag(&[1.0, 4.0]).unwrap(), &ma).unwrap();
        assert!((q.f_value - 2.0).abs() < 1e-15);
        let comb = OperatorSpec::new(OperatorKind::EigenCombination(vec![1.0, 1.0]), 2).unwrap();
        let q = quadratic_solution(&HermitianMatrix::diag(&[1.0, 2.0]).unwrap(), &comb).unwrap();
        assert!((q.f_value - 3.0).abs() < 1e-15);
        assert!(quadratic_solution(&HermitianMatrix::diag(&[-1.0, 2.0]).unwrap(), &ma).is_err());
    }

    #[test]
    fn quadratic_expression_matches_value() {
        let h = HermitianMatrix::new(
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.3, -0.4),
                Complex64::new(0.3, 0.4),
                Complex64::new(2.0, 0.0),
            ],
        )
        .unwrap();
        let q = QuadraticSolution { hessian: h, f_value: 0.0 };
        let e = q.expr();
        for p in [[0.1, 0.2, 0.3, 0.4], [-0.5, 0.7, 0.2, -0.9]] {
            assert!((e.eval_at(&p).unwrap() - q.value(&p)).abs() < 1e-14);
        }
    }

    fn ball_stencil(n: usize, h: f64) -> Stencil {
        let preset = DomainPreset::Ball { radius: 1.0 };
        Stencil::new(preset.build(n, h).unwrap(), DirectionSet::new(n, 1)).unwrap()
    }

    #[test]
    fn jet_probe_on_exact_quadratic() {
        let s = ball_stencil(2, 0.25);
        let u = GridFunction::sample(&s, |p| p.iter().map(|x| x * x).sum());
        let f = GridFunction::sample(&s, |_| 1.0);
        let r = verify_viscosity(&s, &u, &f, 1e-8);
        assert!(r.passed > 0 && r.failed == 0, "{r:?}");
        assert_eq!(r.pass_rate, 1.0);
    }

    #[test]
    fn jet_probe_localizes_a_spike() {
        let s = ball_stencil(1, 0.125);
        let mut u = GridFunction::sample(&s, |p| p[0] * p[0] + p[1] * p[1]);
        let f = GridFunction::sample(&s, |_| 1.0);
        let centre = s.nodes().iter().copied().find(|&i| s.domain().coords(i) == [0.0; 4]).unwrap();
        u.set_node(centre, u.at_node(centre) + 0.5);
        let r = verify_viscosity(&s, &u, &f, 5e-2);
        let fails = r.failures();
        assert!(fails.contains(&s.position(centre).unwrap()));
        for q in fails {
            let z = s.coords(q);
            assert!(z[0].hypot(z[1]) <= 2.0 * 0.125 * 1.0001);
        }
    }

    #[test]
    fn jet_probe_on_radial_oracle() {
        let s = ball_stencil(2, 0.125);
        let rad = RadialSolution::new(parse("2 - t").unwrap(), 1.0, 2).unwrap();
        let u = GridFunction::sample(&s, |p| rad.u(p));
        let f = GridFunction::sample(&s, |p| 2.0 - p.iter().map(|x| x * x).sum::<f64>());
        let r = verify_viscosity(&s, &u, &f, 5e-2);
        assert!(r.pass_rate >= 0.95, "{} {} {}", r.pass_rate, r.passed, r.failed);
    }
}
