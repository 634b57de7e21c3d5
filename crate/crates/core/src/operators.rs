//! Hessian operators `G(A) = G^(L(A))` acting through the ordered spectrum.
//!
//! Each [`OperatorKind`] comes with an open cone `Gamma` of admissible
//! eigenvalue vectors. [`evaluate`] accepts the closure of the cone and
//! reports anything outside it as [`OperatorError::OutsideCone`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::hermitian::{eigenvalues, lambda_min, HermitianMatrix};
use crate::random::{random_hermitian, random_positive, rng};

/// Slack on every defining inequality of a cone closure.
pub const CONE_TOL: f64 = 1e-12;

const MAX_CONE_DRAWS: usize = 1000;
const GRAM_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid operator: {0}")]
    Invalid(String),
    #[error("operator has dimension {spec} but matrix has dimension {matrix}")]
    DimensionMismatch { spec: usize, matrix: usize },
    #[error("eigenvalues {0:?} lie outside the closed cone")]
    OutsideCone(Vec<f64>),
    #[error("non-finite operator value for eigenvalues {0:?}")]
    NonFinite(Vec<f64>),
    #[error("no cone sample found in {0} draws")]
    NoConeSamples(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Lambda1,
    LambdaK(usize),
    EigenCombination(Vec<f64>),
    MongeAmpere,
    KHessian(usize),
    KMongeAmpere(usize),
    InterpolatedS(f64),
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Lambda1 => write!(f, "lambda1"),
            OperatorKind::LambdaK(k) => write!(f, "lambda_k({k})"),
            OperatorKind::EigenCombination(a) => {
                let parts: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                write!(f, "eigen_combination({})", parts.join(","))
            }
            OperatorKind::MongeAmpere => write!(f, "monge_ampere"),
            OperatorKind::KHessian(k) => write!(f, "k_hessian({k})"),
            OperatorKind::KMongeAmpere(k) => write!(f, "k_monge_ampere({k})"),
            OperatorKind::InterpolatedS(s) => write!(f, "interpolated_s({s})"),
        }
    }
}

/// Parses the compact form used by config files: `lambda1`, `lambda_k(2)`,
/// `eigen_combination(1,0)`, `monge_ampere`, `k_hessian(2)`,
/// `k_monge_ampere(2)`, `interpolated_s(0.5)`.
impl FromStr for OperatorKind {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let close = s
                    .rfind(')')
                    .filter(|&c| c > open && c == s.len() - 1)
                    .ok_or_else(|| OperatorError::Invalid(format!("unbalanced parameters in '{s}'")))?;
                let args: Result<Vec<f64>, _> = s[open + 1..close]
                    .split(',')
                    .map(|a| a.trim().parse::<f64>())
                    .collect();
                let args =
                    args.map_err(|_| OperatorError::Invalid(format!("bad parameters in '{s}'")))?;
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        let int_arg = |args: &[f64]| -> Result<usize, OperatorError> {
            match args {
                [k] if *k >= 1.0 && k.fract() == 0.0 => Ok(*k as usize),
                _ => Err(OperatorError::Invalid(format!(
                    "'{name}' takes one positive integer parameter"
                ))),
            }
        };
        let no_args = |kind: OperatorKind| {
            if args.is_empty() {
                Ok(kind)
            } else {
                Err(OperatorError::Invalid(format!("'{name}' takes no parameters")))
            }
        };
        match name {
            "lambda1" => no_args(OperatorKind::Lambda1),
            "monge_ampere" => no_args(OperatorKind::MongeAmpere),
            "lambda_k" => Ok(OperatorKind::LambdaK(int_arg(&args)?)),
            "k_hessian" => Ok(OperatorKind::KHessian(int_arg(&args)?)),
            "k_monge_ampere" => Ok(OperatorKind::KMongeAmpere(int_arg(&args)?)),
            "eigen_combination" => Ok(OperatorKind::EigenCombination(args)),
            "interpolated_s" => match args.as_slice() {
                [s] => Ok(OperatorKind::InterpolatedS(*s)),
                _ => Err(OperatorError::Invalid(
                    "'interpolated_s' takes one parameter".into(),
                )),
            },
            other => Err(OperatorError::Invalid(format!("unknown operator kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    kind: OperatorKind,
    n: usize,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, n: usize) -> Result<Self, OperatorError> {
        if !(1..=crate::hermitian::MAX_DIM).contains(&n) {
            return Err(OperatorError::Invalid(format!("dimension {n} unsupported")));
        }
        match &kind {
            OperatorKind::LambdaK(k) | OperatorKind::KHessian(k) | OperatorKind::KMongeAmpere(k)
                if *k < 1 || *k > n =>
            {
                return Err(OperatorError::Invalid(format!("k = {k} outside 1..={n}")));
            }
            OperatorKind::EigenCombination(a) => {
                if a.len() != n {
                    return Err(OperatorError::Invalid(format!(
                        "{} coefficients for dimension {n}",
                        a.len()
                    )));
                }
                if a.iter().any(|&x| !(x >= 0.0)) || !(a.iter().sum::<f64>() > 0.0) {
                    return Err(OperatorError::Invalid(
                        "coefficients must be nonnegative with positive sum".into(),
                    ));
                }
            }
            OperatorKind::InterpolatedS(s) => {
                if n != 2 {
                    return Err(OperatorError::Invalid(
                        "interpolated_s is defined for n = 2 only".into(),
                    ));
                }
                if !(0.0..=1.0).contains(s) {
                    return Err(OperatorError::Invalid(format!("s = {s} outside [0, 1]")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, n })
    }

    pub fn lambda1(n: usize) -> Self {
        Self::new(OperatorKind::Lambda1, n).expect("valid dimension")
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Values of the quantities that must be positive in the open cone.
    fn cone_constraints(&self, lam: &[f64]) -> Vec<f64> {
        let n = self.n;
        match &self.kind {
            OperatorKind::Lambda1 => vec![lam[0]],
            OperatorKind::LambdaK(k) => vec![lam[k - 1]],
            OperatorKind::EigenCombination(a) => {
                vec![a.iter().zip(lam).map(|(x, l)| x * l).sum()]
            }
            OperatorKind::MongeAmpere => lam.to_vec(),
            OperatorKind::KHessian(k) => (1..=*k).map(|l| elementary_symmetric(lam, l)).collect(),
            // The smallest k-fold sum is the sum of the k smallest eigenvalues.
            OperatorKind::KMongeAmpere(k) => vec![lam[..*k].iter().sum()],
            OperatorKind::InterpolatedS(s) => {
                debug_assert_eq!(n, 2);
                vec![lam[0] + s * lam[1], s * lam[0] + lam[1]]
            }
        }
    }

    pub fn spectrum_in_cone(&self, lam: &[f64]) -> bool {
        self.cone_constraints(lam).iter().all(|&c| c > 0.0)
    }

    pub fn spectrum_in_closure(&self, lam: &[f64]) -> bool {
        self.cone_constraints(lam).iter().all(|&c| c >= -CONE_TOL)
    }

    /// `G^` applied to an ascending eigenvalue vector on the closed cone.
    pub fn evaluate_spectrum(&self, lam: &[f64]) -> Result<f64, OperatorError> {
        if lam.len() != self.n {
            return Err(OperatorError::DimensionMismatch {
                spec: self.n,
                matrix: lam.len(),
            });
        }
        if !self.spectrum_in_closure(lam) {
            return Err(OperatorError::OutsideCone(lam.to_vec()));
        }
        let n = self.n;
        let value = match &self.kind {
            OperatorKind::Lambda1 => lam[0],
            OperatorKind::LambdaK(k) => lam[k - 1],
            OperatorKind::EigenCombination(a) => a.iter().zip(lam).map(|(x, l)| x * l).sum(),
            OperatorKind::MongeAmpere => {
                let prod: f64 = lam.iter().map(|&l| l.max(0.0)).product();
                prod.powf(1.0 / n as f64)
            }
            OperatorKind::KHessian(k) => {
                let s = elementary_symmetric(lam, *k).max(0.0);
                s.powf(1.0 / *k as f64)
            }
            OperatorKind::KMongeAmpere(k) => {
                let mut log_sum = 0.0;
                let mut count = 0usize;
                let mut degenerate = false;
                for_each_subset(n, *k, |idx| {
                    let s: f64 = idx.iter().map(|&i| lam[i]).sum();
                    if s <= 0.0 {
                        degenerate = true;
                    } else {
                        log_sum += s.ln();
                    }
                    count += 1;
                });
                if degenerate {
                    0.0
                } else {
                    (log_sum / count as f64).exp()
                }
            }
            OperatorKind::InterpolatedS(s) => {
                let (l1, l2) = (lam[0], lam[1]);
                let q = (1.0 - s).powi(2) * l1 * l2 + s * (l1 + l2).powi(2);
                q.max(0.0).sqrt()
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(OperatorError::NonFinite(lam.to_vec()))
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (n={})", self.kind, self.n)
    }
}

/// `sigma_k` of the given values; `sigma_0 = 1`.
pub fn elementary_symmetric(values: &[f64], k: usize) -> f64 {
    // e[j] accumulates sigma_j of the prefix processed so far.
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for &v in values {
        for j in (1..=k).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e[k]
}

fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in (i + 1)..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn check_dim(spec: &OperatorSpec, h: &HermitianMatrix) -> Result<(), OperatorError> {
    if spec.n == h.dim() {
        Ok(())
    } else {
        Err(OperatorError::DimensionMismatch {
            spec: spec.n,
            matrix: h.dim(),
        })
    }
}

/// Membership of `L(H)` in the open cone.
pub fn in_cone(spec: &OperatorSpec, h: &HermitianMatrix) -> Result<bool, OperatorError> {
    check_dim(spec, h)?;
    Ok(spec.spectrum_in_cone(&eigenvalues(h)))
}

/// Membership of `L(H)` in the closed cone, with [`CONE_TOL`] slack.
pub fn in_closure(spec: &OperatorSpec, h: &HermitianMatrix) -> Result<bool, OperatorError> {
    check_dim(spec, h)?;
    Ok(spec.spectrum_in_closure(&eigenvalues(h)))
}

pub fn evaluate(spec: &OperatorSpec, h: &HermitianMatrix) -> Result<f64, OperatorError> {
    check_dim(spec, h)?;
    spec.evaluate_spectrum(&eigenvalues(h))
}

/// Smallest `mu >= 0` with `H + mu I` in the closed cone.
pub fn cone_shift(spec: &OperatorSpec, h: &HermitianMatrix) -> Result<f64, OperatorError> {
    check_dim(spec, h)?;
    let lam = eigenvalues(h);
    let shifted = |mu: f64| -> Vec<f64> { lam.iter().map(|l| l + mu).collect() };
    if spec.spectrum_in_closure(&lam) {
        return Ok(0.0);
    }
    // Every cone contains the positive orthant and is closed under adding
    // positive multiples of (1, .., 1), so bisection on mu is valid.
    let mut hi = (-lam[0]).max(0.0) + 1.0;
    while !spec.spectrum_in_closure(&shifted(hi)) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.spectrum_in_closure(&shifted(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(hi)
}

/// Analytic constant `C` in `G(A + P) - G(A) >= C L1(P)` where one is known.
///
/// For the eigenvalue kinds it follows from Weyl's inequality; for the concave
/// 1-homogeneous kinds from `G(A + P) >= G(A) + G(P)` and `G(P) >= C L1(P)`
/// on positive definite `P`.
pub fn known_constant(spec: &OperatorSpec) -> Option<f64> {
    let n = spec.n;
    match &spec.kind {
        OperatorKind::Lambda1 | OperatorKind::LambdaK(_) | OperatorKind::MongeAmpere => Some(1.0),
        OperatorKind::EigenCombination(a) => Some(a.iter().sum()),
        OperatorKind::KHessian(k) => Some((binomial(n, *k) as f64).powf(1.0 / *k as f64)),
        OperatorKind::KMongeAmpere(k) => Some(*k as f64),
        OperatorKind::InterpolatedS(_) => None,
    }
}

#[derive(Debug, Clone)]
pub struct ComparabilityReport {
    pub samples: usize,
    /// Minimum over samples of `(G(A + P) - G(A)) / L1(P)`.
    pub empirical_c: f64,
    pub worst_pair: (HermitianMatrix, HermitianMatrix),
    pub analytic_c: Option<f64>,
    /// Per-sample ratios, in draw order.
    pub ratios: Vec<f64>,
}

/// Draws a Hermitian matrix in the open cone. A draw outside the cone is
/// moved inside by `(cone_shift + s) I` with `s` uniform in `[1e-3, 1)`.
pub fn sample_in_cone(
    spec: &OperatorSpec,
    rng: &mut impl rand::Rng,
) -> Result<HermitianMatrix, OperatorError> {
    for _ in 0..MAX_CONE_DRAWS {
        let a = random_hermitian(spec.n, rng);
        if spec.spectrum_in_cone(&eigenvalues(&a)) {
            return Ok(a);
        }
        let shifted = a.shift(cone_shift(spec, &a)? + rng.random_range(1e-3..1.0));
        if spec.spectrum_in_cone(&eigenvalues(&shifted)) {
            return Ok(shifted);
        }
    }
    Err(OperatorError::NoConeSamples(MAX_CONE_DRAWS))
}

/// Samples `A` in the cone and `P = M M* + 1e-6 I` and records the worst
/// ratio `(G(A + P) - G(A)) / L1(P)`. Deterministic in `(spec, count, seed)`.
pub fn comparability_estimate(
    spec: &OperatorSpec,
    sample_count: usize,
    seed: u64,
) -> Result<ComparabilityReport, OperatorError> {
    if sample_count == 0 {
        return Err(OperatorError::Invalid("sample_count must be positive".into()));
    }
    let mut rng = rng(seed);
    let mut ratios = Vec::with_capacity(sample_count);
    let mut worst: Option<(f64, HermitianMatrix, HermitianMatrix)> = None;
    for _ in 0..sample_count {
        let a = sample_in_cone(spec, &mut rng)?;
        let p = random_positive(spec.n, GRAM_EPS, &mut rng);
        let ratio = (evaluate(spec, &(&a + &p))? - evaluate(spec, &a)?) / lambda_min(&p);
        ratios.push(ratio);
        if worst.as_ref().map_or(true, |(r, _, _)| ratio < *r) {
            worst = Some((ratio, a, p));
        }
    }
    let (empirical_c, a, p) = worst.expect("at least one sample");
    Ok(ComparabilityReport {
        samples: sample_count,
        empirical_c,
        worst_pair: (a, p),
        analytic_c: known_constant(spec),
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveConeCheck {
    pub samples: usize,
    /// Samples with `G(P) >= C L1(P) - 1e-9`, `C` the analytic constant (1 if unknown).
    pub passed: usize,
    /// Minimum of `G(P) / L1(P)`.
    pub min_ratio: f64,
}

/// Checks `G(P) >= C L1(P)` on positive definite samples `P = M M* + 1e-6 I`.
pub fn positive_cone_check(
    spec: &OperatorSpec,
    sample_count: usize,
    seed: u64,
) -> Result<PositiveConeCheck, OperatorError> {
    let c = known_constant(spec).unwrap_or(1.0);
    let mut rng = rng(seed);
    let mut passed = 0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..sample_count {
        let p = random_positive(spec.n, GRAM_EPS, &mut rng);
        let g = evaluate(spec, &p)?;
        let l1 = lambda_min(&p);
        if g >= c * l1 - 1e-9 {
            passed += 1;
        }
        min_ratio = min_ratio.min(g / l1);
    }
    Ok(PositiveConeCheck {
        samples: sample_count,
        passed,
        min_ratio,
    })
}

/// Whether concavity of `G` is expected on its cone. `L_k` for `k >= 2` is not
/// concave, and `sum a_k L_k` is concave exactly when the weights are
/// nonincreasing.
pub fn is_concave_kind(spec: &OperatorSpec) -> bool {
    match &spec.kind {
        OperatorKind::LambdaK(k) => *k == 1,
        OperatorKind::EigenCombination(a) => a.windows(2).all(|w| w[0] >= w[1]),
        _ => true,
    }
}

/// A stored pair `(A, B)` in the cone of `L_k` (`k >= 2`) with
/// `L_k((A + B) / 2) < (L_k(A) + L_k(B)) / 2`.
pub fn concavity_counterexample(spec: &OperatorSpec) -> Option<(HermitianMatrix, HermitianMatrix)> {
    match spec.kind {
        OperatorKind::LambdaK(k) if k >= 2 => {
            let n = spec.n;
            // A = diag(1, 0, ..), B = diag(0, 1, ..) sharing k - 2 entries
            // below 0 and n - k above 1, so L_k is 1 for both and 1/2 at
            // the midpoint.
            let mut da = vec![0.0; n];
            let mut db = vec![0.0; n];
            da[0] = 1.0;
            db[1] = 1.0;
            for j in 2..n {
                let v = if j < k { -1.0 } else { 2.0 };
                da[j] = v;
                db[j] = v;
            }
            Some((
                HermitianMatrix::diag(&da).ok()?,
                HermitianMatrix::diag(&db).ok()?,
            ))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropertyCounts {
    pub trials: usize,
    pub homogeneity_pass: usize,
    pub ellipticity_pass: usize,
    /// `None` when concavity is not expected for the kind.
    pub concavity_pass: Option<usize>,
}

/// Seeded property sweep: 1-homogeneity, ellipticity and (where expected)
/// concavity of `G` on cone samples.
pub fn property_counts(
    spec: &OperatorSpec,
    trials: usize,
    seed: u64,
) -> Result<PropertyCounts, OperatorError> {
    let mut rng = rng(seed);
    let concave = is_concave_kind(spec);
    let mut out = PropertyCounts {
        trials,
        concavity_pass: concave.then_some(0),
        ..Default::default()
    };
    for t in 0..trials {
        let a = sample_in_cone(spec, &mut rng)?;
        let b = sample_in_cone(spec, &mut rng)?;
        let p = random_positive(spec.n, 0.0, &mut rng);
        let ga = evaluate(spec, &a)?;
        let homog = [0.5, 2.0].iter().all(|&alpha| {
            evaluate(spec, &a.scale(alpha))
                .map(|g| (g - alpha * ga).abs() <= 1e-10 * (alpha * ga).abs().max(1e-300) + 1e-14)
                .unwrap_or(false)
        });
        if homog {
            out.homogeneity_pass += 1;
        }
        if evaluate(spec, &(&a + &p))? >= ga - 1e-9 {
            out.ellipticity_pass += 1;
        }
        if let Some(count) = out.concavity_pass.as_mut() {
            let alpha = [0.25, 0.5, 0.75][t % 3];
            let mix = &a.scale(alpha) + &b.scale(1.0 - alpha);
            let gb = evaluate(spec, &b)?;
            if evaluate(spec, &mix)? >= alpha * ga + (1.0 - alpha) * gb - 1e-9 {
                *count += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: OperatorKind, n: usize) -> OperatorSpec {
        OperatorSpec::new(kind, n).unwrap()
    }

    fn d(v: &[f64]) -> HermitianMatrix {
        HermitianMatrix::diag(v).unwrap()
    }

    #[test]
    fn cone_membership_examples() {
        assert!(in_cone(&spec(OperatorKind::MongeAmpere, 2), &d(&[1.0, 1.0])).unwrap());
        // sigma_1(-1, 3) = 2
        assert!(in_cone(&spec(OperatorKind::KHessian(1), 2), &d(&[-1.0, 3.0])).unwrap());
        assert!(in_cone(&spec(OperatorKind::LambdaK(2), 2), &d(&[-1.0, 3.0])).unwrap());
        assert!(!in_cone(&spec(OperatorKind::Lambda1, 2), &d(&[-1.0, 3.0])).unwrap());
        assert!(matches!(
            in_cone(&spec(OperatorKind::Lambda1, 3), &d(&[1.0, 1.0])),
            Err(OperatorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn k_hessian_cone_needs_all_lower_sigmas() {
        // sigma_1 = 1 > 0 but sigma_2 = -2 < 0.
        let s = spec(OperatorKind::KHessian(2), 2);
        assert!(!in_cone(&s, &d(&[-1.0, 2.0])).unwrap());
        assert!(in_cone(&spec(OperatorKind::KHessian(1), 2), &d(&[-1.0, 2.0])).unwrap());
    }

    #[test]
    fn interpolated_cone() {
        let s = spec(OperatorKind::InterpolatedS(0.5), 2);
        assert!(in_cone(&s, &d(&[-0.4, 1.0])).unwrap());
        assert!(!in_cone(&s, &d(&[-0.6, 1.0])).unwrap());
    }

    #[test]
    fn evaluate_examples() {
        let ma = spec(OperatorKind::MongeAmpere, 2);
        assert!((evaluate(&ma, &d(&[1.0, 4.0])).unwrap() - 2.0).abs() < 1e-15);
        let kh = spec(OperatorKind::KHessian(2), 3);
        let v = evaluate(&kh, &HermitianMatrix::identity(3).unwrap()).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-15);
        let s0 = spec(OperatorKind::InterpolatedS(0.0), 2);
        let s1 = spec(OperatorKind::InterpolatedS(1.0), 2);
        assert!((evaluate(&s0, &d(&[1.0, 4.0])).unwrap() - 2.0).abs() < 1e-15);
        assert!((evaluate(&s1, &d(&[1.0, 4.0])).unwrap() - 5.0).abs() < 1e-15);
        let comb = spec(OperatorKind::EigenCombination(vec![1.0, 0.0]), 2);
        let h = HermitianMatrix::from_real(2, &[2.0, -0.5, -0.5, 1.0]).unwrap();
        assert_eq!(evaluate(&comb, &h).unwrap(), lambda_min(&h));
    }

    #[test]
    fn outside_closed_cone_is_a_domain_signal() {
        let ma = spec(OperatorKind::MongeAmpere, 2);
        assert!(matches!(
            evaluate(&ma, &d(&[-1.0, 4.0])),
            Err(OperatorError::OutsideCone(_))
        ));
        // Boundary of the cone evaluates by continuity.
        assert_eq!(evaluate(&ma, &d(&[0.0, 4.0])).unwrap(), 0.0);
        assert_eq!(evaluate(&ma, &d(&[-1e-13, 4.0])).unwrap(), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(OperatorSpec::new(OperatorKind::LambdaK(3), 2).is_err());
        assert!(OperatorSpec::new(OperatorKind::KHessian(0), 2).is_err());
        assert!(OperatorSpec::new(OperatorKind::EigenCombination(vec![1.0, -0.5]), 2).is_err());
        assert!(OperatorSpec::new(OperatorKind::EigenCombination(vec![0.0, 0.0]), 2).is_err());
        assert!(OperatorSpec::new(OperatorKind::InterpolatedS(0.5), 3).is_err());
        assert!(OperatorSpec::new(OperatorKind::InterpolatedS(1.5), 2).is_err());
    }

    #[test]
    fn parse_compact_forms() {
        for src in [
            "lambda1",
            "lambda_k(2)",
            "eigen_combination(1,0.5)",
            "monge_ampere",
            "k_hessian(2)",
            "k_monge_ampere(1)",
            "interpolated_s(0.25)",
        ] {
            let kind: OperatorKind = src.parse().unwrap();
            assert_eq!(kind.to_string().parse::<OperatorKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<OperatorKind>().is_err());
        assert!("lambda_k(1.5)".parse::<OperatorKind>().is_err());
        assert!("lambda_k(2".parse::<OperatorKind>().is_err());
    }

    #[test]
    fn elementary_symmetric_matches_enumeration() {
        let v = [1.5, -2.0, 0.5, 3.0];
        for k in 0..=4 {
            let mut brute = 0.0;
            for mask in 0u32..16 {
                if mask.count_ones() as usize == k {
                    brute += (0..4).filter(|i| mask & (1 << i) != 0).map(|i| v[i]).product::<f64>();
                }
            }
            assert!((elementary_symmetric(&v, k) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_identities() {
        let mut r = rng(7);
        for _ in 0..200 {
            let p = random_positive(2, 1e-3, &mut r);
            let trace = p.trace();
            let k1 = evaluate(&spec(OperatorKind::KHessian(1), 2), &p).unwrap();
            assert!((k1 - trace).abs() <= 1e-10 * trace.abs().max(1.0));
            let ma = evaluate(&spec(OperatorKind::MongeAmpere, 2), &p).unwrap();
            let kn = evaluate(&spec(OperatorKind::KHessian(2), 2), &p).unwrap();
            assert!((ma - kn).abs() <= 1e-10 * ma.max(1.0));
            let s0 = evaluate(&spec(OperatorKind::InterpolatedS(0.0), 2), &p).unwrap();
            assert!((ma - s0).abs() <= 1e-10 * ma.max(1.0));
        }
    }

    #[test]
    fn known_constants() {
        assert_eq!(known_constant(&spec(OperatorKind::Lambda1, 3)), Some(1.0));
        assert_eq!(known_constant(&spec(OperatorKind::MongeAmpere, 3)), Some(1.0));
        assert_eq!(known_constant(&spec(OperatorKind::InterpolatedS(0.3), 2)), None);
        let c = known_constant(&spec(OperatorKind::KHessian(2), 3)).unwrap();
        assert!((c - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn comparability_is_deterministic() {
        let s = spec(OperatorKind::KHessian(2), 3);
        let a = comparability_estimate(&s, 50, 11).unwrap();
        let b = comparability_estimate(&s, 50, 11).unwrap();
        assert_eq!(a.ratios, b.ratios);
        assert_eq!(a.empirical_c, b.empirical_c);
        assert!(comparability_estimate(&s, 0, 11).is_err());
    }

    #[test]
    fn lambda_k_counterexample_breaks_concavity() {
        for n in 2..=4 {
            for k in 2..=n {
                let s = spec(OperatorKind::LambdaK(k), n);
                let (a, b) = concavity_counterexample(&s).unwrap();
                assert!(in_cone(&s, &a).unwrap() && in_cone(&s, &b).unwrap());
                let mid = evaluate(&s, &(&a.scale(0.5) + &b.scale(0.5))).unwrap();
                let avg = 0.5 * (evaluate(&s, &a).unwrap() + evaluate(&s, &b).unwrap());
                assert!(mid < avg - 1e-3, "n={n} k={k}: {mid} vs {avg}");
            }
        }
    }
}
