//! Small dense Hermitian matrices and their spectra.
//!
//! Everything here is sized for the complex dimensions the solver works in
//! (`n <= 4`), so matrices are stored row-major in a flat `Vec` and the
//! eigensolver is a plain cyclic Jacobi iteration.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Largest complex dimension supported by the matrix layer.
pub const MAX_DIM: usize = 4;

/// Absolute tolerance on `H[j][k] - conj(H[k][j])` accepted at construction.
pub const HERMITIAN_TOL: f64 = 1e-14;

const JACOBI_REL_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("matrix is not Hermitian: |H[{row}][{col}] - conj(H[{col}][{row}])| = {defect:e}")]
    NotHermitian { row: usize, col: usize, defect: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("eigenvalue index {k} outside 1..={n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("zero vector has no Rayleigh quotient")]
    ZeroVector,
    #[error("symmetric form dimension {0} is odd")]
    OddDimension(usize),
}

/// An `n x n` Hermitian matrix, stored row-major.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    entries: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Validates Hermitian symmetry and then symmetrizes exactly, so that
    /// `H[k][j] == conj(H[j][k])` holds bit-for-bit afterwards.
    pub fn new(n: usize, entries: Vec<Complex64>) -> Result<Self, MatrixError> {
        check_dim(n)?;
        if entries.len() != n * n {
            return Err(MatrixError::EntryCount {
                expected: n * n,
                got: entries.len(),
            });
        }
        for j in 0..n {
            for k in j..n {
                let defect = (entries[j * n + k] - entries[k * n + j].conj()).norm();
                if !(defect <= HERMITIAN_TOL) {
                    return Err(MatrixError::NotHermitian {
                        row: j,
                        col: k,
                        defect,
                    });
                }
            }
        }
        Ok(Self::symmetrized(n, entries))
    }

    /// Builds `(M + M*) / 2` from an arbitrary square matrix.
    pub fn from_any(n: usize, entries: Vec<Complex64>) -> Result<Self, MatrixError> {
        check_dim(n)?;
        if entries.len() != n * n {
            return Err(MatrixError::EntryCount {
                expected: n * n,
                got: entries.len(),
            });
        }
        Ok(Self::symmetrized(n, entries))
    }

    fn symmetrized(n: usize, mut entries: Vec<Complex64>) -> Self {
        for j in 0..n {
            entries[j * n + j] = Complex64::new(entries[j * n + j].re, 0.0);
            for k in (j + 1)..n {
                let avg = (entries[j * n + k] + entries[k * n + j].conj()) * 0.5;
                entries[j * n + k] = avg;
                entries[k * n + j] = avg.conj();
            }
        }
        Self { n, entries }
    }

    pub fn from_real(n: usize, entries: &[f64]) -> Result<Self, MatrixError> {
        Self::new(n, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn diag(values: &[f64]) -> Result<Self, MatrixError> {
        let n = values.len();
        check_dim(n)?;
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for (j, &v) in values.iter().enumerate() {
            entries[j * n + j] = Complex64::new(v, 0.0);
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Result<Self, MatrixError> {
        Self::diag(&vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Result<Self, MatrixError> {
        Self::diag(&vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.entries[j * self.n + k]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|j| self.get(j, j).re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|z| z * alpha).collect(),
        }
    }

    /// `self + mu * I`.
    pub fn shift(&self, mu: f64) -> Self {
        let mut out = self.clone();
        for j in 0..self.n {
            out.entries[j * self.n + j] += mu;
        }
        out
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, MatrixError> {
        same_dim(self, other)?;
        Ok(self + other)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|k| self.get(j, k) * v[k]).sum())
            .collect()
    }

    /// `M M* + eps I`, positive definite whenever `eps > 0`.
    pub fn gram(n: usize, m: &[Complex64], eps: f64) -> Result<Self, MatrixError> {
        check_dim(n)?;
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                let mut s: Complex64 = (0..n).map(|l| m[j * n + l] * m[k * n + l].conj()).sum();
                if j == k {
                    s += eps;
                }
                entries[j * n + k] = s;
            }
        }
        Ok(Self::symmetrized(n, entries))
    }
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix(n={}, [", self.n)?;
        for j in 0..self.n {
            if j > 0 {
                write!(f, "; ")?;
            }
            for k in 0..self.n {
                if k > 0 {
                    write!(f, ", ")?;
                }
                let z = self.get(j, k);
                write!(f, "{}{:+}i", z.re, z.im)?;
            }
        }
        write!(f, "])")
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn add(self, rhs: Self) -> HermitianMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        HermitianMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn sub(self, rhs: Self) -> HermitianMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        HermitianMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<&HermitianMatrix> for f64 {
    type Output = HermitianMatrix;

    fn mul(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        rhs.scale(self)
    }
}

fn check_dim(n: usize) -> Result<(), MatrixError> {
    if (1..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(MatrixError::BadDimension(n))
    }
}

fn same_dim(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<(), MatrixError> {
    if a.n == b.n {
        Ok(())
    } else {
        Err(MatrixError::DimensionMismatch(a.n, b.n))
    }
}

/// Eigenvalues in ascending order, optionally with orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// `vectors[k]` belongs to `values[k]`.
    pub vectors: Option<Vec<Vec<Complex64>>>,
}

impl Spectrum {
    pub fn least(&self) -> f64 {
        self.values[0]
    }

    pub fn greatest(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Cyclic Jacobi diagonalization.
///
/// Each rotation first rotates the phase of `H[p][q]` onto the real axis and
/// then applies the classical real Jacobi rotation. Sweeps stop once the
/// off-diagonal Frobenius norm drops below `1e-13` times the input norm, or
/// after 50 sweeps.
pub fn eig_hermitian(h: &HermitianMatrix, want_vectors: bool) -> Spectrum {
    let n = h.n;
    let mut a = h.entries.clone();
    let mut v: Vec<Complex64> = (0..n * n)
        .map(|i| {
            if i / n == i % n {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let threshold = JACOBI_REL_TOL * h.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = D G with D = diag(.., 1 at p, conj(phase) at q, ..).
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                // A <- A U
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * upp + akq * uqp;
                    a[k * n + q] = akp * upq + akq * uqq;
                }
                // A <- U* A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = upp.conj() * apk + uqp.conj() * aqk;
                    a[q * n + k] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[p * n + q] = Complex64::new(0.0, 0.0);
                a[q * n + p] = Complex64::new(0.0, 0.0);
                a[p * n + p] = Complex64::new(a[p * n + p].re, 0.0);
                a[q * n + q] = Complex64::new(a[q * n + q].re, 0.0);
                if want_vectors {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = vkp * upp + vkq * uqp;
                        v[k * n + q] = vkp * upq + vkq * uqq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = want_vectors.then(|| {
        order
            .iter()
            .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
            .collect()
    });
    Spectrum { values, vectors }
}

fn off_diagonal_norm(a: &[Complex64], n: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                s += a[j * n + k].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// All eigenvalues, ascending.
pub fn eigenvalues(h: &HermitianMatrix) -> Vec<f64> {
    eig_hermitian(h, false).values
}

/// The `k`-th smallest eigenvalue, 1-based.
pub fn lambda_k(h: &HermitianMatrix, k: usize) -> Result<f64, MatrixError> {
    if k == 0 || k > h.n {
        return Err(MatrixError::IndexOutOfRange { k, n: h.n });
    }
    Ok(eigenvalues(h)[k - 1])
}

pub fn lambda_min(h: &HermitianMatrix) -> f64 {
    eigenvalues(h)[0]
}

pub fn lambda_max(h: &HermitianMatrix) -> f64 {
    *eigenvalues(h).last().unwrap()
}

/// `<v, H v> / <v, v>`.
pub fn rayleigh(h: &HermitianMatrix, v: &[Complex64]) -> Result<f64, MatrixError> {
    if v.len() != h.n {
        return Err(MatrixError::DimensionMismatch(h.n, v.len()));
    }
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(MatrixError::ZeroVector);
    }
    let hv = h.mul_vec(v);
    let num: Complex64 = v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
    Ok(num.re / norm2)
}

/// A real symmetric `2n x 2n` form, coordinates ordered `(x1, y1, x2, y2, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricForm {
    m: usize,
    entries: Vec<f64>,
}

impl SymmetricForm {
    /// Takes the symmetric part `(Q + Q^T) / 2` of a row-major square matrix.
    pub fn new(m: usize, entries: &[f64]) -> Result<Self, MatrixError> {
        if entries.len() != m * m {
            return Err(MatrixError::EntryCount {
                expected: m * m,
                got: entries.len(),
            });
        }
        let mut sym = vec![0.0; m * m];
        for j in 0..m {
            for k in 0..m {
                sym[j * m + k] = if j == k {
                    entries[j * m + k]
                } else {
                    0.5 * (entries[j * m + k] + entries[k * m + j])
                };
            }
        }
        Ok(Self { m, entries: sym })
    }

    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; m * m];
        for j in 0..m {
            for k in j..m {
                let v = if j == k { f(j, k) } else { 0.5 * (f(j, k) + f(k, j)) };
                entries[j * m + k] = v;
                entries[k * m + j] = v;
            }
        }
        Self { m, entries }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.m + k]
    }

    pub fn linear_combination(a: f64, q1: &Self, b: f64, q2: &Self) -> Self {
        assert_eq!(q1.m, q2.m, "dimension mismatch");
        Self {
            m: q1.m,
            entries: q1
                .entries
                .iter()
                .zip(&q2.entries)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// The Hermitian (1,1)-part of a real quadratic form on `C^n = R^{2n}`:
/// `H[j][k] = ((Q_xjxk + Q_yjyk) + i (Q_xjyk - Q_yjxk)) / 4`.
///
/// For `Q` the real Hessian of `u` this is the complex Hessian
/// `d^2 u / dz_j dzbar_k`.
pub fn q11_part(q: &SymmetricForm) -> Result<HermitianMatrix, MatrixError> {
    if q.m % 2 != 0 {
        return Err(MatrixError::OddDimension(q.m));
    }
    let n = q.m / 2;
    check_dim(n)?;
    let mut entries = Vec::with_capacity(n * n);
    for j in 0..n {
        let (xj, yj) = (2 * j, 2 * j + 1);
        for k in 0..n {
            let (xk, yk) = (2 * k, 2 * k + 1);
            entries.push(Complex64::new(
                0.25 * (q.get(xj, xk) + q.get(yj, yk)),
                0.25 * (q.get(xj, yk) - q.get(yj, xk)),
            ));
        }
    }
    Ok(HermitianMatrix::symmetrized(n, entries))
}

/// For each `k`, the slack in both Weyl inequalities
/// `L_k(A) + L_1(B) <= L_k(A+B) <= L_k(A) + L_n(B)`.
pub fn weyl_margins(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
) -> Result<Vec<(f64, f64)>, MatrixError> {
    same_dim(a, b)?;
    let la = eigenvalues(a);
    let lb = eigenvalues(b);
    let lab = eigenvalues(&(a + b));
    let (b_min, b_max) = (lb[0], lb[lb.len() - 1]);
    Ok(la
        .iter()
        .zip(&lab)
        .map(|(&ak, &abk)| (abk - ak - b_min, ak + b_max - abk))
        .collect())
}
