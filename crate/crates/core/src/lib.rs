//! Numerical toolkit for the Dirichlet problem `L1(D^2_C u) = f`, where `L1`
//! is the least eigenvalue of the complex Hessian.
//!
//! * [`hermitian`]: Hermitian spectra, Rayleigh quotients, the (1,1)-part of
//!   a real quadratic form and Weyl-inequality margins.
//! * [`operators`]: the family of Hessian operators `G(A) = G^(L(A))` with
//!   their cones and comparability constants.
//! * [`expr`]: the expression language used for `f`, boundary data and domains.
//! * [`grid`]: lattices over `R^{2n}`, level-set domains, Gaussian-integer
//!   direction sets.
//! * [`scheme`]: the monotone wide-stencil operator and residual checks.
//! * [`solver`]: barrier, harmonic supersolution, Perron iteration and the
//!   discrete comparison harness.
//! * [`oracle`]: closed-form and ODE ground truth plus a local jet verifier.

pub mod expr;
pub mod grid;
pub mod hermitian;
pub mod operators;
pub mod oracle;
pub mod random;
pub mod scheme;
pub mod solver;
