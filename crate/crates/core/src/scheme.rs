//! Wide-stencil monotone discretization of `L1(D^2_C u)`.
//!
//! Along a unit complex direction `e = w / |w|` the restriction of `u` to the
//! line `z + s e` has Laplacian `4 e* H e`, so
//!
//! ```text
//! E_w(u)(z) = [ d2u(e) + d2u(ie) ] / 4
//! ```
//!
//! with three-point second differences over the arms `z +- h w`, `z +- i h w`.
//! Arms leaving the domain are shortened to the boundary crossing and use the
//! nonuniform formula `2[u(a)/(a(a+b)) + u(-b)/(b(a+b)) - u(0)/(ab)]`, which is
//! still exact on quadratics. `S_h u = min_w E_w(u)`.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::grid::{ArmTarget, DirectionSet, GaussVec, GridDomain, GridError, Point};
use crate::hermitian::{q11_part, HermitianMatrix, SymmetricForm};
use crate::operators::{evaluate, OperatorKind, OperatorSpec};

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("direction set is for n = {set} but the domain has n = {domain}")]
    DimensionMismatch { set: usize, domain: usize },
    #[error("lattice node {0} is not an unknown of the stencil")]
    NotUnknown(usize),
    #[error("grid function does not match the stencil ({0})")]
    Shape(String),
    #[error("sampling failed at {point:?}: {source}")]
    Sample { point: Vec<f64>, source: EvalError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Node(usize),
    Boundary(u32),
}

#[derive(Debug, Clone, PartialEq)]
struct NearDir {
    weights: [f64; 4],
    sources: [Source; 4],
    center: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Full,
    Near(u32),
    /// Value is the boundary datum at this boundary point (degenerate arm).
    Slaved(u32),
}

/// Precomputed stencil geometry for one domain and direction set.
#[derive(Debug)]
pub struct Stencil {
    domain: GridDomain,
    dirs: DirectionSet,
    nodes: Vec<usize>,
    pos: Vec<u32>,
    offsets: Vec<[isize; 4]>,
    len2: Vec<f64>,
    kind: Vec<NodeKind>,
    near: Vec<Vec<NearDir>>,
    boundary_points: Vec<Point>,
}

fn second_difference_weights(a: f64, b: f64) -> (f64, f64, f64) {
    (2.0 / (a * (a + b)), 2.0 / (b * (a + b)), 2.0 / (a * b))
}

impl Stencil {
    pub fn new(domain: GridDomain, dirs: DirectionSet) -> Result<Self, SchemeError> {
        if dirs.dim() != domain.dim() {
            return Err(SchemeError::DimensionMismatch {
                set: dirs.dim(),
                domain: domain.dim(),
            });
        }
        let nodes = domain.inside_nodes();
        let mut pos = vec![NONE; domain.node_count()];
        for (p, &idx) in nodes.iter().enumerate() {
            pos[idx] = p as u32;
        }
        let h = domain.spacing();
        let strides = domain.strides();
        let flat = |o: [i32; 4]| -> isize {
            (0..2 * domain.dim())
                .map(|a| o[a] as isize * strides[a] as isize)
                .sum()
        };
        let offsets: Vec<[isize; 4]> = dirs
            .members()
            .iter()
            .map(|w| {
                let b = w.real_offset();
                let r = w.times_i().real_offset();
                [flat(b), flat(b.map(|x| -x)), flat(r), flat(r.map(|x| -x))]
            })
            .collect();
        let len2: Vec<f64> = dirs
            .members()
            .iter()
            .map(|w| h * h * w.norm_sqr() as f64)
            .collect();

        // Resolve near-boundary arms in parallel; the crossing cache is shared.
        let resolved: Vec<Result<Option<Vec<crate::grid::ArmSet>>, GridError>> = nodes
            .par_iter()
            .map(|&idx| {
                let full = dirs.members().iter().all(|w| {
                    let b = w.real_offset();
                    let r = w.times_i().real_offset();
                    [b, b.map(|x| -x), r, r.map(|x| -x)].iter().all(|o| {
                        domain
                            .offset_node(idx, o)
                            .is_some_and(|t| domain.is_inside(t))
                    })
                });
                if full {
                    return Ok(None);
                }
                dirs.members()
                    .iter()
                    .map(|w| domain.arms(idx, w))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Some)
            })
            .collect();

        let mut kind = Vec::with_capacity(nodes.len());
        let mut near = Vec::new();
        let mut boundary_points = Vec::new();
        for (p, r) in resolved.into_iter().enumerate() {
            let Some(armsets) = r? else {
                kind.push(NodeKind::Full);
                continue;
            };
            if armsets.iter().any(|a| a.any_clamped()) {
                boundary_points.push(domain.coords(nodes[p]));
                kind.push(NodeKind::Slaved(boundary_points.len() as u32 - 1));
                continue;
            }
            let mut dirs_here = Vec::with_capacity(armsets.len());
            for set in &armsets {
                let mut sources = [Source::Node(0); 4];
                for (k, arm) in set.arms.iter().enumerate() {
                    sources[k] = match arm.target {
                        ArmTarget::Node(t) => Source::Node(t),
                        ArmTarget::Boundary(pt) => {
                            boundary_points.push(pt);
                            Source::Boundary(boundary_points.len() as u32 - 1)
                        }
                    };
                }
                let l = |k: usize| set.arms[k].length;
                let (wp, wm, cw) = second_difference_weights(l(0), l(1));
                let (vp, vm, cv) = second_difference_weights(l(2), l(3));
                dirs_here.push(NearDir {
                    weights: [wp / 4.0, wm / 4.0, vp / 4.0, vm / 4.0],
                    sources,
                    center: (cw + cv) / 4.0,
                });
            }
            near.push(dirs_here);
            kind.push(NodeKind::Near(near.len() as u32 - 1));
        }

        Ok(Self {
            domain,
            dirs,
            nodes,
            pos,
            offsets,
            len2,
            kind,
            near,
            boundary_points,
        })
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.dirs
    }

    /// Lattice indices of the unknowns in lexicographic order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of a lattice node among the unknowns.
    pub fn position(&self, idx: usize) -> Option<usize> {
        self.pos
            .get(idx)
            .copied()
            .filter(|&p| p != NONE)
            .map(|p| p as usize)
    }

    pub fn boundary_points(&self) -> &[Point] {
        &self.boundary_points
    }

    pub fn has_full_arms(&self, p: usize) -> bool {
        self.kind[p] == NodeKind::Full
    }

    pub fn is_slaved(&self, p: usize) -> bool {
        matches!(self.kind[p], NodeKind::Slaved(_))
    }

    pub fn slaved_count(&self) -> usize {
        (0..self.len()).filter(|&p| self.is_slaved(p)).count()
    }

    pub fn coords(&self, p: usize) -> Point {
        self.domain.coords(self.nodes[p])
    }

    /// Index of `e_j`; coordinate directions lead every direction set.
    #[inline]
    fn coordinate_direction(&self, j: usize) -> usize {
        debug_assert!(self.dirs.members()[j].is_coordinate());
        j
    }

    fn check(&self, u: &GridFunction) -> Result<(), SchemeError> {
        if u.values.len() != self.domain.node_count()
            || u.boundary.len() != self.boundary_points.len()
        {
            return Err(SchemeError::Shape(format!(
                "{} values / {} boundary points, expected {} / {}",
                u.values.len(),
                u.boundary.len(),
                self.domain.node_count(),
                self.boundary_points.len()
            )));
        }
        Ok(())
    }

    #[inline]
    fn source(&self, u: &GridFunction, s: Source) -> f64 {
        match s {
            Source::Node(t) => u.values[t],
            Source::Boundary(b) => u.boundary[b as usize],
        }
    }

    /// `(A_w, c_w)` with `E_w = A_w - c_w u(z)`.
    #[inline]
    fn affine_parts(&self, u: &GridFunction, p: usize, d: usize) -> (f64, f64) {
        match self.kind[p] {
            NodeKind::Full => {
                let idx = self.nodes[p] as isize;
                let o = &self.offsets[d];
                let v = &u.values;
                let s = v[(idx + o[0]) as usize]
                    + v[(idx + o[1]) as usize]
                    + v[(idx + o[2]) as usize]
                    + v[(idx + o[3]) as usize];
                (s / (4.0 * self.len2[d]), 1.0 / self.len2[d])
            }
            NodeKind::Near(k) => {
                let nd = &self.near[k as usize][d];
                let a = (0..4)
                    .map(|i| nd.weights[i] * self.source(u, nd.sources[i]))
                    .sum();
                (a, nd.center)
            }
            NodeKind::Slaved(_) => (f64::NAN, f64::NAN),
        }
    }

    /// Directional value `E_w` at unknown `p` for direction index `d`.
    pub fn directional_value(
        &self,
        u: &GridFunction,
        p: usize,
        d: usize,
    ) -> Result<DirectionalEstimate, SchemeError> {
        self.check(u)?;
        if p >= self.len() || self.is_slaved(p) {
            return Err(SchemeError::NotUnknown(self.nodes.get(p).copied().unwrap_or(p)));
        }
        let (a, c) = self.affine_parts(u, p, d);
        let center = u.values[self.nodes[p]];
        Ok(DirectionalEstimate {
            direction: self.dirs.members()[d],
            value: a - c * center,
            center: c,
            neighbors: a,
        })
    }

    fn min_directional(&self, u: &GridFunction, p: usize) -> f64 {
        let center = u.values[self.nodes[p]];
        (0..self.dirs.len())
            .map(|d| {
                let (a, c) = self.affine_parts(u, p, d);
                a - c * center
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `S_h u` at every unknown; NaN at slaved nodes.
    pub fn apply_lambda1(&self, u: &GridFunction) -> Result<Vec<f64>, SchemeError> {
        self.check(u)?;
        Ok((0..self.len())
            .into_par_iter()
            .map(|p| {
                if self.is_slaved(p) {
                    f64::NAN
                } else {
                    self.min_directional(u, p)
                }
            })
            .collect())
    }

    /// Value of `u(z)` solving `min_w E_w = f` with all other values fixed.
    /// Slaved nodes return their boundary datum.
    #[inline]
    pub fn node_solve(&self, u: &GridFunction, p: usize, f: f64) -> f64 {
        match self.kind[p] {
            NodeKind::Full => {
                let idx = self.nodes[p] as isize;
                let v = &u.values;
                let mut best = f64::INFINITY;
                for (o, &l2) in self.offsets.iter().zip(&self.len2) {
                    let s = v[(idx + o[0]) as usize]
                        + v[(idx + o[1]) as usize]
                        + v[(idx + o[2]) as usize]
                        + v[(idx + o[3]) as usize];
                    best = best.min(0.25 * s - f * l2);
                }
                best
            }
            NodeKind::Near(_) => (0..self.dirs.len())
                .map(|d| {
                    let (a, c) = self.affine_parts(u, p, d);
                    (a - f) / c
                })
                .fold(f64::INFINITY, f64::min),
            NodeKind::Slaved(b) => u.boundary[b as usize],
        }
    }

    /// Discrete Laplace update over the coordinate directions only.
    #[inline]
    pub fn star_solve(&self, u: &GridFunction, p: usize) -> f64 {
        if let NodeKind::Slaved(b) = self.kind[p] {
            return u.boundary[b as usize];
        }
        let mut a_sum = 0.0;
        let mut c_sum = 0.0;
        for j in 0..self.domain.dim() {
            let (a, c) = self.affine_parts(u, p, self.coordinate_direction(j));
            a_sum += a;
            c_sum += c;
        }
        a_sum / c_sum
    }

    /// Star-Laplacian residual `sum_j E_{e_j}` at unknown `p`.
    pub fn star_value(&self, u: &GridFunction, p: usize) -> f64 {
        let center = u.values[self.nodes[p]];
        (0..self.domain.dim())
            .map(|j| {
                let (a, c) = self.affine_parts(u, p, self.coordinate_direction(j));
                a - c * center
            })
            .sum()
    }

    /// Second-order central complex Hessian; `None` without a full central
    /// stencil of inside nodes.
    pub fn central_hessian(&self, u: &GridFunction, p: usize) -> Option<HermitianMatrix> {
        let d = &self.domain;
        let idx = self.nodes[p];
        let m = 2 * d.dim();
        let h = d.spacing();
        let at = |o: [i32; 4]| -> Option<f64> {
            d.offset_node(idx, &o)
                .filter(|&t| d.is_inside(t))
                .map(|t| u.values[t])
        };
        let u0 = u.values[idx];
        let unit = |a: usize, s: i32| {
            let mut o = [0; 4];
            o[a] = s;
            o
        };
        let mut q = vec![0.0; m * m];
        for a in 0..m {
            let up = at(unit(a, 1))?;
            let dn = at(unit(a, -1))?;
            q[a * m + a] = (up - 2.0 * u0 + dn) / (h * h);
            for b in a + 1..m {
                let mut o = [0; 4];
                let mut val = 0.0;
                for (sa, sb, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    o[a] = sa;
                    o[b] = sb;
                    val += sign * at(o)?;
                }
                q[a * m + b] = val / (4.0 * h * h);
                q[b * m + a] = q[a * m + b];
            }
        }
        let form = SymmetricForm::new(m, &q).expect("square form");
        Some(q11_part(&form).expect("even dimension"))
    }

    /// Complex Hessian reconstructed from directional values along
    /// `e1, e2, (1,1), (1,-1), (1,i), (1,-i)`; exact on quadratics.
    pub fn directional_hessian(&self, u: &GridFunction, p: usize) -> Option<HermitianMatrix> {
        if self.is_slaved(p) {
            return None;
        }
        let center = u.values[self.nodes[p]];
        let e = |w: &[(i64, i64)]| -> Option<f64> {
            let d = self.dirs.index_of(&GaussVec::new(w))?;
            let (a, c) = self.affine_parts(u, p, d);
            Some(a - c * center)
        };
        if self.domain.dim() == 1 {
            return HermitianMatrix::diag(&[e(&[(1, 0)])?]).ok();
        }
        let h11 = e(&[(1, 0), (0, 0)])?;
        let h22 = e(&[(0, 0), (1, 0)])?;
        let re = 0.5 * (e(&[(1, 0), (1, 0)])? - e(&[(1, 0), (-1, 0)])?);
        let im = 0.5 * (e(&[(1, 0), (0, 1)])? - e(&[(1, 0), (0, -1)])?);
        let b = Complex64::new(re, im);
        HermitianMatrix::new(
            2,
            vec![Complex64::from(h11), b, b.conj(), Complex64::from(h22)],
        )
        .ok()
    }

    /// Residuals of `u` against `f` for the operator `spec`.
    pub fn residual_report(
        &self,
        u: &GridFunction,
        f: &GridFunction,
        spec: &OperatorSpec,
        tol: f64,
    ) -> Result<ResidualReport, SchemeError> {
        self.check(u)?;
        self.check(f)?;
        let lambda1 = matches!(spec.kind(), OperatorKind::Lambda1)
            || matches!(spec.kind(), OperatorKind::LambdaK(1));
        let rows: Vec<(f64, Option<f64>, bool)> = (0..self.len())
            .into_par_iter()
            .map(|p| {
                let fv = f.values[self.nodes[p]];
                let spectral = self.central_hessian(u, p).and_then(|h| evaluate(spec, &h).ok());
                if self.is_slaved(p) {
                    return (f64::NAN, spectral.map(|g| g - fv), false);
                }
                let (wide, exit) = if lambda1 {
                    (self.min_directional(u, p), false)
                } else {
                    match self
                        .directional_hessian(u, p)
                        .map(|h| evaluate(spec, &h))
                    {
                        Some(Ok(g)) => (g, false),
                        _ => (f64::NAN, true),
                    }
                };
                (wide - fv, spectral.map(|g| g - fv), exit)
            })
            .collect();

        let mut report = ResidualReport {
            tol,
            wide: Vec::with_capacity(rows.len()),
            spectral: Vec::with_capacity(rows.len()),
            max_abs_wide: 0.0,
            mean_abs_wide: 0.0,
            max_abs_spectral: 0.0,
            mean_abs_spectral: 0.0,
            wide_nodes: 0,
            spectral_nodes: 0,
            cone_exits: 0,
            subsolution: true,
            supersolution: true,
            worst_sub: None,
            worst_super: None,
        };
        let mut sum_w = 0.0;
        let mut sum_s = 0.0;
        for (p, (w, s, exit)) in rows.into_iter().enumerate() {
            let fv = f.values[self.nodes[p]];
            if exit {
                report.cone_exits += 1;
                report.subsolution = false;
                if report.worst_sub.is_none() {
                    report.worst_sub = Some((p, f64::NEG_INFINITY));
                }
            } else if w.is_finite() {
                report.wide_nodes += 1;
                sum_w += w.abs();
                report.max_abs_wide = report.max_abs_wide.max(w.abs());
                if w < -tol {
                    report.subsolution = false;
                }
                if report.worst_sub.is_none_or(|(_, v)| w < v) {
                    report.worst_sub = Some((p, w));
                }
                // [S_h u]^+ - f
                let excess = (w + fv).max(0.0) - fv;
                if excess > tol {
                    report.supersolution = false;
                }
                if report.worst_super.is_none_or(|(_, v)| excess > v) {
                    report.worst_super = Some((p, excess));
                }
            }
            if let Some(s) = s {
                report.spectral_nodes += 1;
                sum_s += s.abs();
                report.max_abs_spectral = report.max_abs_spectral.max(s.abs());
            }
            report.wide.push(w);
            report.spectral.push(s);
        }
        if report.wide_nodes > 0 {
            report.mean_abs_wide = sum_w / report.wide_nodes as f64;
        }
        if report.spectral_nodes > 0 {
            report.mean_abs_spectral = sum_s / report.spectral_nodes as f64;
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalEstimate {
    pub direction: GaussVec,
    pub value: f64,
    pub center: f64,
    pub neighbors: f64,
}

/// Values on a stencil: one per lattice node (meaningful at unknowns) and one
/// per boundary point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
    boundary: Vec<f64>,
}

impl GridFunction {
    pub fn sample(stencil: &Stencil, f: impl Fn(&Point) -> f64 + Sync) -> Self {
        Self::try_sample(stencil, |p| Ok::<_, EvalError>(f(p))).expect("infallible")
    }

    pub fn try_sample<E>(
        stencil: &Stencil,
        f: impl Fn(&Point) -> Result<f64, E> + Sync,
    ) -> Result<Self, (Point, E)>
    where
        E: Send,
    {
        let d = stencil.domain();
        let mut values = vec![0.0; d.node_count()];
        let inner: Vec<Result<f64, (Point, E)>> = stencil
            .nodes()
            .par_iter()
            .map(|&idx| {
                let p = d.coords(idx);
                f(&p).map_err(|e| (p, e))
            })
            .collect();
        for (&idx, v) in stencil.nodes().iter().zip(inner) {
            values[idx] = v?;
        }
        let boundary = stencil
            .boundary_points()
            .par_iter()
            .map(|p| f(p).map_err(|e| (*p, e)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { values, boundary })
    }

    pub fn from_expr(stencil: &Stencil, e: &Expr) -> Result<Self, SchemeError> {
        let n = stencil.domain().dim();
        Self::try_sample(stencil, |p| e.eval_at(&p[..2 * n])).map_err(|(p, source)| {
            SchemeError::Sample {
                point: p[..2 * n].to_vec(),
                source,
            }
        })
    }

    /// Interior values from `interior`, boundary data from `boundary`.
    pub fn with_boundary(interior: &GridFunction, boundary: &GridFunction) -> Self {
        Self {
            values: interior.values.clone(),
            boundary: boundary.boundary.clone(),
        }
    }

    /// Builds from per-unknown values (stencil order) and boundary values.
    pub fn from_parts(
        stencil: &Stencil,
        unknowns: &[f64],
        boundary: Vec<f64>,
    ) -> Result<Self, SchemeError> {
        if unknowns.len() != stencil.len() || boundary.len() != stencil.boundary_points().len() {
            return Err(SchemeError::Shape(format!(
                "{} unknowns / {} boundary values, expected {} / {}",
                unknowns.len(),
                boundary.len(),
                stencil.len(),
                stencil.boundary_points().len()
            )));
        }
        let mut values = vec![0.0; stencil.domain().node_count()];
        for (&idx, &v) in stencil.nodes().iter().zip(unknowns) {
            values[idx] = v;
        }
        Ok(Self { values, boundary })
    }

    pub fn at_node(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set_node(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn boundary_mut(&mut self) -> &mut [f64] {
        &mut self.boundary
    }

    pub fn lattice_values(&self) -> &[f64] {
        &self.values
    }

    /// Values at the unknowns in stencil order.
    pub fn unknowns(&self, stencil: &Stencil) -> Vec<f64> {
        stencil.nodes().iter().map(|&i| self.values[i]).collect()
    }

    /// `self + c` at unknowns and boundary points alike.
    pub fn add_constant(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            boundary: self.boundary.iter().map(|v| v + c).collect(),
        }
    }

    /// Pointwise `self + g(x)` at unknowns and boundary points.
    pub fn add_field(&self, stencil: &Stencil, g: impl Fn(&Point) -> f64 + Sync) -> Self {
        let other = GridFunction::sample(stencil, g);
        self.zip_with(&other, |a, b| a + b)
    }

    pub fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| op(a, b))
                .collect(),
            boundary: self
                .boundary
                .iter()
                .zip(&other.boundary)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub tol: f64,
    /// Wide-stencil residual per unknown (`NaN` at slaved nodes and cone exits).
    pub wide: Vec<f64>,
    /// Central-Hessian residual where the central stencil fits.
    pub spectral: Vec<Option<f64>>,
    pub max_abs_wide: f64,
    pub mean_abs_wide: f64,
    pub max_abs_spectral: f64,
    pub mean_abs_spectral: f64,
    pub wide_nodes: usize,
    pub spectral_nodes: usize,
    /// Nodes whose reconstructed Hessian left the closed cone.
    pub cone_exits: usize,
    pub subsolution: bool,
    pub supersolution: bool,
    /// Unknown with the smallest wide residual.
    pub worst_sub: Option<(usize, f64)>,
    /// Unknown with the largest `[S_h u]^+ - f`.
    pub worst_super: Option<(usize, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::random::rng;
    use rand::Rng;

    fn ball(n: usize, h: f64, width: u32) -> Stencil {
        let half = 1.0 + 2.0 * h;
        let d = GridDomain::build(n, h, parse("t - 1").unwrap(), &vec![(-half, half); 2 * n]).unwrap();
        Stencil::new(d, DirectionSet::new(n, width)).unwrap()
    }

    fn quad(p: &Point) -> f64 {
        p.iter().map(|x| x * x).sum()
    }

    #[test]
    fn directional_values_on_quadratics() {
        let s = ball(2, 0.25, 1);
        let u = GridFunction::sample(&s, quad);
        let v = GridFunction::sample(&s, |p| p[0] * p[0] + p[1] * p[1]);
        let e2 = s.directions().index_of(&GaussVec::new(&[(0, 0), (1, 0)])).unwrap();
        for p in 0..s.len() {
            for d in 0..s.directions().len() {
                let est = s.directional_value(&u, p, d).unwrap();
                assert!((est.value - 1.0).abs() < 1e-12, "{est:?}");
                assert!(est.center > 0.0);
            }
            assert!(s.directional_value(&v, p, e2).unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn pluriharmonic_fields_vanish() {
        let s = ball(1, 0.125, 1);
        let u = GridFunction::sample(&s, |p| p[0] * p[0] - p[1] * p[1]);
        let a = GridFunction::sample(&s, |p| 3.0 + 0.5 * p[0] - 2.0 * p[1]);
        for v in s.apply_lambda1(&u).unwrap().into_iter().chain(s.apply_lambda1(&a).unwrap()) {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn anisotropic_quadratic_picks_e1() {
        let s = ball(2, 0.25, 1);
        let u = GridFunction::sample(&s, |p| p[0] * p[0] + p[1] * p[1] + 2.0 * (p[2] * p[2] + p[3] * p[3]));
        for v in s.apply_lambda1(&u).unwrap() {
            assert!((v - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn node_solve_examples() {
        let s = ball(2, 0.25, 1);
        let u = GridFunction::sample(&s, quad);
        let shifted = u.add_constant(0.75);
        for p in 0..s.len() {
            let exact = quad(&s.coords(p));
            let got = s.node_solve(&u, p, 1.0);
            assert!((got - exact).abs() < 1e-12);
            let lower = s.node_solve(&u, p, 1.5);
            let cmax = (0..s.directions().len())
                .map(|d| s.directional_value(&u, p, d).unwrap().center)
                .fold(0.0, f64::max);
            assert!(got - lower >= 0.5 / cmax - 1e-12);
            assert!((s.node_solve(&shifted, p, 1.0) - got - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn node_solve_zeroes_the_local_residual() {
        let s = ball(1, 0.125, 1);
        let mut u = GridFunction::sample(&s, |p| (3.0 * p[0]).sin() + p[1]);
        for p in 0..s.len() {
            let idx = s.nodes()[p];
            let v = s.node_solve(&u, p, 0.7);
            u.set_node(idx, v);
            let e = s.apply_lambda1(&u).unwrap()[p];
            assert!((e - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn central_hessian_examples() {
        let s = ball(2, 0.25, 1);
        let center = s.position(s.domain().inside_nodes().into_iter().find(|&i| s.domain().coords(i) == [0.0; 4]).unwrap()).unwrap();
        let u = GridFunction::sample(&s, |p| p[0] * p[0] + p[1] * p[1]);
        let h = s.central_hessian(&u, center).unwrap();
        assert!((&h - &HermitianMatrix::diag(&[1.0, 0.0]).unwrap()).frobenius_norm() < 1e-12);
        let u = GridFunction::sample(&s, |p| p[0] * p[2] + p[1] * p[3]);
        let h = s.central_hessian(&u, center).unwrap();
        let ev = crate::hermitian::eigenvalues(&h);
        assert!((ev[0] + 0.5).abs() < 1e-12 && (ev[1] - 0.5).abs() < 1e-12);
        let u = GridFunction::sample(&s, |p| p[0] * p[0] - p[1] * p[1]);
        assert!(s.central_hessian(&u, center).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn directional_hessian_is_exact_on_quadratics() {
        let s = ball(2, 0.25, 1);
        // u = |z1|^2 + 2|z2|^2 + 2 Re(b conj(z1) z2) has H12 = conj(b).
        let u = GridFunction::sample(&s, |p| {
            let (x1, y1, x2, y2) = (p[0], p[1], p[2], p[3]);
            let (br, bi) = (0.3, -0.2);
            // 2 Re(b * conj(z1) * z2)
            let re = (x1 * x2 + y1 * y2) * br - (x1 * y2 - y1 * x2) * bi;
            x1 * x1 + y1 * y1 + 2.0 * (x2 * x2 + y2 * y2) + 2.0 * re
        });
        let expected = HermitianMatrix::new(
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.3, 0.2),
                Complex64::new(0.3, -0.2),
                Complex64::new(2.0, 0.0),
            ],
        )
        .unwrap();
        for p in 0..s.len() {
            if s.is_slaved(p) {
                continue;
            }
            let h = s.directional_hessian(&u, p).unwrap();
            assert!((&h - &expected).frobenius_norm() < 1e-10, "{h:?}");
            if let Some(c) = s.central_hessian(&u, p) {
                assert!((&c - &expected).frobenius_norm() < 1e-10);
            }
        }
    }

    #[test]
    fn quadratic_shift_identity() {
        let s = ball(2, 0.25, 2);
        let u = GridFunction::sample(&s, |p| (p[0] + 2.0 * p[3]).exp() + p[1] * p[2]);
        let base = s.apply_lambda1(&u).unwrap();
        let z0 = [0.1, -0.2, 0.3, 0.05];
        for eps in [1e-2, 1e-1] {
            let shifted = u.add_field(&s, |p| {
                -0.5 * eps * (0..4).map(|a| (p[a] - z0[a]).powi(2)).sum::<f64>()
            });
            let after = s.apply_lambda1(&shifted).unwrap();
            for p in 0..s.len() {
                if s.has_full_arms(p) {
                    assert!((after[p] - (base[p] - 0.5 * eps)).abs() < 1e-12 * (1.0 + base[p].abs()) * 10.0);
                }
            }
        }
    }

    #[test]
    fn monotone_in_neighbour_values() {
        let s = ball(2, 0.25, 1);
        let mut r = rng(9);
        let u = GridFunction::sample(&s, |p| p[0].sin() + p[3] * p[2]);
        for _ in 0..20 {
            let bump: Vec<f64> = (0..s.len()).map(|_| r.random_range(0.0..0.1)).collect();
            let bb: Vec<f64> = (0..s.boundary_points().len()).map(|_| r.random_range(0.0..0.1)).collect();
            let p0 = r.random_range(0..s.len());
            let mut unknowns = u.unknowns(&s);
            for (v, b) in unknowns.iter_mut().zip(&bump) {
                *v += b;
            }
            unknowns[p0] = u.unknowns(&s)[p0];
            let boundary: Vec<f64> = u.boundary().iter().zip(&bb).map(|(a, b)| a + b).collect();
            let v = GridFunction::from_parts(&s, &unknowns, boundary).unwrap();
            if s.is_slaved(p0) {
                continue;
            }
            assert!(s.apply_lambda1(&u).unwrap()[p0] <= s.apply_lambda1(&v).unwrap()[p0] + 1e-12);
        }
    }

    #[test]
    fn upper_bound_by_first_coordinate_direction() {
        let s = ball(2, 0.25, 2);
        let u = GridFunction::sample(&s, |p| (p[0] * p[1]).cos() + p[2].powi(3));
        let sh = s.apply_lambda1(&u).unwrap();
        for p in 0..s.len() {
            if !s.is_slaved(p) {
                assert!(sh[p] <= s.directional_value(&u, p, 0).unwrap().value + 1e-15);
            }
        }
    }

    #[test]
    fn residual_report_verdicts() {
        let s = ball(2, 0.25, 1);
        let spec = OperatorSpec::lambda1(2);
        let f = GridFunction::sample(&s, |_| 1.0);
        let u = GridFunction::sample(&s, quad);
        let r = s.residual_report(&u, &f, &spec, 1e-9).unwrap();
        assert!(r.max_abs_wide <= 1e-10 && r.subsolution && r.supersolution);
        assert!(r.spectral_nodes > 0 && r.max_abs_spectral < 1e-10);
        let strict = GridFunction::sample(&s, |p| 2.0 * quad(p));
        let r = s.residual_report(&strict, &f, &spec, 1e-9).unwrap();
        assert!(r.subsolution && !r.supersolution);
        let harmonic = GridFunction::sample(&s, |p| p[0] * p[0] - p[1] * p[1] + p[2]);
        let r = s.residual_report(&harmonic, &f, &spec, 1e-9).unwrap();
        assert!(!r.subsolution && r.supersolution);
    }

    #[test]
    fn consistency_improves_under_refinement() {
        let field = |p: &Point| (0.5 * p[0]).exp() * (1.0 + 0.3 * p[1] * p[1]) + 0.2 * p[2] * p[3];
        let mut errs = Vec::new();
        for h in [0.125, 0.0625] {
            let d = GridDomain::build(2, h, parse("t - 0.25").unwrap(), &[(-0.75, 0.75); 4]).unwrap();
            let s = Stencil::new(d, DirectionSet::new(2, 1)).unwrap();
            let u = GridFunction::sample(&s, field);
            let center = s.position(s.domain().inside_nodes().into_iter().find(|&i| s.domain().coords(i) == [0.0; 4]).unwrap()).unwrap();
            let h_c = s.central_hessian(&u, center).unwrap();
            // The x2*y2 term is pluriharmonic.
            let exact = HermitianMatrix::diag(&[(0.25 + 0.6) / 4.0, 0.0]).unwrap();
            errs.push((&h_c - &exact).frobenius_norm());
        }
        assert!(errs[1] < errs[0] || errs[0] < 1e-12);
        if errs[0] > 1e-12 {
            assert!((errs[0] / errs[1]).log2() >= 1.8);
        }
    }
}
