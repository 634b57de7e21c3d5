//! Uniform lattices over `R^{2n}` (`n = 1, 2`), level-set domains and the
//! Gaussian-integer direction sets used by the wide stencil.
//!
//! A domain is `{level < 0}` for a user expression `level`. Lattice nodes are
//! `lo + h * i` per axis with coordinates ordered `(x1, y1, x2, y2)`.

use std::collections::HashMap;
use std::sync::RwLock;

use thiserror::Error;

use crate::expr::{EvalError, Expr};

/// Crossings closer than this fraction of the arm are clamped.
pub const MIN_ARM_FRACTION: f64 = 1e-8;
/// Required `|level|` at a computed boundary crossing.
pub const CROSSING_TOL: f64 = 1e-10;
const BISECTION_ITERS: usize = 60;
const CROSSING_SCAN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("complex dimension {0} unsupported by the grid (use 1 or 2)")]
    BadDimension(usize),
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("bounding box needs {expected} axis ranges with lo < hi, got {got:?}")]
    BadBox { expected: usize, got: Vec<(f64, f64)> },
    #[error("domain has no interior lattice nodes")]
    EmptyInterior,
    #[error("domain reaches the bounding box at node {0:?}")]
    BoxTooSmall(Vec<f64>),
    #[error("level expression failed: {0}")]
    Level(#[from] EvalError),
    #[error("node {0} is not an interior node")]
    NotInterior(usize),
    #[error("no sign change of the level function along the segment")]
    NoSignChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Exterior,
    /// In the domain with all axis neighbours in the domain too.
    Interior,
    /// In the domain with at least one axis neighbour outside it.
    BoundaryAdjacent,
}

impl NodeClass {
    pub fn is_inside(self) -> bool {
        self != NodeClass::Exterior
    }
}

pub type Point = [f64; 4];

#[derive(Debug)]
pub struct GridDomain {
    n: usize,
    h: f64,
    bbox: Vec<(f64, f64)>,
    level: Expr,
    dims: Vec<usize>,
    strides: Vec<usize>,
    class: Vec<NodeClass>,
    crossings: RwLock<HashMap<(usize, [i32; 4]), f64>>,
}

impl GridDomain {
    /// Lattice with spacing `h` over `bbox` (one `(lo, hi)` per real axis)
    /// masked by `level < 0`.
    pub fn build(n: usize, h: f64, level: Expr, bbox: &[(f64, f64)]) -> Result<Self, GridError> {
        if !(1..=2).contains(&n) {
            return Err(GridError::BadDimension(n));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadSpacing(h));
        }
        if bbox.len() != 2 * n || bbox.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(GridError::BadBox {
                expected: 2 * n,
                got: bbox.to_vec(),
            });
        }
        let dims: Vec<usize> = bbox
            .iter()
            .map(|&(lo, hi)| ((hi - lo) / h + 1e-9).floor() as usize + 1)
            .collect();
        let mut strides = vec![1; 2 * n];
        for a in (0..2 * n - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let total = strides[0] * dims[0];
        let mut domain = Self {
            n,
            h,
            bbox: bbox.to_vec(),
            level,
            dims,
            strides,
            class: vec![NodeClass::Exterior; total],
            crossings: RwLock::new(HashMap::new()),
        };

        let mut inside = vec![false; total];
        for (idx, flag) in inside.iter_mut().enumerate() {
            let p = domain.coords(idx);
            *flag = domain.level_at(&p)? < 0.0;
        }
        if !inside.iter().any(|&b| b) {
            return Err(GridError::EmptyInterior);
        }
        for idx in 0..total {
            if !inside[idx] {
                continue;
            }
            let multi = domain.multi_index(idx);
            let mut all_axis_inside = true;
            for a in 0..2 * n {
                if multi[a] == 0 || multi[a] + 1 == domain.dims[a] {
                    return Err(GridError::BoxTooSmall(domain.coords(idx)[..2 * n].to_vec()));
                }
                all_axis_inside &=
                    inside[idx - domain.strides[a]] && inside[idx + domain.strides[a]];
            }
            domain.class[idx] = if all_axis_inside {
                NodeClass::Interior
            } else {
                NodeClass::BoundaryAdjacent
            };
        }
        Ok(domain)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn bbox(&self) -> &[(f64, f64)] {
        &self.bbox
    }

    pub fn level(&self) -> &Expr {
        &self.level
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn node_count(&self) -> usize {
        self.class.len()
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }

    pub fn is_inside(&self, idx: usize) -> bool {
        self.class[idx].is_inside()
    }

    /// Inside nodes in lexicographic order.
    pub fn inside_nodes(&self) -> Vec<usize> {
        (0..self.class.len()).filter(|&i| self.is_inside(i)).collect()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 4] {
        let mut out = [0; 4];
        let mut rem = idx;
        for a in 0..2 * self.n {
            out[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
        out
    }

    /// Coordinates of a node; unused trailing axes are zero.
    pub fn coords(&self, idx: usize) -> Point {
        let multi = self.multi_index(idx);
        let mut p = [0.0; 4];
        for a in 0..2 * self.n {
            p[a] = self.bbox[a].0 + self.h * multi[a] as f64;
        }
        p
    }

    pub fn level_at(&self, p: &Point) -> Result<f64, EvalError> {
        self.level.eval_at(&p[..2 * self.n])
    }

    /// Node reached from `idx` by a lattice offset, if it lies on the lattice.
    pub fn offset_node(&self, idx: usize, offset: &[i32; 4]) -> Option<usize> {
        let multi = self.multi_index(idx);
        let mut target = 0usize;
        for a in 0..2 * self.n {
            let m = multi[a] as i64 + offset[a] as i64;
            if m < 0 || m >= self.dims[a] as i64 {
                return None;
            }
            target += m as usize * self.strides[a];
        }
        Some(target)
    }

    /// First crossing `rho` of `level = 0` along `z + s d`, `s in (0, 1]`.
    pub fn boundary_crossing(&self, z: &Point, d: &Point) -> Result<f64, GridError> {
        let at = |s: f64| -> Result<f64, GridError> {
            let mut p = [0.0; 4];
            for a in 0..4 {
                p[a] = z[a] + s * d[a];
            }
            Ok(self.level_at(&p)?)
        };
        if !(at(0.0)? < 0.0) || !(at(1.0)? >= 0.0) {
            return Err(GridError::NoSignChange);
        }
        // Locate the first sign change on a coarse scan, then bisect.
        let mut lo = 0.0;
        let mut hi = 1.0;
        for k in 1..=CROSSING_SCAN {
            let s = k as f64 / CROSSING_SCAN as f64;
            if at(s)? >= 0.0 {
                hi = s;
                break;
            }
            lo = s;
        }
        let mut f_hi = at(hi)?;
        let mut f_lo = at(lo)?;
        for _ in 0..BISECTION_ITERS {
            if f_hi == 0.0 || hi - lo <= f64::EPSILON * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let fm = at(mid)?;
            if fm >= 0.0 {
                hi = mid;
                f_hi = fm;
            } else {
                lo = mid;
                f_lo = fm;
            }
        }
        let rho = if f_hi.abs() <= f_lo.abs() || lo == 0.0 { hi } else { lo };
        Ok(rho)
    }

    /// Cached crossing from node `idx` along the lattice offset.
    pub fn cached_crossing(&self, idx: usize, offset: &[i32; 4]) -> Result<f64, GridError> {
        let key = (idx, *offset);
        if let Some(&rho) = self.crossings.read().expect("crossing cache poisoned").get(&key) {
            return Ok(rho);
        }
        let z = self.coords(idx);
        let mut d = [0.0; 4];
        for a in 0..4 {
            d[a] = self.h * offset[a] as f64;
        }
        let rho = self.boundary_crossing(&z, &d)?;
        self.crossings
            .write()
            .expect("crossing cache poisoned")
            .entry(key)
            .or_insert(rho);
        Ok(rho)
    }

    pub fn cached_crossing_count(&self) -> usize {
        self.crossings.read().expect("crossing cache poisoned").len()
    }

    /// Resolves the four arms `z +- h w`, `z +- i h w` of `w` at `node`.
    pub fn arms(&self, node: usize, w: &GaussVec) -> Result<ArmSet, GridError> {
        if !self.is_inside(node) {
            return Err(GridError::NotInterior(node));
        }
        let z = self.coords(node);
        let base = w.real_offset();
        let rot = w.times_i().real_offset();
        let neg = |o: [i32; 4]| o.map(|x| -x);
        let unit_len = self.h * w.norm();
        let offsets = [base, neg(base), rot, neg(rot)];
        let mut arms = Vec::with_capacity(4);
        for offset in offsets {
            let arm = match self.offset_node(node, &offset).filter(|&t| self.is_inside(t)) {
                Some(t) => Arm {
                    target: ArmTarget::Node(t),
                    rho: 1.0,
                    length: unit_len,
                    clamped: false,
                },
                None => {
                    let rho = self.cached_crossing(node, &offset)?;
                    let clamped = rho < MIN_ARM_FRACTION;
                    let rho = rho.max(MIN_ARM_FRACTION);
                    let mut p = z;
                    for a in 0..2 * self.n {
                        p[a] += rho * self.h * offset[a] as f64;
                    }
                    Arm {
                        target: ArmTarget::Boundary(p),
                        rho,
                        length: rho * unit_len,
                        clamped,
                    }
                }
            };
            arms.push(arm);
        }
        Ok(ArmSet {
            arms: arms.try_into().expect("four arms"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmTarget {
    Node(usize),
    /// A point on the boundary of the domain.
    Boundary(Point),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub target: ArmTarget,
    /// Fraction of the full arm, in `(0, 1]`.
    pub rho: f64,
    /// Absolute length `rho * h * |w|`.
    pub length: f64,
    /// The raw crossing was below [`MIN_ARM_FRACTION`].
    pub clamped: bool,
}

/// Arms in the order `+w, -w, +iw, -iw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSet {
    pub arms: [Arm; 4],
}

impl ArmSet {
    pub fn all_full(&self) -> bool {
        self.arms.iter().all(|a| matches!(a.target, ArmTarget::Node(_)))
    }

    pub fn any_clamped(&self) -> bool {
        self.arms.iter().any(|a| a.clamped)
    }
}

/// A Gaussian integer `re + i im`.
pub type Gauss = (i64, i64);

fn g_mul(a: Gauss, b: Gauss) -> Gauss {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn g_norm(a: Gauss) -> i64 {
    a.0 * a.0 + a.1 * a.1
}

/// Exact division `a / b` rounded to the nearest Gaussian integer.
fn g_div_round(a: Gauss, b: Gauss) -> Gauss {
    let nb = g_norm(b);
    let num = g_mul(a, (b.0, -b.1));
    let round = |x: i64| -> i64 { (x as f64 / nb as f64).round() as i64 };
    (round(num.0), round(num.1))
}

fn g_gcd(mut a: Gauss, mut b: Gauss) -> Gauss {
    while b != (0, 0) {
        let q = g_div_round(a, b);
        let qb = g_mul(q, b);
        let r = (a.0 - qb.0, a.1 - qb.1);
        a = b;
        b = r;
    }
    a
}

/// A nonzero vector in `Z[i]^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GaussVec {
    n: usize,
    entries: [Gauss; 2],
}

impl GaussVec {
    pub fn new(entries: &[Gauss]) -> Self {
        assert!((1..=2).contains(&entries.len()), "grid directions need n = 1 or 2");
        let mut e = [(0, 0); 2];
        e[..entries.len()].copy_from_slice(entries);
        Self {
            n: entries.len(),
            entries: e,
        }
    }

    pub fn entries(&self) -> &[Gauss] {
        &self.entries[..self.n]
    }

    pub fn is_zero(&self) -> bool {
        self.entries().iter().all(|&e| e == (0, 0))
    }

    pub fn norm_sqr(&self) -> i64 {
        self.entries().iter().map(|&e| g_norm(e)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sqr() as f64).sqrt()
    }

    pub fn times(&self, c: Gauss) -> Self {
        let mut out = *self;
        for e in out.entries[..self.n].iter_mut() {
            *e = g_mul(*e, c);
        }
        out
    }

    pub fn times_i(&self) -> Self {
        self.times((0, 1))
    }

    /// Real lattice offset `(Re w1, Im w1, Re w2, Im w2)`.
    pub fn real_offset(&self) -> [i32; 4] {
        let mut o = [0; 4];
        for (j, &(re, im)) in self.entries().iter().enumerate() {
            o[2 * j] = re as i32;
            o[2 * j + 1] = im as i32;
        }
        o
    }

    pub fn is_coordinate(&self) -> bool {
        self.entries().iter().filter(|&&e| e != (0, 0)).count() == 1
    }

    /// Canonical representative of the complex line `C w`: the primitive
    /// Gaussian vector on the line, rotated by a unit so its first nonzero
    /// entry has positive real part and nonnegative imaginary part.
    pub fn canonical(&self) -> Self {
        assert!(!self.is_zero(), "zero direction");
        let g = self
            .entries()
            .iter()
            .fold((0, 0), |acc, &e| g_gcd(acc, e));
        let mut out = *self;
        for e in out.entries[..self.n].iter_mut() {
            let q = g_div_round(*e, g);
            debug_assert_eq!(g_mul(q, g), *e);
            *e = q;
        }
        let first = *out.entries().iter().find(|&&e| e != (0, 0)).expect("nonzero");
        let unit = [(1, 0), (0, 1), (-1, 0), (0, -1)]
            .into_iter()
            .find(|&u| {
                let r = g_mul(first, u);
                r.0 > 0 && r.1 >= 0
            })
            .expect("some unit rotates into the first quadrant");
        out.times(unit)
    }
}

/// Canonical lattice directions for the wide stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    n: usize,
    width: u32,
    members: Vec<GaussVec>,
}

impl DirectionSet {
    /// All complex lines through Gaussian vectors whose entries satisfy
    /// `|Re| + |Im| <= width`, one canonical member per line. The coordinate
    /// directions come first, in order `e1, .., en`.
    pub fn new(n: usize, width: u32) -> Self {
        assert!((1..=2).contains(&n), "grid directions need n = 1 or 2");
        let w = width.max(1) as i64;
        let mut entries = Vec::new();
        for re in -w..=w {
            for im in -w..=w {
                if re.abs() + im.abs() <= w {
                    entries.push((re, im));
                }
            }
        }
        let mut members: Vec<GaussVec> = Vec::new();
        let mut push = |v: GaussVec| {
            if !v.is_zero() {
                let c = v.canonical();
                if !members.contains(&c) {
                    members.push(c);
                }
            }
        };
        if n == 1 {
            for &a in &entries {
                push(GaussVec::new(&[a]));
            }
        } else {
            for &a in &entries {
                for &b in &entries {
                    push(GaussVec::new(&[a, b]));
                }
            }
        }
        members.sort_by_key(|m| {
            let coord_rank = if m.is_coordinate() {
                m.entries().iter().position(|&e| e != (0, 0)).unwrap() as i64
            } else {
                i64::MAX
            };
            (coord_rank, m.norm_sqr(), m.entries().to_vec())
        });
        Self {
            n,
            width: width.max(1),
            members,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn members(&self) -> &[GaussVec] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, w: &GaussVec) -> bool {
        self.members.contains(&w.canonical())
    }

    pub fn index_of(&self, w: &GaussVec) -> Option<usize> {
        let c = w.canonical();
        self.members.iter().position(|m| *m == c)
    }
}

/// Shipped domains.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainPreset {
    /// `|z| < radius`.
    Ball { radius: f64 },
    /// `sum_j |z_j|^2 / a_j^2 < 1` with one semi-axis per complex coordinate.
    Ellipsoid { semi_axes: Vec<f64> },
    /// Intersection of two balls.
    TwoBalls {
        c1: Vec<f64>,
        r1: f64,
        c2: Vec<f64>,
        r2: f64,
    },
    /// `max_j |z_j| < radius`; not B-regular, no exhaustion is provided.
    Polydisc { radius: f64 },
}

fn centred_ball_level(c: &[f64], r: f64) -> String {
    let names = ["x1", "y1", "x2", "y2"];
    let terms: Vec<String> = c
        .iter()
        .zip(names)
        .map(|(ci, v)| format!("({v} - {ci:?})^2"))
        .collect();
    format!("{} - {:?}", terms.join(" + "), r * r)
}

impl DomainPreset {
    /// Level expression `level < 0` (for the given dimension).
    pub fn level_for(&self, n: usize) -> Expr {
        let src = match self {
            DomainPreset::Ball { radius } => format!("t - {:?}", radius * radius),
            DomainPreset::Ellipsoid { semi_axes } => {
                let terms: Vec<String> = (0..n)
                    .map(|j| {
                        let a = semi_axes[j.min(semi_axes.len() - 1)];
                        format!("(x{0}^2 + y{0}^2) / {1:?}", j + 1, a * a)
                    })
                    .collect();
                format!("{} - 1", terms.join(" + "))
            }
            DomainPreset::TwoBalls { c1, r1, c2, r2 } => format!(
                "max({}, {})",
                centred_ball_level(&c1[..2 * n], *r1),
                centred_ball_level(&c2[..2 * n], *r2)
            ),
            DomainPreset::Polydisc { radius } => {
                let terms: Vec<String> = (0..n)
                    .map(|j| format!("x{0}^2 + y{0}^2 - {1:?}", j + 1, radius * radius))
                    .collect();
                if n == 1 {
                    terms[0].clone()
                } else {
                    format!("max({})", terms.join(", "))
                }
            }
        };
        crate::expr::parse(&src).expect("preset expressions parse")
    }

    pub fn level(&self) -> Expr {
        self.level_for(self.dim_hint())
    }

    fn dim_hint(&self) -> usize {
        match self {
            DomainPreset::Ellipsoid { semi_axes } => semi_axes.len().clamp(1, 2),
            DomainPreset::TwoBalls { c1, .. } => (c1.len() / 2).clamp(1, 2),
            _ => 2,
        }
    }

    /// A psh exhaustion `psi` with `L1(D^2 psi) >= 1`, `psi = 0` on the
    /// boundary, for the B-regular presets.
    pub fn exhaustion_for(&self, n: usize) -> Option<Expr> {
        match self {
            DomainPreset::Ball { .. } | DomainPreset::TwoBalls { .. } => Some(self.level_for(n)),
            DomainPreset::Ellipsoid { semi_axes } => {
                let amax = semi_axes[..n.min(semi_axes.len())]
                    .iter()
                    .fold(0.0f64, |m, a| m.max(*a));
                let src = format!("{:?} * ({})", amax * amax, self.level_for(n));
                Some(crate::expr::parse(&src).expect("preset expressions parse"))
            }
            DomainPreset::Polydisc { .. } => None,
        }
    }

    pub fn exhaustion(&self) -> Option<Expr> {
        self.exhaustion_for(self.dim_hint())
    }

    pub fn is_b_regular(&self) -> bool {
        !matches!(self, DomainPreset::Polydisc { .. })
    }

    /// Half-width of a centred box containing the domain.
    fn extent(&self) -> f64 {
        match self {
            DomainPreset::Ball { radius } | DomainPreset::Polydisc { radius } => *radius,
            DomainPreset::Ellipsoid { semi_axes } => semi_axes.iter().fold(0.0, |m, a| m.max(*a)),
            DomainPreset::TwoBalls { c1, r1, .. } => {
                c1.iter().fold(0.0f64, |m, c| m.max(c.abs())) + r1
            }
        }
    }

    /// Box `[-L, L]^{2n}` with `L` a multiple of `h` at least two nodes past
    /// the domain, so the origin is a lattice node.
    pub fn bbox(&self, n: usize, h: f64) -> Vec<(f64, f64)> {
        let l = h * ((self.extent() / h - 1e-9).ceil() + 2.0);
        vec![(-l, l); 2 * n]
    }

    pub fn build(&self, n: usize, h: f64) -> Result<GridDomain, GridError> {
        GridDomain::build(n, h, self.level_for(n), &self.bbox(n, h))
    }
}
