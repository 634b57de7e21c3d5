//! Flat `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use lambda1_core::expr::{parse_for_dim, Expr};
use lambda1_core::grid::DomainPreset;
use lambda1_core::operators::{OperatorKind, OperatorSpec};
use lambda1_core::solver::{SolverOptions, SweepOrder};

/// Every accepted key with its default (`None` when there is none) and a
/// one-line description. README documents the same table.
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("n", Some("2"), "complex dimension, 1 or 2"),
    ("seed", Some("0"), "seed for sampling commands"),
    ("grid.h", Some("0.125"), "lattice spacing"),
    ("grid.box", None, "bounding box: `lo,hi` for every axis or 2*(2n) numbers"),
    ("directions.W", Some("1"), "direction-set width"),
    ("domain.preset", Some("ball(1)"), "ball(R) | ellipsoid(a1,..) | two_balls(c1,r1,c2,r2) | polydisc(R)"),
    ("domain.level", None, "custom level expression, domain is level < 0; needs grid.box"),
    ("domain.psi", None, "exhaustion for a custom domain (barrier)"),
    ("rhs.f", None, "right-hand side expression, positive on the closure"),
    ("boundary.phi", None, "boundary data expression"),
    ("boundary.phi_tilde", None, "psh extension of phi; defaults to phi"),
    ("operator.kind", Some("lambda1"), "lambda1 | lambda_k(k) | eigen_combination(a1,..) | monge_ampere | k_hessian(k) | k_monge_ampere(k) | interpolated_s(s)"),
    ("solver.tol", Some("1e-10"), "max-update stopping tolerance"),
    ("solver.max_sweeps", Some("100000"), "sweep cap"),
    ("solver.margin", Some("0.1"), "barrier scale margin"),
    ("solver.certify_tol", Some("1e-6"), "slack for sub/supersolution verdicts"),
    ("solver.residual_tol", Some("1e-9"), "residual stopping tolerance of the general solver"),
    ("solver.order", Some("alternating"), "alternating | red_black"),
    ("solve.exact", None, "exact solution expression; adds linf_error to the report"),
    ("solve.write_bounds", Some("false"), "also write barrier.csv and harmonic.csv"),
    ("verify.probe_tol", Some("1e-2"), "tolerance of the quadratic-fit probes"),
    ("compare.tol", Some("1e-9"), "slack of the comparison verdict"),
    ("compare.claimed_gap", None, "boundary gap to use instead of the measured one"),
    ("operators.list", Some("lambda1; monge_ampere"), "`;`-separated operator kinds"),
    ("operators.samples", Some("1000"), "samples per comparability estimate"),
    ("operators.trials", Some("1000"), "trials per property count"),
    ("oracle.kind", Some("radial"), "radial | quadratic"),
    ("oracle.profile", None, "radial profile f(t); defaults to rhs.f"),
    ("oracle.radius", Some("1"), "radius of the radial oracle ball"),
    ("oracle.hessian", None, "quadratic oracle: n*n real parts, row major"),
    ("oracle.hessian_im", None, "quadratic oracle: n*n imaginary parts, row major"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_pair(line)
                .map_err(|e| ConfigError(format!("line {}: {}", lineno + 1, e.0)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    /// Applies one `key=value` pair.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let Some((key, value)) = pair.split_once('=') else {
            return err(format!("expected key = value, got '{pair}'"));
        };
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return err(format!("unknown key '{key}'"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Explicitly set keys, sorted.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KEYS.iter().any(|(k, _, _)| *k == key), "undocumented key {key}");
        self.values.get(key).map(String::as_str).or_else(|| {
            KEYS.iter()
                .find(|(k, _, _)| *k == key)
                .and_then(|(_, d, _)| *d)
        })
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key).ok_or_else(|| ConfigError(format!("missing key {key}")))?;
        raw.parse()
            .map_err(|_| ConfigError(format!("{key}: cannot parse '{raw}'")))
    }

    /// Fails with every missing key listed.
    pub fn require(&self, keys: &[&str]) -> Result<()> {
        let missing: Vec<&str> = keys.iter().copied().filter(|k| self.raw(k).is_none()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            err(format!("missing required keys: {}", missing.join(", ")))
        }
    }

    pub fn dim(&self) -> Result<usize> {
        let n: usize = self.get("n")?;
        if !(1..=2).contains(&n) {
            return err(format!("n must be 1 or 2, got {n}"));
        }
        Ok(n)
    }

    pub fn expr(&self, key: &str) -> Result<Expr> {
        let n = self.dim()?;
        let src = self.raw(key).ok_or_else(|| ConfigError(format!("missing key {key}")))?;
        parse_for_dim(src, n).map_err(|e| ConfigError(format!("{key}: {e}")))
    }

    pub fn opt_expr(&self, key: &str) -> Result<Option<Expr>> {
        match self.raw(key) {
            Some(_) => self.expr(key).map(Some),
            None => Ok(None),
        }
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        let n = self.dim()?;
        let kind: OperatorKind = self
            .raw("operator.kind")
            .unwrap_or("lambda1")
            .parse()
            .map_err(|e| ConfigError(format!("operator.kind: {e}")))?;
        OperatorSpec::new(kind, n).map_err(|e| ConfigError(format!("operator.kind: {e}")))
    }

    pub fn operator_list(&self) -> Result<Vec<OperatorSpec>> {
        let n = self.dim()?;
        let raw = self.raw("operators.list").unwrap_or_default();
        raw.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                let kind: OperatorKind = s
                    .parse()
                    .map_err(|e| ConfigError(format!("operators.list: {e}")))?;
                OperatorSpec::new(kind, n).map_err(|e| ConfigError(format!("operators.list: {e}")))
            })
            .collect()
    }

    pub fn preset(&self) -> Result<DomainPreset> {
        let raw = self.raw("domain.preset").unwrap_or("ball(1)");
        parse_preset(raw, self.dim()?)
    }

    /// Parses `grid.box` into one interval per real axis.
    pub fn bbox(&self) -> Result<Option<Vec<(f64, f64)>>> {
        let Some(raw) = self.raw("grid.box") else {
            return Ok(None);
        };
        let axes = 2 * self.dim()?;
        let nums = number_list(raw).map_err(|e| ConfigError(format!("grid.box: {e}")))?;
        match nums.len() {
            2 => Ok(Some(vec![(nums[0], nums[1]); axes])),
            m if m == 2 * axes => Ok(Some(nums.chunks(2).map(|c| (c[0], c[1])).collect())),
            m => err(format!("grid.box: expected 2 or {} numbers, got {m}", 2 * axes)),
        }
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let order = match self.raw("solver.order").unwrap_or("alternating") {
            "alternating" => SweepOrder::Alternating,
            "red_black" => SweepOrder::RedBlack,
            other => return err(format!("solver.order: unknown order '{other}'")),
        };
        Ok(SolverOptions {
            tol: self.get("solver.tol")?,
            max_sweeps: self.get("solver.max_sweeps")?,
            margin: self.get("solver.margin")?,
            certify_tol: self.get("solver.certify_tol")?,
            residual_tol: self.get("solver.residual_tol")?,
            order,
        })
    }
}

pub fn number_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number '{}'", s.trim())))
        .collect()
}

fn parse_preset(raw: &str, n: usize) -> Result<DomainPreset> {
    let raw = raw.trim();
    let (name, args) = match raw.find('(') {
        Some(open) if raw.ends_with(')') => (
            raw[..open].trim(),
            number_list(&raw[open + 1..raw.len() - 1])
                .map_err(|e| ConfigError(format!("domain.preset: {e}")))?,
        ),
        Some(_) => return err(format!("domain.preset: unbalanced parentheses in '{raw}'")),
        None => (raw, Vec::new()),
    };
    let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
    let preset = match (name, args.as_slice()) {
        ("ball", [r]) if positive(&[*r]) => DomainPreset::Ball { radius: *r },
        ("polydisc", [r]) if positive(&[*r]) => DomainPreset::Polydisc { radius: *r },
        ("ellipsoid", a) if a.len() == n && positive(a) => DomainPreset::Ellipsoid {
            semi_axes: a.to_vec(),
        },
        ("two_balls", [c1, r1, c2, r2]) if positive(&[*r1, *r2]) => {
            let centre = |c: f64| {
                let mut v = vec![0.0; 2 * n];
                v[0] = c;
                v
            };
            DomainPreset::TwoBalls {
                c1: centre(*c1),
                r1: *r1,
                c2: centre(*c2),
                r2: *r2,
            }
        }
        _ => return err(format!("domain.preset: cannot interpret '{raw}'")),
    };
    Ok(preset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_overrides() {
        let mut c = Config::parse_text("# header\nn = 1\n\ngrid.h = 0.25  # trailing\n").unwrap();
        assert_eq!(c.get::<usize>("n").unwrap(), 1);
        assert_eq!(c.get::<f64>("grid.h").unwrap(), 0.25);
        c.set_pair("grid.h=0.5").unwrap();
        assert_eq!(c.get::<f64>("grid.h").unwrap(), 0.5);
        assert_eq!(c.get::<u32>("directions.W").unwrap(), 1);
    }

    #[test]
    fn unknown_and_malformed_lines() {
        let e = Config::parse_text("n = 2\ngrid.spacing = 1\n").unwrap_err();
        assert!(e.0.contains("line 2") && e.0.contains("grid.spacing"), "{e}");
        assert!(Config::parse_text("just words").is_err());
    }

    #[test]
    fn missing_keys_are_listed() {
        let c = Config::parse_text("n = 2").unwrap();
        let e = c.require(&["rhs.f", "boundary.phi"]).unwrap_err();
        assert!(e.0.contains("rhs.f") && e.0.contains("boundary.phi"));
    }

    #[test]
    fn presets_and_boxes() {
        let mut c = Config::default();
        assert_eq!(c.preset().unwrap(), DomainPreset::Ball { radius: 1.0 });
        c.set("domain.preset", "ellipsoid(1, 0.5)").unwrap();
        assert_eq!(
            c.preset().unwrap(),
            DomainPreset::Ellipsoid { semi_axes: vec![1.0, 0.5] }
        );
        c.set("domain.preset", "ellipsoid(1)").unwrap();
        assert!(c.preset().is_err());
        c.set("grid.box", "-2, 2").unwrap();
        assert_eq!(c.bbox().unwrap().unwrap(), vec![(-2.0, 2.0); 4]);
        c.set("grid.box", "-2, 2, 0").unwrap();
        assert!(c.bbox().is_err());
    }

    #[test]
    fn operators_parse() {
        let mut c = Config::default();
        c.set("operators.list", "lambda1; eigen_combination(1, 0.5); k_hessian(2)").unwrap();
        assert_eq!(c.operator_list().unwrap().len(), 3);
        c.set("operator.kind", "nonsense").unwrap();
        assert!(c.operator().is_err());
    }
}
