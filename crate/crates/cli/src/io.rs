//! Output files: atomic writes, field CSVs and flat JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lambda1_core::scheme::{GridFunction, Stencil};
use serde_json::{Map, Value};

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("not a file path: {}", path.display()))?;
    let tmp: PathBuf = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut file = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    file.write_all(bytes)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn axis_names(n: usize) -> Vec<String> {
    (1..=n).flat_map(|j| [format!("x{j}"), format!("y{j}")]).collect()
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV of a field: `#` preamble, header `x1,y1,..,u,residual`, one row per
/// unknown in stencil order, then one row per boundary point with an empty
/// residual.
pub fn field_csv(
    stencil: &Stencil,
    u: &GridFunction,
    residual: Option<&[f64]>,
    preamble: &[String],
) -> String {
    let n = stencil.domain().dim();
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    let mut header = axis_names(n);
    header.push("u".into());
    header.push("residual".into());
    let _ = writeln!(out, "{}", header.join(","));
    let mut row = |p: &[f64], value: f64, res: Option<f64>| {
        for x in &p[..2 * n] {
            out.push_str(&fmt_value(*x));
            out.push(',');
        }
        out.push_str(&fmt_value(value));
        out.push(',');
        if let Some(r) = res {
            out.push_str(&fmt_value(r));
        }
        out.push('\n');
    };
    for (q, &idx) in stencil.nodes().iter().enumerate() {
        row(&stencil.coords(q), u.at_node(idx), Some(residual.map_or(f64::NAN, |r| r[q])));
    }
    for (p, &v) in stencil.boundary_points().iter().zip(u.boundary()) {
        row(p, v, None);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRow {
    pub coords: Vec<f64>,
    pub u: f64,
    pub residual: Option<f64>,
}

/// Reads a field CSV written by [`field_csv`].
pub fn read_field_csv(path: &Path) -> Result<Vec<FieldRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_field_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_field_csv(text: &str) -> Result<Vec<FieldRow>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("missing header")?.split(',').collect();
    let cols = header.len();
    if cols < 4 || cols % 2 != 0 || header[cols - 2] != "u" || header[cols - 1] != "residual" {
        bail!("unexpected header '{}'", header.join(","));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            bail!("data row {}: expected {cols} columns, got {}", i + 1, fields.len());
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("data row {}: bad number '{s}'", i + 1))
        };
        let coords = fields[..cols - 2].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let residual = match fields[cols - 1].trim() {
            "" => None,
            s => Some(num(s)?),
        };
        rows.push(FieldRow {
            coords,
            u: num(fields[cols - 2])?,
            residual,
        });
    }
    Ok(rows)
}

fn same_coord(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Rebuilds a grid function, requiring the rows to match the stencil's
/// unknowns and boundary points in order.
pub fn field_from_rows(stencil: &Stencil, rows: &[FieldRow]) -> Result<GridFunction> {
    let n = stencil.domain().dim();
    let expected = stencil.len() + stencil.boundary_points().len();
    let expected_coords = (0..stencil.len())
        .map(|q| stencil.coords(q))
        .chain(stencil.boundary_points().iter().copied());
    for (i, (row, want)) in rows.iter().zip(expected_coords).enumerate() {
        let matches = row.coords.len() == 2 * n
            && row.coords.iter().zip(&want[..2 * n]).all(|(a, b)| same_coord(*a, *b));
        let kind_ok = (i < stencil.len()) == row.residual.is_some();
        if !matches || !kind_ok {
            bail!(
                "grid mismatch at data row {}: got {:?}, expected {:?}",
                i + 1,
                row.coords,
                &want[..2 * n]
            );
        }
    }
    if rows.len() != expected {
        bail!(
            "grid mismatch: {} data rows, expected {} ({} unknowns + {} boundary points)",
            rows.len(),
            expected,
            stencil.len(),
            stencil.boundary_points().len()
        );
    }
    let unknowns: Vec<f64> = rows[..stencil.len()].iter().map(|r| r.u).collect();
    let boundary: Vec<f64> = rows[stencil.len()..].iter().map(|r| r.u).collect();
    Ok(GridFunction::from_parts(stencil, &unknowns, boundary)?)
}

/// Flat JSON object of named scalars and arrays.
#[derive(Debug, Default)]
pub struct Report(Map<String, Value>);

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Report::default();
        r.set("command", command);
        r.set("version", env!("CARGO_PKG_VERSION"));
        r
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(&self.0).expect("map serializes");
        s.push('\n');
        s.into_bytes()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}
