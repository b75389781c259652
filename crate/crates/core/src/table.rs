//! Tabulated effective Hamiltonian on a tensor grid of slopes, with
//! piecewise-linear interpolation and CSV + JSON persistence.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;

/// Provenance and structural checks carried alongside the values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub lambdas: Vec<f64>,
    pub extrapolation_order: usize,
    pub seeds: Vec<u64>,
    pub field: String,
    pub kappa: f64,
    pub j_bar: f64,
    /// Smallest `H(mid) - (H(a) + H(b))/2 + 2 max(err)` over tested triples.
    pub concavity_margin: f64,
    pub concavity_ok: bool,
    /// Largest `|H(p) - H(-p)|` over mirrored nodes.
    pub symmetry_gap: f64,
    pub bound_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// `H̄` on the tensor product of `axes` (one axis in 1-D, two in 2-D).
/// Node `(i, j)` is stored at `i + axes[0].len() * j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTable {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub error_bars: Vec<f64>,
    pub meta: TableMeta,
}

impl HamiltonianTable {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>, error_bars: Vec<f64>, meta: TableMeta) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Table(format!("table needs 1 or 2 axes, got {}", axes.len())));
        }
        for a in &axes {
            if a.len() < 2 {
                return Err(Error::Table("every axis needs at least two nodes".into()));
            }
            if a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Table("axis nodes must be strictly increasing".into()));
            }
        }
        let n: usize = axes.iter().map(Vec::len).product();
        if values.len() != n || error_bars.len() != n {
            return Err(Error::Table(format!(
                "expected {n} values and error bars, got {} and {}",
                values.len(),
                error_bars.len()
            )));
        }
        if values.iter().chain(&error_bars).any(|v| !v.is_finite()) {
            return Err(Error::Table("non-finite entry".into()));
        }
        Ok(HamiltonianTable { axes, values, error_bars, meta })
    }

    /// Table of a known function, with zero error bars.
    pub fn from_fn(axes: Vec<Vec<f64>>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let pts = points_of(&axes);
        let values = pts.iter().map(|p| f(*p)).collect();
        let n = pts.len();
        HamiltonianTable::new(axes, values, vec![0.0; n], TableMeta::default())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Node coordinates in storage order.
    pub fn points(&self) -> Vec<Point> {
        points_of(&self.axes)
    }

    pub fn range(&self, axis: usize) -> (f64, f64) {
        let a = &self.axes[axis];
        (a[0], a[a.len() - 1])
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..self.dim()).all(|d| {
            let (lo, hi) = self.range(d);
            p[d] >= lo - 1e-12 && p[d] <= hi + 1e-12
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_error_bar(&self) -> f64 {
        self.error_bars.iter().copied().fold(0.0, f64::max)
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i + self.axes[0].len() * j]
    }

    /// Piecewise-linear (bilinear in 2-D) interpolation, extended linearly
    /// past the edges with the slope of the outermost cell.
    pub fn eval(&self, p: Point) -> f64 {
        self.interp(&self.values, p)
    }

    /// Error bar interpolated like the values.
    pub fn error_at(&self, p: Point) -> f64 {
        self.interp(&self.error_bars, p).max(0.0)
    }

    fn interp(&self, data: &[f64], p: Point) -> f64 {
        let (i, s) = locate(&self.axes[0], p[0]);
        if self.dim() == 1 {
            return data[i] * (1.0 - s) + data[i + 1] * s;
        }
        let nx = self.axes[0].len();
        let (j, t) = locate(&self.axes[1], p[1]);
        let a = data[i + nx * j];
        let b = data[i + 1 + nx * j];
        let c = data[i + nx * (j + 1)];
        let d = data[i + 1 + nx * (j + 1)];
        (1.0 - t) * ((1.0 - s) * a + s * b) + t * ((1.0 - s) * c + s * d)
    }

    /// Largest absolute finite-difference slope of the table along `axis`.
    pub fn max_slope(&self, axis: usize) -> f64 {
        let nx = self.axes[0].len();
        let ny = if self.dim() == 2 { self.axes[1].len() } else { 1 };
        let mut m: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let (i2, j2) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
                if i2 >= nx || j2 >= ny {
                    continue;
                }
                let dp =
                    if axis == 0 { self.axes[0][i2] - self.axes[0][i] } else { self.axes[1][j2] - self.axes[1][j] };
                m = m.max(((self.values[i2 + nx * j2] - self.values[i + nx * j]) / dp).abs());
            }
        }
        m
    }

    /// Worst midpoint-concavity margin over all triples `(k - s, k, k + s)`
    /// along each axis, with slack of twice the largest error bar in the
    /// triple. Only triples whose midpoint is a node are tested, which
    /// requires uniformly spaced axes.
    pub fn concavity_margin(&self) -> f64 {
        let nx = self.axes[0].len();
        let ny = if self.dim() == 2 { self.axes[1].len() } else { 1 };
        let mut worst = f64::INFINITY;
        for axis in 0..self.dim() {
            let n = self.axes[axis].len();
            for other in 0..(if axis == 0 { ny } else { nx }) {
                let at = |k: usize| if axis == 0 { k + nx * other } else { other + nx * k };
                for k in 1..n - 1 {
                    for s in 1..=k.min(n - 1 - k) {
                        let (a, m, b) = (at(k - s), at(k), at(k + s));
                        let slack = 2.0 * self.error_bars[a].max(self.error_bars[m]).max(self.error_bars[b]);
                        let gap = self.values[m] - 0.5 * (self.values[a] + self.values[b]) + slack;
                        worst = worst.min(gap);
                    }
                }
            }
        }
        worst
    }

    /// Largest `|H(p) - H(-p)|` over nodes whose mirror image is also a node.
    pub fn symmetry_gap(&self) -> f64 {
        let mirror = |axis: &Vec<f64>, k: usize| -> Option<usize> {
            let target = -axis[k];
            axis.iter().position(|x| (x - target).abs() < 1e-9)
        };
        let nx = self.axes[0].len();
        let ny = if self.dim() == 2 { self.axes[1].len() } else { 1 };
        let mut gap: f64 = 0.0;
        for j in 0..ny {
            let jm = if self.dim() == 2 { mirror(&self.axes[1], j) } else { Some(0) };
            for i in 0..nx {
                if let (Some(im), Some(jm)) = (mirror(&self.axes[0], i), jm) {
                    gap = gap.max((self.values[i + nx * j] - self.values[im + nx * jm]).abs());
                }
            }
        }
        gap
    }

    /// Fills the structural checks in `meta`.
    pub fn refresh_checks(&mut self) {
        self.meta.concavity_margin = self.concavity_margin();
        self.meta.concavity_ok = self.meta.concavity_margin >= 0.0;
        self.meta.symmetry_gap = self.symmetry_gap();
        self.meta.bound_ok = self.max_value() <= -self.meta.kappa + 1e-12;
    }

    /// Writes `<path>` (CSV: `p1[,p2],value,error_bar`) and `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        if let Some(h) = &self.meta.config_hash {
            writeln!(buf, "# config_hash={h}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            if self.dim() == 1 {
                w.write_record(["p1", "value", "error_bar"])?;
            } else {
                w.write_record(["p1", "p2", "value", "error_bar"])?;
            }
            for (k, p) in self.points().iter().enumerate() {
                let mut rec: Vec<String> = (0..self.dim()).map(|d| p[d].to_string()).collect();
                rec.push(self.values[k].to_string());
                rec.push(self.error_bars[k].to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        fs::write(path, buf)?;
        let meta = serde_json::to_string_pretty(&Sidecar { axes: self.axes.clone(), meta: self.meta.clone() })?;
        fs::write(sidecar_path(path), meta + "\n")?;
        Ok(())
    }

    /// Reads a table written by [`HamiltonianTable::save`]; the CSV nodes
    /// must match the axes recorded in the sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let dim = side.axes.len();
        let expected = points_of(&side.axes);
        let mut values = Vec::with_capacity(expected.len());
        let mut errs = Vec::with_capacity(expected.len());
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != dim + 2 {
                return Err(Error::Table(format!("row {k} has {} columns, expected {}", rec.len(), dim + 2)));
            }
            let num = |c: usize| -> Result<f64> {
                rec[c].trim().parse::<f64>().map_err(|e| Error::Table(format!("row {k}: {e}")))
            };
            let p = expected.get(k).ok_or_else(|| Error::Table("more rows than sidecar nodes".into()))?;
            for d in 0..dim {
                if (num(d)? - p[d]).abs() > 1e-9 * (1.0 + p[d].abs()) {
                    return Err(Error::Table(format!("row {k} slope does not match the sidecar axes")));
                }
            }
            values.push(num(dim)?);
            errs.push(num(dim + 1)?);
        }
        HamiltonianTable::new(side.axes, values, errs, side.meta)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    axes: Vec<Vec<f64>>,
    meta: TableMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn points_of(axes: &[Vec<f64>]) -> Vec<Point> {
    if axes.len() == 1 {
        axes[0].iter().map(|x| [*x, 0.0]).collect()
    } else {
        axes[1].iter().flat_map(|y| axes[0].iter().map(move |x| [*x, *y])).collect()
    }
}

/// Cell index and local coordinate; the coordinate leaves `[0, 1]` outside
/// the axis, which turns interpolation into extrapolation.
fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    let i = match axis.partition_point(|a| *a <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

/// `n` evenly spaced nodes on `[lo, hi]`.
pub fn uniform_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}
