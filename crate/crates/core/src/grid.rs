//! Uniform grids in one or two dimensions and scalar fields sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or vector. One-dimensional problems use only the first component;
/// the second is kept at zero.
pub type Point = [f64; 2];

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(s: f64, a: Point) -> Point {
    [s * a[0], s * a[1]]
}

/// Node layout of a uniform grid.
///
/// Node `(i, j)` sits at `origin + h * (i, j)`. A periodic grid is a torus of
/// side `shape[d] * h`; a truncated grid has no neighbors past its edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub shape: [usize; 2],
    pub spacing: f64,
    pub origin: Point,
    pub periodic: bool,
}

impl Grid {
    /// Periodic grid with `n` nodes per axis starting at the origin.
    pub fn torus(dim: usize, n: usize, spacing: f64) -> Result<Self> {
        Self::new(dim, n, spacing, [0.0, 0.0], true)
    }

    /// Truncated box covering `[lo, lo + (n-1) h]` on each axis.
    pub fn bounded(dim: usize, n: usize, spacing: f64, lo: f64) -> Result<Self> {
        let origin = if dim == 1 { [lo, 0.0] } else { [lo, lo] };
        Self::new(dim, n, spacing, origin, false)
    }

    pub fn new(dim: usize, n: usize, spacing: f64, origin: Point, periodic: bool) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParam(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n == 0 || !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidParam(format!(
                "grid needs n > 0 and a positive spacing (n = {n}, h = {spacing})"
            )));
        }
        let shape = if dim == 1 { [n, 1] } else { [n, n] };
        let origin = if dim == 1 { [origin[0], 0.0] } else { origin };
        Ok(Grid { dim, shape, spacing, origin, periodic })
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Side length of the periodic cell along each axis.
    pub fn period(&self) -> f64 {
        self.shape[0] as f64 * self.spacing
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.shape[0] * j
    }

    #[inline]
    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node % self.shape[0], node / self.shape[0])
    }

    #[inline]
    pub fn coord(&self, node: usize) -> Point {
        let (i, j) = self.ij(node);
        [self.origin[0] + i as f64 * self.spacing, self.origin[1] + j as f64 * self.spacing]
    }

    /// Index of the node `node + offset`, wrapping on a torus and returning
    /// `None` past the edge of a truncated grid.
    #[inline]
    pub fn neighbor(&self, node: usize, offset: [i32; 2]) -> Option<usize> {
        let (i, j) = self.ij(node);
        let ii = self.shift_axis(i, offset[0], self.shape[0])?;
        let jj = self.shift_axis(j, offset[1], self.shape[1])?;
        Some(self.index(ii, jj))
    }

    #[inline]
    fn shift_axis(&self, i: usize, d: i32, n: usize) -> Option<usize> {
        let k = i as i64 + d as i64;
        let n = n as i64;
        if self.periodic {
            let wrapped = if k < 0 {
                k + n
            } else if k >= n {
                k - n
            } else {
                k
            };
            Some(if (0..n).contains(&wrapped) { wrapped } else { k.rem_euclid(n) } as usize)
        } else if (0..n).contains(&k) {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Nearest node to a point (clamped to the box on truncated grids).
    pub fn nearest(&self, z: Point) -> usize {
        let mut idx = [0usize; 2];
        for d in 0..self.dim {
            let n = self.shape[d] as i64;
            let k = ((z[d] - self.origin[d]) / self.spacing).round() as i64;
            idx[d] = if self.periodic { k.rem_euclid(n) as usize } else { k.clamp(0, n - 1) as usize };
        }
        self.index(idx[0], idx[1])
    }

    /// Displacement from `a` to `b`, using the minimum image on a torus.
    pub fn displacement(&self, a: Point, b: Point) -> Point {
        let mut d = sub(b, a);
        if self.periodic {
            let l = self.period();
            for x in d.iter_mut().take(self.dim) {
                *x -= l * (*x / l).round();
            }
        }
        d
    }
}

/// Values of a scalar function on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn constant(grid: Grid, value: f64) -> Self {
        let n = grid.len();
        GridField { grid, values: vec![value; n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.coord(k))).collect();
        GridField { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParam(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at the node nearest to `z`.
    pub fn at(&self, z: Point) -> f64 {
        self.values[self.grid.nearest(z)]
    }

    /// Writes `x[,y],value` rows with a header line.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.grid.dim == 1 {
            w.write_record(["x", "value"])?;
        } else {
            w.write_record(["x", "y", "value"])?;
        }
        for (k, v) in self.values.iter().enumerate() {
            let z = self.grid.coord(k);
            if self.grid.dim == 1 {
                w.write_record([z[0].to_string(), v.to_string()])?;
            } else {
                w.write_record([z[0].to_string(), z[1].to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_wraps_and_box_truncates() {
        let t = Grid::torus(1, 10, 0.1).unwrap();
        assert_eq!(t.neighbor(0, [-1, 0]), Some(9));
        assert_eq!(t.neighbor(9, [3, 0]), Some(2));
        let b = Grid::bounded(1, 10, 0.1, -0.5).unwrap();
        assert_eq!(b.neighbor(0, [-1, 0]), None);
        assert_eq!(b.neighbor(3, [2, 0]), Some(5));
        assert!((b.coord(5)[0] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_indexing_round_trips() {
        let g = Grid::torus(2, 7, 0.5).unwrap();
        for node in 0..g.len() {
            let (i, j) = g.ij(node);
            assert_eq!(g.index(i, j), node);
            assert_eq!(g.nearest(g.coord(node)), node);
        }
        assert_eq!(g.neighbor(g.index(0, 6), [-1, 1]), Some(g.index(6, 0)));
    }

    #[test]
    fn minimum_image_displacement() {
        let g = Grid::torus(1, 100, 0.1).unwrap();
        let d = g.displacement([0.5, 0.0], [9.5, 0.0]);
        assert!((d[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(Grid::torus(3, 4, 0.1).is_err());
        assert!(Grid::torus(1, 4, 0.0).is_err());
    }
}
