//! Dispersal kernels, their symmetric grid quadrature, and the nonlocal
//! operators built on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, norm, GridField, Point};

/// Largest exponent accepted before an exponential is evaluated.
pub const EXPONENT_CAP: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelProfile {
    UniformBall,
    CosineBump,
    Triangle,
}

/// Radially symmetric, compactly supported dispersal kernel of mass `j_bar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub dimension: usize,
    pub profile: KernelProfile,
    /// Support radius.
    pub r_bar: f64,
    /// Radius of the ball on which the density is at least `a`.
    pub r1: f64,
    pub a: f64,
    pub j_bar: f64,
}

impl Kernel {
    pub fn new(dimension: usize, profile: KernelProfile, r_bar: f64, j_bar: f64) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidParam(format!("kernel dimension must be 1 or 2, got {dimension}")));
        }
        if !(r_bar > 0.0) || !(j_bar > 0.0) {
            return Err(Error::InvalidParam("kernel needs r_bar > 0 and j_bar > 0".into()));
        }
        let r1 = match profile {
            KernelProfile::UniformBall => r_bar,
            KernelProfile::CosineBump | KernelProfile::Triangle => 0.5 * r_bar,
        };
        let mut k = Kernel { dimension, profile, r_bar, r1, a: 0.0, j_bar };
        k.a = k.density([r1, 0.0]);
        Ok(k)
    }

    /// The 1-D kernel `J = j_bar / 2` on `[-1, 1]`.
    pub fn uniform_1d(j_bar: f64) -> Self {
        Self::new(1, KernelProfile::UniformBall, 1.0, j_bar).expect("valid kernel")
    }

    fn shape(&self, s: f64) -> f64 {
        if s > 1.0 {
            return 0.0;
        }
        match self.profile {
            KernelProfile::UniformBall => 1.0,
            KernelProfile::CosineBump => 0.5 * (1.0 + (std::f64::consts::PI * s).cos()),
            KernelProfile::Triangle => 1.0 - s,
        }
    }

    /// Integral of `shape(|y| / r_bar)` over the support.
    fn shape_mass(&self) -> f64 {
        let r = self.r_bar;
        let pi = std::f64::consts::PI;
        match (self.dimension, self.profile) {
            (1, KernelProfile::UniformBall) => 2.0 * r,
            (1, KernelProfile::CosineBump) => r,
            (1, KernelProfile::Triangle) => r,
            (_, KernelProfile::UniformBall) => pi * r * r,
            (_, KernelProfile::CosineBump) => r * r * (pi / 2.0 - 2.0 / pi),
            (_, KernelProfile::Triangle) => pi * r * r / 3.0,
        }
    }

    pub fn density(&self, y: Point) -> f64 {
        let r = if self.dimension == 1 { y[0].abs() } else { norm(y) };
        self.j_bar * self.shape(r / self.r_bar) / self.shape_mass()
    }
}

/// Symmetric nonnegative quadrature weights for `∫ J(y) g(y) dy` on a grid.
///
/// Offsets are stored as the center followed by `(o, -o)` pairs, so any
/// pairwise sum of an odd quantity cancels exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilWeights {
    pub dimension: usize,
    pub spacing: f64,
    pub j_bar: f64,
    pub r_bar: f64,
    pub offsets: Vec<[i32; 2]>,
    pub vectors: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Sub-cell samples per axis when integrating the density over a grid cell.
const SUBSAMPLES_1D: usize = 32;
const SUBSAMPLES_2D: usize = 12;

/// Cell-integrated weights: each offset gets the kernel mass of its grid
/// cell (composite midpoint rule on a sub-grid), symmetrized and scaled to
/// mass `j_bar`.
pub fn build_weights(kernel: &Kernel, h: f64) -> Result<StencilWeights> {
    if !(h > 0.0) || h > kernel.r1 / 4.0 + 1e-12 {
        return Err(Error::InvalidParam(format!("spacing {h} too coarse: need h <= r1/4 = {}", kernel.r1 / 4.0)));
    }
    let dim = kernel.dimension;
    let reach = ((kernel.r_bar / h) + 0.5).ceil() as i32;
    let ns = if dim == 1 { SUBSAMPLES_1D } else { SUBSAMPLES_2D };
    let sub = |k: i32, s: usize| (k as f64 - 0.5 + (s as f64 + 0.5) / ns as f64) * h;
    let cell_mass = |o: [i32; 2]| -> f64 {
        let mut m = 0.0;
        if dim == 1 {
            for s in 0..ns {
                m += kernel.density([sub(o[0], s), 0.0]);
            }
            m * h / ns as f64
        } else {
            for sy in 0..ns {
                for sx in 0..ns {
                    m += kernel.density([sub(o[0], sx), sub(o[1], sy)]);
                }
            }
            m * h * h / (ns * ns) as f64
        }
    };

    let mut offsets = vec![[0, 0]];
    let ys: Vec<i32> = if dim == 1 { vec![0] } else { (0..=reach).collect() };
    for &oy in &ys {
        for ox in -reach..=reach {
            if oy == 0 && ox <= 0 {
                continue;
            }
            offsets.push([ox, oy]);
            offsets.push([-ox, -oy]);
        }
    }
    let mut weights = Vec::with_capacity(offsets.len());
    let mut kept = Vec::with_capacity(offsets.len());
    let mut k = 0;
    while k < offsets.len() {
        if k == 0 {
            kept.push(offsets[0]);
            weights.push(cell_mass(offsets[0]));
            k += 1;
            continue;
        }
        let w = 0.5 * (cell_mass(offsets[k]) + cell_mass(offsets[k + 1]));
        if w > 0.0 {
            kept.push(offsets[k]);
            kept.push(offsets[k + 1]);
            weights.push(w);
            weights.push(w);
        }
        k += 2;
    }
    let total: f64 = weights.iter().sum();
    let factor = kernel.j_bar / total;
    for w in &mut weights {
        *w *= factor;
    }
    let vectors = kept.iter().map(|o| [o[0] as f64 * h, o[1] as f64 * h]).collect();
    Ok(StencilWeights {
        dimension: dim,
        spacing: h,
        j_bar: kernel.j_bar,
        r_bar: kernel.r_bar,
        offsets: kept,
        vectors,
        weights,
    })
}

impl StencilWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_k y_k`, summed pair by pair.
    pub fn first_moment(&self) -> Point {
        let mut m = [self.weights[0] * self.vectors[0][0], self.weights[0] * self.vectors[0][1]];
        for k in (1..self.len()).step_by(2) {
            for d in 0..2 {
                m[d] += self.weights[k] * self.vectors[k][d] + self.weights[k + 1] * self.vectors[k + 1][d];
            }
        }
        m
    }

    /// `Σ w_k (y_k · e)^2` for a unit direction `e`.
    pub fn second_moment(&self, e: Point) -> f64 {
        self.weights.iter().zip(&self.vectors).map(|(w, y)| w * dot(*y, e).powi(2)).sum()
    }

    /// `S(p) = Σ w_k exp(-y_k · p)`.
    pub fn exp_moment(&self, p: Point) -> f64 {
        self.weights.iter().zip(&self.vectors).map(|(w, y)| w * (-dot(*y, p)).exp()).sum()
    }

    /// Largest grid offset along any axis.
    pub fn reach(&self) -> i32 {
        self.offsets.iter().map(|o| o[0].abs().max(o[1].abs())).max().unwrap_or(0)
    }

    /// Weight on the zero offset.
    pub fn center_weight(&self) -> f64 {
        self.weights[0]
    }

    /// Same weights, reinterpreted on a grid of spacing `h`. Used when the
    /// stencil of a rescaled equation lives on a finer (macroscopic) grid.
    pub fn with_spacing(&self, h: f64) -> StencilWeights {
        let mut w = self.clone();
        w.spacing = h;
        w.vectors = self.offsets.iter().map(|o| [o[0] as f64 * h, o[1] as f64 * h]).collect();
        w
    }
}

fn check_grid(weights: &StencilWeights, u: &GridField) -> Result<()> {
    if weights.dimension != u.grid.dim {
        return Err(Error::InvalidParam(format!(
            "stencil is {}-D but the field is {}-D",
            weights.dimension, u.grid.dim
        )));
    }
    if (weights.spacing - u.grid.spacing).abs() > 1e-12 * weights.spacing {
        return Err(Error::InvalidParam(format!(
            "stencil spacing {} does not match grid spacing {}",
            weights.spacing, u.grid.spacing
        )));
    }
    Ok(())
}

#[inline]
fn neighbor(u: &GridField, node: usize, o: [i32; 2]) -> Result<usize> {
    let back = [-o[0], -o[1]];
    u.grid.neighbor(node, back).ok_or(Error::HaloMissing { node, offset: o })
}

/// `Σ_k w_k (u(x - y_k) - u(x))`.
pub fn apply_diffusion(weights: &StencilWeights, u: &GridField, x: usize) -> Result<f64> {
    check_grid(weights, u)?;
    diffusion_at(weights, u, x)
}

fn diffusion_at(weights: &StencilWeights, u: &GridField, x: usize) -> Result<f64> {
    let ux = u.values[x];
    let mut s = 0.0;
    for (w, o) in weights.weights.iter().zip(&weights.offsets) {
        s += w * (u.values[neighbor(u, x, *o)?] - ux);
    }
    Ok(s)
}

/// Diffusion at every node, in parallel with a fixed per-node summation order.
pub fn diffusion_field(weights: &StencilWeights, u: &GridField) -> Result<Vec<f64>> {
    check_grid(weights, u)?;
    (0..u.len()).into_par_iter().map(|x| diffusion_at(weights, u, x)).collect()
}

/// `Φ(z) = Σ_k w_k exp(-y_k·p) exp(w(z - y_k) - w(z))`, each exponent
/// assembled before exponentiation and checked against [`EXPONENT_CAP`].
pub fn exp_transport(weights: &StencilWeights, p: Point, w: &GridField, z: usize) -> Result<f64> {
    check_grid(weights, w)?;
    let wz = w.values[z];
    let mut s = 0.0;
    for ((wk, o), y) in weights.weights.iter().zip(&weights.offsets).zip(&weights.vectors) {
        let e = -dot(*y, p) + w.values[neighbor(w, z, *o)?] - wz;
        if e > EXPONENT_CAP || !e.is_finite() {
            return Err(Error::Overflow { node: z, exponent: e, cap: EXPONENT_CAP });
        }
        s += wk * e.exp();
    }
    Ok(s)
}

/// `Ψ(z) = Σ_k w_k exp(-y_k·p) exp(w(z - y_k)) = Φ(z) exp(w(z))`.
pub fn psi_quantity(weights: &StencilWeights, p: Point, w: &GridField, z: usize) -> Result<f64> {
    check_grid(weights, w)?;
    let mut s = 0.0;
    for ((wk, o), y) in weights.weights.iter().zip(&weights.offsets).zip(&weights.vectors) {
        let e = -dot(*y, p) + w.values[neighbor(w, z, *o)?];
        if e > EXPONENT_CAP || !e.is_finite() {
            return Err(Error::Overflow { node: z, exponent: e, cap: EXPONENT_CAP });
        }
        s += wk * e.exp();
    }
    Ok(s)
}

/// `Φ` at every node of a periodic field.
///
/// Uses `exp(w(z-y) - w(z)) = E(z-y) / E(z)` with `E = exp(w - mid)`, which
/// needs one exponential per node instead of one per stencil entry. Falls
/// back to the per-term path whenever the spread of `w` could push a single
/// exponent past the cap.
pub fn transport_field(weights: &StencilWeights, p: Point, w: &GridField, out: &mut [f64]) -> Result<()> {
    check_grid(weights, w)?;
    let (lo, hi) = (w.min(), w.max());
    let drift = weights.vectors.iter().map(|y| -dot(*y, p)).fold(f64::NEG_INFINITY, f64::max);
    let safe = hi - lo + drift.max(0.0) <= EXPONENT_CAP && (hi - lo) <= 1200.0 && lo.is_finite() && hi.is_finite();
    if !safe || !w.grid.periodic {
        return out.par_iter_mut().enumerate().try_for_each(|(z, o)| exp_transport(weights, p, w, z).map(|v| *o = v));
    }
    let mid = 0.5 * (hi + lo);
    let expw: Vec<f64> = w.values.iter().map(|v| (v - mid).exp()).collect();
    let coeff: Vec<f64> =
        weights.weights.iter().zip(&weights.vectors).map(|(wk, y)| wk * (-dot(*y, p)).exp()).collect();
    let grid = &w.grid;
    out.par_iter_mut().enumerate().for_each(|(z, o)| {
        let mut s = 0.0;
        for (c, off) in coeff.iter().zip(&weights.offsets) {
            let nb = grid.neighbor(z, [-off[0], -off[1]]).expect("periodic grid");
            s += c * expw[nb];
        }
        *o = s / expw[z];
    });
    Ok(())
}
