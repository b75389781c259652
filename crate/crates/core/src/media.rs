//! Stationary ergodic reaction-rate fields `c(z, ω)` on a periodic torus.
//!
//! Every generator is deterministic in its parameters and seed, and
//! [`CoefficientField::evaluate`] is a pure function of the point. A shift is
//! stored as an offset that is added to the query point before anything else,
//! so `evaluate(shift(F, a), z)` and `evaluate(F, z + a)` run the same
//! arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{add, Point};

/// Torus and admissibility data shared by every generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediaContext {
    pub dimension: usize,
    pub period_length: f64,
    /// Uniform positive lower bound on the rate.
    pub kappa: f64,
    /// Mass of the dispersal kernel the field will be paired with.
    pub j_bar: f64,
}

impl MediaContext {
    fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::InvalidParam(format!("dimension must be 1 or 2, got {}", self.dimension)));
        }
        if !(self.period_length > 0.0) {
            return Err(Error::InvalidParam("period_length must be positive".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParam("kappa must be positive".into()));
        }
        if !(self.j_bar > 0.0) {
            return Err(Error::InvalidParam("j_bar must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Constant,
    Periodic,
    Checkerboard,
    PoissonBumps,
}

#[derive(Clone, Debug)]
enum Generator {
    Constant { c0: f64 },
    Periodic { base: f64, amplitude: f64, period: f64 },
    Checkerboard { cell: f64, sigma: f64, cells_per_axis: usize, values: Vec<f64> },
    PoissonBumps { base: f64, amplitude: f64, radius: f64, centers: Vec<Point>, buckets: Buckets },
}

/// A realization of the random reaction rate, periodized on a torus.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub dimension: usize,
    pub seed: u64,
    pub period_length: f64,
    pub kappa: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub osc_rho: f64,
    pub lipschitz_k: f64,
    pub mollify_sigma: f64,
    offset: Point,
    generator: Generator,
}

impl CoefficientField {
    pub fn kind(&self) -> GeneratorKind {
        match self.generator {
            Generator::Constant { .. } => GeneratorKind::Constant,
            Generator::Periodic { .. } => GeneratorKind::Periodic,
            Generator::Checkerboard { .. } => GeneratorKind::Checkerboard,
            Generator::PoissonBumps { .. } => GeneratorKind::PoissonBumps,
        }
    }

    /// Accumulated shift of this field relative to the generated realization.
    pub fn offset(&self) -> Point {
        self.offset
    }

    /// Rate at `z`. The point is folded onto the torus.
    pub fn evaluate(&self, z: Point) -> f64 {
        let z = add(z, self.offset);
        let l = self.period_length;
        match &self.generator {
            Generator::Constant { c0 } => *c0,
            Generator::Periodic { base, amplitude, period } => {
                let k = std::f64::consts::TAU / period;
                let s: f64 = (0..self.dimension).map(|d| (k * z[d]).cos()).sum();
                base + amplitude * s / self.dimension as f64
            }
            Generator::Checkerboard { cell, sigma, cells_per_axis, values } => {
                let n = *cells_per_axis;
                let mut idx = [0usize; 2];
                let mut weights = [[0.0; 3]; 2];
                for d in 0..2 {
                    if d >= self.dimension {
                        weights[d] = [0.0, 1.0, 0.0];
                        continue;
                    }
                    let zf = z[d].rem_euclid(l);
                    let k = ((zf / cell).floor() as usize).min(n - 1);
                    let t = zf - k as f64 * cell;
                    let right = mollifier_cdf(t - cell, *sigma);
                    let here = mollifier_cdf(t, *sigma);
                    idx[d] = k;
                    weights[d] = [1.0 - here, here - right, right];
                }
                let mut c = 0.0;
                for (b, wy) in weights[1].iter().enumerate() {
                    if *wy == 0.0 {
                        continue;
                    }
                    let j = if self.dimension == 2 { (idx[1] + n + b - 1) % n } else { 0 };
                    for (a, wx) in weights[0].iter().enumerate() {
                        if *wx == 0.0 {
                            continue;
                        }
                        let i = (idx[0] + n + a - 1) % n;
                        c += wx * wy * values[i + n * j];
                    }
                }
                c
            }
            Generator::PoissonBumps { base, amplitude, radius, centers, buckets } => {
                let mut folded = z;
                for x in folded.iter_mut().take(self.dimension) {
                    *x = x.rem_euclid(l);
                }
                let mut s = 0.0;
                buckets.for_each_candidate(folded, |k| {
                    let c = centers[k];
                    let mut r2 = 0.0;
                    for d in 0..self.dimension {
                        let mut dx = folded[d] - c[d];
                        dx -= l * (dx / l).round();
                        r2 += dx * dx;
                    }
                    s += bump_profile(r2.sqrt() / radius);
                });
                base + amplitude * s.min(1.0)
            }
        }
    }

    /// Translated realization `z ↦ c(z + a)`.
    pub fn shift(&self, a: Point) -> CoefficientField {
        let mut shifted = self.clone();
        shifted.offset = add(self.offset, a);
        shifted
    }

    /// Grid average of the rate over the ball `B(0, R)`.
    pub fn empirical_mean(&self, radius: f64) -> Result<f64> {
        if !(radius > 0.0) || radius > self.period_length / 2.0 + 1e-12 {
            return Err(Error::InvalidParam(format!(
                "averaging radius {radius} must lie in (0, L/2] with L = {}",
                self.period_length
            )));
        }
        let n = ((radius / self.feature_length()) - 1e-9).ceil().max(1.0) as usize;
        let h = radius / n as f64;
        let mid = |j: usize| -radius + (j as f64 + 0.5) * h;
        let mut sum = 0.0;
        let mut count = 0usize;
        if self.dimension == 1 {
            for j in 0..2 * n {
                sum += self.evaluate([mid(j), 0.0]);
                count += 1;
            }
        } else {
            for j in 0..2 * n {
                let y = mid(j);
                for i in 0..2 * n {
                    let x = mid(i);
                    if x * x + y * y < radius * radius {
                        sum += self.evaluate([x, y]);
                        count += 1;
                    }
                }
            }
        }
        Ok(sum / count as f64)
    }

    /// Quadrature spacing that resolves the finest feature of the realization.
    fn feature_length(&self) -> f64 {
        match &self.generator {
            Generator::Constant { .. } => self.period_length / 16.0,
            Generator::Periodic { period, .. } => period / 64.0,
            Generator::Checkerboard { cell, sigma, .. } => (2.0 * sigma).max(cell / 8.0).min(*cell) / 16.0,
            Generator::PoissonBumps { radius, .. } => radius / 16.0,
        }
    }
}

fn build(
    ctx: &MediaContext,
    seed: u64,
    c_min: f64,
    c_max: f64,
    lipschitz_k: f64,
    mollify_sigma: f64,
    generator: Generator,
) -> Result<CoefficientField> {
    let osc = c_max - c_min;
    if osc >= ctx.j_bar {
        return Err(Error::OscillationViolation { osc, j_bar: ctx.j_bar });
    }
    if c_min < ctx.kappa {
        return Err(Error::InvalidParam(format!("minimum rate {c_min} lies below kappa = {}", ctx.kappa)));
    }
    Ok(CoefficientField {
        dimension: ctx.dimension,
        seed,
        period_length: ctx.period_length,
        kappa: ctx.kappa,
        c_min,
        c_max,
        osc_rho: osc,
        lipschitz_k,
        mollify_sigma,
        offset: [0.0, 0.0],
        generator,
    })
}

pub fn make_constant(ctx: &MediaContext, c0: f64) -> Result<CoefficientField> {
    ctx.validate()?;
    build(ctx, 0, c0, c0, 0.0, 0.0, Generator::Constant { c0 })
}

/// `c(z) = base + amplitude * mean_d cos(2π z_d / period)`; `period` must
/// divide the torus side.
pub fn make_periodic(ctx: &MediaContext, base: f64, amplitude: f64, period: f64) -> Result<CoefficientField> {
    ctx.validate()?;
    if !(period > 0.0) || !(amplitude >= 0.0) {
        return Err(Error::InvalidParam("periodic field needs period > 0 and amplitude >= 0".into()));
    }
    cells_per_axis(ctx.period_length, period, "period")?;
    let k = amplitude * std::f64::consts::TAU / period;
    build(ctx, 0, base - amplitude, base + amplitude, k, 0.0, Generator::Periodic { base, amplitude, period })
}

/// Random two-valued tiling with cells of side `cell`, each cell independently
/// `c_lo` or `c_hi` with probability 1/2, mollified by a smooth bump of
/// radius `sigma`.
pub fn make_checkerboard(
    ctx: &MediaContext,
    seed: u64,
    cell: f64,
    c_lo: f64,
    c_hi: f64,
    sigma: f64,
) -> Result<CoefficientField> {
    ctx.validate()?;
    if !(c_lo <= c_hi) {
        return Err(Error::InvalidParam(format!("need c_lo <= c_hi, got {c_lo} > {c_hi}")));
    }
    if c_hi - c_lo >= ctx.j_bar {
        return Err(Error::OscillationViolation { osc: c_hi - c_lo, j_bar: ctx.j_bar });
    }
    if c_lo < ctx.kappa {
        return Err(Error::InvalidParam(format!("c_lo = {c_lo} lies below kappa = {}", ctx.kappa)));
    }
    if !(sigma > 0.0) || sigma >= cell / 2.0 {
        return Err(Error::InvalidParam(format!("sigma = {sigma} must lie in (0, cell/2)")));
    }
    let n = cells_per_axis(ctx.period_length, cell, "cell")?;
    let total = if ctx.dimension == 1 { n } else { n * n };
    let values = (0..total)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            if rng.gen::<bool>() {
                c_hi
            } else {
                c_lo
            }
        })
        .collect();
    let lip = (c_hi - c_lo) * max_mollifier_density(sigma) * (ctx.dimension as f64).sqrt();
    build(ctx, seed, c_lo, c_hi, lip, sigma, Generator::Checkerboard { cell, sigma, cells_per_axis: n, values })
}

/// `base + amplitude * min(1, Σ_i b(|z - x_i| / radius))` over a Poisson point
/// set of the given intensity folded onto the torus.
pub fn make_poisson_bumps(
    ctx: &MediaContext,
    seed: u64,
    intensity: f64,
    base: f64,
    amplitude: f64,
    bump_radius: f64,
) -> Result<CoefficientField> {
    ctx.validate()?;
    if intensity < 0.0 || !intensity.is_finite() {
        return Err(Error::InvalidParam(format!("intensity must be nonnegative, got {intensity}")));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidParam("amplitude must be nonnegative".into()));
    }
    if amplitude >= ctx.j_bar {
        return Err(Error::OscillationViolation { osc: amplitude, j_bar: ctx.j_bar });
    }
    if !(bump_radius > 0.0) || 2.0 * bump_radius > ctx.period_length {
        return Err(Error::InvalidParam("bump_radius must lie in (0, L/2]".into()));
    }
    let l = ctx.period_length;
    let volume = l.powi(ctx.dimension as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if intensity * volume > 0.0 {
        Poisson::new(intensity * volume).map_err(|e| Error::InvalidParam(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    let centers: Vec<Point> = (0..count)
        .map(|_| {
            let x = rng.gen::<f64>() * l;
            let y = if ctx.dimension == 2 { rng.gen::<f64>() * l } else { 0.0 };
            [x, y]
        })
        .collect();
    let buckets = Buckets::new(&centers, ctx.dimension, l, bump_radius);
    let overlap = buckets.max_neighbors_within(&centers, 2.0 * bump_radius, ctx.dimension, l);
    let c_max = if centers.is_empty() { base } else { base + amplitude };
    let lip = amplitude * max_bump_slope() / bump_radius * overlap as f64;
    build(
        ctx,
        seed,
        base,
        c_max,
        lip,
        bump_radius,
        Generator::PoissonBumps { base, amplitude, radius: bump_radius, centers, buckets },
    )
}

fn cells_per_axis(l: f64, cell: f64, what: &str) -> Result<usize> {
    if !(cell > 0.0) {
        return Err(Error::InvalidParam(format!("{what} must be positive")));
    }
    let n = (l / cell).round();
    if n < 1.0 || ((l / cell) - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidParam(format!("{what} = {cell} must divide the torus side {l}")));
    }
    Ok(n as usize)
}

/// Smooth transition `S(t)`: 0 for `t <= 0`, 1 for `t >= 1`, C^∞ in between.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

fn smooth_step_slope(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    let da = a / (t * t);
    let db = b / ((1.0 - t) * (1.0 - t));
    (da * b + a * db) / ((a + b) * (a + b))
}

/// Distribution function of the mollifier supported on `[-sigma, sigma]`.
fn mollifier_cdf(x: f64, sigma: f64) -> f64 {
    smooth_step((x + sigma) / (2.0 * sigma))
}

fn max_mollifier_density(sigma: f64) -> f64 {
    let peak = (0..=4000).map(|k| smooth_step_slope(k as f64 / 4000.0)).fold(0.0, f64::max);
    1.01 * peak / (2.0 * sigma)
}

/// Bump with `b(0) = 1`, supported on `[0, 1)`.
pub fn bump_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

fn max_bump_slope() -> f64 {
    let peak = (1..10000)
        .map(|k| {
            let s = k as f64 / 10000.0;
            let b = bump_profile(s);
            (b * 2.0 * s / ((1.0 - s * s) * (1.0 - s * s))).abs()
        })
        .fold(0.0, f64::max);
    1.01 * peak
}

/// Uniform bucketing of bump centers for neighbor queries on the torus.
#[derive(Clone, Debug)]
struct Buckets {
    per_axis: usize,
    size: f64,
    dimension: usize,
    members: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(centers: &[Point], dimension: usize, l: f64, radius: f64) -> Self {
        let per_axis = ((l / radius).floor() as usize).clamp(1, 4096);
        let size = l / per_axis as f64;
        let total = if dimension == 1 { per_axis } else { per_axis * per_axis };
        let mut members = vec![Vec::new(); total];
        let mut b = Buckets { per_axis, size, dimension, members: Vec::new() };
        for (k, c) in centers.iter().enumerate() {
            members[b.bucket_of(*c)].push(k);
        }
        b.members = members;
        b
    }

    fn axis_index(&self, x: f64) -> usize {
        ((x / self.size).floor() as usize).min(self.per_axis - 1)
    }

    fn bucket_of(&self, c: Point) -> usize {
        let i = self.axis_index(c[0]);
        let j = if self.dimension == 2 { self.axis_index(c[1]) } else { 0 };
        i + self.per_axis * j
    }

    /// Calls `f` on every center whose bucket is within one of the bucket of
    /// `z`. Bucket size is at least the bump radius, so no contributing
    /// center is missed.
    fn for_each_candidate(&self, z: Point, mut f: impl FnMut(usize)) {
        let n = self.per_axis;
        if n < 3 {
            for bucket in &self.members {
                for &k in bucket {
                    f(k);
                }
            }
            return;
        }
        let i = self.axis_index(z[0]);
        let j = if self.dimension == 2 { self.axis_index(z[1]) } else { 0 };
        let rows: &[usize] = if self.dimension == 2 { &[0, 1, 2] } else { &[1] };
        for &b in rows {
            let jj = if self.dimension == 2 { (j + n + b - 1) % n } else { 0 };
            for a in 0..3 {
                let ii = (i + n + a - 1) % n;
                for &k in &self.members[ii + n * jj] {
                    f(k);
                }
            }
        }
    }

    fn max_neighbors_within(&self, centers: &[Point], dist: f64, dimension: usize, l: f64) -> usize {
        let mut best = 0;
        for c in centers {
            let count = centers
                .iter()
                .filter(|o| {
                    let mut r2 = 0.0;
                    for d in 0..dimension {
                        let mut dx = c[d] - o[d];
                        dx -= l * (dx / l).round();
                        r2 += dx * dx;
                    }
                    r2 < dist * dist
                })
                .count();
            best = best.max(count);
        }
        best
    }
}
