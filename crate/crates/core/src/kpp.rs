//! Explicit time integration of the nonlocal KPP equation, its hyperbolic
//! rescaling, the Hopf–Cole transform and front extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, sub, Grid, GridField, Point};
use crate::media::CoefficientField;
use crate::nonlocal::{build_weights, Kernel, StencilWeights};

/// Safety factor in `dt <= θ ε / (J̄ + c_max)`.
pub const CFL_THETA: f64 = 0.9;

/// Tolerance of the `[0, 1]` range check.
pub const RANGE_SLACK: f64 = 1e-12;

/// Logistic reaction `f(x, u) = c(x) u (1 - u)`.
#[derive(Clone, Debug)]
pub struct ReactionSpec {
    pub field: CoefficientField,
}

impl ReactionSpec {
    pub fn logistic(field: CoefficientField) -> Self {
        ReactionSpec { field }
    }

    pub fn rate(&self, x: Point, u: f64) -> f64 {
        self.field.evaluate(x) * u * (1.0 - u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Ball { center: Point, radius: f64 },
    Box { lo: Point, hi: Point },
}

impl Region {
    /// Distance to the complement for interior points, negative outside.
    pub fn depth(&self, z: Point, dim: usize) -> f64 {
        match *self {
            Region::Ball { center, radius } => {
                let d = sub(z, center);
                let r = if dim == 1 { d[0].abs() } else { norm(d) };
                radius - r
            }
            Region::Box { lo, hi } => (0..dim).map(|d| (z[d] - lo[d]).min(hi[d] - z[d])).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, z: Point, dim: usize) -> bool {
        self.depth(z, dim) >= 0.0
    }
}

/// Continuous initial datum supported on `support`: it climbs linearly from
/// 0 on the boundary to `height` at depth `ramp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub support: Region,
    pub ramp: f64,
    pub height: f64,
}

impl InitialCondition {
    pub fn new(support: Region, ramp: f64) -> Result<Self> {
        if !(ramp > 0.0) {
            return Err(Error::InvalidParam("initial ramp width must be positive".into()));
        }
        Ok(InitialCondition { support, ramp, height: 1.0 })
    }

    pub fn value(&self, z: Point, dim: usize) -> f64 {
        let d = self.support.depth(z, dim);
        if d <= 0.0 {
            0.0
        } else {
            self.height * (d / self.ramp).min(1.0)
        }
    }

    pub fn sample(&self, grid: &Grid) -> GridField {
        let dim = grid.dim;
        GridField::from_fn(grid.clone(), |z| self.value(z, dim))
    }
}

/// Snapshots of `u` at recorded times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridField>,
}

impl Trajectory {
    pub fn last(&self) -> &GridField {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    /// `t,x[,y],u` rows for every snapshot.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.snapshots.first().map_or(1, |s| s.grid.dim);
        if dim == 1 {
            w.write_record(["t", "x", "u"])?;
        } else {
            w.write_record(["t", "x", "y", "u"])?;
        }
        for (t, snap) in self.times.iter().zip(&self.snapshots) {
            for (k, v) in snap.values.iter().enumerate() {
                let z = snap.grid.coord(k);
                let mut rec = vec![t.to_string(), z[0].to_string()];
                if dim == 2 {
                    rec.push(z[1].to_string());
                }
                rec.push(v.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest stable step for the rescaled equation.
pub fn max_stable_dt(field: &CoefficientField, j_bar: f64, epsilon: f64) -> f64 {
    CFL_THETA * epsilon / (j_bar + field.c_max)
}

/// Integrates `u_t = ∫J(y)[u(x-y) - u(x)]dy + c(x) u (1-u)` by explicit Euler.
pub fn simulate(
    reaction: &ReactionSpec,
    weights: &StencilWeights,
    u0: &GridField,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<Trajectory> {
    let rates: Vec<f64> = (0..u0.len()).map(|k| reaction.field.evaluate(u0.grid.coord(k))).collect();
    integrate(&rates, weights, u0, t_end, dt, 1.0, reaction.field.c_max, snapshot_every)
}

/// Integrates the ε-rescaled equation on the macroscopic grid of `u0`.
///
/// The kernel is sampled at the microscopic spacing `H / ε`, so the offsets
/// `ε y_k` are exact multiples of the macroscopic spacing `H`.
pub fn simulate_scaled(
    epsilon: f64,
    reaction: &ReactionSpec,
    kernel: &Kernel,
    u0: &GridField,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<Trajectory> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParam(format!("epsilon must be positive, got {epsilon}")));
    }
    let h = u0.grid.spacing;
    if epsilon * kernel.r_bar / h < 8.0 - 1e-9 {
        return Err(Error::InvalidParam(format!(
            "spacing {h} resolves epsilon * r_bar = {} with fewer than 8 nodes",
            epsilon * kernel.r_bar
        )));
    }
    let micro = build_weights(kernel, h / epsilon)?;
    let weights = micro.with_spacing(h);
    let rates: Vec<f64> = (0..u0.len())
        .map(|k| {
            let x = u0.grid.coord(k);
            reaction.field.evaluate([x[0] / epsilon, x[1] / epsilon])
        })
        .collect();
    integrate(&rates, &weights, u0, t_end, dt, epsilon, reaction.field.c_max, snapshot_every)
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    rates: &[f64],
    weights: &StencilWeights,
    u0: &GridField,
    t_end: f64,
    dt: f64,
    epsilon: f64,
    c_max: f64,
    snapshot_every: usize,
) -> Result<Trajectory> {
    let bound = CFL_THETA * epsilon / (weights.j_bar + c_max);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParam("final time must be nonnegative".into()));
    }
    if weights.dimension != u0.grid.dim {
        return Err(Error::InvalidParam("stencil and field dimensions differ".into()));
    }
    check_range(&u0.values, 0)?;
    let every = snapshot_every.max(1);
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let rate = dt / epsilon;
    let grid = &u0.grid;
    let mut times = vec![0.0];
    let mut snapshots = vec![u0.clone()];
    let mut u = u0.values.clone();
    let mut next = vec![0.0; u.len()];
    for m in 1..=steps {
        next.par_iter_mut().enumerate().try_for_each(|(x, out)| -> Result<()> {
            let ux = u[x];
            let mut diff = 0.0;
            for (w, o) in weights.weights.iter().zip(&weights.offsets) {
                let nb = grid.neighbor(x, [-o[0], -o[1]]).ok_or(Error::HaloMissing { node: x, offset: *o })?;
                diff += w * (u[nb] - ux);
            }
            *out = ux + rate * (diff + rates[x] * ux * (1.0 - ux));
            Ok(())
        })?;
        std::mem::swap(&mut u, &mut next);
        check_range(&u, m)?;
        if m % every == 0 || m == steps {
            times.push(m as f64 * dt);
            snapshots.push(GridField { grid: grid.clone(), values: u.clone() });
        }
    }
    Ok(Trajectory { times, snapshots })
}

fn check_range(u: &[f64], step: usize) -> Result<()> {
    match u.iter().position(|v| !(*v >= -RANGE_SLACK && *v <= 1.0 + RANGE_SLACK)) {
        Some(node) => Err(Error::RangeViolation { node, step, value: u[node] }),
        None => Ok(()),
    }
}

/// `φ = ε log(max(u, floor))`.
pub fn hopf_cole(u: &GridField, epsilon: f64, floor: f64) -> Result<GridField> {
    if !(floor > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParam("Hopf-Cole needs floor > 0 and epsilon > 0".into()));
    }
    let values = u.values.iter().map(|v| epsilon * v.max(floor).ln()).collect();
    Ok(GridField { grid: u.grid.clone(), values })
}

/// `u = exp(φ / ε)`.
pub fn inverse_hopf_cole(phi: &GridField, epsilon: f64) -> GridField {
    let values = phi.values.iter().map(|v| (v / epsilon).exp()).collect();
    GridField { grid: phi.grid.clone(), values }
}

/// Linear-interpolated crossings of `u = level` along grid lines.
pub fn extract_front(u: &GridField, level: f64) -> Result<Vec<Point>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParam(format!("front level {level} must lie in (0, 1)")));
    }
    let pts = level_crossings(u, level);
    if pts.is_empty() {
        Err(Error::EmptyFront)
    } else {
        Ok(pts)
    }
}

/// Crossings of an arbitrary level, without the `(0, 1)` restriction.
pub fn level_crossings(u: &GridField, level: f64) -> Vec<Point> {
    let g = &u.grid;
    let h = g.spacing;
    let mut pts = Vec::new();
    for node in 0..g.len() {
        let a = u.values[node] - level;
        let z = g.coord(node);
        if a == 0.0 {
            pts.push(z);
            continue;
        }
        for axis in 0..g.dim {
            let mut o = [0, 0];
            o[axis] = 1;
            let Some(nb) = g.neighbor(node, o) else { continue };
            let b = u.values[nb] - level;
            if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
                let s = a / (a - b);
                let mut p = z;
                p[axis] += s * h;
                pts.push(p);
            }
        }
    }
    pts
}

/// Symmetric Hausdorff distance between two nonempty point sets.
pub fn hausdorff(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyFront);
    }
    let gap =
        |p: &Point, set: &[Point]| set.iter().map(|q| norm([p[0] - q[0], p[1] - q[1]])).fold(f64::INFINITY, f64::min);
    Ok(a.iter().map(|p| gap(p, b)).chain(b.iter().map(|p| gap(p, a))).fold(0.0, f64::max))
}

/// Least-squares slope of the rightmost front position against time over
/// the stamps inside `window`; returns `(speed, rms residual)`.
pub fn measure_speed_1d(traj: &Trajectory, level: f64, window: (f64, f64)) -> Result<(f64, f64)> {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        if *t < window.0 - 1e-12 || *t > window.1 + 1e-12 {
            continue;
        }
        let front = extract_front(snap, level)?;
        let x = front.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        ts.push(*t);
        xs.push(x);
    }
    if ts.len() < 2 {
        return Err(Error::InvalidParam("speed fit needs at least two stamps in the window".into()));
    }
    Ok(linear_fit(&ts, &xs))
}

/// Slope and RMS residual of the least-squares line through `(t, x)`.
pub(crate) fn linear_fit(ts: &[f64], xs: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let xm = xs.iter().sum::<f64>() / n;
    let stt: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let stx: f64 = ts.iter().zip(xs).map(|(t, x)| (t - tm) * (x - xm)).sum();
    let slope = stx / stt;
    let rms = (ts.iter().zip(xs).map(|(t, x)| (x - xm - slope * (t - tm)).powi(2)).sum::<f64>() / n).sqrt();
    (slope, rms)
}
