//! The metric problem `J̄ - Σ w_k e^{-y_k·p} e^{m(z - y_k) - m(z)} - c(z) = μ`
//! outside the unit ball around `z1`, with `m = 0` on that ball, and its
//! large-scale radial limits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::extrapolate_linear;
use crate::error::{Error, Result};
use crate::grid::{dot, norm, Grid, GridField, Point};
use crate::media::CoefficientField;
use crate::nonlocal::StencilWeights;
use crate::table::HamiltonianTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    /// Inside the unit ball around the center: boundary data.
    Ball,
    Free,
    /// Past the truncation radius: held at the barrier.
    Outer,
}

#[derive(Clone, Debug)]
pub struct MetricSolution {
    pub p: Point,
    pub mu: f64,
    pub z1: Point,
    pub r_dom: f64,
    pub m: GridField,
    pub a1: f64,
    pub a2: f64,
    /// Largest `|m|` on free nodes within one cell of the unit ball.
    pub jump: f64,
    pub jump_bound: f64,
    /// Largest oscillation of `m` over unit balls inside the trusted region.
    pub local_osc: f64,
    pub sweeps: usize,
    pub converged: bool,
    r_bar: f64,
}

/// Controls for the Gauss–Seidel iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub r_dom: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl MetricSolution {
    /// Linear (bilinear in 2-D) interpolation of `m`.
    pub fn value_at(&self, z: Point) -> f64 {
        let g = &self.m.grid;
        let h = g.spacing;
        let fx = (z[0] - g.origin[0]) / h;
        let i = (fx.floor() as i64).clamp(0, g.shape[0] as i64 - 2) as usize;
        let s = fx - i as f64;
        if g.dim == 1 {
            return self.m.values[i] * (1.0 - s) + self.m.values[i + 1] * s;
        }
        let fy = (z[1] - g.origin[1]) / h;
        let j = (fy.floor() as i64).clamp(0, g.shape[1] as i64 - 2) as usize;
        let t = fy - j as f64;
        let v = |a: usize, b: usize| self.m.values[g.index(a, b)];
        (1.0 - t) * ((1.0 - s) * v(i, j) + s * v(i + 1, j)) + t * ((1.0 - s) * v(i, j + 1) + s * v(i + 1, j + 1))
    }

    /// Within `r_dom - r̄` of the center, away from the truncation layer.
    pub fn trusted(&self, z: Point) -> bool {
        norm([z[0] - self.z1[0], z[1] - self.z1[1]]) <= self.r_dom - self.r_bar + 1e-12
    }
}

struct Setup {
    grid: Grid,
    /// Offset of each node from the center, computed from integer indices.
    rel: Vec<Point>,
    role: Vec<Role>,
    denom: Vec<f64>,
    /// `ln w_k - y_k·p` for the non-central stencil entries.
    log_coeff: Vec<f64>,
    offsets: Vec<[i32; 2]>,
}

#[allow(clippy::too_many_arguments)]
fn build_setup(
    field: &CoefficientField,
    weights: &StencilWeights,
    p: Point,
    mu: f64,
    z1: Point,
    r_dom: f64,
) -> Result<Setup> {
    let h = weights.spacing;
    let dim = weights.dimension;
    let half = ((r_dom / h) - 1e-9).ceil() as i64 + weights.reach() as i64 + 1;
    let n = (2 * half + 1) as usize;
    let origin = [z1[0] - half as f64 * h, if dim == 2 { z1[1] - half as f64 * h } else { 0.0 }];
    let grid = Grid::new(dim, n, h, origin, false)?;
    let mut rel = Vec::with_capacity(grid.len());
    let mut role = Vec::with_capacity(grid.len());
    let mut denom = Vec::with_capacity(grid.len());
    let w0 = weights.center_weight();
    for node in 0..grid.len() {
        let (i, j) = grid.ij(node);
        let r = [(i as i64 - half) as f64 * h, if dim == 2 { (j as i64 - half) as f64 * h } else { 0.0 }];
        let d = norm(r);
        let kind = if d <= 1.0 {
            Role::Ball
        } else if d <= r_dom {
            Role::Free
        } else {
            Role::Outer
        };
        let c = field.evaluate([z1[0] + r[0], z1[1] + r[1]]);
        let den = weights.j_bar - c - mu - w0;
        if kind == Role::Free && !(den > 0.0) {
            return Err(Error::IllPosed { mu, bound: weights.j_bar - c - w0 });
        }
        rel.push(r);
        role.push(kind);
        denom.push(den);
    }
    let mut log_coeff = Vec::new();
    let mut offsets = Vec::new();
    for ((w, y), o) in weights.weights.iter().zip(&weights.vectors).zip(&weights.offsets).skip(1) {
        log_coeff.push(w.ln() - dot(*y, p));
        offsets.push(*o);
    }
    Ok(Setup { grid, rel, role, denom, log_coeff, offsets })
}

impl Setup {
    /// Value of `m(z)` solving the equation with the neighbors frozen.
    #[inline]
    fn root(&self, m: &[f64], z: usize) -> f64 {
        let term = |k: usize| {
            let o = self.offsets[k];
            let nb = self.grid.neighbor(z, [-o[0], -o[1]]).expect("halo covers the stencil");
            self.log_coeff[k] + m[nb]
        };
        let n = self.offsets.len();
        let top = (0..n).map(term).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = (0..n).map(|k| (term(k) - top).exp()).sum();
        top + s.ln() - self.denom[z].ln()
    }

    fn initial(&self, a1: f64, a2: f64) -> Vec<f64> {
        self.rel.iter().zip(&self.role).map(|(r, k)| if *k == Role::Ball { 0.0 } else { -a1 * norm(*r) - a2 }).collect()
    }

    fn is_subsolution(&self, m: &[f64]) -> bool {
        (0..m.len()).all(|z| self.role[z] != Role::Free || self.root(m, z) >= m[z] - 1e-12)
    }
}

/// Smallest barrier slope (to bisection accuracy) whose barrier is a
/// discrete subsolution.
fn barrier_slope(setup: &Setup) -> Result<f64> {
    let mut hi = 0.25;
    let mut tries = 0;
    while !setup.is_subsolution(&setup.initial(hi, 0.0)) {
        hi *= 2.0;
        tries += 1;
        if tries > 30 {
            return Err(Error::InvalidParam("no barrier slope makes a subsolution".into()));
        }
    }
    let mut lo = if tries == 0 { 0.0 } else { hi / 2.0 };
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if setup.is_subsolution(&setup.initial(mid, 0.0)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Monotone Gauss–Seidel from the barrier up to the smallest discrete
/// solution above it.
#[allow(clippy::too_many_arguments)]
pub fn solve_metric(
    field: &CoefficientField,
    weights: &StencilWeights,
    table: &HamiltonianTable,
    p: Point,
    mu: f64,
    z1: Point,
    opts: &MetricOptions,
) -> Result<MetricSolution> {
    let bound = table.eval(p) - table.error_at(p);
    if !(mu < bound) {
        return Err(Error::IllPosed { mu, bound });
    }
    if opts.r_dom < 8.0 {
        return Err(Error::InvalidParam(format!("domain radius {} must be at least 8", opts.r_dom)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParam("tolerance must be positive".into()));
    }
    let setup = build_setup(field, weights, p, mu, z1, opts.r_dom)?;
    let a1 = barrier_slope(&setup)?;
    let a2 = 0.0;
    let mut m = setup.initial(a1, a2);
    let free: Vec<usize> = (0..m.len()).filter(|z| setup.role[*z] == Role::Free).collect();
    let mut sweeps = 0;
    let mut converged = false;
    let mut change = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        change = 0.0;
        let forward = sweeps % 2 == 0;
        for k in 0..free.len() {
            let z = if forward { free[k] } else { free[free.len() - 1 - k] };
            let new = setup.root(&m, z);
            change = f64::max(change, (new - m[z]).abs());
            m[z] = new;
        }
        sweeps += 1;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::MaxIterExceeded { iterations: sweeps, residual: change, best: None });
    }
    let h = weights.spacing;
    let jump = free.iter().filter(|z| norm(setup.rel[**z]) <= 1.0 + h + 1e-12).map(|z| m[*z].abs()).fold(0.0, f64::max);
    let m = GridField { grid: setup.grid.clone(), values: m };
    let local_osc = local_oscillation(&m, &setup.rel, opts.r_dom - weights.r_bar - 1.0);
    Ok(MetricSolution {
        p,
        mu,
        z1,
        r_dom: opts.r_dom,
        m,
        a1,
        a2,
        jump,
        jump_bound: a1 * (1.0 + h) + a2,
        local_osc,
        sweeps,
        converged,
        r_bar: weights.r_bar,
    })
}

/// `max_z osc_{B(z, 1)} m` over centers within `reach` of the origin.
fn local_oscillation(m: &GridField, rel: &[Point], reach: f64) -> f64 {
    let g = &m.grid;
    let k = (1.0 / g.spacing).floor() as i32;
    let mut ball = Vec::new();
    let ys = if g.dim == 2 { -k..=k } else { 0..=0 };
    for j in ys {
        for i in -k..=k {
            if ((i * i + j * j) as f64) * g.spacing * g.spacing <= 1.0 + 1e-12 {
                ball.push([i, j]);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for z in 0..g.len() {
        if norm(rel[z]) > reach {
            continue;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for o in &ball {
            if let Some(nb) = g.neighbor(z, *o) {
                lo = lo.min(m.values[nb]);
                hi = hi.max(m.values[nb]);
            }
        }
        worst = worst.max(hi - lo);
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricLimit {
    pub e: Point,
    pub t_list: Vec<f64>,
    pub ratios: Vec<f64>,
    pub limit: f64,
    pub fit_residual: f64,
}

/// `t⁻¹ m(t e)` for the metric problem centered at the origin, with the
/// limit fitted linearly in `1/t`.
#[allow(clippy::too_many_arguments)]
pub fn radial_limit(
    field: &CoefficientField,
    weights: &StencilWeights,
    table: &HamiltonianTable,
    p: Point,
    mu: f64,
    e: Point,
    t_list: &[f64],
    opts: &MetricOptions,
) -> Result<MetricLimit> {
    let sol = solve_metric(field, weights, table, p, mu, [0.0, 0.0], opts)?;
    ratios_along(&sol, e, t_list)
}

/// Radial ratios read off an existing solution.
pub fn ratios_along(sol: &MetricSolution, e: Point, t_list: &[f64]) -> Result<MetricLimit> {
    let len = norm(e);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!("direction must be a unit vector, |e| = {len}")));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| !(w[1] > w[0])) || !(t_list[0] > 0.0) {
        return Err(Error::InvalidParam("t_list must be positive and increasing".into()));
    }
    let t_max = t_list[t_list.len() - 1];
    if t_max > sol.r_dom - 2.0 * sol.r_bar + 1e-12 {
        return Err(Error::InvalidParam(format!(
            "largest t = {t_max} exceeds r_dom - 2 r_bar = {}",
            sol.r_dom - 2.0 * sol.r_bar
        )));
    }
    let ratios: Vec<f64> =
        t_list.iter().map(|t| sol.value_at([sol.z1[0] + t * e[0], sol.z1[1] + t * e[1]]) / t).collect();
    let (limit, fit_residual) = if t_list.len() == 1 {
        (ratios[0], 0.0)
    } else {
        let inv: Vec<f64> = t_list.iter().map(|t| 1.0 / t).collect();
        extrapolate_linear(&inv, &ratios)
    };
    Ok(MetricLimit { e, t_list: t_list.to_vec(), ratios, limit, fit_residual })
}

/// `inf { z·q : H̄(p + q) = μ }` over the piecewise-linear level set of the
/// table.
pub fn dual_formula(table: &HamiltonianTable, p: Point, mu: f64, z: Point) -> Result<f64> {
    let bound = table.max_value() - table.max_error_bar();
    if !(mu < bound) {
        return Err(Error::IllPosed { mu, bound });
    }
    if z == [0.0, 0.0] {
        return Ok(0.0);
    }
    let pts = level_set(table, mu)?;
    Ok(pts.iter().map(|q| dot(z, [q[0] - p[0], q[1] - p[1]])).fold(f64::INFINITY, f64::min))
}

/// Vertices of the piecewise-linear curve `{H̄ = μ}` on the table edges.
pub fn level_set(table: &HamiltonianTable, mu: f64) -> Result<Vec<Point>> {
    let nx = table.axes[0].len();
    let ny = if table.dim() == 2 { table.axes[1].len() } else { 1 };
    let f = |i: usize, j: usize| table.node(i, j) - mu;
    for j in 0..ny {
        for i in 0..nx {
            let edge = i == 0 || i == nx - 1 || (table.dim() == 2 && (j == 0 || j == ny - 1));
            if edge && f(i, j) >= 0.0 {
                return Err(Error::LevelSetEscapesTable { level: mu });
            }
        }
    }
    let coord =
        |i: usize, j: usize| -> Point { [table.axes[0][i], if table.dim() == 2 { table.axes[1][j] } else { 0.0 }] };
    let mut pts = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let a = f(i, j);
            if a == 0.0 {
                pts.push(coord(i, j));
                continue;
            }
            let mut edges = vec![(i + 1, j)];
            if table.dim() == 2 {
                edges.push((i, j + 1));
            }
            for (i2, j2) in edges {
                if i2 >= nx || j2 >= ny {
                    continue;
                }
                let b = f(i2, j2);
                if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
                    let s = a / (a - b);
                    let (p0, p1) = (coord(i, j), coord(i2, j2));
                    pts.push([p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])]);
                }
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::LevelSetEscapesTable { level: mu });
    }
    Ok(pts)
}

/// Outcome of sampled superadditivity checks
/// `m(z, z1) ≥ m(z, z2) + m(z2, z1) - C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Superadditivity {
    pub triples: usize,
    /// Largest `m(z, z2) + m(z2, z1) - m(z, z1)` over the sample.
    pub worst_defect: f64,
    /// The constant `C`: the largest local oscillation among the solutions.
    pub constant: f64,
    pub violations: usize,
}

/// Samples `count` triples from solutions centered at different points of
/// the same medium. Each triple draws two distinct centers `z1`, `z2` and a
/// point `z` trusted by both solutions.
pub fn superadditivity_check(sols: &[MetricSolution], count: usize, seed: u64) -> Result<Superadditivity> {
    if sols.len() < 2 {
        return Err(Error::InvalidParam("superadditivity needs at least two centers".into()));
    }
    let dim = sols[0].m.grid.dim;
    let constant = sols.iter().map(|s| s.local_osc).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..count {
        let a = rng.gen_range(0..sols.len());
        let mut b = rng.gen_range(0..sols.len() - 1);
        if b >= a {
            b += 1;
        }
        let (s1, s2) = (&sols[a], &sols[b]);
        if !s1.trusted(s2.z1) {
            return Err(Error::InvalidParam("centers must lie in each other's trusted region".into()));
        }
        let reach = s1.r_dom - s1.r_bar;
        let mut z = None;
        for _ in 0..10_000 {
            let c = [
                s1.z1[0] + rng.gen_range(-reach..=reach),
                if dim == 2 { s1.z1[1] + rng.gen_range(-reach..=reach) } else { 0.0 },
            ];
            if s1.trusted(c) && s2.trusted(c) {
                z = Some(c);
                break;
            }
        }
        let z = z.ok_or_else(|| Error::InvalidParam("trusted regions of the centers do not overlap".into()))?;
        let defect = s2.value_at(z) + s1.value_at(s2.z1) - s1.value_at(z);
        worst = worst.max(defect);
        if defect > constant {
            violations += 1;
        }
    }
    Ok(Superadditivity { triples: count, worst_defect: worst, constant, violations })
}

/// Largest nodewise difference between the solution for the medium shifted
/// by `a` and the solution for the original medium recentered at `z1 + a`.
#[allow(clippy::too_many_arguments)]
pub fn shift_discrepancy(
    field: &CoefficientField,
    weights: &StencilWeights,
    table: &HamiltonianTable,
    p: Point,
    mu: f64,
    z1: Point,
    a: Point,
    opts: &MetricOptions,
) -> Result<f64> {
    let shifted = solve_metric(&field.shift(a), weights, table, p, mu, z1, opts)?;
    let moved = solve_metric(field, weights, table, p, mu, [z1[0] + a[0], z1[1] + a[1]], opts)?;
    Ok(shifted.m.values.iter().zip(&moved.m.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{make_checkerboard, make_constant, MediaContext};
    use crate::nonlocal::{build_weights, Kernel};
    use crate::table::uniform_axis;

    fn sinh_ratio(q: f64) -> f64 {
        if q == 0.0 {
            1.0
        } else {
            q.sinh() / q
        }
    }

    fn homogeneous_table() -> HamiltonianTable {
        HamiltonianTable::from_fn(vec![uniform_axis(-4.0, 4.0, 129)], |p| -sinh_ratio(p[0])).unwrap()
    }

    /// Root of `sinh(q)/q = 2` by bisection.
    fn q_star() -> f64 {
        let (mut lo, mut hi) = (1.0, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if sinh_ratio(mid) < 2.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }

    #[test]
    fn dual_formula_homogeneous_values() {
        let t = homogeneous_table();
        let q = q_star();
        assert!((q - 2.1773).abs() < 1e-3);
        assert_eq!(dual_formula(&t, [0.0, 0.0], -2.0, [0.0, 0.0]).unwrap(), 0.0);
        let d = dual_formula(&t, [0.0, 0.0], -2.0, [1.0, 0.0]).unwrap();
        assert!((d + q).abs() < 2e-3, "{d}");
        let d2 = dual_formula(&t, [0.0, 0.0], -2.0, [2.0, 0.0]).unwrap();
        assert_eq!(d2, 2.0 * d);
        assert!(matches!(dual_formula(&t, [0.0, 0.0], -0.5, [1.0, 0.0]), Err(Error::IllPosed { .. })));
        assert!(matches!(dual_formula(&t, [0.0, 0.0], -100.0, [1.0, 0.0]), Err(Error::LevelSetEscapesTable { .. })));
    }

    #[test]
    fn homogeneous_metric_slope() {
        let ctx = MediaContext { dimension: 1, period_length: 16.0, kappa: 0.5, j_bar: 1.0 };
        let f = make_constant(&ctx, 1.0).unwrap();
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.0625).unwrap();
        let t = homogeneous_table();
        let opts = MetricOptions { r_dom: 16.0, tol: 1e-10, max_sweeps: 5000 };
        let sol = solve_metric(&f, &w, &t, [0.0, 0.0], -2.0, [0.0, 0.0], &opts).unwrap();
        assert!(sol.a1 >= 2.0);
        assert!(sol.jump <= sol.jump_bound);
        let g = &sol.m.grid;
        for z in 0..g.len() {
            if g.coord(z)[0].abs() <= 1.0 {
                assert_eq!(sol.m.values[z], 0.0);
            }
        }
        let lim = ratios_along(&sol, [1.0, 0.0], &[4.0, 8.0, 12.0]).unwrap();
        assert!((lim.limit + q_star()).abs() < 0.03 * q_star(), "{lim:?}");
        let left = ratios_along(&sol, [-1.0, 0.0], &[4.0, 8.0, 12.0]).unwrap();
        assert!((left.limit - lim.limit).abs() < 1e-9);
    }

    #[test]
    fn ill_posed_levels_are_rejected() {
        let ctx = MediaContext { dimension: 1, period_length: 16.0, kappa: 0.5, j_bar: 1.0 };
        let f = make_constant(&ctx, 1.0).unwrap();
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.125).unwrap();
        let opts = MetricOptions { r_dom: 10.0, tol: 1e-9, max_sweeps: 100 };
        let err = solve_metric(&f, &w, &homogeneous_table(), [0.0, 0.0], -0.99, [0.0, 0.0], &opts);
        assert!(matches!(err, Err(Error::IllPosed { .. })));
    }

    #[test]
    fn superadditivity_and_shift_on_checkerboard() {
        let ctx = MediaContext { dimension: 1, period_length: 16.0, kappa: 0.1, j_bar: 1.0 };
        let f = make_checkerboard(&ctx, 4, 1.0, 0.6, 1.0, 0.1).unwrap();
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.0625).unwrap();
        let t = HamiltonianTable::from_fn(vec![uniform_axis(-4.0, 4.0, 65)], |p| -sinh_ratio(p[0]) + 0.2).unwrap();
        let opts = MetricOptions { r_dom: 10.0, tol: 1e-10, max_sweeps: 10_000 };
        let sols: Vec<_> = [-2.0, 0.0, 1.5]
            .iter()
            .map(|c| solve_metric(&f, &w, &t, [0.0, 0.0], -2.0, [*c, 0.0], &opts).unwrap())
            .collect();
        let rep = superadditivity_check(&sols, 50, 7).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
        assert!(rep.constant > 0.0);
        let d = shift_discrepancy(&f, &w, &t, [0.0, 0.0], -2.0, [0.0, 0.0], [0.75, 0.0], &opts).unwrap();
        assert_eq!(d, 0.0);
    }
}
