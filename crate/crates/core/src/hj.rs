//! Monotone upwind schemes for `max(φ_t + H̄(Dφ), φ) = 0` and the
//! homogenized front `{φ = 0}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dot, norm, Grid, GridField, Point};
use crate::kpp::{level_crossings, linear_fit, Region};
use crate::table::HamiltonianTable;

#[derive(Clone, Debug)]
pub struct ObstacleState {
    pub phi: GridField,
    pub t: f64,
    /// Finite stand-in for `-∞` off the initial set.
    pub m_big: f64,
    pub alpha: [f64; 2],
}

impl ObstacleState {
    /// Default front threshold `1e-6 · M_big`.
    pub fn default_delta(&self) -> f64 {
        1e-6 * self.m_big
    }
}

/// `2 T max|H̄| + 10`.
pub fn sentinel(table: &HamiltonianTable, t_end: f64) -> f64 {
    let hmax = table.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    2.0 * t_end * hmax + 10.0
}

/// Largest time step allowed by `dt <= h / (2 Σ α_i)`.
pub fn vi_cfl(table: &HamiltonianTable, h: f64) -> f64 {
    let s: f64 = (0..table.dim()).map(|d| table.max_slope(d)).sum();
    h / (2.0 * s)
}

/// Numerical Hamiltonian of the scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flux {
    /// Exact Godunov flux of the piecewise-linear table; one-dimensional tables only.
    #[default]
    Godunov,
    LaxFriedrichs,
}

/// Lax–Friedrichs numerical Hamiltonian `H̄((p⁻+p⁺)/2) - Σ α_i (p⁺_i - p⁻_i)/2`.
pub fn numerical_hamiltonian(table: &HamiltonianTable, alpha: [f64; 2], pm: Point, pp: Point) -> f64 {
    lax_friedrichs(table, alpha, pm, pp).0
}

fn lax_friedrichs(table: &HamiltonianTable, alpha: [f64; 2], pm: Point, pp: Point) -> (f64, Point) {
    let avg = [0.5 * (pm[0] + pp[0]), 0.5 * (pm[1] + pp[1])];
    let mut h = table.eval(avg);
    for d in 0..table.dim() {
        h -= 0.5 * alpha[d] * (pp[d] - pm[d]);
    }
    (h, avg)
}

/// Godunov flux for `φ_t + H̄(φ_x) = 0`: the maximum of `H̄` over
/// `[p⁺, p⁻]` when `p⁻ ≥ p⁺`, the minimum over `[p⁻, p⁺]` otherwise.
pub fn godunov(table: &HamiltonianTable, pm: f64, pp: f64) -> (f64, f64) {
    let (lo, hi, want_max) = if pm >= pp { (pp, pm, true) } else { (pm, pp, false) };
    let better = |a: f64, b: f64| if want_max { a > b } else { a < b };
    let mut best = (table.eval([lo, 0.0]), lo);
    let v = table.eval([hi, 0.0]);
    if better(v, best.0) {
        best = (v, hi);
    }
    let axis = &table.axes[0];
    let start = axis.partition_point(|a| *a <= lo);
    for (k, a) in axis.iter().enumerate().skip(start) {
        if *a >= hi {
            break;
        }
        if better(table.values[k], best.0) {
            best = (table.values[k], *a);
        }
    }
    best
}

fn flux_value(table: &HamiltonianTable, flux: Flux, alpha: [f64; 2], pm: Point, pp: Point) -> (f64, Point) {
    match flux {
        Flux::Godunov => {
            let (v, p) = godunov(table, pm[0], pp[0]);
            (v, [p, 0.0])
        }
        Flux::LaxFriedrichs => lax_friedrichs(table, alpha, pm, pp),
    }
}

#[inline]
fn clamped(grid: &Grid, node: usize, offset: [i32; 2]) -> usize {
    grid.neighbor(node, offset).unwrap_or(node)
}

/// One-sided differences `(D⁻φ, D⁺φ)` at `node`; a truncated grid repeats
/// its edge values.
pub fn one_sided(phi: &GridField, node: usize) -> (Point, Point) {
    let g = &phi.grid;
    let h = g.spacing;
    let mut pm = [0.0; 2];
    let mut pp = [0.0; 2];
    let c = phi.values[node];
    for d in 0..g.dim {
        let mut o = [0, 0];
        o[d] = 1;
        let fwd = phi.values[clamped(g, node, o)];
        o[d] = -1;
        let bwd = phi.values[clamped(g, node, o)];
        pm[d] = (c - bwd) / h;
        pp[d] = (fwd - c) / h;
    }
    (pm, pp)
}

/// `min(0, φ - dt Ĥ)` at one node.
pub fn vi_update(table: &HamiltonianTable, flux: Flux, alpha: [f64; 2], phi: &GridField, node: usize, dt: f64) -> f64 {
    let (pm, pp) = one_sided(phi, node);
    (phi.values[node] - dt * flux_value(table, flux, alpha, pm, pp).0).min(0.0)
}

/// Marches the variational inequality from `φ = 0` on `g0`, `-M_big`
/// elsewhere, recording every `snapshot_every`-th step and the last one.
///
/// Slopes outside the table are evaluated by linear extension. A node that
/// enters the front region `{φ ≥ -δ}` through such an extended value raises
/// [`Error::TableRangeExceeded`].
#[allow(clippy::too_many_arguments)]
pub fn solve_vi(
    table: &HamiltonianTable,
    g0: &Region,
    grid: &Grid,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
    flux: Flux,
) -> Result<Vec<ObstacleState>> {
    if table.dim() != grid.dim {
        return Err(Error::InvalidParam("table and grid dimensions differ".into()));
    }
    if flux == Flux::Godunov && table.dim() != 1 {
        return Err(Error::InvalidParam("the Godunov flux needs a one-dimensional table".into()));
    }
    let bound = vi_cfl(table, grid.spacing);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParam("final time must be nonnegative".into()));
    }
    let mut alpha = [0.0; 2];
    for (d, a) in alpha.iter_mut().enumerate().take(table.dim()) {
        *a = table.max_slope(d);
    }
    let m_big = sentinel(table, t_end);
    let delta = 1e-6 * m_big;
    let dim = grid.dim;
    let phi0 = GridField::from_fn(grid.clone(), |z| if g0.contains(z, dim) { 0.0 } else { -m_big });
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let every = snapshot_every.max(1);
    let mut states = vec![ObstacleState { phi: phi0.clone(), t: 0.0, m_big, alpha }];
    let mut phi = phi0;
    let mut next = vec![0.0; grid.len()];
    for m in 1..=steps {
        next.par_iter_mut().enumerate().try_for_each(|(z, out)| -> Result<()> {
            let (pm, pp) = one_sided(&phi, z);
            let (hz, at) = flux_value(table, flux, alpha, pm, pp);
            let new = (phi.values[z] - dt * hz).min(0.0);
            if new >= -delta && phi.values[z] < -delta && !table.contains(at) {
                return Err(Error::TableRangeExceeded { node: z, slope: at });
            }
            *out = new;
            Ok(())
        })?;
        std::mem::swap(&mut phi.values, &mut next);
        if m % every == 0 || m == steps {
            states.push(ObstacleState { phi: phi.clone(), t: m as f64 * dt, m_big, alpha });
        }
    }
    Ok(states)
}

/// Mask of `{φ ≥ -δ}`.
pub fn front_indicator(state: &ObstacleState, delta: f64) -> Vec<bool> {
    state.phi.values.iter().map(|v| *v >= -delta).collect()
}

/// Crossings of `φ = -δ` along grid lines: the boundary of the front region.
pub fn front_boundary(state: &ObstacleState, delta: f64) -> Vec<Point> {
    level_crossings(&state.phi, -delta)
}

/// Largest `z·e` over the front boundary.
pub fn front_extent(state: &ObstacleState, delta: f64, e: Point) -> Result<f64> {
    let pts = front_boundary(state, delta);
    if pts.is_empty() {
        return Err(Error::EmptyFront);
    }
    Ok(pts.iter().map(|p| dot(*p, e)).fold(f64::NEG_INFINITY, f64::max))
}

/// Least-squares growth rate of [`front_extent`] over states in `window`.
pub fn front_speed(states: &[ObstacleState], delta: f64, e: Point, window: (f64, f64)) -> Result<f64> {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for s in states {
        if s.t >= window.0 - 1e-12 && s.t <= window.1 + 1e-12 {
            ts.push(s.t);
            xs.push(front_extent(s, delta, e)?);
        }
    }
    if ts.len() < 2 {
        return Err(Error::InvalidParam("speed fit needs at least two states in the window".into()));
    }
    Ok(linear_fit(&ts, &xs).0)
}

/// Rays tested in two dimensions.
const RAYS_2D: usize = 256;
/// Scan points per ray before golden-section refinement.
const RAY_SCAN: usize = 400;

/// `min { G(q) / (q·e) : q·e > 0 }` with `G(q) = -H̄(-q)`.
pub fn predicted_speed(table: &HamiltonianTable, e: Point) -> Result<f64> {
    let len = norm(e);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!("direction must be a unit vector, |e| = {len}")));
    }
    let rays: Vec<Point> = if table.dim() == 1 {
        vec![[e[0].signum(), 0.0]]
    } else {
        let base = e[1].atan2(e[0]);
        (0..RAYS_2D)
            .map(|k| {
                let th = base + std::f64::consts::TAU * k as f64 / RAYS_2D as f64;
                [th.cos(), th.sin()]
            })
            .filter(|d| dot(*d, e) > 1e-3)
            .collect()
    };
    let mut best = f64::INFINITY;
    for d in rays {
        best = best.min(ray_minimum(table, d, e)?);
    }
    Ok(best)
}

fn ray_minimum(table: &HamiltonianTable, d: Point, e: Point) -> Result<f64> {
    // largest s with -s d inside the table
    let mut s_max = f64::INFINITY;
    for k in 0..table.dim() {
        let (lo, hi) = table.range(k);
        if d[k] > 0.0 {
            s_max = s_max.min(-lo / d[k]);
        } else if d[k] < 0.0 {
            s_max = s_max.min(-hi / d[k]);
        }
    }
    let de = dot(d, e);
    let f = |s: f64| -table.eval([-s * d[0], -s * d[1]]) / (s * de);
    let mut arg = 1;
    let mut fmin = f64::INFINITY;
    for k in 1..=RAY_SCAN {
        let v = f(s_max * k as f64 / RAY_SCAN as f64);
        if v < fmin {
            fmin = v;
            arg = k;
        }
    }
    if arg == RAY_SCAN {
        return Err(Error::LevelSetEscapesTable { level: -table.eval([-s_max * d[0], -s_max * d[1]]) });
    }
    let step = s_max / RAY_SCAN as f64;
    let (mut a, mut b) = ((arg - 1) as f64 * step, (arg + 1) as f64 * step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1.max(1e-12)), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1.max(1e-12));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    Ok(f1.min(f2).min(fmin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::uniform_axis;

    fn sinh_ratio(q: f64) -> f64 {
        if q == 0.0 {
            1.0
        } else {
            q.sinh() / q
        }
    }

    fn table(c0: f64) -> HamiltonianTable {
        HamiltonianTable::from_fn(vec![uniform_axis(-3.0, 3.0, 97)], move |p| 1.0 - sinh_ratio(p[0]) - c0).unwrap()
    }

    /// `min_q (sinh q / q - 1 + c0) / q` by dense scan.
    fn w_star(c0: f64) -> f64 {
        (1..=30000)
            .map(|k| {
                let q = k as f64 * 1e-4;
                (sinh_ratio(q) - 1.0 + c0) / q
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn predicted_speed_matches_scalar_minimum() {
        let t = table(1.0);
        let v = predicted_speed(&t, [1.0, 0.0]).unwrap();
        assert!((v - 0.9055).abs() < 2e-3, "{v}");
        assert!((v - w_star(1.0)).abs() < 2e-3);
        assert_eq!(v, predicted_speed(&t, [-1.0, 0.0]).unwrap());
        let speeds: Vec<f64> =
            [0.5, 1.0, 2.0].iter().map(|c| predicted_speed(&table(*c), [1.0, 0.0]).unwrap()).collect();
        assert!(speeds[0] < speeds[1] && speeds[1] < speeds[2]);
    }

    #[test]
    fn obstacle_and_monotonicity_in_time() {
        let t = table(1.0);
        let g = Grid::bounded(1, 241, 0.025, -3.0).unwrap();
        let dt = 0.9 * vi_cfl(&t, 0.025);
        let g0 = Region::Box { lo: [-1.0, 0.0], hi: [1.0, 0.0] };
        let states = solve_vi(&t, &g0, &g, 2.0, dt, 1, Flux::Godunov).unwrap();
        for w in states.windows(2) {
            for (a, b) in w[0].phi.values.iter().zip(&w[1].phi.values) {
                assert!(*b >= *a && *b <= 0.0);
            }
        }
        let first = &states[0];
        for z in 0..g.len() {
            if g0.contains(g.coord(z), 1) {
                assert!(states.iter().all(|s| s.phi.values[z] == 0.0));
            }
            assert_eq!(front_indicator(first, 1e-6)[z], g0.contains(g.coord(z), 1));
        }
        let delta = first.default_delta();
        let at_one = states.iter().find(|s| s.t >= 1.0).unwrap();
        let x1 = front_extent(at_one, delta, [1.0, 0.0]).unwrap();
        // first-order lag from the sharp initial set
        assert!(x1 <= 1.0 + w_star(1.0) + 1e-9 && x1 > 1.0 + w_star(1.0) - 6.0 * 0.025, "{x1}");
        let v = front_speed(&states, delta, [1.0, 0.0], (1.0, 2.0)).unwrap();
        assert!((v - w_star(1.0)).abs() < 0.02 * w_star(1.0), "{v}");
        let left = front_speed(&states, delta, [-1.0, 0.0], (1.0, 2.0)).unwrap();
        assert!((left - v).abs() < 1e-9);
    }

    #[test]
    fn lax_friedrichs_front_moves_at_the_same_speed() {
        let t = table(1.0);
        let g = Grid::bounded(1, 241, 0.025, -3.0).unwrap();
        let dt = 0.9 * vi_cfl(&t, 0.025);
        let g0 = Region::Box { lo: [-1.0, 0.0], hi: [1.0, 0.0] };
        let states = solve_vi(&t, &g0, &g, 2.0, dt, 1, Flux::LaxFriedrichs).unwrap();
        let v = front_speed(&states, states[0].default_delta(), [1.0, 0.0], (1.0, 2.0)).unwrap();
        assert!((v - w_star(1.0)).abs() < 0.05 * w_star(1.0), "{v}");
    }

    #[test]
    fn cfl_and_flux_dimension_are_enforced() {
        let t = table(1.0);
        let g = Grid::bounded(1, 41, 0.05, -1.0).unwrap();
        let g0 = Region::Box { lo: [-0.2, 0.0], hi: [0.2, 0.0] };
        let bad = 1.01 * vi_cfl(&t, 0.05);
        assert!(matches!(solve_vi(&t, &g0, &g, 0.1, bad, 1, Flux::Godunov), Err(Error::CflViolation { .. })));
        let t2 = HamiltonianTable::from_fn(vec![uniform_axis(-1.0, 1.0, 5), uniform_axis(-1.0, 1.0, 5)], |p| {
            -1.0 - p[0] * p[0] - p[1] * p[1]
        })
        .unwrap();
        let g2 = Grid::bounded(2, 21, 0.1, -1.0).unwrap();
        let g0 = Region::Ball { center: [0.0, 0.0], radius: 0.3 };
        assert!(solve_vi(&t2, &g0, &g2, 0.1, 0.01, 1, Flux::Godunov).is_err());
        assert!(solve_vi(&t2, &g0, &g2, 0.1, 0.9 * vi_cfl(&t2, 0.1), 1, Flux::LaxFriedrichs).is_ok());
    }

    #[test]
    fn godunov_flux_on_a_concave_table() {
        let t = table(1.0);
        // roof: the interval contains the maximum at 0
        assert_eq!(godunov(&t, 0.5, -0.5).0, -1.0);
        // valley: the smaller endpoint value
        let (v, p) = godunov(&t, -0.5, 1.0);
        assert_eq!(p, 1.0);
        assert!((v - t.eval([1.0, 0.0])).abs() < 1e-15);
        // degenerate interval is consistent
        assert!((godunov(&t, 0.7, 0.7).0 - t.eval([0.7, 0.0])).abs() < 1e-15);
    }

    #[test]
    fn one_step_is_consistent_on_smooth_data() {
        let t = table(1.0);
        for flux in [Flux::Godunov, Flux::LaxFriedrichs] {
            let mut errs = Vec::new();
            for h in [0.04, 0.02] {
                let g = Grid::bounded(1, (4.0 / h) as usize + 1, h, -2.0).unwrap();
                let phi = GridField::from_fn(g.clone(), |z| -0.5 * z[0] * z[0] - 1.0);
                let alpha = [t.max_slope(0), 0.0];
                let dt = 0.5 * vi_cfl(&t, h);
                let node = g.nearest([0.6, 0.0]);
                let rate = (vi_update(&t, flux, alpha, &phi, node, dt) - phi.values[node]) / dt;
                let x = g.coord(node)[0];
                errs.push((rate + t.eval([-x, 0.0])).abs());
            }
            assert!(errs[1] < 0.6 * errs[0] + 1e-12, "{flux:?} {errs:?}");
        }
    }
}
