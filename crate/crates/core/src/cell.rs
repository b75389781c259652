//! The λ-damped cell problem
//! `λ v + J̄ - Σ w_k e^{-y_k·p} e^{v(z - y_k) - v(z)} - c(z) = 0` on a torus,
//! and the effective Hamiltonian `H̄(p) = lim -λ v^λ(0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, Grid, GridField, Point};
use crate::media::CoefficientField;
use crate::nonlocal::{psi_quantity, transport_field, StencilWeights};
use crate::table::{HamiltonianTable, TableMeta};

/// Step-size safety factor against `1 / (λ + max Φ)`.
pub const DTAU_THETA: f64 = 0.9;

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub p: Point,
    pub lambda: f64,
    pub v: GridField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CellSolution {
    /// `-λ v^λ(0)`; the torus origin is node 0.
    pub fn hbar_sample(&self) -> f64 {
        -self.lambda * self.v.values[0]
    }

    /// `w = v - v(0)`.
    pub fn corrector(&self) -> GridField {
        let v0 = self.v.values[0];
        GridField { grid: self.v.grid.clone(), values: self.v.values.iter().map(|v| v - v0).collect() }
    }
}

/// Solver controls shared by every cell solve of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub grid: Grid,
    pub tol: f64,
    pub max_iter: usize,
}

fn check_setup(field: &CoefficientField, weights: &StencilWeights, grid: &Grid) -> Result<()> {
    if !grid.periodic {
        return Err(Error::InvalidParam("the cell problem lives on a periodic grid".into()));
    }
    if grid.dim != weights.dimension || grid.dim != field.dimension {
        return Err(Error::InvalidParam("grid, stencil and field dimensions differ".into()));
    }
    if (grid.spacing - weights.spacing).abs() > 1e-12 * grid.spacing {
        return Err(Error::InvalidParam("grid and stencil spacings differ".into()));
    }
    if grid.period() < 4.0 * weights.r_bar - 1e-9 {
        return Err(Error::InvalidParam(format!(
            "torus side {} is below 4 r_bar = {}",
            grid.period(),
            4.0 * weights.r_bar
        )));
    }
    let ratio = grid.period() / field.period_length;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::InvalidParam(format!(
            "torus side {} is not a multiple of the medium period {}",
            grid.period(),
            field.period_length
        )));
    }
    Ok(())
}

fn rates_on(field: &CoefficientField, grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|k| field.evaluate(grid.coord(k))).collect()
}

/// Pseudo-time marching `v ← v + dτ (-λv - J̄ + Φ(v) + c)` to a residual
/// below `tol · λ`.
pub fn solve_cell(
    field: &CoefficientField,
    weights: &StencilWeights,
    grid: &Grid,
    p: Point,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CellSolution> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParam(format!("lambda must be positive, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParam("tolerance must be positive".into()));
    }
    check_setup(field, weights, grid)?;
    let c = rates_on(field, grid);
    let c_mean = c.iter().sum::<f64>() / c.len() as f64;
    let j_bar = weights.j_bar;
    let v0 = (c_mean - j_bar + weights.exp_moment(p)) / lambda;
    let mut v = GridField::constant(grid.clone(), v0);
    let mut phi = vec![0.0; grid.len()];
    let mut res = vec![0.0; grid.len()];
    let target = tol * lambda;
    let mut dtau = f64::INFINITY;
    let mut prev = f64::INFINITY;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;

    for iter in 0..=max_iter {
        transport_field(weights, p, &v, &mut phi)?;
        res.par_iter_mut()
            .zip(&phi)
            .zip(&c)
            .zip(&v.values)
            .for_each(|(((r, f), ck), vk)| *r = -lambda * vk - j_bar + f + ck);
        let r_sup = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if !r_sup.is_finite() {
            return Err(Error::Overflow { node: 0, exponent: f64::INFINITY, cap: crate::nonlocal::EXPONENT_CAP });
        }
        if best.as_ref().is_none_or(|b| r_sup < b.0) {
            best = Some((r_sup, v.values.clone(), iter));
        }
        if r_sup <= target {
            return Ok(CellSolution { p, lambda, v, residual_sup: r_sup, iterations: iter, converged: true });
        }
        if iter == max_iter {
            break;
        }
        let cap = DTAU_THETA / (lambda + phi.iter().fold(0.0f64, |m, f| m.max(*f)));
        dtau = if r_sup > prev { 0.5 * dtau } else { (1.1 * dtau).min(cap) };
        dtau = dtau.min(cap);
        prev = r_sup;
        v.values.par_iter_mut().zip(&res).for_each(|(vk, r)| *vk += dtau * r);
    }
    let (residual, values, iterations) = best.expect("at least one residual evaluation");
    Err(Error::MaxIterExceeded {
        iterations: max_iter,
        residual,
        best: Some(Box::new(CellSolution {
            p,
            lambda,
            v: GridField { grid: grid.clone(), values },
            residual_sup: residual,
            iterations,
            converged: false,
        })),
    })
}

/// One pseudo-time update at node `z`, the map whose monotonicity in the
/// neighbor values underlies the comparison principle of the sweep.
pub fn cell_update(
    c: f64,
    weights: &StencilWeights,
    p: Point,
    lambda: f64,
    dtau: f64,
    v: &GridField,
    z: usize,
) -> Result<f64> {
    let phi = crate::nonlocal::exp_transport(weights, p, v, z)?;
    let vz = v.values[z];
    Ok(vz + dtau * (-lambda * vz - weights.j_bar + phi + c))
}

/// Result of [`estimate_hbar`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbarEstimate {
    pub p: Point,
    pub value: f64,
    pub error_bar: f64,
    pub lambdas: Vec<f64>,
    /// `samples[i][s]` is `-λ_i v^{λ_i}(0)` for the `s`-th field.
    pub samples: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Floor below which successive gaps count as settled.
const GAP_FLOOR: f64 = 1e-8;

/// `-λ v^λ(0)` for every `(λ, field)` pair, extrapolated linearly to
/// `λ = 0` through the cross-field means.
pub fn estimate_hbar(
    fields: &[CoefficientField],
    weights: &StencilWeights,
    opts: &CellOptions,
    p: Point,
    lambdas: &[f64],
) -> Result<HbarEstimate> {
    if lambdas.len() < 3 {
        return Err(Error::InvalidParam("the lambda sequence needs at least three entries".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) || !(lambdas[lambdas.len() - 1] > 0.0) {
        return Err(Error::InvalidParam("the lambda sequence must be positive and decreasing".into()));
    }
    if fields.is_empty() {
        return Err(Error::InvalidParam("at least one medium realization is needed".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..lambdas.len()).flat_map(|i| (0..fields.len()).map(move |s| (i, s))).collect();
    let flat: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, s)| {
            solve_cell(&fields[s], weights, &opts.grid, p, lambdas[i], opts.tol, opts.max_iter)
                .map(|sol| sol.hbar_sample())
        })
        .collect::<Result<_>>()?;
    let samples: Vec<Vec<f64>> = flat.chunks(fields.len()).map(<[f64]>::to_vec).collect();
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let stds: Vec<f64> = samples.iter().map(|s| std_dev(s)).collect();

    let gaps: Vec<f64> = means.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let last = gaps[gaps.len() - 1];
    if gaps.windows(2).all(|w| w[1] >= w[0]) && last > GAP_FLOOR {
        return Err(Error::NonConvergent { gaps });
    }
    let (value, fit_res) = extrapolate_linear(lambdas, &means);
    let error_bar = fit_res.max(stds[stds.len() - 1]);
    Ok(HbarEstimate { p, value, error_bar, lambdas: lambdas.to_vec(), samples, means, stds })
}

/// Intercept of the least-squares line through `(x, y)` and the largest
/// absolute residual.
pub fn extrapolate_linear(x: &[f64], y: &[f64]) -> (f64, f64) {
    let xm = mean(x);
    let ym = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = ym - slope * xm;
    let res = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).abs()).fold(0.0, f64::max);
    (intercept, res)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation; zero for a single sample.
fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// `H̄` on the tensor grid `axes`, with the structural checks filled in.
pub fn tabulate_hbar(
    fields: &[CoefficientField],
    weights: &StencilWeights,
    opts: &CellOptions,
    axes: Vec<Vec<f64>>,
    lambdas: &[f64],
) -> Result<HamiltonianTable> {
    if axes.len() != weights.dimension {
        return Err(Error::InvalidParam("one slope axis per dimension is required".into()));
    }
    if axes.iter().any(|a| a.is_empty()) {
        return Err(Error::InvalidParam("slope grid is empty".into()));
    }
    let probe = HamiltonianTable::from_fn(axes.clone(), |_| 0.0)?;
    let estimates: Vec<HbarEstimate> =
        probe.points().into_iter().map(|p| estimate_hbar(fields, weights, opts, p, lambdas)).collect::<Result<_>>()?;
    let first = &fields[0];
    let meta = TableMeta {
        lambdas: lambdas.to_vec(),
        extrapolation_order: 1,
        seeds: fields.iter().map(|f| f.seed).collect(),
        field: format!(
            "{:?} dim={} L={} c_min={} c_max={}",
            first.kind(),
            first.dimension,
            first.period_length,
            first.c_min,
            first.c_max
        ),
        kappa: first.kappa,
        j_bar: weights.j_bar,
        ..TableMeta::default()
    };
    let mut table = HamiltonianTable::new(
        axes,
        estimates.iter().map(|e| e.value).collect(),
        estimates.iter().map(|e| e.error_bar).collect(),
        meta,
    )?;
    table.refresh_checks();
    Ok(table)
}

/// Observed oscillation and `Ψ` bounds of a cell solution on `B(0, R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub lambda: f64,
    pub radius: f64,
    pub osc: f64,
    pub c_osc: f64,
    pub psi_min: f64,
    pub psi_max: f64,
}

impl CellDiagnostics {
    /// Worst max/min ratio of `C_osc`, `Ψ_min` and `Ψ_max` across runs, and
    /// whether `C_osc` grows as `λ` decreases.
    pub fn stability(runs: &[CellDiagnostics]) -> (f64, bool) {
        let ratio = |f: &dyn Fn(&CellDiagnostics) -> f64| {
            let hi = runs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            let lo = runs.iter().map(f).fold(f64::INFINITY, f64::min);
            if hi == lo {
                1.0
            } else {
                hi / lo
            }
        };
        let worst = ratio(&|d| d.c_osc).max(ratio(&|d| d.psi_min)).max(ratio(&|d| d.psi_max));
        let mut sorted: Vec<&CellDiagnostics> = runs.iter().collect();
        sorted.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
        let grows = sorted.windows(2).all(|w| w[1].c_osc > w[0].c_osc) && sorted.len() > 1;
        (worst, grows)
    }
}

pub fn diagnostics(sol: &CellSolution, weights: &StencilWeights, radius: f64) -> Result<CellDiagnostics> {
    let grid = &sol.v.grid;
    if radius > grid.period() / 4.0 + 1e-12 || !(radius > 0.0) {
        return Err(Error::InvalidParam(format!("diagnostic radius {radius} must lie in (0, torus/4]")));
    }
    let w = sol.corrector();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut psi_lo = f64::INFINITY;
    let mut psi_hi = f64::NEG_INFINITY;
    for z in 0..grid.len() {
        if norm(grid.displacement([0.0, 0.0], grid.coord(z))) > radius + 1e-12 {
            continue;
        }
        lo = lo.min(sol.v.values[z]);
        hi = hi.max(sol.v.values[z]);
        let psi = psi_quantity(weights, sol.p, &w, z)?;
        psi_lo = psi_lo.min(psi);
        psi_hi = psi_hi.max(psi);
    }
    let osc = hi - lo;
    Ok(CellDiagnostics { lambda: sol.lambda, radius, osc, c_osc: osc / radius, psi_min: psi_lo, psi_max: psi_hi })
}

/// `sup_z |λ v(z; p1) - λ v(z; p2)| / |p1 - p2|`, zero when `p1 = p2`.
pub fn lipschitz_p_check(
    field: &CoefficientField,
    weights: &StencilWeights,
    opts: &CellOptions,
    p1: Point,
    p2: Point,
    lambda: f64,
) -> Result<f64> {
    let d = norm([p1[0] - p2[0], p1[1] - p2[1]]);
    if d == 0.0 {
        return Ok(0.0);
    }
    let a = solve_cell(field, weights, &opts.grid, p1, lambda, opts.tol, opts.max_iter)?;
    let b = solve_cell(field, weights, &opts.grid, p2, lambda, opts.tol, opts.max_iter)?;
    let sup = a.v.values.iter().zip(&b.v.values).map(|(x, y)| (lambda * (x - y)).abs()).fold(0.0, f64::max);
    Ok(sup / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{make_checkerboard, make_constant, MediaContext};
    use crate::nonlocal::{build_weights, Kernel};

    fn ctx(l: f64) -> MediaContext {
        MediaContext { dimension: 1, period_length: l, kappa: 0.1, j_bar: 1.0 }
    }

    fn setup(h: f64, l: f64) -> (StencilWeights, CellOptions) {
        let w = build_weights(&Kernel::uniform_1d(1.0), h).unwrap();
        let n = (l / h).round() as usize;
        (w, CellOptions { grid: Grid::torus(1, n, h).unwrap(), tol: 1e-7, max_iter: 20_000 })
    }

    #[test]
    fn constant_medium_matches_the_constant_ansatz() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_constant(&ctx(8.0), 0.8).unwrap();
        for p in [0.0, 0.5, -1.0, 2.0] {
            let sol = solve_cell(&f, &w, &o.grid, [p, 0.0], 0.1, 1e-8, 10).unwrap();
            let exact = (0.8 - 1.0 + w.exp_moment([p, 0.0])) / 0.1;
            assert!(sol.v.values.iter().all(|v| (v - exact).abs() < 1e-8 * exact.abs().max(1.0)));
        }
        let sol = solve_cell(&f, &w, &o.grid, [0.0, 0.0], 0.3, 1e-8, 10).unwrap();
        assert!((0.3 * sol.v.values[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_is_sandwiched_by_its_extremes() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_checkerboard(&ctx(8.0), 11, 1.0, 0.6, 1.0, 0.1).unwrap();
        let sol = solve_cell(&f, &w, &o.grid, [0.0, 0.0], 0.05, o.tol, o.max_iter).unwrap();
        let lv = -sol.hbar_sample();
        assert!(lv >= f.c_min - 1e-9 && lv <= f.c_max + 1e-9, "{lv}");
        assert!(sol.residual_sup <= o.tol * 0.05);
    }

    #[test]
    fn adding_a_constant_shifts_lambda_v() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_checkerboard(&ctx(8.0), 5, 1.0, 0.5, 0.8, 0.1).unwrap();
        let g = make_checkerboard(&ctx(8.0), 5, 1.0, 0.7, 1.0, 0.1).unwrap();
        let a = solve_cell(&f, &w, &o.grid, [0.5, 0.0], 0.1, 1e-9, o.max_iter).unwrap();
        let b = solve_cell(&g, &w, &o.grid, [0.5, 0.0], 0.1, 1e-9, o.max_iter).unwrap();
        for (x, y) in a.v.values.iter().zip(&b.v.values) {
            assert!((0.1 * (y - x) - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn iteration_cap_reports_the_best_iterate() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_checkerboard(&ctx(8.0), 2, 1.0, 0.6, 1.0, 0.1).unwrap();
        match solve_cell(&f, &w, &o.grid, [0.0, 0.0], 0.05, 1e-10, 3) {
            Err(Error::MaxIterExceeded { best: Some(b), .. }) => assert!(!b.converged),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_small_torus_and_bad_lambda() {
        let (w, _) = setup(0.05, 8.0);
        let f = make_constant(&ctx(2.0), 1.0).unwrap();
        let g = Grid::torus(1, 40, 0.05).unwrap();
        assert!(solve_cell(&f, &w, &g, [0.0, 0.0], 0.1, 1e-6, 10).is_err());
        let g = Grid::torus(1, 160, 0.05).unwrap();
        assert!(solve_cell(&f, &w, &g, [0.0, 0.0], 0.0, 1e-6, 10).is_err());
    }

    #[test]
    fn estimate_for_constant_medium_is_exact_in_lambda() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_constant(&ctx(8.0), 1.0).unwrap();
        let est = estimate_hbar(&[f], &w, &o, [1.0, 0.0], &[0.2, 0.1, 0.05]).unwrap();
        let exact = 1.0 - w.exp_moment([1.0, 0.0]) - 1.0;
        assert!((est.value - exact).abs() < 1e-9);
        assert!(est.error_bar < 1e-9);
    }

    #[test]
    fn lambda_sequence_is_validated() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_constant(&ctx(8.0), 1.0).unwrap();
        assert!(estimate_hbar(std::slice::from_ref(&f), &w, &o, [0.0, 0.0], &[0.2, 0.1]).is_err());
        assert!(estimate_hbar(&[f], &w, &o, [0.0, 0.0], &[0.1, 0.2, 0.05]).is_err());
    }

    #[test]
    fn linear_extrapolation_recovers_intercept() {
        let (a, r) = extrapolate_linear(&[0.2, 0.1, 0.05], &[1.4, 1.2, 1.1]);
        assert!((a - 1.0).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn constant_medium_diagnostics_and_lipschitz_ratio() {
        let (w, o) = setup(0.05, 8.0);
        let f = make_constant(&ctx(8.0), 1.0).unwrap();
        let sol = solve_cell(&f, &w, &o.grid, [0.7, 0.0], 0.1, 1e-8, 10).unwrap();
        let d = diagnostics(&sol, &w, 2.0).unwrap();
        assert_eq!(d.osc, 0.0);
        let s = w.exp_moment([0.7, 0.0]);
        assert!((d.psi_min - s).abs() < 1e-12 && (d.psi_max - s).abs() < 1e-12);
        let r = lipschitz_p_check(&f, &w, &o, [0.0, 0.0], [1.0, 0.0], 0.1).unwrap();
        let exact = (w.exp_moment([0.0, 0.0]) - w.exp_moment([1.0, 0.0])).abs();
        assert!((r - exact).abs() < 1e-9);
        assert_eq!(lipschitz_p_check(&f, &w, &o, [0.3, 0.0], [0.3, 0.0], 0.1).unwrap(), 0.0);
    }
}
