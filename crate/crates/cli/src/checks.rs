//! Invariant suite behind `validate`: media and stencil invariants, the
//! discrete comparison principles of the three solvers, and closed-form
//! checks in constant media.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlkpp::cell::{cell_update, DTAU_THETA};
use nlkpp::hj::{sentinel, vi_cfl, vi_update, Flux};
use nlkpp::kpp::max_stable_dt;
use nlkpp::media::{make_constant, MediaContext};
use nlkpp::nonlocal::transport_field;
use nlkpp::table::uniform_axis;
use nlkpp::{
    simulate, solve_cell, solve_vi, CoefficientField, Grid, GridField, HamiltonianTable, Point, ReactionSpec, Region,
    StencilWeights,
};

use crate::report::Check;

/// Sample points per field for the range and Lipschitz checks.
pub const MEDIA_SAMPLES: usize = 10_000;
/// Sample points per field for the shift check.
pub const SHIFT_SAMPLES: usize = 1_000;
/// Explicit steps per comparison trial of the KPP integrator.
pub const KPP_TRIAL_STEPS: usize = 3;
/// Relative slack for comparing two VI updates. Where the flux is exactly
/// flat in a neighbor value the two updates differ only by round-off.
pub const ROUNDING: f64 = 1e-13;

fn random_point(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Point {
    [rng.gen_range(lo..hi), if dim == 2 { rng.gen_range(lo..hi) } else { 0.0 }]
}

/// Range, Lipschitz, oscillation and shift-equivariance checks on one field.
pub fn media_checks(field: &CoefficientField, j_bar: f64, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = field.dimension;
    let l = field.period_length;
    let mut range_bad = 0usize;
    let mut worst_lip: f64 = 0.0;
    for _ in 0..MEDIA_SAMPLES {
        let z = random_point(&mut rng, dim, -l, 2.0 * l);
        let c = field.evaluate(z);
        if !(c >= field.kappa && c >= field.c_min - 1e-12 && c <= field.c_max + 1e-12) {
            range_bad += 1;
        }
        let d = random_point(&mut rng, dim, -0.05, 0.05);
        let gap = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if gap > 0.0 {
            let c2 = field.evaluate([z[0] + d[0], z[1] + d[1]]);
            worst_lip = worst_lip.max((c2 - c).abs() / gap);
        }
    }
    let mut shift_bad = 0usize;
    for _ in 0..SHIFT_SAMPLES {
        let a = random_point(&mut rng, dim, -l, l);
        let z = random_point(&mut rng, dim, 0.0, l);
        let moved = field.shift(a);
        let za = [z[0] + a[0], z[1] + a[1]];
        if moved.evaluate(z).to_bits() != field.evaluate(za).to_bits() {
            shift_bad += 1;
        }
    }
    let tag = format!("seed {}", field.seed);
    vec![
        Check::at_most(
            "media.range",
            range_bad as f64,
            0.0,
            format!("{tag}: samples outside [max(kappa, c_min), c_max]"),
        ),
        Check::at_most(
            "media.lipschitz",
            worst_lip,
            field.lipschitz_k * (1.0 + 1e-9) + 1e-9,
            format!("{tag}: largest sampled difference quotient"),
        ),
        Check::at_most(
            "media.oscillation",
            field.osc_rho,
            j_bar,
            format!("{tag}: c_max - c_min below the kernel mass"),
        ),
        Check::at_most("media.shift", shift_bad as f64, 0.0, format!("{tag}: shifted evaluations differing bitwise")),
    ]
}

/// Exact symmetry, mass and vanishing first moment of a stencil.
pub fn stencil_checks(w: &StencilWeights, label: &str) -> Vec<Check> {
    let mut asym: f64 = 0.0;
    for (o, wk) in w.offsets.iter().zip(&w.weights) {
        let mirror = w.offsets.iter().position(|q| q[0] == -o[0] && q[1] == -o[1]);
        asym = asym.max(match mirror {
            Some(k) => (w.weights[k] - wk).abs(),
            None => f64::INFINITY,
        });
    }
    let m1 = w.first_moment();
    vec![
        Check::at_most("stencil.symmetry", asym, 0.0, format!("{label}: largest |w(y) - w(-y)|")),
        Check::at_most("stencil.mass", (w.mass() - w.j_bar).abs(), 1e-10, format!("{label}: |sum w - j_bar|")),
        Check::at_most("stencil.first_moment", m1[0].abs().max(m1[1].abs()), 1e-12, format!("{label}: |sum w y|")),
    ]
}

/// Small torus on which the comparison trials run.
fn trial_grid(dim: usize, h: f64) -> Grid {
    let n = if dim == 1 { 64 } else { 16 };
    Grid::torus(dim, n, h).expect("trial grid")
}

/// Ordered initial data stay ordered under the explicit KPP step. Returns
/// the number of trials with a violation.
pub fn kpp_comparison_trials(
    field: &CoefficientField,
    w: &StencilWeights,
    trials: usize,
    seed: u64,
) -> nlkpp::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = trial_grid(w.dimension, w.spacing);
    let reaction = ReactionSpec::logistic(field.clone());
    let dt = max_stable_dt(field, w.j_bar, 1.0);
    let t_end = KPP_TRIAL_STEPS as f64 * dt;
    let mut bad = 0;
    for _ in 0..trials {
        let lo: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let hi: Vec<f64> =
            lo.iter().map(|v| if rng.gen_bool(0.5) { (v + rng.gen_range(0.0..0.5)).min(1.0) } else { *v }).collect();
        let a = simulate(&reaction, w, &GridField::from_values(grid.clone(), lo)?, t_end, dt, 1)?;
        let b = simulate(&reaction, w, &GridField::from_values(grid.clone(), hi)?, t_end, dt, 1)?;
        let ordered =
            a.snapshots.iter().zip(&b.snapshots).all(|(x, y)| x.values.iter().zip(&y.values).all(|(u, v)| v >= u));
        if !ordered {
            bad += 1;
        }
    }
    Ok(bad)
}

/// `J̄ - S_h(p) - c0` on a uniform slope grid: the exact discrete `H̄` of a
/// constant medium.
pub fn constant_table(w: &StencilWeights, c0: f64, p_max: f64, points: usize) -> nlkpp::Result<HamiltonianTable> {
    let axis = uniform_axis(-p_max, p_max, points);
    let axes = vec![axis; w.dimension];
    HamiltonianTable::from_fn(axes, |p| w.j_bar - w.exp_moment(p) - c0)
}

/// Raising one value in the stencil of a node never lowers the VI update.
pub fn hj_monotone_trials(table: &HamiltonianTable, flux: Flux, trials: usize, seed: u64) -> nlkpp::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = table.dim();
    let h = 0.1;
    let n = if dim == 1 { 32 } else { 12 };
    let grid = Grid::bounded(dim, n, h, 0.0)?;
    let dt = vi_cfl(table, h);
    let m_big = sentinel(table, 1.0);
    let mut alpha = [0.0; 2];
    for (d, a) in alpha.iter_mut().enumerate().take(dim) {
        *a = table.max_slope(d);
    }
    let mut bad = 0;
    for _ in 0..trials {
        let values: Vec<f64> = (0..grid.len())
            .map(|_| match rng.gen_range(0..10) {
                0..=2 => 0.0,
                3 => -m_big,
                _ => -rng.gen_range(0.0..2.0),
            })
            .collect();
        let phi = GridField::from_values(grid.clone(), values)?;
        let z = rng.gen_range(0..grid.len());
        let before = vi_update(table, flux, alpha, &phi, z, dt);
        let mut stencil = vec![z];
        for d in 0..dim {
            for s in [-1, 1] {
                let mut o = [0, 0];
                o[d] = s;
                if let Some(nb) = grid.neighbor(z, o) {
                    stencil.push(nb);
                }
            }
        }
        let target = stencil[rng.gen_range(0..stencil.len())];
        let mut raised = phi.clone();
        raised.values[target] = (raised.values[target] + rng.gen_range(1e-3..1.0)).min(0.0);
        let after = vi_update(table, flux, alpha, &raised, z, dt);
        let scale = stencil.iter().fold(1.0f64, |m, k| m.max(phi.values[*k].abs()));
        if after < before - ROUNDING * scale {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Raising one value in the stencil of a node never lowers the pseudo-time
/// update of the cell problem at the step size the solver uses.
pub fn cell_monotone_trials(
    field: &CoefficientField,
    w: &StencilWeights,
    trials: usize,
    seed: u64,
) -> nlkpp::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = trial_grid(w.dimension, w.spacing);
    let dim = w.dimension;
    let mut phi = vec![0.0; grid.len()];
    let mut bad = 0;
    for _ in 0..trials {
        let values: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = GridField::from_values(grid.clone(), values)?;
        let p = random_point(&mut rng, dim, -2.0, 2.0);
        let lambda = if rng.gen_bool(0.5) { 0.2 } else { 0.05 };
        transport_field(w, p, &v, &mut phi)?;
        let dtau = DTAU_THETA / (lambda + phi.iter().fold(0.0f64, |m, f| m.max(*f)));
        let z = rng.gen_range(0..grid.len());
        let c = field.evaluate(grid.coord(z));
        let before = cell_update(c, w, p, lambda, dtau, &v, z)?;
        let k = rng.gen_range(0..w.offsets.len());
        let o = w.offsets[k];
        let target = grid.neighbor(z, [-o[0], -o[1]]).expect("torus neighbor");
        let mut raised = v.clone();
        raised.values[target] += rng.gen_range(1e-3..1.0);
        let after = cell_update(c, w, p, lambda, dtau, &raised, z)?;
        if after < before {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Largest gap between `-λ v(0)` and `J̄ - S_h(p) - c0` in a constant medium.
pub fn constant_cell_gap(w: &StencilWeights, c0: f64, kappa: f64) -> nlkpp::Result<f64> {
    let dim = w.dimension;
    let side = 4.0 * w.r_bar;
    let n = (side / w.spacing).round() as usize;
    let ctx = MediaContext { dimension: dim, period_length: n as f64 * w.spacing, kappa, j_bar: w.j_bar };
    let field = make_constant(&ctx, c0)?;
    let grid = Grid::torus(dim, n, w.spacing)?;
    let mut worst: f64 = 0.0;
    for p in [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [-1.0, 0.0]] {
        let sol = solve_cell(&field, w, &grid, p, 0.1, 1e-10, 100_000)?;
        worst = worst.max((sol.hbar_sample() - (w.j_bar - w.exp_moment(p) - c0)).abs());
    }
    Ok(worst)
}

/// Obstacle, monotonicity in time and `φ = 0` on `G0` along a short VI run.
pub fn vi_structure(table: &HamiltonianTable, flux: Flux) -> nlkpp::Result<(f64, f64, f64)> {
    let dim = table.dim();
    let h = 0.05;
    let grid = Grid::bounded(dim, if dim == 1 { 121 } else { 41 }, h, if dim == 1 { -3.0 } else { -1.0 })?;
    let g0 = Region::Box { lo: [-0.5, -0.5], hi: [0.5, 0.5] };
    let dt = vi_cfl(table, h);
    let states = solve_vi(table, &g0, &grid, 0.5, dt, 1, flux)?;
    let above = states.iter().flat_map(|s| s.phi.values.iter()).fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut drop: f64 = 0.0;
    for pair in states.windows(2) {
        for (a, b) in pair[0].phi.values.iter().zip(&pair[1].phi.values) {
            drop = drop.max(a - b);
        }
    }
    let mut g0_gap: f64 = 0.0;
    for s in &states {
        for (k, v) in s.phi.values.iter().enumerate() {
            if g0.contains(grid.coord(k), dim) {
                g0_gap = g0_gap.max(v.abs());
            }
        }
    }
    Ok((above, drop, g0_gap))
}
