use nlkpp::cell::{solve_cell, tabulate_hbar, CellOptions};
use nlkpp::hj::{front_speed, predicted_speed, solve_vi, vi_cfl, Flux};
use nlkpp::kpp::{hausdorff, hopf_cole, inverse_hopf_cole, Region};
use nlkpp::media::{make_checkerboard, make_constant, MediaContext};
use nlkpp::metric::{dual_formula, radial_limit, MetricOptions};
use nlkpp::nonlocal::{build_weights, Kernel};
use nlkpp::table::uniform_axis;
use nlkpp::{Error, Grid, GridField, HamiltonianTable};

fn ctx() -> MediaContext {
    MediaContext { dimension: 1, period_length: 16.0, kappa: 0.1, j_bar: 1.0 }
}

/// `∫ J(y) e^{-yp} dy` for the 1-D uniform kernel of unit mass on `[-1, 1]`.
fn sinh_ratio(q: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else {
        q.sinh() / q
    }
}

/// Root of `f` on `[a, b]` by bisection, `f(a)` and `f(b)` of opposite sign.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn constant_medium_cell_solution_is_the_constant_ansatz() {
    let h = 0.0625;
    let w = build_weights(&Kernel::uniform_1d(1.0), h).unwrap();
    let grid = Grid::torus(1, 256, h).unwrap();
    let f = make_constant(&ctx(), 0.8).unwrap();
    for p in [-2.0, -0.5, 0.0, 1.0, 3.0] {
        for lambda in [0.2, 0.05] {
            let sol = solve_cell(&f, &w, &grid, [p, 0.0], lambda, 1e-10, 1000).unwrap();
            let exact = (0.8 - 1.0 + w.exp_moment([p, 0.0])) / lambda;
            for v in &sol.v.values {
                assert!((v - exact).abs() <= 1e-10 * exact.abs().max(1.0));
            }
        }
    }
}

#[test]
fn stencil_exponential_moment_approaches_the_continuum_value() {
    let mut prev = f64::INFINITY;
    for h in [0.125, 0.0625, 0.03125] {
        let w = build_weights(&Kernel::uniform_1d(1.0), h).unwrap();
        let err = [0.5, 1.0, 2.0, 3.0]
            .iter()
            .map(|&p| ((w.exp_moment([p, 0.0]) - sinh_ratio(p)) / sinh_ratio(p)).abs())
            .fold(0.0, f64::max);
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 2e-3);
}

#[test]
fn constant_medium_table_matches_the_closed_form() {
    let h = 0.0625;
    let w = build_weights(&Kernel::uniform_1d(1.0), h).unwrap();
    let opts = CellOptions { grid: Grid::torus(1, 256, h).unwrap(), tol: 1e-10, max_iter: 1000 };
    let f = make_constant(&ctx(), 1.0).unwrap();
    let table = tabulate_hbar(&[f], &w, &opts, vec![uniform_axis(-2.0, 2.0, 9)], &[0.2, 0.1, 0.05]).unwrap();
    for (p, v) in table.points().iter().zip(&table.values) {
        assert!((v - (1.0 - w.exp_moment(*p) - 1.0)).abs() < 1e-9);
        assert!((v + sinh_ratio(p[0])).abs() < 3e-3);
    }
    assert!(table.meta.concavity_ok && table.meta.bound_ok);
    assert!(table.symmetry_gap() < 1e-12);
}

#[test]
fn homogeneous_front_speed_is_the_minimum_of_sinh_over_square() {
    // c0 = 1: G(q) = -H̄(-q) = sinh(q)/q and w* = min_q sinh(q)/q², attained where q = 2 tanh q.
    let q_star = bisect(|q| q - 2.0 * q.tanh(), 1.0, 3.0);
    let w_star = q_star.sinh() / (q_star * q_star);
    assert!((w_star - 0.9055).abs() < 1e-3);
    let table = HamiltonianTable::from_fn(vec![uniform_axis(-4.0, 4.0, 161)], |p| -sinh_ratio(p[0])).unwrap();
    let w = predicted_speed(&table, [1.0, 0.0]).unwrap();
    assert!((w - w_star).abs() < 2e-3);
    assert!((predicted_speed(&table, [-1.0, 0.0]).unwrap() - w).abs() < 1e-12);
}

#[test]
fn variational_inequality_front_moves_at_the_predicted_speed() {
    let table = HamiltonianTable::from_fn(vec![uniform_axis(-4.0, 4.0, 161)], |p| -sinh_ratio(p[0])).unwrap();
    let h = 0.025;
    let grid = Grid::bounded(1, 961, h, -12.0).unwrap();
    let g0 = Region::Box { lo: [-1.0, 0.0], hi: [1.0, 0.0] };
    let states = solve_vi(&table, &g0, &grid, 8.0, vi_cfl(&table, h), 20, Flux::Godunov).unwrap();
    let delta = states[0].default_delta();
    let speed = front_speed(&states, delta, [1.0, 0.0], (3.0, 8.0)).unwrap();
    let predicted = predicted_speed(&table, [1.0, 0.0]).unwrap();
    assert!((speed - predicted).abs() / predicted < 0.02, "speed {speed} predicted {predicted}");
}

#[test]
fn homogeneous_metric_slope_matches_the_dual_formula() {
    // c0 = 1, p = 0, μ = -2: the level set sinh(q)/q = 2 has the root q* ≈ 2.1773.
    let q_star = bisect(|q| sinh_ratio(q) - 2.0, 0.5, 4.0);
    assert!((q_star - 2.1773).abs() < 1e-3);
    let h = 0.0625;
    let w = build_weights(&Kernel::uniform_1d(1.0), h).unwrap();
    let table = HamiltonianTable::from_fn(vec![uniform_axis(-4.0, 4.0, 129)], |p| 1.0 - w.exp_moment(p) - 1.0).unwrap();
    let dual = dual_formula(&table, [0.0, 0.0], -2.0, [1.0, 0.0]).unwrap();
    assert!((dual + q_star).abs() < 1e-2);
    let f = make_constant(&ctx(), 1.0).unwrap();
    let opts = MetricOptions { r_dom: 16.0, tol: 1e-9, max_sweeps: 100_000 };
    let lim = radial_limit(&f, &w, &table, [0.0, 0.0], -2.0, [1.0, 0.0], &[4.0, 8.0, 12.0], &opts).unwrap();
    assert!((lim.limit - dual).abs() / dual.abs() < 0.03, "limit {} dual {dual}", lim.limit);
}

#[test]
fn metric_rejects_levels_at_or_above_the_hamiltonian() {
    let table = HamiltonianTable::from_fn(vec![uniform_axis(-3.0, 3.0, 49)], |p| -sinh_ratio(p[0])).unwrap();
    match dual_formula(&table, [0.0, 0.0], -0.5, [1.0, 0.0]) {
        Err(Error::IllPosed { .. }) => {}
        other => panic!("expected IllPosed, got {other:?}"),
    }
}

#[test]
fn checkerboard_lambda_v_stays_between_the_extreme_rates() {
    let h = 0.0625;
    let w = build_weights(&Kernel::uniform_1d(1.0), h).unwrap();
    let grid = Grid::torus(1, 256, h).unwrap();
    for seed in 0..3 {
        let f = make_checkerboard(&ctx(), seed, 1.0, 0.6, 1.0, 0.1).unwrap();
        let sol = solve_cell(&f, &w, &grid, [0.0, 0.0], 0.05, 1e-8, 400_000).unwrap();
        let lv = -sol.hbar_sample();
        assert!((0.6 - 1e-6..=1.0 + 1e-6).contains(&lv), "seed {seed}: {lv}");
    }
}

#[test]
fn hopf_cole_round_trips_above_the_floor() {
    let grid = Grid::torus(1, 64, 0.25).unwrap();
    let u = GridField::from_fn(grid, |z| 0.5 + 0.4 * z[0].sin());
    let phi = hopf_cole(&u, 0.1, 1e-300).unwrap();
    let back = inverse_hopf_cole(&phi, 0.1);
    for (a, b) in u.values.iter().zip(&back.values) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn hausdorff_distance_of_nested_segments() {
    let a: Vec<[f64; 2]> = (0..=10).map(|k| [k as f64 * 0.1, 0.0]).collect();
    let b: Vec<[f64; 2]> = (0..=15).map(|k| [k as f64 * 0.1, 0.0]).collect();
    assert!((hausdorff(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    assert!(matches!(hausdorff(&a, &[]), Err(Error::EmptyFront)));
}
