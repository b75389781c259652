use nlkpp::cell::{cell_update, solve_cell};
use nlkpp::hj::{vi_update, Flux};
use nlkpp::kpp::{simulate, InitialCondition, ReactionSpec, Region};
use nlkpp::media::{make_checkerboard, make_periodic, make_poisson_bumps, MediaContext};
use nlkpp::nonlocal::{build_weights, exp_transport, Kernel, KernelProfile};
use nlkpp::table::uniform_axis;
use nlkpp::{Grid, GridField, HamiltonianTable};
use proptest::prelude::*;

fn ctx(dimension: usize) -> MediaContext {
    MediaContext { dimension, period_length: 16.0, kappa: 0.1, j_bar: 1.0 }
}

fn profile() -> impl Strategy<Value = KernelProfile> {
    prop_oneof![Just(KernelProfile::UniformBall), Just(KernelProfile::CosineBump), Just(KernelProfile::Triangle),]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkerboard_stays_in_range_and_is_lipschitz(
        seed in 0u64..1000,
        dim in 1usize..=2,
        z in prop::array::uniform2(-40.0f64..40.0),
        d in prop::array::uniform2(-0.05f64..0.05),
    ) {
        let f = make_checkerboard(&ctx(dim), seed, 1.0, 0.6, 1.0, 0.1).unwrap();
        let c = f.evaluate(z);
        prop_assert!(c >= f.kappa && c >= f.c_min - 1e-12 && c <= f.c_max + 1e-12);
        prop_assert!(f.osc_rho < 1.0);
        let gap = if dim == 1 { d[0].abs() } else { (d[0] * d[0] + d[1] * d[1]).sqrt() };
        prop_assume!(gap > 0.0);
        let c2 = f.evaluate([z[0] + d[0], z[1] + d[1]]);
        prop_assert!((c2 - c).abs() <= f.lipschitz_k * gap * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn shifting_a_medium_translates_it_exactly(
        seed in 0u64..1000,
        kind in 0usize..3,
        a in prop::array::uniform2(-20.0f64..20.0),
        z in prop::array::uniform2(0.0f64..16.0),
    ) {
        let c = ctx(2);
        let f = match kind {
            0 => make_checkerboard(&c, seed, 1.0, 0.6, 1.0, 0.1).unwrap(),
            1 => make_periodic(&c, 0.8, 0.2, 4.0).unwrap(),
            _ => make_poisson_bumps(&c, seed, 0.2, 0.6, 0.4, 1.0).unwrap(),
        };
        let moved = f.shift(a);
        prop_assert_eq!(moved.evaluate(z).to_bits(), f.evaluate([z[0] + a[0], z[1] + a[1]]).to_bits());
    }

    #[test]
    fn stencils_are_symmetric_with_exact_mass(
        dim in 1usize..=2,
        profile in profile(),
        r_bar in 0.5f64..2.0,
        j_bar in 0.2f64..3.0,
        refine in 4usize..12,
    ) {
        let k = Kernel::new(dim, profile, r_bar, j_bar).unwrap();
        let w = build_weights(&k, k.r1 / refine as f64).unwrap();
        for (o, wk) in w.offsets.iter().zip(&w.weights) {
            prop_assert!(*wk >= 0.0);
            let mirror = w.offsets.iter().position(|q| q[0] == -o[0] && q[1] == -o[1]).unwrap();
            prop_assert_eq!(w.weights[mirror], *wk);
            let y = [o[0] as f64 * w.spacing, o[1] as f64 * w.spacing];
            prop_assert!((y[0] * y[0] + y[1] * y[1]).sqrt() <= r_bar + w.spacing * 0.75);
        }
        prop_assert!((w.mass() - j_bar).abs() <= 1e-10);
        let m1 = w.first_moment();
        prop_assert!(m1[0].abs() <= 1e-12 && m1[1].abs() <= 1e-12);
    }

    #[test]
    fn kernel_is_even_and_bounded_below_on_the_inner_ball(
        dim in 1usize..=2,
        profile in profile(),
        y in prop::array::uniform2(-2.0f64..2.0),
    ) {
        let k = Kernel::new(dim, profile, 1.0, 1.0).unwrap();
        let y = if dim == 1 { [y[0], 0.0] } else { y };
        prop_assert_eq!(k.density(y), k.density([-y[0], -y[1]]));
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        if r > k.r_bar {
            prop_assert_eq!(k.density(y), 0.0);
        }
        if r <= k.r1 {
            prop_assert!(k.density(y) >= k.a * (1.0 - 1e-12));
        }
    }

    #[test]
    fn initial_datum_lies_in_unit_interval_with_support_in_g0(
        center in prop::array::uniform2(-3.0f64..3.0),
        radius in 0.5f64..3.0,
        ramp in 0.05f64..2.0,
        z in prop::array::uniform2(-8.0f64..8.0),
        use_box in any::<bool>(),
    ) {
        let g0 = if use_box {
            Region::Box { lo: [center[0] - radius, center[1] - radius], hi: [center[0] + radius, center[1] + radius] }
        } else {
            Region::Ball { center, radius }
        };
        let u0 = InitialCondition::new(g0, ramp).unwrap();
        for dim in 1..=2 {
            let v = u0.value(z, dim);
            prop_assert!((0.0..=1.0).contains(&v));
            if !g0.contains(z, dim) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn explicit_kpp_step_preserves_order_and_range(
        seed in 0u64..500,
        lo in prop::collection::vec(0.0f64..1.0, 128),
        bump in prop::collection::vec(0.0f64..0.3, 128),
    ) {
        let f = make_checkerboard(&ctx(1), seed, 1.0, 0.6, 1.0, 0.1).unwrap();
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.125).unwrap();
        let grid = Grid::torus(1, 128, 0.125).unwrap();
        let hi: Vec<f64> = lo.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
        let u = GridField::from_values(grid.clone(), lo).unwrap();
        let v = GridField::from_values(grid, hi).unwrap();
        let dt = 0.9 / (1.0 + f.c_max);
        let r = ReactionSpec::logistic(f);
        let a = simulate(&r, &w, &u, 3.0 * dt, dt, 1).unwrap();
        let b = simulate(&r, &w, &v, 3.0 * dt, dt, 1).unwrap();
        for (x, y) in a.last().values.iter().zip(&b.last().values) {
            prop_assert!(*x <= *y);
            prop_assert!((0.0..=1.0).contains(x) && (0.0..=1.0).contains(y));
        }
    }

    #[test]
    fn cell_update_is_monotone_in_the_neighbours(
        seed in 0u64..500,
        base in prop::collection::vec(-2.0f64..2.0, 64),
        raise in prop::collection::vec(0.0f64..0.5, 64),
        p in -2.0f64..2.0,
        lambda in 0.02f64..0.5,
    ) {
        let f = make_checkerboard(&ctx(1), seed, 1.0, 0.6, 1.0, 0.1).unwrap();
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.125).unwrap();
        let grid = Grid::torus(1, 64, 0.125).unwrap();
        let v1 = GridField::from_values(grid.clone(), base.clone()).unwrap();
        let v2 = GridField::from_values(grid, base.iter().zip(&raise).map(|(a, b)| a + b).collect()).unwrap();
        let spread = (v2.max() - v1.min()).max(v1.max() - v1.min());
        let lip = w.exp_moment([p, 0.0]) * (2.0 * spread).exp();
        let dtau = nlkpp::cell::DTAU_THETA / (lambda + lip);
        for z in 0..v1.len() {
            let c = f.evaluate(v1.grid.coord(z));
            let a = cell_update(c, &w, [p, 0.0], lambda, dtau, &v1, z).unwrap();
            let b = cell_update(c, &w, [p, 0.0], lambda, dtau, &v2, z).unwrap();
            let scale = exp_transport(&w, [p, 0.0], &v2, z).unwrap() + lambda + v2.values[z].abs() + 1.0;
            prop_assert!(a <= b + 1e-13 * scale);
        }
    }

    #[test]
    fn godunov_vi_step_is_monotone_and_respects_the_obstacle(
        base in prop::collection::vec(-3.0f64..0.0, 64),
        raise in prop::collection::vec(0.0f64..0.5, 64),
    ) {
        let table = HamiltonianTable::from_fn(vec![uniform_axis(-3.0, 3.0, 49)], |p| {
            let q = p[0];
            -(if q == 0.0 { 1.0 } else { q.sinh() / q })
        })
        .unwrap();
        let grid = Grid::bounded(1, 64, 0.05, -1.6).unwrap();
        let lo = GridField::from_values(grid.clone(), base.clone()).unwrap();
        let hi = GridField::from_values(grid, base.iter().zip(&raise).map(|(a, b)| (a + b).min(0.0)).collect()).unwrap();
        let dt = nlkpp::hj::vi_cfl(&table, 0.05);
        for z in 0..lo.len() {
            let a = vi_update(&table, Flux::Godunov, [0.0; 2], &lo, z, dt);
            let b = vi_update(&table, Flux::Godunov, [0.0; 2], &hi, z, dt);
            prop_assert!(a <= 0.0 && b <= 0.0);
            prop_assert!(a <= b + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cell_solution_is_sandwiched_by_constant_barriers(
        seed in 0u64..200,
        p in -1.5f64..1.5,
    ) {
        let f = make_checkerboard(&ctx(1), seed, 1.0, 0.6, 1.0, 0.1).unwrap();
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.125).unwrap();
        let grid = Grid::torus(1, 128, 0.125).unwrap();
        let lambda = 0.1;
        let sol = solve_cell(&f, &w, &grid, [p, 0.0], lambda, 1e-9, 200_000).unwrap();
        let s = w.exp_moment([p, 0.0]);
        let lo = (f.c_min - 1.0 + s) / lambda;
        let hi = (f.c_max - 1.0 + s) / lambda;
        prop_assert!(sol.v.min() >= lo - 1e-6 && sol.v.max() <= hi + 1e-6);
    }

    #[test]
    fn adding_a_constant_to_the_rate_shifts_lambda_v(
        seed in 0u64..200,
        p in -1.0f64..1.0,
        shift in 0.05f64..0.3,
    ) {
        let w = build_weights(&Kernel::uniform_1d(1.0), 0.125).unwrap();
        let grid = Grid::torus(1, 128, 0.125).unwrap();
        let lambda = 0.1;
        let a = make_checkerboard(&ctx(1), seed, 1.0, 0.6, 1.0, 0.1).unwrap();
        let b = make_checkerboard(&ctx(1), seed, 1.0, 0.6 + shift, 1.0 + shift, 0.1).unwrap();
        let sa = solve_cell(&a, &w, &grid, [p, 0.0], lambda, 1e-10, 400_000).unwrap();
        let sb = solve_cell(&b, &w, &grid, [p, 0.0], lambda, 1e-10, 400_000).unwrap();
        for (x, y) in sa.v.values.iter().zip(&sb.v.values) {
            prop_assert!((lambda * (y - x) - shift).abs() <= 1e-7);
        }
    }
}
