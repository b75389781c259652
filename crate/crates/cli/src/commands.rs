//! The six subcommands. Each validates the configuration, runs its
//! experiment, writes hash-stamped CSV files under the output directory and
//! returns a [`RunReport`].

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;

use nlkpp::cell::CellOptions;
use nlkpp::hj::{front_boundary, front_speed, vi_cfl, Flux};
use nlkpp::kpp::{extract_front, hausdorff, max_stable_dt, measure_speed_1d};
use nlkpp::metric::{ratios_along, MetricOptions};
use nlkpp::table::uniform_axis;
use nlkpp::{
    dual_formula, predicted_speed, simulate, simulate_scaled, solve_metric, solve_vi, tabulate_hbar, CoefficientField,
    Grid, GridField, HamiltonianTable, InitialCondition, ObstacleState, Point, ReactionSpec, Region,
};

use crate::checks;
use crate::config::ExperimentConfig;
use crate::report::{num, write_csv, Check, RunReport};

fn out(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.join(name)
}

fn finish(cfg: &ExperimentConfig, mut report: RunReport, start: Instant, name: &str) -> Result<RunReport> {
    report.wall_clock_s = start.elapsed().as_secs_f64();
    let path = out(cfg, &format!("report_{name}.json"));
    report.write_json(&path)?;
    Ok(report)
}

fn coords(p: Point, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![num(p[0])]
    } else {
        vec![num(p[0]), num(p[1])]
    }
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

fn header<'a>(lead: &[&'a str], dim: usize, tail: &[&'a str]) -> Vec<&'a str> {
    let mut h = lead.to_vec();
    h.extend(coord_header(dim));
    h.extend_from_slice(tail);
    h
}

pub fn cell_options(cfg: &ExperimentConfig) -> Result<CellOptions> {
    let n = (cfg.cell_torus() / cfg.cell.h).round() as usize;
    Ok(CellOptions {
        grid: Grid::torus(cfg.media.dimension, n, cfg.cell.h)?,
        tol: cfg.cell.tol,
        max_iter: cfg.cell.max_iter,
    })
}

/// `H̄` tabulated over the configured slope grid from the given realizations.
pub fn tabulate(cfg: &ExperimentConfig, fields: &[CoefficientField]) -> Result<HamiltonianTable> {
    let w = cfg.weights(cfg.cell.h, "cell.h")?;
    let axis = uniform_axis(cfg.cell.p_lo, cfg.cell.p_hi, cfg.cell.p_points);
    let axes = vec![axis; cfg.media.dimension];
    let mut table = tabulate_hbar(fields, &w, &cell_options(cfg)?, axes, &cfg.cell.lambdas)?;
    table.meta.config_hash = Some(cfg.hash());
    Ok(table)
}

fn table_checks(report: &mut RunReport, table: &HamiltonianTable, kappa: f64) {
    report.metric("hbar_max", table.max_value());
    report.metric("hbar_max_error_bar", table.max_error_bar());
    report.metric("hbar_concavity_margin", table.meta.concavity_margin);
    report.metric("hbar_symmetry_gap", table.meta.symmetry_gap);
    report.check(Check::at_most("hbar.upper_bound", table.max_value(), -kappa, "H̄ <= -kappa at every node"));
    report.check(Check::at_least(
        "hbar.concavity",
        table.meta.concavity_margin,
        0.0,
        "midpoint concavity within two error bars",
    ));
}

/// Tabulates `H̄` over all seeds and writes `hbar.csv` with its sidecar.
pub fn cmd_hbar(cfg: &ExperimentConfig) -> Result<(RunReport, HamiltonianTable)> {
    let start = Instant::now();
    cfg.validate()?;
    let mut report = RunReport::new("hbar", &cfg.hash(), &cfg.seeds);
    let fields = cfg.fields()?;
    let table = tabulate(cfg, &fields)?;
    let path = out(cfg, "hbar.csv");
    std::fs::create_dir_all(&cfg.output)?;
    table.save(&path)?;
    report.outputs.push(path);
    table_checks(&mut report, &table, cfg.media.kappa);
    if let crate::config::GeneratorSpec::Constant { c0 } = cfg.media.generator {
        let w = cfg.weights(cfg.cell.h, "cell.h")?;
        let gap = table
            .points()
            .iter()
            .zip(&table.values)
            .map(|(p, v)| (v - (w.j_bar - w.exp_moment(*p) - c0)).abs())
            .fold(0.0, f64::max);
        report.check(Check::at_most("hbar.closed_form", gap, 1e-3, "largest gap to J̄ - S(p) - c0"));
    }
    Ok((finish(cfg, report, start, "hbar")?, table))
}

fn snapshot_every(interval: f64, dt: f64) -> usize {
    ((interval / dt).round() as usize).max(1)
}

/// Direct simulation on the configured torus; reports the front speed in
/// one dimension.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let s = &cfg.simulate;
    let dim = cfg.media.dimension;
    let mut report = RunReport::new("simulate", &cfg.hash(), &cfg.seeds[..1]);
    let field = cfg.field(cfg.seeds[0])?;
    let kernel = cfg.kernel()?;
    let n = (s.extent / s.h).round() as usize;
    let grid = Grid::new(dim, n, s.h, [0.0, 0.0], true)?;
    let ic = InitialCondition { support: s.initial, ramp: s.ramp, height: 1.0 };
    let u0 = ic.sample(&grid);
    let dt = s.cfl_fraction * max_stable_dt(&field, cfg.kernel.j_bar, s.epsilon);
    let every = snapshot_every(s.snapshot_interval, dt);
    let reaction = ReactionSpec::logistic(field.clone());
    let traj = if s.epsilon == 1.0 {
        let w = cfg.weights(s.h, "simulate.h")?;
        simulate(&reaction, &w, &u0, s.t_end, dt, every)?
    } else {
        simulate_scaled(s.epsilon, &reaction, &kernel, &u0, s.t_end, dt, every)?
    };
    report.metric("dt", dt);
    let mut rows = Vec::new();
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        if let Ok(front) = extract_front(snap, s.level) {
            for p in front {
                let mut r = vec![num(*t)];
                r.extend(coords(p, dim));
                rows.push(r);
            }
        }
    }
    let path = out(cfg, "simulate_fronts.csv");
    write_csv(&path, &cfg.hash(), &header(&["t"], dim, &[]), &rows)?;
    report.outputs.push(path);
    let last = traj.last();
    let rows: Vec<Vec<String>> = (0..last.len())
        .map(|k| {
            let mut r = coords(last.grid.coord(k), dim);
            r.push(num(last.values[k]));
            r
        })
        .collect();
    let path = out(cfg, "simulate_final.csv");
    write_csv(&path, &cfg.hash(), &header(&[], dim, &["u"]), &rows)?;
    report.outputs.push(path);
    if dim == 1 {
        let (speed, rms) = measure_speed_1d(&traj, s.level, (s.speed_window[0], s.speed_window[1]))?;
        report.metric("speed", speed);
        report.metric("speed_fit_rms", rms);
    }
    finish(cfg, report, start, "simulate")
}

fn vi_grid(dim: usize, h: f64, half_width: f64) -> Result<Grid> {
    let n = (2.0 * half_width / h).round() as usize + 1;
    Ok(Grid::bounded(dim, n, h, -half_width)?)
}

fn flux_for(cfg: &ExperimentConfig, flux: Flux) -> Flux {
    if cfg.media.dimension == 2 {
        Flux::LaxFriedrichs
    } else {
        flux
    }
}

/// Obstacle, monotonicity and `G0` checks along a VI trajectory.
fn vi_trajectory_checks(report: &mut RunReport, states: &[ObstacleState], g0: &Region) {
    let dim = states[0].phi.grid.dim;
    let above = states.iter().flat_map(|s| s.phi.values.iter()).fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut drop: f64 = 0.0;
    for pair in states.windows(2) {
        for (a, b) in pair[0].phi.values.iter().zip(&pair[1].phi.values) {
            drop = drop.max(a - b);
        }
    }
    let grid = &states[0].phi.grid;
    let mut g0_gap: f64 = 0.0;
    for s in states {
        for (k, v) in s.phi.values.iter().enumerate() {
            if g0.contains(grid.coord(k), dim) {
                g0_gap = g0_gap.max(v.abs());
            }
        }
    }
    report.check(Check::at_most("vi.obstacle", above, 0.0, "largest φ over all snapshots"));
    report.check(Check::at_most("vi.monotone_in_time", drop, 0.0, "largest decrease of φ between snapshots"));
    report.check(Check::at_most("vi.zero_on_g0", g0_gap, 0.0, "largest |φ| on G0"));
}

/// Solves the VI from a stored or freshly tabulated `H̄`.
pub fn cmd_vi(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let v = &cfg.vi;
    let dim = cfg.media.dimension;
    let mut report = RunReport::new("vi", &cfg.hash(), &cfg.seeds);
    let table = match &v.table {
        Some(path) => HamiltonianTable::load(path)?,
        None => tabulate(cfg, &cfg.fields()?)?,
    };
    let grid = vi_grid(dim, v.h, v.half_width)?;
    let dt = v.cfl_fraction * vi_cfl(&table, v.h);
    let flux = flux_for(cfg, v.flux);
    report.note("flux", format!("{flux:?}"));
    let states = solve_vi(&table, &v.g0, &grid, v.t_end, dt, snapshot_every(v.snapshot_interval, dt), flux)?;
    let delta = states[0].default_delta();
    report.metric("dt", dt);
    report.metric("m_big", states[0].m_big);
    report.metric("delta", delta);
    vi_trajectory_checks(&mut report, &states, &v.g0);
    let mut rows = Vec::new();
    for s in &states {
        for p in front_boundary(s, delta) {
            let mut r = vec![num(s.t)];
            r.extend(coords(p, dim));
            rows.push(r);
        }
    }
    let path = out(cfg, "vi_fronts.csv");
    write_csv(&path, &cfg.hash(), &header(&["t"], dim, &[]), &rows)?;
    report.outputs.push(path);
    let last = states.last().expect("initial state");
    let rows: Vec<Vec<String>> = (0..last.phi.len())
        .map(|k| {
            let mut r = coords(grid.coord(k), dim);
            r.push(num(last.phi.values[k]));
            r
        })
        .collect();
    let path = out(cfg, "vi_final.csv");
    write_csv(&path, &cfg.hash(), &header(&[], dim, &["phi"]), &rows)?;
    report.outputs.push(path);
    let e = [1.0, 0.0];
    let growth = front_speed(&states, delta, e, (v.speed_window[0], v.speed_window[1]))?;
    let predicted = predicted_speed(&table, e)?;
    report.metric("growth_rate", growth);
    report.metric("predicted_speed", predicted);
    report.check(Check::at_most(
        "vi.growth_vs_predicted",
        (growth - predicted).abs() / predicted,
        cfg.tolerances.speed,
        "relative gap between front growth and the min formula",
    ));
    finish(cfg, report, start, "vi")
}

/// One row of the metric experiment.
struct MetricRow {
    seed: u64,
    mu: f64,
    e: Point,
    t: f64,
    ratio: f64,
    limit: f64,
    dual: f64,
}

/// Metric rows of one seed and its `(jump, jump bound)` pairs.
type SeedRows = (Vec<MetricRow>, Vec<(f64, f64)>);

/// Radial limits of the metric problem against the dual formula, one
/// realization and one table per seed.
pub fn cmd_metric(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let m = &cfg.metric;
    let mut report = RunReport::new("metric", &cfg.hash(), &cfg.seeds);
    let w = cfg.weights(m.h, "metric.h")?;
    let opts = MetricOptions { r_dom: m.r_dom, tol: m.tol, max_sweeps: m.max_sweeps };
    let dirs: Vec<Point> = m
        .directions
        .iter()
        .map(|e| {
            let l = (e[0] * e[0] + e[1] * e[1]).sqrt();
            [e[0] / l, e[1] / l]
        })
        .collect();
    let per_seed: Vec<Result<SeedRows>> = cfg
        .seeds
        .par_iter()
        .map(|seed| -> Result<SeedRows> {
            let field = cfg.field(*seed)?;
            let table = tabulate(cfg, std::slice::from_ref(&field))?;
            let mut rows = Vec::new();
            let mut jumps = Vec::new();
            for off in &m.mu_offsets {
                let mu = table.eval(m.p) - off;
                let sol = solve_metric(&field, &w, &table, m.p, mu, [0.0, 0.0], &opts)?;
                jumps.push((sol.jump, sol.jump_bound));
                for e in &dirs {
                    let lim = ratios_along(&sol, *e, &m.t_list)?;
                    let dual = dual_formula(&table, m.p, mu, *e)?;
                    for (t, ratio) in lim.t_list.iter().zip(&lim.ratios) {
                        rows.push(MetricRow { seed: *seed, mu, e: *e, t: *t, ratio: *ratio, limit: lim.limit, dual });
                    }
                }
            }
            Ok((rows, jumps))
        })
        .collect();
    let mut rows = Vec::new();
    let mut worst_jump: f64 = f64::NEG_INFINITY;
    for r in per_seed {
        let (rs, js) = r?;
        rows.extend(rs);
        for (j, b) in js {
            worst_jump = worst_jump.max(j - b);
        }
    }
    let dim = cfg.media.dimension;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.seed.to_string(), num(r.mu)];
            v.extend(coords(r.e, 2).into_iter().take(dim));
            v.extend([num(r.t), num(r.ratio), num(r.limit), num(r.dual)]);
            v
        })
        .collect();
    let dir_cols: Vec<&str> = if dim == 1 { vec!["e_x"] } else { vec!["e_x", "e_y"] };
    let mut head = vec!["seed", "mu"];
    head.extend(dir_cols);
    head.extend(["t", "ratio", "limit", "dual"]);
    let path = out(cfg, "metric.csv");
    write_csv(&path, &cfg.hash(), &head, &csv_rows)?;
    report.outputs.push(path);
    report.check(Check::at_most("metric.jump", worst_jump, 0.0, "largest jump minus its barrier bound"));
    let t_max = m.t_list[m.t_list.len() - 1];
    let t_min = m.t_list[0];
    let homogeneous = cfg.is_homogeneous();
    let mut worst: f64 = 0.0;
    for r in rows.iter().filter(|r| r.t == t_max) {
        let got = if homogeneous { r.limit } else { r.ratio };
        worst = worst.max((got - r.dual).abs() / r.dual.abs());
    }
    let (tol, what) = if homogeneous {
        (cfg.tolerances.duality_homogeneous, "fitted radial limit")
    } else {
        (cfg.tolerances.duality_random, "ratio at the largest t")
    };
    report.metric("duality_worst_rel", worst);
    report.check(Check::at_most("metric.duality", worst, tol, format!("{what} against the dual formula")));
    if !homogeneous && cfg.seeds.len() > 1 {
        let spread = |t: f64, mu_k: usize, e: Point| {
            let vals: Vec<f64> =
                rows.iter().filter(|r| r.t == t && r.e == e && mu_rank(&rows, r) == mu_k).map(|r| r.ratio).collect();
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let mut shrinks = true;
        for k in 0..m.mu_offsets.len() {
            for e in &dirs {
                let (a, b) = (spread(t_min, k, *e), spread(t_max, k, *e));
                report.metric(format!("spread_mu{k}_e{:+}_{:+}_tmin", e[0], e[1]), a);
                report.metric(format!("spread_mu{k}_e{:+}_{:+}_tmax", e[0], e[1]), b);
                shrinks &= b < a;
            }
        }
        report.check(Check::flag(
            "metric.spread_shrinks",
            shrinks,
            "cross-seed spread of ratios at the largest t below that at the smallest t",
        ));
    }
    finish(cfg, report, start, "metric")
}

/// Position of a row's level among the offsets of its seed.
fn mu_rank(rows: &[MetricRow], r: &MetricRow) -> usize {
    let mut mus: Vec<f64> = rows.iter().filter(|q| q.seed == r.seed).map(|q| q.mu).collect();
    mus.sort_by(|a, b| b.total_cmp(a));
    mus.dedup();
    mus.iter().position(|m| *m == r.mu).expect("row level is present")
}

/// Largest coordinate of a region along the first axis.
fn region_reach(g0: &Region) -> f64 {
    match *g0 {
        Region::Ball { center, radius } => center[0] + radius,
        Region::Box { hi, .. } => hi[0],
    }
}

fn region_center(g0: &Region) -> Point {
    match *g0 {
        Region::Ball { center, .. } => center,
        Region::Box { lo, hi } => [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
    }
}

/// Front convergence over the configured scales.
pub fn cmd_converge(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let c = &cfg.converge;
    let dim = cfg.media.dimension;
    let hash = cfg.hash();
    let mut report = RunReport::new("converge", &hash, &cfg.seeds[..1]);
    let field = cfg.field(cfg.seeds[0])?;
    let kernel = cfg.kernel()?;
    let table = tabulate(cfg, std::slice::from_ref(&field))?;
    std::fs::create_dir_all(&cfg.output)?;
    table.save(&out(cfg, "converge_hbar.csv"))?;
    let vgrid = vi_grid(dim, c.h_vi, c.half_width)?;
    let vdt = vi_cfl(&table, c.h_vi);
    let flux = flux_for(cfg, Flux::Godunov);
    let states = solve_vi(&table, &c.g0, &vgrid, c.t_star, vdt, usize::MAX, flux)?;
    let last = states.last().expect("initial state");
    let delta = last.default_delta();
    let vi_front = front_boundary(last, delta);
    if vi_front.is_empty() {
        bail!("the VI front is empty at t* = {}", c.t_star);
    }
    report.metric("t_star", c.t_star);
    report.note("flux", format!("{flux:?}"));

    let reach = region_reach(&c.g0);
    let candidates: Vec<Point> = match &c.probes {
        Some(p) => p.clone(),
        None => (1..=3).map(|k| [reach + 0.25 * k as f64 * (c.half_width - reach), region_center(&c.g0)[1]]).collect(),
    };
    let probe_level = cfg.tolerances.probe_phi;
    let outer: Vec<(Point, f64)> =
        candidates.iter().map(|p| (*p, last.phi.at(*p))).filter(|(_, phi)| *phi < probe_level).collect();
    if outer.is_empty() {
        bail!("no probe lies inside {{φ < {probe_level}}} at t* = {}", c.t_star);
    }
    let interior = region_center(&c.g0);
    report.note(
        "probes",
        format!(
            "outer probes at quarter points between G0 and the edge with φ < {probe_level}: {:?}; interior probe at {:?}",
            outer.iter().map(|(p, _)| p[0]).collect::<Vec<_>>(),
            interior
        ),
    );

    let n = (2.0 * c.half_width / c.h_macro).round() as usize;
    let origin = [-c.half_width, if dim == 2 { -c.half_width } else { 0.0 }];
    let mgrid = Grid::new(dim, n, c.h_macro, origin, true)?;
    let ic = InitialCondition { support: c.g0, ramp: c.ramp.unwrap_or(c.h_macro), height: 1.0 };
    let u0 = ic.sample(&mgrid);
    let reaction = ReactionSpec::logistic(field.clone());
    let runs: Vec<Result<(f64, GridField)>> = c
        .epsilons
        .iter()
        .map(|eps| {
            let dt = c.cfl_fraction * max_stable_dt(&field, cfg.kernel.j_bar, *eps);
            let traj = simulate_scaled(*eps, &reaction, &kernel, &u0, c.t_star, dt, usize::MAX)?;
            Ok((dt, traj.last().clone()))
        })
        .collect();
    let mut dists = Vec::new();
    let mut rows = Vec::new();
    let mut front_rows = Vec::new();
    for p in &vi_front {
        let mut r = vec!["vi".to_string(), num(0.0)];
        r.extend(coords(*p, dim));
        front_rows.push(r);
    }
    let mut outer_vals: Vec<Vec<f64>> = vec![Vec::new(); outer.len()];
    let mut interior_vals = Vec::new();
    for (eps, run) in c.epsilons.iter().zip(runs) {
        let (_, u) = run?;
        let front = extract_front(&u, 0.5)?;
        let d = hausdorff(&front, &vi_front)?;
        dists.push(d);
        report.metric(format!("hausdorff_eps_{eps}"), d);
        for p in &front {
            let mut r = vec!["kpp".to_string(), num(*eps)];
            r.extend(coords(*p, dim));
            front_rows.push(r);
        }
        let mut push = |kind: &str, p: Point, phi: f64, val: f64| {
            let mut r = vec![num(*eps), num(d), kind.to_string()];
            r.extend(coords(p, dim));
            r.extend([num(phi), num(val)]);
            rows.push(r);
        };
        for (k, (p, phi)) in outer.iter().enumerate() {
            let val = u.at(*p);
            outer_vals[k].push(val);
            push("outer", *p, *phi, val);
        }
        let val = u.at(interior);
        interior_vals.push(val);
        push("interior", interior, last.phi.at(interior), val);
    }
    let path = out(cfg, "converge.csv");
    write_csv(&path, &hash, &header(&["epsilon", "hausdorff", "probe"], dim, &["phi", "u"]), &rows)?;
    report.outputs.push(path);
    let path = out(cfg, "converge_fronts.csv");
    write_csv(&path, &hash, &header(&["source", "epsilon"], dim, &[]), &front_rows)?;
    report.outputs.push(path);

    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    report.check(Check::flag(
        "converge.hausdorff_decreasing",
        decreasing,
        format!("Hausdorff distances {dists:?} along epsilons {:?}", c.epsilons),
    ));
    let outer_ok = outer_vals.iter().all(|v| v.windows(2).all(|w| w[1] <= w[0]));
    report.check(Check::flag(
        "converge.outer_probes_decreasing",
        outer_ok,
        format!("u at outer probes {outer_vals:?}"),
    ));
    let worst_interior = interior_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    report.check(Check::at_least(
        "converge.interior_probe",
        worst_interior,
        cfg.tolerances.interior_probe,
        "smallest u at the interior probe",
    ));
    let trend_ok = decreasing && outer_ok;
    if !trend_ok {
        report.note("trend_violation", "the epsilon trend failed; see the converge checks");
    }
    finish(cfg, report, start, "converge")
}

/// The invariant suite of every module.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let hash = cfg.hash();
    let mut report = RunReport::new("validate", &hash, &cfg.seeds);
    let fields = cfg.fields()?;
    let j_bar = cfg.kernel.j_bar;
    for f in &fields {
        for c in checks::media_checks(f, j_bar, f.seed) {
            report.check(c);
        }
    }
    let kernel = cfg.kernel()?;
    let w_cell = cfg.weights(cfg.cell.h, "cell.h")?;
    for c in checks::stencil_checks(&w_cell, "cell.h") {
        report.check(c);
    }
    let w_trial = cfg.weights(kernel.r1 / 4.0, "kernel")?;
    let trials = cfg.validate.trials;
    let seed = cfg.seeds[0];
    let field = &fields[0];
    let kpp_bad = checks::kpp_comparison_trials(field, &w_trial, trials, seed)?;
    report.check(Check::at_most("kpp.comparison", kpp_bad as f64, 0.0, format!("violating trials out of {trials}")));
    let mean_c = 0.5 * (field.c_min + field.c_max);
    let table = checks::constant_table(&w_trial, mean_c, 3.0, if cfg.media.dimension == 1 { 25 } else { 13 })?;
    let fluxes: Vec<Flux> =
        if cfg.media.dimension == 1 { vec![Flux::Godunov, Flux::LaxFriedrichs] } else { vec![Flux::LaxFriedrichs] };
    for flux in &fluxes {
        let bad = checks::hj_monotone_trials(&table, *flux, trials, seed)?;
        report.check(Check::at_most(
            "hj.monotone",
            bad as f64,
            0.0,
            format!("{flux:?}: violating trials out of {trials}"),
        ));
        let (above, drop, g0) = checks::vi_structure(&table, *flux)?;
        report.check(Check::at_most("hj.obstacle", above, 0.0, format!("{flux:?}: largest φ")));
        if *flux == Flux::Godunov {
            report.check(Check::at_most("hj.monotone_in_time", drop, 0.0, "largest decrease of φ"));
            report.check(Check::at_most("hj.zero_on_g0", g0, 0.0, "largest |φ| on G0"));
        } else {
            report.metric("lax_friedrichs_time_decrease", drop);
            report.metric("lax_friedrichs_g0_gap", g0);
        }
    }
    let cell_bad = checks::cell_monotone_trials(field, &w_trial, trials, seed)?;
    report.check(Check::at_most("cell.monotone", cell_bad as f64, 0.0, format!("violating trials out of {trials}")));
    let gap = checks::constant_cell_gap(&w_trial, mean_c, cfg.media.kappa)?;
    report.check(Check::at_most("cell.closed_form", gap, 1e-8, "constant medium against J̄ - S_h(p) - c0"));

    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| vec![c.name.clone(), num(c.observed), num(c.threshold), c.passed.to_string(), c.detail.clone()])
        .collect();
    let path = out(cfg, "validate.csv");
    write_csv(&path, &hash, &["check", "observed", "threshold", "passed", "detail"], &rows)?;
    report.outputs.push(path);
    finish(cfg, report, start, "validate")
}

/// Runs a subcommand by name.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<RunReport> {
    match name {
        "hbar" => Ok(cmd_hbar(cfg)?.0),
        "simulate" => cmd_simulate(cfg),
        "vi" => cmd_vi(cfg),
        "metric" => cmd_metric(cfg),
        "converge" => cmd_converge(cfg),
        "validate" => cmd_validate(cfg),
        other => Err(anyhow!("unknown command {other}")),
    }
}
