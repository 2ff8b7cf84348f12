//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::Rng;
use serde::Deserialize;

use cwhfmt::allocation::{allocate, FailureMask, ThrusterConfig};
use cwhfmt::bench::cell_scenario;
use cwhfmt::cwh::{propagate_schedule, BurnSchedule, Impulse, OrbitModel, State};
use cwhfmt::geometry::EllipsoidKoz;
use cwhfmt::planner::{precompute, Plan, PrecomputedGraphData};
use cwhfmt::reach::{fit_gramian_bounds, gramian_extremes};
use cwhfmt::report::{run_online, OnlineRun};
use cwhfmt::safety::optimal_cam;
use cwhfmt::smoothing::min_fuel_fixed_times;
use cwhfmt::socp::SocpOptions;
use cwhfmt::steering::{Steerer, SteeringLimits};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn model() -> OrbitModel {
    OrbitModel::new(OMEGA).unwrap()
}

fn random_state<R: Rng>(rng: &mut R, pos: f64, vel: f64, planar: bool) -> State {
    let mut r = [0.0; 3];
    let mut v = [0.0; 3];
    for i in 0..3 {
        r[i] = rng.gen_range(-pos..pos);
        v[i] = rng.gen_range(-vel..vel);
    }
    if planar {
        r[2] = 0.0;
        v[2] = 0.0;
    }
    State::new(r, v)
}

fn dynamics() -> Outcome {
    let start = Instant::now();
    let m = model();
    let a = system_matrix(OMEGA);
    let mut rng = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x0 = random_state(&mut rng, 500.0, 0.5, false);
        let t = rng.gen_range(0.0..m.period());
        let cf = cwhfmt::cwh::propagate_coast(&m, &x0, t).to_vector();
        let rk = rk45(&a, &x0.to_vector(), t, 1e-11, 1e-13);
        worst = worst.max((cf - rk).norm() / rk.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 10.0,
        format!("1000 cases, max relative error {worst:.2e}, {secs:.2} s"),
    )
}

fn steering() -> Outcome {
    let m = model();
    let limits = SteeringLimits::for_orbit(&m);
    let steerer = Steerer::new(m, limits).unwrap();
    let grid = DurationGrid::new(OMEGA, limits.t_max, 4096);
    let mut rng = rng(2);
    let (mut endpoint_err, mut bound_violations, mut worst_gap, mut failures) = (0.0f64, 0, 0.0f64, 0);
    for _ in 0..500 {
        let x0 = random_state(&mut rng, 200.0, 0.2, false);
        let xf = random_state(&mut rng, 200.0, 0.2, false);
        let sol = match steerer.solve(&x0, &xf) {
            Ok(s) => s,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let t = sol.duration;
        let mut mid = x0.to_vector();
        { let mut v = mid.fixed_rows_mut::<3>(3); v += &sol.dv1; }
        let mut end = expm_stm(OMEGA, t) * mid;
        { let mut v = end.fixed_rows_mut::<3>(3); v += &sol.dv2; }
        let scale = 1.0f64.max(xf.to_vector().amax());
        endpoint_err = endpoint_err.max((end - xf.to_vector()).amax() / scale);
        let stacked = sol.stacked_norm();
        let slack = 1e-12 * sol.cost;
        if !(stacked <= sol.cost + slack && sol.cost <= 2f64.sqrt() * stacked + slack) {
            bound_violations += 1;
        }
        let oracle = grid.min_cost(&x0.to_vector(), &xf.to_vector());
        worst_gap = worst_gap.max((sol.cost - oracle).abs() / oracle);
    }
    outcome(
        failures == 0 && endpoint_err <= 1e-8 && bound_violations == 0 && worst_gap <= 0.005,
        format!(
            "500 pairs, {failures} solver failures, endpoint error {endpoint_err:.2e}, \
             {bound_violations} cost-bound violations, max gap to 4096-point grid {:.4}%",
            100.0 * worst_gap
        ),
    )
}

/// Scans the Gramian of the mean-motion `w` system on `2000` durations of
/// `(0, t_max]`, the fitted grid plus its midpoints. Returns the smallest
/// `lambda_min / T^2`, the largest `lambda_max` and the largest relative
/// disagreement with the library's eigenvalues.
fn gramian_scan(w: f64, t_max: f64) -> (f64, f64, f64) {
    let m = OrbitModel::new(w).unwrap();
    let mut min_ratio = f64::INFINITY;
    let mut max_lambda: f64 = 0.0;
    let mut agree: f64 = 0.0;
    for k in 1..=2000 {
        let t = t_max * k as f64 / 2000.0;
        let g = impulse_matrix(w, t);
        let eig = (g * g.transpose()).symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let (lib_lo, lib_hi) = gramian_extremes(&m, t);
        agree = agree.max(((lib_lo - lo) / lo).abs()).max(((lib_hi - hi) / hi).abs());
        min_ratio = min_ratio.min(lo / (t * t));
        max_lambda = max_lambda.max(hi);
    }
    (min_ratio, max_lambda, agree)
}

fn gramian() -> Outcome {
    // Non-dimensional time (unit mean motion), where the upper bound is
    // finite and informative.
    let t_max = 0.1 * 2.0 * std::f64::consts::PI;
    let fit = fit_gramian_bounds(&OrbitModel::new(1.0).unwrap(), t_max, 1000);
    let a_norm = system_matrix(1.0).singular_values().max();
    let upper = ((a_norm * t_max).exp() + 1.0).powi(2);
    let (min_ratio, max_lambda, agree) = gramian_scan(1.0, t_max);
    // SI units: the same bound compared in log space, since it overflows.
    let si = model();
    let si_t_max = 0.1 * si.period();
    let si_fit = fit_gramian_bounds(&si, si_t_max, 1000);
    let si_a = system_matrix(OMEGA).singular_values().max() * si_t_max;
    let si_log_upper = 2.0 * (si_a + (-si_a).exp().ln_1p());
    let (si_ratio, si_lambda, si_agree) = gramian_scan(OMEGA, si_t_max);
    let pass = fit.m_min > 0.0
        && min_ratio >= fit.m_min * (1.0 - 1e-3)
        && max_lambda <= upper
        && (fit.m_max - upper).abs() <= 1e-12 * upper
        && agree <= 1e-6
        && si_fit.m_min > 0.0
        && si_ratio >= si_fit.m_min * (1.0 - 1e-3)
        && si_lambda.ln() <= si_log_upper
        && si_agree <= 1e-6;
    outcome(
        pass,
        format!(
            "unit mean motion: fitted M_min {:.4e}, min ratio on 2000 points {min_ratio:.4e}, \
             max lambda {max_lambda:.4e} <= {upper:.4e}; SI: fitted M_min {:.4e}, min ratio {si_ratio:.4e}, \
             ln max lambda {:.2} <= {si_log_upper:.1}",
            fit.m_min,
            si_fit.m_min,
            si_lambda.ln()
        ),
    )
}

/// Sweep angle at the first entry into the ellipsoid along the coast from
/// `x`, resolved by a `dt` scan and bisection; a full orbit if none.
fn first_entry_theta(x: &State, semi: [f64; 3], dt: f64) -> f64 {
    let inside = |t: f64| {
        let s = expm_stm(OMEGA, t) * x.to_vector();
        (s[0] / semi[0]).powi(2) + (s[1] / semi[1]).powi(2) + (s[2] / semi[2]).powi(2) < 1.0
    };
    let period = model().period();
    let steps = (period / dt).ceil() as usize;
    let mut prev = 0.0;
    for k in 1..=steps {
        let t = (k as f64 * dt).min(period);
        if inside(t) {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return OMEGA * lo;
        }
        prev = t;
    }
    2.0 * std::f64::consts::PI
}

fn circularization_cost(w: f64, x: &Vector6<f64>) -> f64 {
    Vector3::new(-x[3], -1.5 * w * x[0] - x[4], -x[5]).norm()
}

fn koz_free(post: &State, semi: [f64; 3], periods: f64, dt: f64) -> usize {
    let step = expm_stm(OMEGA, dt);
    let steps = (periods * model().period() / dt).ceil() as usize;
    let mut x = post.to_vector();
    let mut entries = 0;
    for _ in 0..=steps {
        let level = (x[0] / semi[0]).powi(2) + (x[1] / semi[1]).powi(2) + (x[2] / semi[2]).powi(2);
        if level < 1.0 {
            entries += 1;
        }
        x = step * x;
    }
    entries
}

fn cam() -> Outcome {
    let m = model();
    let scenario = default_scenario();
    let ctx = scenario.safety_context();
    let dt = scenario.dt();
    let semi = scenario.koz.semi_axes_m;
    let koz = EllipsoidKoz::new(Vector3::from(semi)).unwrap();
    let rho_x = koz.rho_x();
    let mut rng = rng(3);
    let (mut cases, mut worse, mut missing, mut entries, mut certified) = (0, 0, 0, 0, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    while cases < 200 {
        let planar = cases % 2 == 0;
        let x = random_state(&mut rng, 250.0, 0.2, planar);
        if koz.contains(&x.r) {
            continue;
        }
        cases += 1;
        let analytic = optimal_cam(&m, &x, &koz, dt);
        let theta_max = first_entry_theta(&x, semi, dt);
        let costs: Vec<Option<f64>> = (0..4096)
            .map(|k| {
                let th = theta_max * k as f64 / 4095.0;
                let s = expm_stm(OMEGA, th / OMEGA) * x.to_vector();
                (s[0].abs() > rho_x).then(|| circularization_cost(OMEGA, &s))
            })
            .collect();
        let grid_min = costs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let resolution = costs
            .windows(2)
            .filter_map(|w| Some((w[1]? - w[0]?).abs()))
            .fold(0.0, f64::max);
        match analytic {
            Ok(c) => {
                if grid_min.is_finite() {
                    let excess = c.cost() - grid_min;
                    worst_excess = worst_excess.max(excess);
                    if excess > resolution {
                        worse += 1;
                    }
                }
                entries += koz_free(&c.post_state, semi, 3.0, dt);
            }
            Err(_) => {
                if grid_min.is_finite() {
                    missing += 1;
                }
            }
        }
        let cert = ctx.certify(&x);
        if cert.safe {
            certified += 1;
            entries += koz_free(&cert.cam.expect("safe certificate has a CAM").post_state, semi, 3.0, dt);
        }
    }
    outcome(
        worse == 0 && missing == 0 && entries == 0,
        format!(
            "200 states, {worse} above grid minimum, {missing} missed, worst excess {worst_excess:.2e}, \
             {certified} certified, {entries} KOZ entries over 3 periods"
        ),
    )
}

fn allocation() -> Outcome {
    let cfg = ThrusterConfig::default_cube(1.0);
    let k = cfg.len();
    let mut effect = DMatrix::zeros(6, k);
    for (j, t) in cfg.thrusters.iter().enumerate() {
        let moment = t.position.cross(&t.direction);
        for i in 0..3 {
            effect[(i, j)] = t.direction[i];
            effect[(i + 3, j)] = moment[i];
        }
    }
    let mask = FailureMask::all_healthy(k);
    let mut rng = rng(4);
    let (mut worst_rel, mut worst_torque, mut fuel_below, mut errors) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..500 {
        let dir = loop {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let dv = dir * rng.gen_range(1e-3..1.0);
        let res = match allocate(&dv, &Vector3::zeros(), &cfg, &mask) {
            Ok(r) => r,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        let b = DVector::from_iterator(6, dv.iter().copied().chain([0.0; 3]));
        let Some(oracle) = lp_vertex_min(&effect, &b) else {
            errors += 1;
            continue;
        };
        worst_rel = worst_rel.max((res.fuel - oracle).abs() / oracle);
        let mut torque = Vector3::zeros();
        for (t, &mag) in cfg.thrusters.iter().zip(&res.magnitudes) {
            torque += t.position.cross(&t.direction) * mag;
        }
        worst_torque = worst_torque.max(torque.norm());
        if res.fuel < dv.norm() {
            fuel_below += 1;
        }
    }
    outcome(
        errors == 0 && worst_rel <= 1e-7 && worst_torque <= 1e-8 && fuel_below == 0,
        format!(
            "500 commands, {errors} errors, max relative gap to vertex LP {worst_rel:.2e}, \
             max torque residual {worst_torque:.2e}, {fuel_below} with fuel below |dv|"
        ),
    )
}

#[derive(Deserialize)]
struct Corpus {
    cases: Vec<CorpusCase>,
}

#[derive(Deserialize)]
struct CorpusCase {
    omega: f64,
    x_init: [f64; 6],
    x_goal: [f64; 6],
    times: Vec<f64>,
    t_final: f64,
    dv_max: Option<f64>,
    objective: f64,
}

/// One cell of the benchmark sweep, planned with smoothing.
struct Cell {
    n: usize,
    j_bar: f64,
    run: OnlineRun,
}

fn sweep() -> Vec<Cell> {
    let base = default_scenario();
    let ns: Vec<usize> = (0..9).map(|k| (650.0 + (2000.0 - 650.0) * k as f64 / 8.0).round() as usize).collect();
    let js: Vec<f64> = (0..5).map(|k| 0.2 + 0.05 * k as f64).collect();
    let full = precompute(&cell_scenario(&base, 2000, 0.4)).expect("sweep precompute");
    let mut cells = Vec::new();
    for &n in &ns {
        for &j in &js {
            let sc = cell_scenario(&base, n, j);
            let data = full.restricted(sc.planner.n_per_leg, sc.n_goal(), j);
            cells.push(Cell {
                n,
                j_bar: j,
                run: run_online(&sc, &data, true),
            });
        }
    }
    cells
}

/// Largest boundary-state mismatch between the smoothed and unsmoothed
/// schedules over the smoothed segments.
fn smoothing_boundary_error(m: &OrbitModel, unsmoothed: &Plan, smoothed: &Plan, run: &OnlineRun) -> (f64, usize) {
    let Some(rep) = &run.report.smoothing else {
        return (0.0, 0);
    };
    let upto = |p: &Plan, t1: f64, last: bool| {
        let imps: Vec<Impulse> = p
            .schedule
            .impulses()
            .iter()
            .copied()
            .filter(|i| i.tau < t1 || (last && i.tau <= t1))
            .collect();
        propagate_schedule(m, &p.x_init, &BurnSchedule::from_impulses(imps), t1)
    };
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    for seg in rep.segments.iter().filter(|s| s.alpha > 0.0) {
        accepted += 1;
        let last = seg.t_end == unsmoothed.t_final;
        let a = upto(unsmoothed, seg.t_end, last).to_vector();
        let b = upto(smoothed, seg.t_end, last).to_vector();
        worst = worst.max((a - b).amax());
    }
    (worst, accepted)
}

fn smoothing(cells: &[Cell]) -> Outcome {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/socp_corpus.json"))
        .expect("corpus fixture");
    let corpus: Corpus = serde_json::from_str(&text).expect("corpus parses");
    let (mut worst_obj, mut worst_bc, mut corpus_errors) = (0.0f64, 0.0f64, 0);
    for c in &corpus.cases {
        let m = OrbitModel::new(c.omega).unwrap();
        let x0 = State::from_array(c.x_init);
        let xf = State::from_array(c.x_goal);
        match min_fuel_fixed_times(&m, &x0, &xf, &c.times, c.t_final, c.dv_max.unwrap_or(f64::INFINITY), &SocpOptions::default()) {
            Ok((dvs, obj, _)) => {
                worst_obj = worst_obj.max((obj - c.objective).abs());
                let mut x = x0.to_vector();
                let mut now = 0.0;
                for (dv, &t) in dvs.iter().zip(&c.times) {
                    x = expm_stm(c.omega, t - now) * x;
                    { let mut v = x.fixed_rows_mut::<3>(3); v += dv; }
                    now = t;
                }
                x = expm_stm(c.omega, c.t_final - now) * x;
                worst_bc = worst_bc.max((x - xf.to_vector()).amax());
            }
            Err(_) => corpus_errors += 1,
        }
    }
    let m = model();
    let (mut increases, mut plan_bc, mut accepted, mut planned) = (0, 0.0f64, 0, 0);
    for cell in cells {
        let (Some(un), Some(sm)) = (&cell.run.unsmoothed, &cell.run.plan) else {
            continue;
        };
        planned += 1;
        if sm.cost > un.cost {
            increases += 1;
        }
        let (e, a) = smoothing_boundary_error(&m, un, sm, &cell.run);
        plan_bc = plan_bc.max(e);
        accepted += a;
    }
    outcome(
        corpus_errors == 0 && worst_obj <= 1e-6 && worst_bc <= 1e-8 && increases == 0 && plan_bc <= 1e-8,
        format!(
            "{} corpus cases, max objective gap {worst_obj:.2e}, corpus BC error {worst_bc:.2e}; \
             {planned} planned sweep cells, {increases} cost increases, {accepted} accepted alphas, \
             max BC error {plan_bc:.2e}",
            corpus.cases.len()
        ),
    )
}

fn end_to_end(data: &PrecomputedGraphData) -> Outcome {
    let scenario = default_scenario();
    let run = run_online(&scenario, data, true);
    let r = &run.report;
    let cost = r.total_cost_mps.unwrap_or(f64::NAN);
    let ratio = r.fuel_ratio.unwrap_or(f64::NAN);
    let within = r.end_state_error.is_some_and(|e| e.within_tolerance);
    let not_worse = r.unsmoothed_cost_mps.is_some_and(|u| cost <= u);
    let pass = run.succeeded()
        && r.n_total == 2000
        && (0.641..=1.1).contains(&cost)
        && (1.0..=2.0).contains(&ratio)
        && run.online_seconds < 60.0
        && within
        && not_worse
        && r.all_burns_certified;
    outcome(
        pass,
        format!(
            "n {} J_bar {}: {:?}, cost {cost:.4} m/s (unsmoothed {:.4}), fuel ratio {ratio:.4}, \
             online {:.3} s, end state within tolerance {within}, all burns certified {}",
            r.n_total,
            r.j_bar_mps,
            r.outcome,
            r.unsmoothed_cost_mps.unwrap_or(f64::NAN),
            run.online_seconds,
            r.all_burns_certified
        ),
    )
}

fn ao_trend(cells: &[Cell]) -> Outcome {
    let mut series: Vec<(usize, Option<f64>)> = cells
        .iter()
        .filter(|c| (c.j_bar - 0.3).abs() < 1e-9)
        .map(|c| (c.n, c.run.unsmoothed.as_ref().map(|p| p.cost)))
        .collect();
    series.sort_by_key(|s| s.0);
    let mut best = f64::INFINITY;
    let mut violations = 0;
    let mut text = Vec::new();
    for &(n, c) in &series {
        match c {
            Some(c) => {
                if c > 1.05 * best {
                    violations += 1;
                }
                best = best.min(c);
                text.push(format!("{n}:{c:.3}"));
            }
            None => text.push(format!("{n}:fail")),
        }
    }
    let last = series.last().and_then(|s| s.1).unwrap_or(f64::INFINITY);
    outcome(
        series.len() == 9 && violations == 0 && last <= 1.35 * 0.641,
        format!("J_bar 0.3 unsmoothed cost by n [{}], {violations} rises above 5% band", text.join(" ")),
    )
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cwhfmt"))
        .args(args)
        .env("CWHFMT_THREADS", "2")
        .output()
        .expect("cli runs")
}

fn determinism(dir: &Path, in_process: &PrecomputedGraphData) -> Outcome {
    let scenario = default_scenario_path();
    let sc = scenario.to_str().unwrap();
    let mut problems = Vec::new();
    let mut datas = Vec::new();
    for k in 0..2 {
        let path = dir.join(format!("data{k}.bin"));
        let out = run_cli(&["precompute", "--scenario", sc, "--out", path.to_str().unwrap()]);
        if !out.status.success() {
            problems.push(format!("precompute exit {:?}", out.status.code()));
        }
        datas.push(std::fs::read(&path).unwrap_or_default());
    }
    if datas[0] != datas[1] {
        problems.push("data files differ".into());
    }
    if datas[0] != in_process.to_bytes() {
        problems.push("CLI data differs from in-process data".into());
    }
    let data0 = dir.join("data0.bin");
    let mut compared = 0;
    for flags in [&[][..], &["--no-smooth"][..]] {
        let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
        for k in 0..2 {
            let prefix = dir.join(format!("plan{}{k}", flags.len()));
            let mut args = vec!["plan", "--scenario", sc, "--data", data0.to_str().unwrap(), "--out", prefix.to_str().unwrap()];
            args.extend_from_slice(flags);
            let out = run_cli(&args);
            if !out.status.success() {
                problems.push(format!("plan {flags:?} exit {:?}", out.status.code()));
            }
            let files = [".traj.csv", ".burns.csv", ".report.json", ".cam.json"]
                .iter()
                .map(|ext| std::fs::read(format!("{}{ext}", prefix.display())).unwrap_or_default())
                .collect();
            outputs.push(files);
        }
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            compared += 1;
            if a != b || a.is_empty() {
                problems.push(format!("plan {flags:?} outputs differ or are empty"));
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "2 precomputes ({} bytes), {compared} plan files compared{}",
            datas[0].len(),
            if problems.is_empty() { String::new() } else { format!(": {}", problems.join("; ")) }
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    record("dynamics vs RK45", dynamics());
    record("steering correctness", steering());
    record("gramian bounds", gramian());
    record("CAM optimality", cam());
    record("allocation vs LP", allocation());
    let cells = sweep();
    record("smoothing", smoothing(&cells));
    let data = precompute(&default_scenario()).expect("default precompute");
    record("end-to-end default scenario", end_to_end(&data));
    record("AO trend", ao_trend(&cells));
    let dir = tempfile::tempdir().expect("temp dir");
    record("determinism", determinism(dir.path(), &data));
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
