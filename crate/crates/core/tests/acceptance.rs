//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails. Pass criterion numbers as
//! arguments to run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use forest_mixture::baselines::{independent_components, CoordinateAscent};
use forest_mixture::fm::aux_objective;
use forest_mixture::generators::{region_block_model, ImageGrid};
use forest_mixture::{
    block_round, blocks_conditionally_independent, cavi_run, cavi_update, elbo, fm_bound, fm_run,
    fm_variational_step, exact_posterior, jensen_gap, optimal_aux, ridge_loss, ridge_optimum, within_relative,
    BlockPartition, FmSolver, GaussianDefModel, Observation, VariationalState,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const CRITERIA: &[(u32, &str, fn() -> Outcome)] = &[
    (1, "bound dominance", bound_dominance),
    (2, "gap identity", gap_identity),
    (3, "forest one-iteration convergence", forest_one_iteration),
    (4, "fixed-point correctness on window models", fixed_point_correctness),
    (5, "window-size ordering of FM convergence", window_ordering),
    (6, "FM vs block vs CAVI on region blocks", region_block_ordering),
    (7, "monotone traces", monotone_traces),
    (8, "optimality of the auxiliary parameters", aux_optimality),
    (9, "variance domination", variance_domination),
    (10, "block baseline pathology", block_pathology),
    (11, "thread-count determinism", thread_determinism),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for &(id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} [{verdict}] {name}: {} ({:.1}s)",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

/// Ten random instances per seed block; the first 500 of them are shared by
/// criteria 1 and 2.
fn dominance_instances() -> Vec<(GaussianDefModel, Observation, VariationalState)> {
    let mut r = rng(1);
    (0..500)
        .map(|k| {
            let zero_frac = [0.0, 0.3, 0.7][k % 3];
            let model = random_model(&mut r, 20, 20, zero_frac);
            let x = random_observation(&mut r, model.n());
            let q = random_state(&mut r, model.m());
            (model, x, q)
        })
        .collect()
}

fn bound_dominance() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for (model, x, q) in dominance_instances() {
        let e = elbo(&model, &x, &q).unwrap();
        let opt = optimal_aux(&model, &q).unwrap();
        let mut auxes = vec![random_feasible_aux(&mut r, &model, &opt, false)];
        auxes.push(random_feasible_aux(&mut r, &model, &opt, true));
        auxes.push(opt);
        for aux in &auxes {
            worst = worst.max(fm_bound(&model, &x, &q, aux).unwrap() - e);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("{checked} (instance, aux) pairs, max fm_bound - elbo = {worst:.3e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn gap_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for (model, x, q) in dominance_instances() {
        let aux = optimal_aux(&model, &q).unwrap();
        let gap = elbo(&model, &x, &q).unwrap() - fm_bound(&model, &x, &q, &aux).unwrap();
        worst = worst.max((gap - gap_oracle(&model, &q)).abs());
        worst = worst.max((jensen_gap(&model, &q).unwrap() - gap_oracle(&model, &q)).abs());
    }
    outcome(worst <= 1e-9, format!("500 instances, max |gap - closed form| = {worst:.3e}"))
}

fn forest_one_iteration() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let model = random_forest(&mut r, 200, 50);
        let x = random_observation(&mut r, model.n());
        let q0 = VariationalState::prior(&model);
        let q1 = fm_variational_step(&model, &x, &q0, &optimal_aux(&model, &q0).unwrap()).unwrap();
        let post = exact_posterior(&model, &x).unwrap();
        for (a, b) in q1.mu().iter().zip(&post.mean) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-9, format!("100 forests, max |mu_1 - posterior mean| = {worst:.3e}"))
}

const FIXED_POINT_REL: f64 = 1e-6;
const FM_ROUND_CAP: usize = 2000;
const CAVI_SWEEP_CAP: usize = 20_000;

/// Rounds of `schedule` until the ridge loss is within `rel` of `opt`.
fn coordinate_rounds(
    model: &GaussianDefModel,
    x: &Observation,
    opt: f64,
    rel: f64,
    cap: usize,
    schedule: impl Fn(usize) -> Vec<usize>,
) -> Option<usize> {
    let mut solver = CoordinateAscent::new(model, x, VariationalState::prior(model)).unwrap();
    let m = model.m();
    let mut since_refresh = 0;
    for round in 0..cap {
        if within_relative(solver.ridge_loss(), opt, rel) {
            let exact = ridge_loss(model, x, solver.state().mu()).unwrap();
            if within_relative(exact, opt, rel) {
                return Some(round);
            }
        }
        let sel = schedule(round);
        since_refresh += sel.len();
        solver.apply(&sel);
        if since_refresh >= m {
            solver.refresh();
            since_refresh = 0;
        }
    }
    None
}

fn fm_rounds(model: &GaussianDefModel, x: &Observation, opt: f64, rel: f64, cap: usize) -> Option<usize> {
    let mut solver = FmSolver::new(model, x, VariationalState::prior(model)).unwrap();
    for t in 0..=cap {
        if within_relative(solver.ridge_loss(), opt, rel) {
            return Some(t);
        }
        if t < cap {
            solver.step();
        }
    }
    None
}

fn show(v: Option<usize>) -> String {
    v.map_or("not reached".to_string(), |t| t.to_string())
}

fn fixed_point_correctness() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [3, 7, 15] {
        let (model, x) = window_problem(s, 11);
        let opt = ridge_loss(&model, &x, &ridge_optimum(&model, &x).unwrap()).unwrap();
        let m = model.m();
        let fm = fm_rounds(&model, &x, opt, FIXED_POINT_REL, FM_ROUND_CAP);
        let cavi = coordinate_rounds(&model, &x, opt, FIXED_POINT_REL, CAVI_SWEEP_CAP * m, |t| vec![t % m]);
        let partition = independent_components(&model);
        assert!(blocks_conditionally_independent(&model, &partition).unwrap());
        let block = coordinate_rounds(&model, &x, opt, FIXED_POINT_REL, CAVI_SWEEP_CAP * m, |t| partition.schedule(t));
        pass &= fm.is_some() && cavi.is_some() && block.is_some();
        parts.push(format!(
            "s={s}: fm {} (cap {FM_ROUND_CAP}), cavi {}, block {} ({} blocks)",
            show(fm),
            show(cavi),
            show(block),
            partition.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn window_ordering() -> Outcome {
    let start = Instant::now();
    let iters: Vec<Option<usize>> = [3, 7, 15]
        .iter()
        .map(|&s| {
            let (model, x) = window_problem(s, 11);
            let opt = ridge_loss(&model, &x, &ridge_optimum(&model, &x).unwrap()).unwrap();
            fm_rounds(&model, &x, opt, 0.01, 200_000)
        })
        .collect();
    let elapsed = start.elapsed();
    let ordered = match (iters[0], iters[1], iters[2]) {
        (Some(a), Some(b), Some(c)) => a < b && b < c,
        _ => false,
    };
    outcome(
        ordered && elapsed < Duration::from_secs(60),
        format!(
            "iterations to 1%: s=3 {}, s=7 {}, s=15 {}; {:.1}s",
            show(iters[0]),
            show(iters[1]),
            show(iters[2]),
            elapsed.as_secs_f64()
        ),
    )
}

fn region_block_ordering() -> Outcome {
    let grid = ImageGrid::mnist();
    let (model, partition) = region_block_model(grid, 7, vec![0.0; grid.pixels()], 1.0, 1.0).unwrap();
    let x = uniform_image(grid.pixels(), 11);
    let opt = ridge_loss(&model, &x, &ridge_optimum(&model, &x).unwrap()).unwrap();
    let m = model.m();
    let fm = fm_rounds(&model, &x, opt, 0.01, 100_000);
    let block = coordinate_rounds(&model, &x, opt, 0.01, 1_000_000, |t| partition.schedule(t));
    let cavi = coordinate_rounds(&model, &x, opt, 0.01, 10_000_000, |t| vec![t % m]);
    // the traced runs agree with the lean solvers on the FM and block counts
    let traced_fm = fm_run(&model, &x, &VariationalState::prior(&model), fm.unwrap_or(0) + 1)
        .unwrap()
        .1
        .first_within(opt, 0.01);
    let ordered = match (fm, block, cavi) {
        (Some(a), Some(b), Some(c)) => a < b && b < c,
        _ => false,
    };
    outcome(
        ordered && traced_fm == fm,
        format!("iterations to 1%: fm {}, block {}, cavi {}", show(fm), show(block), show(cavi)),
    )
}

/// `next >= prev` up to `slack`.
const MONOTONE_SLACK: f64 = 1e-12;

fn monotone_traces() -> Outcome {
    let mut r = rng(7);
    let mut worst_fm = f64::NEG_INFINITY;
    let mut worst_cavi = f64::NEG_INFINITY;
    let mut runs = 0;
    let mut track = |model: &GaussianDefModel, x: &Observation, fm_iters: usize, cavi_iters: usize| {
        let init = VariationalState::prior(model);
        let (_, t) = fm_run(model, x, &init, fm_iters).unwrap();
        for w in t.rows().windows(2) {
            worst_fm = worst_fm.max(w[0].fm_bound.unwrap() - w[1].fm_bound.unwrap());
        }
        let (_, t) = cavi_run(model, x, &init, cavi_iters).unwrap();
        for w in t.rows().windows(2) {
            worst_cavi = worst_cavi.max(w[1].ridge_loss - w[0].ridge_loss);
        }
        runs += 1;
    };
    for _ in 0..200 {
        let model = random_model(&mut r, 20, 20, 0.3);
        let x = random_observation(&mut r, model.n());
        track(&model, &x, 50, 200);
    }
    for s in [3, 7] {
        let (model, x) = window_problem(s, 11);
        track(&model, &x, 200, 5000);
    }
    outcome(
        worst_fm <= MONOTONE_SLACK && worst_cavi <= MONOTONE_SLACK,
        format!(
            "{runs} runs, max FM-bound decrease {worst_fm:.3e}, max CAVI ridge increase {worst_cavi:.3e}"
        ),
    )
}

fn aux_optimality() -> Outcome {
    let mut r = rng(8);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..100 {
        let model = random_model(&mut r, 20, 20, [0.0, 0.3, 0.7][k % 3]);
        let q = random_state(&mut r, model.m());
        let opt = optimal_aux(&model, &q).unwrap();
        let best = aux_objective(&model, &q, &opt).unwrap();
        for p in 0..20 {
            let other = random_feasible_aux(&mut r, &model, &opt, p % 4 == 0);
            let vals = aux_objective(&model, &q, &other).unwrap();
            for (b, v) in best.iter().zip(&vals) {
                worst = worst.max(v - b);
            }
        }
    }
    outcome(worst <= 1e-9, format!("2000 perturbations, max per-row improvement over optimum {worst:.3e}"))
}

fn variance_domination() -> Outcome {
    let mut r = rng(9);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let model = random_model(&mut r, 20, 20, 0.3);
        let x = random_observation(&mut r, model.n());
        let mut solver = FmSolver::new(&model, &x, VariationalState::prior(&model)).unwrap();
        let mut prev = solver.state().sigma2().to_vec();
        for _ in 0..10_000 {
            solver.step();
            let cur = solver.state().sigma2();
            let settled = cur.iter().zip(&prev).all(|(a, b)| a == b);
            prev = cur.to_vec();
            if settled {
                break;
            }
        }
        let mut q = VariationalState::prior(&model);
        for j in 0..model.m() {
            q = cavi_update(&model, &x, &q, j).unwrap();
        }
        for (f, c) in prev.iter().zip(q.sigma2()) {
            worst = worst.max(f - c);
        }
    }
    outcome(worst <= 1e-12, format!("100 models, max FM - CAVI stationary variance {worst:.3e}"))
}

fn block_pathology() -> Outcome {
    let d1 = GaussianDefModel::from_rows(&[[1.0, 1.0]], vec![0.0], 1.0, 1.0).unwrap();
    let xd = Observation::new(vec![1.0]).unwrap();
    let f1 = GaussianDefModel::from_rows(&[[1.0, 0.0], [0.0, 2.0]], vec![0.0, 0.0], 1.0, 1.0).unwrap();
    let xf = Observation::new(vec![1.0, 2.0]).unwrap();
    let split = BlockPartition::singletons(2);
    let d_indep = blocks_conditionally_independent(&d1, &split).unwrap();
    let d_round = block_round(&d1, &xd, &VariationalState::prior(&d1), &split, 0).unwrap();
    let f_indep = blocks_conditionally_independent(&f1, &split).unwrap();
    let f_round = block_round(&f1, &xf, &VariationalState::prior(&f1), &split, 0).unwrap();
    let f_opt = normal_equations_oracle(&f1, &xf);
    let overshoot = d_round.mu().iter().all(|m| (m - 0.5).abs() < 1e-15);
    let exact = f_round.mu().iter().zip(&f_opt).all(|(a, b)| (a - b).abs() < 1e-12);
    outcome(
        !d_indep && overshoot && f_indep && exact,
        format!(
            "dense: independent={d_indep}, mu={:?}; forest: independent={f_indep}, mu={:?} vs optimum {:?}",
            d_round.mu(),
            f_round.mu(),
            f_opt
        ),
    )
}

fn run_cli(config: &Path, out: &Path, threads: usize) {
    let status = Command::new(env!("CARGO_BIN_EXE_fmvi"))
        .args(["--threads", &threads.to_string(), "--output-dir"])
        .arg(out)
        .arg("run")
        .arg("--config")
        .arg(config)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn thread_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        (
            "region",
            r#"{"model": {"kind": "region_block"}, "data": {"kind": "uniform"},
                "algorithms": ["fm", "cavi", "block"], "iterations": 200, "seed": 5}"#,
        ),
        (
            "window",
            r#"{"model": {"kind": "window", "s": 7}, "data": {"kind": "uniform", "seed": 3},
                "algorithms": ["fm", "block"], "partition": {"kind": "components"},
                "iterations": 200, "seed": 5}"#,
        ),
    ];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (name, text) in configs {
        let cfg = dir.path().join(format!("{name}.json"));
        std::fs::write(&cfg, text).unwrap();
        let one = dir.path().join(format!("{name}-1"));
        let eight = dir.path().join(format!("{name}-8"));
        run_cli(&cfg, &one, 1);
        run_cli(&cfg, &eight, 8);
        for entry in std::fs::read_dir(&one).unwrap() {
            let file = entry.unwrap().file_name();
            let a = std::fs::read(one.join(&file)).unwrap();
            let b = std::fs::read(eight.join(&file)).unwrap();
            compared += 1;
            if a != b {
                mismatched.push(format!("{name}/{}", file.to_string_lossy()));
            }
        }
    }
    outcome(
        mismatched.is_empty() && compared == 7,
        format!("{compared} output files compared, mismatches: {mismatched:?}"),
    )
}
