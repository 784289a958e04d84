//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use quantstream::dist::normal_quantile;
use quantstream::experiments::{
    replication_statistics, run_coverage, run_qq, run_tail_curve, sample_quantile_of, Dgp, ExperimentPlan,
};
use quantstream::inference::{independent_bridges_spec, simulate_critical_value, simulate_paths, DEFAULT_REPLICATIONS};
use quantstream::oracle::{bahadur_run, remainder_rho};
use quantstream::rng::stream_rng;
use quantstream::{
    ConditionalConfig, ConditionalState, Law, QuantileGrid, QuantileState, ScheduleConfig, SparsityMode,
};

const SEED: u64 = 1;

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

fn size_plan(dgp: Dgp, n: usize, beta: f64, mode: SparsityMode) -> ExperimentPlan {
    ExperimentPlan::size_study(dgp, n, beta, mode, SEED).expect("valid plan")
}

/// Rejection rate at `alpha` for a 1000-replication size study.
fn size(dgp: Dgp, n: usize, beta: f64, mode: SparsityMode, alpha: f64) -> f64 {
    let table = run_coverage(&size_plan(dgp, n, beta, mode)).expect("coverage runs");
    let col = table.alphas.iter().position(|&a| a == alpha).expect("alpha column");
    table.rows[0].rates[col]
}

fn random_stream(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let laws = [
        Law::standard_normal(),
        Law::StudentT { df: 3.0 },
        Law::StudentT { df: 10.0 },
    ];
    let kind = rng.random_range(0..5);
    (0..len)
        .map(|_| match kind {
            0..=2 => laws[kind].sample(rng),
            3 => rng.random_range(-1..=1) as f64,
            _ => rng.random_range(-1e4..1e4),
        })
        .collect()
}

fn random_grid(rng: &mut impl Rng, max: usize) -> QuantileGrid {
    let m = rng.random_range(1..=max);
    let mut levels: Vec<f64> = (0..m).map(|_| rng.random_range(1..1000) as f64 / 1000.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    QuantileGrid::new(levels).unwrap()
}

fn random_schedule(rng: &mut impl Rng) -> ScheduleConfig {
    ScheduleConfig::new(
        rng.random_range(0.05..5.0),
        rng.random_range(0.501..0.999),
        rng.random_range(0.5001..4.0),
    )
    .unwrap()
}

fn monotonicity() -> Outcome {
    let streams = 10_000;
    let violations: usize = (0..streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(SEED, s as u64);
            let p = rng.random_range(1..=3);
            let grid = random_grid(&mut rng, 9);
            let sched = random_schedule(&mut rng);
            let init: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let len = rng.random_range(1..=200);
            let columns: Vec<Vec<f64>> = (0..p).map(|_| random_stream(&mut rng, len)).collect();
            let mut state = QuantileState::init(p, grid, sched, init).unwrap();
            let mut bad = 0;
            for t in 0..len {
                let obs: Vec<f64> = columns.iter().map(|c| c[t]).collect();
                state.update(&obs).unwrap();
                bad += state
                    .raw()
                    .iter()
                    .chain(state.averaged())
                    .filter(|row| row.windows(2).any(|w| w[0] > w[1]))
                    .count();
            }
            bad
        })
        .sum();
    outcome(
        violations == 0,
        format!("{streams} streams, {violations} unordered rows"),
    )
}

fn table1() -> Outcome {
    let s5 = size(Dgp::StandardNormal, 4000, 0.7, SparsityMode::Known, 0.05);
    let s1 = size(Dgp::StandardNormal, 4000, 0.7, SparsityMode::Known, 0.01);
    let pass = (s5 - 0.055).abs() <= 0.025 && (s1 - 0.016).abs() <= 0.012;
    outcome(
        pass,
        format!("size 5% = {s5:.3} (0.055 +/- 0.025), 1% = {s1:.3} (0.016 +/- 0.012)"),
    )
}

fn beta_ordering() -> Outcome {
    let s: Vec<f64> = [0.6, 0.7, 0.8]
        .iter()
        .map(|&b| size(Dgp::StandardNormal, 4000, b, SparsityMode::Known, 0.05))
        .collect();
    outcome(
        s[0] < s[1] && s[1] < s[2],
        format!("5% size at beta .6/.7/.8 = {:.3} / {:.3} / {:.3}", s[0], s[1], s[2]),
    )
}

fn table2() -> Outcome {
    let s5 = size(Dgp::StandardNormal, 8000, 0.7, SparsityMode::Kde, 0.05);
    outcome(
        (s5 - 0.067).abs() <= 0.03,
        format!("kde size 5% = {s5:.3} (0.067 +/- 0.03)"),
    )
}

fn bridge_calibration() -> Outcome {
    let reps = DEFAULT_REPLICATIONS;
    let grid = QuantileGrid::deciles();
    let spec = independent_bridges_spec(grid.clone(), 1, reps, SEED);
    let paths = simulate_paths(&spec, reps).unwrap();
    let mut worst = 0.0f64;
    for (j, &tau) in grid.levels().iter().enumerate() {
        let var = tau * (1.0 - tau);
        let est = paths.iter().map(|v| v[j] * v[j]).sum::<f64>() / reps as f64;
        let se = var * (2.0 / reps as f64).sqrt();
        worst = worst.max((est - var).abs() / se);
    }
    let single = independent_bridges_spec(QuantileGrid::new(vec![0.5]).unwrap(), 1, reps, SEED);
    let c = simulate_critical_value(&single, 0.05).unwrap();
    let exact = 0.5 * normal_quantile(0.975).unwrap();
    let pass = worst <= 3.0 && (c - 0.980).abs() <= 0.01;
    outcome(
        pass,
        format!("max |var - tau(1-tau)| = {worst:.2} se; c_0.95 on {{0.5}} = {c:.4} (exact {exact:.4})"),
    )
}

fn bahadur_decay() -> Outcome {
    let cfg = ScheduleConfig::with_beta(0.7).unwrap();
    let law = Law::standard_normal();
    let mean_scaled = |n: usize| -> f64 {
        let total: f64 = (0..200u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(SEED ^ n as u64, r);
                let obs = law.sample_n(&mut rng, n);
                let terms = bahadur_run(&obs, &cfg, 0.5, 0.0, &law).unwrap();
                (n as f64).sqrt() * terms.residual.abs()
            })
            .sum();
        total / 200.0
    };
    let (small, large) = (mean_scaled(1_000), mean_scaled(10_000));
    outcome(
        large < small,
        format!("mean sqrt(n)|l| = {small:.4} at n=1e3, {large:.4} at n=1e4"),
    )
}

fn remainder_bound() -> Outcome {
    let mut rng = stream_rng(SEED, 7);
    let mut failures = 0;
    let mut worst_ratio = 0.0f64;
    let trials = 1000;
    for law in [Law::standard_normal(), Law::StudentT { df: 10.0 }] {
        let c_f = law.density_bound();
        for _ in 0..trials {
            let tau = rng.random_range(0.01..0.99);
            let q = law.quantile(tau).unwrap();
            let y = q + rng.random_range(-3.0..3.0);
            let gamma = rng.random_range(1e-4..1.0);
            let a = rng.random_range(0.5001..5.0);
            let r = remainder_rho(y, q, tau, gamma, a, &law, c_f).unwrap();
            if !r.holds(1e-8) {
                failures += 1;
            }
            worst_ratio = worst_ratio.max(r.rho.abs() / r.bound);
        }
    }
    outcome(
        failures == 0,
        format!(
            "{} configurations, {failures} violations, max |rho|/bound = {worst_ratio:.3}",
            2 * trials
        ),
    )
}

fn tail_shape() -> Outcome {
    let cfg = ScheduleConfig::default();
    let xs = [0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32];
    let mut notes = Vec::new();
    let mut pass = true;
    for (dgp, tau) in [(Dgp::StandardNormal, 0.5), (Dgp::StudentT { df: 10.0 }, 0.9)] {
        let curves: Vec<_> = [500, 2000, 8000]
            .iter()
            .map(|&n| run_tail_curve(dgp, n, tau, &xs, 1000, &cfg, SEED).unwrap())
            .collect();
        for c in &curves {
            pass &= c.points.windows(2).all(|w| w[1].averaged <= w[0].averaged);
        }
        let mut worst = f64::NEG_INFINITY;
        for pair in curves.windows(2) {
            for (small, large) in pair[0].points.iter().zip(&pair[1].points) {
                let se = (pair[0].mc_se(small.averaged).powi(2) + pair[1].mc_se(large.averaged).powi(2)).sqrt();
                let excess = large.averaged - small.averaged - 3.0 * se;
                worst = worst.max(excess);
            }
        }
        pass &= worst <= 0.0;
        notes.push(format!("{} tau={tau}: max increase over 3 se = {worst:.4}", dgp.name()));
    }
    outcome(pass, notes.join("; "))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = stream_rng(SEED, 11);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let grid = random_grid(&mut rng, 3);
        let grid = if grid.len() == 3 {
            grid
        } else {
            QuantileGrid::new(vec![0.2, 0.5, 0.8]).unwrap()
        };
        let sched = random_schedule(&mut rng);
        let len = rng.random_range(1..=50);
        let data = random_stream(&mut rng, len);
        let mut state = QuantileState::univariate(grid.clone(), sched).unwrap();
        let mut sums = [0.0; 3];
        for (k, &x) in data.iter().enumerate() {
            state.update(&[x]).unwrap();
            for (s, &y) in sums.iter_mut().zip(&state.raw()[0]) {
                *s += y;
            }
            let scale = state.raw()[0].iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max);
            for (s, &avg) in sums.iter().zip(&state.averaged()[0]) {
                let naive = s / (k + 1) as f64;
                worst = worst.max((avg - naive).abs() / naive.abs().max(scale));
            }
        }
    }

    let mut identical = true;
    for _ in 0..500 {
        let sched = random_schedule(&mut rng);
        let grid = QuantileGrid::new(vec![0.1, 0.5, 0.9]).unwrap();
        let cfg = ConditionalConfig::new(vec![0.0], 0.5, grid.clone(), sched).unwrap();
        let mut cond = ConditionalState::new(cfg, 0.0).unwrap();
        let mut plain = QuantileState::univariate(grid, sched).unwrap();
        for _ in 0..rng.random_range(1..=50) {
            let x = rng.random_range(-0.5..=0.5);
            let y = Law::standard_normal().sample(&mut rng);
            cond.update(x, y).unwrap();
            plain.update(&[y]).unwrap();
            identical &= cond.iterates() == plain.raw() && cond.averaged() == plain.averaged();
        }
    }
    outcome(
        worst <= 1e-12 && identical,
        format!("max relative averaging error = {worst:.2e}; full-window conditional identical: {identical}"),
    )
}

fn qq_alignment() -> Outcome {
    let plan = size_plan(Dgp::StandardNormal, 4000, 0.7, SparsityMode::Known);
    let stats = replication_statistics(&plan).unwrap();
    let reference = plan.reference().unwrap();
    let mut worst = 0.0f64;
    let mut cells = Vec::new();
    for p in [0.25, 0.5, 0.75] {
        let (e, r) = (sample_quantile_of(&stats, p), reference.quantile(p));
        worst = worst.max((e - r).abs());
        cells.push(format!("{p}: {e:.3} vs {r:.3}"));
    }
    outcome(worst <= 0.15, format!("{} (max gap {worst:.3})", cells.join(", ")))
}

fn determinism() -> Outcome {
    let mut plan = size_plan(Dgp::StudentT { df: 10.0 }, 500, 0.7, SparsityMode::Kde);
    plan.replications = 200;
    plan.reference_replications = 5000;
    let artifact = || {
        let cov = serde_json::to_string(&run_coverage(&plan).unwrap()).unwrap();
        let qq = serde_json::to_string(&run_qq(&plan).unwrap()).unwrap();
        let tail = serde_json::to_string(
            &run_tail_curve(
                Dgp::StandardNormal,
                300,
                0.3,
                &[0.05, 0.1],
                100,
                &ScheduleConfig::default(),
                SEED,
            )
            .unwrap(),
        )
        .unwrap();
        let mut cond = ExperimentPlan::conditional_study(300, SparsityMode::Kde, SEED).unwrap();
        cond.replications = 50;
        cond.reference_replications = 2000;
        let cond = serde_json::to_string(&quantstream::experiments::run_conditional_coverage(&cond).unwrap()).unwrap();
        [cov, qq, tail, cond].concat()
    };
    let first = artifact();
    let second = artifact();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(artifact);
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(artifact);
    let pass = first == second && first == serial && first == parallel;
    outcome(
        pass,
        format!(
            "{} bytes, repeated / 1-thread / 4-thread runs identical: {pass}",
            first.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("monotonicity", monotonicity),
        ("table1-size", table1),
        ("beta-ordering", beta_ordering),
        ("table2-kde-size", table2),
        ("bridge-calibration", bridge_calibration),
        ("bahadur-decay", bahadur_decay),
        ("remainder-bound", remainder_bound),
        ("tail-shape", tail_shape),
        ("oracle-equivalence", oracle_equivalence),
        ("qq-alignment", qq_alignment),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
