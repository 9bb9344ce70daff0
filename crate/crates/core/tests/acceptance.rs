//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p hidden-bandit --test acceptance`. The process exits
//! nonzero when a criterion fails that is not listed in `KNOWN_FAILURES`.
//! Known failures still print `FAIL`.

mod common;

use std::time::{Duration, Instant};

use hidden_bandit::indexer::{
    compute_gw, compute_index, is_indexable, stopping_time_oracle, subsidy_sweep, SolveCache, DEFAULT_NODE_BUDGET,
};
use hidden_bandit::report::{comparison_csv, simulation_csv};
use hidden_bandit::simulator::{compare_policies, run_experiment, Horizon, PolicyKind, SimConfig};
use hidden_bandit::solver::interpolate;
use hidden_bandit::structure::{analyze, extract_threshold, worst_concavity, worst_increase};
use hidden_bandit::{extract_policy, solve, Action, ArmParams, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const SEED: u64 = 5;

const REFERENCE_BETA: f64 = 0.7;
const GRID_POINTS: usize = 1001;
const EMPTY_REGION_BETA: f64 = 0.9;
const EMPTY_REGION_SUBSIDIES: usize = 10;
const INDEXABILITY_BETA: f64 = 0.9;
const ORACLE_BETA: f64 = 0.5;
const ORACLE_DEPTH: usize = 12;
const ORACLE_TOLERANCE: f64 = 2e-2;
const ORACLE_BELIEFS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const INDEX_W_TOLERANCE: f64 = 1e-6;
const STRUCTURE_DRAWS: usize = 20;
const SIM_EPISODES: usize = 10_000;
const SIM_SEED: u64 = 2024;
const ESTIMATOR_BETA: f64 = 0.9;
const ESTIMATOR_SIGMAS: f64 = 3.0;
const MANY_WORKERS: usize = 4;

/// Criteria that fail for reasons documented in the README.
const KNOWN_FAILURES: [u8; 2] = [5, 7];

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

struct Line {
    id: u8,
    name: &'static str,
    outcome: Outcome,
    elapsed: Duration,
}

fn timed(id: u8, name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> Line {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            o.pass = false;
            o.detail = format!("{} [over budget {:?}]", o.detail, b);
        }
    }
    let line = Line {
        id,
        name,
        outcome: o,
        elapsed,
    };
    print_line(&line);
    line
}

fn print_line(l: &Line) {
    let verdict = if l.outcome.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {} {} {:<34} {:>8.1}s  {}",
        l.id,
        verdict,
        l.name,
        l.elapsed.as_secs_f64(),
        l.outcome.detail
    );
}

fn tenths() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

fn reference_threshold() -> Outcome {
    let arm = reference_arm();
    let mut bad = Vec::new();
    for w in tenths() {
        let cfg = SolverConfig::new(REFERENCE_BETA, w).with_grid_points(GRID_POINTS);
        let t = match solve(&arm, &cfg) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("w={w}: {e}")),
        };
        let report = extract_threshold(&extract_policy(&t));
        if !report.is_threshold() {
            bad.push(format!("w={w}: {report:?}"));
        }
    }
    outcome(bad.is_empty(), format!("11 subsidies, non-threshold: {bad:?}"))
}

fn empty_region_below_eta0(rng: &mut ChaCha8Rng) -> Outcome {
    let mut cases: Vec<(ArmParams, f64)> = vec![(reference_arm(), REFERENCE_BETA)];
    cases.extend((0..5).map(|_| (random_rested_arm(rng), EMPTY_REGION_BETA)));
    let mut bad = Vec::new();
    for (n, (arm, beta)) in cases.iter().enumerate() {
        let cache = SolveCache::new();
        let cfg = SolverConfig::new(*beta, 0.0).with_grid_points(GRID_POINTS);
        for k in 0..EMPTY_REGION_SUBSIDIES {
            let w = arm.eta0 * k as f64 / EMPTY_REGION_SUBSIDIES as f64;
            match compute_gw(arm, w, &cfg, &cache) {
                Ok(g) if g.empty => {}
                Ok(g) => bad.push(format!("arm {n} w={w:.4}: pi_l={:?} pi_tilde_l={:?}", g.pi_l, g.pi_tilde_l)),
                Err(e) => bad.push(format!("arm {n} w={w:.4}: {e}")),
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("6 arms x {EMPTY_REGION_SUBSIDIES} subsidies below eta0, nonempty: {bad:?}"),
    )
}

fn indexability_sweep(rng: &mut ChaCha8Rng) -> Outcome {
    let w_grid = subsidy_sweep(0.0, 1.0, 0.01);
    let mut bad = Vec::new();
    let mut gapped = 0;
    for n in 0..5 {
        let arm = random_rested_arm(rng);
        let cache = SolveCache::new();
        let cfg = SolverConfig::new(INDEXABILITY_BETA, 0.0).with_grid_points(GRID_POINTS);
        match is_indexable(&arm, &w_grid, &cfg, &cache) {
            Ok(r) if r.pass => gapped += r.non_threshold.len(),
            Ok(r) => bad.push(format!("arm {n}: {:?}", r.violation)),
            Err(e) => bad.push(format!("arm {n}: {e}")),
        }
    }
    outcome(bad.is_empty(), format!("5 arms x 101 subsidies, non-threshold regions {gapped}, violations: {bad:?}"))
}

fn oracle_agreement(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst = 0.0_f64;
    let mut errors = Vec::new();
    for n in 0..5 {
        let arm = random_rested_arm(rng);
        let cache = SolveCache::new();
        let cfg = SolverConfig::new(ORACLE_BETA, 0.0).with_grid_points(GRID_POINTS);
        for &pi in &ORACLE_BELIEFS {
            for y in [true, false] {
                let idx = compute_index(&arm, pi, y, &cfg, INDEX_W_TOLERANCE, &cache);
                let ora = stopping_time_oracle(&arm, pi, y, ORACLE_BETA, ORACLE_DEPTH, DEFAULT_NODE_BUDGET);
                match (idx, ora) {
                    (Ok(i), Ok(o)) => worst = worst.max((i.index_w - o.value).abs()),
                    (i, o) => errors.push(format!("arm {n} pi={pi} y={y}: {:?} {:?}", i.err(), o.err())),
                }
            }
        }
    }
    outcome(
        errors.is_empty() && worst <= ORACLE_TOLERANCE,
        format!("50 points, max |index - oracle| = {worst:.2e} (tol {ORACLE_TOLERANCE:.0e}), errors: {errors:?}"),
    )
}

#[derive(Default)]
struct StructureTally {
    convex: usize,
    monotone: usize,
    isotone: usize,
    lipschitz: usize,
    threshold: usize,
    errors: usize,
}

impl StructureTally {
    fn failures(&self, small_gap: bool) -> usize {
        let claimed = if small_gap {
            self.isotone + self.lipschitz + self.threshold
        } else {
            self.convex + self.monotone + self.isotone
        };
        claimed + self.errors
    }

    fn describe(&self, small_gap: bool) -> String {
        if small_gap {
            format!(
                "isotone {} lipschitz {} threshold {}",
                self.isotone, self.lipschitz, self.threshold
            )
        } else {
            format!(
                "convex {} monotone {} isotone {}",
                self.convex, self.monotone, self.isotone
            )
        }
    }
}

fn structure_draws(rng: &mut ChaCha8Rng, small_gap: bool, absorbing_unavailability: bool) -> StructureTally {
    let mut tally = StructureTally::default();
    for _ in 0..STRUCTURE_DRAWS {
        let mut arm = random_structural_arm(rng, small_gap);
        if absorbing_unavailability {
            arm.theta.play_unavailable = 0.0;
            arm.theta.rest_unavailable = 0.0;
        }
        let w = rng.gen_range(0.0..arm.r1);
        let beta = rng.gen_range(0.5..0.95);
        let t = match solve(&arm, &SolverConfig::new(beta, w).with_grid_points(GRID_POINTS)) {
            Ok(t) => t,
            Err(_) => {
                tally.errors += 1;
                continue;
            }
        };
        let r = analyze(&arm, &t);
        tally.convex += usize::from(!r.convex_in_pi.pass);
        tally.monotone += usize::from(!r.monotone_in_pi.pass);
        tally.isotone += usize::from(!r.isotone_difference.pass);
        tally.lipschitz += usize::from(r.lipschitz.passed() != Some(true) && small_gap);
        tally.threshold += usize::from(!r.threshold.is_threshold());
    }
    tally
}

fn structural_suite(rng: &mut ChaCha8Rng) -> Outcome {
    let a = structure_draws(rng, false, false);
    let b = structure_draws(rng, true, false);
    let pass = a.failures(false) == 0 && b.failures(true) == 0;
    let mut detail = format!(
        "failing draws of {STRUCTURE_DRAWS}: (a) {} | (b) {}",
        a.describe(false),
        b.describe(true)
    );
    let a0 = structure_draws(rng, false, true);
    let b0 = structure_draws(rng, true, true);
    detail.push_str(&format!(
        "\n    note: same regimes with theta^a(0) = 0: (a) {} | (b) {}",
        a0.describe(false),
        b0.describe(true)
    ));
    outcome(pass, detail)
}

fn convex_in_subsidy() -> Outcome {
    let arm = reference_arm();
    let ws = tenths();
    let mut solved = Vec::new();
    for &w in &ws {
        match solve(&arm, &SolverConfig::new(REFERENCE_BETA, w).with_grid_points(GRID_POINTS)) {
            Ok(t) => solved.push(t),
            Err(e) => return outcome(false, format!("w={w}: {e}")),
        }
    }
    let bound = SolverConfig::new(REFERENCE_BETA, 0.0).fixed_point_error_bound();
    let (mono_tol, convex_tol) = (2.0 * bound, 4.0 * bound);
    let mut worst_drop = f64::NEG_INFINITY;
    let mut worst_concave = f64::NEG_INFINITY;
    for i in 0..GRID_POINTS {
        let columns: [Vec<f64>; 6] = [
            solved.iter().map(|t| t.v[i]).collect(),
            solved.iter().map(|t| t.v_ns[i]).collect(),
            solved.iter().map(|t| t.v_s[i]).collect(),
            solved.iter().map(|t| t.v_tilde[i]).collect(),
            solved.iter().map(|t| t.v_tilde_s[i]).collect(),
            solved.iter().map(|t| t.v_tilde_ns[i]).collect(),
        ];
        for c in &columns {
            let negated: Vec<f64> = c.iter().map(|x| -x).collect();
            worst_drop = worst_drop.max(worst_increase(&negated).0);
            worst_concave = worst_concave.max(worst_concavity(c).0);
        }
    }
    outcome(
        worst_drop <= mono_tol && worst_concave <= convex_tol,
        format!(
            "6 arrays x {GRID_POINTS} points: worst drop {worst_drop:.2e} (tol {mono_tol:.1e}), worst concavity {worst_concave:.2e} (tol {convex_tol:.1e})"
        ),
    )
}

struct SimCase {
    name: &'static str,
    config: SimConfig,
    betas: Vec<f64>,
    target_gain: Vec<f64>,
}

fn sim_cases() -> Vec<SimCase> {
    let ones = vec![true; 5];
    let mixed = vec![true, false, true, false, true];
    vec![
        SimCase {
            name: "always-available-on-play",
            config: sim_config(five_arms(rested_theta(1.0, 0.0, 1.0)), ones.clone(), SIM_EPISODES, SIM_SEED),
            betas: vec![0.95],
            target_gain: vec![13.33],
        },
        SimCase {
            name: "theta 0.8/0/0.7",
            config: sim_config(five_arms(rested_theta(0.8, 0.0, 0.7)), ones, SIM_EPISODES, SIM_SEED),
            betas: vec![0.6, 0.8, 0.95],
            target_gain: vec![25.0, 26.9, 20.0],
        },
        SimCase {
            name: "per-arm availability 1",
            config: sim_config(example_one(), mixed.clone(), SIM_EPISODES, SIM_SEED),
            betas: vec![0.95],
            target_gain: vec![18.2],
        },
        SimCase {
            name: "per-arm availability 2",
            config: sim_config(example_two(), mixed, SIM_EPISODES, SIM_SEED),
            betas: vec![0.95],
            target_gain: vec![16.6],
        },
    ]
}

/// Runs every simulation case and returns the verdict plus one CSV per case.
fn simulation_direction() -> (Outcome, Vec<String>) {
    let mut pass = true;
    let mut rows = Vec::new();
    let mut csvs = Vec::new();
    for case in sim_cases() {
        let cmp = match compare_policies(&case.config, &case.betas) {
            Ok(c) => c,
            Err(e) => {
                pass = false;
                rows.push(format!("{}: {e}", case.name));
                continue;
            }
        };
        for ((row, report), target) in cmp.rows.iter().zip(&cmp.reports).zip(&case.target_gain) {
            let gain = report.gain.as_ref().expect("index and myopic both ran");
            let ok = gain.significant_positive();
            pass &= ok;
            rows.push(format!(
                "{} {} beta={}: myopic {:.4} index {:.4} gain {:+.2}% (target {:+.1}%) diff {:+.4} 95% CI [{:+.4}, {:+.4}]",
                if ok { "ok  " } else { "FAIL" },
                case.name,
                row.beta,
                row.myopic,
                row.index,
                row.gain_pct,
                target,
                gain.diff_mean,
                gain.ci95_low,
                gain.ci95_high
            ));
        }
        csvs.push(comparison_csv(&cmp));
    }
    let detail = format!("{} rows\n    {}", rows.len(), rows.join("\n    "));
    (outcome(pass, detail), csvs)
}

fn estimator_arms() -> Vec<(ArmParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let mut out = Vec::new();
    while out.len() < 3 {
        let arm = random_rested_arm(&mut rng);
        let pi = rng.gen_range(0.0..1.0);
        if arm.eta0 > 0.0 {
            out.push((arm, pi));
        }
    }
    out
}

fn estimator_vs_dp() -> (Outcome, Vec<String>) {
    let mut pass = true;
    let mut rows = Vec::new();
    let mut csvs = Vec::new();
    for (n, (arm, pi)) in estimator_arms().into_iter().enumerate() {
        let tables = match solve(&arm, &SolverConfig::new(ESTIMATOR_BETA, 0.0).with_grid_points(GRID_POINTS)) {
            Ok(t) => t,
            Err(e) => return (outcome(false, format!("arm {n}: {e}")), csvs),
        };
        let all_play = extract_policy(&tables).available.iter().all(|&a| a == Action::Play);
        let dp = interpolate(&tables.v, pi);
        let cfg = SimConfig {
            arms: vec![arm],
            beta: ESTIMATOR_BETA,
            initial_pi: vec![pi],
            initial_y: vec![true],
            horizon: Horizon::Auto,
            episodes: SIM_EPISODES,
            seed: SIM_SEED + n as u64,
            policies: vec![PolicyKind::Myopic],
            index_precompute: Default::default(),
        };
        let report = match run_experiment(&cfg) {
            Ok(r) => r,
            Err(e) => return (outcome(false, format!("arm {n}: {e}")), csvs),
        };
        let s = &report.policies[0];
        let z = (s.mean_reward - dp).abs() / s.stderr;
        let ok = all_play && z <= ESTIMATOR_SIGMAS;
        pass &= ok;
        rows.push(format!(
            "arm {n}: MC {:.4} +- {:.4}, DP {:.4}, |z| {:.2}{}",
            s.mean_reward,
            s.stderr,
            dp,
            z,
            if all_play { "" } else { " (w=0 policy is not always-play)" }
        ));
        csvs.push(simulation_csv(std::slice::from_ref(&report)));
    }
    (outcome(pass, format!("{}", rows.join("; "))), csvs)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn main() {
    let mut lines = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let secs = |s| Some(Duration::from_secs(s));

    lines.push(timed(1, "threshold shape, 11 subsidies", secs(30), reference_threshold));
    lines.push(timed(2, "empty not-play region below eta0", secs(30), || {
        empty_region_below_eta0(&mut rng)
    }));
    lines.push(timed(3, "indexability sweep", secs(300), || indexability_sweep(&mut rng)));
    lines.push(timed(4, "index vs stopping-time oracle", secs(600), || {
        oracle_agreement(&mut rng)
    }));
    lines.push(timed(5, "structural properties", secs(600), || structural_suite(&mut rng)));
    lines.push(timed(6, "monotone and convex in subsidy", None, convex_in_subsidy));

    let mut sim_csvs = Vec::new();
    lines.push(timed(7, "index beats myopic", secs(900), || {
        let (o, csvs) = in_pool(MANY_WORKERS, simulation_direction);
        sim_csvs.extend(csvs);
        o
    }));
    let mut est_csvs = Vec::new();
    lines.push(timed(8, "estimator vs value iteration", None, || {
        let (o, csvs) = in_pool(MANY_WORKERS, estimator_vs_dp);
        est_csvs = csvs;
        o
    }));
    lines.push(timed(9, "determinism across worker counts", None, || {
        let (_, sim_single) = in_pool(1, simulation_direction);
        let (_, est_single) = in_pool(1, estimator_vs_dp);
        let same_sim = sim_single == sim_csvs;
        let same_est = est_single == est_csvs;
        let bytes: usize = sim_csvs.iter().chain(&est_csvs).map(String::len).sum();
        outcome(
            same_sim && same_est && !sim_csvs.is_empty(),
            format!("1 vs {MANY_WORKERS} workers, {bytes} CSV bytes, simulation identical {same_sim}, estimator identical {same_est}"),
        )
    }));

    let failed: Vec<u8> = lines.iter().filter(|l| !l.outcome.pass).map(|l| l.id).collect();
    let unexpected: Vec<u8> = failed.iter().copied().filter(|id| !KNOWN_FAILURES.contains(id)).collect();
    println!(
        "acceptance: {} of {} criteria pass; failing {:?}; known failures {:?}; unexpected {:?}",
        lines.len() - failed.len(),
        lines.len(),
        failed,
        KNOWN_FAILURES,
        unexpected
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
