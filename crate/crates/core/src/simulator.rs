//! Seeded Monte-Carlo simulation of several arms where exactly one arm is
//! played per slot.
//!
//! Episodes draw their randomness from a ChaCha stream selected by the
//! episode number, and every slot consumes the same uniforms whatever the
//! policy does. Running the same episode under two policies therefore uses
//! common random numbers, which keeps paired differences low-variance.
//! Episodes run in parallel and are aggregated in episode order, so results
//! do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indexer::{IndexError, IndexTable, SolveCache};
use crate::model::{Action, ArmKind, ArmParams, Belief};
use crate::solver::SolverConfig;

/// The auto horizon stops once the remaining discounted reward is below this.
pub const AUTO_HORIZON_TAIL: f64 = 1e-3;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("experiment has no episodes")]
    EmptyExperiment,
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("index precomputation failed: {0}")]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Index,
    Myopic,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Index => "index",
            PolicyKind::Myopic => "myopic",
            PolicyKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Auto,
    Fixed(usize),
}

/// How the per-arm index lookup tables are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexPrecompute {
    /// Belief points of the lookup table.
    pub points: usize,
    /// Belief grid of the value iteration behind every index probe.
    pub grid_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub w_tolerance: f64,
}

impl Default for IndexPrecompute {
    fn default() -> Self {
        Self {
            points: 101,
            grid_points: 201,
            tolerance: 1e-8,
            max_iterations: crate::solver::DEFAULT_MAX_ITERATIONS,
            w_tolerance: 1e-4,
        }
    }
}

impl IndexPrecompute {
    pub fn solver_config(&self, beta: f64) -> SolverConfig {
        SolverConfig {
            grid_points: self.grid_points,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            beta,
            subsidy: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub arms: Vec<ArmParams>,
    pub beta: f64,
    pub initial_pi: Vec<f64>,
    pub initial_y: Vec<bool>,
    pub horizon: Horizon,
    pub episodes: usize,
    pub seed: u64,
    pub policies: Vec<PolicyKind>,
    pub index_precompute: IndexPrecompute,
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.episodes == 0 {
            return Err(SimError::EmptyExperiment);
        }
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.initial_pi.len() != self.arms.len() || self.initial_y.len() != self.arms.len() {
            return bad(format!(
                "{} arms but {} initial beliefs and {} initial availabilities",
                self.arms.len(),
                self.initial_pi.len(),
                self.initial_y.len()
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.policies.is_empty() {
            return bad("no policies requested".into());
        }
        if let Some(pi) = self.initial_pi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("initial belief {pi} outside [0, 1]"));
        }
        for (n, arm) in self.arms.iter().enumerate() {
            if let Some(v) = arm.validate(false).first() {
                return bad(format!("arm {n}: {v}"));
            }
        }
        if self.horizon == Horizon::Fixed(0) {
            return bad("fixed horizon must be positive".into());
        }
        Ok(())
    }

    /// Index requested on arms outside the rested assumptions, where the
    /// lookup tables are heuristic.
    pub fn uncertified_index_arms(&self) -> Vec<usize> {
        if !self.policies.contains(&PolicyKind::Index) {
            return Vec::new();
        }
        (0..self.arms.len())
            .filter(|&n| !self.arms[n].satisfies_rested_index_assumptions())
            .collect()
    }

    pub fn horizon_slots(&self) -> usize {
        match self.horizon {
            Horizon::Fixed(t) => t,
            Horizon::Auto => {
                let r_max = self.arms.iter().map(ArmParams::max_reward).fold(0.0, f64::max);
                auto_horizon(self.beta, r_max)
            }
        }
    }
}

/// Smallest `T` with `beta^T * r_max / (1 - beta) < 1e-3`.
pub fn auto_horizon(beta: f64, r_max: f64) -> usize {
    let mut t = 0;
    let mut tail = r_max / (1.0 - beta);
    while tail >= AUTO_HORIZON_TAIL {
        tail *= beta;
        t += 1;
    }
    t
}

/// Joint state of all arms at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    /// Hidden states, 0 or 1.
    pub states: Vec<u8>,
    pub available: Vec<bool>,
    pub beliefs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub chosen: usize,
    pub states: Vec<u8>,
    pub available: Vec<bool>,
    pub beliefs: Vec<f64>,
    pub z: bool,
    pub reward: f64,
    /// Discounted reward accumulated up to and including this slot.
    pub discounted_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub policy: PolicyKind,
    pub beta: f64,
    pub slots: Vec<SlotRecord>,
}

impl EpisodeTrace {
    pub fn total(&self) -> f64 {
        self.slots.last().map_or(0.0, |s| s.discounted_total)
    }
}

/// Uniforms consumed by one slot, drawn in a fixed order.
#[derive(Debug, Clone)]
pub struct SlotDraws {
    pub choice: f64,
    pub observation: Vec<f64>,
    pub transition: Vec<f64>,
    pub availability: Vec<f64>,
}

impl SlotDraws {
    pub fn draw(rng: &mut impl Rng, arms: usize) -> Self {
        let choice = rng.gen();
        let mut observation = Vec::with_capacity(arms);
        let mut transition = Vec::with_capacity(arms);
        let mut availability = Vec::with_capacity(arms);
        for _ in 0..arms {
            observation.push(rng.gen());
            transition.push(rng.gen());
            availability.push(rng.gen());
        }
        Self {
            choice,
            observation,
            transition,
            availability,
        }
    }
}

/// Decision rule of a policy, with the index tables it may need.
pub struct Chooser<'a> {
    pub kind: PolicyKind,
    pub arms: &'a [ArmParams],
    pub index_tables: Option<&'a [IndexTable]>,
}

fn argmax_first(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (n, s) in scores.enumerate() {
        if s > best_score {
            best = n;
            best_score = s;
        }
    }
    best
}

impl Chooser<'_> {
    /// Chosen arm; ties go to the lowest arm id.
    pub fn choose(&self, state: &JointState, u: f64) -> usize {
        let n = self.arms.len();
        match self.kind {
            PolicyKind::Myopic => argmax_first((0..n).map(|k| {
                self.arms[k].expected_play_reward(Belief::new(state.beliefs[k]), state.available[k])
            })),
            PolicyKind::Index => {
                let tables = self.index_tables.expect("index policy requires index tables");
                argmax_first((0..n).map(|k| tables[k].lookup(state.beliefs[k], state.available[k])))
            }
            PolicyKind::Random => ((u * n as f64) as usize).min(n - 1),
        }
    }
}

/// Advances every arm by one slot after `chosen` has been picked. Returns
/// the reward and the observation of the played arm.
pub fn step(arms: &[ArmParams], state: &mut JointState, chosen: usize, draws: &SlotDraws) -> (f64, bool) {
    let mut reward = 0.0;
    let mut signal = false;
    for (n, arm) in arms.iter().enumerate() {
        let played = n == chosen;
        let x = state.states[n];
        let y = state.available[n];
        let pi = Belief::new(state.beliefs[n]);
        let moves = match arm.kind {
            ArmKind::Rested => played && y,
            ArmKind::Restless => true,
        };
        let next_pi = if played {
            let (in_state0, in_state1) = if y { (arm.r0, arm.r1) } else { (arm.eta0, arm.eta1) };
            reward = if x == 0 { in_state0 } else { in_state1 };
            let p_success = if x == 0 { arm.r0 } else { arm.r1 };
            let z = draws.observation[n] < p_success;
            signal = z;
            arm.gamma_update(pi, z, y)
                .unwrap_or_else(|_| if moves { arm.predict(pi) } else { pi })
        } else {
            arm.big_gamma_update(pi, y)
        };
        if moves {
            let to_zero = if x == 0 { arm.mu0 } else { arm.mu1 };
            state.states[n] = if draws.transition[n] < to_zero { 0 } else { 1 };
        }
        let action = if played { Action::Play } else { Action::NotPlay };
        state.available[n] = draws.availability[n] < arm.theta.get(action, y);
        state.beliefs[n] = next_pi.value();
    }
    (reward, signal)
}

fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64);
    rng
}

fn initial_state(config: &SimConfig, rng: &mut impl Rng) -> JointState {
    let states = config
        .initial_pi
        .iter()
        .map(|&pi| if rng.gen::<f64>() < pi { 0 } else { 1 })
        .collect();
    JointState {
        states,
        available: config.initial_y.clone(),
        beliefs: config.initial_pi.clone(),
    }
}

fn run_episode(
    config: &SimConfig,
    chooser: &Chooser<'_>,
    episode: usize,
    horizon: usize,
    mut trace: Option<&mut Vec<SlotRecord>>,
) -> f64 {
    let mut rng = episode_rng(config.seed, episode);
    let mut state = initial_state(config, &mut rng);
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in 1..=horizon {
        let draws = SlotDraws::draw(&mut rng, config.arms.len());
        let chosen = chooser.choose(&state, draws.choice);
        let before = trace.as_ref().map(|_| state.clone());
        let (reward, z) = step(&config.arms, &mut state, chosen, &draws);
        total += discount * reward;
        discount *= config.beta;
        if let (Some(slots), Some(before)) = (trace.as_deref_mut(), before) {
            slots.push(SlotRecord {
                t,
                chosen,
                states: before.states,
                available: before.available,
                beliefs: before.beliefs,
                z,
                reward,
                discounted_total: total,
            });
        }
    }
    total
}

/// Runs one episode and records every slot.
pub fn trace_episode(
    config: &SimConfig,
    policy: PolicyKind,
    episode: usize,
    index_tables: Option<&[IndexTable]>,
) -> Result<EpisodeTrace, SimError> {
    config.check()?;
    let chooser = Chooser {
        kind: policy,
        arms: &config.arms,
        index_tables,
    };
    if policy == PolicyKind::Index && index_tables.is_none() {
        return Err(SimError::InvalidConfig("index policy requires index tables".into()));
    }
    let mut slots = Vec::new();
    run_episode(config, &chooser, episode, config.horizon_slots(), Some(&mut slots));
    Ok(EpisodeTrace {
        episode,
        policy,
        beta: config.beta,
        slots,
    })
}

/// Index lookup tables for every arm. Identical arms share one table.
pub fn precompute_index_tables(config: &SimConfig) -> Result<Vec<IndexTable>, SimError> {
    let solver = config.index_precompute.solver_config(config.beta);
    let mut distinct: Vec<(ArmParams, IndexTable)> = Vec::new();
    let mut out = Vec::with_capacity(config.arms.len());
    for arm in &config.arms {
        if let Some((_, t)) = distinct.iter().find(|(a, _)| a == arm) {
            out.push(t.clone());
            continue;
        }
        let cache = SolveCache::new();
        let table = IndexTable::build(
            arm,
            config.index_precompute.points,
            &solver,
            config.index_precompute.w_tolerance,
            &cache,
        )?;
        distinct.push((*arm, table.clone()));
        out.push(table);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub mean_reward: f64,
    pub stderr: f64,
    pub episodes: usize,
}

/// Index against myopic on the same episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    /// `100 (index - myopic) / myopic`.
    pub gain_pct: f64,
    /// Mean and standard error of the per-episode paired difference.
    pub diff_mean: f64,
    pub diff_stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl GainSummary {
    /// The 95% interval of the paired difference lies above zero.
    pub fn significant_positive(&self) -> bool {
        self.ci95_low > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub beta: f64,
    pub horizon: usize,
    pub seed: u64,
    pub policies: Vec<PolicySummary>,
    pub gain: Option<GainSummary>,
}

impl SimReport {
    pub fn summary(&self, policy: PolicyKind) -> Option<&PolicySummary> {
        self.policies.iter().find(|s| s.policy == policy)
    }
}

fn mean_and_stderr(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Runs every requested policy on the same `episodes` episodes.
pub fn run_experiment(config: &SimConfig) -> Result<SimReport, SimError> {
    config.check()?;
    let tables = if config.policies.contains(&PolicyKind::Index) {
        Some(precompute_index_tables(config)?)
    } else {
        None
    };
    run_experiment_with_tables(config, tables.as_deref())
}

/// Like [`run_experiment`] with index tables supplied by the caller.
pub fn run_experiment_with_tables(config: &SimConfig, tables: Option<&[IndexTable]>) -> Result<SimReport, SimError> {
    config.check()?;
    if config.policies.contains(&PolicyKind::Index) && tables.map_or(true, |t| t.len() != config.arms.len()) {
        return Err(SimError::InvalidConfig("index policy requires one index table per arm".into()));
    }
    let horizon = config.horizon_slots();
    let mut policies = config.policies.clone();
    policies.dedup();
    let choosers: Vec<Chooser<'_>> = policies
        .iter()
        .map(|&kind| Chooser {
            kind,
            arms: &config.arms,
            index_tables: tables,
        })
        .collect();
    let totals: Vec<Vec<f64>> = (0..config.episodes)
        .into_par_iter()
        .map(|e| choosers.iter().map(|c| run_episode(config, c, e, horizon, None)).collect())
        .collect();
    let n = config.episodes;
    let summaries: Vec<PolicySummary> = policies
        .iter()
        .enumerate()
        .map(|(k, &policy)| {
            let (mean_reward, stderr) = mean_and_stderr(totals.iter().map(|row| row[k]), n);
            PolicySummary {
                policy,
                mean_reward,
                stderr,
                episodes: n,
            }
        })
        .collect();
    let position = |p| policies.iter().position(|&q| q == p);
    let gain = match (position(PolicyKind::Index), position(PolicyKind::Myopic)) {
        (Some(i), Some(m)) => {
            let (diff_mean, diff_stderr) = mean_and_stderr(totals.iter().map(|row| row[i] - row[m]), n);
            let myopic = summaries[m].mean_reward;
            Some(GainSummary {
                gain_pct: 100.0 * (summaries[i].mean_reward - myopic) / myopic,
                diff_mean,
                diff_stderr,
                ci95_low: diff_mean - Z_95 * diff_stderr,
                ci95_high: diff_mean + Z_95 * diff_stderr,
            })
        }
        _ => None,
    };
    Ok(SimReport {
        beta: config.beta,
        horizon,
        seed: config.seed,
        policies: summaries,
        gain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub beta: f64,
    pub myopic: f64,
    pub index: f64,
    pub gain_pct: f64,
    pub diff_mean: f64,
    pub diff_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<SimReport>,
}

/// Index against myopic at each discount in `betas`, one row per discount.
pub fn compare_policies(config: &SimConfig, betas: &[f64]) -> Result<Comparison, SimError> {
    if betas.is_empty() {
        return Err(SimError::InvalidConfig("no discount factors given".into()));
    }
    let mut rows = Vec::with_capacity(betas.len());
    let mut reports = Vec::with_capacity(betas.len());
    for &beta in betas {
        let cfg = SimConfig {
            beta,
            policies: vec![PolicyKind::Index, PolicyKind::Myopic],
            ..config.clone()
        };
        let report = run_experiment(&cfg)?;
        let gain = report.gain.clone().expect("both policies were requested");
        let mean = |p| report.summary(p).map(|s| s.mean_reward).unwrap_or(f64::NAN);
        rows.push(ComparisonRow {
            beta,
            myopic: mean(PolicyKind::Myopic),
            index: mean(PolicyKind::Index),
            gain_pct: gain.gain_pct,
            diff_mean: gain.diff_mean,
            diff_stderr: gain.diff_stderr,
        });
        reports.push(report);
    }
    Ok(Comparison { rows, reports })
}
