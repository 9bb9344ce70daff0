//! Not-play regions, indexability and arm indices.
//!
//! The index of a belief/availability pair is the smallest subsidy at which
//! not playing becomes optimal there. It is computed by bisection on the
//! subsidy, re-solving the single-arm problem at every probe. Solves are
//! memoised in a [`SolveCache`] so sweeps and neighbouring bisections share
//! work.
//!
//! [`stopping_time_oracle`] is an independent route to the same quantity for
//! rested arms: the best ratio of discounted reward to discounted time over
//! all history-dependent stopping rules of the always-play policy, evaluated
//! exactly on the truncated history tree.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, ArmParams, Belief};
use crate::solver::{self, decide, SolverConfig, SolverError, ValueTables};
use crate::structure::{classify_actions, refine_switch_point, THRESHOLD_REFINE_WIDTH};

pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("optimal policy at subsidy {w} is not of threshold type")]
    NonThresholdPolicy {
        w: f64,
        /// Per-grid-point membership in the not-play region while available.
        available: Vec<bool>,
        /// Same while unavailable.
        unavailable: Vec<bool>,
    },
    #[error("subsidy interval [{lo}, {hi}] does not bracket the index of ({pi}, y={y})")]
    BracketFailure { pi: f64, y: bool, lo: f64, hi: f64 },
    #[error("history tree of depth {depth} needs up to {nodes} nodes, budget is {budget}")]
    DepthTooLarge { depth: usize, nodes: u64, budget: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SolveKey {
    params: [u64; 10],
    kind: crate::model::ArmKind,
    grid_points: usize,
    tolerance: u64,
    max_iterations: usize,
    beta: u64,
    subsidy: u64,
}

impl SolveKey {
    fn new(p: &ArmParams, c: &SolverConfig) -> Self {
        let t = &p.theta;
        Self {
            params: [
                p.mu0.to_bits(),
                p.mu1.to_bits(),
                p.r0.to_bits(),
                p.r1.to_bits(),
                p.eta0.to_bits(),
                p.eta1.to_bits(),
                t.play_available.to_bits(),
                t.play_unavailable.to_bits(),
                t.rest_available.to_bits(),
                t.rest_unavailable.to_bits(),
            ],
            kind: p.kind,
            grid_points: c.grid_points,
            tolerance: c.tolerance.to_bits(),
            max_iterations: c.max_iterations,
            beta: c.beta.to_bits(),
            subsidy: c.subsidy.to_bits(),
        }
    }
}

/// Memo of converged solves keyed by exact parameter and configuration bits.
/// Safe to share between threads; concurrent inserts of the same key keep the
/// last write, which is identical to the first since solves are
/// deterministic.
#[derive(Debug, Default)]
pub struct SolveCache {
    map: Mutex<HashMap<SolveKey, Arc<ValueTables>>>,
}

impl SolveCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn solve(&self, params: &ArmParams, config: &SolverConfig) -> Result<Arc<ValueTables>, SolverError> {
        let key = SolveKey::new(params, config);
        if let Some(t) = self.map.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let tables = Arc::new(solver::solve(params, config)?);
        self.map.lock().unwrap().insert(key, Arc::clone(&tables));
        Ok(tables)
    }
}

/// The set of states where not playing is optimal at subsidy `w`. For a
/// threshold policy it is `[pi_l, 1] x {available} ∪ [pi_tilde_l, 1] x
/// {unavailable}`; otherwise `pi_l` and `pi_tilde_l` are still the smallest
/// member beliefs but the region has gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwRegion {
    pub w: f64,
    /// Refined lower boundary while available; `None` when no belief is in
    /// the region.
    pub pi_l: Option<f64>,
    pub pi_tilde_l: Option<f64>,
    /// First grid index in the region, per availability.
    pub grid_index: Option<usize>,
    pub grid_index_tilde: Option<usize>,
    pub empty: bool,
    /// Both availabilities have threshold-type policies.
    pub threshold: bool,
}

impl GwRegion {
    pub fn boundary(&self, available: bool) -> Option<f64> {
        if available {
            self.pi_l
        } else {
            self.pi_tilde_l
        }
    }

    fn grid_boundary(&self, available: bool) -> Option<usize> {
        if available {
            self.grid_index
        } else {
            self.grid_index_tilde
        }
    }
}

/// Grid membership in the not-play region, per availability.
#[derive(Debug, Clone, PartialEq)]
struct Members {
    available: Vec<bool>,
    unavailable: Vec<bool>,
}

impl Members {
    fn side(&self, available: bool) -> &[bool] {
        if available {
            &self.available
        } else {
            &self.unavailable
        }
    }
}

fn region_parts(params: &ArmParams, tables: &ValueTables) -> (GwRegion, Members) {
    let policy = solver::extract_policy(tables);
    let members = |a: &[Action]| a.iter().map(|&x| x == Action::NotPlay).collect::<Vec<_>>();
    let members = Members {
        available: members(&policy.available),
        unavailable: members(&policy.unavailable),
    };
    let threshold = classify_actions(&policy.grid, &policy.available).is_threshold()
        && classify_actions(&policy.grid, &policy.unavailable).is_threshold();
    let boundary = |available: bool| match members.side(available).iter().position(|&m| m) {
        None => (None, None),
        Some(0) => (Some(0.0), Some(0)),
        Some(index) => (
            Some(refine_switch_point(
                tables,
                params,
                available,
                tables.grid[index - 1],
                tables.grid[index],
            )),
            Some(index),
        ),
    };
    let (pi_l, grid_index) = boundary(true);
    let (pi_tilde_l, grid_index_tilde) = boundary(false);
    let region = GwRegion {
        w: tables.subsidy,
        pi_l,
        pi_tilde_l,
        grid_index,
        grid_index_tilde,
        empty: grid_index.is_none() && grid_index_tilde.is_none(),
        threshold,
    };
    (region, members)
}

/// Not-play region at subsidy `w`. Membership is weak: ties are in the region.
pub fn compute_gw(params: &ArmParams, w: f64, config: &SolverConfig, cache: &SolveCache) -> Result<GwRegion, IndexError> {
    let tables = cache.solve(params, &config.with_subsidy(w))?;
    let (region, members) = region_parts(params, &tables);
    if !region.threshold {
        return Err(IndexError::NonThresholdPolicy {
            w,
            available: members.available,
            unavailable: members.unavailable,
        });
    }
    Ok(region)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// The smallest member belief moved right.
    BoundaryMovedRight,
    /// A grid point left the region as the subsidy grew.
    NotNested { grid_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexabilityViolation {
    pub kind: ViolationKind,
    pub available: bool,
    pub w_before: f64,
    pub w_after: f64,
    pub boundary_before: Option<f64>,
    pub boundary_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexabilityReport {
    pub pass: bool,
    pub regions: Vec<GwRegion>,
    pub violation: Option<IndexabilityViolation>,
    /// Subsidies whose policy is not of threshold type. Their regions are
    /// still checked for nesting point by point.
    pub non_threshold: Vec<f64>,
}

/// Checks that region boundaries never move right as the subsidy grows, in
/// the order given. An empty side counts as a boundary at +infinity.
pub fn check_boundaries(regions: &[GwRegion]) -> Option<IndexabilityViolation> {
    let key = |b: Option<f64>| b.unwrap_or(f64::INFINITY);
    let gkey = |b: Option<usize>| b.unwrap_or(usize::MAX);
    for pair in regions.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        for available in [true, false] {
            let grid_ok = gkey(b.grid_boundary(available)) <= gkey(a.grid_boundary(available));
            let refined_ok = key(b.boundary(available)) <= key(a.boundary(available)) + THRESHOLD_REFINE_WIDTH;
            if !(grid_ok && refined_ok) {
                return Some(IndexabilityViolation {
                    kind: ViolationKind::BoundaryMovedRight,
                    available,
                    w_before: a.w,
                    w_after: b.w,
                    boundary_before: a.boundary(available),
                    boundary_after: b.boundary(available),
                });
            }
        }
    }
    None
}

fn check_nesting(regions: &[GwRegion], members: &[Members]) -> Option<IndexabilityViolation> {
    for (k, pair) in members.windows(2).enumerate() {
        for available in [true, false] {
            let (a, b) = (pair[0].side(available), pair[1].side(available));
            if let Some(i) = a.iter().zip(b).position(|(&was, &now)| was && !now) {
                return Some(IndexabilityViolation {
                    kind: ViolationKind::NotNested { grid_index: i },
                    available,
                    w_before: regions[k].w,
                    w_after: regions[k + 1].w,
                    boundary_before: regions[k].boundary(available),
                    boundary_after: regions[k + 1].boundary(available),
                });
            }
        }
    }
    None
}

/// Solves at every subsidy of the ascending `w_grid` and checks that the
/// not-play regions are nested: no grid point leaves the region and the
/// smallest member belief never moves right as the subsidy grows.
pub fn is_indexable(
    params: &ArmParams,
    w_grid: &[f64],
    config: &SolverConfig,
    cache: &SolveCache,
) -> Result<IndexabilityReport, IndexError> {
    if w_grid.windows(2).any(|p| !(p[0] <= p[1])) {
        return Err(IndexError::InvalidInput("subsidy grid must be sorted ascending".into()));
    }
    let parts = w_grid
        .par_iter()
        .map(|&w| -> Result<_, IndexError> {
            let tables = cache.solve(params, &config.with_subsidy(w))?;
            Ok(region_parts(params, &tables))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (regions, members): (Vec<GwRegion>, Vec<Members>) = parts.into_iter().unzip();
    let violation = check_nesting(&regions, &members).or_else(|| check_boundaries(&regions));
    let non_threshold = regions.iter().filter(|r| !r.threshold).map(|r| r.w).collect();
    Ok(IndexabilityReport {
        pass: violation.is_none(),
        regions,
        violation,
        non_threshold,
    })
}

/// Evenly spaced subsidies from `from` to `to` inclusive, stepping by `step`.
pub fn subsidy_sweep(from: f64, to: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let n = ((to - from) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| from + k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMethod {
    Bisection,
    StoppingTimeOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexResult {
    pub pi: f64,
    pub y: bool,
    pub index_w: f64,
    pub bisection_width: f64,
    pub method: IndexMethod,
    /// `false` when the arm is outside the rested assumptions under which
    /// the arm is known to be indexable; the value is then a heuristic.
    pub certified: bool,
}

/// Whether `(pi, y)` is in the not-play region at subsidy `w`.
pub fn in_region(
    params: &ArmParams,
    pi: f64,
    available: bool,
    w: f64,
    config: &SolverConfig,
    cache: &SolveCache,
) -> Result<bool, IndexError> {
    let tables = cache.solve(params, &config.with_subsidy(w))?;
    let av = tables.action_values_at(params, pi);
    let action = if available {
        decide(av.v_s, av.v_ns, tables.value_scale())
    } else {
        decide(av.v_tilde_s, av.v_tilde_ns, tables.value_scale())
    };
    Ok(action == Action::NotPlay)
}

/// Index of `(pi, y)` by bisection on the subsidy over `[0, 1]`.
pub fn compute_index(
    params: &ArmParams,
    pi: f64,
    available: bool,
    config: &SolverConfig,
    w_tolerance: f64,
    cache: &SolveCache,
) -> Result<IndexResult, IndexError> {
    compute_index_in(params, pi, available, config, w_tolerance, (0.0, 1.0), cache)
}

/// Index of `(pi, y)` by bisection on the subsidy over `bracket`. The lower
/// end must be outside the not-play region and the upper end inside it.
pub fn compute_index_in(
    params: &ArmParams,
    pi: f64,
    available: bool,
    config: &SolverConfig,
    w_tolerance: f64,
    bracket: (f64, f64),
    cache: &SolveCache,
) -> Result<IndexResult, IndexError> {
    if !(w_tolerance > 0.0) {
        return Err(IndexError::InvalidInput(format!("w_tolerance must be positive, got {w_tolerance}")));
    }
    if Belief::try_new(pi).is_none() {
        return Err(IndexError::InvalidInput(format!("belief {pi} outside [0, 1]")));
    }
    let (mut lo, mut hi) = bracket;
    let member = |w| in_region(params, pi, available, w, config, cache);
    if !(lo < hi) || member(lo)? || !member(hi)? {
        return Err(IndexError::BracketFailure { pi, y: available, lo, hi });
    }
    while hi - lo > w_tolerance {
        let mid = 0.5 * (lo + hi);
        if member(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(IndexResult {
        pi,
        y: available,
        index_w: 0.5 * (lo + hi),
        bisection_width: hi - lo,
        method: IndexMethod::Bisection,
        certified: params.satisfies_rested_index_assumptions(),
    })
}

/// Widens `[0, 1]` by doubling steps until the lower end is outside and the
/// upper end inside the not-play region of `(pi, y)`. Needed when not
/// playing changes availability, which can make the index negative. An
/// index never exceeds the largest reward, so the upper end stays at 1.
pub fn find_bracket(
    params: &ArmParams,
    pi: f64,
    available: bool,
    config: &SolverConfig,
    cache: &SolveCache,
) -> Result<(f64, f64), IndexError> {
    const MAX_DOUBLINGS: usize = 40;
    let member = |w| in_region(params, pi, available, w, config, cache);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut width = 1.0;
    let mut steps = 0;
    while member(lo)? {
        hi = lo;
        lo -= width;
        width *= 2.0;
        steps += 1;
        if steps > MAX_DOUBLINGS {
            return Err(IndexError::BracketFailure { pi, y: available, lo, hi });
        }
    }
    let mut width = 1.0;
    while !member(hi)? {
        lo = hi;
        hi += width;
        width *= 2.0;
        steps += 1;
        if steps > MAX_DOUBLINGS {
            return Err(IndexError::BracketFailure { pi, y: available, lo, hi });
        }
    }
    Ok((lo, hi))
}

/// Indices on a uniform belief grid for both availabilities, read back by
/// linear interpolation. Each index is bracketed by [`find_bracket`], so the
/// table also covers arms whose indices leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    pub grid: Vec<f64>,
    pub available: Vec<f64>,
    pub unavailable: Vec<f64>,
    pub certified: bool,
}

impl IndexTable {
    pub fn build(
        params: &ArmParams,
        points: usize,
        config: &SolverConfig,
        w_tolerance: f64,
        cache: &SolveCache,
    ) -> Result<Self, IndexError> {
        if points < 2 {
            return Err(IndexError::InvalidInput("index table needs at least 2 points".into()));
        }
        let grid = solver::uniform_grid(points);
        let jobs: Vec<(f64, bool)> = [true, false]
            .iter()
            .flat_map(|&y| grid.iter().map(move |&pi| (pi, y)))
            .collect();
        let values = jobs
            .par_iter()
            .map(|&(pi, y)| {
                let bracket = find_bracket(params, pi, y, config, cache)?;
                compute_index_in(params, pi, y, config, w_tolerance, bracket, cache).map(|r| r.index_w)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (available, unavailable) = values.split_at(points);
        Ok(Self {
            grid,
            available: available.to_vec(),
            unavailable: unavailable.to_vec(),
            certified: params.satisfies_rested_index_assumptions(),
        })
    }

    pub fn lookup(&self, pi: f64, available: bool) -> f64 {
        let values = if available { &self.available } else { &self.unavailable };
        solver::interpolate(values, pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    /// `beta^d / (1 - beta^d) * max reward` for depth `d`.
    pub truncation_bound: f64,
    pub ratio_iterations: usize,
    pub max_depth: usize,
}

/// Upper bound on the number of history-tree nodes visited per pass.
pub fn history_tree_size(max_depth: usize) -> u64 {
    // at most four children per node: signal x next availability
    let mut total: u64 = 0;
    let mut level: u64 = 1;
    for _ in 0..max_depth {
        total = total.saturating_add(level);
        level = level.saturating_mul(4);
    }
    total
}

struct Tree<'a> {
    params: &'a ArmParams,
    beta: f64,
    max_depth: usize,
}

/// Discounted reward and discounted time of the best continuation rule.
#[derive(Clone, Copy)]
struct RuleValue {
    reward: f64,
    time: f64,
}

impl Tree<'_> {
    /// Best rule from a node where the arm is played now (`depth` plays so
    /// far including this one), maximising `reward - lambda * time`.
    fn best(&self, pi: Belief, available: bool, depth: usize, lambda: f64) -> RuleValue {
        let p = self.params;
        let mut reward = p.expected_play_reward(pi, available);
        let mut time = 1.0;
        if depth >= self.max_depth {
            return RuleValue { reward, time };
        }
        let theta = p.theta.get(Action::Play, available);
        let rho = p.success_probability(pi);
        let mut successors: [(f64, Belief); 2] = [(0.0, pi); 2];
        let mut count = 0;
        for (z, pz) in [(true, rho), (false, 1.0 - rho)] {
            if pz <= 0.0 {
                continue;
            }
            let next = p.gamma_update(pi, z, available).unwrap_or(pi);
            if count == 1 && successors[0].1 == next {
                successors[0].0 += pz;
            } else {
                successors[count] = (pz, next);
                count += 1;
            }
        }
        let (mut cont_r, mut cont_t) = (0.0, 0.0);
        for &(pz, next) in &successors[..count] {
            for (y_next, py) in [(true, theta), (false, 1.0 - theta)] {
                if py <= 0.0 {
                    continue;
                }
                let child = self.best(next, y_next, depth + 1, lambda);
                if child.reward - lambda * child.time > 0.0 {
                    cont_r += pz * py * child.reward;
                    cont_t += pz * py * child.time;
                }
            }
        }
        reward += self.beta * cont_r;
        time += self.beta * cont_t;
        RuleValue { reward, time }
    }
}

/// Best ratio `E[sum of discounted rewards] / E[sum of discounted time]`
/// over stopping rules of the always-play policy that play at least once and
/// at most `max_depth` times. The ratio equals
/// `(1-beta) E[sum beta^(t-1) R] / (1 - E[beta^tau])`.
///
/// Solved by Dinkelbach iteration: each pass finds the rule maximising
/// `reward - lambda * time` by backward induction over the full history tree,
/// and `lambda` is raised to that rule's ratio until it stops improving.
pub fn stopping_time_oracle(
    params: &ArmParams,
    pi: f64,
    available: bool,
    beta: f64,
    max_depth: usize,
    node_budget: u64,
) -> Result<OracleResult, IndexError> {
    if max_depth == 0 {
        return Err(IndexError::InvalidInput("max_depth must be at least 1".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(IndexError::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    let pi = Belief::try_new(pi).ok_or_else(|| IndexError::InvalidInput(format!("belief {pi} outside [0, 1]")))?;
    let nodes = history_tree_size(max_depth);
    if nodes > node_budget {
        return Err(IndexError::DepthTooLarge {
            depth: max_depth,
            nodes,
            budget: node_budget,
        });
    }
    let tree = Tree { params, beta, max_depth };
    let mut lambda = params.expected_play_reward(pi, available);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let rule = tree.best(pi, available, 1, lambda);
        let ratio = rule.reward / rule.time;
        if ratio <= lambda * (1.0 + 1e-14) + 1e-300 || iterations >= 100 {
            break;
        }
        lambda = ratio;
    }
    let bd = beta.powi(max_depth as i32);
    Ok(OracleResult {
        value: lambda,
        truncation_bound: bd / (1.0 - bd) * params.max_reward(),
        ratio_iterations: iterations,
        max_depth,
    })
}
