//! Value iteration for the single-arm subsidy problem on a uniform belief grid.
//!
//! Four action values are tracked per grid point: play/not-play while
//! available (`v_s`, `v_ns`) and play/not-play while unavailable
//! (`v_tilde_s`, `v_tilde_ns`). Successor beliefs that fall between grid
//! points read the continuation values by linear interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, ArmParams, Belief};

pub const DEFAULT_GRID_POINTS: usize = 1001;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tables: Box<ValueTables>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub beta: f64,
    pub subsidy: f64,
}

impl SolverConfig {
    pub fn new(beta: f64, subsidy: f64) -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            beta,
            subsidy,
        }
    }

    pub fn with_grid_points(mut self, n: usize) -> Self {
        self.grid_points = n;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_subsidy(mut self, w: f64) -> Self {
        self.subsidy = w;
        self
    }

    pub fn check(&self) -> Result<(), SolverError> {
        if self.grid_points < 2 {
            return Err(SolverError::InvalidConfig(format!(
                "grid_points must be >= 2, got {}",
                self.grid_points
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(SolverError::InvalidConfig(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !self.subsidy.is_finite() {
            return Err(SolverError::InvalidConfig(format!("subsidy must be finite, got {}", self.subsidy)));
        }
        Ok(())
    }

    /// Upper bound on the distance to the true fixed point once the residual
    /// has dropped below the tolerance.
    pub fn fixed_point_error_bound(&self) -> f64 {
        self.tolerance * self.beta / (1.0 - self.beta)
    }
}

/// Uniform grid `i / (n - 1)` on `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n).map(|i| i as f64 / last).collect()
}

/// Position of a belief on the uniform grid, as a left index and weight.
#[derive(Debug, Clone, Copy)]
struct GridPoint {
    lo: usize,
    frac: f64,
}

impl GridPoint {
    fn locate(pi: f64, n: usize) -> Self {
        let last = (n - 1) as f64;
        let x = pi.clamp(0.0, 1.0) * last;
        let lo = (x.floor() as usize).min(n - 2);
        GridPoint { lo, frac: x - lo as f64 }
    }

    #[inline]
    fn read(self, a: &[f64]) -> f64 {
        if self.frac == 0.0 {
            a[self.lo]
        } else {
            a[self.lo] * (1.0 - self.frac) + a[self.lo + 1] * self.frac
        }
    }
}

/// Linear interpolation of grid-aligned `values` at `pi`.
pub fn interpolate(values: &[f64], pi: f64) -> f64 {
    GridPoint::locate(pi, values.len()).read(values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTables {
    pub grid: Vec<f64>,
    pub v_s: Vec<f64>,
    pub v_ns: Vec<f64>,
    pub v_tilde_s: Vec<f64>,
    pub v_tilde_ns: Vec<f64>,
    pub v: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub beta: f64,
    pub subsidy: f64,
}

impl ValueTables {
    pub fn zeros(config: &SolverConfig) -> Self {
        let n = config.grid_points;
        Self {
            grid: uniform_grid(n),
            v_s: vec![0.0; n],
            v_ns: vec![0.0; n],
            v_tilde_s: vec![0.0; n],
            v_tilde_ns: vec![0.0; n],
            v: vec![0.0; n],
            v_tilde: vec![0.0; n],
            converged: false,
            iterations: 0,
            residual: f64::INFINITY,
            beta: config.beta,
            subsidy: config.subsidy,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Sup-norm distance between the optimal values of two tables.
    pub fn distance(&self, other: &ValueTables) -> f64 {
        sup_diff(&self.v, &other.v).max(sup_diff(&self.v_tilde, &other.v_tilde))
    }

    /// The four action values at an arbitrary belief, from one Bellman step
    /// over the interpolated optimal values.
    pub fn action_values_at(&self, params: &ArmParams, pi: f64) -> ActionValues {
        let stencil = Stencil::new(params, Belief::new(pi), self.len());
        stencil.evaluate(&self.v, &self.v_tilde, self.beta, self.subsidy)
    }

    /// `max|v|` over all six arrays, used to scale tolerances.
    pub fn value_scale(&self) -> f64 {
        [&self.v_s, &self.v_ns, &self.v_tilde_s, &self.v_tilde_ns]
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Adds `c` to all four action-value arrays and the two maxima.
    pub fn shifted(&self, c: f64) -> ValueTables {
        let add = |a: &Vec<f64>| a.iter().map(|x| x + c).collect::<Vec<_>>();
        ValueTables {
            v_s: add(&self.v_s),
            v_ns: add(&self.v_ns),
            v_tilde_s: add(&self.v_tilde_s),
            v_tilde_ns: add(&self.v_tilde_ns),
            v: add(&self.v),
            v_tilde: add(&self.v_tilde),
            ..self.clone()
        }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionValues {
    pub v_s: f64,
    pub v_ns: f64,
    pub v_tilde_s: f64,
    pub v_tilde_ns: f64,
}

impl ActionValues {
    pub fn play_advantage(&self, available: bool) -> f64 {
        if available {
            self.v_s - self.v_ns
        } else {
            self.v_tilde_s - self.v_tilde_ns
        }
    }
}

/// Successor structure of one belief: where each action leads and with what
/// probability.
#[derive(Debug, Clone)]
struct Stencil {
    rho: f64,
    xi: f64,
    // (probability, successor) for success and failure signals
    play_available: [(f64, GridPoint); 2],
    play_unavailable: [(f64, GridPoint); 2],
    rest_available: GridPoint,
    rest_unavailable: GridPoint,
    theta: [f64; 4],
}

impl Stencil {
    fn new(params: &ArmParams, pi: Belief, n: usize) -> Self {
        let rho = params.success_probability(pi);
        let branch = |z: bool, available: bool| -> (f64, GridPoint) {
            let p = if z { rho } else { 1.0 - rho };
            if p <= 0.0 {
                return (0.0, GridPoint::locate(pi.value(), n));
            }
            let next = params
                .gamma_update(pi, z, available)
                .map(Belief::value)
                .unwrap_or(pi.value());
            (p, GridPoint::locate(next, n))
        };
        let t = &params.theta;
        Stencil {
            rho,
            xi: params.unavailable_reward(pi),
            play_available: [branch(true, true), branch(false, true)],
            play_unavailable: [branch(true, false), branch(false, false)],
            rest_available: GridPoint::locate(params.big_gamma_update(pi, true).value(), n),
            rest_unavailable: GridPoint::locate(params.big_gamma_update(pi, false).value(), n),
            theta: [t.play_available, t.play_unavailable, t.rest_available, t.rest_unavailable],
        }
    }

    #[inline]
    fn continuation(at: GridPoint, theta: f64, v: &[f64], v_tilde: &[f64]) -> f64 {
        theta * at.read(v) + (1.0 - theta) * at.read(v_tilde)
    }

    #[inline]
    fn evaluate(&self, v: &[f64], v_tilde: &[f64], beta: f64, subsidy: f64) -> ActionValues {
        let [th_pa, th_pu, th_ra, th_ru] = self.theta;
        let play = |branches: &[(f64, GridPoint); 2], theta: f64| {
            let mut acc = 0.0;
            for &(p, at) in branches {
                if p > 0.0 {
                    acc += p * Self::continuation(at, theta, v, v_tilde);
                }
            }
            acc
        };
        ActionValues {
            v_s: self.rho + beta * play(&self.play_available, th_pa),
            v_ns: subsidy + beta * Self::continuation(self.rest_available, th_ra, v, v_tilde),
            v_tilde_s: self.xi + beta * play(&self.play_unavailable, th_pu),
            v_tilde_ns: subsidy + beta * Self::continuation(self.rest_unavailable, th_ru, v, v_tilde),
        }
    }
}

/// The Bellman operator for fixed parameters and configuration, with the
/// successor structure of every grid point precomputed.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    config: SolverConfig,
    stencils: Vec<Stencil>,
}

impl BellmanOperator {
    pub fn new(params: &ArmParams, config: &SolverConfig) -> Self {
        let n = config.grid_points;
        let stencils = uniform_grid(n)
            .into_iter()
            .map(|pi| Stencil::new(params, Belief::new(pi), n))
            .collect();
        Self { config: *config, stencils }
    }

    /// One synchronous backup of all four action values at every grid point.
    pub fn apply(&self, current: &ValueTables) -> ValueTables {
        let mut next = ValueTables::zeros(&self.config);
        self.apply_into(current, &mut next);
        next.iterations = current.iterations + 1;
        next.residual = next.distance(current);
        next
    }

    fn apply_into(&self, current: &ValueTables, next: &mut ValueTables) {
        let (beta, w) = (self.config.beta, self.config.subsidy);
        for (i, st) in self.stencils.iter().enumerate() {
            let av = st.evaluate(&current.v, &current.v_tilde, beta, w);
            next.v_s[i] = av.v_s;
            next.v_ns[i] = av.v_ns;
            next.v_tilde_s[i] = av.v_tilde_s;
            next.v_tilde_ns[i] = av.v_tilde_ns;
            next.v[i] = av.v_s.max(av.v_ns);
            next.v_tilde[i] = av.v_tilde_s.max(av.v_tilde_ns);
        }
    }
}

/// One synchronous Bellman backup of `current`.
pub fn bellman_backup(params: &ArmParams, config: &SolverConfig, current: &ValueTables) -> ValueTables {
    BellmanOperator::new(params, config).apply(current)
}

/// Value iteration from zero tables until the sup-norm change between
/// successive iterates drops below the tolerance.
pub fn solve(params: &ArmParams, config: &SolverConfig) -> Result<ValueTables, SolverError> {
    solve_with_trace(params, config, |_| {})
}

/// Like [`solve`], reporting the residual after every iteration.
pub fn solve_with_trace(
    params: &ArmParams,
    config: &SolverConfig,
    mut on_iteration: impl FnMut(f64),
) -> Result<ValueTables, SolverError> {
    config.check()?;
    if let Some(v) = params.validate(false).first() {
        return Err(SolverError::InvalidConfig(format!("invalid arm: {v}")));
    }
    let op = BellmanOperator::new(params, config);
    let mut current = ValueTables::zeros(config);
    let mut next = ValueTables::zeros(config);
    for it in 1..=config.max_iterations {
        op.apply_into(&current, &mut next);
        let residual = next.distance(&current);
        next.iterations = it;
        next.residual = residual;
        on_iteration(residual);
        std::mem::swap(&mut current, &mut next);
        if residual < config.tolerance {
            current.converged = true;
            return Ok(current);
        }
    }
    Err(SolverError::NotConverged {
        iterations: current.iterations,
        residual: current.residual,
        tables: Box::new(current),
    })
}

/// Optimal action per grid point for each availability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub grid: Vec<f64>,
    pub available: Vec<Action>,
    pub unavailable: Vec<Action>,
}

impl PolicyTable {
    pub fn actions(&self, available: bool) -> &[Action] {
        if available {
            &self.available
        } else {
            &self.unavailable
        }
    }
}

/// Differences at or below this are ties. Covers floating-point rounding in
/// values of magnitude `scale`, nothing more.
pub fn tie_tolerance(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.max(1.0)
}

/// Decides play vs not-play; ties go to not-play.
pub fn decide(play_value: f64, rest_value: f64, scale: f64) -> Action {
    if play_value - rest_value > tie_tolerance(scale) {
        Action::Play
    } else {
        Action::NotPlay
    }
}

pub fn extract_policy(tables: &ValueTables) -> PolicyTable {
    let scale = tables.value_scale();
    let pick = |s: &[f64], ns: &[f64]| s.iter().zip(ns).map(|(&a, &b)| decide(a, b, scale)).collect();
    PolicyTable {
        grid: tables.grid.clone(),
        available: pick(&tables.v_s, &tables.v_ns),
        unavailable: pick(&tables.v_tilde_s, &tables.v_tilde_ns),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArmKind, Availability};

    fn reference_arm() -> ArmParams {
        ArmParams {
            mu0: 0.1,
            mu1: 0.9,
            r0: 0.4,
            r1: 0.95,
            eta0: 0.1,
            eta1: 0.65,
            theta: Availability::constant(0.5),
            kind: ArmKind::Restless,
        }
    }

    #[test]
    fn interpolation_hits_grid_and_midpoints() {
        let vals = vec![0.0, 1.0, 4.0];
        assert_eq!(interpolate(&vals, 0.0), 0.0);
        assert_eq!(interpolate(&vals, 1.0), 4.0);
        assert!((interpolate(&vals, 0.75) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn first_backup_from_zero() {
        let arm = reference_arm();
        let cfg = SolverConfig::new(0.7, 0.0).with_grid_points(11);
        let t = bellman_backup(&arm, &cfg, &ValueTables::zeros(&cfg));
        for (i, &pi) in t.grid.iter().enumerate() {
            let rho = arm.success_probability(Belief::new(pi));
            assert!((t.v_s[i] - rho).abs() < 1e-15);
            assert_eq!(t.v_ns[i], 0.0);
        }
        let cfg = cfg.with_subsidy(0.3);
        let t = bellman_backup(&arm, &cfg, &ValueTables::zeros(&cfg));
        assert!(t.v_ns.iter().all(|&x| x == 0.3));
        assert!(t.v_tilde_ns.iter().all(|&x| x == 0.3));
    }

    #[test]
    fn solved_tables_are_a_fixed_point() {
        let arm = reference_arm();
        let cfg = SolverConfig::new(0.7, 0.4).with_grid_points(101).with_tolerance(1e-13);
        let t = solve(&arm, &cfg).unwrap();
        let again = bellman_backup(&arm, &cfg, &t);
        assert!(again.distance(&t) < 1e-12);
    }

    #[test]
    fn large_subsidy_means_never_play() {
        let arm = reference_arm();
        let cfg = SolverConfig::new(0.7, 0.95).with_grid_points(201);
        let t = solve(&arm, &cfg).unwrap();
        let expected = 0.95 / 0.3;
        let bound = cfg.fixed_point_error_bound();
        assert!(t.v.iter().all(|&v| (v - expected).abs() <= bound + 1e-12));
        let p = extract_policy(&t);
        assert!(p.available.iter().chain(&p.unavailable).all(|&a| a == Action::NotPlay));
    }

    #[test]
    fn tie_goes_to_not_play() {
        let cfg = SolverConfig::new(0.5, 0.0).with_grid_points(5);
        let mut t = ValueTables::zeros(&cfg);
        t.v_s = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        t.v_ns = t.v_s.clone();
        t.v_tilde_s = vec![0.5; 5];
        t.v_tilde_ns = vec![0.5; 5];
        let p = extract_policy(&t);
        assert!(p.available.iter().chain(&p.unavailable).all(|&a| a == Action::NotPlay));
    }

    #[test]
    fn not_converged_returns_tables() {
        let arm = reference_arm();
        let mut cfg = SolverConfig::new(0.9, 0.2).with_grid_points(21);
        cfg.max_iterations = 3;
        match solve(&arm, &cfg) {
            Err(SolverError::NotConverged { iterations, tables, .. }) => {
                assert_eq!(iterations, 3);
                assert!(!tables.converged);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let arm = reference_arm();
        assert!(solve(&arm, &SolverConfig::new(1.0, 0.0)).is_err());
        assert!(solve(&arm, &SolverConfig::new(0.5, 0.0).with_grid_points(1)).is_err());
        assert!(solve(&arm, &SolverConfig::new(0.5, 0.0).with_tolerance(0.0)).is_err());
    }

    #[test]
    fn residuals_contract() {
        let arm = reference_arm();
        let cfg = SolverConfig::new(0.7, 0.3).with_grid_points(101);
        let mut residuals = Vec::new();
        solve_with_trace(&arm, &cfg, |r| residuals.push(r)).unwrap();
        for pair in residuals.windows(2).skip(1) {
            assert!(pair[1] <= cfg.beta * pair[0] + 1e-14, "{pair:?}");
        }
    }
}
