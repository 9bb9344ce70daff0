//! Numerical checks of the structural properties of solved value tables:
//! convexity and monotonicity in the belief, decreasing play advantage,
//! Lipschitz bounds, and threshold shape of the optimal policy.
//!
//! Every check returns the worst witness it found alongside the verdict, so
//! failures can be located on the grid.

use serde::{Deserialize, Serialize};

use crate::model::{Action, ArmParams};
use crate::solver::{PolicyTable, ValueTables};

/// Relative tolerance applied to the value range of a table.
pub const RELATIVE_TOLERANCE: f64 = 1e-6;
/// Width of the bracket left by sub-grid threshold refinement.
pub const THRESHOLD_REFINE_WIDTH: f64 = 1e-8;

/// Which hypothesis sets of the structural results the parameters satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaConditions {
    /// `0 <= eta0 < r0 < eta1 < r1 <= 1`.
    pub strict_reward_ordering: bool,
    pub mu0_above_mu1: bool,
    /// Success probability higher in state 1 than in state 0.
    pub signal_ordering: bool,
    /// Constant availability is at least as likely after an available slot
    /// as after an unavailable one, for both actions.
    pub availability_ordering: bool,
    /// All of the above: the decreasing-value regime.
    pub decreasing_regime: bool,
    /// `mu1 - mu0`.
    pub transition_gap: f64,
    /// `0 <= mu1 - mu0 <= 1/3`: the small-gap regime.
    pub small_gap_regime: bool,
    /// `0 < mu1 - mu0 <= 1/3`: the Lipschitz bound applies.
    pub lipschitz_applicable: bool,
}

pub fn check_lemma_conditions(params: &ArmParams) -> LemmaConditions {
    let strict_reward_ordering = params.validate(true).is_empty();
    let mu0_above_mu1 = params.mu0 > params.mu1;
    let signal_ordering = params.r1 > params.r0;
    let t = &params.theta;
    let availability_ordering = t.play_available >= t.play_unavailable && t.rest_available >= t.rest_unavailable;
    let gap = params.mu1 - params.mu0;
    LemmaConditions {
        strict_reward_ordering,
        mu0_above_mu1,
        signal_ordering,
        availability_ordering,
        decreasing_regime: strict_reward_ordering && mu0_above_mu1 && signal_ordering && availability_ordering,
        transition_gap: gap,
        small_gap_regime: (0.0..=1.0 / 3.0).contains(&gap),
        lipschitz_applicable: gap > 0.0 && gap <= 1.0 / 3.0,
    }
}

/// Absolute tolerance for monotonicity and convexity checks on `tables`.
pub fn default_epsilon(tables: &ValueTables) -> f64 {
    let (lo, hi) = [&tables.v_s, &tables.v_ns, &tables.v_tilde_s, &tables.v_tilde_ns]
        .iter()
        .flat_map(|a| a.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = if hi >= lo { hi - lo } else { 0.0 };
    RELATIVE_TOLERANCE * range.max(1e-9)
}

/// Verdict of a check over one array, with the worst-case witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayCheck {
    pub array: String,
    pub pass: bool,
    /// Worst observed violation measure; positive values are violations
    /// before the tolerance is applied.
    pub worst: f64,
    /// Grid index where the worst case was found.
    pub witness: Option<usize>,
    pub tolerance: f64,
}

impl ArrayCheck {
    fn new(array: &str, worst: f64, witness: Option<usize>, tolerance: f64) -> Self {
        Self {
            array: array.to_string(),
            pass: worst <= tolerance,
            worst,
            witness,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub pass: bool,
    pub arrays: Vec<ArrayCheck>,
}

impl PropertyCheck {
    fn from_arrays(arrays: Vec<ArrayCheck>) -> Self {
        Self {
            pass: arrays.iter().all(|a| a.pass),
            arrays,
        }
    }
}

/// Largest rise `a[j] - a[i]` over `i < j`, with `j` as witness.
pub fn worst_increase(a: &[f64]) -> (f64, Option<usize>) {
    let mut low = f64::INFINITY;
    let mut best = (f64::NEG_INFINITY, None);
    for (j, &x) in a.iter().enumerate() {
        if j > 0 && x - low > best.0 {
            best = (x - low, Some(j));
        }
        low = low.min(x);
    }
    best
}

/// Largest `-(a[i-1] - 2a[i] + a[i+1])` and the centre index.
pub fn worst_concavity(a: &[f64]) -> (f64, Option<usize>) {
    a.windows(3)
        .enumerate()
        .map(|(i, w)| (-(w[0] - 2.0 * w[1] + w[2]), i + 1))
        .fold((f64::NEG_INFINITY, None), |best, (d, i)| if d > best.0 { (d, Some(i)) } else { best })
}

fn named_arrays(t: &ValueTables) -> [(&'static str, &[f64]); 6] {
    [
        ("v_s", &t.v_s),
        ("v_ns", &t.v_ns),
        ("v_tilde_s", &t.v_tilde_s),
        ("v_tilde_ns", &t.v_tilde_ns),
        ("v", &t.v),
        ("v_tilde", &t.v_tilde),
    ]
}

pub fn check_convexity(tables: &ValueTables, eps: f64) -> PropertyCheck {
    PropertyCheck::from_arrays(
        named_arrays(tables)
            .into_iter()
            .map(|(name, a)| {
                let (worst, at) = worst_concavity(a);
                ArrayCheck::new(name, worst.max(0.0), at, eps)
            })
            .collect(),
    )
}

/// Optimal values must be weakly nonincreasing in the belief.
pub fn check_monotone_values(tables: &ValueTables, eps: f64) -> PropertyCheck {
    check_nonincreasing(&[("v", &tables.v), ("v_tilde", &tables.v_tilde)], eps)
}

/// Tolerance for the play advantage. Both action values read the continuation
/// value off a linear interpolant, so their difference carries an error of up
/// to one grid step times the largest value slope on top of `eps`.
pub fn isotone_tolerance(tables: &ValueTables, eps: f64) -> f64 {
    let h = 1.0 / (tables.len() - 1) as f64;
    eps + h * max_abs_slope(&tables.v, h).max(max_abs_slope(&tables.v_tilde, h))
}

/// Play advantage must be weakly decreasing in the belief.
pub fn check_isotone_difference(tables: &ValueTables, eps: f64) -> PropertyCheck {
    let (d, d_tilde) = play_advantages(tables);
    check_nonincreasing(&[("v_s - v_ns", &d), ("v_tilde_s - v_tilde_ns", &d_tilde)], eps)
}

pub fn play_advantages(tables: &ValueTables) -> (Vec<f64>, Vec<f64>) {
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    (
        diff(&tables.v_s, &tables.v_ns),
        diff(&tables.v_tilde_s, &tables.v_tilde_ns),
    )
}

fn check_nonincreasing(arrays: &[(&str, &[f64])], eps: f64) -> PropertyCheck {
    PropertyCheck::from_arrays(
        arrays
            .iter()
            .map(|(name, a)| {
                let (worst, at) = worst_increase(a);
                ArrayCheck::new(name, worst.max(0.0), at, eps)
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LipschitzCheck {
    NotApplicable {
        transition_gap: f64,
    },
    Checked {
        pass: bool,
        kappa: f64,
        bound_v: f64,
        measured_v: f64,
        bound_v_tilde: f64,
        measured_v_tilde: f64,
        slope_tolerance: f64,
    },
}

impl LipschitzCheck {
    /// `true` for a passing check; not-applicable counts as neither.
    pub fn passed(&self) -> Option<bool> {
        match self {
            LipschitzCheck::NotApplicable { .. } => None,
            LipschitzCheck::Checked { pass, .. } => Some(*pass),
        }
    }
}

/// `1 / (1 - beta (mu1 - mu0))`.
pub fn lipschitz_constant(beta: f64, params: &ArmParams) -> f64 {
    1.0 / (1.0 - beta * (params.mu1 - params.mu0))
}

fn max_abs_slope(a: &[f64], h: f64) -> f64 {
    a.windows(2).fold(0.0_f64, |m, w| m.max((w[1] - w[0]).abs() / h))
}

/// Largest slope of `v` and `v_tilde` between grid points against
/// `kappa |r1 - r0|` and `kappa |eta1 - eta0|`. For piecewise-linear data the
/// largest slope over all pairs is attained by adjacent points.
pub fn check_lipschitz(tables: &ValueTables, params: &ArmParams, eps: f64) -> LipschitzCheck {
    let gap = params.mu1 - params.mu0;
    if !(gap > 0.0 && gap <= 1.0 / 3.0) {
        return LipschitzCheck::NotApplicable { transition_gap: gap };
    }
    let kappa = lipschitz_constant(tables.beta, params);
    let h = 1.0 / (tables.len() - 1) as f64;
    let slope_tolerance = 2.0 * eps / h;
    let bound_v = kappa * (params.r1 - params.r0).abs();
    let bound_v_tilde = kappa * (params.eta1 - params.eta0).abs();
    let measured_v = max_abs_slope(&tables.v, h);
    let measured_v_tilde = max_abs_slope(&tables.v_tilde, h);
    LipschitzCheck::Checked {
        pass: measured_v <= bound_v + slope_tolerance && measured_v_tilde <= bound_v_tilde + slope_tolerance,
        kappa,
        bound_v,
        measured_v,
        bound_v_tilde,
        measured_v_tilde,
        slope_tolerance,
    }
}

/// Shape of the action map along the belief grid for one availability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ThresholdShape {
    AllPlay,
    AllNotPlay,
    /// Play below `pi_star`, not play from `pi_star` on. `index` is the first
    /// not-play grid point.
    Threshold { pi_star: f64, index: usize },
    /// A not-play point at `not_play_at` is followed by a play point at
    /// `play_at`.
    NotThreshold { not_play_at: usize, play_at: usize },
}

impl ThresholdShape {
    pub fn is_threshold(&self) -> bool {
        !matches!(self, ThresholdShape::NotThreshold { .. })
    }
}

pub fn classify_actions(grid: &[f64], actions: &[Action]) -> ThresholdShape {
    let first_rest = actions.iter().position(|&a| a == Action::NotPlay);
    let Some(k) = first_rest else {
        return ThresholdShape::AllPlay;
    };
    if let Some(off) = actions[k..].iter().position(|&a| a == Action::Play) {
        return ThresholdShape::NotThreshold {
            not_play_at: k,
            play_at: k + off,
        };
    }
    if k == 0 {
        ThresholdShape::AllNotPlay
    } else {
        ThresholdShape::Threshold { pi_star: grid[k], index: k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub available: ThresholdShape,
    pub unavailable: ThresholdShape,
}

impl ThresholdReport {
    pub fn is_threshold(&self) -> bool {
        self.available.is_threshold() && self.unavailable.is_threshold()
    }

    pub fn shape(&self, available: bool) -> &ThresholdShape {
        if available {
            &self.available
        } else {
            &self.unavailable
        }
    }
}

pub fn extract_threshold(policy: &PolicyTable) -> ThresholdReport {
    ThresholdReport {
        available: classify_actions(&policy.grid, &policy.available),
        unavailable: classify_actions(&policy.grid, &policy.unavailable),
    }
}

/// Narrows the switch from play (at `left`) to not-play (at `right`) by
/// bisection on the one-step action values, until the bracket is narrower
/// than [`THRESHOLD_REFINE_WIDTH`]. Returns the not-play end of the bracket.
pub fn refine_switch_point(tables: &ValueTables, params: &ArmParams, available: bool, left: f64, right: f64) -> f64 {
    let scale = tables.value_scale();
    let (mut lo, mut hi) = (left, right);
    while hi - lo > THRESHOLD_REFINE_WIDTH {
        let mid = 0.5 * (lo + hi);
        let av = tables.action_values_at(params, mid);
        let action = crate::solver::decide(
            if available { av.v_s } else { av.v_tilde_s },
            if available { av.v_ns } else { av.v_tilde_ns },
            scale,
        );
        match action {
            Action::Play => lo = mid,
            Action::NotPlay => hi = mid,
        }
    }
    hi
}

/// Refined switch points: `pi_star` for the available and `pi_tilde` for the
/// unavailable action map, when the map is a proper threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedThresholds {
    pub pi_star: Option<f64>,
    pub pi_tilde: Option<f64>,
}

pub fn refine_thresholds(report: &ThresholdReport, tables: &ValueTables, params: &ArmParams) -> RefinedThresholds {
    let refine = |shape: &ThresholdShape, available: bool| match *shape {
        ThresholdShape::Threshold { index, .. } => Some(refine_switch_point(
            tables,
            params,
            available,
            tables.grid[index - 1],
            tables.grid[index],
        )),
        _ => None,
    };
    RefinedThresholds {
        pi_star: refine(&report.available, true),
        pi_tilde: refine(&report.unavailable, false),
    }
}

/// Everything the analyzer can say about one solved table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub subsidy: f64,
    pub epsilon: f64,
    pub conditions: LemmaConditions,
    pub convex_in_pi: PropertyCheck,
    pub monotone_in_pi: PropertyCheck,
    pub isotone_difference: PropertyCheck,
    pub lipschitz: LipschitzCheck,
    pub threshold: ThresholdReport,
    pub refined: RefinedThresholds,
}

pub fn analyze(params: &ArmParams, tables: &ValueTables) -> StructureReport {
    let eps = default_epsilon(tables);
    let policy = crate::solver::extract_policy(tables);
    let threshold = extract_threshold(&policy);
    let refined = refine_thresholds(&threshold, tables, params);
    StructureReport {
        subsidy: tables.subsidy,
        epsilon: eps,
        conditions: check_lemma_conditions(params),
        convex_in_pi: check_convexity(tables, eps),
        monotone_in_pi: check_monotone_values(tables, eps),
        isotone_difference: check_isotone_difference(tables, isotone_tolerance(tables, eps)),
        lipschitz: check_lipschitz(tables, params, eps),
        threshold,
        refined,
    }
}
