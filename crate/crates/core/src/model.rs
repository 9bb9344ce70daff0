//! Single-arm model: parameters, validation, belief maps and one-step rewards.
//!
//! An arm has two hidden states `0` and `1` and an observable availability
//! bit. The belief `pi` is the posterior probability of state `0`. State `0`
//! is the low-reward state under the usual ordering
//! `eta0 < r0 < eta1 < r1`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when clamping beliefs back into `[0, 1]`.
pub const BELIEF_CLAMP_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("observation z={z} has zero probability at belief {pi} (Bayes denominator is 0)")]
    DegenerateObservation { pi: f64, z: bool },
}

/// Whether the hidden state moves only while the arm is played and available,
/// or in every slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmKind {
    Rested,
    Restless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Play,
    NotPlay,
}

/// Probability that the arm is available in the next slot, given the action
/// taken now and the current availability. Constant in the belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Availability {
    /// Played while available.
    pub play_available: f64,
    /// Played while unavailable.
    pub play_unavailable: f64,
    /// Not played while available.
    pub rest_available: f64,
    /// Not played while unavailable.
    pub rest_unavailable: f64,
}

impl Availability {
    pub const fn constant(p: f64) -> Self {
        Self {
            play_available: p,
            play_unavailable: p,
            rest_available: p,
            rest_unavailable: p,
        }
    }

    pub fn get(&self, action: Action, available: bool) -> f64 {
        match (action, available) {
            (Action::Play, true) => self.play_available,
            (Action::Play, false) => self.play_unavailable,
            (Action::NotPlay, true) => self.rest_available,
            (Action::NotPlay, false) => self.rest_unavailable,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 4] {
        [
            ("theta.play_available", self.play_available),
            ("theta.play_unavailable", self.play_unavailable),
            ("theta.rest_available", self.rest_available),
            ("theta.rest_unavailable", self.rest_unavailable),
        ]
    }
}

/// Parameters of one arm.
///
/// `mu0`/`mu1` are the probabilities of moving to state 0 from state 0/1.
/// `r0`/`r1` are both the success probability of the observation signal and
/// the reward of a play while available; `eta0`/`eta1` are the rewards of a
/// play while unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmParams {
    pub mu0: f64,
    pub mu1: f64,
    pub r0: f64,
    pub r1: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub theta: Availability,
    pub kind: ArmKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Posterior probability that the arm is in state 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(f64);

impl Belief {
    /// Clamps values within [`BELIEF_CLAMP_SLACK`] of `[0, 1]` onto it.
    ///
    /// # Panics
    /// If `pi` is NaN or further than the slack outside the unit interval.
    pub fn new(pi: f64) -> Self {
        assert!(
            pi >= -BELIEF_CLAMP_SLACK && pi <= 1.0 + BELIEF_CLAMP_SLACK,
            "belief {pi} outside [0, 1]"
        );
        Belief(pi.clamp(0.0, 1.0))
    }

    pub fn try_new(pi: f64) -> Option<Self> {
        (pi >= -BELIEF_CLAMP_SLACK && pi <= 1.0 + BELIEF_CLAMP_SLACK).then(|| Belief(pi.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Belief> for f64 {
    fn from(b: Belief) -> f64 {
        b.0
    }
}

fn check_unit(out: &mut Vec<Violation>, field: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        out.push(Violation {
            field: field.to_string(),
            message: format!("{v} not in [0, 1]"),
        });
    }
}

impl ArmParams {
    /// Lists every violated invariant. An empty list means the parameters are
    /// valid. With `strict_ordering`, also requires
    /// `0 <= eta0 < r0 < eta1 < r1 <= 1`.
    pub fn validate(&self, strict_ordering: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        for (field, v) in [
            ("mu0", self.mu0),
            ("mu1", self.mu1),
            ("r0", self.r0),
            ("r1", self.r1),
            ("eta0", self.eta0),
            ("eta1", self.eta1),
        ] {
            check_unit(&mut out, field, v);
        }
        for (field, v) in self.theta.fields() {
            check_unit(&mut out, field, v);
        }
        if strict_ordering {
            for (lo_name, lo, hi_name, hi) in [
                ("eta0", self.eta0, "r0", self.r0),
                ("r0", self.r0, "eta1", self.eta1),
                ("eta1", self.eta1, "r1", self.r1),
            ] {
                if !(lo < hi) {
                    out.push(Violation {
                        field: lo_name.to_string(),
                        message: format!("ordering {lo_name} < {hi_name} fails ({lo} >= {hi})"),
                    });
                }
            }
        }
        out
    }

    /// `rho(pi) = pi*r0 + (1-pi)*r1`: probability of a success signal, and
    /// expected reward of a play while available.
    pub fn success_probability(&self, pi: Belief) -> f64 {
        let p = pi.value();
        p * self.r0 + (1.0 - p) * self.r1
    }

    /// `xi(pi) = pi*eta0 + (1-pi)*eta1`.
    pub fn unavailable_reward(&self, pi: Belief) -> f64 {
        let p = pi.value();
        p * self.eta0 + (1.0 - p) * self.eta1
    }

    /// Expected reward of playing now, which is also the myopic score.
    pub fn expected_play_reward(&self, pi: Belief, available: bool) -> f64 {
        if available {
            self.success_probability(pi)
        } else {
            self.unavailable_reward(pi)
        }
    }

    /// One-step predicted belief `pi*mu0 + (1-pi)*mu1`.
    pub fn predict(&self, pi: Belief) -> Belief {
        let p = pi.value();
        Belief::new(p * self.mu0 + (1.0 - p) * self.mu1)
    }

    /// Belief after playing with observation `z` at availability `available`.
    pub fn gamma_update(&self, pi: Belief, z: bool, available: bool) -> Result<Belief, ModelError> {
        if !available && self.kind == ArmKind::Rested {
            return Ok(pi);
        }
        let p = pi.value();
        let (l0, l1) = if z {
            (self.r0, self.r1)
        } else {
            (1.0 - self.r0, 1.0 - self.r1)
        };
        let den = p * l0 + (1.0 - p) * l1;
        if den <= 0.0 {
            return Err(ModelError::DegenerateObservation { pi: p, z });
        }
        let num = p * l0 * self.mu0 + (1.0 - p) * l1 * self.mu1;
        Ok(Belief::new(num / den))
    }

    /// Belief after not playing at availability `available`.
    pub fn big_gamma_update(&self, pi: Belief, available: bool) -> Belief {
        if available && self.kind == ArmKind::Restless {
            self.predict(pi)
        } else {
            pi
        }
    }

    /// Largest per-slot reward the arm can pay.
    pub fn max_reward(&self) -> f64 {
        self.r0.max(self.r1).max(self.eta0).max(self.eta1)
    }

    /// Hidden state moves only when played and available, and an unavailable
    /// arm that is not played stays unavailable.
    pub fn satisfies_rested_index_assumptions(&self) -> bool {
        self.kind == ArmKind::Rested && self.theta.rest_unavailable == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_arm() -> ArmParams {
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
    fn validate_accepts_reference_params() {
        assert!(reference_arm().validate(true).is_empty());
    }

    #[test]
    fn validate_reports_out_of_range() {
        let arm = ArmParams { r0: 1.2, ..reference_arm() };
        let v = arm.validate(false);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "r0");
    }

    #[test]
    fn validate_reports_ordering_only_when_strict() {
        let arm = ArmParams { eta0: 0.5, ..reference_arm() };
        assert!(arm.validate(false).is_empty());
        let v = arm.validate(true);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "eta0");
        assert!(v[0].message.contains("eta0 < r0"));
    }

    #[test]
    fn validate_reports_theta() {
        let mut arm = reference_arm();
        arm.theta.rest_unavailable = -0.1;
        let v = arm.validate(false);
        assert_eq!(v[0].field, "theta.rest_unavailable");
    }

    #[test]
    fn gamma_from_certain_state_one() {
        let arm = reference_arm();
        let b = arm.gamma_update(Belief::new(0.0), true, true).unwrap();
        assert!((b.value() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn gamma_success_at_half() {
        let arm = reference_arm();
        let b = arm.gamma_update(Belief::new(0.5), true, true).unwrap();
        // 0.5*0.4*0.1 + 0.5*0.95*0.9 = 0.4475 over 0.5*0.4 + 0.5*0.95 = 0.675
        assert!((b.value() - 0.4475 / 0.675).abs() < 1e-12);
        assert!((b.value() - 0.662963).abs() < 1e-6);
    }

    #[test]
    fn gamma_unavailable_rested_is_identity() {
        let arm = ArmParams { kind: ArmKind::Rested, ..reference_arm() };
        let b = arm.gamma_update(Belief::new(0.37), false, false).unwrap();
        assert_eq!(b.value(), 0.37);
    }

    #[test]
    fn gamma_unavailable_restless_matches_available() {
        let arm = reference_arm();
        for z in [false, true] {
            let a = arm.gamma_update(Belief::new(0.3), z, false).unwrap();
            let b = arm.gamma_update(Belief::new(0.3), z, true).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gamma_degenerate() {
        let arm = ArmParams { r0: 0.0, r1: 0.0, ..reference_arm() };
        let err = arm.gamma_update(Belief::new(0.5), true, true).unwrap_err();
        assert!(matches!(err, ModelError::DegenerateObservation { z: true, .. }));
        assert!(arm.gamma_update(Belief::new(0.5), false, true).is_ok());
    }

    #[test]
    fn big_gamma_cases() {
        let restless = reference_arm();
        let rested = ArmParams { kind: ArmKind::Rested, ..reference_arm() };
        assert_eq!(restless.big_gamma_update(Belief::new(0.42), false).value(), 0.42);
        assert!((restless.big_gamma_update(Belief::new(0.5), true).value() - 0.5).abs() < 1e-15);
        assert!((restless.big_gamma_update(Belief::new(0.2), true).value() - 0.74).abs() < 1e-15);
        assert_eq!(rested.big_gamma_update(Belief::new(0.7), true).value(), 0.7);
    }

    #[test]
    fn expected_rewards() {
        let arm = ArmParams { r0: 0.2, r1: 0.9, eta0: 0.1, eta1: 0.6, ..reference_arm() };
        assert!((arm.expected_play_reward(Belief::new(0.2), true) - 0.76).abs() < 1e-15);
        assert!((arm.expected_play_reward(Belief::new(0.5), false) - 0.35).abs() < 1e-15);
        assert_eq!(arm.expected_play_reward(Belief::new(1.0), true), arm.r0);
    }

    #[test]
    fn belief_clamps_drift() {
        assert_eq!(Belief::new(1.0 + 1e-13).value(), 1.0);
        assert_eq!(Belief::new(-1e-13).value(), 0.0);
        assert!(Belief::try_new(1.1).is_none());
    }
}
