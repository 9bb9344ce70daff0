#![allow(dead_code)]

use hidden_bandit::simulator::{Horizon, IndexPrecompute, PolicyKind, SimConfig};
use hidden_bandit::{ArmKind, ArmParams, Availability};
use rand::Rng;

/// Restless reference arm with theta = 0.5 throughout.
pub fn reference_arm() -> ArmParams {
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

/// `eta0 < r0 < eta1 < r1` from four sorted uniforms.
fn ordered_rewards(rng: &mut impl Rng) -> [f64; 4] {
    let mut v = [0.0; 4];
    for x in &mut v {
        *x = rng.gen_range(0.0..1.0);
    }
    v.sort_by(f64::total_cmp);
    v
}

/// Rested arm with ordered rewards where resting freezes availability too:
/// `theta^0(0) = 0`, `theta^0(1) = 1`.
pub fn random_rested_arm(rng: &mut impl Rng) -> ArmParams {
    let [eta0, r0, eta1, r1] = ordered_rewards(rng);
    ArmParams {
        mu0: rng.gen(),
        mu1: rng.gen(),
        r0,
        r1,
        eta0,
        eta1,
        theta: Availability {
            play_available: rng.gen(),
            play_unavailable: rng.gen(),
            rest_available: 1.0,
            rest_unavailable: 0.0,
        },
        kind: ArmKind::Rested,
    }
}

fn ordered_pair(rng: &mut impl Rng) -> (f64, f64) {
    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
    (a.max(b), a.min(b))
}

/// Restless arm with ordered rewards and `theta^a(1) >= theta^a(0)`.
/// `small_gap` selects `0 < mu1 - mu0 <= 1/3`, otherwise `mu0 > mu1`.
pub fn random_structural_arm(rng: &mut impl Rng, small_gap: bool) -> ArmParams {
    let [eta0, r0, eta1, r1] = ordered_rewards(rng);
    let (mu0, mu1) = if small_gap {
        let gap = rng.gen_range(1e-3..=1.0 / 3.0);
        let mu0 = rng.gen_range(0.0..1.0 - gap);
        (mu0, mu0 + gap)
    } else {
        ordered_pair(rng)
    };
    let (play_available, play_unavailable) = ordered_pair(rng);
    let (rest_available, rest_unavailable) = ordered_pair(rng);
    ArmParams {
        mu0,
        mu1,
        r0,
        r1,
        eta0,
        eta1,
        theta: Availability {
            play_available,
            play_unavailable,
            rest_available,
            rest_unavailable,
        },
        kind: ArmKind::Restless,
    }
}

/// Rested arm availability with `theta^0(0) = 0`.
pub fn rested_theta(play_available: f64, play_unavailable: f64, rest_available: f64) -> Availability {
    Availability {
        play_available,
        play_unavailable,
        rest_available,
        rest_unavailable: 0.0,
    }
}

/// The five heterogeneous arms of the first simulation set, with one
/// availability model shared by all.
pub fn five_arms(theta: Availability) -> Vec<ArmParams> {
    let mu0 = [0.1, 0.9, 0.3, 0.9, 0.3];
    let mu1 = [0.9, 0.1, 0.9, 0.3, 0.9];
    let r0 = [0.2, 0.3, 0.25, 0.4, 0.35];
    let r1 = [0.9, 0.95, 0.8, 0.9, 0.6];
    let eta0 = [0.1, 0.2, 0.15, 0.3, 0.25];
    let eta1 = [0.6, 0.65, 0.5, 0.6, 0.3];
    (0..5)
        .map(|n| ArmParams {
            mu0: mu0[n],
            mu1: mu1[n],
            r0: r0[n],
            r1: r1[n],
            eta0: eta0[n],
            eta1: eta1[n],
            theta,
            kind: ArmKind::Rested,
        })
        .collect()
}

/// Five identical arms differing only in availability.
pub fn same_arms(thetas: [Availability; 5]) -> Vec<ArmParams> {
    thetas
        .map(|theta| ArmParams {
            mu0: 0.9,
            mu1: 0.3,
            r0: 0.2,
            r1: 0.9,
            eta0: 0.1,
            eta1: 0.6,
            theta,
            kind: ArmKind::Rested,
        })
        .to_vec()
}

pub fn sim_config(arms: Vec<ArmParams>, initial_y: Vec<bool>, episodes: usize, seed: u64) -> SimConfig {
    SimConfig {
        arms,
        beta: 0.9,
        initial_pi: vec![0.2, 0.4, 0.3, 0.7, 0.5],
        initial_y,
        horizon: Horizon::Auto,
        episodes,
        seed,
        policies: vec![PolicyKind::Index, PolicyKind::Myopic],
        index_precompute: IndexPrecompute::default(),
    }
}

pub fn example_one() -> Vec<ArmParams> {
    let t = rested_theta;
    same_arms([t(0.5, 0.7, 0.9), t(0.5, 0.5, 0.5), t(0.8, 0.9, 0.7), t(0.5, 0.5, 0.5), t(1.0, 0.0, 1.0)])
}

pub fn example_two() -> Vec<ArmParams> {
    let t = rested_theta;
    same_arms([t(0.5, 0.7, 0.9), t(0.3, 0.5, 0.6), t(0.8, 0.9, 0.7), t(0.5, 0.5, 0.5), t(1.0, 0.2, 1.0)])
}
