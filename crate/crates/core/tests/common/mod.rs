//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use coopload::geom::{exp_so3, Mat3, Vec3};
use coopload::model::{AgentState, ControlInput, RotorCommand, SystemParams, SystemState};
use coopload::scenario::Scenario;
use rand::Rng;

pub fn bundled_params() -> SystemParams {
    Scenario::figure_eight().params().unwrap()
}

pub fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-2 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn vec_in(rng: &mut impl Rng, bound: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-bound..bound),
        rng.random_range(-bound..bound),
        rng.random_range(-bound..bound),
    )
}

pub fn rotation(rng: &mut impl Rng) -> Mat3 {
    exp_so3(&(unit(rng) * rng.random_range(0.0..std::f64::consts::PI)))
}

/// Link direction in the lower hemisphere (quadrotor above the payload).
pub fn hanging_unit(rng: &mut impl Rng) -> Vec3 {
    let q = unit(rng);
    if q.z < 0.0 {
        -q
    } else {
        q
    }
}

pub fn tangent_rate(rng: &mut impl Rng, q: &Vec3, bound: f64) -> Vec3 {
    let w = vec_in(rng, bound);
    w - q * q.dot(&w)
}

pub fn random_state(rng: &mut impl Rng, n: usize) -> SystemState {
    SystemState {
        t: 0.0,
        position: vec_in(rng, 5.0),
        velocity: vec_in(rng, 2.0),
        attitude: rotation(rng),
        angular_velocity: vec_in(rng, 2.0),
        agents: (0..n)
            .map(|_| {
                let q = hanging_unit(rng);
                AgentState {
                    link_dir: q,
                    link_rate: tangent_rate(rng, &q, 2.0),
                    attitude: rotation(rng),
                    body_rate: vec_in(rng, 2.0),
                }
            })
            .collect(),
    }
}

pub fn random_rotors(rng: &mut impl Rng, n: usize) -> ControlInput {
    ControlInput::Rotors(
        (0..n)
            .map(|_| RotorCommand {
                thrust: rng.random_range(0.0..30.0),
                moment: vec_in(rng, 1.0),
            })
            .collect(),
    )
}

pub fn random_forces(rng: &mut impl Rng, n: usize) -> ControlInput {
    ControlInput::Forces((0..n).map(|_| vec_in(rng, 20.0)).collect())
}
