//! Short-horizon state prediction used to differentiate setpoints along the
//! closed-loop flow instead of across controller ticks.

use crate::geom::{exp_so3, Vec3};
use crate::model::SystemState;

/// First and second time derivatives of the velocity-level state.
#[derive(Debug, Clone, Default)]
pub(crate) struct Motion {
    pub accel: Vec3,
    pub jerk: Vec3,
    pub angular_accel: Vec3,
    pub angular_jerk: Vec3,
    /// `(ω̇ᵢ, ω̈ᵢ)` per link; links are held fixed when empty.
    pub links: Vec<(Vec3, Vec3)>,
}

/// Second-order Taylor prediction of `state` at `t + tau`. Rotations and link
/// directions move by the exponential map, so the prediction stays on the
/// manifold.
pub(crate) fn predict(state: &SystemState, m: &Motion, tau: f64) -> SystemState {
    let half = 0.5 * tau * tau;
    let mut s = state.clone();
    s.t = state.t + tau;
    s.position = state.position + state.velocity * tau + m.accel * half;
    s.velocity = state.velocity + m.accel * tau + m.jerk * half;
    s.attitude = state.attitude * exp_so3(&(state.angular_velocity * tau + m.angular_accel * half));
    s.angular_velocity = state.angular_velocity + m.angular_accel * tau + m.angular_jerk * half;
    for (a, (w_dot, w_ddot)) in s.agents.iter_mut().zip(&m.links) {
        let w = a.link_rate;
        a.link_dir = exp_so3(&(w * tau + w_dot * half)) * a.link_dir;
        a.link_rate = w + w_dot * tau + w_ddot * half;
    }
    s
}
