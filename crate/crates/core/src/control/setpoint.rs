//! Desired link directions and their rates from the tension history.

use std::collections::VecDeque;

use crate::geom::Vec3;

/// Tension magnitude below which a link direction is undefined [N].
pub const MIN_TENSION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSetpoint {
    pub q_d: Vec3,
    pub q_d_dot: Vec3,
    pub omega_d: Vec3,
    pub omega_d_dot: Vec3,
    /// Set when the tension vanished and the previous direction was held.
    pub degenerate: bool,
}

impl LinkSetpoint {
    /// Stationary setpoint flagged as degenerate.
    pub fn held(q_d: Vec3) -> Self {
        Self {
            q_d,
            q_d_dot: Vec3::zeros(),
            omega_d: Vec3::zeros(),
            omega_d_dot: Vec3::zeros(),
            degenerate: true,
        }
    }
}

/// `(3xₖ − 4xₖ₋₁ + xₖ₋₂) / 2h`, newest sample last.
fn backward_difference(h: &VecDeque<Vec3>, dt: f64) -> Option<Vec3> {
    let n = h.len();
    (n >= 3).then(|| (h[n - 1] * 3.0 - h[n - 2] * 4.0 + h[n - 3]) / (2.0 * dt))
}

fn push(h: &mut VecDeque<Vec3>, v: Vec3) {
    if h.len() == 3 {
        h.pop_front();
    }
    h.push_back(v);
}

/// Differentiates `q_id = −μ_id/‖μ_id‖` across controller ticks with
/// second-order backward differences. Rates read zero until enough history
/// has accumulated: two ticks for `q̇_id`, four for `ω̇_id`.
#[derive(Debug, Clone, Default)]
pub struct LinkSetpointHistory {
    directions: VecDeque<Vec3>,
    rates: VecDeque<Vec3>,
    held: Option<Vec3>,
}

impl LinkSetpointHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Advances one tick with the new desired tension.
    ///
    /// A tension below [`MIN_TENSION`] keeps the last direction (or `fallback`
    /// on the first tick), zeroes the rates and restarts the differencing.
    pub fn update(&mut self, mu_d: &Vec3, dt: f64, fallback: &Vec3) -> LinkSetpoint {
        let norm = mu_d.norm();
        if !(norm >= MIN_TENSION) {
            let q_d = self.held.unwrap_or(*fallback);
            self.directions.clear();
            self.rates.clear();
            self.held = Some(q_d);
            return LinkSetpoint::held(q_d);
        }
        let q_d = -mu_d / norm;
        self.held = Some(q_d);
        push(&mut self.directions, q_d);
        let (q_d_dot, omega_d) = match backward_difference(&self.directions, dt) {
            Some(q_dot) => {
                let w = q_d.cross(&q_dot);
                push(&mut self.rates, w);
                (q_dot, w)
            }
            None => (Vec3::zeros(), Vec3::zeros()),
        };
        let omega_d_dot = backward_difference(&self.rates, dt).unwrap_or_else(Vec3::zeros);
        LinkSetpoint {
            q_d,
            q_d_dot,
            omega_d,
            omega_d_dot,
            degenerate: false,
        }
    }
}
