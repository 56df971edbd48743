//! Quadrotor attitude loop realising an ideal force with thrust along the
//! body axis.

use crate::error::{Error, Result};
use crate::dynamics::quadrotor_attitude_accel;
use crate::geom::{attitude_error, hat, log_so3, reproject_rotation, Mat3, Vec3, E3};
use crate::model::{AgentState, RotorCommand};

use super::GainSet;

/// Ideal force magnitude below which the thrust axis is undefined [N].
pub const MIN_THRUST: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSetpoint {
    pub r_c: Mat3,
    pub omega_c: Vec3,
    pub omega_c_dot: Vec3,
    pub b3: Vec3,
    pub b1: Vec3,
}

/// Commanded attitude whose third axis opposes `u` and whose first axis is
/// as close as possible to the heading `b1`.
pub fn commanded_attitude(agent: usize, u: &Vec3, b1: &Vec3) -> Result<Mat3> {
    let norm = u.norm();
    if !(norm >= MIN_THRUST) {
        return Err(Error::DegenerateThrust { agent, norm });
    }
    let b3 = -u / norm;
    let b3_hat = hat(&b3);
    let b2 = b3_hat * b1;
    let b2_norm = b2.norm();
    if !(b2_norm >= 1e-6) {
        return Err(Error::CollinearHeading { agent });
    }
    let b1c = -(b3_hat * b2);
    Ok(Mat3::from_columns(&[b1c / b1c.norm(), b2 / b2_norm, b3]))
}

/// Tracks `R_c` across ticks to supply `Ω_c` (log-map difference) and `Ω̇_c`
/// (backward difference). Both start at zero.
#[derive(Debug, Clone, Default)]
pub struct AttitudeSetpointFilter {
    prev_r: Option<Mat3>,
    prev_omega: Option<Vec3>,
}

impl AttitudeSetpointFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn update(&mut self, agent: usize, u: &Vec3, b1: &Vec3, dt: f64) -> Result<AttitudeSetpoint> {
        let r_c = commanded_attitude(agent, u, b1)?;
        let omega_c = match self.prev_r {
            Some(prev) => log_so3(&(prev.transpose() * r_c)) / dt,
            None => Vec3::zeros(),
        };
        let omega_c_dot = match (self.prev_r, self.prev_omega) {
            (Some(_), Some(prev)) => (omega_c - prev) / dt,
            _ => Vec3::zeros(),
        };
        if self.prev_r.is_some() {
            self.prev_omega = Some(omega_c);
        }
        self.prev_r = Some(r_c);
        Ok(AttitudeSetpoint {
            r_c,
            omega_c,
            omega_c_dot,
            b3: r_c.column(2).into_owned(),
            b1: *b1,
        })
    }
}

/// Thrust `f = −u·Re₃` and the geometric tracking moment with the
/// `1/ε`-scaled feedback.
pub fn rotor_command(agent: &AgentState, sp: &AttitudeSetpoint, gains: &GainSet, inertia: &Mat3, u: &Vec3) -> RotorCommand {
    let r = agent.attitude;
    let w = agent.body_rate;
    let err = attitude_error(&r, &sp.r_c, &w, &sp.omega_c);
    let eps = gains.epsilon;
    let rel = r.transpose() * sp.r_c;
    let moment = -err.e_r * (gains.attitude / (eps * eps)) - err.e_omega * (gains.body_rate / eps)
        + w.cross(&(inertia * w))
        - inertia * (hat(&w) * rel * sp.omega_c - rel * sp.omega_c_dot);
    RotorCommand {
        thrust: -u.dot(&(r * E3)),
        moment,
    }
}

/// Force produced by thrust `f` along `−Re₃`.
pub fn realized_force(thrust: f64, r: &Mat3) -> Vec3 {
    -(r * E3) * thrust
}

/// One sample of an attitude-only run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub t: f64,
    /// `½ tr(I − R_cᵀR)`
    pub psi: f64,
    pub e_omega: f64,
    /// `½ e_Ω·J e_Ω + (k_R/ε²) Ψ`, non-increasing along exact solutions.
    pub energy: f64,
}

/// Quadrotor attitude dynamics alone under [`rotor_command`], tracking a
/// frozen setpoint. The moment is re-evaluated at every RK4 stage and the
/// attitude is projected back onto SO(3) after each step.
pub fn boundary_layer(
    inertia: &Mat3,
    gains: &GainSet,
    setpoint: &AttitudeSetpoint,
    r0: &Mat3,
    omega0: &Vec3,
    dt: f64,
    t_final: f64,
) -> Result<Vec<BoundarySample>> {
    if !(dt > 0.0 && t_final >= 0.0 && dt.is_finite() && t_final.is_finite()) {
        return Err(Error::Validation(format!("dt > 0 and t_final ≥ 0 (got {dt}, {t_final})")));
    }
    let u = -setpoint.b3;
    let rhs = |r: &Mat3, w: &Vec3| -> (Mat3, Vec3) {
        let agent = AgentState {
            attitude: *r,
            body_rate: *w,
            ..AgentState::hanging()
        };
        let m = rotor_command(&agent, setpoint, gains, inertia, &u).moment;
        (r * hat(w), quadrotor_attitude_accel(inertia, w, &m))
    };
    let sample = |t: f64, r: &Mat3, w: &Vec3| {
        let err = attitude_error(r, &setpoint.r_c, w, &setpoint.omega_c);
        BoundarySample {
            t,
            psi: err.psi,
            e_omega: err.e_omega.norm(),
            energy: 0.5 * err.e_omega.dot(&(inertia * err.e_omega)) + gains.attitude / (gains.epsilon * gains.epsilon) * err.psi,
        }
    };
    let steps = (t_final / dt).round() as usize;
    let (mut r, mut w) = (*r0, *omega0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(sample(0.0, &r, &w));
    for k in 1..=steps {
        let (r1, w1) = rhs(&r, &w);
        let (r2, w2) = rhs(&(r + r1 * (0.5 * dt)), &(w + w1 * (0.5 * dt)));
        let (r3, w3) = rhs(&(r + r2 * (0.5 * dt)), &(w + w2 * (0.5 * dt)));
        let (r4, w4) = rhs(&(r + r3 * dt), &(w + w3 * dt));
        r = reproject_rotation(&(r + (r1 + r2 * 2.0 + r3 * 2.0 + r4) * (dt / 6.0)))?;
        w += (w1 + w2 * 2.0 + w3 * 2.0 + w4) * (dt / 6.0);
        if !w.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { t: k as f64 * dt });
        }
        out.push(sample(k as f64 * dt, &r, &w));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::exp_so3;

    #[test]
    fn level_attitude_for_vertical_force() {
        let r = commanded_attitude(0, &Vec3::new(0.0, 0.0, -10.0), &Vec3::x()).unwrap();
        assert!((r - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let u = Vec3::new(0.0, 0.0, -10.0);
        assert!(matches!(commanded_attitude(1, &u, &E3), Err(Error::CollinearHeading { agent: 1 })));
        assert!(matches!(
            commanded_attitude(0, &Vec3::zeros(), &Vec3::x()),
            Err(Error::DegenerateThrust { .. })
        ));
    }

    #[test]
    fn constant_force_has_zero_rates() {
        let mut f = AttitudeSetpointFilter::new();
        let u = Vec3::new(1.0, -2.0, -9.0);
        for _ in 0..4 {
            let sp = f.update(0, &u, &Vec3::x(), 1e-3).unwrap();
            assert_eq!(sp.omega_c, Vec3::zeros());
            assert_eq!(sp.omega_c_dot, Vec3::zeros());
        }
    }

    #[test]
    fn reduction_when_attitude_matches() {
        let u = Vec3::new(2.0, -1.0, -8.0);
        let sp = AttitudeSetpointFilter::new().update(0, &u, &Vec3::x(), 1e-3).unwrap();
        let agent = AgentState {
            attitude: sp.r_c,
            ..AgentState::hanging()
        };
        let j = Mat3::from_diagonal(&Vec3::new(0.082, 0.0845, 0.1377));
        let cmd = rotor_command(&agent, &sp, &GainSet::default(), &j, &u);
        assert!((cmd.thrust - u.norm()).abs() < 1e-12);
        assert!((realized_force(cmd.thrust, &agent.attitude) - u).norm() < 1e-10 * u.norm());
        assert!(cmd.moment.norm() < 1e-12);
    }

    #[test]
    fn feedback_scales_with_epsilon() {
        let sp = AttitudeSetpoint {
            r_c: Mat3::identity(),
            omega_c: Vec3::zeros(),
            omega_c_dot: Vec3::zeros(),
            b3: E3,
            b1: Vec3::x(),
        };
        let theta = 0.1f64.asin();
        let agent = AgentState {
            attitude: exp_so3(&Vec3::new(theta, 0.0, 0.0)),
            ..AgentState::hanging()
        };
        let gains = GainSet {
            attitude: 1.0,
            epsilon: 0.1,
            ..GainSet::default()
        };
        let cmd = rotor_command(&agent, &sp, &gains, &Mat3::identity(), &Vec3::new(0.0, 0.0, -1.0));
        assert!((cmd.moment - Vec3::new(-10.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn realized_force_cases() {
        assert_eq!(realized_force(10.0, &Mat3::identity()), Vec3::new(0.0, 0.0, -10.0));
        assert_eq!(realized_force(0.0, &Mat3::identity()), Vec3::zeros());
        let tilted = exp_so3(&Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let u = Vec3::new(0.0, 0.0, -10.0);
        let f = -u.dot(&(tilted * E3));
        assert!(realized_force(f, &tilted).norm() < 1e-14);
    }
}
