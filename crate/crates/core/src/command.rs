//! Desired payload trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{exp_so3, hat, is_rotation, Mat3, Vec3, E3};

/// Desired payload motion at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude: Mat3,
    /// Desired body angular velocity, `Ṙ_d = R_d hat(Ω_d)`.
    pub angular_velocity: Vec3,
    pub angular_acceleration: Vec3,
}

impl CommandSample {
    pub fn hover(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            attitude: Mat3::identity(),
            angular_velocity: Vec3::zeros(),
            angular_acceleration: Vec3::zeros(),
        }
    }
}

pub trait PayloadCommand: Send + Sync {
    fn sample(&self, t: f64) -> Result<CommandSample>;
}

impl PayloadCommand for CommandSample {
    fn sample(&self, _t: f64) -> Result<CommandSample> {
        Ok(self.clone())
    }
}

/// `amplitude · sin(rate · t + phase)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    /// Angular rate [rad/s].
    pub rate: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SineTerm {
    /// `k`-th time derivative at `t`.
    fn derivative(&self, k: u32, t: f64) -> f64 {
        let shift = f64::from(k) * std::f64::consts::FRAC_PI_2;
        self.amplitude * self.rate.powi(k as i32) * (self.rate * t + self.phase + shift).sin()
    }
}

/// One coordinate of the desired position: offset plus a sum of sinusoids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<SineTerm>,
}

impl AxisSpec {
    pub fn derivative(&self, k: u32, t: f64) -> f64 {
        let base = if k == 0 { self.offset } else { 0.0 };
        base + self.terms.iter().map(|s| s.derivative(k, t)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttitudeSpec {
    /// First axis along the horizontal path tangent, third axis along e₃.
    Tangent,
    Constant { attitude: [[f64; 3]; 3] },
    /// `R_d(t) = R_init · exp(t · hat(rate))`, constant body rate.
    Spin { initial: [[f64; 3]; 3], rate: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub z: AxisSpec,
    pub attitude: AttitudeSpec,
}

pub fn mat_from_rows(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

pub fn mat_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

impl TrajectorySpec {
    /// The figure-eight `x_d(t) = [1.2 sin(0.4πt), 4.2 cos(0.2πt), −0.5]` with a
    /// path-tangent attitude.
    pub fn figure_eight() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        Self {
            x: AxisSpec {
                offset: 0.0,
                terms: vec![SineTerm {
                    amplitude: 1.2,
                    rate: 0.4 * PI,
                    phase: 0.0,
                }],
            },
            y: AxisSpec {
                offset: 0.0,
                terms: vec![SineTerm {
                    amplitude: 4.2,
                    rate: 0.2 * PI,
                    phase: FRAC_PI_2,
                }],
            },
            z: AxisSpec {
                offset: -0.5,
                terms: vec![],
            },
            attitude: AttitudeSpec::Tangent,
        }
    }

    pub fn position_derivative(&self, k: u32, t: f64) -> Vec3 {
        Vec3::new(
            self.x.derivative(k, t),
            self.y.derivative(k, t),
            self.z.derivative(k, t),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [&self.x, &self.y, &self.z].iter().all(|a| {
            a.offset.is_finite()
                && a.terms
                    .iter()
                    .all(|s| s.amplitude.is_finite() && s.rate.is_finite() && s.phase.is_finite())
        });
        if !finite {
            return Err(Error::Validation("trajectory coefficients must be finite".into()));
        }
        match &self.attitude {
            AttitudeSpec::Tangent => {}
            AttitudeSpec::Constant { attitude } => check_rotation(attitude)?,
            AttitudeSpec::Spin { initial, rate } => {
                check_rotation(initial)?;
                if !rate.iter().all(|x| x.is_finite()) {
                    return Err(Error::Validation("spin rate must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

fn check_rotation(rows: &[[f64; 3]; 3]) -> Result<()> {
    if !is_rotation(&mat_from_rows(rows), 1e-9) {
        return Err(Error::Validation("commanded attitude must be a rotation matrix".into()));
    }
    Ok(())
}

impl PayloadCommand for TrajectorySpec {
    fn sample(&self, t: f64) -> Result<CommandSample> {
        let velocity = self.position_derivative(1, t);
        let acceleration = self.position_derivative(2, t);
        let (attitude, angular_velocity, angular_acceleration) = match &self.attitude {
            AttitudeSpec::Tangent => {
                tangent_frame_command(&velocity, &acceleration, &self.position_derivative(3, t), t)?
            }
            AttitudeSpec::Constant { attitude } => (mat_from_rows(attitude), Vec3::zeros(), Vec3::zeros()),
            AttitudeSpec::Spin { initial, rate } => {
                let w = Vec3::from(*rate);
                (mat_from_rows(initial) * exp_so3(&(w * t)), w, Vec3::zeros())
            }
        };
        Ok(CommandSample {
            position: self.position_derivative(0, t),
            velocity,
            acceleration,
            attitude,
            angular_velocity,
            angular_acceleration,
        })
    }
}

/// Path-tangent attitude `[ẋ/‖ẋ‖, hat(e₃)ẋ/‖hat(e₃)ẋ‖, e₃]` and its exact
/// body rate and acceleration from the velocity, acceleration and jerk of
/// the path.
///
/// The frame is a rotation only for a horizontal path tangent; it is then a
/// pure heading rotation about e₃ and `Ω_d = ψ̇ e₃` with
/// `ψ̇ = (vₓa_y − v_ya_x)/(vₓ² + v_y²)`.
pub fn tangent_frame_command(velocity: &Vec3, acceleration: &Vec3, jerk: &Vec3, t: f64) -> Result<(Mat3, Vec3, Vec3)> {
    let speed = velocity.norm();
    if speed < 1e-6 {
        return Err(Error::DegenerateTangent {
            t,
            reason: format!("path speed {speed:.3e} m/s"),
        });
    }
    let lateral = hat(&E3) * velocity;
    if lateral.norm() < 1e-6 {
        return Err(Error::DegenerateTangent {
            t,
            reason: "path tangent is vertical".into(),
        });
    }
    let r = Mat3::from_columns(&[velocity / speed, lateral / lateral.norm(), E3]);
    if !is_rotation(&r, 1e-9) {
        return Err(Error::DegenerateTangent {
            t,
            reason: format!(
                "tangent frame is not a rotation (vertical velocity {:.3e} m/s)",
                velocity.z
            ),
        });
    }
    let (vx, vy) = (velocity.x, velocity.y);
    let (ax, ay) = (acceleration.x, acceleration.y);
    let s = vx * vx + vy * vy;
    let c = vx * ay - vy * ax;
    let c_dot = vx * jerk.y - vy * jerk.x;
    let s_dot = 2.0 * (vx * ax + vy * ay);
    let rate = c / s;
    let rate_dot = (c_dot * s - c * s_dot) / (s * s);
    Ok((r, E3 * rate, E3 * rate_dot))
}

/// Largest central-difference mismatch of `Ṙ_d = R_d hat(Ω_d)` and
/// `d/dt Ω_d` over the given sample times.
pub fn derivative_audit(command: &dyn PayloadCommand, times: &[f64], h: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in times {
        let (lo, mid, hi) = (command.sample(t - h)?, command.sample(t)?, command.sample(t + h)?);
        let r_dot = (hi.attitude - lo.attitude) / (2.0 * h);
        let w_dot = (hi.angular_velocity - lo.angular_velocity) / (2.0 * h);
        let v = (hi.position - lo.position) / (2.0 * h);
        worst = worst
            .max((r_dot - mid.attitude * hat(&mid.angular_velocity)).norm())
            .max((w_dot - mid.angular_acceleration).norm())
            .max((v - mid.velocity).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn straight_line_frame_is_identity() {
        let (r, w, wd) = tangent_frame_command(&Vec3::x(), &Vec3::zeros(), &Vec3::zeros(), 0.0).unwrap();
        assert!((r - Mat3::identity()).norm() < 1e-15);
        assert_eq!(w, Vec3::zeros());
        assert_eq!(wd, Vec3::zeros());
    }

    #[test]
    fn figure_eight_start() {
        let cmd = TrajectorySpec::figure_eight();
        let s = cmd.sample(0.0).unwrap();
        assert!((s.position - Vec3::new(0.0, 4.2, -0.5)).norm() < 1e-12);
        assert!((s.velocity - Vec3::new(1.2 * 0.4 * PI, 0.0, 0.0)).norm() < 1e-12);
        assert!((s.attitude.column(0) - Vec3::x()).norm() < 1e-12);
        assert!((s.attitude - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn circle_has_constant_heading_rate() {
        let (r, sigma) = (2.0, 0.7);
        let circle = TrajectorySpec {
            x: AxisSpec {
                offset: 0.0,
                terms: vec![SineTerm { amplitude: r, rate: sigma, phase: PI / 2.0 }],
            },
            y: AxisSpec {
                offset: 0.0,
                terms: vec![SineTerm { amplitude: r, rate: sigma, phase: 0.0 }],
            },
            z: AxisSpec::default(),
            attitude: AttitudeSpec::Tangent,
        };
        for k in 0..20 {
            let s = circle.sample(0.37 * k as f64).unwrap();
            assert_relative_eq!(s.angular_velocity.norm(), sigma, epsilon = 1e-12);
            assert!(s.angular_acceleration.norm() < 1e-12);
        }
    }

    #[test]
    fn figure_eight_derivatives_are_consistent() {
        let cmd = TrajectorySpec::figure_eight();
        let times: Vec<f64> = (0..100).map(|k| 0.1 * k as f64 + 0.013).collect();
        assert!(derivative_audit(&cmd, &times, 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn vertical_motion_is_degenerate() {
        let err = tangent_frame_command(&Vec3::new(0.0, 0.0, 1.0), &Vec3::zeros(), &Vec3::zeros(), 1.0);
        assert!(matches!(err, Err(Error::DegenerateTangent { .. })));
        let err = tangent_frame_command(&Vec3::new(1.0, 0.0, 0.5), &Vec3::zeros(), &Vec3::zeros(), 1.0);
        assert!(matches!(err, Err(Error::DegenerateTangent { .. })));
        let err = tangent_frame_command(&Vec3::zeros(), &Vec3::zeros(), &Vec3::zeros(), 1.0);
        assert!(matches!(err, Err(Error::DegenerateTangent { .. })));
    }

    #[test]
    fn spin_command_rate() {
        let cmd = TrajectorySpec {
            x: AxisSpec::default(),
            y: AxisSpec::default(),
            z: AxisSpec::default(),
            attitude: AttitudeSpec::Spin {
                initial: mat_to_rows(&Mat3::identity()),
                rate: [0.0, 0.0, 1.0],
            },
        };
        let times = [0.0, 0.5, 2.0];
        assert!(derivative_audit(&cmd, &times, 1e-5).unwrap() < 1e-8);
    }
}
