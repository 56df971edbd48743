//! Layered transport controller: payload wrench, tension allocation, link
//! direction tracking and the quadrotor attitude loop.

pub mod allocation;
pub mod attitude;
pub(crate) mod flow;
pub mod payload;
pub mod setpoint;

use serde::{Deserialize, Serialize};

use crate::command::{CommandSample, PayloadCommand};
use crate::dynamics::accel_eliminated;
use crate::error::{Error, Result};
use crate::geom::{log_so3, Vec3};
use crate::model::{ControlInput, RotorCommand, SystemParams, SystemState};

use flow::{predict, Motion};

pub use allocation::{build_p, null_directions, resultant, Allocator};
pub use attitude::{AttitudeSetpoint, AttitudeSetpointFilter};
pub use payload::{AllocationResult, PayloadController, PayloadErrors};
pub use setpoint::{LinkSetpoint, LinkSetpointHistory};

/// Controller gains. The first six act on the payload and the links, the
/// last three on the quadrotor attitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub position: f64,
    pub velocity: f64,
    pub payload_attitude: f64,
    pub payload_rate: f64,
    pub link_direction: f64,
    pub link_rate: f64,
    pub attitude: f64,
    pub body_rate: f64,
    /// Time-scale separation of the attitude loop, in `(0, 1]`.
    pub epsilon: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            position: 4.0,
            velocity: 3.0,
            payload_attitude: 10.0,
            payload_rate: 1.0,
            link_direction: 5.0,
            link_rate: 4.0,
            attitude: 1.0,
            body_rate: 0.5,
            epsilon: 0.1,
        }
    }
}

impl GainSet {
    fn named(&self) -> [(&'static str, f64); 9] {
        [
            ("position", self.position),
            ("velocity", self.velocity),
            ("payload_attitude", self.payload_attitude),
            ("payload_rate", self.payload_rate),
            ("link_direction", self.link_direction),
            ("link_rate", self.link_rate),
            ("attitude", self.attitude),
            ("body_rate", self.body_rate),
            ("epsilon", self.epsilon),
        ]
    }

    /// Strict check: every gain positive and `ε ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    /// Like [`validate`](Self::validate) but tolerates zero feedback gains,
    /// for deliberately degraded experiments. `ε` must still be in `(0, 1]`.
    pub fn validate_allowing_zero(&self) -> Result<()> {
        self.validate_with(true)
    }

    fn validate_with(&self, allow_zero: bool) -> Result<()> {
        for (name, k) in self.named() {
            let ok = if allow_zero && name != "epsilon" { k >= 0.0 } else { k > 0.0 };
            if !ok || !k.is_finite() {
                let bound = if allow_zero && name != "epsilon" { "≥ 0" } else { "> 0" };
                return Err(Error::Validation(format!("gain {name} {bound} (got {k})")));
            }
        }
        if self.epsilon > 1.0 {
            return Err(Error::Validation(format!("gain epsilon ≤ 1 (got {})", self.epsilon)));
        }
        Ok(())
    }

    pub fn has_zero(&self) -> bool {
        self.named().iter().any(|(_, k)| *k == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Quadrotors apply their ideal force directly.
    Simplified,
    /// Quadrotors are underactuated and tilt to align thrust.
    #[default]
    Full,
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplified" => Ok(Model::Simplified),
            "full" => Ok(Model::Full),
            other => Err(Error::Validation(format!("unknown model '{other}' (simplified | full)"))),
        }
    }
}

/// How setpoint rates (`q̇_id`, `ω_id`, `ω̇_id`, `Ω_ic`, `Ω̇_ic`) are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Central differences along a short prediction of the closed-loop flow
    /// from the current state. Memoryless and exact up to `O(h²)`.
    #[default]
    Flow,
    /// Backward differences across controller ticks, zero until the history
    /// fills.
    History,
}

impl std::str::FromStr for RateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(RateMode::Flow),
            "history" => Ok(RateMode::History),
            other => Err(Error::Validation(format!("unknown rate mode '{other}' (flow | history)"))),
        }
    }
}

/// One tick of the complete controller.
#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub command: CommandSample,
    pub input: ControlInput,
    pub allocation: AllocationResult,
    /// Ideal forces `uᵢ` the attitude loop tries to realise.
    pub ideal: Vec<Vec3>,
    /// Empty for the simplified model.
    pub attitude_setpoints: Vec<AttitudeSetpoint>,
}

impl ControllerOutput {
    pub fn rotor_commands(&self) -> Option<&[RotorCommand]> {
        match &self.input {
            ControlInput::Rotors(c) => Some(c),
            ControlInput::Forces(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportController {
    payload: PayloadController,
    filters: Vec<AttitudeSetpointFilter>,
    model: Model,
    /// Heading reference `b₁ᵢ` for each quadrotor.
    pub headings: Vec<Vec3>,
    /// Clamp negative thrust to zero.
    pub clamp_thrust: bool,
}

impl TransportController {
    pub fn new(params: &SystemParams, gains: GainSet, model: Model) -> Result<Self> {
        Ok(Self {
            payload: PayloadController::new(params, gains)?,
            filters: vec![AttitudeSetpointFilter::new(); params.n()],
            model,
            headings: vec![Vec3::x(); params.n()],
            clamp_thrust: false,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn gains(&self) -> &GainSet {
        self.payload.gains()
    }

    pub fn payload(&self) -> &PayloadController {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut PayloadController {
        &mut self.payload
    }

    pub fn rates(&self) -> RateMode {
        self.payload.rates
    }

    /// Selects the rate scheme of both the link and the attitude setpoints.
    pub fn set_rates(&mut self, rates: RateMode) {
        self.payload.rates = rates;
    }

    pub fn reset(&mut self) {
        self.payload.reset();
        self.filters.iter_mut().for_each(AttitudeSetpointFilter::reset);
    }

    /// One controller tick at `state.t`; `dt` is the tick period.
    pub fn compute(
        &mut self,
        params: &SystemParams,
        state: &SystemState,
        command: &dyn PayloadCommand,
        dt: f64,
    ) -> Result<ControllerOutput> {
        let cmd = command.sample(state.t)?;
        let allocation = self.payload.ideal_forces(params, state, command, dt)?;
        let ideal = allocation.forces();
        if self.model == Model::Simplified {
            return Ok(ControllerOutput {
                command: cmd,
                input: ControlInput::Forces(ideal.clone()),
                allocation,
                ideal,
                attitude_setpoints: Vec::new(),
            });
        }
        let setpoints = match self.payload.rates {
            RateMode::Flow => self.flow_attitude_setpoints(params, state, command, &ideal)?,
            RateMode::History => {
                let mut sp = Vec::with_capacity(params.n());
                for (i, u) in ideal.iter().enumerate() {
                    sp.push(self.filters[i].update(i + 1, u, &self.headings[i], dt)?);
                }
                sp
            }
        };
        let gains = *self.payload.gains();
        let rotors = setpoints
            .iter()
            .zip(&ideal)
            .zip(&state.agents)
            .zip(&params.agents)
            .map(|(((sp, u), agent), p)| {
                let mut c = attitude::rotor_command(agent, sp, &gains, &p.inertia, u);
                if self.clamp_thrust {
                    c.thrust = c.thrust.max(0.0);
                }
                c
            })
            .collect();
        Ok(ControllerOutput {
            command: cmd,
            input: ControlInput::Rotors(rotors),
            allocation,
            ideal,
            attitude_setpoints: setpoints,
        })
    }

    /// `Ω_ic` and `Ω̇_ic` from the commanded attitudes at `t` and `t ± h`,
    /// where the states at `t ± h` are predicted under the ideal forces.
    fn flow_attitude_setpoints(
        &self,
        params: &SystemParams,
        state: &SystemState,
        command: &dyn PayloadCommand,
        ideal: &[Vec3],
    ) -> Result<Vec<AttitudeSetpoint>> {
        let h = self.payload.derivative_step;
        let forces = |s: &SystemState| -> Result<Vec<Vec3>> { Ok(self.payload.evaluate(params, s, command)?.forces()) };
        let accel = |s: &SystemState, u: Vec<Vec3>| accel_eliminated(params, s, &ControlInput::Forces(u));

        let a0 = accel(state, ideal.to_vec())?;
        let first = Motion {
            accel: a0.linear,
            angular_accel: a0.angular,
            links: a0.link.iter().map(|w| (*w, Vec3::zeros())).collect(),
            ..Motion::default()
        };
        let (s_p, s_m) = (predict(state, &first, h), predict(state, &first, -h));
        let a_p = accel(&s_p, forces(&s_p)?)?;
        let a_m = accel(&s_m, forces(&s_m)?)?;
        let d = |p: &Vec3, m: &Vec3| (p - m) / (2.0 * h);
        let second = Motion {
            accel: a0.linear,
            jerk: d(&a_p.linear, &a_m.linear),
            angular_accel: a0.angular,
            angular_jerk: d(&a_p.angular, &a_m.angular),
            links: (0..params.n()).map(|i| (a0.link[i], d(&a_p.link[i], &a_m.link[i]))).collect(),
        };
        let u_p = forces(&predict(state, &second, h))?;
        let u_m = forces(&predict(state, &second, -h))?;

        (0..params.n())
            .map(|i| {
                let b1 = &self.headings[i];
                let r_c = attitude::commanded_attitude(i + 1, &ideal[i], b1)?;
                let r_p = attitude::commanded_attitude(i + 1, &u_p[i], b1)?;
                let r_m = attitude::commanded_attitude(i + 1, &u_m[i], b1)?;
                let w_p = log_so3(&(r_c.transpose() * r_p)) / h;
                let w_m = log_so3(&(r_m.transpose() * r_c)) / h;
                Ok(AttitudeSetpoint {
                    r_c,
                    omega_c: (w_p + w_m) * 0.5,
                    omega_c_dot: (w_p - w_m) / h,
                    b3: r_c.column(2).into_owned(),
                    b1: *b1,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_gains_validate() {
        assert!(GainSet::default().validate().is_ok());
        let g = GainSet {
            link_direction: 0.0,
            ..GainSet::default()
        };
        assert!(g.validate().unwrap_err().to_string().contains("link_direction"));
        assert!(g.validate_allowing_zero().is_ok());
        let g = GainSet {
            epsilon: 1.5,
            ..GainSet::default()
        };
        assert!(g.validate_allowing_zero().is_err());
    }
}
