//! Payload tracking through link tensions, for quadrotors modelled as
//! ideal force sources.

use crate::command::{CommandSample, PayloadCommand};
use crate::error::{Error, Result};
use crate::geom::{attitude_error, hat, link_error, Mat3, Vec3, E3};
use crate::model::{AgentState, SystemParams, SystemState};

use super::allocation::Allocator;
use super::flow::{predict, Motion};
use super::setpoint::{LinkSetpoint, LinkSetpointHistory, MIN_TENSION};
use super::{GainSet, RateMode};

/// Default half-width of the setpoint differences along the predicted flow [s].
pub const DEFAULT_DERIVATIVE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadErrors {
    pub e_x: Vec3,
    pub e_v: Vec3,
    pub e_r: Vec3,
    pub e_omega: Vec3,
    /// `½ tr(I − R_{0d}ᵀR₀)`
    pub psi: f64,
}

pub fn payload_errors(state: &SystemState, cmd: &CommandSample) -> PayloadErrors {
    let att = attitude_error(&state.attitude, &cmd.attitude, &state.angular_velocity, &cmd.angular_velocity);
    PayloadErrors {
        e_x: state.position - cmd.position,
        e_v: state.velocity - cmd.velocity,
        e_r: att.e_r,
        e_omega: att.e_omega,
        psi: att.psi,
    }
}

/// Desired resultant force `F_d` (inertial) and moment `M_d` (payload body
/// frame) acting on the payload through the links.
pub fn desired_wrench(
    errors: &PayloadErrors,
    cmd: &CommandSample,
    params: &SystemParams,
    gains: &GainSet,
    r0: &Mat3,
) -> (Vec3, Vec3) {
    let m0 = params.payload_mass;
    let j0 = params.payload_inertia;
    let force = m0
        * (-gains.position * errors.e_x - gains.velocity * errors.e_v + cmd.acceleration
            - params.gravity_vector());
    let rel = r0.transpose() * cmd.attitude;
    let w = rel * cmd.angular_velocity;
    let moment = -gains.payload_attitude * errors.e_r - gains.payload_rate * errors.e_omega
        + w.cross(&(j0 * w))
        + j0 * rel * cmd.angular_acceleration;
    (force, moment)
}

fn inverse_inertia(j0: &Mat3) -> Mat3 {
    j0.try_inverse().expect("payload inertia is validated positive-definite")
}

/// Payload accelerations `(ẍ₀, Ω̇₀)` when only the tensions `μⱼ` and gravity
/// act on it.
pub fn payload_accel(params: &SystemParams, state: &SystemState, tensions: &[Vec3]) -> (Vec3, Vec3) {
    let r0 = state.attitude;
    let w = state.angular_velocity;
    let j0 = params.payload_inertia;
    let total: Vec3 = tensions.iter().sum();
    let moment: Vec3 = params
        .agents
        .iter()
        .zip(tensions)
        .map(|(a, mu)| a.attachment.cross(&(r0.transpose() * mu)))
        .sum();
    let linear = total / params.payload_mass + params.gravity_vector();
    (linear, inverse_inertia(&j0) * (moment - w.cross(&(j0 * w))))
}

/// Acceleration of each attachment point relative to gravity, predicted from
/// the tensions `μⱼ` acting on the payload.
pub fn link_attachment_accel(params: &SystemParams, state: &SystemState, tensions: &[Vec3]) -> Vec<Vec3> {
    let r0 = state.attitude;
    let w_hat = hat(&state.angular_velocity);
    let (linear, angular) = payload_accel(params, state, tensions);
    let rel = linear - params.gravity_vector();
    params
        .agents
        .iter()
        .map(|a| rel + r0 * w_hat * w_hat * a.attachment + r0 * angular.cross(&a.attachment))
        .collect()
}

/// Link-parallel part of the ideal quadrotor force.
pub fn control_parallel(agent: &AgentState, mu: &Vec3, accel: &Vec3, mass: f64, length: f64) -> Vec3 {
    let q = agent.link_dir;
    mu + q * (mass * length * agent.link_rate.norm_squared()) + q * (mass * q.dot(accel))
}

/// Link-normal part of the ideal quadrotor force, steering `qᵢ` to `q_id`.
pub fn control_normal(
    agent: &AgentState,
    setpoint: &LinkSetpoint,
    accel: &Vec3,
    gains: &GainSet,
    mass: f64,
    length: f64,
) -> Vec3 {
    let q = agent.link_dir;
    let q_hat = hat(&q);
    let q_hat2 = q_hat * q_hat;
    let err = link_error(&q, &setpoint.q_d, &agent.link_rate, &setpoint.omega_d);
    let q_dot = agent.link_rate.cross(&q);
    let inner = -gains.link_direction * err.e_q
        - gains.link_rate * err.e_omega
        - q_dot * q.dot(&setpoint.omega_d)
        - q_hat2 * setpoint.omega_d_dot;
    q_hat * inner * (mass * length) - q_hat2 * accel * mass
}

/// Everything the payload controller computed at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub errors: PayloadErrors,
    pub force: Vec3,
    pub moment: Vec3,
    /// Unconstrained desired tensions `μ_id`.
    pub desired_tensions: Vec<Vec3>,
    /// Tensions projected on the current links, `μᵢ = qᵢqᵢᵀμ_id`.
    pub tensions: Vec<Vec3>,
    pub setpoints: Vec<LinkSetpoint>,
    pub attachment_accel: Vec<Vec3>,
    pub parallel: Vec<Vec3>,
    pub normal: Vec<Vec3>,
}

impl AllocationResult {
    /// Ideal quadrotor forces `uᵢ = uᵢ∥ + uᵢ⊥`.
    pub fn forces(&self) -> Vec<Vec3> {
        self.parallel.iter().zip(&self.normal).map(|(a, b)| a + b).collect()
    }

    pub fn degenerate_tension(&self) -> bool {
        self.setpoints.iter().any(|s| s.degenerate)
    }
}

/// Stateful payload controller. In [`RateMode::Flow`] it is memoryless apart
/// from the last valid link direction held through vanishing tension.
#[derive(Debug, Clone)]
pub struct PayloadController {
    allocator: Allocator,
    gains: GainSet,
    histories: Vec<LinkSetpointHistory>,
    held: Vec<Option<Vec3>>,
    /// Feed `μ_jd` rather than the projected `μⱼ` into the attachment
    /// acceleration.
    pub accel_from_desired: bool,
    pub rates: RateMode,
    /// Half-width of the central differences along the predicted flow [s].
    pub derivative_step: f64,
}

impl PayloadController {
    pub fn new(params: &SystemParams, gains: GainSet) -> Result<Self> {
        let allocator = Allocator::new(&params.attachments())?;
        Ok(Self {
            allocator,
            gains,
            histories: vec![LinkSetpointHistory::new(); params.n()],
            held: vec![None; params.n()],
            accel_from_desired: false,
            rates: RateMode::default(),
            derivative_step: DEFAULT_DERIVATIVE_STEP,
        })
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    pub fn allocator(&self) -> &Allocator {
        &self.allocator
    }

    pub fn reset(&mut self) {
        self.histories.iter_mut().for_each(LinkSetpointHistory::reset);
        self.held.iter_mut().for_each(|h| *h = None);
    }

    /// Unconstrained desired tensions `μ_id` for one payload state.
    pub fn desired_tensions(&self, params: &SystemParams, state: &SystemState, cmd: &CommandSample) -> Vec<Vec3> {
        let errors = payload_errors(state, cmd);
        let (force, moment) = desired_wrench(&errors, cmd, params, &self.gains, &state.attitude);
        self.allocator.allocate(&state.attitude, &force, &moment)
    }

    /// Link setpoints differentiated along the reduced payload flow: the
    /// payload is predicted to `t ± h` under the current tensions and the
    /// desired directions are differenced centrally. `fallback[i]` is used
    /// when the current desired tension vanishes.
    pub fn flow_setpoints(
        &self,
        params: &SystemParams,
        state: &SystemState,
        command: &dyn PayloadCommand,
        desired: &[Vec3],
        fallback: &[Vec3],
    ) -> Result<Vec<LinkSetpoint>> {
        let h = self.derivative_step;
        let t = state.t;
        let tensions = project(state, desired);
        let (accel, angular_accel) = payload_accel(params, state, &tensions);
        let (cmd_p, cmd_m) = (command.sample(t + h)?, command.sample(t - h)?);
        let first = Motion {
            accel,
            angular_accel,
            ..Motion::default()
        };
        let mu_p = self.desired_tensions(params, &predict(state, &first, h), &cmd_p);
        let mu_m = self.desired_tensions(params, &predict(state, &first, -h), &cmd_m);

        let r0 = state.attitude;
        let w0 = state.angular_velocity;
        let j0 = params.payload_inertia;
        let mut jerk = Vec3::zeros();
        let mut torque_rate = Vec3::zeros();
        for (i, (a, p)) in state.agents.iter().zip(&params.agents).enumerate() {
            let q = a.link_dir;
            let q_dot = a.link_rate.cross(&q);
            let mu_d_dot = (mu_p[i] - mu_m[i]) / (2.0 * h);
            let mu_dot = q_dot * q.dot(&desired[i]) + q * q_dot.dot(&desired[i]) + q * q.dot(&mu_d_dot);
            jerk += mu_dot / params.payload_mass;
            torque_rate += p.attachment.cross(&(r0.transpose() * mu_dot - w0.cross(&(r0.transpose() * tensions[i]))));
        }
        let angular_jerk = inverse_inertia(&j0)
            * (torque_rate - angular_accel.cross(&(j0 * w0)) - w0.cross(&(j0 * angular_accel)));
        let second = Motion {
            accel,
            jerk,
            angular_accel,
            angular_jerk,
            links: Vec::new(),
        };
        let mu_p = self.desired_tensions(params, &predict(state, &second, h), &cmd_p);
        let mu_m = self.desired_tensions(params, &predict(state, &second, -h), &cmd_m);

        Ok((0..params.n())
            .map(|i| {
                let norms = [desired[i].norm(), mu_p[i].norm(), mu_m[i].norm()];
                if !(norms[0] >= MIN_TENSION) {
                    return LinkSetpoint::held(fallback[i]);
                }
                let q_d = -desired[i] / norms[0];
                if !(norms[1] >= MIN_TENSION && norms[2] >= MIN_TENSION) {
                    return LinkSetpoint {
                        degenerate: true,
                        ..LinkSetpoint::held(q_d)
                    };
                }
                let (q_p, q_m) = (-mu_p[i] / norms[1], -mu_m[i] / norms[2]);
                let q_d_dot = (q_p - q_m) / (2.0 * h);
                let q_d_ddot = (q_p - q_d * 2.0 + q_m) / (h * h);
                LinkSetpoint {
                    q_d,
                    q_d_dot,
                    omega_d: q_d.cross(&q_d_dot),
                    omega_d_dot: q_d.cross(&q_d_ddot),
                    degenerate: false,
                }
            })
            .collect())
    }

    /// Ideal forces at an arbitrary state without touching any history.
    /// Vanishing tensions fall back to the current link direction.
    pub fn evaluate(
        &self,
        params: &SystemParams,
        state: &SystemState,
        command: &dyn PayloadCommand,
    ) -> Result<AllocationResult> {
        self.check_len(state)?;
        let cmd = command.sample(state.t)?;
        let errors = payload_errors(state, &cmd);
        let (force, moment) = desired_wrench(&errors, &cmd, params, &self.gains, &state.attitude);
        let desired = self.allocator.allocate(&state.attitude, &force, &moment);
        let fallback: Vec<Vec3> = state.agents.iter().map(|a| a.link_dir).collect();
        let setpoints = self.flow_setpoints(params, state, command, &desired, &fallback)?;
        Ok(self.assemble(params, state, errors, force, moment, desired, setpoints))
    }

    /// One controller tick at `state.t`; `dt` is the tick period, used only
    /// by [`RateMode::History`].
    pub fn ideal_forces(
        &mut self,
        params: &SystemParams,
        state: &SystemState,
        command: &dyn PayloadCommand,
        dt: f64,
    ) -> Result<AllocationResult> {
        self.check_len(state)?;
        let cmd = command.sample(state.t)?;
        let errors = payload_errors(state, &cmd);
        let (force, moment) = desired_wrench(&errors, &cmd, params, &self.gains, &state.attitude);
        let desired = self.allocator.allocate(&state.attitude, &force, &moment);
        let setpoints = match self.rates {
            RateMode::History => desired
                .iter()
                .zip(self.histories.iter_mut())
                .map(|(mu, h)| h.update(mu, dt, &E3))
                .collect(),
            RateMode::Flow => {
                let fallback: Vec<Vec3> = self.held.iter().map(|h| h.unwrap_or(E3)).collect();
                let sp = self.flow_setpoints(params, state, command, &desired, &fallback)?;
                for (h, s) in self.held.iter_mut().zip(&sp) {
                    *h = Some(s.q_d);
                }
                sp
            }
        };
        Ok(self.assemble(params, state, errors, force, moment, desired, setpoints))
    }

    fn check_len(&self, state: &SystemState) -> Result<()> {
        if state.agents.len() != self.histories.len() {
            return Err(Error::DimensionMismatch {
                expected: self.histories.len(),
                got: state.agents.len(),
            });
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        params: &SystemParams,
        state: &SystemState,
        errors: PayloadErrors,
        force: Vec3,
        moment: Vec3,
        desired: Vec<Vec3>,
        setpoints: Vec<LinkSetpoint>,
    ) -> AllocationResult {
        let tensions = project(state, &desired);
        let source = if self.accel_from_desired { &desired } else { &tensions };
        let accel = link_attachment_accel(params, state, source);
        let mut parallel = Vec::with_capacity(params.n());
        let mut normal = Vec::with_capacity(params.n());
        for (i, (p, a)) in params.agents.iter().zip(&state.agents).enumerate() {
            parallel.push(control_parallel(a, &tensions[i], &accel[i], p.mass, p.link_length));
            normal.push(control_normal(a, &setpoints[i], &accel[i], &self.gains, p.mass, p.link_length));
        }
        AllocationResult {
            errors,
            force,
            moment,
            desired_tensions: desired,
            tensions,
            setpoints,
            attachment_accel: accel,
            parallel,
            normal,
        }
    }
}

/// `μᵢ = qᵢqᵢᵀμ_id`
fn project(state: &SystemState, desired: &[Vec3]) -> Vec<Vec3> {
    desired
        .iter()
        .zip(&state.agents)
        .map(|(mu, a)| a.link_dir * a.link_dir.dot(mu))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::exp_so3;
    use crate::model::{box_inertia, AgentParams};

    fn params() -> SystemParams {
        let rho = [
            Vec3::new(0.5, 0.0, -0.1),
            Vec3::new(-0.5, 0.4, -0.1),
            Vec3::new(-0.5, -0.4, -0.1),
        ];
        SystemParams {
            payload_mass: 1.5,
            payload_inertia: box_inertia(1.5, [1.0, 0.8, 0.2]),
            agents: rho
                .iter()
                .map(|r| AgentParams {
                    mass: 0.755,
                    inertia: Mat3::from_diagonal(&Vec3::new(0.082, 0.0845, 0.1377)),
                    link_length: 1.0,
                    attachment: *r,
                })
                .collect(),
            gravity: 9.81,
        }
    }

    fn agent(q: Vec3, w: Vec3) -> AgentState {
        AgentState {
            link_dir: q,
            link_rate: w,
            ..AgentState::hanging()
        }
    }

    #[test]
    fn errors_on_command() {
        let s = SystemState::at_rest(Vec3::new(1.0, 2.0, 3.0), 3);
        let mut c = CommandSample::hover(s.position);
        let e = payload_errors(&s, &c);
        assert_eq!(e.e_x, Vec3::zeros());
        assert_eq!(e.e_r, Vec3::zeros());
        c.position -= Vec3::x();
        assert_eq!(payload_errors(&s, &c).e_x, Vec3::x());
        let mut s2 = s.clone();
        s2.attitude = exp_so3(&Vec3::new(0.0, 0.0, 0.1));
        let e = payload_errors(&s2, &CommandSample::hover(s.position));
        assert!((e.e_r - Vec3::new(0.0, 0.0, 0.1f64.sin())).norm() < 1e-15);
    }

    #[test]
    fn hover_wrench() {
        let p = params();
        let s = SystemState::at_rest(Vec3::zeros(), 3);
        let c = CommandSample::hover(Vec3::zeros());
        let e = payload_errors(&s, &c);
        let (f, m) = desired_wrench(&e, &c, &p, &GainSet::default(), &s.attitude);
        assert!((f - Vec3::new(0.0, 0.0, -14.715)).norm() < 1e-12);
        assert_eq!(m, Vec3::zeros());

        let mut e = e;
        e.e_x = Vec3::x();
        let g = GainSet {
            position: 2.0,
            ..GainSet::default()
        };
        let (f, _) = desired_wrench(&e, &c, &p, &g, &s.attitude);
        assert!((f - Vec3::new(-2.0, 0.0, -9.81) * 1.5).norm() < 1e-12);
    }

    #[test]
    fn spinning_command_feedforward() {
        let p = params();
        let s = SystemState::at_rest(Vec3::zeros(), 3);
        let mut c = CommandSample::hover(Vec3::zeros());
        c.angular_velocity = E3;
        let mut st = s.clone();
        st.angular_velocity = E3;
        let e = payload_errors(&st, &c);
        let (_, m) = desired_wrench(&e, &c, &p, &GainSet::default(), &st.attitude);
        assert!((m - E3.cross(&(p.payload_inertia * E3))).norm() < 1e-15);
    }

    #[test]
    fn attachment_accel_cases() {
        let p = params();
        let mut s = SystemState::at_rest(Vec3::zeros(), 3);
        let zero = vec![Vec3::zeros(); 3];
        assert!(link_attachment_accel(&p, &s, &zero).iter().all(|a| a.norm() == 0.0));
        s.angular_velocity = E3;
        let a = link_attachment_accel(&p, &s, &zero);
        assert!((a[0] - Vec3::new(-0.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn parallel_component() {
        let w = Vec3::new(2.0, 0.0, 0.0);
        let u = control_parallel(&agent(E3, w), &Vec3::zeros(), &Vec3::zeros(), 0.755, 1.0);
        assert!((u - E3 * 3.02).norm() < 1e-14);
        let u = control_parallel(&agent(E3, Vec3::zeros()), &Vec3::zeros(), &Vec3::x(), 0.755, 1.0);
        assert_eq!(u, Vec3::zeros());
    }

    #[test]
    fn normal_component() {
        let g = GainSet {
            link_direction: 1.0,
            ..GainSet::default()
        };
        let sp = LinkSetpoint {
            q_d: Vec3::x(),
            q_d_dot: Vec3::zeros(),
            omega_d: Vec3::zeros(),
            omega_d_dot: Vec3::zeros(),
            degenerate: false,
        };
        let u = control_normal(&agent(E3, Vec3::zeros()), &sp, &Vec3::zeros(), &g, 1.0, 1.0);
        assert!((u - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn on_target_links_deliver_the_wrench() {
        let p = params();
        let mut ctl = PayloadController::new(&p, GainSet::default()).unwrap();
        let mut s = SystemState::at_rest(Vec3::new(0.2, -0.1, 0.3), 3);
        s.attitude = exp_so3(&Vec3::new(0.1, -0.05, 0.2));
        s.angular_velocity = Vec3::new(0.1, 0.2, -0.3);
        let c = CommandSample::hover(Vec3::zeros());
        let first = ctl.ideal_forces(&p, &s, &c, 1e-3).unwrap();
        for (a, sp) in s.agents.iter_mut().zip(&first.setpoints) {
            a.link_dir = sp.q_d;
        }
        ctl.reset();
        let r = ctl.ideal_forces(&p, &s, &c, 1e-3).unwrap();
        let (f, m) = super::super::allocation::resultant(&p.attachments(), &s.attitude, &r.tensions);
        assert!((f - r.force).norm() < 1e-10 * (1.0 + r.force.norm()));
        assert!((m - r.moment).norm() < 1e-10 * (1.0 + r.moment.norm()));
        for ((par, nor), a) in r.parallel.iter().zip(&r.normal).zip(&s.agents) {
            assert!(par.cross(&a.link_dir).norm() <= 1e-12 * par.norm());
            assert!(nor.dot(&a.link_dir).abs() <= 1e-12 * nor.norm().max(1.0));
        }
        for (mu, sp) in r.desired_tensions.iter().zip(&r.setpoints) {
            assert!((mu.dot(&sp.q_d) + mu.norm()).abs() < 1e-12);
        }
    }
}
