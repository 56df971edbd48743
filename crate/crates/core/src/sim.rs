//! Closed-loop and passive simulation runs with fixed-rate telemetry.

use serde::Serialize;

use crate::command::{CommandSample, PayloadCommand};
use crate::control::{ControllerOutput, Model, RateMode, TransportController};
use crate::dynamics::{linear_momentum, quadrotor_positions, step, total_energy};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::model::{ControlInput, RotorCommand, SystemParams, SystemState};
use crate::scenario::{DomainSpec, Scenario, SimOptions};

/// Status bits attached to every telemetry record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    /// Payload or link errors outside the certified domain.
    pub outside_domain: bool,
    pub negative_thrust: bool,
    pub degenerate_tension: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub position: Vec3,
    pub position_error: Vec3,
    /// `½‖R₀ − R₀d‖²_F`
    pub psi0: f64,
    /// `‖e_R₀‖`
    pub attitude_error: f64,
    /// `½‖qᵢ − q_id‖²`
    pub psi_q: Vec<f64>,
    /// `½‖Rᵢ − R_ic‖²_F`; zero for the simplified model.
    pub psi_r: Vec<f64>,
    /// `Tᵢ = −μᵢ·qᵢ`
    pub tension: Vec<f64>,
    /// Thrust magnitudes; `‖uᵢ‖` for the simplified model.
    pub thrust: Vec<f64>,
    /// Body moments; zero for the simplified model.
    pub moment: Vec<Vec3>,
    pub energy: f64,
    pub quad_positions: Vec<Vec3>,
    /// Worst `(|‖q‖−1|, ‖RᵀR−I‖_F, |ω·q|)` over all bodies.
    pub residuals: (f64, f64, f64),
    pub flags: Flags,
}

impl TelemetryRecord {
    pub fn n(&self) -> usize {
        self.psi_q.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub records: usize,
    pub t_end: f64,
    pub final_position_error: f64,
    pub final_psi0: f64,
    pub final_psi_q_max: f64,
    pub max_tension: f64,
    /// Smallest tension after the first second.
    pub min_tension_after_1s: f64,
    pub min_thrust: f64,
    pub max_residual: f64,
    pub outside_domain_records: usize,
    pub negative_thrust_records: usize,
    pub degenerate_tension_records: usize,
    pub aborted: Option<String>,
}

#[derive(Debug)]
pub struct RunResult {
    pub telemetry: Vec<TelemetryRecord>,
    pub summary: Summary,
    pub final_state: SystemState,
    /// Set when the run stopped early; telemetry up to that point is kept.
    pub abort: Option<Error>,
}

/// Snapshot handed to run observers at every telemetry tick.
pub struct Tick<'a> {
    pub state: &'a SystemState,
    pub command: &'a CommandSample,
    pub control: &'a ControllerOutput,
}

/// Everything a closed-loop run needs besides the scenario file.
pub struct RunSetup<'a> {
    pub params: SystemParams,
    pub initial: SystemState,
    pub command: &'a dyn PayloadCommand,
    pub controller: TransportController,
    pub options: SimOptions,
    pub domain: DomainSpec,
}

impl<'a> RunSetup<'a> {
    pub fn from_scenario(scenario: &'a Scenario) -> Result<Self> {
        let params = scenario.params()?;
        let controller = scenario.controller(&params)?;
        Ok(Self {
            initial: scenario.initial_state()?,
            params,
            command: &scenario.command,
            controller,
            options: scenario.sim,
            domain: scenario.domain,
        })
    }
}

pub fn run(scenario: &Scenario) -> Result<RunResult> {
    run_setup(RunSetup::from_scenario(scenario)?, |_| {})
}

fn log_stride(dt: f64, log_rate: f64) -> usize {
    ((1.0 / (log_rate * dt)).round() as usize).max(1)
}

/// Runs the closed loop from `t = 0` to `t_final`, calling `observe` at every
/// telemetry tick.
pub fn run_setup(setup: RunSetup<'_>, mut observe: impl FnMut(&Tick<'_>)) -> Result<RunResult> {
    let RunSetup {
        params,
        initial,
        command,
        mut controller,
        options,
        domain,
    } = setup;
    let dt = options.dt;
    let steps = (options.t_final / dt).round() as usize;
    let stride = log_stride(dt, options.log_rate);
    let divisor = options.control_divisor.max(1) as usize;
    let control_dt = dt * divisor as f64;

    let mut state = initial;
    let mut telemetry = Vec::with_capacity(steps / stride + 2);
    let mut current: Option<ControllerOutput> = None;
    let mut abort = None;

    for k in 0..=steps {
        state.t = k as f64 * dt;
        if k % divisor == 0 || current.is_none() {
            match controller.compute(&params, &state, command, control_dt) {
                Ok(out) => current = Some(out),
                Err(e) => {
                    abort = Some(e);
                    break;
                }
            }
        }
        let out = current.as_ref().expect("controller ran at least once");
        let cmd = &out.command;
        if k % stride == 0 {
            observe(&Tick {
                state: &state,
                command: cmd,
                control: out,
            });
            telemetry.push(record(&params, &state, cmd, out, &domain, controller.model()));
        }
        if k == steps {
            break;
        }
        match step(&params, &state, &out.input, dt) {
            Ok(next) => state = next,
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
    }
    let summary = summarize(&telemetry, abort.as_ref());
    Ok(RunResult {
        telemetry,
        summary,
        final_state: state,
        abort,
    })
}

fn record(
    params: &SystemParams,
    state: &SystemState,
    cmd: &CommandSample,
    out: &ControllerOutput,
    domain: &DomainSpec,
    model: Model,
) -> TelemetryRecord {
    let alloc = &out.allocation;
    let n = params.n();
    let psi_q: Vec<f64> = state
        .agents
        .iter()
        .zip(&alloc.setpoints)
        .map(|(a, sp)| 0.5 * (a.link_dir - sp.q_d).norm_squared())
        .collect();
    let tension = alloc
        .tensions
        .iter()
        .zip(&state.agents)
        .map(|(mu, a)| -mu.dot(&a.link_dir))
        .collect();
    let (psi_r, thrust, moment, negative) = match (model, out.rotor_commands()) {
        (Model::Full, Some(cmds)) => {
            let psi_r = state
                .agents
                .iter()
                .zip(&out.attitude_setpoints)
                .map(|(a, sp)| frobenius_half_sq(&(a.attitude - sp.r_c)))
                .collect();
            let negative = cmds.iter().any(|c| c.thrust < 0.0);
            (
                psi_r,
                cmds.iter().map(|c| c.thrust).collect(),
                cmds.iter().map(|c| c.moment).collect(),
                negative,
            )
        }
        _ => (
            vec![0.0; n],
            out.ideal.iter().map(|u| u.norm()).collect(),
            vec![Vec3::zeros(); n],
            false,
        ),
    };
    let psi_r0_cfg = alloc.errors.psi;
    let outside_domain = alloc.errors.e_x.norm() >= domain.e_x_max
        || psi_r0_cfg >= domain.psi_r0
        || psi_q.iter().any(|p| *p >= domain.psi_q);
    TelemetryRecord {
        t: state.t,
        position: state.position,
        position_error: alloc.errors.e_x,
        psi0: frobenius_half_sq(&(state.attitude - cmd.attitude)),
        attitude_error: alloc.errors.e_r.norm(),
        psi_q,
        psi_r,
        tension,
        thrust,
        moment,
        energy: total_energy(params, state).total,
        quad_positions: quadrotor_positions(params, state),
        residuals: state.constraint_residuals(),
        flags: Flags {
            outside_domain,
            negative_thrust: negative,
            degenerate_tension: alloc.degenerate_tension(),
        },
    }
}

fn frobenius_half_sq(m: &Mat3) -> f64 {
    0.5 * m.norm_squared()
}

/// State at time `t` lying on the commanded motion: payload on the command,
/// links and quadrotors on their setpoints (see [`settle_links`]).
pub fn state_on_command(
    params: &SystemParams,
    controller: &TransportController,
    command: &dyn PayloadCommand,
    t: f64,
) -> Result<SystemState> {
    let cmd = command.sample(t)?;
    let mut state = SystemState::at_rest(cmd.position, params.n());
    state.t = t;
    state.velocity = cmd.velocity;
    state.attitude = cmd.attitude;
    state.angular_velocity = cmd.angular_velocity;
    settle_links(params, controller, command, &mut state)?;
    Ok(state)
}

/// Moves every link onto its desired direction and rate, and every
/// quadrotor onto its commanded attitude, keeping the payload state. The
/// setpoints depend on the link state, so they are iterated to a fixed point.
pub fn settle_links(
    params: &SystemParams,
    controller: &TransportController,
    command: &dyn PayloadCommand,
    state: &mut SystemState,
) -> Result<()> {
    let mut ctl = controller.clone();
    ctl.reset();
    ctl.set_rates(RateMode::Flow);
    for _ in 0..6 {
        let out = ctl.compute(params, state, command, 1e-3)?;
        for (i, a) in state.agents.iter_mut().enumerate() {
            let sp = &out.allocation.setpoints[i];
            a.link_dir = sp.q_d;
            a.link_rate = sp.omega_d;
            if let Some(att) = out.attitude_setpoints.get(i) {
                a.attitude = att.r_c;
                a.body_rate = att.omega_c;
            }
        }
    }
    state.validate(params.n())
}

pub fn summarize(telemetry: &[TelemetryRecord], abort: Option<&Error>) -> Summary {
    let Some(last) = telemetry.last() else {
        return Summary {
            aborted: abort.map(|e| e.to_string()),
            ..Summary::default()
        };
    };
    let fold = |f: &dyn Fn(&TelemetryRecord) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        telemetry.iter().map(f).fold(init, pick)
    };
    Summary {
        records: telemetry.len(),
        t_end: last.t,
        final_position_error: last.position_error.norm(),
        final_psi0: last.psi0,
        final_psi_q_max: last.psi_q.iter().copied().fold(0.0, f64::max),
        max_tension: fold(&|r| r.tension.iter().copied().fold(f64::MIN, f64::max), f64::MIN, f64::max),
        min_tension_after_1s: telemetry
            .iter()
            .filter(|r| r.t >= 1.0)
            .flat_map(|r| r.tension.iter().copied())
            .fold(f64::INFINITY, f64::min),
        min_thrust: fold(&|r| r.thrust.iter().copied().fold(f64::MAX, f64::min), f64::MAX, f64::min),
        max_residual: fold(&|r| r.residuals.0.max(r.residuals.1).max(r.residuals.2), 0.0, f64::max),
        outside_domain_records: telemetry.iter().filter(|r| r.flags.outside_domain).count(),
        negative_thrust_records: telemetry.iter().filter(|r| r.flags.negative_thrust).count(),
        degenerate_tension_records: telemetry.iter().filter(|r| r.flags.degenerate_tension).count(),
        aborted: abort.map(|e| e.to_string()),
    }
}

/// Energy and momentum audit of an unforced run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassiveReport {
    pub dt: f64,
    pub t_final: f64,
    pub initial_energy: f64,
    /// `max |E(t) − E(0)| / |E(0)|`
    pub max_relative_energy_drift: f64,
    /// Largest change of the horizontal momentum components [kg·m/s].
    pub max_horizontal_momentum_drift: f64,
    pub max_residual: f64,
    pub samples: Vec<PassiveSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassiveSample {
    pub t: f64,
    pub energy: f64,
    pub momentum: [f64; 3],
}

/// Integrates with zero thrust and zero moments.
pub fn run_passive(params: &SystemParams, initial: &SystemState, dt: f64, t_final: f64, log_rate: f64) -> Result<PassiveReport> {
    let n = params.n();
    let input = ControlInput::Rotors(vec![
        RotorCommand {
            thrust: 0.0,
            moment: Vec3::zeros()
        };
        n
    ]);
    let steps = (t_final / dt).round() as usize;
    let stride = log_stride(dt, log_rate);
    let mut state = initial.clone();
    state.t = 0.0;
    let e0 = total_energy(params, &state).total;
    let p0 = linear_momentum(params, &state);
    let scale = if e0.abs() > 0.0 { e0.abs() } else { 1.0 };
    let mut report = PassiveReport {
        dt,
        t_final,
        initial_energy: e0,
        max_relative_energy_drift: 0.0,
        max_horizontal_momentum_drift: 0.0,
        max_residual: 0.0,
        samples: Vec::new(),
    };
    for k in 0..=steps {
        let e = total_energy(params, &state).total;
        let p = linear_momentum(params, &state);
        report.max_relative_energy_drift = report.max_relative_energy_drift.max((e - e0).abs() / scale);
        report.max_horizontal_momentum_drift = report
            .max_horizontal_momentum_drift
            .max((p.x - p0.x).abs())
            .max((p.y - p0.y).abs());
        let (a, b, c) = state.constraint_residuals();
        report.max_residual = report.max_residual.max(a).max(b).max(c);
        if k % stride == 0 {
            report.samples.push(PassiveSample {
                t: state.t,
                energy: e,
                momentum: p.into(),
            });
        }
        if k == steps {
            break;
        }
        state = step(params, &state, &input, dt)?;
        state.t = (k + 1) as f64 * dt;
    }
    Ok(report)
}
