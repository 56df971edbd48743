//! Scenario files: physics, initial state, command, gains and run options.
//!
//! TOML is the primary format; files ending in `.json` are read as JSON with
//! the same schema. Unknown keys are rejected.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::command::{mat_from_rows, mat_to_rows, PayloadCommand, TrajectorySpec};
use crate::control::payload::DEFAULT_DERIVATIVE_STEP;
use crate::control::{GainSet, Model, RateMode, TransportController};
use crate::error::{Error, Result};
use crate::geom::{exp_so3, hat, Mat3, Vec3};
use crate::model::{box_inertia, AgentParams, AgentState, SystemParams, SystemState};

pub const SCHEMA_VERSION: u32 = 1;

type Rows = [[f64; 3]; 3];

const IDENTITY: Rows = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub physics: PhysicsSpec,
    pub initial: InitialSpec,
    pub command: TrajectorySpec,
    #[serde(default)]
    pub gains: GainSet,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSpec {
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub payload_mass: f64,
    /// Payload inertia about its centre of mass; give this or `payload_box`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_inertia: Option<Rows>,
    /// Edge lengths of a uniform box whose inertia is used for the payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_box: Option<[f64; 3]>,
    pub agents: Vec<AgentSpec>,
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub mass: f64,
    pub inertia: Rows,
    pub link_length: f64,
    pub attachment: [f64; 3],
    /// Heading reference `b₁` for the attitude loop.
    #[serde(default = "default_heading")]
    pub heading: [f64; 3],
}

fn default_heading() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Start on the commanded motion at `t = 0`: payload on the command,
    /// links and quadrotors on their setpoints. The explicit state fields
    /// must then be left out.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub on_command: bool,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default = "identity")]
    pub attitude: Rows,
    #[serde(default)]
    pub angular_velocity: [f64; 3],
    /// Per-agent initial state; when empty every link hangs straight down
    /// with a level, resting quadrotor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<InitialAgent>,
    /// Seeded random offsets added on top of the state above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

fn identity() -> Rows {
    IDENTITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialAgent {
    pub link_dir: [f64; 3],
    #[serde(default)]
    pub link_rate: [f64; 3],
    #[serde(default = "identity")]
    pub attitude: Rows,
    #[serde(default)]
    pub body_rate: [f64; 3],
}

/// Bounds on random initial offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Largest payload position offset [m].
    #[serde(default)]
    pub position: f64,
    /// Largest payload rotation angle [rad].
    #[serde(default)]
    pub attitude: f64,
    /// Largest link tilt angle [rad].
    #[serde(default)]
    pub link: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Controller runs once every this many integration steps.
    pub control_divisor: u32,
    pub model: Model,
    /// Telemetry rate [Hz].
    pub log_rate: f64,
    pub seed: u64,
    pub clamp_thrust: bool,
    /// Use the unprojected desired tensions in the attachment acceleration.
    pub accel_from_desired: bool,
    pub rates: RateMode,
    /// Half-width of the flow differences [s].
    pub derivative_step: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 10.0,
            control_divisor: 1,
            model: Model::Full,
            log_rate: 100.0,
            seed: 0,
            clamp_thrust: false,
            accel_from_desired: false,
            rates: RateMode::Flow,
            derivative_step: DEFAULT_DERIVATIVE_STEP,
        }
    }
}

// Field-wise defaults so a partial [sim] table is accepted.
impl SimOptions {
    fn fill(partial: SimOptionsPartial) -> Self {
        let d = Self::default();
        Self {
            dt: partial.dt.unwrap_or(d.dt),
            t_final: partial.t_final.unwrap_or(d.t_final),
            control_divisor: partial.control_divisor.unwrap_or(d.control_divisor),
            model: partial.model.unwrap_or(d.model),
            log_rate: partial.log_rate.unwrap_or(d.log_rate),
            seed: partial.seed.unwrap_or(d.seed),
            clamp_thrust: partial.clamp_thrust.unwrap_or(d.clamp_thrust),
            accel_from_desired: partial.accel_from_desired.unwrap_or(d.accel_from_desired),
            rates: partial.rates.unwrap_or(d.rates),
            derivative_step: partial.derivative_step.unwrap_or(d.derivative_step),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimOptionsPartial {
    dt: Option<f64>,
    t_final: Option<f64>,
    control_divisor: Option<u32>,
    model: Option<Model>,
    log_rate: Option<f64>,
    seed: Option<u64>,
    clamp_thrust: Option<bool>,
    accel_from_desired: Option<bool>,
    rates: Option<RateMode>,
    derivative_step: Option<f64>,
}

/// Error domain used for certification and the out-of-domain telemetry flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub e_x_max: f64,
    pub psi_r0: f64,
    pub psi_q: f64,
    /// Quadrotor attitude bound for the inner-loop certificate, in `(0, 2)`.
    #[serde(default = "default_psi_r")]
    pub psi_r: f64,
}

fn default_psi_r() -> f64 {
    1.0
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.e_x_max > 0.0 && self.e_x_max.is_finite() && open_unit(self.psi_r0) && open_unit(self.psi_q)) {
            return Err(Error::Validation(format!(
                "domain requires e_x_max > 0 and psi_r0, psi_q in (0, 1) (got {}, {}, {})",
                self.e_x_max, self.psi_r0, self.psi_q
            )));
        }
        if !(self.psi_r > 0.0 && self.psi_r < 2.0) {
            return Err(Error::Validation(format!("domain psi_r in (0, 2) (got {})", self.psi_r)));
        }
        Ok(())
    }
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            e_x_max: 0.5,
            psi_r0: 0.1,
            psi_q: 0.05,
            psi_r: default_psi_r(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    pub csv: bool,
    pub plots: bool,
    pub paths: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            csv: true,
            plots: true,
            paths: true,
        }
    }
}

/// Parses the raw document, applying field-wise defaults for `[sim]`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    #[serde(default)]
    name: String,
    physics: PhysicsSpec,
    initial: InitialSpec,
    command: TrajectorySpec,
    #[serde(default)]
    gains: Option<GainsPartial>,
    #[serde(default)]
    sim: Option<SimOptionsPartial>,
    #[serde(default)]
    domain: Option<DomainSpec>,
    #[serde(default)]
    output: Option<OutputOptions>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsPartial {
    position: Option<f64>,
    velocity: Option<f64>,
    payload_attitude: Option<f64>,
    payload_rate: Option<f64>,
    link_direction: Option<f64>,
    link_rate: Option<f64>,
    attitude: Option<f64>,
    body_rate: Option<f64>,
    epsilon: Option<f64>,
}

impl GainsPartial {
    fn fill(self) -> GainSet {
        let d = GainSet::default();
        GainSet {
            position: self.position.unwrap_or(d.position),
            velocity: self.velocity.unwrap_or(d.velocity),
            payload_attitude: self.payload_attitude.unwrap_or(d.payload_attitude),
            payload_rate: self.payload_rate.unwrap_or(d.payload_rate),
            link_direction: self.link_direction.unwrap_or(d.link_direction),
            link_rate: self.link_rate.unwrap_or(d.link_rate),
            attitude: self.attitude.unwrap_or(d.attitude),
            body_rate: self.body_rate.unwrap_or(d.body_rate),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
        }
    }
}

impl From<RawScenario> for Scenario {
    fn from(r: RawScenario) -> Self {
        Scenario {
            schema_version: r.schema_version,
            name: r.name,
            physics: r.physics,
            initial: r.initial,
            command: r.command,
            gains: r.gains.map(GainsPartial::fill).unwrap_or_default(),
            sim: r.sim.map(SimOptions::fill).unwrap_or_default(),
            domain: r.domain.unwrap_or_default(),
            output: r.output.unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let scenario = parse_scenario(&text, Format::from_path(path), &path.display().to_string())?;
    scenario.validate()?;
    Ok(scenario)
}

/// Parses without validating the physics; `origin` names the source in errors.
pub fn parse_scenario(text: &str, format: Format, origin: &str) -> Result<Scenario> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_string(),
        message,
    };
    let raw: RawScenario = match format {
        Format::Toml => toml::from_str(text).map_err(|e| parse_err(e.to_string()))?,
        Format::Json => serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?,
    };
    if raw.schema_version != SCHEMA_VERSION {
        return Err(parse_err(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            raw.schema_version
        )));
    }
    Ok(raw.into())
}

impl Scenario {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("cannot serialise scenario: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Validation(format!("cannot serialise scenario: {e}")))
    }

    /// Copy with one field replaced. `path` is dot-separated
    /// (`gains.epsilon`, `physics.agents.0.mass`); `value` is read as JSON
    /// and falls back to a bare string (`sim.model=full`). The result is
    /// validated.
    pub fn with_override(&self, path: &str, value: &str) -> Result<Scenario> {
        let bad = |msg: String| Error::Validation(format!("override {path}: {msg}"));
        let mut doc = serde_json::to_value(self).map_err(|e| bad(e.to_string()))?;
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = match slot {
                serde_json::Value::Object(map) => map.get_mut(key),
                serde_json::Value::Array(items) => key.parse::<usize>().ok().and_then(|k| items.get_mut(k)),
                _ => None,
            }
            .ok_or_else(|| bad(format!("no field '{key}'")))?;
        }
        *slot = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let text = serde_json::to_string(&doc).map_err(|e| bad(e.to_string()))?;
        let scenario = parse_scenario(&text, Format::Json, path)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Bundled figure-eight transport scenario.
    pub fn figure_eight() -> Self {
        parse_scenario(FIG8_TOML, Format::Toml, "fig8_paper.toml").expect("bundled scenario parses")
    }

    /// Figure eight with gains certified on a small domain around the command.
    pub fn figure_eight_certified() -> Self {
        parse_scenario(FIG8_CERTIFIED_TOML, Format::Toml, "fig8_certified.toml").expect("bundled scenario parses")
    }

    pub fn params(&self) -> Result<SystemParams> {
        let p = &self.physics;
        let payload_inertia = match (&p.payload_inertia, &p.payload_box) {
            (Some(j), None) => mat_from_rows(j),
            (None, Some(dims)) => {
                if !dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
                    return Err(Error::Validation("payload_box edges > 0".into()));
                }
                box_inertia(p.payload_mass, *dims)
            }
            _ => {
                return Err(Error::Validation(
                    "give exactly one of payload_inertia or payload_box".into(),
                ))
            }
        };
        let params = SystemParams {
            payload_mass: p.payload_mass,
            payload_inertia,
            agents: p
                .agents
                .iter()
                .map(|a| AgentParams {
                    mass: a.mass,
                    inertia: mat_from_rows(&a.inertia),
                    link_length: a.link_length,
                    attachment: Vec3::from(a.attachment),
                })
                .collect(),
            gravity: p.gravity,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn headings(&self) -> Vec<Vec3> {
        self.physics.agents.iter().map(|a| Vec3::from(a.heading)).collect()
    }

    /// Controller configured by the gains and simulation options.
    pub fn controller(&self, params: &SystemParams) -> Result<TransportController> {
        let mut controller = TransportController::new(params, self.gains, self.sim.model)?;
        controller.headings = self.headings();
        controller.clamp_thrust = self.sim.clamp_thrust;
        controller.payload_mut().accel_from_desired = self.sim.accel_from_desired;
        controller.payload_mut().derivative_step = self.sim.derivative_step;
        controller.set_rates(self.sim.rates);
        Ok(controller)
    }

    /// Initial state including the seeded perturbation, if any.
    pub fn initial_state(&self) -> Result<SystemState> {
        let n = self.physics.agents.len();
        let init = &self.initial;
        let mut rng = ChaCha8Rng::seed_from_u64(self.sim.seed);
        if init.on_command {
            let params = self.params()?;
            let controller = self.controller(&params)?;
            let mut state = crate::sim::state_on_command(&params, &controller, &self.command, 0.0)?;
            if let Some(p) = init.perturbation {
                // Link errors are measured against setpoints that depend on
                // the payload errors, so the links are re-settled in between.
                perturb_state(&mut state, &Perturbation { link: 0.0, ..p }, &mut rng);
                crate::sim::settle_links(&params, &controller, &self.command, &mut state)?;
                let links_only = Perturbation {
                    position: 0.0,
                    attitude: 0.0,
                    ..p
                };
                perturb_state(&mut state, &links_only, &mut rng);
            }
            state.validate(n)?;
            return Ok(state);
        }
        let agents = if init.agents.is_empty() {
            vec![AgentState::hanging(); n]
        } else {
            init.agents
                .iter()
                .map(|a| AgentState {
                    link_dir: Vec3::from(a.link_dir),
                    link_rate: Vec3::from(a.link_rate),
                    attitude: mat_from_rows(&a.attitude),
                    body_rate: Vec3::from(a.body_rate),
                })
                .collect()
        };
        let mut state = SystemState {
            t: 0.0,
            position: Vec3::from(init.position),
            velocity: Vec3::from(init.velocity),
            attitude: mat_from_rows(&init.attitude),
            angular_velocity: Vec3::from(init.angular_velocity),
            agents,
        };
        if let Some(p) = init.perturbation {
            perturb_state(&mut state, &p, &mut rng);
        }
        state.validate(n)?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let i = &self.initial;
        if i.on_command
            && (i.position != [0.0; 3]
                || i.velocity != [0.0; 3]
                || i.attitude != IDENTITY
                || i.angular_velocity != [0.0; 3]
                || !i.agents.is_empty())
        {
            return Err(Error::Validation(
                "initial.on_command excludes explicit initial state fields".into(),
            ));
        }
        for (i, a) in self.physics.agents.iter().enumerate() {
            let h = Vec3::from(a.heading);
            if !(h.norm() > 0.0 && h.iter().all(|x| x.is_finite())) {
                return Err(Error::Validation(format!("heading of agent {} must be nonzero", i + 1)));
            }
        }
        self.initial_state()?;
        if let Some(p) = self.initial.perturbation {
            if ![p.position, p.attitude, p.link].iter().all(|x| *x >= 0.0 && x.is_finite()) {
                return Err(Error::Validation("perturbation bounds ≥ 0".into()));
            }
        }
        if self.gains.has_zero() {
            log::warn!("scenario '{}' has zero gains; convergence is not expected", self.name);
        }
        self.gains.validate_allowing_zero()?;
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= 0.05) {
            return Err(Error::Validation(format!("dt in (0, 0.05] (got {})", s.dt)));
        }
        if !(s.derivative_step > 0.0 && s.derivative_step <= 0.01) {
            return Err(Error::Validation(format!(
                "derivative_step in (0, 0.01] (got {})",
                s.derivative_step
            )));
        }
        if !(s.t_final > 0.0 && s.t_final.is_finite()) {
            return Err(Error::Validation(format!("t_final > 0 (got {})", s.t_final)));
        }
        if s.control_divisor == 0 {
            return Err(Error::Validation("control_divisor ≥ 1".into()));
        }
        if !(s.log_rate > 0.0 && s.log_rate.is_finite()) {
            return Err(Error::Validation(format!("log_rate > 0 (got {})", s.log_rate)));
        }
        self.domain.validate()?;
        self.command.validate()?;
        check_command_along_path(&self.command, s.t_final, s.dt)?;
        Ok(())
    }
}

/// Samples the command every 10 ms (and at the end) so that an undefined
/// path-tangent frame is reported at load time.
fn check_command_along_path(cmd: &TrajectorySpec, t_final: f64, dt: f64) -> Result<()> {
    let step = 0.01f64.max(dt);
    let count = (t_final / step).ceil() as usize;
    for k in 0..=count {
        let t = (k as f64 * step).min(t_final);
        let s = cmd.sample(t).map_err(|e| Error::Validation(e.to_string()))?;
        if (s.attitude.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("commanded attitude has det ≠ 1 at t = {t}")));
        }
    }
    Ok(())
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Adds bounded random offsets: payload position within a ball, payload
/// rotation and link tilts up to the given angles.
pub fn perturb_state(state: &mut SystemState, p: &Perturbation, rng: &mut impl Rng) {
    let r = p.position * rng.random_range(0.0..=1.0f64).cbrt();
    state.position += random_unit(rng) * r;
    let angle = p.attitude * rng.random_range(0.0..=1.0f64);
    state.attitude *= exp_so3(&(random_unit(rng) * angle));
    for a in &mut state.agents {
        let tilt = p.link * rng.random_range(0.0..=1.0f64);
        let axis = hat(&a.link_dir) * random_unit(rng);
        if axis.norm() > 1e-9 {
            let rot: Mat3 = exp_so3(&(axis.normalize() * tilt));
            a.link_dir = (rot * a.link_dir).normalize();
            let w = rot * a.link_rate;
            a.link_rate = w - a.link_dir * a.link_dir.dot(&w);
        }
    }
}

pub const FIG8_TOML: &str = include_str!("../scenarios/fig8_paper.toml");
pub const FIG8_CERTIFIED_TOML: &str = include_str!("../scenarios/fig8_certified.toml");

/// Rows of a rotation, for building [`InitialSpec`] values in code.
pub fn rows(m: &Mat3) -> Rows {
    mat_to_rows(m)
}
