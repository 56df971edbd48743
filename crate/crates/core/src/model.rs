//! Physical parameters and state of the payload / link / quadrotor system.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::geom::{hat, is_rotation, is_unit, Mat3, Vec3, E3, ROTATION_TOL, UNIT_TOL};

/// Default tolerance on `|ω·q|` for a link rate to count as tangent.
pub const TANGENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    /// Quadrotor mass [kg].
    pub mass: f64,
    /// Quadrotor inertia in its body frame [kg·m²].
    pub inertia: Mat3,
    /// Link length [m].
    pub link_length: f64,
    /// Attachment point on the payload, payload body frame [m].
    pub attachment: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub payload_mass: f64,
    pub payload_inertia: Mat3,
    pub agents: Vec<AgentParams>,
    /// Gravitational acceleration [m/s²], acting along +e₃.
    pub gravity: f64,
}

impl SystemParams {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// `m_T = m₀ + Σ mᵢ`.
    pub fn total_mass(&self) -> f64 {
        self.payload_mass + self.agents.iter().map(|a| a.mass).sum::<f64>()
    }

    /// `J̄₀ = J₀ − Σ mᵢ hat(ρᵢ)²`, the payload inertia augmented by the point
    /// masses of the quadrotors carried at the attachment points.
    pub fn augmented_inertia(&self) -> Mat3 {
        self.agents.iter().fold(self.payload_inertia, |acc, a| {
            let r = hat(&a.attachment);
            acc - r * r * a.mass
        })
    }

    pub fn gravity_vector(&self) -> Vec3 {
        E3 * self.gravity
    }

    pub fn attachments(&self) -> Vec<Vec3> {
        self.agents.iter().map(|a| a.attachment).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Validation("at least one agent is required".into()));
        }
        if !(self.payload_mass > 0.0) {
            return Err(Error::Validation("m₀ > 0".into()));
        }
        if !(self.gravity.is_finite()) {
            return Err(Error::Validation("gravity must be finite".into()));
        }
        check_inertia(&self.payload_inertia, "J₀")?;
        for (i, a) in self.agents.iter().enumerate() {
            let k = i + 1;
            if !(a.mass > 0.0) {
                return Err(Error::Validation(format!("m{k} > 0")));
            }
            if !(a.link_length > 0.0) {
                return Err(Error::Validation(format!("l{k} > 0")));
            }
            if !a.attachment.iter().all(|x| x.is_finite()) {
                return Err(Error::Validation(format!("ρ{k} must be finite")));
            }
            check_inertia(&a.inertia, &format!("J{k}"))?;
        }
        check_inertia(&self.augmented_inertia(), "J̄₀")
    }
}

fn check_inertia(j: &Mat3, name: &str) -> Result<()> {
    if !j.iter().all(|x| x.is_finite()) {
        return Err(Error::Validation(format!("{name} must be finite")));
    }
    if (j - j.transpose()).norm() > 1e-12 * (1.0 + j.norm()) {
        return Err(Error::Validation(format!("{name} must be symmetric")));
    }
    let min = SymmetricEigen::new(*j).eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::Validation(format!(
            "{name} must be positive-definite (λ_min = {min:.3e})"
        )));
    }
    Ok(())
}

/// Inertia of a solid rectangular box about its centre, edges along the body axes.
pub fn box_inertia(mass: f64, dims: [f64; 3]) -> Mat3 {
    let [a, b, c] = dims;
    let k = mass / 12.0;
    Mat3::from_diagonal(&Vec3::new(
        k * (b * b + c * c),
        k * (a * a + c * c),
        k * (a * a + b * b),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Link direction `qᵢ ∈ S²`, pointing from the quadrotor toward the payload.
    pub link_dir: Vec3,
    /// Link angular velocity `ωᵢ`, tangent: `ωᵢ·qᵢ = 0`.
    pub link_rate: Vec3,
    /// Quadrotor attitude `Rᵢ ∈ SO(3)`.
    pub attitude: Mat3,
    /// Quadrotor body angular velocity `Ωᵢ`.
    pub body_rate: Vec3,
}

impl AgentState {
    /// Quadrotor hanging straight above its attachment point, level and at rest.
    pub fn hanging() -> Self {
        Self {
            link_dir: E3,
            link_rate: Vec3::zeros(),
            attitude: Mat3::identity(),
            body_rate: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Mat3,
    /// Payload angular velocity in the payload body frame.
    pub angular_velocity: Vec3,
    pub agents: Vec<AgentState>,
}

impl SystemState {
    pub fn at_rest(position: Vec3, n: usize) -> Self {
        Self {
            t: 0.0,
            position,
            velocity: Vec3::zeros(),
            attitude: Mat3::identity(),
            angular_velocity: Vec3::zeros(),
            agents: vec![AgentState::hanging(); n],
        }
    }

    pub fn is_finite(&self) -> bool {
        let v = |x: &Vec3| x.iter().all(|c| c.is_finite());
        let m = |x: &Mat3| x.iter().all(|c| c.is_finite());
        self.t.is_finite()
            && v(&self.position)
            && v(&self.velocity)
            && m(&self.attitude)
            && v(&self.angular_velocity)
            && self.agents.iter().all(|a| {
                v(&a.link_dir) && v(&a.link_rate) && m(&a.attitude) && v(&a.body_rate)
            })
    }

    /// Largest violation of the manifold constraints:
    /// (`|‖q‖−1|`, `‖RᵀR−I‖_F`, `|ω·q|`), maximised over all bodies.
    pub fn constraint_residuals(&self) -> (f64, f64, f64) {
        let mut unit = 0.0f64;
        let mut orth = crate::geom::orthogonality_defect(&self.attitude);
        let mut tangency = 0.0f64;
        for a in &self.agents {
            unit = unit.max((a.link_dir.norm() - 1.0).abs());
            orth = orth.max(crate::geom::orthogonality_defect(&a.attitude));
            tangency = tangency.max(a.link_rate.dot(&a.link_dir).abs());
        }
        (unit, orth, tangency)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.agents.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.agents.len(),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite { t: self.t });
        }
        if !is_rotation(&self.attitude, ROTATION_TOL) {
            return Err(Error::Validation("R₀ must be a rotation matrix".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let k = i + 1;
            if !is_unit(&a.link_dir, UNIT_TOL) {
                return Err(Error::Validation(format!("q{k} must be a unit vector")));
            }
            if a.link_rate.dot(&a.link_dir).abs() > TANGENCY_TOL {
                return Err(Error::Validation(format!("ω{k} must be perpendicular to q{k}")));
            }
            if !is_rotation(&a.attitude, ROTATION_TOL) {
                return Err(Error::Validation(format!("R{k} must be a rotation matrix")));
            }
        }
        Ok(())
    }
}

/// Thrust magnitude and body moment of one quadrotor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorCommand {
    pub thrust: f64,
    pub moment: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlInput {
    /// Simplified model: each quadrotor applies an arbitrary force `uᵢ`.
    Forces(Vec<Vec3>),
    /// Full model: thrust `fᵢ` along `−Rᵢe₃` and body moment `Mᵢ`.
    Rotors(Vec<RotorCommand>),
}

impl ControlInput {
    pub fn zero_forces(n: usize) -> Self {
        ControlInput::Forces(vec![Vec3::zeros(); n])
    }

    pub fn len(&self) -> usize {
        match self {
            ControlInput::Forces(u) => u.len(),
            ControlInput::Rotors(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inertial forces and body moments for the given state. Rotor thrust
    /// follows the current attitude of each quadrotor.
    pub fn forces_and_moments(&self, state: &SystemState) -> (Vec<Vec3>, Vec<Vec3>) {
        match self {
            ControlInput::Forces(u) => (u.clone(), vec![Vec3::zeros(); u.len()]),
            ControlInput::Rotors(cmds) => cmds
                .iter()
                .zip(&state.agents)
                .map(|(c, a)| (-(a.attitude * E3) * c.thrust, c.moment))
                .unzip(),
        }
    }
}
