//! Equations of motion of the coupled payload / link / quadrotor system.
//!
//! Two independent routes to the accelerations are provided: the full
//! `(6 + 3n)`-dimensional mass-matrix form, and the eliminated form in which
//! the link accelerations are substituted out leaving a 6×6 payload system.
//! They must agree; the test-suite uses each as an oracle for the other.

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen, Vector6};

use crate::error::{Error, Result};
use crate::geom::{hat, reproject_link, reproject_rotation, Mat3, Vec3, E3};
use crate::model::{ControlInput, SystemParams, SystemState};

/// Largest admissible condition number of the mass matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Accelerations {
    /// `ẍ₀`
    pub linear: Vec3,
    /// `Ω̇₀`
    pub angular: Vec3,
    /// `ω̇ᵢ`
    pub link: Vec<Vec3>,
    /// `Ω̇ᵢ`
    pub body: Vec<Vec3>,
}

impl Accelerations {
    pub fn max_abs_diff(&self, other: &Accelerations) -> f64 {
        let mut d = (self.linear - other.linear).amax().max((self.angular - other.angular).amax());
        for (a, b) in self.link.iter().zip(&other.link) {
            d = d.max((a - b).amax());
        }
        for (a, b) in self.body.iter().zip(&other.body) {
            d = d.max((a - b).amax());
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.link
            .iter()
            .chain(&self.body)
            .fold(self.linear.amax().max(self.angular.amax()), |m, v| m.max(v.amax()))
    }
}

/// Mass matrix and right-hand side over `(ẍ₀, Ω̇₀, ω̇₁, …, ω̇ₙ)`.
#[derive(Debug, Clone)]
pub struct MatrixForm {
    pub mass: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

fn set_block(m: &mut DMatrix<f64>, row: usize, col: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(b);
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn assemble_matrix_form(params: &SystemParams, state: &SystemState, u: &[Vec3]) -> Result<MatrixForm> {
    let n = params.n();
    check_len(n, u.len())?;
    check_len(n, state.agents.len())?;
    let dim = 6 + 3 * n;
    let g = params.gravity;
    let r0 = &state.attitude;
    let w0 = &state.angular_velocity;
    let w0_hat = hat(w0);
    let jbar = params.augmented_inertia();

    let mut mass = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);

    let mut m12 = Mat3::zeros();
    let mut f_lin = params.gravity_vector() * params.total_mass();
    let mut f_ang = -w0_hat * jbar * w0;

    for (i, (ap, st)) in params.agents.iter().zip(&state.agents).enumerate() {
        let (m, l) = (ap.mass, ap.link_length);
        let rho_hat = hat(&ap.attachment);
        let q = &st.link_dir;
        let q_hat = hat(q);
        let w2 = st.link_rate.norm_squared();
        let col = 6 + 3 * i;
        let centripetal = r0 * w0_hat * w0_hat * ap.attachment;
        let gravity_plus_u = u[i] + E3 * (m * g);

        m12 -= r0 * rho_hat * m;
        set_block(&mut mass, 0, col, &(q_hat * (m * l)));
        set_block(&mut mass, 3, col, &(rho_hat * r0.transpose() * q_hat * (m * l)));
        set_block(&mut mass, col, 0, &(-q_hat * (m * l)));
        set_block(&mut mass, col, 3, &(q_hat * r0 * rho_hat * (m * l)));
        set_block(&mut mass, col, col, &(Mat3::identity() * (m * l * l)));

        f_lin += u[i] - centripetal * m - q * (m * l * w2);
        f_ang += rho_hat * r0.transpose() * (gravity_plus_u - q * (m * l * w2));
        let link_rhs = q_hat * centripetal * (m * l) - q_hat * gravity_plus_u * l;
        rhs.fixed_rows_mut::<3>(col).copy_from(&link_rhs);
    }

    set_block(&mut mass, 0, 0, &(Mat3::identity() * params.total_mass()));
    set_block(&mut mass, 0, 3, &m12);
    set_block(&mut mass, 3, 0, &m12.transpose());
    set_block(&mut mass, 3, 3, &jbar);
    rhs.fixed_rows_mut::<3>(0).copy_from(&f_lin);
    rhs.fixed_rows_mut::<3>(3).copy_from(&f_ang);

    Ok(MatrixForm { mass, rhs })
}

/// Solves the matrix form for `(ẍ₀, Ω̇₀, ω̇ᵢ)`. `body` is left empty; see
/// [`accelerations`] for the complete set.
pub fn solve_accelerations(form: &MatrixForm) -> Result<Accelerations> {
    let dim = form.mass.nrows();
    if dim < 6 || (dim - 6) % 3 != 0 || form.mass.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: 6,
            got: dim,
        });
    }
    check_len(dim, form.rhs.len())?;
    let eig = SymmetricEigen::new(form.mass.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularMass { condition });
    }
    let chol = form
        .mass
        .clone()
        .cholesky()
        .ok_or(Error::SingularMass { condition })?;
    let a = chol.solve(&form.rhs);
    let n = (dim - 6) / 3;
    Ok(Accelerations {
        linear: a.fixed_rows::<3>(0).into_owned(),
        angular: a.fixed_rows::<3>(3).into_owned(),
        link: (0..n).map(|i| a.fixed_rows::<3>(6 + 3 * i).into_owned()).collect(),
        body: Vec::new(),
    })
}

/// `Ω̇ = J⁻¹(M − Ω × JΩ)`.
pub fn quadrotor_attitude_accel(inertia: &Mat3, body_rate: &Vec3, moment: &Vec3) -> Vec3 {
    let rhs = moment - body_rate.cross(&(inertia * body_rate));
    inertia
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| Vec3::repeat(f64::NAN))
}

/// All accelerations via the matrix form, quadrotor attitudes included.
pub fn accelerations(params: &SystemParams, state: &SystemState, input: &ControlInput) -> Result<Accelerations> {
    check_len(params.n(), input.len())?;
    let (u, moments) = input.forces_and_moments(state);
    let form = assemble_matrix_form(params, state, &u)?;
    let mut acc = solve_accelerations(&form)?;
    acc.body = attitude_accels(params, state, &moments);
    Ok(acc)
}

fn attitude_accels(params: &SystemParams, state: &SystemState, moments: &[Vec3]) -> Vec<Vec3> {
    params
        .agents
        .iter()
        .zip(&state.agents)
        .zip(moments)
        .map(|((p, s), m)| quadrotor_attitude_accel(&p.inertia, &s.body_rate, m))
        .collect()
}

/// Accelerations from the eliminated equations: a coupled 6×6 solve for
/// `(ẍ₀ − g e₃, Ω̇₀)` with `M_q = m₀I + Σ mᵢqᵢqᵢᵀ`, then the link equations.
pub fn accel_eliminated(params: &SystemParams, state: &SystemState, input: &ControlInput) -> Result<Accelerations> {
    let n = params.n();
    check_len(n, input.len())?;
    check_len(n, state.agents.len())?;
    let (u, moments) = input.forces_and_moments(state);
    let r0 = &state.attitude;
    let w0 = &state.angular_velocity;
    let w0_hat = hat(w0);
    let j0 = &params.payload_inertia;

    let mut a11 = Mat3::identity() * params.payload_mass;
    let mut a12 = Mat3::zeros();
    let mut a21 = Mat3::zeros();
    let mut a22 = *j0;
    let mut b1 = Vec3::zeros();
    let mut b2 = -w0_hat * j0 * w0;

    for (i, (ap, st)) in params.agents.iter().zip(&state.agents).enumerate() {
        let m = ap.mass;
        let q = &st.link_dir;
        let qq = q * q.transpose();
        let rho_hat = hat(&ap.attachment);
        let u_par = qq * u[i];
        let drive = u_par
            - q * (m * ap.link_length * st.link_rate.norm_squared())
            - qq * r0 * w0_hat * w0_hat * ap.attachment * m;

        a11 += qq * m;
        a12 -= qq * r0 * rho_hat * m;
        a21 += rho_hat * r0.transpose() * qq * m;
        a22 -= rho_hat * r0.transpose() * qq * r0 * rho_hat * m;
        b1 += drive;
        b2 += rho_hat * r0.transpose() * drive;
    }

    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&a11);
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&a12);
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&a21);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&a22);
    let mut b = Vector6::zeros();
    b.fixed_rows_mut::<3>(0).copy_from(&b1);
    b.fixed_rows_mut::<3>(3).copy_from(&b2);

    let eig = SymmetricEigen::new(a).eigenvalues;
    let condition = if eig.min() > 0.0 { eig.max() / eig.min() } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularMass { condition });
    }
    let y = a.lu().solve(&b).ok_or(Error::SingularMass { condition })?;
    let rel = y.fixed_rows::<3>(0).into_owned();
    let angular = y.fixed_rows::<3>(3).into_owned();

    let link = params
        .agents
        .iter()
        .zip(&state.agents)
        .zip(&u)
        .map(|((ap, st), ui)| {
            let q_hat = hat(&st.link_dir);
            let l = ap.link_length;
            let point = rel - r0 * hat(&ap.attachment) * angular + r0 * w0_hat * w0_hat * ap.attachment;
            let u_perp = -q_hat * q_hat * ui;
            q_hat * point / l - q_hat * u_perp / (ap.mass * l)
        })
        .collect();

    Ok(Accelerations {
        linear: rel + params.gravity_vector(),
        angular,
        link,
        body: attitude_accels(params, state, &moments),
    })
}

/// Time derivative of the ambient-coordinate state.
#[derive(Debug, Clone)]
struct StateRate {
    position: Vec3,
    velocity: Vec3,
    attitude: Mat3,
    angular_velocity: Vec3,
    link_dir: Vec<Vec3>,
    link_rate: Vec<Vec3>,
    agent_attitude: Vec<Mat3>,
    body_rate: Vec<Vec3>,
}

fn state_rate(params: &SystemParams, state: &SystemState, input: &ControlInput) -> Result<StateRate> {
    let acc = accelerations(params, state, input)?;
    Ok(StateRate {
        position: state.velocity,
        velocity: acc.linear,
        attitude: state.attitude * hat(&state.angular_velocity),
        angular_velocity: acc.angular,
        link_dir: state.agents.iter().map(|a| a.link_rate.cross(&a.link_dir)).collect(),
        link_rate: acc.link,
        agent_attitude: state.agents.iter().map(|a| a.attitude * hat(&a.body_rate)).collect(),
        body_rate: acc.body,
    })
}

fn advance(base: &SystemState, terms: &[(&StateRate, f64)], dt: f64) -> SystemState {
    let mut s = base.clone();
    s.t += dt;
    for (k, w) in terms {
        let h = w * dt;
        s.position += k.position * h;
        s.velocity += k.velocity * h;
        s.attitude += k.attitude * h;
        s.angular_velocity += k.angular_velocity * h;
        for (i, a) in s.agents.iter_mut().enumerate() {
            a.link_dir += k.link_dir[i] * h;
            a.link_rate += k.link_rate[i] * h;
            a.attitude += k.agent_attitude[i] * h;
            a.body_rate += k.body_rate[i] * h;
        }
    }
    s
}

/// Projects every rotation and link of `state` back onto its manifold.
pub fn reproject_state(state: &mut SystemState) -> Result<()> {
    state.attitude = reproject_rotation(&state.attitude)?;
    for a in &mut state.agents {
        let (q, w) = reproject_link(&a.link_dir, &a.link_rate)?;
        a.link_dir = q;
        a.link_rate = w;
        a.attitude = reproject_rotation(&a.attitude)?;
    }
    Ok(())
}

/// One classical RK4 step with the input held constant over the step, followed
/// by manifold re-projection.
pub fn step(params: &SystemParams, state: &SystemState, input: &ControlInput, dt: f64) -> Result<SystemState> {
    if !(dt > 0.0 && dt <= 0.05) {
        return Err(Error::Validation(format!("time step {dt} outside (0, 0.05]")));
    }
    let k1 = state_rate(params, state, input)?;
    let s2 = advance(state, &[(&k1, 0.5)], dt);
    let k2 = state_rate(params, &s2, input)?;
    let s3 = advance(state, &[(&k2, 0.5)], dt);
    let k3 = state_rate(params, &s3, input)?;
    let s4 = advance(state, &[(&k3, 1.0)], dt);
    let k4 = state_rate(params, &s4, input)?;
    let sixth = 1.0 / 6.0;
    let mut next = advance(
        state,
        &[(&k1, sixth), (&k2, 2.0 * sixth), (&k3, 2.0 * sixth), (&k4, sixth)],
        dt,
    );
    if !next.is_finite() {
        return Err(Error::NonFinite { t: next.t });
    }
    reproject_state(&mut next).map_err(|_| Error::NonFinite { t: next.t })?;
    Ok(next)
}

/// Inertial positions `xᵢ = x₀ + R₀ρᵢ − lᵢqᵢ` of the quadrotors.
pub fn quadrotor_positions(params: &SystemParams, state: &SystemState) -> Vec<Vec3> {
    params
        .agents
        .iter()
        .zip(&state.agents)
        .map(|(p, s)| state.position + state.attitude * p.attachment - s.link_dir * p.link_length)
        .collect()
}

/// Inertial velocities `ẋᵢ = ẋ₀ + R₀ hat(Ω₀)ρᵢ − lᵢ q̇ᵢ` of the quadrotors.
pub fn quadrotor_velocities(params: &SystemParams, state: &SystemState) -> Vec<Vec3> {
    let spin = state.attitude * hat(&state.angular_velocity);
    params
        .agents
        .iter()
        .zip(&state.agents)
        .map(|(p, s)| state.velocity + spin * p.attachment - s.link_rate.cross(&s.link_dir) * p.link_length)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

pub fn total_energy(params: &SystemParams, state: &SystemState) -> Energy {
    let g = params.gravity;
    let w0 = &state.angular_velocity;
    let mut kinetic = 0.5 * params.payload_mass * state.velocity.norm_squared()
        + 0.5 * w0.dot(&(params.payload_inertia * w0));
    let mut potential = -params.payload_mass * g * E3.dot(&state.position);
    let positions = quadrotor_positions(params, state);
    let velocities = quadrotor_velocities(params, state);
    for (i, (p, s)) in params.agents.iter().zip(&state.agents).enumerate() {
        kinetic += 0.5 * p.mass * velocities[i].norm_squared() + 0.5 * s.body_rate.dot(&(p.inertia * s.body_rate));
        potential -= p.mass * g * E3.dot(&positions[i]);
    }
    Energy {
        kinetic,
        potential,
        total: kinetic + potential,
    }
}

/// Total linear momentum `m₀ẋ₀ + Σ mᵢẋᵢ`.
pub fn linear_momentum(params: &SystemParams, state: &SystemState) -> Vec3 {
    quadrotor_velocities(params, state)
        .iter()
        .zip(&params.agents)
        .fold(state.velocity * params.payload_mass, |acc, (v, p)| acc + v * p.mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_inertia, AgentParams};
    use approx::assert_relative_eq;

    fn bundled_params() -> SystemParams {
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
                    inertia: Mat3::from_diagonal(&Vec3::new(0.0820, 0.0845, 0.1377)),
                    link_length: 1.0,
                    attachment: *r,
                })
                .collect(),
            gravity: 9.81,
        }
    }

    #[test]
    fn single_agent_centred_rest_blocks() {
        let params = SystemParams {
            payload_mass: 2.0,
            payload_inertia: Mat3::identity(),
            agents: vec![AgentParams {
                mass: 0.5,
                inertia: Mat3::identity() * 0.1,
                link_length: 1.0,
                attachment: Vec3::zeros(),
            }],
            gravity: 9.81,
        };
        let state = SystemState::at_rest(Vec3::zeros(), 1);
        let form = assemble_matrix_form(&params, &state, &[Vec3::zeros()]).unwrap();
        let mt = 2.5;
        assert_eq!(form.mass.fixed_view::<3, 3>(0, 0).into_owned(), Mat3::identity() * mt);
        assert_relative_eq!(form.rhs.fixed_rows::<3>(0).into_owned(), E3 * (mt * 9.81));
    }

    #[test]
    fn free_fall_from_rest() {
        let params = bundled_params();
        let state = SystemState::at_rest(Vec3::new(1.0, 4.8, 0.0), 3);
        let input = ControlInput::zero_forces(3);
        let acc = accelerations(&params, &state, &input).unwrap();
        assert!((acc.linear - E3 * 9.81).norm() < 1e-12);
        assert!(acc.angular.norm() < 1e-12);
        assert!(acc.link.iter().all(|w| w.norm() < 1e-12));
        let elim = accel_eliminated(&params, &state, &input).unwrap();
        assert!(elim.max_abs_diff(&acc) < 1e-12);
    }

    #[test]
    fn identity_mass_returns_rhs() {
        let rhs = DVector::from_fn(9, |i, _| i as f64 - 3.0);
        let form = MatrixForm {
            mass: DMatrix::identity(9, 9),
            rhs: rhs.clone(),
        };
        let acc = solve_accelerations(&form).unwrap();
        assert_eq!(acc.linear, Vec3::new(-3.0, -2.0, -1.0));
        assert_eq!(acc.angular, Vec3::new(0.0, 1.0, 2.0));
        assert_eq!(acc.link[0], Vec3::new(3.0, 4.0, 5.0));
    }

    #[test]
    fn singular_mass_is_rejected() {
        let mut mass = DMatrix::identity(9, 9);
        mass[(8, 8)] = 1e-14;
        let form = MatrixForm {
            mass,
            rhs: DVector::zeros(9),
        };
        assert!(matches!(solve_accelerations(&form), Err(Error::SingularMass { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let params = bundled_params();
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        assert!(matches!(
            assemble_matrix_form(&params, &state, &[Vec3::zeros(); 2]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn gyroscopic_examples() {
        let j = Mat3::from_diagonal(&Vec3::new(0.0820, 0.0845, 0.1377));
        assert_eq!(quadrotor_attitude_accel(&j, &Vec3::zeros(), &Vec3::zeros()), Vec3::zeros());
        assert!(quadrotor_attitude_accel(&j, &Vec3::x(), &Vec3::zeros()).norm() < 1e-15);
        // Ω × JΩ = [0, 0, 0.0845 − 0.0820]
        let w = quadrotor_attitude_accel(&j, &Vec3::new(1.0, 1.0, 0.0), &Vec3::zeros());
        assert!((w - Vec3::new(0.0, 0.0, -0.0025 / 0.1377)).norm() < 1e-12);
        assert_relative_eq!(w.z, -0.01816, epsilon = 1e-5);
    }

    #[test]
    fn bundled_initial_energy_and_positions() {
        let params = bundled_params();
        let state = SystemState::at_rest(Vec3::new(1.0, 4.8, 0.0), 3);
        let e = total_energy(&params, &state);
        assert_eq!(e.kinetic, 0.0);
        // −Σ mᵢ g (ρᵢ,z − lᵢ) = 3 · 0.755 · 9.81 · 1.1
        assert_relative_eq!(e.potential, 3.0 * 0.755 * 9.81 * 1.1, epsilon = 1e-12);
        assert_relative_eq!(e.potential, 24.4416, epsilon = 1e-4);
        let x = quadrotor_positions(&params, &state);
        assert_relative_eq!(x[0], Vec3::new(1.5, 4.8, -1.1), epsilon = 1e-15);
    }

    #[test]
    fn quadrotor_position_under_half_turn() {
        let params = bundled_params();
        let mut state = SystemState::at_rest(Vec3::new(0.2, -0.3, 0.4), 3);
        state.attitude = crate::geom::exp_so3(&Vec3::new(0.0, 0.0, std::f64::consts::PI));
        let x = quadrotor_positions(&params, &state);
        let expected = state.position + Vec3::new(-0.5, 0.0, -0.1) - E3;
        assert!((x[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt_and_keeps_equilibrium() {
        let mut params = bundled_params();
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        let input = ControlInput::zero_forces(3);
        assert!(step(&params, &state, &input, 0.0).is_err());
        assert!(step(&params, &state, &input, 0.06).is_err());
        params.gravity = 0.0;
        let next = step(&params, &state, &input, 1e-3).unwrap();
        assert_eq!(next.position, state.position);
        assert_eq!(next.agents, state.agents);
        assert_eq!(next.attitude, state.attitude);
    }

    #[test]
    fn one_free_fall_step() {
        let params = bundled_params();
        let state = SystemState::at_rest(Vec3::new(1.0, 4.8, 0.0), 3);
        let dt = 1e-3;
        let next = step(&params, &state, &ControlInput::zero_forces(3), dt).unwrap();
        assert!((next.velocity - E3 * 9.81 * dt).norm() < 1e-14);
        assert!((next.position - state.position - E3 * 0.5 * 9.81 * dt * dt).norm() < 1e-14);
    }
}
