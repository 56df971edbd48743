//! Coordinate-free primitives on SO(3) and the two-sphere.
//!
//! Rotations are plain `Matrix3<f64>` values and link directions are plain
//! `Vector3<f64>` values; the predicates here check the manifold invariants
//! where a caller needs them enforced.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Inertial "down" axis. Gravity acts along +e₃.
pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Maximum Frobenius defect of `RᵀR − I` accepted as a rotation.
pub const ROTATION_TOL: f64 = 1e-9;
/// Maximum `|‖q‖ − 1|` accepted as a unit vector.
pub const UNIT_TOL: f64 = 1e-9;
/// Maximum `‖M + Mᵀ‖_F` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-8;

pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]; rejects matrices whose symmetric part exceeds [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3> {
    vee_with_tol(m, SKEW_TOL)
}

pub fn vee_with_tol(m: &Mat3, tol: f64) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).norm();
    if !(asymmetry <= tol) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(vee_unchecked(m))
}

/// Reads the axial vector of the skew part without checking skewness.
#[inline]
pub(crate) fn vee_unchecked(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn orthogonality_defect(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).norm()
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    r.iter().all(|x| x.is_finite())
        && orthogonality_defect(r) <= tol
        && (r.determinant() - 1.0).abs() <= tol
}

pub fn is_unit(q: &Vec3, tol: f64) -> bool {
    q.iter().all(|x| x.is_finite()) && (q.norm() - 1.0).abs() <= tol
}

/// Rodrigues formula for `exp(hat(w))`.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let k = hat(w);
    let (a, b) = if theta < 1e-6 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Mat3::identity() + k * a + k * k * b
}

/// Principal logarithm, returned as the rotation vector `vee(log R)`.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let axial = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-6 {
        // sin θ / θ ≈ 1 − θ²/6
        return axial * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if std::f64::consts::PI - theta > 1e-4 {
        return axial * (theta / (2.0 * theta.sin()));
    }
    // Near π the skew part vanishes; recover the axis from R + I = 2aaᵀ (θ = π).
    let b = (r + Mat3::identity()) * 0.5;
    let (col, _) = (0..3)
        .map(|j| (j, b[(j, j)]))
        .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut axis = b.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&axial) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Tracking errors between an attitude and its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeError {
    pub e_r: Vec3,
    pub e_omega: Vec3,
    /// `½ tr(I − R_dᵀR)`, in `[0, 2]`.
    pub psi: f64,
}

pub fn attitude_error(r: &Mat3, r_d: &Mat3, omega: &Vec3, omega_d: &Vec3) -> AttitudeError {
    let rd_t_r = r_d.transpose() * r;
    // ½(A − Aᵀ)∨ is exactly the axial part read by `vee_unchecked`.
    let e_r = vee_unchecked(&rd_t_r);
    let e_omega = omega - r.transpose() * r_d * omega_d;
    let psi = 0.5 * (3.0 - rd_t_r.trace());
    AttitudeError {
        e_r,
        e_omega,
        psi,
    }
}

/// Tracking errors between a link direction on S² and its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkError {
    pub e_q: Vec3,
    pub e_omega: Vec3,
    /// `1 − q·q_d`, in `[0, 2]`; 2 is the antipodal configuration.
    pub psi: f64,
}

pub fn link_error(q: &Vec3, q_d: &Vec3, omega: &Vec3, omega_d: &Vec3) -> LinkError {
    let q_hat = hat(q);
    LinkError {
        e_q: q_d.cross(q),
        e_omega: omega + q_hat * q_hat * omega_d,
        psi: 1.0 - q.dot(q_d),
    }
}

/// Nearest rotation in the Frobenius sense (polar factor with determinant fix).
pub fn nearest_rotation(m: &Mat3) -> Result<Mat3> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::Degenerate("non-finite matrix".into()));
    }
    let svd = m.svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Degenerate("SVD did not converge".into()));
    };
    let s = svd.singular_values;
    if s.min() < 1e-6 * s.max().max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("singular attitude matrix".into()));
    }
    if (u * v_t).determinant() < 0.0 {
        let weakest = s.imin();
        u.column_mut(weakest).neg_mut();
    }
    Ok(u * v_t)
}

/// Pulls a drifted (attitude, link direction, link rate) triple back onto
/// SO(3) × TS².
pub fn reproject(r: &Mat3, q: &Vec3, omega: &Vec3) -> Result<(Mat3, Vec3, Vec3)> {
    let defect = orthogonality_defect(r);
    if !(defect < 0.1) {
        return Err(Error::Degenerate(format!(
            "attitude too far from SO(3) (‖RᵀR − I‖ = {defect:.3e})"
        )));
    }
    let r = nearest_rotation(r)?;
    let (q, omega) = reproject_link(q, omega)?;
    Ok((r, q, omega))
}

pub fn reproject_link(q: &Vec3, omega: &Vec3) -> Result<(Vec3, Vec3)> {
    let len = q.norm();
    if !(len > 1e-6 && len.is_finite()) {
        return Err(Error::Degenerate(format!("link direction norm {len:.3e}")));
    }
    let q = q / len;
    let omega = omega - q * q.dot(omega);
    Ok((q, omega))
}

/// Re-orthonormalises a rotation already known to be close to SO(3).
pub fn reproject_rotation(r: &Mat3) -> Result<Mat3> {
    let defect = orthogonality_defect(r);
    if !(defect < 0.1) {
        return Err(Error::Degenerate(format!(
            "attitude too far from SO(3) (‖RᵀR − I‖ = {defect:.3e})"
        )));
    }
    nearest_rotation(r)
}
