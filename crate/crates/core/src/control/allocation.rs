//! Minimum-norm distribution of a payload wrench over the link tensions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geom::{hat, Mat3, Vec3};

/// `𝒫 = [I ⋯ I; hat(ρ₁) ⋯ hat(ρₙ)]` together with its numerical rank.
pub fn build_p(attachments: &[Vec3]) -> (DMatrix<f64>, usize) {
    let n = attachments.len();
    let mut p = DMatrix::zeros(6, 3 * n);
    for (i, rho) in attachments.iter().enumerate() {
        p.fixed_view_mut::<3, 3>(0, 3 * i).copy_from(&Mat3::identity());
        p.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&hat(rho));
    }
    let rank = numerical_rank(&p);
    (p, rank)
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

/// Precomputed allocation for a fixed attachment geometry.
#[derive(Debug, Clone)]
pub struct Allocator {
    p: DMatrix<f64>,
    /// `𝒫ᵀ(𝒫𝒫ᵀ)⁻¹`
    pinv: DMatrix<f64>,
    lambda_min: f64,
}

impl Allocator {
    pub fn new(attachments: &[Vec3]) -> Result<Self> {
        let (p, rank) = build_p(attachments);
        if rank < 6 {
            return Err(Error::RankDeficient { rank });
        }
        let ppt = &p * p.transpose();
        let lambda_min = SymmetricEigen::new(ppt.clone()).eigenvalues.min();
        let inv = ppt
            .cholesky()
            .ok_or(Error::RankDeficient { rank })?
            .inverse();
        let pinv = p.transpose() * inv;
        Ok(Self { p, pinv, lambda_min })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `λ_min(𝒫𝒫ᵀ)`
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn n(&self) -> usize {
        self.p.ncols() / 3
    }

    /// Desired tensions `μ_id` in the inertial frame whose resultant force is
    /// `F_d` and whose moment about the payload centre, in the body frame, is
    /// `M_d`. Among all such solutions `Σ‖R₀ᵀμ_id‖²` is smallest.
    pub fn allocate(&self, r0: &Mat3, force: &Vec3, moment: &Vec3) -> Vec<Vec3> {
        let body_force = r0.transpose() * force;
        let w = DVector::from_iterator(6, body_force.iter().chain(moment.iter()).copied());
        let body = &self.pinv * w;
        (0..self.n())
            .map(|i| r0 * Vec3::new(body[3 * i], body[3 * i + 1], body[3 * i + 2]))
            .collect()
    }
}

/// Orthonormal basis of the null space of `𝒫`: tension distributions (in the
/// payload frame) that produce no net force or moment.
pub fn null_directions(attachments: &[Vec3]) -> Vec<DVector<f64>> {
    let (p, _) = build_p(attachments);
    let cols = p.ncols();
    let svd = (p.transpose() * &p).symmetric_eigen();
    let max = svd.eigenvalues.amax().max(f64::MIN_POSITIVE);
    (0..cols)
        .filter(|&k| svd.eigenvalues[k] <= 1e-12 * max)
        .map(|k| svd.eigenvectors.column(k).into_owned())
        .collect()
}

/// Resultant force and body-frame moment of inertial link forces.
pub fn resultant(attachments: &[Vec3], r0: &Mat3, forces: &[Vec3]) -> (Vec3, Vec3) {
    attachments
        .iter()
        .zip(forces)
        .fold((Vec3::zeros(), Vec3::zeros()), |(f, m), (rho, mu)| {
            (f + mu, m + rho.cross(&(r0.transpose() * mu)))
        })
}
