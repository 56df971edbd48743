//! Numerical stability certificate for a (system, gains, error domain) triple:
//! Lyapunov bound matrices of the payload/link loop and of the quadrotor
//! attitude boundary layer, each checked for positive-definiteness.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::Serialize;

use crate::command::PayloadCommand;
use crate::control::payload::PayloadErrors;
use crate::control::{build_p, GainSet};
use crate::error::{Error, Result};
use crate::geom::{LinkError, Mat3, E3};
use crate::model::SystemParams;
use crate::scenario::{DomainSpec, Scenario};

pub const CERTIFICATE_VERSION: u32 = 1;
/// Safety factor applied to the sampled trajectory bound.
pub const B_SAFETY: f64 = 1.1;
pub const CROSS_MIN: f64 = 1e-4;
pub const CROSS_MAX: f64 = 10.0;
/// Grid points per axis of the cross-constant search.
pub const CROSS_GRID: usize = 31;

/// Sublevel domain of the tracking errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDomain {
    pub e_x_max: f64,
    pub psi_r0: f64,
    /// One bound per link.
    pub psi_q: Vec<f64>,
}

fn alpha_of(psi: f64) -> f64 {
    (psi * (2.0 - psi)).sqrt()
}

impl ErrorDomain {
    pub fn new(e_x_max: f64, psi_r0: f64, psi_q: Vec<f64>) -> Result<Self> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(e_x_max > 0.0 && e_x_max.is_finite()) {
            return Err(Error::Validation(format!("e_x_max > 0 (got {e_x_max})")));
        }
        if !open_unit(psi_r0) || psi_q.is_empty() || !psi_q.iter().all(|p| open_unit(*p)) {
            return Err(Error::Validation("psi_r0 and psi_q must lie in (0, 1)".into()));
        }
        Ok(Self { e_x_max, psi_r0, psi_q })
    }

    pub fn from_spec(spec: &DomainSpec, n: usize) -> Result<Self> {
        Self::new(spec.e_x_max, spec.psi_r0, vec![spec.psi_q; n])
    }

    /// Bound on `‖e_R₀‖` inside the domain.
    pub fn alpha0(&self) -> f64 {
        alpha_of(self.psi_r0)
    }

    /// Bound on `‖e_qᵢ‖` inside the domain.
    pub fn alpha(&self, i: usize) -> f64 {
        alpha_of(self.psi_q[i])
    }
}

/// Geometry- and trajectory-dependent constants of the outer-loop bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateConstants {
    /// `λ_min(𝒫𝒫ᵀ)`
    pub lambda_ppt: f64,
    pub gamma: f64,
    pub beta: f64,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Trajectory bound, safety factor included.
    pub b: f64,
    pub lambda_min_j0: f64,
    pub lambda_max_j0: f64,
}

fn sym_eigs2(m: &Matrix2<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(*m).eigenvalues;
    (e.min(), e.max())
}

fn min_eig3(m: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

fn spectral_norm2(m: &Matrix2<f64>) -> f64 {
    m.singular_values().max()
}

fn lambda_ppt(params: &SystemParams) -> f64 {
    let (p, _) = build_p(&params.attachments());
    SymmetricEigen::new(&p * p.transpose()).eigenvalues.min().max(0.0)
}

/// Sampled bound on the trajectory-driven terms of the error bounds: the
/// feedforward part of `‖μ_id‖` scaled by `γ` and `σᵢ`, and `‖d‖`.
pub fn estimate_b(params: &SystemParams, command: &dyn PayloadCommand, horizon: f64, samples: usize) -> Result<f64> {
    let root = lambda_ppt(params).sqrt();
    let j0 = params.payload_inertia;
    let jbar = SymmetricEigen::new(j0).eigenvalues.max();
    let d_norm = SymmetricEigen::new(j0 * 2.0 - Mat3::identity() * j0.trace())
        .eigenvalues
        .amax();
    let scale = (1.0 / (params.payload_mass * root)).max(
        params
            .agents
            .iter()
            .map(|a| a.attachment.norm() / root)
            .fold(0.0, f64::max),
    );
    let samples = samples.max(1);
    let mut b: f64 = 0.0;
    for k in 0..=samples {
        let t = horizon * k as f64 / samples as f64;
        let c = command.sample(t)?;
        let w = c.angular_velocity.norm();
        let force = params.payload_mass * (c.acceleration - E3 * params.gravity).norm();
        let moment = jbar * (w * w + c.angular_acceleration.norm());
        b = b.max(scale * (force + moment)).max(d_norm * w);
    }
    Ok(B_SAFETY * b)
}

pub fn constants(params: &SystemParams, command: &dyn PayloadCommand, horizon: f64, samples: usize) -> Result<CertificateConstants> {
    let lambda = lambda_ppt(params);
    if !(lambda > 0.0) {
        return Err(Error::RankDeficient {
            rank: build_p(&params.attachments()).1,
        });
    }
    let root = lambda.sqrt();
    let m0 = params.payload_mass;
    let gamma = 1.0 / (m0 * root);
    let delta: Vec<f64> = params.agents.iter().map(|a| m0 * a.attachment.norm() / root).collect();
    let eig = SymmetricEigen::new(params.payload_inertia).eigenvalues;
    Ok(CertificateConstants {
        lambda_ppt: lambda,
        gamma,
        beta: m0 * gamma,
        sigma: delta.iter().map(|d| d / m0).collect(),
        delta,
        b: estimate_b(params, command, horizon, samples)?,
        lambda_min_j0: eig.min(),
        lambda_max_j0: eig.max(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossConstants {
    pub c_x: f64,
    pub c_r: f64,
    pub c_q: f64,
}

/// A small matrix with its deciding scalar: the smallest eigenvalue for
/// symmetric blocks, the spectral norm for coupling blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub rows: Vec<Vec<f64>>,
    pub value: f64,
}

fn rows_of<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sym_block(m: Matrix2<f64>) -> Block {
    Block {
        rows: rows_of(&m),
        value: sym_eigs2(&m).0,
    }
}

fn coupling_block(m: Matrix2<f64>) -> Block {
    Block {
        rows: rows_of(&m),
        value: spectral_norm2(&m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentBlocks {
    /// `n·αᵢ·β`, required below one.
    pub n_alpha_beta: f64,
    pub w_x: Block,
    pub w_r: Block,
    pub w_q: Block,
    pub w_xr: Block,
    pub w_xq: Block,
    pub w_rq: Block,
    pub w: Block,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterReport {
    pub cross: CrossConstants,
    pub p_x_lower: Block,
    pub p_x_upper: Block,
    pub p_r_lower: Block,
    pub p_r_upper: Block,
    pub p_q_lower: Vec<Block>,
    pub p_q_upper: Vec<Block>,
    pub agents: Vec<AgentBlocks>,
    /// Names of the conditions that fail.
    pub failures: Vec<String>,
    pub pass: bool,
}

impl OuterReport {
    /// `min λ_min(Wᵢ)`
    pub fn margin(&self) -> f64 {
        self.agents.iter().map(|a| a.w.value).fold(f64::INFINITY, f64::min)
    }
}

struct Lyapunov {
    p_x: (Matrix2<f64>, Matrix2<f64>),
    p_r: (Matrix2<f64>, Matrix2<f64>),
}

fn p_x(gains: &GainSet, c_x: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let k = gains.position;
    (
        Matrix2::new(k, -c_x, -c_x, 1.0) * 0.5,
        Matrix2::new(k, c_x, c_x, 1.0) * 0.5,
    )
}

fn p_r(gains: &GainSet, k: &CertificateConstants, domain: &ErrorDomain, c_r: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let kr = gains.payload_attitude;
    let (lo, hi) = (k.lambda_min_j0, k.lambda_max_j0);
    (
        Matrix2::new(2.0 * kr, -c_r * hi, -c_r * hi, lo) * 0.5,
        Matrix2::new(2.0 * kr / (2.0 - domain.psi_r0), c_r * hi, c_r * hi, hi) * 0.5,
    )
}

fn p_q(gains: &GainSet, psi_q: f64, c_q: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let kq = gains.link_direction;
    (
        Matrix2::new(2.0 * kq, -c_q, -c_q, 1.0) * 0.5,
        Matrix2::new(2.0 * kq / (2.0 - psi_q), c_q, c_q, 1.0) * 0.5,
    )
}

fn w_x(gains: &GainSet, n: f64, nab: f64, c_x: f64) -> Matrix2<f64> {
    let (kx, kv) = (gains.position, gains.velocity);
    let off = -0.5 * c_x * kv * (1.0 + nab);
    Matrix2::new(c_x * kx * (1.0 - nab), off, off, kv * (1.0 - nab) - c_x) / n
}

fn w_r(gains: &GainSet, k: &CertificateConstants, n: f64, nas: f64, c_r: f64) -> Matrix2<f64> {
    let (kr, kw) = (gains.payload_attitude, gains.payload_rate);
    let off = -0.5 * c_r * (kw + k.b + nas);
    Matrix2::new(c_r * kr * (1.0 - nas), off, off, kw * (1.0 - nas) - 2.0 * c_r * k.lambda_max_j0) / n
}

fn w_q(gains: &GainSet, c_q: f64) -> Matrix2<f64> {
    let (kq, kw) = (gains.link_direction, gains.link_rate);
    let off = -0.5 * c_q * kw;
    Matrix2::new(c_q * kq, off, off, kw - c_q)
}

fn w_xr(gains: &GainSet, k: &CertificateConstants, alpha: f64, delta: f64, c: &CrossConstants) -> Matrix2<f64> {
    let g = k.gamma;
    Matrix2::new(
        g * c.c_x * gains.payload_attitude + delta * c.c_r * gains.position,
        g * c.c_x * gains.payload_rate + delta * gains.position,
        g * gains.payload_attitude + delta * c.c_r * gains.velocity,
        g * gains.payload_rate + delta * gains.velocity,
    ) * alpha
}

fn w_xq(gains: &GainSet, k: &CertificateConstants, domain: &ErrorDomain, c_x: f64) -> Matrix2<f64> {
    Matrix2::new(c_x * k.b, 0.0, k.beta * gains.position * domain.e_x_max + k.b, 0.0)
}

fn w_rq(gains: &GainSet, k: &CertificateConstants, domain: &ErrorDomain, sigma: f64, c_r: f64) -> Matrix2<f64> {
    Matrix2::new(
        c_r * k.b,
        0.0,
        domain.alpha0() * sigma * gains.payload_attitude + k.b,
        0.0,
    )
}

fn assemble_w(lx: f64, lr: f64, lq: f64, nxr: f64, nxq: f64, nrq: f64) -> Matrix3<f64> {
    Matrix3::new(
        lx,
        -0.5 * nxr,
        -0.5 * nxq,
        -0.5 * nxr,
        lr,
        -0.5 * nrq,
        -0.5 * nxq,
        -0.5 * nrq,
        lq,
    )
}

/// Every outer-loop matrix at the given cross constants.
pub fn outer_loop_matrices(
    params: &SystemParams,
    gains: &GainSet,
    domain: &ErrorDomain,
    k: &CertificateConstants,
    cross: CrossConstants,
) -> Result<OuterReport> {
    let n = params.n();
    if domain.psi_q.len() != n || k.delta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: domain.psi_q.len(),
        });
    }
    let nf = n as f64;
    let lyap = Lyapunov {
        p_x: p_x(gains, cross.c_x),
        p_r: p_r(gains, k, domain, cross.c_r),
    };
    let mut failures = Vec::new();
    let mut check = |name: String, value: f64| {
        if !(value > 0.0) {
            failures.push(name);
        }
    };
    let p_x_lower = sym_block(lyap.p_x.0);
    let p_x_upper = sym_block(lyap.p_x.1);
    let p_r_lower = sym_block(lyap.p_r.0);
    let p_r_upper = sym_block(lyap.p_r.1);
    check("P_x0 lower".into(), p_x_lower.value);
    check("P_x0 upper".into(), p_x_upper.value);
    check("P_R0 lower".into(), p_r_lower.value);
    check("P_R0 upper".into(), p_r_upper.value);
    let mut p_q_lower = Vec::with_capacity(n);
    let mut p_q_upper = Vec::with_capacity(n);
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = p_q(gains, domain.psi_q[i], cross.c_q);
        p_q_lower.push(sym_block(lo));
        p_q_upper.push(sym_block(hi));
        check(format!("P_q{} lower", i + 1), p_q_lower[i].value);
        check(format!("P_q{} upper", i + 1), p_q_upper[i].value);

        let alpha = domain.alpha(i);
        let nab = nf * alpha * k.beta;
        let nas = nf * alpha * k.sigma[i];
        let blocks = AgentBlocks {
            n_alpha_beta: nab,
            w_x: sym_block(w_x(gains, nf, nab, cross.c_x)),
            w_r: sym_block(w_r(gains, k, nf, nas, cross.c_r)),
            w_q: sym_block(w_q(gains, cross.c_q)),
            w_xr: coupling_block(w_xr(gains, k, alpha, k.delta[i], &cross)),
            w_xq: coupling_block(w_xq(gains, k, domain, cross.c_x)),
            w_rq: coupling_block(w_rq(gains, k, domain, k.sigma[i], cross.c_r)),
            w: Block {
                rows: Vec::new(),
                value: 0.0,
            },
        };
        let w = assemble_w(
            blocks.w_x.value,
            blocks.w_r.value,
            blocks.w_q.value,
            blocks.w_xr.value,
            blocks.w_xq.value,
            blocks.w_rq.value,
        );
        let blocks = AgentBlocks {
            w: Block {
                rows: rows_of(&w),
                value: min_eig3(&w),
            },
            ..blocks
        };
        let a = i + 1;
        check(format!("n·alpha·beta < 1 (agent {a})"), 1.0 - nab);
        check(format!("W_x{a}"), blocks.w_x.value);
        check(format!("W_R{a}"), blocks.w_r.value);
        check(format!("W_q{a}"), blocks.w_q.value);
        check(format!("W_{a}"), blocks.w.value);
        agents.push(blocks);
    }
    let pass = failures.is_empty();
    Ok(OuterReport {
        cross,
        p_x_lower,
        p_x_upper,
        p_r_lower,
        p_r_upper,
        p_q_lower,
        p_q_upper,
        agents,
        failures,
        pass,
    })
}

/// Outcome of the cross-constant search. `Infeasible` still carries the best
/// grid point found so the report can show what failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchOutcome {
    Feasible { cross: CrossConstants, margin: f64 },
    Infeasible { best: Option<CrossConstants>, margin: f64 },
}

impl SearchOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SearchOutcome::Feasible { .. })
    }

    pub fn cross(&self) -> Option<CrossConstants> {
        match self {
            SearchOutcome::Feasible { cross, .. } => Some(*cross),
            SearchOutcome::Infeasible { best, .. } => *best,
        }
    }
}

/// Log-spaced grid over `[CROSS_MIN, CROSS_MAX]`.
pub fn cross_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (CROSS_MIN.ln(), CROSS_MAX.ln());
    let points = points.max(2);
    (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Grid search for the cross constants that maximise `min λ_min(Wᵢ)` with
/// every bound matrix `P̲, P̄` positive-definite. Feasible when that maximum
/// is positive and the domain condition `nαᵢβ < 1` holds.
pub fn search_cross_constants(
    params: &SystemParams,
    gains: &GainSet,
    domain: &ErrorDomain,
    k: &CertificateConstants,
) -> Result<SearchOutcome> {
    let n = params.n();
    if domain.psi_q.len() != n || k.delta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: domain.psi_q.len(),
        });
    }
    let nf = n as f64;
    let grid = cross_grid(CROSS_GRID);
    let pd = |m: (Matrix2<f64>, Matrix2<f64>)| sym_eigs2(&m.0).0 > 0.0 && sym_eigs2(&m.1).0 > 0.0;

    // Per-axis quantities, so the triple loop only assembles 3×3 matrices.
    let xs: Vec<(f64, Vec<(f64, f64)>)> = grid
        .iter()
        .filter(|c| pd(p_x(gains, **c)))
        .map(|&c| {
            let per: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let nab = nf * domain.alpha(i) * k.beta;
                    (sym_eigs2(&w_x(gains, nf, nab, c)).0, spectral_norm2(&w_xq(gains, k, domain, c)))
                })
                .collect();
            (c, per)
        })
        .collect();
    let rs: Vec<(f64, Vec<(f64, f64)>)> = grid
        .iter()
        .filter(|c| pd(p_r(gains, k, domain, **c)))
        .map(|&c| {
            let per = (0..n)
                .map(|i| {
                    let nas = nf * domain.alpha(i) * k.sigma[i];
                    (
                        sym_eigs2(&w_r(gains, k, nf, nas, c)).0,
                        spectral_norm2(&w_rq(gains, k, domain, k.sigma[i], c)),
                    )
                })
                .collect();
            (c, per)
        })
        .collect();
    let qs: Vec<(f64, f64)> = grid
        .iter()
        .filter(|c| (0..n).all(|i| pd(p_q(gains, domain.psi_q[i], **c))))
        .map(|&c| (c, sym_eigs2(&w_q(gains, c)).0))
        .collect();

    let mut best: Option<(CrossConstants, f64)> = None;
    for (c_x, xper) in &xs {
        for (c_r, rper) in &rs {
            let cross_xr = CrossConstants {
                c_x: *c_x,
                c_r: *c_r,
                c_q: 0.0,
            };
            let nxr: Vec<f64> = (0..n)
                .map(|i| spectral_norm2(&w_xr(gains, k, domain.alpha(i), k.delta[i], &cross_xr)))
                .collect();
            for (c_q, lq) in &qs {
                let margin = (0..n)
                    .map(|i| min_eig3(&assemble_w(xper[i].0, rper[i].0, *lq, nxr[i], xper[i].1, rper[i].1)))
                    .fold(f64::INFINITY, f64::min);
                if best.is_none_or(|(_, m)| margin > m) {
                    best = Some((
                        CrossConstants {
                            c_x: *c_x,
                            c_r: *c_r,
                            c_q: *c_q,
                        },
                        margin,
                    ));
                }
            }
        }
    }
    let domain_ok = (0..n).all(|i| nf * domain.alpha(i) * k.beta < 1.0);
    Ok(match best {
        Some((cross, margin)) if margin > 0.0 && domain_ok => SearchOutcome::Feasible { cross, margin },
        Some((cross, margin)) => SearchOutcome::Infeasible {
            best: Some(cross),
            margin,
        },
        None => SearchOutcome::Infeasible {
            best: None,
            margin: f64::NEG_INFINITY,
        },
    })
}

/// Boundary-layer certificate of one quadrotor attitude loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Admissible `c₃` lie in `(0, c3_max)`.
    pub c3_max: f64,
    pub c3: f64,
    pub l1: Block,
    pub l2: Block,
    pub u: Block,
    pub pass: bool,
}

pub fn c3_max(inertia: &Mat3, k_r: f64, k_omega: f64) -> f64 {
    let e = SymmetricEigen::new(*inertia).eigenvalues;
    let (lm, lmax) = (e.min(), e.max());
    (k_r * lm).sqrt().min(4.0 * k_r * k_omega * lm * lm / (k_omega * k_omega * lmax + 4.0 * k_r * lm * lm))
}

/// `L₁, L₂, U` at `c₃ = c3_max/2`.
pub fn inner_loop_certificate(inertia: &Mat3, k_r: f64, k_omega: f64, psi_r: f64) -> Result<InnerReport> {
    inner_loop_matrices(inertia, k_r, k_omega, psi_r, 0.5 * c3_max(inertia, k_r, k_omega))
}

/// `L₁, L₂, U` at a given `c₃`.
pub fn inner_loop_matrices(inertia: &Mat3, k_r: f64, k_omega: f64, psi_r: f64, c3: f64) -> Result<InnerReport> {
    let e = SymmetricEigen::new(*inertia).eigenvalues;
    let (lm, lmax) = (e.min(), e.max());
    if !(lm > 0.0) {
        return Err(Error::Validation("quadrotor inertia must be positive-definite".into()));
    }
    if !(psi_r > 0.0 && psi_r < 2.0) {
        return Err(Error::Validation(format!("psi_r in (0, 2) (got {psi_r})")));
    }
    let l1 = sym_block(Matrix2::new(k_r / 2.0, -c3 / 2.0, -c3 / 2.0, lm / 2.0));
    let l2 = sym_block(Matrix2::new(k_r / (2.0 - psi_r), c3 / 2.0, c3 / 2.0, lmax / 2.0));
    let off = -c3 * k_omega / (2.0 * lm);
    let u = sym_block(Matrix2::new(c3 * k_r / lmax, off, off, k_omega - c3));
    let pass = l1.value > 0.0 && l2.value > 0.0 && u.value > 0.0 && c3 > 0.0;
    Ok(InnerReport {
        lambda_min: lm,
        lambda_max: lmax,
        c3_max: c3_max(inertia, k_r, k_omega),
        c3,
        l1,
        l2,
        u,
        pass,
    })
}

/// Outer-loop Lyapunov function evaluated on the current errors.
pub fn lyapunov(params: &SystemParams, gains: &GainSet, cross: &CrossConstants, payload: &PayloadErrors, links: &[LinkError]) -> f64 {
    let j0 = params.payload_inertia;
    let mut v = 0.5 * payload.e_v.norm_squared()
        + 0.5 * gains.position * payload.e_x.norm_squared()
        + cross.c_x * payload.e_x.dot(&payload.e_v)
        + 0.5 * payload.e_omega.dot(&(j0 * payload.e_omega))
        + gains.payload_attitude * payload.psi
        + cross.c_r * payload.e_r.dot(&(j0 * payload.e_omega));
    for l in links {
        v += 0.5 * l.e_omega.norm_squared() + gains.link_direction * l.psi + cross.c_q * l.e_q.dot(&l.e_omega);
    }
    v
}

/// Complete certificate file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub version: u32,
    pub scenario: String,
    pub gains: GainSet,
    pub domain: ErrorDomain,
    pub psi_r: f64,
    pub constants: CertificateConstants,
    pub search: SearchOutcome,
    /// Matrices at the best cross constants found.
    pub outer: Option<OuterReport>,
    pub inner: Vec<InnerReport>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Samples per second of horizon used for the trajectory bound.
pub const B_SAMPLE_RATE: f64 = 100.0;

pub fn certify(scenario: &Scenario, domain: &DomainSpec) -> Result<CertificateReport> {
    domain.validate()?;
    let params = scenario.params()?;
    let gains = scenario.gains;
    let err_domain = ErrorDomain::from_spec(domain, params.n())?;
    let horizon = scenario.sim.t_final;
    let samples = ((horizon * B_SAMPLE_RATE).ceil() as usize).max(100);
    let k = constants(&params, &scenario.command, horizon, samples)?;
    let search = search_cross_constants(&params, &gains, &err_domain, &k)?;
    let outer = search
        .cross()
        .map(|c| outer_loop_matrices(&params, &gains, &err_domain, &k, c))
        .transpose()?;
    let inner = params
        .agents
        .iter()
        .map(|a| inner_loop_certificate(&a.inertia, gains.attitude, gains.body_rate, domain.psi_r))
        .collect::<Result<Vec<_>>>()?;
    let mut failures = match &outer {
        Some(o) => o.failures.clone(),
        None => vec!["no cross constants keep the Lyapunov bounds positive-definite".into()],
    };
    for (i, r) in inner.iter().enumerate() {
        if !r.pass {
            failures.push(format!("inner loop (agent {})", i + 1));
        }
    }
    let pass = search.is_feasible() && failures.is_empty();
    Ok(CertificateReport {
        version: CERTIFICATE_VERSION,
        scenario: scenario.name.clone(),
        gains,
        domain: err_domain,
        psi_r: domain.psi_r,
        constants: k,
        search,
        outer,
        inner,
        failures,
        pass,
    })
}
