//! Browser bindings. Each export returns a JSON string; the plain Rust
//! functions behind them are what the native tests exercise.

use coopload::certify::{c3_max, inner_loop_certificate};
use coopload::control::attitude::{boundary_layer, AttitudeSetpoint};
use coopload::control::{build_p, null_directions, resultant, Allocator};
use coopload::geom::{exp_so3, Mat3, Vec3, E3};
use coopload::scenario::Scenario;
use coopload::sim::run;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest simulated horizon the page may request [s].
pub const MAX_T_FINAL: f64 = 20.0;

#[derive(Debug, Clone, Serialize)]
pub struct Frame {
    pub t: f64,
    pub payload: [f64; 3],
    pub quads: Vec<[f64; 3]>,
    pub e_x: f64,
    pub psi0: f64,
    pub psi_q_max: f64,
    pub tension: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub scenario: String,
    pub frames: Vec<Frame>,
    pub final_position_error: f64,
    pub aborted: Option<String>,
}

/// Figure-eight run, the bundled scenario or its certified variant, logged
/// at `frame_rate` Hz.
pub fn figure_eight(certified: bool, model: &str, epsilon: f64, t_final: f64, frame_rate: f64) -> Result<Trace, String> {
    let mut s = if certified {
        Scenario::figure_eight_certified()
    } else {
        Scenario::figure_eight()
    };
    if !(t_final > 0.0 && t_final <= MAX_T_FINAL) {
        return Err(format!("final time must be in (0, {MAX_T_FINAL}] s"));
    }
    s.sim.model = model.parse().map_err(|e: coopload::error::Error| e.to_string())?;
    s.gains.epsilon = epsilon;
    s.sim.t_final = t_final;
    s.sim.log_rate = frame_rate;
    s.validate().map_err(|e| e.to_string())?;
    let r = run(&s).map_err(|e| e.to_string())?;
    Ok(Trace {
        scenario: s.name,
        frames: r
            .telemetry
            .iter()
            .map(|x| Frame {
                t: x.t,
                payload: x.position.into(),
                quads: x.quad_positions.iter().map(|p| (*p).into()).collect(),
                e_x: x.position_error.norm(),
                psi0: x.psi0,
                psi_q_max: x.psi_q.iter().copied().fold(0.0, f64::max),
                tension: x.tension.clone(),
            })
            .collect(),
        final_position_error: r.summary.final_position_error,
        aborted: r.abort.map(|e| e.to_string()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InnerResponse {
    pub c3_max: f64,
    pub certificate_pass: bool,
    /// First time after which `Ψ_R` stays below `1e-4`.
    pub settle_time: Option<f64>,
    /// `(t, Ψ_R, ‖e_Ω‖)` every millisecond.
    pub samples: Vec<[f64; 3]>,
}

/// Attitude loop of one quadrotor, with the bundled inertia, recovering from
/// a tilt of `angle` radians toward a level setpoint.
pub fn inner_loop(epsilon: f64, k_r: f64, k_omega: f64, angle: f64) -> Result<InnerResponse, String> {
    if !(angle.abs() < std::f64::consts::PI) {
        return Err("tilt must be below π".into());
    }
    let s = Scenario::figure_eight();
    let inertia = s.params().map_err(|e| e.to_string())?.agents[0].inertia;
    let mut gains = s.gains;
    gains.epsilon = epsilon;
    gains.attitude = k_r;
    gains.body_rate = k_omega;
    gains.validate().map_err(|e| e.to_string())?;
    let setpoint = AttitudeSetpoint {
        r_c: Mat3::identity(),
        omega_c: Vec3::zeros(),
        omega_c_dot: Vec3::zeros(),
        b3: E3,
        b1: Vec3::x(),
    };
    let r0 = exp_so3(&(Vec3::new(1.0, 1.0, 0.0).normalize() * angle));
    let dt = 1e-4;
    let run = boundary_layer(&inertia, &gains, &setpoint, &r0, &Vec3::zeros(), dt, 1.0).map_err(|e| e.to_string())?;
    let settle_time = match run.iter().rposition(|x| x.psi >= 1e-4) {
        None => Some(0.0),
        Some(k) => run.get(k + 1).map(|x| x.t),
    };
    let cert = inner_loop_certificate(&inertia, k_r, k_omega, s.domain.psi_r).map_err(|e| e.to_string())?;
    Ok(InnerResponse {
        c3_max: c3_max(&inertia, k_r, k_omega),
        certificate_pass: cert.pass,
        settle_time,
        samples: run.iter().step_by(10).map(|x| [x.t, x.psi, x.e_omega]).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationView {
    pub rank: usize,
    /// Present when the geometry has rank 6.
    pub lambda_min: Option<f64>,
    pub tensions: Vec<[f64; 3]>,
    pub magnitudes: Vec<f64>,
    /// Largest resultant error against the requested wrench.
    pub residual: f64,
    pub null_dimension: usize,
}

/// Minimum-norm tensions for a wrench on a level payload. `attachments` holds
/// three coordinates per link.
pub fn allocation(attachments: &[f64], force: [f64; 3], moment: [f64; 3]) -> Result<AllocationView, String> {
    if attachments.is_empty() || attachments.len() % 3 != 0 || !attachments.iter().all(|x| x.is_finite()) {
        return Err("attachments must be finite coordinate triples".into());
    }
    let rho: Vec<Vec3> = attachments.chunks(3).map(Vec3::from_column_slice).collect();
    let (_, rank) = build_p(&rho);
    let null_dimension = null_directions(&rho).len();
    let (f, m) = (Vec3::from(force), Vec3::from(moment));
    let Ok(alloc) = Allocator::new(&rho) else {
        return Ok(AllocationView {
            rank,
            lambda_min: None,
            tensions: Vec::new(),
            magnitudes: Vec::new(),
            residual: f64::NAN,
            null_dimension,
        });
    };
    let r0 = Mat3::identity();
    let mu = alloc.allocate(&r0, &f, &m);
    let (rf, rm) = resultant(&rho, &r0, &mu);
    Ok(AllocationView {
        rank,
        lambda_min: Some(alloc.lambda_min()),
        magnitudes: mu.iter().map(|v| v.norm()).collect(),
        tensions: mu.iter().map(|v| (*v).into()).collect(),
        residual: (rf - f).norm().max((rm - m).norm()),
        null_dimension,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(certified: bool, model: &str, epsilon: f64, t_final: f64, frame_rate: f64) -> Result<String, JsError> {
    to_json(figure_eight(certified, model, epsilon, t_final, frame_rate))
}

#[wasm_bindgen]
pub fn attitude_response(epsilon: f64, k_r: f64, k_omega: f64, angle: f64) -> Result<String, JsError> {
    to_json(inner_loop(epsilon, k_r, k_omega, angle))
}

#[wasm_bindgen]
pub fn allocate(attachments: &[f64], fx: f64, fy: f64, fz: f64, mx: f64, my: f64, mz: f64) -> Result<String, JsError> {
    to_json(allocation(attachments, [fx, fy, fz], [mx, my, mz]))
}
