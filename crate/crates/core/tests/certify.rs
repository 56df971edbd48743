mod common;

use coopload::certify::*;
use coopload::geom::{link_error, Mat3, Vec3};
use coopload::model::SystemParams;
use coopload::scenario::Scenario;
use coopload::sim::{run_setup, RunSetup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn certified() -> (Scenario, SystemParams, ErrorDomain, CertificateConstants) {
    let s = Scenario::figure_eight_certified();
    let p = s.params().unwrap();
    let d = ErrorDomain::from_spec(&s.domain, p.n()).unwrap();
    let k = constants(&p, &s.command, s.sim.t_final, 1000).unwrap();
    (s, p, d, k)
}

fn is_symmetric(rows: &[Vec<f64>]) -> bool {
    (0..rows.len()).all(|i| (0..rows.len()).all(|j| rows[i][j] == rows[j][i]))
}

#[test]
fn bundled_certified_gains_are_feasible() {
    let (s, p, d, k) = certified();
    let outcome = search_cross_constants(&p, &s.gains, &d, &k).unwrap();
    assert!(outcome.is_feasible(), "{outcome:?}");
    let report = outer_loop_matrices(&p, &s.gains, &d, &k, outcome.cross().unwrap()).unwrap();
    assert!(report.pass, "{:?}", report.failures);
    assert!(report.margin() > 0.0);
    for a in &report.agents {
        assert!(a.n_alpha_beta < 1.0);
        for b in [&a.w_x, &a.w_r, &a.w_q, &a.w] {
            assert!(is_symmetric(&b.rows));
        }
    }
    for b in [&report.p_x_lower, &report.p_x_upper, &report.p_r_lower, &report.p_r_upper] {
        assert!(is_symmetric(&b.rows));
    }
    let full = certify(&s, &s.domain).unwrap();
    assert!(full.pass, "{:?}", full.failures);
}

#[test]
fn zero_link_gain_is_infeasible() {
    let (mut s, p, d, k) = certified();
    s.gains.link_direction = 0.0;
    let outcome = search_cross_constants(&p, &s.gains, &d, &k).unwrap();
    assert!(!outcome.is_feasible());
}

#[test]
fn zero_position_cross_constant_fails_w_x() {
    let (s, p, d, k) = certified();
    let cross = search_cross_constants(&p, &s.gains, &d, &k).unwrap().cross().unwrap();
    let r = outer_loop_matrices(&p, &s.gains, &d, &k, CrossConstants { c_x: 0.0, ..cross }).unwrap();
    assert!(r.agents.iter().all(|a| a.w_x.value <= 0.0));
    assert!(!r.pass);
}

#[test]
fn perfect_link_tracking_removes_the_position_attitude_coupling() {
    let (s, p, _, k) = certified();
    let d = ErrorDomain::new(0.01, 1e-4, vec![1e-300; 3]).unwrap();
    let cross = CrossConstants { c_x: 0.5, c_r: 0.1, c_q: 1.0 };
    let r = outer_loop_matrices(&p, &s.gains, &d, &k, cross).unwrap();
    assert!(r.agents.iter().all(|a| a.w_xr.value < 1e-100));
}

#[test]
fn ten_fold_gains_stay_feasible() {
    let (mut s, p, d, k) = certified();
    let g = &mut s.gains;
    for v in [
        &mut g.position,
        &mut g.velocity,
        &mut g.payload_attitude,
        &mut g.payload_rate,
        &mut g.link_direction,
        &mut g.link_rate,
    ] {
        *v *= 10.0;
    }
    assert!(search_cross_constants(&p, &s.gains, &d, &k).unwrap().is_feasible());
}

#[test]
fn constants_are_invariant_under_a_common_rotation_of_the_attachments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = Scenario::figure_eight();
    let p = s.params().unwrap();
    let base = constants(&p, &s.command, 10.0, 200).unwrap();
    for _ in 0..20 {
        let q: Mat3 = common::rotation(&mut rng);
        let mut rotated = p.clone();
        for a in &mut rotated.agents {
            a.attachment = q * a.attachment;
        }
        let k = constants(&rotated, &s.command, 10.0, 200).unwrap();
        assert!((k.lambda_ppt - base.lambda_ppt).abs() < 1e-12);
        assert!((k.gamma - base.gamma).abs() < 1e-12);
        assert!((k.beta - base.beta).abs() < 1e-12);
        for i in 0..3 {
            assert!((k.delta[i] - base.delta[i]).abs() < 1e-12);
            assert!((k.sigma[i] - base.sigma[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn c3_bound_is_monotone_in_the_attitude_gain() {
    let j = Mat3::from_diagonal(&Vec3::new(0.0820, 0.0845, 0.1377));
    for k_omega in [0.1, 0.5, 2.0] {
        let mut last = 0.0;
        for k in 1..=60 {
            let c = c3_max(&j, 0.05 * k as f64, k_omega);
            assert!(c >= last);
            last = c;
        }
    }
}

#[test]
fn trajectory_bound_converges_under_refinement() {
    let s = Scenario::figure_eight();
    let p = s.params().unwrap();
    let coarse = estimate_b(&p, &s.command, 10.0, 1000).unwrap();
    let fine = estimate_b(&p, &s.command, 10.0, 8000).unwrap();
    assert!(fine >= coarse);
    assert!((fine - coarse) / fine < 0.01);
}

#[test]
fn report_serializes_every_matrix() {
    let s = Scenario::figure_eight_certified();
    let json = serde_json::to_value(certify(&s, &s.domain).unwrap()).unwrap();
    for key in ["constants", "search", "outer", "inner", "gains", "domain", "pass"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let agent = &json["outer"]["agents"][0];
    for key in ["w_x", "w_r", "w_q", "w_xr", "w_xq", "w_rq", "w"] {
        assert!(agent[key]["rows"].is_array(), "{key}");
    }
    assert_eq!(json["search"]["status"], "feasible");
    assert_eq!(json["inner"].as_array().unwrap().len(), 3);
}

/// Outer Lyapunov function, sampled at 10 Hz, never grows along certified
/// runs started inside the domain.
#[test]
fn lyapunov_function_decreases_on_certified_runs() {
    let base = Scenario::figure_eight_certified();
    let p = base.params().unwrap();
    let cross = certify(&base, &base.domain).unwrap().search.cross().unwrap();
    for seed in 0..50 {
        let mut s = base.clone();
        s.sim.seed = seed;
        let mut values = Vec::new();
        let setup = RunSetup::from_scenario(&s).unwrap();
        let stride = (s.sim.log_rate / 10.0).round() as usize;
        let mut tick = 0usize;
        let result = run_setup(setup, |t| {
            if tick % stride == 0 {
                let a = &t.control.allocation;
                let links: Vec<_> = t
                    .state
                    .agents
                    .iter()
                    .zip(&a.setpoints)
                    .map(|(ag, sp)| link_error(&ag.link_dir, &sp.q_d, &ag.link_rate, &sp.omega_d))
                    .collect();
                values.push(lyapunov(&p, &s.gains, &cross, &a.errors, &links));
            }
            tick += 1;
        })
        .unwrap();
        assert!(result.abort.is_none());
        for w in values.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}
