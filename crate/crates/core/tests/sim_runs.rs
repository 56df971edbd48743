use coopload::control::GainSet;
use coopload::scenario::{parse_scenario, Format, Scenario, FIG8_CERTIFIED_TOML};
use coopload::sim::{run, state_on_command};

#[test]
fn state_on_command_has_no_tracking_error() {
    let s = Scenario::figure_eight();
    let p = s.params().unwrap();
    let ctl = s.controller(&p).unwrap();
    for t in [0.0, 1.3, 4.0] {
        let state = state_on_command(&p, &ctl, &s.command, t).unwrap();
        let a = ctl.payload().evaluate(&p, &state, &s.command).unwrap();
        assert!(a.errors.e_x.norm() < 1e-15 && a.errors.psi.abs() < 1e-15);
        for (ag, sp) in state.agents.iter().zip(&a.setpoints) {
            assert!((ag.link_dir - sp.q_d).norm() < 1e-12, "t = {t}");
            assert!((ag.link_rate - sp.omega_d).norm() < 1e-9, "t = {t}");
        }
    }
}

#[test]
fn zero_gains_run_without_crashing() {
    let mut s = Scenario::figure_eight();
    s.gains = GainSet {
        position: 0.0,
        velocity: 0.0,
        payload_attitude: 0.0,
        payload_rate: 0.0,
        ..s.gains
    };
    s.sim.model = "simplified".parse().unwrap();
    s.sim.t_final = 2.0;
    s.validate().unwrap();
    let r = run(&s).unwrap();
    assert!(!r.telemetry.is_empty());
    // Without payload feedback the initial offset is never removed.
    assert!(r.telemetry.last().unwrap().position_error.norm() > 0.5 || r.abort.is_some());
}

#[test]
fn simplified_and_fast_inner_loop_runs_agree() {
    let mut simple = Scenario::figure_eight();
    simple.sim.model = "simplified".parse().unwrap();
    let mut full = Scenario::figure_eight();
    full.gains.epsilon = 0.02;
    let a = run(&simple).unwrap();
    let b = run(&full).unwrap();
    assert!(a.abort.is_none() && b.abort.is_none());
    let window = |r: &coopload::sim::RunResult| -> Vec<f64> {
        r.telemetry
            .iter()
            .filter(|x| x.t >= 2.0 - 1e-9 && x.t <= 10.0 + 1e-9)
            .map(|x| x.position_error.norm())
            .collect()
    };
    let (ea, eb) = (window(&a), window(&b));
    assert_eq!(ea.len(), eb.len());
    let rms = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (s / n as f64).sqrt()
    };
    let diff = rms(&mut ea.iter().zip(&eb).map(|(x, y)| x - y));
    let scale = rms(&mut ea.iter().copied());
    assert!(diff <= 0.1 * scale, "rms difference {diff:.3e} vs rms {scale:.3e}");
}

#[test]
fn certified_scenario_starts_inside_its_domain() {
    let s = parse_scenario(FIG8_CERTIFIED_TOML, Format::Toml, "certified").unwrap();
    for seed in 0..10 {
        let mut s = s.clone();
        s.sim.seed = seed;
        let state = s.initial_state().unwrap();
        let p = s.params().unwrap();
        let ctl = s.controller(&p).unwrap();
        let a = ctl.payload().evaluate(&p, &state, &s.command).unwrap();
        assert!(a.errors.e_x.norm() < s.domain.e_x_max);
        assert!(a.errors.psi < s.domain.psi_r0);
        for (ag, sp) in state.agents.iter().zip(&a.setpoints) {
            assert!(1.0 - ag.link_dir.dot(&sp.q_d) < s.domain.psi_q);
        }
    }
}

#[test]
fn on_command_rejects_explicit_state() {
    let text = FIG8_CERTIFIED_TOML.replace("on_command = true", "on_command = true\nposition = [1.0, 0.0, 0.0]");
    let err = parse_scenario(&text, Format::Toml, "x").and_then(|s| s.validate());
    assert!(err.is_err());
}
