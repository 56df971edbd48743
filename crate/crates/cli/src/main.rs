//! `coopload` command-line driver.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 numerical abort, 4 certificate fail.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use coopload::certify::certify;
use coopload::error::Error;
use coopload::output::{emit_outputs, write_csv};
use coopload::scenario::{load_scenario, DomainSpec, Scenario};
use coopload::sim::{run, run_passive, RunResult};

#[derive(Parser)]
#[command(name = "coopload", version, about = "Rigid payload carried by quadrotors on rigid links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop run; writes telemetry, plots, paths and a summary.
    Simulate {
        /// Scenario file (TOML or JSON), or a bundled name: fig8_paper, fig8_certified.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// simplified | full
        #[arg(long)]
        model: Option<String>,
        /// Integration step [s].
        #[arg(long)]
        dt: Option<f64>,
        /// Final time [s].
        #[arg(long)]
        tfinal: Option<f64>,
    },
    /// Gain certificate as JSON.
    Certify {
        #[arg(long)]
        scenario: String,
        /// e_x,max, ψ_R0 and ψ_q, comma separated.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-input energy and momentum audit from the scenario's initial state.
    Passive {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tfinal: Option<f64>,
        /// Also write the sampled report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a scenario field, in parallel; one CSV each.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// `path=v1,v2,...`, e.g. `gains.epsilon=0.2,0.1,0.05`.
        #[arg(long)]
        param: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
}

/// A failed command and its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::Io(_) | Error::RankDeficient { .. } | Error::DimensionMismatch { .. } => 2,
        _ => 3,
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn load(name: &str) -> Result<Scenario, Failure> {
    let path = Path::new(name);
    if !path.exists() {
        match name {
            "fig8_paper" => return Ok(Scenario::figure_eight()),
            "fig8_certified" => return Ok(Scenario::figure_eight_certified()),
            _ => {}
        }
    }
    load_scenario(path).map_err(|e| match e {
        Error::Io(io) => invalid(format!("cannot read {name}: {io}")),
        other => other.into(),
    })
}

fn json_to(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| invalid(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn simulate(name: &str, out: &Path, model: Option<&str>, dt: Option<f64>, tfinal: Option<f64>) -> Result<(), Failure> {
    let mut s = load(name)?;
    if let Some(m) = model {
        s.sim.model = m.parse()?;
    }
    if let Some(dt) = dt {
        s.sim.dt = dt;
    }
    if let Some(t) = tfinal {
        s.sim.t_final = t;
    }
    s.validate()?;
    let result = run(&s)?;
    let files = emit_outputs(&s.name, &result.telemetry, &result.summary, &s.output, out)?;
    let m = &result.summary;
    println!(
        "{}: t = {:.3} s, ‖e_x‖ = {:.3e} m, Ψ₀ = {:.3e}, max Ψ_q = {:.3e}, {} files in {}",
        s.name,
        m.t_end,
        m.final_position_error,
        m.final_psi0,
        m.final_psi_q_max,
        files.len(),
        out.display()
    );
    match result.abort {
        Some(e) => Err(Failure {
            code: 3,
            message: format!("aborted, partial telemetry kept: {e}"),
        }),
        None => Ok(()),
    }
}

fn parse_domain(text: &str, base: &DomainSpec) -> Result<DomainSpec, Failure> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("--domain: {e}")))?;
    match values.as_slice() {
        [e_x_max, psi_r0, psi_q] => Ok(DomainSpec {
            e_x_max: *e_x_max,
            psi_r0: *psi_r0,
            psi_q: *psi_q,
            psi_r: base.psi_r,
        }),
        _ => Err(invalid("--domain expects three values: exmax,psiR,psiq")),
    }
}

fn certify_cmd(name: &str, domain: Option<&str>, out: &Path) -> Result<(), Failure> {
    let s = load(name)?;
    let domain = match domain {
        Some(text) => parse_domain(text, &s.domain)?,
        None => s.domain,
    };
    let report = certify(&s, &domain)?;
    json_to(out, &report)?;
    let margin = report.outer.as_ref().map_or(f64::NAN, |o| o.margin());
    println!(
        "{}: certificate {} (min λ_min(Wᵢ) = {margin:.4}), written to {}",
        s.name,
        if report.pass { "PASS" } else { "FAIL" },
        out.display()
    );
    for f in &report.failures {
        println!("  fails: {f}");
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure {
            code: 4,
            message: "certificate conditions do not hold".into(),
        })
    }
}

fn passive(name: &str, dt: Option<f64>, tfinal: Option<f64>, out: Option<&Path>) -> Result<(), Failure> {
    let s = load(name)?;
    let dt = dt.unwrap_or(s.sim.dt);
    let t_final = tfinal.unwrap_or(s.sim.t_final);
    if !(dt > 0.0 && t_final > 0.0 && dt.is_finite() && t_final.is_finite()) {
        return Err(invalid("dt > 0 and tfinal > 0"));
    }
    let report = run_passive(&s.params()?, &s.initial_state()?, dt, t_final, s.sim.log_rate)?;
    println!(
        "{}",
        serde_json::json!({
            "scenario": s.name,
            "dt": report.dt,
            "t_final": report.t_final,
            "initial_energy": report.initial_energy,
            "max_relative_energy_drift": report.max_relative_energy_drift,
            "max_horizontal_momentum_drift": report.max_horizontal_momentum_drift,
            "max_residual": report.max_residual,
        })
    );
    if let Some(path) = out {
        json_to(path, &report)?;
    }
    Ok(())
}

/// File-system safe label for one sweep value.
fn label(path: &str, value: &str) -> String {
    let clean = |s: &str| s.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect::<String>();
    format!("{}={}", clean(path), clean(value))
}

fn sweep(name: &str, param: &str, out: &Path) -> Result<(), Failure> {
    let base = load(name)?;
    let (path, values) = param
        .split_once('=')
        .ok_or_else(|| invalid("--param expects path=v1,v2,..."))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(invalid("--param lists no values"));
    }
    let runs = values
        .iter()
        .map(|v| Ok((label(path, v), base.with_override(path, v)?)))
        .collect::<Result<Vec<_>, Error>>()?;
    fs::create_dir_all(out).map_err(|e| invalid(format!("{}: {e}", out.display())))?;

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(runs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunResult, Error>>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((_, s)) = runs.get(k) else { break };
                let r = run(s);
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });

    let mut worst = 0u8;
    for ((label, _), result) in runs.iter().zip(results.into_inner().unwrap()) {
        let file = out.join(format!("{label}.csv"));
        match result.expect("every run is claimed by a worker") {
            Ok(r) => {
                if !r.telemetry.is_empty() {
                    let w = fs::File::create(&file).map_err(|e| invalid(format!("{}: {e}", file.display())))?;
                    write_csv(&r.telemetry, std::io::BufWriter::new(w))?;
                }
                let status = match &r.abort {
                    Some(e) => {
                        worst = worst.max(3);
                        format!("aborted ({e})")
                    }
                    None => "ok".to_string(),
                };
                println!(
                    "{label}: {status}, t = {:.3} s, ‖e_x‖ = {:.3e} m -> {}",
                    r.summary.t_end,
                    r.summary.final_position_error,
                    file.display()
                );
            }
            Err(e) => {
                worst = worst.max(exit_code(&e));
                println!("{label}: failed ({e})");
            }
        }
    }
    match worst {
        0 => Ok(()),
        code => Err(Failure {
            code,
            message: "some sweep runs failed".into(),
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            scenario,
            out,
            model,
            dt,
            tfinal,
        } => simulate(scenario, out, model.as_deref(), *dt, *tfinal),
        Command::Certify { scenario, domain, out } => certify_cmd(scenario, domain.as_deref(), out),
        Command::Passive { scenario, dt, tfinal, out } => passive(scenario, *dt, *tfinal, out.as_deref()),
        Command::Sweep { scenario, param, out } => sweep(scenario, param, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
