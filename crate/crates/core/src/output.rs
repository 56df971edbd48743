//! Run artifacts: telemetry CSV, SVG plot panels, 3D path export and a JSON
//! summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::OutputOptions;
use crate::sim::{Summary, TelemetryRecord};

/// Bumped whenever the telemetry column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PATHS_FILE: &str = "paths.obj";

/// Column names for `n` agents, in file order.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t", "x0", "y0", "z0", "ex", "ey", "ez", "ex_norm", "psi0", "eR0_norm",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 1..=n {
        for name in ["psi_q", "psi_r", "tension", "thrust", "mx", "my", "mz", "qx", "qy", "qz"] {
            h.push(format!("{name}{i}"));
        }
    }
    h.extend(
        [
            "energy",
            "res_link_norm",
            "res_rotation",
            "res_link_rate",
            "outside_domain",
            "negative_thrust",
            "degenerate_tension",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn check_nonempty(telemetry: &[TelemetryRecord]) -> Result<usize> {
    telemetry.first().map(|r| r.n()).ok_or(Error::EmptyTelemetry)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes one row per record. Floats use the shortest representation that
/// round-trips, so no precision is lost.
pub fn write_csv<W: std::io::Write>(telemetry: &[TelemetryRecord], out: W) -> Result<()> {
    let n = check_nonempty(telemetry)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(n)).map_err(csv_error)?;
    let mut row: Vec<String> = Vec::new();
    for r in telemetry {
        if r.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: r.n() });
        }
        row.clear();
        let mut push = |v: f64| row.push(v.to_string());
        push(r.t);
        r.position.iter().for_each(|v| push(*v));
        r.position_error.iter().for_each(|v| push(*v));
        push(r.position_error.norm());
        push(r.psi0);
        push(r.attitude_error);
        for i in 0..n {
            push(r.psi_q[i]);
            push(r.psi_r[i]);
            push(r.tension[i]);
            push(r.thrust[i]);
            r.moment[i].iter().for_each(|v| push(*v));
            r.quad_positions[i].iter().for_each(|v| push(*v));
        }
        push(r.energy);
        push(r.residuals.0);
        push(r.residuals.1);
        push(r.residuals.2);
        for flag in [r.flags.outside_domain, r.flags.negative_thrust, r.flags.degenerate_tension] {
            row.push(u8::from(flag).to_string());
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Payload and quadrotor trajectories as Wavefront OBJ polylines, one object
/// per body.
pub fn write_paths<W: std::io::Write>(telemetry: &[TelemetryRecord], mut out: W) -> Result<()> {
    let n = check_nonempty(telemetry)?;
    let len = telemetry.len();
    let mut s = String::new();
    let mut body = |name: &str, offset: usize, point: &dyn Fn(&TelemetryRecord) -> [f64; 3]| {
        let _ = writeln!(s, "o {name}");
        for r in telemetry {
            let p = point(r);
            let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
        }
        let _ = write!(s, "l");
        for k in 0..len {
            let _ = write!(s, " {}", offset + k + 1);
        }
        let _ = writeln!(s);
    };
    body("payload", 0, &|r| r.position.into());
    for i in 0..n {
        body(&format!("quadrotor{}", i + 1), (i + 1) * len, &|r| r.quad_positions[i].into());
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

struct Series {
    label: String,
    values: Vec<f64>,
    dashed: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: (f64, f64, f64, f64) = (64.0, 24.0, 36.0, 44.0);

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Line plot of several series against time.
fn svg_panel(title: &str, y_label: &str, t: &[f64], series: &[Series]) -> String {
    let (left, right, top, bottom) = MARGIN;
    let (t0, t1) = (t[0], *t.last().unwrap_or(&t[0]));
    let finite = series.iter().flat_map(|s| s.values.iter()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let px = |x: f64| left + (x - t0) / span_t * (WIDTH - left - right);
    let py = |y: f64| top + (hi - y) / (hi - lo) * (HEIGHT - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - left - right,
        HEIGHT - top - bottom
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (yv, tv) = (lo + f * (hi - lo), t0 + f * span_t);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            WIDTH - right,
            left - 4.0,
            py(yv) + 4.0,
            tick_label(yv),
            y = py(yv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            px(tv),
            HEIGHT - bottom + 16.0,
            tick_label(tv)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t [s]</text>"#, WIDTH / 2.0, HEIGHT - 6.0);
    let _ = writeln!(
        s,
        r#"<text transform="translate(14 {}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        HEIGHT / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (x, y) in t.iter().zip(&ser.values).filter(|(_, y)| y.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let dash = if ser.dashed { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.trim_end()
        );
        let ly = top + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - right - 6.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

/// The six panels: position error, payload attitude error, link direction
/// errors, quadrotor attitude errors, tensions, thrusts and moments.
pub fn plot_panels(telemetry: &[TelemetryRecord]) -> Result<Vec<(String, String)>> {
    let n = check_nonempty(telemetry)?;
    let t: Vec<f64> = telemetry.iter().map(|r| r.t).collect();
    let one = |label: &str, f: &dyn Fn(&TelemetryRecord) -> f64| Series {
        label: label.into(),
        values: telemetry.iter().map(f).collect(),
        dashed: false,
    };
    let per_agent = |prefix: &str, f: &dyn Fn(&TelemetryRecord, usize) -> f64| -> Vec<Series> {
        (0..n)
            .map(|i| Series {
                label: format!("{prefix}{}", i + 1),
                values: telemetry.iter().map(|r| f(r, i)).collect(),
                dashed: false,
            })
            .collect()
    };
    let mut inputs = per_agent("f", &|r, i| r.thrust[i]);
    inputs.extend(per_agent("|M|", &|r, i| r.moment[i].norm()).into_iter().map(|s| Series { dashed: true, ..s }));
    Ok(vec![
        (
            "position_error.svg".into(),
            svg_panel("Payload position error", "|e_x0| [m]", &t, &[one("|e_x0|", &|r| r.position_error.norm())]),
        ),
        (
            "payload_attitude_error.svg".into(),
            svg_panel("Payload attitude error", "Ψ0", &t, &[one("Ψ0", &|r| r.psi0)]),
        ),
        (
            "link_direction_error.svg".into(),
            svg_panel("Link direction errors", "Ψq", &t, &per_agent("Ψq", &|r, i| r.psi_q[i])),
        ),
        (
            "quadrotor_attitude_error.svg".into(),
            svg_panel("Quadrotor attitude errors", "Ψ", &t, &per_agent("Ψ", &|r, i| r.psi_r[i])),
        ),
        (
            "tension.svg".into(),
            svg_panel("Link tensions", "T [N]", &t, &per_agent("T", &|r, i| r.tension[i])),
        ),
        (
            "inputs.svg".into(),
            svg_panel("Thrust (solid) and moment magnitude (dashed)", "f [N], |M| [N m]", &t, &inputs),
        ),
    ])
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    csv_schema_version: u32,
    scenario: &'a str,
    summary: &'a Summary,
}

/// Writes the enabled artifacts into `dir` and returns their paths.
pub fn emit_outputs(
    scenario_name: &str,
    telemetry: &[TelemetryRecord],
    summary: &Summary,
    options: &OutputOptions,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    check_nonempty(telemetry)?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if options.csv {
        let path = dir.join(TELEMETRY_FILE);
        write_csv(telemetry, std::io::BufWriter::new(fs::File::create(&path)?))?;
        written.push(path);
    }
    if options.plots {
        for (name, svg) in plot_panels(telemetry)? {
            let path = dir.join(name);
            fs::write(&path, svg)?;
            written.push(path);
        }
    }
    if options.paths {
        let path = dir.join(PATHS_FILE);
        write_paths(telemetry, std::io::BufWriter::new(fs::File::create(&path)?))?;
        written.push(path);
    }
    let path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&SummaryFile {
        csv_schema_version: CSV_SCHEMA_VERSION,
        scenario: scenario_name,
        summary,
    })
    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(&path, json)?;
    written.push(path);
    Ok(written)
}
