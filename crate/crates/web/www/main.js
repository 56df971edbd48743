import init, { simulate, attitude_response, allocate } from "./pkg/coopload_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const triple = (text) => text.trim().split(/[\s,]+/).map(Number);
const COLORS = ["#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#ff7f0e", "#8c564b"];

function status(id, text, error = false) {
  $(id).textContent = text;
  $(id).className = error ? "status error" : "status";
}

// Line plot of several series on a shared axis; log10 of y when `log` is set.
function plot(canvas, series, { log = false, xlabel = "", ylabel = "" } = {}) {
  const g = canvas.getContext("2d");
  const [w, h, pad] = [canvas.width, canvas.height, 40];
  g.clearRect(0, 0, w, h);
  const tf = (y) => (log ? Math.log10(Math.max(y, 1e-16)) : y);
  const pts = series.flatMap((s) => s.points);
  if (pts.length === 0) return;
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => tf(p[1]));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y1 - y0 < 1e-12) { y0 -= 1; y1 += 1; }
  const X = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const Y = (y) => h - pad - ((tf(y) - y0) / (y1 - y0)) * (h - 2 * pad);
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  g.fillStyle = "#444";
  g.font = "11px sans-serif";
  g.fillText(`${x0.toFixed(2)}`, pad, h - pad + 14);
  g.fillText(`${x1.toFixed(2)} ${xlabel}`, w - pad - 60, h - pad + 14);
  g.fillText(log ? `1e${y1.toFixed(1)}` : y1.toPrecision(3), 2, pad + 4);
  g.fillText(log ? `1e${y0.toFixed(1)}` : y0.toPrecision(3), 2, h - pad);
  g.fillText(ylabel, pad + 4, pad - 8);
  series.forEach((s, k) => {
    g.strokeStyle = s.color || COLORS[k % COLORS.length];
    g.beginPath();
    s.points.forEach(([x, y], i) => (i ? g.lineTo(X(x), Y(y)) : g.moveTo(X(x), Y(y))));
    g.stroke();
    g.fillStyle = g.strokeStyle;
    g.fillText(s.label, w - pad - 120, pad + 14 + 14 * k);
  });
}

// Top view (x right, y up) of the payload trail and the quadrotors at frame k.
function drawTop(canvas, trace, k) {
  const g = canvas.getContext("2d");
  const [w, h] = [canvas.width, canvas.height];
  const all = trace.frames.flatMap((f) => [f.payload, ...f.quads]);
  const lo = [0, 1].map((i) => Math.min(...all.map((p) => p[i])));
  const hi = [0, 1].map((i) => Math.max(...all.map((p) => p[i])));
  const span = Math.max(hi[0] - lo[0], hi[1] - lo[1]) || 1;
  const S = (p) => [20 + ((p[0] - lo[0]) / span) * (w - 40), h - 20 - ((p[1] - lo[1]) / span) * (h - 40)];
  g.clearRect(0, 0, w, h);
  g.strokeStyle = "#bbb";
  g.beginPath();
  trace.frames.slice(0, k + 1).forEach((f, i) => {
    const [x, y] = S(f.payload);
    i ? g.lineTo(x, y) : g.moveTo(x, y);
  });
  g.stroke();
  const f = trace.frames[k];
  const [px, py] = S(f.payload);
  f.quads.forEach((q, i) => {
    const [qx, qy] = S(q);
    g.strokeStyle = "#888";
    g.beginPath(); g.moveTo(px, py); g.lineTo(qx, qy); g.stroke();
    g.fillStyle = COLORS[i % COLORS.length];
    g.beginPath(); g.arc(qx, qy, 5, 0, 2 * Math.PI); g.fill();
  });
  g.fillStyle = "#333";
  g.fillRect(px - 6, py - 4, 12, 8);
  g.fillText(`t = ${f.t.toFixed(2)} s`, 8, 14);
}

let animation = null;

function runSimulation() {
  if (animation) cancelAnimationFrame(animation);
  status("sim-status", "running...");
  // Let the status repaint before the synchronous run.
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const trace = JSON.parse(simulate($("sim-gains").value === "certified", $("sim-model").value,
        num("sim-eps"), num("sim-t"), 50));
      const ms = performance.now() - t0;
      const note = trace.aborted ? ` aborted: ${trace.aborted}` : "";
      status("sim-status", `${trace.scenario}: final ‖e_x‖ = ${trace.final_position_error.toExponential(2)} m, ` +
        `${trace.frames.length} frames in ${ms.toFixed(0)} ms.${note}`, !!trace.aborted);
      const F = trace.frames;
      plot($("sim-err"), [
        { label: "‖e_x‖ [m]", points: F.map((f) => [f.t, f.e_x]) },
        { label: "Ψ₀", points: F.map((f) => [f.t, f.psi0]) },
        { label: "max Ψ_q", points: F.map((f) => [f.t, f.psi_q_max]) },
      ], { log: true, xlabel: "s" });
      let k = 0;
      const step = () => {
        drawTop($("sim-top"), trace, k);
        k += 2;
        if (k < F.length) animation = requestAnimationFrame(step);
      };
      step();
    } catch (e) {
      status("sim-status", String(e), true);
    }
  }, 10);
}

function runAttitude() {
  try {
    const tilt = (num("att-tilt") * Math.PI) / 180;
    const eps = num("att-eps");
    const args = [num("att-kr"), num("att-kw"), tilt];
    const a = JSON.parse(attitude_response(eps, ...args));
    const half = Math.max(eps / 2, 0.01);
    const b = JSON.parse(attitude_response(half, ...args));
    const settle = (r) => (r.settle_time === null ? "not within 1 s" : `${r.settle_time.toFixed(4)} s`);
    status("att-status", `c₃,max = ${a.c3_max.toFixed(6)}, certificate ${a.certificate_pass ? "holds" : "fails"}; ` +
      `Ψ_R < 1e-4 after ${settle(a)} at ε = ${eps}, ${settle(b)} at ε = ${half}`);
    plot($("att-plot"), [
      { label: `Ψ_R, ε = ${eps}`, points: a.samples.map((s) => [s[0], s[1]]) },
      { label: `Ψ_R, ε = ${half}`, points: b.samples.map((s) => [s[0], s[1]]) },
    ], { log: true, xlabel: "s" });
  } catch (e) {
    status("att-status", String(e), true);
  }
}

function runAllocation() {
  try {
    const rho = $("alloc-rho").value.trim().split("\n").filter((l) => l.trim()).flatMap(triple);
    const [f, m] = [triple($("alloc-f").value), triple($("alloc-m").value)];
    const r = JSON.parse(allocate(new Float64Array(rho), ...f, ...m));
    const table = $("alloc-table");
    table.innerHTML = "";
    if (r.lambda_min === null) {
      status("alloc-status", `rank ${r.rank} < 6: this geometry cannot produce every wrench ` +
        `(null space of dimension ${r.null_dimension}).`, true);
      return;
    }
    status("alloc-status", `rank ${r.rank}, λ_min(𝒫𝒫ᵀ) = ${r.lambda_min.toFixed(4)}, ` +
      `resultant error ${r.residual.toExponential(1)}, ${r.null_dimension} internal-force directions.`);
    table.innerHTML = "<tr><th>link</th><th>μ_x</th><th>μ_y</th><th>μ_z</th><th>‖μ‖ [N]</th></tr>" +
      r.tensions.map((t, i) => `<tr><td>${i + 1}</td>${t.map((c) => `<td>${c.toFixed(3)}</td>`).join("")}` +
        `<td>${r.magnitudes[i].toFixed(3)}</td></tr>`).join("");
  } catch (e) {
    status("alloc-status", String(e), true);
  }
}

await init();
$("sim-run").onclick = runSimulation;
$("att-run").onclick = runAttitude;
$("alloc-run").onclick = runAllocation;
runAttitude();
runAllocation();
