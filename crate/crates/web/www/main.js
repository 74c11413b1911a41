// Built with: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { eta, torus_flow, heat_kernel_slice } from "./pkg/subflow_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(f, out) {
  const r = JSON.parse(f());
  if (r.error) {
    $(out).textContent = "error: " + r.error;
    return null;
  }
  return r;
}

function plotLog(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const pad = 30;
  const all = series.flatMap((s) => s.ys).filter((v) => v > 0);
  const lo = Math.log10(Math.min(...all));
  const hi = Math.log10(Math.max(...all));
  const x0 = xs[0], x1 = xs[xs.length - 1] || 1;
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((Math.log10(y) - lo) / (hi - lo || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(`1e${hi.toFixed(1)}`, 2, pad);
  ctx.fillText(`1e${lo.toFixed(1)}`, 2, h - pad);
  ctx.fillText(`t = ${x1.toFixed(2)}`, w - pad - 40, h - 8);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    xs.forEach((x, i) => {
      const y = s.ys[i];
      if (y > 0) i === 0 ? ctx.moveTo(px(x), py(y)) : ctx.lineTo(px(x), py(y));
    });
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, pad + 8, pad + 14 + 14 * k);
  });
}

function heatmap(canvas, grid) {
  const ctx = canvas.getContext("2d");
  const n = grid.length;
  const cell = canvas.width / n;
  const vals = grid.flat();
  const lo = Math.min(...vals), hi = Math.max(...vals);
  grid.forEach((row, j) =>
    row.forEach((v, i) => {
      const s = (v - lo) / (hi - lo || 1);
      ctx.fillStyle = `rgb(${Math.round(255 * s)}, ${Math.round(80 + 100 * s)}, ${Math.round(255 * (1 - s))})`;
      ctx.fillRect(i * cell, (n - 1 - j) * cell, cell, cell);
    }),
  );
}

function runEta() {
  const r = call(() => eta($("eta-model").value), "eta-out");
  if (!r) return;
  $("eta-out").textContent = [
    `step: ${r.step ?? "not bracket generating"}`,
    `eta_min = ${r.eta_min}`,
    `threshold eta_min/2 = ${r.threshold}`,
    ...r.brackets,
  ].join("\n");
}

function runFlow() {
  $("flow-out").textContent = "running...";
  setTimeout(() => {
    const r = call(() => torus_flow(num("flow-n"), num("flow-eps"), num("flow-amp"), num("flow-seed"), num("flow-t")), "flow-out");
    if (!r) return;
    const below = r.lambda_g < r.threshold;
    $("flow-out").textContent =
      `grid ${r.grid}  dt ${r.dt.toExponential(3)}  steps ${r.steps}  outcome ${r.outcome}\n` +
      `lambda_G = ${r.lambda_g.toFixed(4)}  threshold ${r.threshold}  ${below ? "below: convergence guaranteed" : "above: no guarantee"}`;
    const e0 = Math.min(...r.e_g);
    plotLog($("flow-plot"), r.t, [
      { label: "sup |tau|", ys: r.sup_tau, color: "#c33" },
      { label: "E_G - min E_G + 1e-12", ys: r.e_g.map((e) => e - e0 + 1e-12), color: "#36c" },
      { label: "E_V", ys: r.e_v, color: "#393" },
    ]);
  }, 10);
}

function runKernel() {
  $("kernel-out").textContent = "decomposing...";
  setTimeout(() => {
    const r = call(() => heat_kernel_slice(num("kernel-n"), num("kernel-t")), "kernel-out");
    if (!r) return;
    $("kernel-out").textContent =
      `grid ${r.grid}  t = ${r.t}  lambda_1 = ${r.lambda_1.toFixed(4)}\n` +
      `kernel row range [${r.min.toExponential(3)}, ${r.max.toExponential(3)}]\n` +
      `along z at x = y = 0: ${r.z_column.slice(0, 8).map((v) => v.toFixed(3)).join(" ")} ...`;
    heatmap($("kernel-plot"), r.slice);
  }, 10);
}

await init();
$("eta-run").onclick = runEta;
$("flow-run").onclick = runFlow;
$("kernel-run").onclick = runKernel;
runEta();
