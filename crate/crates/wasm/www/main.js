import init, { RuleLab } from "./pkg/rulepilot_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

let lab = null;
let curves = [];

function fail(e) {
  $("error").textContent = String(e && e.message ? e.message : e);
}

function axes(ctx, w, h, xs, ys, pad) {
  const [x0, x1] = xs, [y0, y1] = ys;
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad, pad); ctx.lineTo(pad, h - pad); ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(y.toFixed(3), 2, sy(y) + 3);
    const x = x0 + ((x1 - x0) * i) / 4;
    ctx.fillText(Number.isInteger(x1) ? Math.round(x) : x.toFixed(2), sx(x) - 10, h - pad + 14);
  }
  return { sx, sy };
}

function line(ctx, pts, sx, sy, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
  ctx.stroke();
}

function drawCurves() {
  const c = $("curves"), ctx = c.getContext("2d");
  if (!curves.length) { ctx.clearRect(0, 0, c.width, c.height); return; }
  const all = curves.flatMap((k) => k.points);
  const xs = [0, Math.max(...all.map((p) => p[0]))];
  const ys = [Math.min(...all.map((p) => p[1])), Math.max(...all.map((p) => p[1]))];
  const { sx, sy } = axes(ctx, c.width, c.height, xs, ys, 50);
  curves.forEach((k, i) => {
    const color = colors[i % colors.length];
    line(ctx, k.points, sx, sy, color);
    ctx.fillStyle = color;
    ctx.fillText(k.label, c.width - 260, 16 + 14 * i);
  });
}

function config() {
  const method = $("method").value;
  const theta = method === "random"
    ? { rho: num("rho") }
    : method === "greedy"
      ? { backtracking: $("backtracking").checked }
      : { psi: num("psi"), alpha: num("alpha"), rho: num("rho") };
  return {
    method, theta,
    arp: $("arp").checked,
    seed: num("seed"),
    stopping: { max_evaluations: num("budget") },
  };
}

$("generate").onclick = () => {
  try {
    $("error").textContent = "";
    lab = new RuleLab(num("rows"), BigInt(num("seed")));
    const s = JSON.parse(lab.summary());
    $("summary").textContent = s.splits
      .map((x) => `${x.split.padEnd(10)} rows ${x.rows}  recall ${x.original.recall.toFixed(4)}  alerts ${x.original.alert_rate.toFixed(4)}  loss ${x.original.loss.toFixed(4)}`)
      .join("\n") + `\nrules ${s.rules}, with alternative priorities ${s.arp_pool}`;
    curves = [];
    drawCurves();
  } catch (e) { fail(e); }
};

$("run").onclick = () => {
  if (!lab) $("generate").onclick();
  try {
    $("error").textContent = "";
    const cfg = config();
    const r = JSON.parse(lab.optimize(JSON.stringify(cfg)));
    const points = r.trace.map((t) => [t.eval_index, t.best_loss]);
    const v = r.report.splits.find((s) => s.split === "validation");
    curves.push({ label: `${cfg.method}${cfg.arp ? "+arp" : ""}: val ${v.optimized.loss.toFixed(4)}`, points });
    drawCurves();
    $("result").textContent = r.report.splits
      .map((s) => `${s.split.padEnd(10)} loss ${s.original.loss.toFixed(4)} -> ${s.optimized.loss.toFixed(4)}  recall ${s.optimized.recall.toFixed(4)}`)
      .join("\n") + `\nrules removed: ${r.report.removed.length}, evaluations: ${r.report.evaluations}`;
  } catch (e) { fail(e); }
};

$("clear").onclick = () => { curves = []; drawCurves(); };

$("sweep").onclick = () => {
  if (!lab) $("generate").onclick();
  try {
    $("error").textContent = "";
    const r = JSON.parse(lab.rhoSweep(num("step"), BigInt(num("sweep-budget")), BigInt(num("seed"))));
    const c = $("sweep-plot"), ctx = c.getContext("2d");
    const train = r.points.map((p) => [p.rho, p.train]);
    const val = r.points.map((p) => [p.rho, p.validation]);
    const ys = [...train, ...val].map((p) => p[1]);
    const { sx, sy } = axes(ctx, c.width, c.height, [0, 1.0001], [Math.min(...ys), Math.max(...ys)], 50);
    line(ctx, train, sx, sy, colors[0]);
    line(ctx, val, sx, sy, colors[1]);
    ctx.fillStyle = colors[0]; ctx.fillText("train", c.width - 120, 16);
    ctx.fillStyle = colors[1]; ctx.fillText("validation", c.width - 120, 30);
  } catch (e) { fail(e); }
};

await init();
$("generate").onclick();
