import init, { simulate_paths_json, residual_sparsity_json, multiplier_autocov_json } from "./pkg/hicov_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function parse(text) {
  const v = JSON.parse(text);
  if (v.error) throw new Error(v.error);
  return v;
}

function guarded(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      alert(e.message);
    }
  };
}

function lines(canvas, series, colors) {
  const g = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  g.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const x of s) { lo = Math.min(lo, x); hi = Math.max(hi, x); }
  if (hi === lo) hi = lo + 1;
  const y = (x) => h - 4 - ((x - lo) / (hi - lo)) * (h - 8);
  series.forEach((s, k) => {
    g.strokeStyle = colors[k % colors.length];
    g.beginPath();
    s.forEach((x, t) => {
      const px = (t / (s.length - 1)) * w;
      t === 0 ? g.moveTo(px, y(x)) : g.lineTo(px, y(x));
    });
    g.stroke();
  });
}

// diverging blue/white/red for values in [-1, 1]
function shade(v) {
  if (v === null || Number.isNaN(v)) return "#999";
  const c = Math.max(-1, Math.min(1, v));
  const a = Math.round(255 * (1 - Math.abs(c)));
  return c >= 0 ? `rgb(255,${a},${a})` : `rgb(${a},${a},255)`;
}

function heatmap(canvas, d, cell) {
  const g = canvas.getContext("2d");
  const s = canvas.width / d;
  g.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < d; i++) {
    for (let j = 0; j < d; j++) {
      g.fillStyle = cell(i, j);
      g.fillRect(j * s, i * s, Math.ceil(s), Math.ceil(s));
    }
  }
}

function runPaths() {
  const v = parse(simulate_paths_json(num("p-n"), num("p-d"), num("p-rho"), num("p-blocks"), num("p-seed")));
  const palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
  const factor = v.prices.length - 1;
  lines($("p-plot"), v.prices, v.prices.map((_, k) => (k === factor ? "#000" : palette[k % palette.length])));
  const d = factor;
  heatmap($("p-truth"), d, (i, j) => (i === j ? "#444" : v.null_truth[i * d + j] ? "#fff" : "#333"));
}

function runSparsity() {
  const v = parse(residual_sparsity_json(
    num("s-n"), num("s-d"), num("s-rho"), num("s-blocks"), num("s-alpha"), num("s-b"),
    $("s-method").value === "rw", $("s-factor").checked, num("s-seed"),
  ));
  const d = v.asset_ids.length;
  heatmap($("s-corr"), d, (i, j) => (v.mask[i * d + j] ? "#fff" : shade(v.correlation[i * d + j])));
  heatmap($("s-truth"), d, (i, j) => (i === j ? "#444" : v.null_truth[i * d + j] ? "#fff" : "#333"));
  $("s-summary").textContent =
    `significant pairs: ${v.significant_pairs} of ${v.pairs}\n` +
    `false discoveries: ${v.false_discoveries}\n` +
    `missed nonzero pairs: ${v.missed}`;
}

function runMultipliers() {
  const v = parse(multiplier_autocov_json(num("m-n"), num("m-reps"), num("m-lag"), num("m-seed")));
  const c = $("m-acf");
  const g = c.getContext("2d");
  const { width: w, height: h } = c;
  g.clearRect(0, 0, w, h);
  const zero = h * 0.6;
  const scale = h * 0.55;
  const bw = w / v.lags.length;
  g.strokeStyle = "#aaa";
  g.beginPath(); g.moveTo(0, zero); g.lineTo(w, zero); g.stroke();
  v.lags.forEach((_, k) => {
    g.fillStyle = "#1f77b4";
    const e = v.empirical[k];
    g.fillRect(k * bw + bw * 0.2, Math.min(zero, zero - e * scale), bw * 0.6, Math.abs(e) * scale);
    g.fillStyle = "#d62728";
    g.beginPath();
    g.arc(k * bw + bw / 2, zero - v.theoretical[k] * scale, 4, 0, 2 * Math.PI);
    g.fill();
    g.fillStyle = "#222";
    g.fillText(String(k), k * bw + bw / 2 - 3, h - 4);
  });
  lines($("m-sample"), [v.sample], ["#2ca02c"]);
}

await init();
$("p-run").onclick = guarded(runPaths);
$("s-run").onclick = guarded(runSparsity);
$("m-run").onclick = guarded(runMultipliers);
runPaths();
runSparsity();
runMultipliers();
