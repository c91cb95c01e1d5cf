import init, { maskText, similarityMatrix, FusionDemo } from "./pkg/sieve_web.js";

const $ = (id) => document.getElementById(id);

function show(el, f) {
  try {
    el.textContent = f();
  } catch (e) {
    el.textContent = `error: ${e.message ?? e}`;
  }
}

function runMask() {
  show($("mask-out"), () => maskText($("mask-in").value, $("mask-phrases").value));
}

function runMatrix() {
  const out = $("sim-out");
  let m;
  try {
    m = JSON.parse(similarityMatrix($("sim-in").value));
  } catch (e) {
    out.textContent = `error: ${e.message ?? e}`;
    return;
  }
  const table = document.createElement("table");
  table.className = "sim";
  m.values.forEach((row, i) => {
    const tr = table.insertRow();
    const th = document.createElement("th");
    th.textContent = m.masked[i];
    th.title = m.texts[i];
    tr.appendChild(th);
    for (const v of row) {
      const td = tr.insertCell();
      td.textContent = v.toFixed(2);
      const shade = Math.round(255 - 155 * Math.max(0, v));
      td.style.background = `rgb(${shade},${shade},255)`;
    }
  });
  out.replaceChildren(table);
}

function drawCurve(points) {
  const c = $("fx-curve");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const ys = points.map((p) => p.precision ?? 0);
  const lo = Math.min(...ys) - 0.01;
  const hi = Math.max(...ys) + 0.01;
  const x = (a) => 20 + a * (c.width - 40);
  const y = (v) => c.height - 20 - ((v - lo) / (hi - lo)) * (c.height - 40);
  g.strokeStyle = "#36c";
  g.beginPath();
  points.forEach((p, i) => (i ? g.lineTo : g.moveTo).call(g, x(p.alpha), y(ys[i])));
  g.stroke();
  g.fillStyle = "#222";
  g.fillText(`precision vs alpha (${hi.toFixed(3)} top, ${lo.toFixed(3)} bottom)`, 24, 14);
}

let demo;

function runFusion() {
  const alpha = Number($("fx-alpha").value);
  const k = Number($("fx-k").value);
  $("fx-alpha-v").textContent = alpha;
  $("fx-k-v").textContent = k;
  show($("fx-out"), () => {
    const p = JSON.parse(demo.evaluate(alpha, k));
    const fmt = (v) => (v == null ? "n/a" : v.toFixed(4));
    return `selected ${p.selected}\nprecision ${fmt(p.precision)}\nAUC ${fmt(p.auc)}`;
  });
  drawCurve(JSON.parse(demo.curve(k, 20)));
}

await init();
$("mask-in").addEventListener("input", runMask);
$("mask-phrases").addEventListener("input", runMask);
$("sim-run").addEventListener("click", runMatrix);
runMask();
runMatrix();

demo = new FusionDemo(3000, 0.3, 1);
$("fx-status").textContent = "3000 synthetic pairs, 30% misaligned, half with a medium phrase in the alt-text.";
$("fx-alpha").addEventListener("input", runFusion);
$("fx-k").addEventListener("input", runFusion);
runFusion();
