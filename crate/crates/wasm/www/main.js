import init, { single_trace, ensemble_mean, g2_fit } from "./pkg/beatlab_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const seed = () => BigInt(Math.max(0, Math.floor(num("seed"))));

// series: [{ xs, ys, color, dots }]
function plot(canvas, series, xLabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  let x0 = Infinity, x1 = -Infinity, y0 = Infinity, y1 = -Infinity;
  for (const s of series) {
    for (let i = 0; i < s.xs.length; i++) {
      if (!Number.isFinite(s.ys[i])) continue;
      x0 = Math.min(x0, s.xs[i]); x1 = Math.max(x1, s.xs[i]);
      y0 = Math.min(y0, s.ys[i]); y1 = Math.max(y1, s.ys[i]);
    }
  }
  if (!(x1 > x0)) return;
  if (!(y1 > y0)) { y0 -= 1; y1 += 1; }
  const px = (x) => pad + (x - x0) / (x1 - x0) * (w - 2 * pad);
  const py = (y) => h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(x0.toFixed(2), pad, h - pad + 14);
  ctx.fillText(x1.toFixed(2), w - pad - 30, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  ctx.fillText(xLabel, w / 2 - 20, h - 8);

  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.dots) {
      for (let i = 0; i < s.xs.length; i++) {
        if (Number.isFinite(s.ys[i])) ctx.fillRect(px(s.xs[i]) - 1.5, py(s.ys[i]) - 1.5, 3, 3);
      }
    } else {
      ctx.beginPath();
      for (let i = 0; i < s.xs.length; i++) {
        const f = i === 0 ? ctx.moveTo : ctx.lineTo;
        f.call(ctx, px(s.xs[i]), py(s.ys[i]));
      }
      ctx.stroke();
    }
  }
}

function guarded(outId, fn) {
  return () => {
    const out = outId && $(outId);
    try {
      fn(out);
      if (out) out.classList.remove("err");
    } catch (e) {
      if (out) { out.textContent = String(e.message ?? e); out.classList.add("err"); }
      else alert(e.message ?? e);
    }
  };
}

function drawTrace() {
  const t = single_trace(num("beat"), num("gamma"), seed());
  const xs = t.times();
  plot($("trace"), [
    { xs, ys: t.mean(), color: "#7f8c8d" },
    { xs, ys: t.intensity(), color: "#1f5fa8" },
  ], "t [us]");
  t.free();
}

function drawMean(out) {
  const m = ensemble_mean(num("beat"), num("gamma"), Math.floor(num("pulses")), seed());
  const xs = m.times();
  plot($("mean"), [
    { xs, ys: m.reference(), color: "#7f8c8d" },
    { xs, ys: m.mean(), color: "#c0392b" },
  ], "t [us]");
  out.textContent = `residual beat / single-pulse modulation = ${m.residual.toExponential(2)}`;
  m.free();
}

function drawG2(out) {
  const d = g2_fit(num("beat"), num("gamma"), Math.floor(num("g2-pulses")), $("thermal").checked, seed());
  const xs = d.taus();
  plot($("g2"), [
    { xs, ys: d.g2(), color: "#1f5fa8", dots: true },
    { xs, ys: d.fitted(), color: "#c0392b" },
  ], "tau [us]");
  const flag = d.identifiable ? "" : " (beat not identifiable)";
  out.textContent = `V = ${d.v.toFixed(3)}, gamma = ${d.gamma.toFixed(3)} /us, ` +
    `delta_nu = ${d.delta_nu.toFixed(3)} MHz, B = ${d.baseline.toFixed(3)}${flag}`;
  d.free();
}

await init();
$("run-trace").onclick = guarded(null, drawTrace);
$("run-mean").onclick = guarded("mean-out", drawMean);
$("run-g2").onclick = guarded("g2-out", drawG2);
drawTrace();
