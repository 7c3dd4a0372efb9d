import init, { gain_curves, region_map, simulate } from "./pkg/llc_dmm_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];
const STATE_COLORS = { 0: "#bbbbbb", 6: "#d62728", 9: "#1f77b4", 15: "#2ca02c" };
const STATE_NAMES = { 0: "blocked", 6: "negative", 9: "positive", 15: "shorted" };

function fail(e) {
  $("status").textContent = String(e);
}

function extent(values) {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (Number.isFinite(v)) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  return [lo, hi];
}

// Line plot of several series sharing one x axis.
function plot(canvas, series, xLabel, yLabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width;
  const h = canvas.height;
  const pad = { l: 60, r: 12, t: 12, b: 34 };
  ctx.clearRect(0, 0, w, h);
  const [x0, x1] = extent(series.flatMap((s) => s.x));
  const [y0, y1] = extent(series.flatMap((s) => s.y));
  const sx = (x) => pad.l + ((x - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((y - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  for (let i = 0; i <= 4; i++) {
    const x = x0 + ((x1 - x0) * i) / 4;
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(x.toPrecision(3), sx(x) - 12, h - pad.b + 14);
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
  }
  ctx.fillText(xLabel, w / 2, h - 4);
  ctx.fillText(yLabel, 4, pad.t + 2);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color || COLORS[k % COLORS.length];
    ctx.beginPath();
    s.x.forEach((x, i) => {
      const px = sx(x);
      const py = sy(s.y[i]);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    if (s.label) {
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(s.label, w - pad.r - 90, pad.t + 14 * (k + 1));
    }
  });
}

function drawGain() {
  const qs = $("gain-q").value.split(",").map(Number).filter((q) => Number.isFinite(q) && q >= 0);
  const doc = JSON.parse(
    gain_curves($("gain-preset").value, new Float64Array(qs), Number($("gain-fmin").value), Number($("gain-fmax").value), 400),
  );
  $("gain-info").textContent =
    `m = ${doc.m.toFixed(3)}, fr1 = ${(doc.fr1 / 1e3).toFixed(1)} kHz, fr2 = ${(doc.fr2 / 1e3).toFixed(1)} kHz, ` +
    `nominal Q = ${doc.q_nominal.toFixed(3)}`;
  const series = doc.series.map((s) => ({ x: s.f, y: s.g.map((g) => Math.min(g, 4)), label: `Q = ${s.q}` }));
  plot($("gain-plot"), series, "F = fs / fr1", "G (clipped at 4)");
}

function drawMap() {
  const size = Number($("map-size").value);
  const doc = JSON.parse(region_map($("map-preset").value, Number($("map-extent").value), size));
  const canvas = $("map-plot");
  const ctx = canvas.getContext("2d");
  const image = ctx.createImageData(size, size);
  doc.states.forEach((s, i) => {
    const c = STATE_COLORS[s];
    image.data[4 * i] = parseInt(c.slice(1, 3), 16);
    image.data[4 * i + 1] = parseInt(c.slice(3, 5), 16);
    image.data[4 * i + 2] = parseInt(c.slice(5, 7), 16);
    image.data[4 * i + 3] = 255;
  });
  const off = new OffscreenCanvas(size, size);
  off.getContext("2d").putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  $("map-info").textContent =
    `m1 = ${doc.m1.toExponential(6)}, m2 = ${doc.m2.toExponential(6)}; ` +
    `horizontal ih1 and vertical ih2 both span ±${doc.extent} A`;
  $("map-legend").innerHTML = Object.entries(STATE_NAMES)
    .map(([s, n]) => `<span><i class="swatch" style="background:${STATE_COLORS[s]}"></i>${s} ${n}</span>`)
    .join("");
}

function drawSim() {
  const started = performance.now();
  const doc = JSON.parse(
    simulate(
      $("sim-preset").value,
      $("sim-engine").value,
      Number($("sim-fs").value),
      Number($("sim-duration").value),
      Number($("sim-dec").value),
    ),
  );
  const ms = (performance.now() - started).toFixed(0);
  const blocked = doc.sigma.filter((s) => (s & 15) === 0).length;
  $("sim-info").textContent =
    `${doc.engine} at ${(doc.fs / 1e3).toFixed(1)} kHz: ${doc.t.length} rows in ${ms} ms, ` +
    `${((100 * blocked) / doc.t.length).toFixed(1)}% of rows with the rectifier blocked`;
  const t = doc.t.map((x) => x * 1e3);
  plot($("sim-vo"), [{ x: t, y: doc.vo, label: "vo (V)" }], "t (ms)", "vo");
  plot(
    $("sim-ir"),
    [
      { x: t, y: doc.ir, label: "ir (A)" },
      { x: t, y: doc.im, label: "im (A)" },
    ],
    "t (ms)",
    "current",
  );
}

function guarded(f) {
  return () => {
    try {
      $("status").textContent = "";
      f();
    } catch (e) {
      fail(e);
    }
  };
}

init()
  .then(() => {
    $("gain-go").onclick = guarded(drawGain);
    $("map-go").onclick = guarded(drawMap);
    $("sim-go").onclick = guarded(drawSim);
    guarded(drawGain)();
    guarded(drawMap)();
    guarded(drawSim)();
  })
  .catch(fail);
