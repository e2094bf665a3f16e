// Page logic for the orbitq demo. Loads the wasm module built by
// `wasm-pack build --target web --out-dir www/pkg`, wires the controls,
// and draws on plain canvases.

let wasm = null;

const $ = (id) => document.getElementById(id);

function controls() {
  return {
    policy: $("policy").value,
    retrial: $("retrial").value.trim(),
    lambda: parseFloat($("lambda").value),
    mean: parseFloat($("mean").value),
    seed: BigInt($("seed").value || "0"),
  };
}

// --- tiny canvas plotting -------------------------------------------------

function prepare(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#fff";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function frame(ctx, w, h, pad) {
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
}

function scale(min, max, lo, hi) {
  const span = max - min || 1;
  return (v) => lo + ((v - min) / span) * (hi - lo);
}

function polyline(ctx, xs, ys, sx, sy, color, width = 1.6) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  for (let i = 0; i < xs.length; i++) {
    const x = sx(xs[i]);
    const y = sy(ys[i]);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function axisLabels(ctx, w, h, pad, xMin, xMax, yMin, yMax) {
  ctx.fillStyle = "#666";
  ctx.font = "11px system-ui";
  ctx.textAlign = "left";
  ctx.fillText(fmt(yMax), 4, pad + 10);
  ctx.fillText(fmt(yMin), 4, h - pad);
  ctx.fillText(fmt(xMin), pad, h - pad + 14);
  ctx.textAlign = "right";
  ctx.fillText(fmt(xMax), w - pad, h - pad + 14);
  ctx.textAlign = "left";
}

function fmt(v) {
  if (!isFinite(v)) return String(v);
  const a = Math.abs(v);
  if (a >= 1000) return v.toFixed(0);
  if (a >= 10) return v.toFixed(1);
  return v.toFixed(2);
}

// --- panel 1: stability map -------------------------------------------------

function drawMap() {
  if (!wasm) return;
  const c = controls();
  const out = JSON.parse(
    wasm.threshold_curve(c.policy, c.retrial, 0.1, 3.0, 160, c.lambda, c.mean, 0)
  );
  const readout = $("map-readout");
  if (!out.ok) {
    readout.innerHTML = `<span class="err">${out.error}</span>`;
    return;
  }
  const canvas = $("map");
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const pad = 34;
  const yMax = Math.max(1.05, Math.max(...out.load) * 1.05);
  const sx = scale(0.1, 3.0, pad, w - pad);
  const sy = scale(0, yMax, h - pad, pad);
  frame(ctx, w, h, pad);
  axisLabels(ctx, w, h, pad, 0.1, 3.0, 0, yMax);

  polyline(ctx, out.lambda, out.threshold, sx, sy, "#2a6fdb", 2);
  polyline(ctx, out.lambda, out.load, sx, sy, "#e8710a", 2);

  // Marker at the selected lambda.
  ctx.strokeStyle = "#888";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(sx(out.at.lambda), sy(0));
  ctx.lineTo(sx(out.at.lambda), sy(yMax));
  ctx.stroke();
  ctx.setLineDash([]);

  ctx.fillStyle = "#2a6fdb";
  ctx.fillText("threshold", w - pad - 70, pad + 14);
  ctx.fillStyle = "#e8710a";
  ctx.fillText("load λ·E[σ]", w - pad - 70, pad + 28);

  const cls = out.at.predicted_stable ? "stable" : "unstable";
  readout.innerHTML =
    `at λ = ${fmt(out.at.lambda)}: load ${fmt(out.at.load)} vs threshold ` +
    `${fmt(out.at.threshold)} → <b class="${cls}">${cls}</b>` +
    ` (drift ${out.at.drift >= 0 ? "+" : ""}${out.at.drift.toFixed(4)} per step)`;
}

// --- panel 2: trajectory ----------------------------------------------------

function drawTrajectory() {
  if (!wasm) return;
  const c = controls();
  const horizon = parseInt($("horizon").value, 10);
  const out = JSON.parse(
    wasm.simulate_trajectory(
      c.policy, c.retrial, c.lambda, c.mean, 0, horizon, c.seed, 0, 1200
    )
  );
  const readout = $("traj-readout");
  if (!out.ok) {
    readout.innerHTML = `<span class="err">${out.error}</span>`;
    return;
  }
  const canvas = $("traj");
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const pad = 34;
  const qMax = Math.max(5, ...out.q);
  const sx = scale(0, out.n[out.n.length - 1], pad, w - pad);
  const sy = scale(0, qMax * 1.05, h - pad, pad);
  frame(ctx, w, h, pad);
  axisLabels(ctx, w, h, pad, 0, out.n[out.n.length - 1], 0, qMax);
  polyline(ctx, out.n, out.q, sx, sy, "#2a6fdb", 1.4);

  let extra = "";
  if (out.diverged_at !== null) {
    extra = ` — <b class="unstable">divergence guard tripped at step ${out.diverged_at}</b>`;
  }
  if (out.cutoff) {
    extra += ` (majorant cutoff C = ${out.cutoff})`;
  }
  readout.innerHTML =
    `final Q = ${out.final_q}, tail slope ${out.tail_slope.toExponential(2)} per step${extra}`;
}

// --- panel 3: coupling ------------------------------------------------------

function drawCoupling() {
  if (!wasm) return;
  const c = controls();
  const offset = parseInt($("offset").value, 10);
  const out = JSON.parse(
    wasm.coupling_demo(
      c.policy, c.retrial, c.lambda, c.mean, 0, offset, 100000, c.seed, 1000
    )
  );
  const readout = $("couple-readout");
  if (!out.ok) {
    readout.innerHTML = `<span class="err">${out.error}</span>`;
    return;
  }
  const canvas = $("couple");
  const ctx = prepare(canvas);
  const { width: w, height: h } = canvas;
  const pad = 34;
  const qMax = Math.max(5, ...out.from_offset, ...out.from_zero);
  const nMax = out.n[out.n.length - 1];
  const sx = scale(0, nMax, pad, w - pad);
  const sy = scale(0, qMax * 1.05, h - pad, pad);
  frame(ctx, w, h, pad);
  axisLabels(ctx, w, h, pad, 0, nMax, 0, qMax);
  polyline(ctx, out.n, out.from_offset, sx, sy, "#e8710a", 1.4);
  polyline(ctx, out.n, out.from_zero, sx, sy, "#2a6fdb", 1.4);

  if (out.coupled_at !== null) {
    ctx.strokeStyle = "#1a7f37";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(sx(out.coupled_at), sy(0));
    ctx.lineTo(sx(out.coupled_at), sy(qMax * 1.05));
    ctx.stroke();
    ctx.setLineDash([]);
    readout.innerHTML =
      `chains coupled at step <b class="stable">${out.coupled_at}</b> and stay equal afterwards`;
  } else {
    readout.innerHTML = `<b class="unstable">no coupling within the horizon</b>`;
  }
}

// --- boot ---------------------------------------------------------------

async function boot() {
  try {
    const mod = await import("./pkg/orbitq_wasm_demo.js");
    await mod.default();
    wasm = mod;
  } catch (e) {
    $("boot-error").innerHTML =
      `<p class="err">wasm module not found (${e.message}).</p>
       <p>Build it first:</p>
       <pre><code>wasm-pack build crates/wasm-demo --target web --out-dir www/pkg
cd crates/wasm-demo/www && python3 -m http.server</code></pre>`;
    return;
  }
  for (const id of ["policy", "retrial", "lambda", "mean"]) {
    $(id).addEventListener("input", () => {
      $("lambda-val").textContent = fmt(parseFloat($("lambda").value));
      $("mean-val").textContent = fmt(parseFloat($("mean").value));
      drawMap();
    });
  }
  $("offset").addEventListener("input", () => {
    $("offset-val").textContent = $("offset").value;
  });
  $("run-traj").addEventListener("click", drawTrajectory);
  $("run-couple").addEventListener("click", drawCoupling);

  drawMap();
  drawTrajectory();
  drawCoupling();
}

boot();
