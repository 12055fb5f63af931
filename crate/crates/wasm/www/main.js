// Build the bindings first:
//   cargo build -p mxconv-wasm --release --target wasm32-unknown-unknown
//   wasm-bindgen --target web --out-dir crates/wasm/www/pkg \
//     target/wasm32-unknown-unknown/release/mxconv_wasm.wasm
import init, { mask_view, cycle_model, layer_timeline } from "./pkg/mxconv_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const PHASE_COLOURS = { copying: "#6baed6", processing: "#fd8d3c", writeback: "#74c476" };

function call(f, target) {
  try {
    target.classList.remove("err");
    return JSON.parse(f());
  } catch (e) {
    target.classList.add("err");
    target.textContent = String(e.message ?? e);
    return null;
  }
}

function drawMask() {
  const width = num("m-width");
  const v = call(() => mask_view(width, num("m-k"), num("m-l"), num("m-rand"), num("m-seed")), $("m-summary"));
  const ctx = $("m-canvas").getContext("2d");
  ctx.clearRect(0, 0, 900, 300);
  if (!v) return;
  $("m-summary").textContent =
    `kept ${(v.kept_fraction * 100).toFixed(1)}%, removed ${(v.removal_fraction * 100).toFixed(1)}%, ` +
    `positions used ${v.positions_used} of ${width * width}, histogram [${v.histogram.join(", ")}]`;
  const cell = Math.max(2, Math.floor(Math.min(880 / (v.in_maps * (width + 1)), 290 / (v.out_maps * (width + 1)))));
  for (let l = 0; l < v.out_maps; l++) {
    for (let k = 0; k < v.in_maps; k++) {
      const x0 = k * (width + 1) * cell, y0 = l * (width + 1) * cell;
      ctx.fillStyle = "#eee";
      ctx.fillRect(x0, y0, width * cell, width * cell);
      ctx.fillStyle = "#222";
      for (const pos of v.grid[l][k]) {
        ctx.fillRect(x0 + (pos % width) * cell, y0 + Math.floor(pos / width) * cell, cell, cell);
      }
    }
  }
}

function drawCycles() {
  const table = $("c-table");
  const pts = call(() => cycle_model(num("c-j"), num("c-k"), num("c-l"), num("c-f")), table);
  const ctx = $("c-canvas").getContext("2d");
  ctx.clearRect(0, 0, 900, 220);
  if (!pts) return;
  const max = Math.max(...pts.map((p) => p.total));
  const bar = 860 / pts.length;
  pts.forEach((p, i) => {
    let y = 200;
    for (const [key, colour] of [["copy", "#6baed6"], ["processing", "#fd8d3c"], ["writeback", "#74c476"]]) {
      const h = (p[key] / max) * 190;
      ctx.fillStyle = colour;
      ctx.fillRect(20 + i * bar, y - h, bar * 0.7, h);
      y -= h;
    }
    ctx.fillStyle = "#222";
    ctx.fillText(`P=${p.p}`, 20 + i * bar, 215);
  });
  table.innerHTML =
    "<tr><th>P</th><th>copy</th><th>processing</th><th>writeback</th><th>total</th><th>baseline</th><th>ratio</th><th>processing ratio</th><th>µs</th></tr>" +
    pts
      .map((p) =>
        `<tr><td>${p.p}</td><td>${p.copy}</td><td>${p.processing}</td><td>${p.writeback}</td><td>${p.total}</td>` +
        `<td>${p.baseline}</td><td>${p.exact_ratio.toFixed(2)}</td><td>${p.processing_ratio.toFixed(0)}</td><td>${p.latency_us.toFixed(2)}</td></tr>`)
      .join("");
}

function drawTimeline() {
  const n = num("t-n");
  const v = call(() => layer_timeline(n, num("t-j"), num("t-k"), num("t-l"), num("t-p"), num("t-img"), 0), $("t-summary"));
  const ctx = $("t-canvas").getContext("2d");
  ctx.clearRect(0, 0, 900, 200);
  if (!v) return;
  $("t-summary").textContent =
    `latency ${v.latency_cycles} cycles, bottleneck ${v.bottleneck_cycles} cycles, images done at [${v.completions.join(", ")}]`;
  const scale = 840 / v.total_cycles;
  const lane = Math.min(30, 180 / n);
  for (const s of v.segments) {
    ctx.fillStyle = PHASE_COLOURS[s.phase] ?? "#999";
    ctx.fillRect(50 + s.start * scale, 5 + s.layer * lane, Math.max(1, (s.end - s.start) * scale), lane - 4);
  }
  ctx.fillStyle = "#222";
  for (let t = 0; t < n; t++) ctx.fillText(`block ${t}`, 0, 5 + t * lane + lane / 2);
}

function wire(ids, draw) {
  for (const id of ids) $(id).addEventListener("input", draw);
  draw();
}

await init();
wire(["m-width", "m-k", "m-l", "m-rand", "m-seed"], drawMask);
wire(["c-j", "c-k", "c-l", "c-f"], drawCycles);
wire(["t-n", "t-j", "t-k", "t-l", "t-p", "t-img"], drawTimeline);
