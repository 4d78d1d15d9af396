// Expects the wasm-bindgen `--target web` output in ./pkg.
import init, { render_sample, lr_curve, sensitivity_map } from "./pkg/icfinv_demo.js";

const $ = (id) => document.getElementById(id);
const params = [0.5, 0.5, 0.5, 0.5, 0.5];

function fail(el, e) {
  el.innerHTML = `<p class="err">${e.message ?? e}</p>`;
}

function buildSliders() {
  params.forEach((v, j) => {
    const label = document.createElement("label");
    label.innerHTML = `param${j} <input type="range" min="0" max="1" step="0.01" value="${v}">`;
    label.querySelector("input").addEventListener("input", (ev) => {
      params[j] = Number(ev.target.value);
      drawSample();
    });
    $("sliders").appendChild(label);
  });
}

function drawSample() {
  const out = $("bands");
  try {
    const s = JSON.parse(render_sample(Float64Array.from(params), Number($("size").value), Number($("noise").value)));
    const max = Math.max(...s.image, 1e-12);
    out.innerHTML = "";
    for (let b = 0; b < s.bands; b++) {
      const c = document.createElement("canvas");
      c.width = c.height = s.size;
      c.style.width = c.style.height = "160px";
      c.title = `band ${b}`;
      const ctx = c.getContext("2d");
      const img = ctx.createImageData(s.size, s.size);
      for (let p = 0; p < s.size * s.size; p++) {
        const v = Math.round((255 * s.image[p * s.bands + b]) / max);
        img.data.set([v, Math.round(v * 0.8), 255 - v, 255], p * 4);
      }
      ctx.putImageData(img, 0, 0);
      out.appendChild(c);
    }
    $("scalars").textContent = "scalars: " + s.scalars.map((x) => x.toFixed(3)).join(" ");
  } catch (e) {
    fail(out, e);
  }
}

function drawCurve() {
  const out = $("curve");
  try {
    const lrs = lr_curve(Number($("base").value), Number($("warmup").value), Number($("epochs").value));
    const w = 600, h = 200, top = Math.max(...lrs);
    const pts = Array.from(lrs, (v, e) => `${(e / (lrs.length - 1)) * w},${h - (v / top) * h}`).join(" ");
    out.innerHTML =
      `<svg width="${w + 80}" height="${h + 30}"><g transform="translate(70,5)">` +
      `<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="${pts}"/>` +
      `<line x1="0" y1="${h}" x2="${w}" y2="${h}" stroke="#444"/><line x1="0" y1="0" x2="0" y2="${h}" stroke="#444"/>` +
      `<text x="-5" y="10" text-anchor="end">${top.toExponential(1)}</text>` +
      `<text x="${w}" y="${h + 20}" text-anchor="end">epoch ${lrs.length - 1}</text></g></svg>`;
  } catch (e) {
    fail(out, e);
  }
}

function color(v, scale) {
  const t = Math.max(-1, Math.min(1, v / scale));
  const r = t > 0 ? 255 : Math.round(255 * (1 + t));
  const b = t < 0 ? 255 : Math.round(255 * (1 - t));
  const g = Math.round(255 * (1 - Math.abs(t)));
  return `rgb(${r},${g},${b})`;
}

function drawMap() {
  const out = $("map");
  out.textContent = "computing...";
  // Let the message paint before the synchronous computation.
  setTimeout(() => {
    try {
      const r = JSON.parse(sensitivity_map(Number($("n").value), 16, 0, Number($("k").value), Number($("lambda").value)));
      const scale = Math.max(...r.coefficients.flat().map(Math.abs), 1e-12);
      let html = "<table><tr><th></th>" + r.feature_labels.map((f) => `<th>${f}</th>`).join("") + "<th>R2</th></tr>";
      r.target_labels.forEach((t, j) => {
        html += `<tr><th>${t}${r.weakly_identifiable[j] ? " *" : ""}</th>`;
        html += r.coefficients.map((row) => `<td style="background:${color(row[j], scale)}" title="${row[j].toFixed(4)}"></td>`).join("");
        html += `<td>${r.held_out_r2[j].toFixed(3)}</td></tr>`;
      });
      out.innerHTML = html + "</table><p>* held-out R2 below " + r.r2_threshold + "</p>";
    } catch (e) {
      fail(out, e);
    }
  }, 10);
}

await init();
buildSliders();
drawSample();
drawCurve();
$("size").addEventListener("change", drawSample);
$("noise").addEventListener("input", drawSample);
for (const id of ["base", "warmup", "epochs"]) $(id).addEventListener("input", drawCurve);
$("run").addEventListener("click", drawMap);
