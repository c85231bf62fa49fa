import init, { segment, replay, generate, presets } from "./pkg/cotguard_wasm.js";

const $ = (id) => document.getElementById(id);

function renderSteps(steps, report) {
  const box = $("steps");
  box.replaceChildren();
  const judged = new Map((report?.verdicts ?? []).map((v) => [v.step_index, v]));
  for (const s of steps) {
    const div = document.createElement("div");
    const v = judged.get(s.index);
    div.className = "step" + (report && !v ? " skipped" : "") + (v?.flag === "unsafe" ? " unsafe" : "");
    const tag = v ? ` ${v.flag}${v.flag === "unsafe" ? " " + v.error_type + " @" + v.confidence : ""}` : "";
    div.textContent = `[${s.index}]${tag}\n${s.text}`;
    box.append(div);
  }
}

function onSegment() {
  renderSteps(JSON.parse(segment($("chain").value)), null);
  $("report").textContent = "";
}

function onReplay() {
  const text = $("chain").value;
  try {
    const report = JSON.parse(replay($("problem").value, text, Number($("tau").value)));
    renderSteps(JSON.parse(segment(text)), report);
    $("report").textContent = JSON.stringify(report, null, 2);
  } catch (e) {
    $("report").textContent = `error: ${e.message ?? e}`;
  }
}

function onGenerate() {
  try {
    const out = JSON.parse(generate($("preset").value, Number($("seed").value), Number($("n").value)));
    const box = $("histogram");
    box.replaceChildren();
    for (const [code, count] of Object.entries(out.histogram)) {
      const pct = (100 * count) / out.n;
      const row = document.createElement("div");
      row.className = "bar";
      const approx = out.approximate.includes(code) ? "~" : "";
      row.innerHTML = `<span>${code}</span><span class="fill" style="width:${pct * 4}px"></span>` +
        `<span>${pct.toFixed(1)}%</span><span class="target">target ${approx}${(100 * out.target[code]).toFixed(1)}%</span>`;
      box.append(row);
    }
    $("sample").textContent = JSON.stringify(out.sample, null, 2);
  } catch (e) {
    $("sample").textContent = `error: ${e.message ?? e}`;
  }
}

await init();
for (const name of JSON.parse(presets())) {
  $("preset").append(new Option(name, name, name === "badchain", name === "badchain"));
}
$("segment-btn").onclick = onSegment;
$("replay-btn").onclick = onReplay;
$("gen-btn").onclick = onGenerate;
onSegment();
