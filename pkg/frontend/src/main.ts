/** DOM wiring for the explorer: sample picker, eta sliders, evidence panel,
 * reliability chart. All numeric content comes straight from the API. */

import { ApiClient, EvidenceResponse, ImagePayload, SampleDetail, SampleRow } from "./api.js";
import {
  ExplorerState, appendEvidence, eta1FromSlider, initialState, issueRequest,
  selectModel, selectSample, setSliders,
} from "./state.js";
import { decodeImage, formatMetric, imageToRgba, softmaxBars } from "./render.js";
import { curveView, pointLabel } from "./reliability.js";

const api = new ApiClient("");
let state: ExplorerState = initialState();
let anchorDetail: SampleDetail | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

/** Canvas for an image payload, or a badged placeholder when it is unusable. */
function imageNode(payload?: ImagePayload): HTMLElement {
  if (payload && payload.b64) {
    const [h, w] = payload.shape;
    const floats = decodeImage(payload);
    if (floats.length === h * w * 3) {
      const canvas = document.createElement("canvas");
      canvas.className = "thumb";
      canvas.width = w;
      canvas.height = h;
      const ctx = canvas.getContext("2d");
      if (ctx) {
        ctx.putImageData(new ImageData(imageToRgba(floats, h, w), w, h), 0, 0);
        canvas.style.imageRendering = "pixelated";
        return canvas;
      }
    }
  }
  const placeholder = document.createElement("div");
  placeholder.className = "thumb placeholder";
  placeholder.textContent = "image unavailable";
  return placeholder;
}

function barsInto(container: HTMLElement, rho: number[], predicted: number,
                  correct: boolean | null) {
  container.innerHTML = "";
  for (const bar of softmaxBars(rho, predicted, correct)) {
    const div = document.createElement("div");
    div.className = "bar";
    div.style.height = `${bar.heightPct}%`;
    div.style.background = bar.color;
    div.title = `class ${bar.classIndex}: ${bar.value}`;
    container.appendChild(div);
  }
}

function evidenceColumn(evidence: EvidenceResponse): HTMLElement {
  const col = document.createElement("div");
  col.className = "column";

  col.appendChild(imageNode(evidence.image));

  const label = document.createElement("div");
  label.className = "class-label";
  label.textContent = `class ${evidence.predicted}`;
  label.style.color = softmaxBars(evidence.rho, evidence.predicted,
                                  evidence.correct)[evidence.predicted].color;
  col.appendChild(label);

  const bars = document.createElement("div");
  bars.className = "bars";
  barsInto(bars, evidence.rho, evidence.predicted, evidence.correct);
  col.appendChild(bars);

  const eta1 = Number(evidence.request["eta1"]);
  const meta = document.createElement("div");
  meta.className = "metrics";
  meta.textContent = [
    `eta1=${eta1.toPrecision(3)}`,
    formatMetric("AE(z)", evidence.ae_z),
    formatMetric("SSIM", evidence.ssim),
    formatMetric("H", evidence.entropy),
  ].join("  ");
  col.appendChild(meta);
  return col;
}

function renderPanel() {
  const panel = el<HTMLDivElement>("panel");
  panel.innerHTML = "";
  if (anchorDetail) {
    const col = document.createElement("div");
    col.className = "column anchor";
    col.appendChild(imageNode(anchorDetail.image));
    const label = document.createElement("div");
    label.className = "class-label";
    const correct = anchorDetail.predicted === anchorDetail.class_id;
    label.textContent = `anchor ${anchorDetail.id} (true ${anchorDetail.class_id})`;
    label.style.color = correct ? "#1a7f37" : "#c62828";
    col.appendChild(label);
    const bars = document.createElement("div");
    bars.className = "bars";
    barsInto(bars, anchorDetail.softmax, anchorDetail.predicted, correct);
    col.appendChild(bars);
    const meta = document.createElement("div");
    meta.className = "metrics";
    meta.textContent = formatMetric("H", anchorDetail.entropy);
    col.appendChild(meta);
    panel.appendChild(col);
  }
  for (const evidence of state.history) {
    panel.appendChild(evidenceColumn(evidence));
  }
}

function showError(message: string) {
  const bar = el<HTMLDivElement>("error");
  bar.textContent = message;
  bar.style.display = message ? "block" : "none";
}

async function runCounterfactual() {
  const sampleId = state.sampleId;
  if (!sampleId) return;
  const [next, token] = issueRequest(state);
  state = next;
  const sliders = state.sliders;
  try {
    const evidence = await api.postCounterfactual({
      sample_id: sampleId,
      model_id: state.modelId ?? undefined,
      eta1: eta1FromSlider(sliders.eta1Log),
      eta2: sliders.eta2,
      eta3: sliders.eta3,
      entropy_sign: sliders.entropySign,
    });
    state = appendEvidence(state, token, evidence);
    showError("");
    renderPanel();
  } catch (err) {
    showError(String(err instanceof Error ? err.message : err)); // history stays intact
  }
}

async function reloadSamples() {
  const listing = await api.getSamples("val", state.modelId ?? undefined);
  const select = el<HTMLSelectElement>("sample-select");
  select.innerHTML = "";
  listing.samples
    .slice()
    .sort((a: SampleRow, b: SampleRow) => b.entropy - a.entropy)
    .forEach((row) => {
      const opt = document.createElement("option");
      opt.value = row.id;
      opt.textContent =
        `${row.id}  (true ${row.class_id}, H=${row.entropy.toFixed(3)}, ` +
        `${row.correct ? "hit" : "miss"})`;
      select.appendChild(opt);
    });
  if (listing.samples.length) {
    await pickSample(select.value);
  }
}

async function pickSample(id: string) {
  state = selectSample(state, id);
  anchorDetail = await api.getSample(id, state.modelId ?? undefined);
  renderPanel();
}

async function renderReliability() {
  const svg = el<HTMLElement>("chart");
  svg.innerHTML = "";
  const catalog = await api.getModels();
  const legend = el<HTMLDivElement>("legend");
  legend.innerHTML = "";
  for (let i = 0; i < catalog.models.length; i++) {
    const model = catalog.models[i];
    try {
      const data = await api.getReliability(model.id);
      const view = curveView(data, i);
      const poly = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
      poly.setAttribute("points", view.polyline);
      poly.setAttribute("fill", "none");
      poly.setAttribute("stroke", view.color);
      poly.setAttribute("stroke-width", "2");
      svg.appendChild(poly);
      for (const p of view.points) {
        const dot = document.createElementNS("http://www.w3.org/2000/svg", "circle");
        dot.setAttribute("cx", String(p.x));
        dot.setAttribute("cy", String(p.y));
        dot.setAttribute("r", "3");
        dot.setAttribute("fill", view.color);
        const title = document.createElementNS("http://www.w3.org/2000/svg", "title");
        title.textContent = pointLabel(p);
        dot.appendChild(title);
        svg.appendChild(dot);
      }
      const item = document.createElement("span");
      item.textContent = model.id;
      item.style.color = view.color;
      legend.appendChild(item);
    } catch {
      const item = document.createElement("span");
      item.textContent = `${model.id} (no report)`;
      item.className = "disabled";
      legend.appendChild(item);
    }
  }
}

function readSliders() {
  state = setSliders(state, {
    eta1Log: Number(el<HTMLInputElement>("eta1").value),
    eta2: Number(el<HTMLInputElement>("eta2").value),
    eta3: Number(el<HTMLInputElement>("eta3").value),
    entropySign: el<HTMLInputElement>("sign").checked ? "maximize" : "minimize",
  });
  el<HTMLSpanElement>("eta1-value").textContent =
    eta1FromSlider(state.sliders.eta1Log).toPrecision(3);
  el<HTMLSpanElement>("eta2-value").textContent = state.sliders.eta2.toFixed(2);
  el<HTMLSpanElement>("eta3-value").textContent = state.sliders.eta3.toFixed(2);
}

async function boot() {
  const catalog = await api.getModels();
  const modelSelect = el<HTMLSelectElement>("model-select");
  modelSelect.innerHTML = "";
  for (const model of catalog.models) {
    const opt = document.createElement("option");
    opt.value = model.id;
    opt.textContent = `${model.id} (${model.kind})`;
    modelSelect.appendChild(opt);
  }
  state = selectModel(state, catalog.default_model);
  modelSelect.value = catalog.default_model;

  modelSelect.addEventListener("change", async () => {
    state = selectModel(state, modelSelect.value);
    await reloadSamples();
    renderPanel();
  });
  el<HTMLSelectElement>("sample-select").addEventListener("change", (ev) =>
    pickSample((ev.target as HTMLSelectElement).value));
  for (const id of ["eta1", "eta2", "eta3", "sign"]) {
    el<HTMLInputElement>(id).addEventListener("input", readSliders);
    // a committed slider change (change event) issues exactly one request
    el<HTMLInputElement>(id).addEventListener("change", runCounterfactual);
  }
  el<HTMLButtonElement>("run").addEventListener("click", runCounterfactual);

  readSliders();
  await reloadSamples();
  await renderReliability();
}

boot().catch((err) => showError(String(err)));
