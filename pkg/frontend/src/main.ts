/** DOM wiring for the studio page. */
import { StudioApi } from "./api.js";
import { createComparator } from "./compare.js";
import { clusterEntries, createGallery, retrievalEntries } from "./gallery.js";
import type { Point } from "./mask.js";
import { sparklineSvg } from "./sparkline.js";
import { ALPHA_MAX, ALPHA_MIN, Studio } from "./studio.js";

const api = new StudioApi(location.origin.replace(/\/$/, ""));
const studio = new Studio(api);

const app = document.getElementById("app")!;

const uploadInput = document.createElement("input");
uploadInput.type = "file";
uploadInput.accept = "image/png";

const comparator = createComparator();

const form = document.createElement("form");
form.className = "edit-form";
const requestInput = document.createElement("input");
requestInput.placeholder = "e.g. make it brighter";
const lambdaInput = document.createElement("input");
lambdaInput.type = "number";
lambdaInput.step = "0.1";
lambdaInput.value = "0.3";
const submit = document.createElement("button");
submit.textContent = "Edit";
form.append(requestInput, lambdaInput, submit);

const alphaSlider = document.createElement("input");
alphaSlider.type = "range";
alphaSlider.min = String(ALPHA_MIN);
alphaSlider.max = String(ALPHA_MAX);
alphaSlider.step = "0.05";
alphaSlider.value = "1";

const notice = document.createElement("p");
notice.className = "notice";
const retryBtn = document.createElement("button");
retryBtn.textContent = "Retry";
retryBtn.hidden = true;

const sparkline = document.createElement("div");
sparkline.className = "trace";

const gallery = createGallery(api);
gallery.onPick = (entry) => {
  void studio.applyExemplar(entry.pairId);
  void studio.loadRetrieval(entry.pairId);
};
const clustersBtn = document.createElement("button");
clustersBtn.textContent = "Browse styles";

// click points on the before image collect a mask polygon; double click clears
const polygon: Point[] = [];
comparator.root.addEventListener("click", (ev) => {
  const rect = comparator.root.getBoundingClientRect();
  const { width, height } = studio.state;
  if (!width || rect.width === 0) return;
  polygon.push({
    x: ((ev.clientX - rect.left) / rect.width) * width,
    y: ((ev.clientY - rect.top) / rect.height) * height,
  });
  studio.setMaskPolygon([...polygon]);
});
comparator.root.addEventListener("dblclick", () => {
  polygon.length = 0;
  studio.setMaskPolygon([]);
});

uploadInput.addEventListener("change", async () => {
  const file = uploadInput.files?.[0];
  if (!file) return;
  await studio.start(new Uint8Array(await file.arrayBuffer()));
});

form.addEventListener("submit", (ev) => {
  ev.preventDefault();
  studio.setRequest(requestInput.value);
  studio.setLambda(Number(lambdaInput.value));
  void studio.submitTextEdit();
});

alphaSlider.addEventListener("input", () => {
  studio.setAlpha(Number(alphaSlider.value));
});

clustersBtn.addEventListener("click", () => void studio.loadClusters(8));
retryBtn.addEventListener("click", () => void studio.submitTextEdit());

studio.onChange = (state) => {
  if (state.sourceImageId) {
    const view = studio.currentViewUrl();
    if (view) comparator.setImages(api.imageUrl(state.sourceImageId), view);
  }
  notice.textContent = state.notice?.text ?? "";
  retryBtn.hidden = !state.notice?.retryable;
  sparkline.innerHTML = state.result ? sparklineSvg(state.result.trace) : "";
  if (state.clusters) gallery.setEntries(clusterEntries(state.clusters.clusters));
  else if (state.retrieval) gallery.setEntries(retrievalEntries(state.retrieval.results));
  submit.disabled = state.busy;
};

app.append(uploadInput, comparator.root, form, alphaSlider, sparkline, notice, retryBtn, clustersBtn, gallery.root);
