// Page wiring: poll the session, render cards and charts, route keyboard
// shortcuts, auto-submit nothing — every label is an explicit action.

import { ApiClient, LabelValue } from "./api.js";
import { renderCards } from "./cards.js";
import { accuracySeries, drawLineChart, entropySeries, renderLegend } from "./charts.js";
import { SessionController } from "./controller.js";
import { interpretKey, nextFocus } from "./shortcuts.js";

const api = new ApiClient("");
const controller = new SessionController(api, 1000);

const statusEl = document.getElementById("status")!;
const bannerEl = document.getElementById("banner")!;
const cardsEl = document.getElementById("cards")!;
const progressEl = document.getElementById("progress")!;
const accCanvas = document.getElementById("accuracy-chart") as HTMLCanvasElement;
const entCanvas = document.getElementById("entropy-chart") as HTMLCanvasElement;
const legendEl = document.getElementById("legend")!;

let focusedId: number | null = null;
const hiddenSeries = new Set<string>();

function onLabel(sampleId: number, value: LabelValue): void {
  void controller.submitLabel(sampleId, value).then((ok) => {
    if (ok) {
      focusedId = nextFocus(sampleId, controller.unlabeledIds());
      render(controller.view);
    }
  });
}

function render(vm = controller.view): void {
  bannerEl.classList.toggle("banner-visible", vm.connection === "lost");
  const s = vm.session;
  if (!s) {
    statusEl.textContent = "connecting...";
    return;
  }
  if (s.status === "training") {
    statusEl.textContent = `cycle ${s.cycle}: training classifier...`;
    cardsEl.innerHTML = "<div class='spinner'></div>";
  } else if (s.status === "completed") {
    statusEl.textContent = `done: budget of ${s.budget} labels reached`;
    cardsEl.innerHTML = "";
  } else if (s.status === "failed") {
    statusEl.textContent = `failed: ${s.error}`;
  } else {
    statusEl.textContent = `cycle ${s.cycle}: ${s.batch.pending} samples awaiting labels`;
    if (focusedId === null || !vm.cards.some((c) => c.sample.id === focusedId && c.submitted === null)) {
      focusedId = controller.unlabeledIds()[0] ?? null;
    }
    renderCards(cardsEl, vm.cards, s.num_classes ?? 0, focusedId, { onLabel });
  }
  progressEl.textContent = `${s.labeled} / ${s.budget} labeled`;

  const acc = accuracySeries(vm.metrics);
  const ent = entropySeries(vm.metrics);
  drawLineChart(accCanvas, acc, { title: "test accuracy by cycle", hidden: hiddenSeries });
  drawLineChart(entCanvas, ent, { title: "mean entropy of new samples", hidden: hiddenSeries });
  renderLegend(legendEl, acc, hiddenSeries, (label) => {
    if (hiddenSeries.has(label)) hiddenSeries.delete(label);
    else hiddenSeries.add(label);
    render();
  });
}

document.addEventListener("keydown", (ev) => {
  const vm = controller.view;
  if (!vm.session || vm.session.status !== "awaiting_labels") return;
  const action = interpretKey(ev.key, {
    focusedId,
    orderedIds: controller.unlabeledIds(),
    numClasses: vm.session.num_classes ?? 0,
  });
  if (!action) return;
  ev.preventDefault();
  if (action.kind === "focus") {
    focusedId = action.id;
    render();
  } else if (focusedId !== null) {
    onLabel(focusedId, action.value);
  }
});

controller.subscribe(render);
controller.start();

export { controller, render };
