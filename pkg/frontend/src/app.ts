import { ApiError, StudioApi } from "./api.js";
import { PreviewDriver } from "./preview.js";
import { MixState } from "./state.js";
import type { StyleEntry } from "./types.js";

const api = new StudioApi("");
const state = new MixState();
const driver = new PreviewDriver((req) => api.stylize(req), 80);

const el = {
  gallery: document.getElementById("gallery") as HTMLDivElement,
  preview: document.getElementById("preview") as HTMLImageElement,
  latency: document.getElementById("latency") as HTMLSpanElement,
  alpha: document.getElementById("alpha") as HTMLInputElement,
  alphaValue: document.getElementById("alpha-value") as HTMLSpanElement,
  upload: document.getElementById("upload") as HTMLInputElement,
  banner: document.getElementById("banner") as HTMLDivElement,
  addName: document.getElementById("add-name") as HTMLInputElement,
  addFile: document.getElementById("add-file") as HTMLInputElement,
  addButton: document.getElementById("add-button") as HTMLButtonElement,
  jobStatus: document.getElementById("job-status") as HTMLSpanElement,
};

function showBanner(message: string): void {
  el.banner.textContent = `${message} (click to dismiss)`;
  el.banner.style.display = "block";
}
el.banner.addEventListener("click", () => (el.banner.style.display = "none"));

driver.onUpdate = (update) => {
  el.preview.src = `data:image/png;base64,${update.image}`;
  el.latency.textContent = update.fromContent
    ? "original content (no styling at α = 0)"
    : `${update.millis.toFixed(1)} ms server compute`;
};
driver.onError = (error) => {
  const message = error instanceof ApiError ? error.message : String(error);
  showBanner(`stylize failed: ${message}`);
  // keep the last good preview on screen
};

state.onChange(() => {
  if (state.ready()) driver.request(state.snapshot());
});

function styleRow(style: StyleEntry): HTMLDivElement {
  const row = document.createElement("div");
  row.className = "style-row";
  const label = document.createElement("label");
  label.textContent = style.identity ? `${style.name} (identity)` : style.name;
  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.max = "1";
  slider.step = "0.01";
  slider.value = String(state.weightOf(style.id));
  slider.addEventListener("input", () => state.setWeight(style.id, Number(slider.value)));
  row.append(label, slider);
  return row;
}

async function refreshGallery(): Promise<void> {
  const styles = await api.listStyles();
  el.gallery.replaceChildren(...styles.map(styleRow));
}

el.alpha.addEventListener("input", () => {
  state.setAlpha(Number(el.alpha.value));
  el.alphaValue.textContent = Number(el.alpha.value).toFixed(2);
});

function fileToBase64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(",") + 1));
    };
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
}

el.upload.addEventListener("change", async () => {
  const file = el.upload.files?.[0];
  if (!file) return;
  state.setContent(await fileToBase64(file));
});

el.addButton.addEventListener("click", async () => {
  const file = el.addFile.files?.[0];
  const name = el.addName.value.trim();
  if (!file || !name) {
    showBanner("add-style needs a name and an image");
    return;
  }
  el.addButton.disabled = true;
  try {
    const { job_id } = await api.addStyle(name, await fileToBase64(file));
    el.jobStatus.textContent = `job ${job_id}: queued`;
    const poll = setInterval(async () => {
      try {
        const job = await api.job(job_id);
        el.jobStatus.textContent =
          `job ${job_id}: ${job.state}, ${job.iterations_done} iterations` +
          (job.loss !== null ? `, loss ${job.loss.toFixed(3)}` : "");
        if (job.state === "done" || job.state === "failed") {
          clearInterval(poll);
          el.addButton.disabled = false;
          if (job.state === "done") await refreshGallery();
          else showBanner(`style training failed: ${job.error}`);
        }
      } catch (error) {
        clearInterval(poll);
        el.addButton.disabled = false;
        showBanner(`job polling failed: ${String(error)}`);
      }
    }, 1000);
  } catch (error) {
    el.addButton.disabled = false;
    const message = error instanceof ApiError ? error.message : String(error);
    showBanner(`add-style failed: ${message}`);
  }
});

refreshGallery().catch((error) => showBanner(`cannot reach service: ${String(error)}`));
