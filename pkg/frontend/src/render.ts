import { CompletedRun } from "./types.js";
import { DiffRow } from "./state.js";

type Attrs = Record<string, string | boolean | number>;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "className") node.className = String(v);
    else if (typeof v === "boolean") {
      if (v) node.setAttribute(k, "");
    } else node.setAttribute(k, String(v));
  }
  for (const c of children)
    node.append(typeof c === "string" ? document.createTextNode(c) : c);
  return node;
}

export function pngImg(b64: string, alt: string, cls = ""): HTMLImageElement {
  const img = el("img", { alt, className: cls });
  img.src = `data:image/png;base64,${b64}`;
  return img;
}

export function sliderRow(
  label: string,
  name: string,
  min: number,
  max: number,
  step: number,
  value: number,
  onInput: (v: number) => void,
): HTMLElement {
  const out = el("span", { className: "slider-value" }, [String(value)]);
  const input = el("input", {
    type: "range",
    name,
    min,
    max,
    step,
    value,
  });
  input.addEventListener("input", () => {
    out.textContent = input.value;
    onInput(Number(input.value));
  });
  return el("label", { className: `row row-${name}` }, [
    el("span", { className: "row-label" }, [label]),
    input,
    out,
  ]);
}

// triptych: original | counterfactual | original-with-overlay, the overlay
// pane's opacity driven by one slider
export function triptych(
  originalUrl: string,
  run: CompletedRun,
  overlayOpacity: number,
): HTMLElement {
  const overlay = pngImg(run.images.overlay, "attribution overlay", "overlay-img");
  overlay.style.opacity = String(overlayOpacity);
  const panes = el("div", { className: "triptych" }, [
    el("figure", {}, [
      el("img", { alt: "original scan", src: originalUrl, className: "pane" }),
      el("figcaption", {}, ["original"]),
    ]),
    el("figure", {}, [
      pngImg(run.images.counterfactual, "counterfactual", "pane"),
      el("figcaption", {}, ["counterfactual"]),
    ]),
    el("figure", { className: "overlay-pane" }, [
      el("div", { className: "stack" }, [
        el("img", { alt: "original under overlay", src: originalUrl, className: "pane" }),
        overlay,
      ]),
      el("figcaption", {}, ["attribution overlay"]),
    ]),
  ]);
  const opacity = sliderRow("overlay opacity", "overlay-opacity", 0, 1, 0.05,
    overlayOpacity, (v) => {
      overlay.style.opacity = String(v);
    });
  return el("div", { className: "triptych-block" }, [panes, opacity]);
}

export function runMeta(run: CompletedRun): HTMLElement {
  const bits = [
    `run ${run.runId}`,
    `seed ${run.seed}`,
    `ssim ${run.ssim.toFixed(3)}`,
  ];
  if (run.localization !== null)
    bits.push(`localization ${run.localization.toFixed(3)}`);
  return el("div", { className: "run-meta" }, [bits.join("  ·  ")]);
}

export function diffTable(rows: DiffRow[]): HTMLElement {
  if (!rows.length)
    return el("p", { className: "diff-empty" }, ["configs are identical"]);
  const header = el("tr", {}, [
    el("th", {}, ["field"]),
    el("th", {}, ["A"]),
    el("th", {}, ["B"]),
  ]);
  const body = rows.map((r) =>
    el("tr", {}, [
      el("td", {}, [r.field]),
      el("td", {}, [r.a]),
      el("td", {}, [r.b]),
    ]),
  );
  return el("table", { className: "diff-table" }, [header, ...body]);
}

export function errorBox(message: string): HTMLElement {
  return el("div", { className: "error-box", role: "alert" }, [message]);
}

// highlight the control a server/client message is about, e.g. a 400 that
// says "guidance 12.0 outside (0.0, 9.0)" lights up the guidance row
export function markFieldErrors(root: HTMLElement, message: string): void {
  for (const f of ["prompt", "strength", "guidance", "steps", "seed"]) {
    const row = root.querySelector(`.row-${f}`);
    if (!row) continue;
    row.classList.toggle("field-error", message.toLowerCase().includes(f));
  }
}

export function clearFieldErrors(root: HTMLElement): void {
  root.querySelectorAll(".field-error").forEach((n) =>
    n.classList.remove("field-error"),
  );
}
