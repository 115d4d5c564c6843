import { ApiClient, ApiError } from "./api.js";
import {
  GUIDANCE_RANGE,
  SessionState,
  STRENGTH_RANGE,
  addRun,
  canSubmit,
  compareBlocker,
  configDiff,
  initialState,
  validateParams,
} from "./state.js";
import {
  clearFieldErrors,
  diffTable,
  el,
  errorBox,
  markFieldErrors,
  pngImg,
  runMeta,
  sliderRow,
  triptych,
} from "./render.js";
import { b64ToBytes, sha256Hex, sha256HexOfB64 } from "./hash.js";
import { CompletedRun, GenerateResponse, ScanInfo } from "./types.js";

// the label grammar the corpus was annotated with; anything else still
// tokenizes (unknown words map to <unk>)
const PROMPT_HINTS = [
  "normal chest scan",
  "healthy lungs",
  "opacity in the left lung",
  "opacity in the right lung",
  "diffuse haze",
  "mild diffuse haze",
  "focal pneumonia clusters",
  "viral pneumonia",
  "cardiomegaly",
  "cardiomegaly with enlarged heart",
];

function toCompleted(
  kind: "counterfactual" | "induce",
  scanId: string | null,
  resp: GenerateResponse,
): CompletedRun {
  return {
    runId: resp.run_id,
    seed: resp.seed,
    kind,
    scanId,
    config: resp.config,
    images: {
      counterfactual: resp.counterfactual_png_b64,
      vamap: resp.vamap_png_b64,
      overlay: resp.overlay_png_b64,
    },
    ssim: resp.ssim,
    localization: resp.localization,
  };
}

export class App {
  state: SessionState;
  api: ApiClient;
  root: HTMLElement;
  scans: ScanInfo[] = [];
  checkpointId = "";
  lastRun: CompletedRun | null = null;
  lastError = "";
  overlayOpacity = 0.85;
  replayStatus: Record<number, string> = {};
  identityNote = "";

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    this.state = initialState();
  }

  async start(): Promise<void> {
    const [health, scans] = await Promise.all([
      this.api.health(),
      this.api.scans(),
    ]);
    this.checkpointId = health.checkpoint_id;
    this.scans = scans;
    this.render();
  }

  async submit(): Promise<void> {
    const s = this.state;
    if (s.pending) return; // one generation in flight per session
    this.lastError = "";
    this.identityNote = "";
    const issues = validateParams(s);
    if (issues.length || !s.selectedScan) {
      this.lastError = issues.length
        ? issues[0].message
        : "pick a scan first";
      this.render();
      return;
    }
    s.pending = true;
    this.render();
    try {
      const req = {
        scan_id: s.selectedScan,
        prompt: s.prompt,
        strength: s.strength,
        guidance: s.guidance,
        steps: s.steps,
        ...(s.seed.trim() === "" ? {} : { seed: Number(s.seed.trim()) }),
      };
      const resp = await this.api.generate(s.kind, req);
      const run = toCompleted(s.kind, s.selectedScan, resp);
      this.lastRun = run;
      s.history = addRun(s.history, run);
      if (s.strength === 0 && s.kind === "counterfactual")
        void this.checkIdentity(run);
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
    } finally {
      s.pending = false;
      this.render();
    }
  }

  // strength 0 must hand the input back untouched; verify by hashing the
  // returned PNG against the scan PNG itself
  async checkIdentity(run: CompletedRun): Promise<void> {
    if (!run.scanId) return;
    const resp = await fetch(this.api.scanPngUrl(run.scanId));
    const original = new Uint8Array(await resp.arrayBuffer());
    const a = await sha256Hex(original);
    const b = await sha256Hex(b64ToBytes(run.images.counterfactual));
    this.identityNote =
      a === b
        ? "strength 0: counterfactual is pixel-identical to the original"
        : "strength 0: counterfactual differs from the original";
    this.render();
  }

  async replay(run: CompletedRun): Promise<void> {
    if (!run.scanId || this.state.pending) return;
    this.replayStatus[run.runId] = "replaying";
    this.render();
    try {
      const record = await this.api.run(run.runId);
      const resp = await this.api.generate(run.kind, {
        scan_id: run.scanId,
        prompt: run.config.prompt,
        strength: run.config.strength,
        guidance: run.config.guidance,
        steps: run.config.steps,
        seed: run.seed,
      });
      const freshCf = await sha256HexOfB64(resp.counterfactual_png_b64);
      const freshOv = await sha256HexOfB64(resp.overlay_png_b64);
      const ok =
        record.output_sha256["counterfactual"] === freshCf &&
        record.output_sha256["overlay"] === freshOv;
      this.replayStatus[run.runId] = ok
        ? "replay ok: hashes match"
        : "replay mismatch";
    } catch (e) {
      this.replayStatus[run.runId] =
        "replay failed: " + (e instanceof Error ? e.message : String(e));
    }
    this.render();
  }

  render(): void {
    const s = this.state;
    this.root.replaceChildren(
      el("header", {}, [
        el("h1", {}, ["counterfactual workbench"]),
        el("span", { className: "checkpoint" }, [
          this.checkpointId ? `checkpoint ${this.checkpointId}` : "",
        ]),
      ]),
      el("div", { className: "layout" }, [
        this.renderScanGrid(),
        el("main", {}, [
          this.renderControls(),
          this.lastError ? errorBox(this.lastError) : el("span"),
          this.renderResult(),
        ]),
        el("aside", {}, [this.renderHistory(), this.renderCompare()]),
      ]),
    );
    if (this.lastError) markFieldErrors(this.root, this.lastError);
    else clearFieldErrors(this.root);
  }

  renderScanGrid(): HTMLElement {
    const cells = this.scans.map((scan) => {
      const btn = el(
        "button",
        {
          className:
            "scan-cell" + (scan.id === this.state.selectedScan ? " selected" : ""),
          title: scan.label,
        },
        [pngImg(scan.thumb_png_b64, scan.label, "thumb"), el("span", {}, [scan.id])],
      );
      btn.addEventListener("click", () => {
        this.state.selectedScan = scan.id;
        this.render();
      });
      return btn;
    });
    return el("nav", { id: "scan-grid" }, cells);
  }

  renderControls(): HTMLElement {
    const s = this.state;
    const kind = el("select", { name: "kind" }, [
      el("option", { value: "counterfactual" }, ["counterfactual"]),
      el("option", { value: "induce" }, ["induce"]),
    ]) as HTMLSelectElement;
    kind.value = s.kind;
    kind.addEventListener("change", () => {
      s.kind = kind.value as SessionState["kind"];
    });

    const prompt = el("input", {
      name: "prompt",
      list: "prompt-hints",
      value: s.prompt,
    }) as HTMLInputElement;
    prompt.addEventListener("input", () => (s.prompt = prompt.value));
    const hints = el(
      "datalist",
      { id: "prompt-hints" },
      PROMPT_HINTS.map((h) => el("option", { value: h })),
    );

    const seed = el("input", {
      name: "seed",
      placeholder: "seed (empty = server picks)",
      value: s.seed,
    }) as HTMLInputElement;
    seed.addEventListener("input", () => (s.seed = seed.value));

    const steps = el("input", {
      name: "steps",
      type: "number",
      min: 1,
      max: 2000,
      value: s.steps,
    }) as HTMLInputElement;
    steps.addEventListener("input", () => (s.steps = Number(steps.value)));

    const submit = el(
      "button",
      { id: "submit", type: "button", disabled: s.pending },
      [s.pending ? "generating..." : "generate"],
    );
    submit.addEventListener("click", () => void this.submit());

    return el("section", { id: "controls" }, [
      el("label", { className: "row row-kind" }, [
        el("span", { className: "row-label" }, ["mode"]),
        kind,
      ]),
      el("label", { className: "row row-prompt" }, [
        el("span", { className: "row-label" }, ["prompt"]),
        prompt,
        hints,
      ]),
      sliderRow("strength", "strength", STRENGTH_RANGE[0], STRENGTH_RANGE[1],
        0.01, s.strength, (v) => (s.strength = v)),
      sliderRow("guidance", "guidance", GUIDANCE_RANGE[0], GUIDANCE_RANGE[1],
        0.1, s.guidance, (v) => (s.guidance = v)),
      el("label", { className: "row row-steps" }, [
        el("span", { className: "row-label" }, ["steps"]),
        steps,
      ]),
      el("label", { className: "row row-seed" }, [
        el("span", { className: "row-label" }, ["seed"]),
        seed,
      ]),
      submit,
    ]);
  }

  renderResult(): HTMLElement {
    const run = this.lastRun;
    if (!run) return el("section", { id: "result" }, []);
    const originalUrl = run.scanId ? this.api.scanPngUrl(run.scanId) : "";
    const pinA = el("button", { className: "pin-a" }, ["pin A"]);
    pinA.addEventListener("click", () => {
      this.state.pinnedA = run;
      this.render();
    });
    const pinB = el("button", { className: "pin-b" }, ["pin B"]);
    pinB.addEventListener("click", () => {
      this.state.pinnedB = run;
      this.render();
    });
    return el("section", { id: "result" }, [
      triptych(originalUrl, run, this.overlayOpacity),
      runMeta(run),
      el("figure", { className: "vamap" }, [
        pngImg(run.images.vamap, "attribution map"),
        el("figcaption", {}, ["signed attribution map (gray = 0)"]),
      ]),
      this.identityNote
        ? el("p", { className: "identity-note" }, [this.identityNote])
        : el("span"),
      el("div", { className: "pin-row" }, [pinA, pinB]),
    ]);
  }

  renderHistory(): HTMLElement {
    const items = [...this.state.history].reverse().map((run) => {
      const show = el("button", { className: "show" }, ["show"]);
      show.addEventListener("click", () => {
        this.lastRun = run;
        this.render();
      });
      const rep = el("button", { className: "replay" }, ["replay"]);
      rep.addEventListener("click", () => void this.replay(run));
      const status = this.replayStatus[run.runId];
      return el("li", { className: "history-item" }, [
        el("span", {}, [
          `#${run.runId} ${run.kind} ${run.scanId ?? "inline"} ` +
            `"${run.config.prompt}" seed ${run.seed}`,
        ]),
        show,
        rep,
        status ? el("em", { className: "replay-status" }, [status]) : el("span"),
      ]);
    });
    return el("section", { id: "history" }, [
      el("h2", {}, ["history"]),
      el("ul", {}, items),
    ]);
  }

  renderCompare(): HTMLElement {
    const { pinnedA: a, pinnedB: b } = this.state;
    const blocker = compareBlocker(a, b);
    if (blocker)
      return el("section", { id: "compare" }, [
        el("h2", {}, ["compare"]),
        el("p", { className: "compare-blocker" }, [blocker]),
      ]);
    const pane = (run: CompletedRun, tag: string) =>
      el("figure", { className: "compare-pane" }, [
        pngImg(run.images.overlay, `${tag} overlay`),
        el("figcaption", {}, [`${tag}: run ${run.runId}, seed ${run.seed}`]),
      ]);
    return el("section", { id: "compare" }, [
      el("h2", {}, ["compare"]),
      el("div", { className: "compare-row" }, [pane(a!, "A"), pane(b!, "B")]),
      diffTable(configDiff(a!.config, b!.config)),
    ]);
  }
}

export function initApp(root: HTMLElement, api: ApiClient = new ApiClient()): App {
  const app = new App(root, api);
  void app.start();
  return app;
}

const mount = typeof document !== "undefined" && document.getElementById("app");
if (mount) initApp(mount as HTMLElement);
