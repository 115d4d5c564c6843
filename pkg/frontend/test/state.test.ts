import { describe, expect, it } from "vitest";

import {
  GUIDANCE_RANGE,
  STRENGTH_RANGE,
  addRun,
  canSubmit,
  compareBlocker,
  configDiff,
  initialState,
  validateParams,
} from "../src/state.js";
import { CompletedRun, GenerationConfig } from "../src/types.js";

function cfg(over: Partial<GenerationConfig> = {}): GenerationConfig {
  return {
    prompt: "normal chest scan",
    strength: 0.85,
    guidance: 7.5,
    steps: 75,
    seed: 1,
    control: null,
    ...over,
  };
}

function run(runId: number, over: Partial<CompletedRun> = {}): CompletedRun {
  return {
    runId,
    seed: runId,
    kind: "counterfactual",
    scanId: "normal/1",
    config: cfg({ seed: runId }),
    images: { counterfactual: "", vamap: "", overlay: "" },
    ssim: 0.9,
    localization: null,
    ...over,
  };
}

describe("slider ranges", () => {
  it("mirror the server validation ranges", () => {
    expect(STRENGTH_RANGE).toEqual([0, 1]);
    expect(GUIDANCE_RANGE).toEqual([0, 9]);
  });
});

describe("validateParams", () => {
  it("accepts the defaults", () => {
    expect(validateParams(initialState())).toEqual([]);
  });

  it("flags bad steps, seed, and prompt by field name", () => {
    const s = initialState();
    s.steps = 0.5;
    s.seed = "abc";
    s.prompt = "  ";
    const fields = validateParams(s).map((i) => i.field);
    expect(fields).toEqual(["steps", "seed", "prompt"]);
  });

  it("gates canSubmit together with scan selection and pending", () => {
    const s = initialState();
    expect(canSubmit(s)).toBe(false); // no scan picked
    s.selectedScan = "normal/1";
    expect(canSubmit(s)).toBe(true);
    s.pending = true;
    expect(canSubmit(s)).toBe(false);
  });
});

describe("history", () => {
  it("stays ordered by run id and deduplicates", () => {
    let h = addRun([], run(3));
    h = addRun(h, run(1));
    h = addRun(h, run(2));
    h = addRun(h, run(2, { ssim: 0.5 }));
    expect(h.map((r) => r.runId)).toEqual([1, 2, 3]);
    expect(h[1].ssim).toBe(0.5);
  });
});

describe("configDiff", () => {
  it("is empty for identical configs", () => {
    expect(configDiff(cfg(), cfg())).toEqual([]);
  });

  it("reports a single row when only guidance differs", () => {
    const rows = configDiff(cfg(), cfg({ guidance: 4.0 }));
    expect(rows).toEqual([{ field: "guidance", a: "7.5", b: "4" }]);
  });
});

describe("compareBlocker", () => {
  it("requires two pinned runs on one scan", () => {
    expect(compareBlocker(null, null)).toMatch(/pin two runs/);
    expect(compareBlocker(run(1), run(2, { scanId: "normal/2" }))).toMatch(
      /different scans/,
    );
    expect(compareBlocker(run(1), run(2))).toBeNull();
  });
});
