import { CompletedRun, GenerationConfig } from "./types.js";

// slider ranges mirror the server's validation; the UI should never be able
// to submit a value the service would 400
export const STRENGTH_RANGE: [number, number] = [0, 1];
export const GUIDANCE_RANGE: [number, number] = [0, 9];
export const STEPS_RANGE: [number, number] = [1, 2000];

export interface SessionState {
  selectedScan: string | null;
  prompt: string;
  strength: number;
  guidance: number;
  steps: number;
  seed: string; // "" lets the server pick (it always echoes the seed back)
  kind: "counterfactual" | "induce";
  pending: boolean; // one in-flight generation per session
  history: CompletedRun[]; // ordered by run id
  pinnedA: CompletedRun | null;
  pinnedB: CompletedRun | null;
}

export function initialState(): SessionState {
  return {
    selectedScan: null,
    prompt: "normal chest scan",
    strength: 0.85,
    guidance: 7.5,
    steps: 75,
    seed: "",
    kind: "counterfactual",
    pending: false,
    history: [],
    pinnedA: null,
    pinnedB: null,
  };
}

export interface FieldIssue {
  field: string;
  message: string;
}

// free-text fields are checked client-side; strength/guidance are range
// inputs whose min/max already mirror the server, and anything that slips
// past them goes to the server so its 400 is shown verbatim
export function validateParams(s: SessionState): FieldIssue[] {
  const issues: FieldIssue[] = [];
  const [slo, shi] = STEPS_RANGE;
  if (!Number.isInteger(s.steps) || s.steps < slo || s.steps > shi)
    issues.push({ field: "steps", message: `steps must be an integer in [${slo}, ${shi}]` });
  if (s.seed !== "" && !/^\d+$/.test(s.seed.trim()))
    issues.push({ field: "seed", message: "seed must be a non-negative integer (or empty)" });
  if (!s.prompt.trim())
    issues.push({ field: "prompt", message: "prompt must be non-empty" });
  return issues;
}

export function canSubmit(s: SessionState): boolean {
  return !s.pending && s.selectedScan !== null && validateParams(s).length === 0;
}

export function addRun(history: CompletedRun[], run: CompletedRun): CompletedRun[] {
  const next = history.filter((r) => r.runId !== run.runId);
  next.push(run);
  next.sort((a, b) => a.runId - b.runId);
  return next;
}

export interface DiffRow {
  field: string;
  a: string;
  b: string;
}

export function configDiff(a: GenerationConfig, b: GenerationConfig): DiffRow[] {
  const fields: (keyof GenerationConfig)[] = [
    "prompt",
    "strength",
    "guidance",
    "steps",
    "seed",
  ];
  const rows: DiffRow[] = [];
  for (const f of fields) {
    const va = a[f];
    const vb = b[f];
    if (va !== vb) rows.push({ field: f, a: String(va), b: String(vb) });
  }
  return rows;
}

// compare is only meaningful for two runs of the same scan
export function compareBlocker(
  a: CompletedRun | null,
  b: CompletedRun | null,
): string | null {
  if (!a || !b) return "pin two runs (A and B) to compare";
  if (a.scanId === null || b.scanId === null || a.scanId !== b.scanId)
    return "pinned runs are on different scans; pick two runs of one scan";
  return null;
}
