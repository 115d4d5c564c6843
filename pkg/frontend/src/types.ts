// Mirrors the service's JSON contract exactly; see the package README for
// the endpoint table.

export interface ScanInfo {
  id: string;
  class: string;
  label: string;
  thumb_png_b64: string;
}

export interface GenerateRequest {
  scan_id?: string;
  image_b64?: string;
  prompt?: string;
  strength?: number;
  guidance?: number;
  steps?: number;
  seed?: number;
}

export interface GenerationConfig {
  prompt: string;
  strength: number;
  guidance: number;
  steps: number;
  seed: number;
  control: number[] | null;
}

export interface GenerateResponse {
  counterfactual_png_b64: string;
  vamap_png_b64: string;
  overlay_png_b64: string;
  ssim: number;
  localization: number | null;
  run_id: number;
  seed: number;
  config: GenerationConfig;
  checkpoint_id: string;
}

export interface RunRecord {
  run_id: number;
  timestamp: string;
  kind: string;
  config: GenerationConfig;
  input_ref: { kind: string; id?: string; png_b64?: string };
  output_refs: Record<string, string>;
  output_sha256: Record<string, string>;
  scores: Record<string, number | null>;
  checkpoint_id: string;
}

export type RunKind = "counterfactual" | "induce";

// a finished generation as the UI holds it: never rendered without its
// run id and seed
export interface CompletedRun {
  runId: number;
  seed: number;
  kind: RunKind;
  scanId: string | null;
  config: GenerationConfig;
  images: { counterfactual: string; vamap: string; overlay: string };
  ssim: number;
  localization: number | null;
}
