import {
  GenerateRequest,
  GenerateResponse,
  RunRecord,
  ScanInfo,
} from "./types.js";

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let message = `${resp.status} ${resp.statusText}`;
    try {
      const body = await resp.json();
      if (body && typeof body.error === "string") message = body.error;
    } catch {
      // non-JSON error body: keep the status line
    }
    throw new ApiError(resp.status, message);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  base: string;

  constructor(base = "") {
    this.base = base;
  }

  health(): Promise<{ status: string; checkpoint_id: string }> {
    return fetch(`${this.base}/api/health`).then((r) => asJson(r));
  }

  async scans(): Promise<ScanInfo[]> {
    const body = await fetch(`${this.base}/api/scans`).then((r) =>
      asJson<{ scans: ScanInfo[] }>(r),
    );
    return body.scans;
  }

  scanPngUrl(id: string): string {
    return `${this.base}/api/scans/${id}`;
  }

  counterfactual(req: GenerateRequest): Promise<GenerateResponse> {
    return this.generate("counterfactual", req);
  }

  induce(req: GenerateRequest): Promise<GenerateResponse> {
    return this.generate("induce", req);
  }

  generate(
    kind: "counterfactual" | "induce",
    req: GenerateRequest,
  ): Promise<GenerateResponse> {
    return fetch(`${this.base}/api/${kind}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    }).then((r) => asJson(r));
  }

  async runs(): Promise<RunRecord[]> {
    const body = await fetch(`${this.base}/api/runs`).then((r) =>
      asJson<{ runs: RunRecord[] }>(r),
    );
    return body.runs;
  }

  run(id: number): Promise<RunRecord> {
    return fetch(`${this.base}/api/runs/${id}`).then((r) => asJson(r));
  }
}
