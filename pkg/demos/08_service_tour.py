"""
The HTTP service, end to end
============================

`vade serve` exposes the whole pipeline over JSON: scan listing, generation
(counterfactual and induce), and replayable run history. This demo drives the
exact same app in-process with the test client, so it runs without opening a
port. Omitted seeds are filled in server-side and echoed back, which is what
makes every interactive run replayable.

Needs a trained checkpoint: set VADE_CHECKPOINT (or pass a path as argv[1]).
"""

import os
import sys

from fastapi.testclient import TestClient

from vade.checkpoint import Checkpoint
from vade.phantoms import PhantomSpec, generate_dataset
from vade.runlog import RunLog
from vade.service import create_app

path = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("VADE_CHECKPOINT")
if not path:
    sys.exit("set VADE_CHECKPOINT or pass a checkpoint path")
ckpt = Checkpoint.load(path)

OUT = os.path.join(os.path.dirname(__file__), "out", "service")
man = generate_dataset(PhantomSpec(), {"focal_pneumonia": 2}, os.path.join(OUT, "data"),
                       seed=55)
app = create_app(ckpt, man, RunLog(os.path.join(OUT, "runs.jsonl")))
client = TestClient(app)

print("GET /api/health ->", client.get("/api/health").json())

scans = client.get("/api/scans").json()["scans"]
print(f"GET /api/scans  -> {len(scans)} scans, first: {scans[0]['id']}")

r = client.post("/api/counterfactual", json={
    "scan_id": scans[0]["id"], "prompt": "normal chest scan",
    "strength": 0.85, "guidance": 7.5, "steps": 20})
body = r.json()
print(f"POST /api/counterfactual -> run {body['run_id']}, "
      f"seed {body['seed']} (server-assigned), ssim {body['ssim']:.3f}, "
      f"localization {body['localization']:.3f}")

# out-of-range parameters come back as a 400 naming the field
bad = client.post("/api/counterfactual", json={"scan_id": scans[0]["id"],
                                               "strength": 1.5})
print("strength=1.5     ->", bad.status_code, bad.json())

runs = client.get("/api/runs").json()["runs"]
echoed = client.get(f"/api/runs/{body['run_id']}").json()
print(f"GET /api/runs    -> {len(runs)} record(s); "
      f"run {body['run_id']} echoes config {echoed['config']}")
