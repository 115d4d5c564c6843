"""Append-only JSONL run log. Every generation records its full config,
input reference, output hashes, and scores, so any run can be replayed
bit-exactly from the log alone (plus the checkpoint and, for dataset scans,
the dataset)."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass, field


@dataclass
class RunRecord:
    run_id: int
    timestamp: str
    kind: str                      # counterfactual | induce | train | ...
    config: dict                   # GenerationConfig.to_dict() or command args
    input_ref: dict                # {"kind":"scan","id":...} or {"kind":"inline","png_b64":...}
    output_refs: dict              # name -> file path (when written to disk)
    output_sha256: dict            # name -> hex digest of the PNG bytes
    scores: dict                   # ssim, localization (absent where n/a)
    checkpoint_id: str

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "RunRecord":
        return RunRecord(**d)


class RunLog:
    """Monotonic-id JSONL log; safe for concurrent appends in one process."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._next = 1
        if os.path.isfile(path):
            with open(path) as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self._next = max(self._next, json.loads(line)["run_id"] + 1)
        else:
            parent = os.path.dirname(os.path.abspath(path))
            os.makedirs(parent, exist_ok=True)

    def append(self, kind: str, config: dict, input_ref: dict,
               output_refs: dict = None, output_sha256: dict = None,
               scores: dict = None, checkpoint_id: str = "") -> RunRecord:
        with self._lock:
            rec = RunRecord(
                run_id=self._next,
                timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
                kind=kind, config=config, input_ref=input_ref,
                output_refs=output_refs or {}, output_sha256=output_sha256 or {},
                scores=scores or {}, checkpoint_id=checkpoint_id)
            with open(self.path, "a") as f:
                f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            self._next += 1
            return rec

    def records(self) -> list:
        if not os.path.isfile(self.path):
            return []
        out = []
        with open(self.path) as f:
            for line in f:
                line = line.strip()
                if line:
                    out.append(RunRecord.from_dict(json.loads(line)))
        return out

    def get(self, run_id: int) -> RunRecord:
        for rec in self.records():
            if rec.run_id == run_id:
                return rec
        raise KeyError(f"no run {run_id}")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def find_entry(manifest, scan_id: str):
    for e in manifest.entries:
        if scan_id_of(e) == scan_id:
            return e
    raise KeyError(f"scan {scan_id} not in manifest")


def resolve_input(record: RunRecord, manifest=None):
    """Load the input image a record refers to."""
    from .imgio import decode_gray, read_gray
    import base64

    ref = record.input_ref
    if ref.get("kind") == "inline":
        return decode_gray(base64.b64decode(ref["png_b64"]))
    if ref.get("kind") == "scan":
        if manifest is None:
            raise ValueError("record refers to a dataset scan; manifest required")
        e = find_entry(manifest, ref["id"])
        return read_gray(os.path.join(manifest.root, e.path))
    raise ValueError(f"unrecognized input_ref {ref}")


def scan_id_of(entry) -> str:
    """Stable scan id: class-qualified PNG stem, e.g. normal/412."""
    stem = os.path.splitext(entry.path)[0]
    return stem.replace(os.sep, "/")


def replay(record: RunRecord, ckpt, manifest=None) -> dict:
    """Re-run a generation record and compare output hashes.

    Returns {"match": bool, "hashes": {...}} where hashes are freshly
    computed; match is True when every hash stored on the record equals its
    fresh counterpart."""
    from .attribution import GenerationConfig, artifact_bytes, counterfactual, induce

    if record.kind not in ("counterfactual", "induce"):
        raise ValueError(f"cannot replay a {record.kind!r} record")
    image = resolve_input(record, manifest)
    cfg = GenerationConfig.from_dict(record.config)
    op = counterfactual if record.kind == "counterfactual" else induce
    res = op(ckpt, image, cfg)
    roi = None
    if record.kind == "counterfactual" and record.input_ref.get("kind") == "scan":
        from .phantoms import load_entry_roi
        roi = load_entry_roi(manifest, find_entry(manifest, record.input_ref["id"]))
    _, cf_png, ov_png = artifact_bytes(res, roi)
    fresh = {
        "counterfactual": sha256_hex(cf_png),
        "overlay": sha256_hex(ov_png),
    }
    stored = record.output_sha256
    match = all(stored.get(k) == v for k, v in fresh.items() if k in stored) \
        and bool(set(stored) & set(fresh))
    return {"match": match, "hashes": fresh}
