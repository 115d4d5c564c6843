"""JSON-over-HTTP inference service for the workbench UI.

All images travel as base64 PNG inside JSON. The signed attribution map is
encoded as 16-bit grayscale under the affine transform (m + 1) / 2, so 0.5
gray is zero change. Request validation is explicit (not schema-driven) so
malformed input yields 400 with the offending field named; a bounded
semaphore sheds load with 503 once the queue limit is reached. Generation
runs one at a time over the shared read-only checkpoint.
"""

from __future__ import annotations

import base64
import binascii
import os
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .attribution import (GenerationConfig, GUIDANCE_RANGE, STRENGTH_RANGE,
                          artifact_bytes, counterfactual, induce,
                          localization_score)
from .imgio import decode_gray, gray8_bytes, gray16_bytes
from .metrics import ssim
from .phantoms import (load_entry_image, load_entry_mask, load_entry_roi)
from .runlog import RunLog, scan_id_of, sha256_hex

QUEUE_LIMIT = 8
THUMB_SIZE = 64  # phantoms are already small; thumbnails ship as-is


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message


def _b64_png(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _float_field(body: dict, name: str, default, lo=None, hi=None):
    v = body.get(name, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ApiError(400, f"{name} must be a number")
    v = float(v)
    if lo is not None and not (lo <= v <= hi):
        raise ApiError(400, f"{name} must be in [{lo:g},{hi:g}], got {v:g}")
    return v


def _int_field(body: dict, name: str, default, lo=1, hi=100000):
    v = body.get(name, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ApiError(400, f"{name} must be an integer")
    if not (lo <= v <= hi):
        raise ApiError(400, f"{name} must be in [{lo},{hi}], got {v}")
    return v


def create_app(ckpt, manifest, runlog: RunLog, queue_limit: int = QUEUE_LIMIT) -> FastAPI:
    app = FastAPI(title="counterfactual attribution service", docs_url=None,
                  redoc_url=None, openapi_url=None)
    entries = {scan_id_of(e): e for e in manifest.entries}
    queue = threading.BoundedSemaphore(queue_limit)
    gen_lock = threading.Lock()  # one generation at a time on the checkpoint

    @app.exception_handler(ApiError)
    async def _api_error(_req, exc: ApiError):
        return JSONResponse({"error": exc.message}, status_code=exc.status)

    @app.get("/api/health")
    def health():
        return {"status": "ok", "checkpoint_id": ckpt.checkpoint_id}

    @app.get("/api/scans")
    def scans():
        out = []
        for sid, e in entries.items():
            img = load_entry_image(manifest, e)
            out.append({
                "id": sid,
                "class": e.class_name,
                "label": e.label_text,
                "thumb_png_b64": _b64_png(gray8_bytes(img)),
            })
        return {"scans": out}

    @app.get("/api/scans/{scan_id:path}")
    def scan_png(scan_id: str):
        e = entries.get(scan_id)
        if e is None:
            raise ApiError(404, f"unknown scan {scan_id}")
        with open(os.path.join(manifest.root, e.path), "rb") as f:
            return Response(f.read(), media_type="image/png")

    async def _read_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "request body must be JSON")
        if not isinstance(body, dict):
            raise ApiError(400, "request body must be a JSON object")
        return body

    def _resolve_image(body: dict):
        """Returns (image, input_ref, lesion_mask, roi_mask)."""
        scan_id = body.get("scan_id")
        image_b64 = body.get("image_b64")
        if (scan_id is None) == (image_b64 is None):
            raise ApiError(400, "give exactly one of scan_id or image_b64")
        if scan_id is not None:
            if not isinstance(scan_id, str):
                raise ApiError(400, "scan_id must be a string")
            e = entries.get(scan_id)
            if e is None:
                raise ApiError(404, f"unknown scan {scan_id}")
            img = load_entry_image(manifest, e)
            return (img, {"kind": "scan", "id": scan_id},
                    load_entry_mask(manifest, e), load_entry_roi(manifest, e))
        if not isinstance(image_b64, str):
            raise ApiError(400, "image_b64 must be a string")
        try:
            raw = base64.b64decode(image_b64, validate=True)
            img = decode_gray(raw)
        except (binascii.Error, ValueError) as e:
            raise ApiError(400, f"image_b64: {e}")
        return img, {"kind": "inline", "png_b64": image_b64}, None, None

    def _generate(kind: str, body: dict):
        image, input_ref, lesion_mask, roi_mask = _resolve_image(body)
        prompt = body.get("prompt", "normal chest scan")
        if not isinstance(prompt, str) or not prompt.strip():
            raise ApiError(400, "prompt must be a non-empty string")
        strength = _float_field(body, "strength", 0.85, *STRENGTH_RANGE)
        guidance = _float_field(body, "guidance", 7.5, *GUIDANCE_RANGE)
        steps = _int_field(body, "steps", 75, 1, 2000)
        if "seed" in body:
            seed = _int_field(body, "seed", None, 0, 2**31 - 1)
        else:
            # server-picked seeds are still returned so every run replays
            seed = int.from_bytes(os.urandom(4), "big") >> 1
        cfg = GenerationConfig(prompt=prompt, strength=strength,
                               guidance=guidance, steps=steps, seed=seed)

        if not queue.acquire(blocking=False):
            raise ApiError(503, "model busy: queue limit reached")
        try:
            with gen_lock:
                op = counterfactual if kind == "counterfactual" else induce
                res = op(ckpt, image, cfg)
        finally:
            queue.release()

        # counterfactual maps are masked to the scan's region of interest;
        # induced changes (e.g. an enlarged core) often land outside it, so
        # induce keeps the raw map
        vm, cf_png, ov_png = artifact_bytes(
            res, roi_mask if kind == "counterfactual" else None)
        vm_png = gray16_bytes(np.clip((vm.m + 1.0) / 2.0, 0.0, 1.0))
        score = float(ssim(res.original, res.counter))
        loc = (float(localization_score(vm, lesion_mask))
               if lesion_mask is not None else None)
        rec = runlog.append(
            kind, cfg.to_dict(), input_ref,
            output_sha256={"counterfactual": sha256_hex(cf_png),
                           "overlay": sha256_hex(ov_png)},
            scores={"ssim": score, "localization": loc},
            checkpoint_id=res.checkpoint_id)
        return {
            "counterfactual_png_b64": _b64_png(cf_png),
            "vamap_png_b64": _b64_png(vm_png),
            "overlay_png_b64": _b64_png(ov_png),
            "ssim": score,
            "localization": loc,
            "run_id": rec.run_id,
            "seed": seed,
            "config": cfg.to_dict(),
            "checkpoint_id": res.checkpoint_id,
        }

    @app.post("/api/counterfactual")
    async def api_counterfactual(request: Request):
        return _generate("counterfactual", await _read_body(request))

    @app.post("/api/induce")
    async def api_induce(request: Request):
        return _generate("induce", await _read_body(request))

    @app.get("/api/runs")
    def runs():
        return {"runs": [r.to_dict() for r in runlog.records()]}

    @app.get("/api/runs/{run_id}")
    def run_by_id(run_id: str):
        try:
            rid = int(run_id)
        except ValueError:
            raise ApiError(400, "run_id must be an integer")
        try:
            return runlog.get(rid).to_dict()
        except KeyError:
            raise ApiError(404, f"unknown run {rid}")

    _mount_static(app)
    return app


def _mount_static(app: FastAPI) -> None:
    """Serve the built workbench UI when it exists next to the package."""
    from fastapi.staticfiles import StaticFiles

    here = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    for cand in (os.path.join(here, "frontend", "dist"),
                 os.path.join(here, "frontend", "public")):
        if os.path.isdir(cand) and os.path.isfile(os.path.join(cand, "index.html")):
            app.mount("/", StaticFiles(directory=cand, html=True), name="ui")
            return
