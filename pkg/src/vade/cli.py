"""Command-line front end.

Subcommands: gen-data, train, train-codec, counterfactual, induce, evaluate,
sweep, serve. Exit codes: 0 success, 1 usage error, 2 data error (missing or
corrupt files, bad manifests, held-out class violations), 3 numeric
divergence during training.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys

import numpy as np

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# the two reported operating points span this grid
SWEEP_STRENGTHS = (0.55, 0.85)
SWEEP_GUIDANCES = (4.0, 7.5)

DEFAULT_CLASS_MIX = {
    "normal": 80, "lung_opacity": 40, "diffuse_haze": 40, "focal_pneumonia": 40}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; our contract reserves 2 for data
    # problems, so route usage failures through an exception instead
    def error(self, message):
        raise UsageError(message)


def load_config(path: str) -> dict:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".toml":
            try:
                import tomllib as toml_reader
            except ImportError:
                import tomli as toml_reader
            with open(path, "rb") as f:
                return toml_reader.load(f)
        if ext == ".json":
            with open(path) as f:
                return json.load(f)
    except (json.JSONDecodeError, ValueError) as e:
        raise UsageError(f"could not parse {path}: {e}")
    raise UsageError(f"config must be .toml or .json, got {path}")


def _default_runlog(out: str) -> str:
    base = out if os.path.isdir(out) or not os.path.splitext(out)[1] else os.path.dirname(out)
    return os.path.join(base or ".", "runs.jsonl")


def _open_runlog(args):
    from .runlog import RunLog
    path = getattr(args, "runlog", None) or _default_runlog(args.out)
    return RunLog(path)


def build_parser() -> _Parser:
    p = _Parser(prog="vade", description=__doc__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="render a phantom corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", help="toml/json with class_mix / spec overrides")
    g.add_argument("--heldout-ok", action="store_true")

    t = sub.add_parser("train", help="staged training run")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--seed", type=int)
    t.add_argument("--config", help="toml/json with train/schedule/denoiser tables")
    t.add_argument("--codec", help="path to a fitted codec (.npz) to train under")
    t.add_argument("--quiet", action="store_true")

    tc = sub.add_parser("train-codec", help="fit the image codec")
    tc.add_argument("--data", required=True)
    tc.add_argument("--out", required=True, help="codec output path (.npz)")
    tc.add_argument("--seed", type=int, default=0)
    tc.add_argument("--config", help="toml/json with steps/lr/batch_size/codec table")

    for name, help_ in (("counterfactual", "healthy counterfactual of a scan"),
                        ("induce", "induce a named condition on a healthy scan")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--checkpoint", default=os.environ.get("VADE_CHECKPOINT"))
        c.add_argument("--scan", help="dataset scan id, e.g. lung_opacity/412")
        c.add_argument("--data", help="dataset dir (required with --scan)")
        c.add_argument("--input", help="standalone grayscale png")
        c.add_argument("--out", required=True, help="output directory")
        c.add_argument("--prompt")
        c.add_argument("--strength", type=float)
        c.add_argument("--guidance", type=float)
        c.add_argument("--steps", type=int)
        c.add_argument("--seed", type=int)
        c.add_argument("--config", help="toml/json generation config")
        c.add_argument("--runlog")

    e = sub.add_parser("evaluate", help="counterfactual quality report over a dataset")
    e.add_argument("--checkpoint", default=os.environ.get("VADE_CHECKPOINT"))
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--strength", type=float, default=0.85)
    e.add_argument("--guidance", type=float, default=7.5)
    e.add_argument("--steps", type=int, default=75)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--extractor", choices=["raw-downsample", "codec-encoder"],
                   default="raw-downsample")
    e.add_argument("--codec", help="fitted codec (.npz), required for codec-encoder")
    e.add_argument("--max-per-class", type=int)
    e.add_argument("--runlog")

    w = sub.add_parser("sweep", help="evaluate over the strength x guidance grid")
    w.add_argument("--checkpoint", default=os.environ.get("VADE_CHECKPOINT"))
    w.add_argument("--data", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--strengths", default=",".join(str(s) for s in SWEEP_STRENGTHS))
    w.add_argument("--guidances", default=",".join(str(g) for g in SWEEP_GUIDANCES))
    w.add_argument("--steps", type=int, default=75)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--max-per-class", type=int)
    w.add_argument("--runlog")

    s = sub.add_parser("serve", help="run the http service")
    s.add_argument("--checkpoint", default=os.environ.get("VADE_CHECKPOINT"))
    s.add_argument("--data", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8741)
    s.add_argument("--runlog")
    return p


def _load_checkpoint(path):
    from .checkpoint import Checkpoint
    if not path:
        raise UsageError("--checkpoint is required (or set VADE_CHECKPOINT)")
    return Checkpoint.load(path)


def cmd_gen_data(args) -> int:
    from .phantoms import PhantomSpec, generate_dataset

    cfg = load_config(args.config) if args.config else {}
    spec = PhantomSpec.from_dict(cfg["spec"]) if "spec" in cfg else PhantomSpec()
    mix = cfg.get("class_mix", DEFAULT_CLASS_MIX)
    mix = {k: int(v) for k, v in mix.items()}
    heldout_ok = bool(cfg.get("heldout_ok", False)) or args.heldout_ok
    manifest = generate_dataset(spec, mix, args.out, args.seed, heldout_ok=heldout_ok)
    _open_runlog(args).append(
        "gen-data", {"class_mix": mix, "seed": args.seed, "heldout_ok": heldout_ok},
        {"kind": "none"}, output_refs={"manifest": os.path.join(args.out, "manifest.json")})
    print(f"wrote {len(manifest.entries)} scans to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .codec import load_codec
    from .denoiser import DenoiserConfig
    from .phantoms import load_manifest
    from .schedule import make_schedule
    from .training import TrainConfig, train

    cfg = load_config(args.config) if args.config else {}
    tkw = dict(cfg.get("train", {}))
    if args.seed is not None:
        tkw["seed"] = args.seed
    try:
        tc = TrainConfig(**tkw)
    except TypeError as e:
        raise UsageError(f"bad train config: {e}")
    sched = make_schedule(**cfg["schedule"]) if "schedule" in cfg else None
    dcfg = DenoiserConfig.from_dict(cfg["denoiser"]) if "denoiser" in cfg else None
    codec = load_codec(args.codec) if args.codec else None
    manifest = load_manifest(args.data)

    progress = None if args.quiet else (
        lambda stage, step, loss: print(f"{stage} {step} {loss:.4f}", flush=True))
    ckpt = train(manifest, tc, denoiser_config=dcfg, sched=sched, codec=codec,
                 progress=progress)
    cid = ckpt.save(args.out)
    _open_runlog(args).append(
        "train", {"train": tc.to_dict(), "schedule": ckpt.sched.to_dict(),
                  "data": args.data},
        {"kind": "none"}, output_refs={"checkpoint": args.out}, checkpoint_id=cid)
    print(f"checkpoint {cid} -> {args.out}")
    return 0


def cmd_train_codec(args) -> int:
    from .codec import CodecConfig, save_codec, train_codec
    from .imgio import read_gray
    from .numerics import SeededRng
    from .phantoms import load_manifest

    cfg = load_config(args.config) if args.config else {}
    ccfg = CodecConfig.from_dict(cfg["codec"]) if "codec" in cfg else None
    manifest = load_manifest(args.data)
    images = np.stack([
        read_gray(os.path.join(manifest.root, e.path))[None, :, :].astype(np.float32)
        for e in manifest.entries])
    codec, trace = train_codec(images, SeededRng(args.seed),
                               steps=int(cfg.get("steps", 1500)),
                               lr=float(cfg.get("lr", 2e-3)),
                               batch_size=int(cfg.get("batch_size", 16)),
                               config=ccfg)
    save_codec(codec, args.out)
    _open_runlog(args).append(
        "train-codec", {"steps": int(cfg.get("steps", 1500)), "seed": args.seed,
                        "data": args.data},
        {"kind": "none"}, output_refs={"codec": args.out},
        scores={"final_loss": float(np.mean(trace[-25:]))})
    print(f"codec -> {args.out} (final loss {np.mean(trace[-25:]):.4f})")
    return 0


def _resolve_cli_input(args):
    """Returns (image f64 [S,S], input_ref dict, lesion mask or None, roi or None)."""
    from .imgio import read_gray, read_mask
    from .phantoms import load_manifest, load_entry_roi
    from .runlog import scan_id_of

    if bool(args.scan) == bool(args.input):
        raise UsageError("give exactly one of --scan or --input")
    if args.scan:
        if not args.data:
            raise UsageError("--scan requires --data")
        manifest = load_manifest(args.data)
        entry = next((e for e in manifest.entries if scan_id_of(e) == args.scan), None)
        if entry is None:
            raise FileNotFoundError(f"scan {args.scan} not in {args.data}")
        img = read_gray(os.path.join(manifest.root, entry.path))
        mask_path = os.path.join(manifest.root, os.path.splitext(entry.path)[0] + ".mask.png")
        mask = read_mask(mask_path) if os.path.isfile(mask_path) else None
        return img, {"kind": "scan", "id": args.scan}, mask, load_entry_roi(manifest, entry)
    img = read_gray(args.input)
    with open(args.input, "rb") as f:
        b64 = base64.b64encode(f.read()).decode()
    return img, {"kind": "inline", "png_b64": b64}, None, None


def cmd_generate(args, kind: str) -> int:
    from .attribution import (GenerationConfig, artifact_bytes, counterfactual,
                              induce, localization_score)
    from .metrics import ssim
    from .runlog import sha256_hex

    cfg = load_config(args.config) if args.config else {}
    gkw = dict(cfg)
    for key in ("prompt", "strength", "guidance", "steps", "seed"):
        v = getattr(args, key)
        if v is not None:
            gkw[key] = v
    if kind == "induce" and "prompt" not in gkw:
        raise UsageError("induce needs --prompt naming the condition")
    try:
        gcfg = GenerationConfig(**gkw)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad generation config: {e}")

    ckpt = _load_checkpoint(args.checkpoint)
    image, input_ref, mask, roi = _resolve_cli_input(args)

    op = counterfactual if kind == "counterfactual" else induce
    res = op(ckpt, image, gcfg)
    # induced changes often land outside the scan's region of interest
    vm, cf_bytes, ov_bytes = artifact_bytes(
        res, roi if kind == "counterfactual" else None)

    os.makedirs(args.out, exist_ok=True)
    out_files = {"counterfactual": os.path.join(args.out, "counterfactual.png"),
                 "overlay": os.path.join(args.out, "overlay.png"),
                 "vamap": os.path.join(args.out, "vamap.npy")}
    with open(out_files["counterfactual"], "wb") as f:
        f.write(cf_bytes)
    with open(out_files["overlay"], "wb") as f:
        f.write(ov_bytes)
    np.save(out_files["vamap"], vm.m)

    scores = {"ssim": float(ssim(res.original, res.counter))}
    if mask is not None:
        scores["localization"] = float(localization_score(vm, mask))
    rec = _open_runlog(args).append(
        kind, gcfg.to_dict(), input_ref, output_refs=out_files,
        output_sha256={"counterfactual": sha256_hex(cf_bytes),
                       "overlay": sha256_hex(ov_bytes)},
        scores=scores, checkpoint_id=res.checkpoint_id)
    scores_out = dict(scores, run_id=rec.run_id, seed=gcfg.seed,
                      checkpoint_id=res.checkpoint_id)
    with open(os.path.join(args.out, "scores.json"), "w") as f:
        json.dump(scores_out, f, indent=2, sort_keys=True)
    print(json.dumps(scores_out, sort_keys=True))
    return 0


def _check_gen_ranges(strength: float, guidance: float, steps: int) -> None:
    if not 0.0 <= strength <= 1.0:
        raise UsageError(f"strength must be in [0,1], got {strength}")
    if not 0.0 <= guidance <= 9.0:
        raise UsageError(f"guidance must be in [0,9], got {guidance}")
    if steps < 1:
        raise UsageError(f"steps must be >= 1, got {steps}")


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_suite
    from .phantoms import load_manifest

    _check_gen_ranges(args.strength, args.guidance, args.steps)
    if args.extractor == "codec-encoder":
        if not args.codec:
            raise UsageError("codec-encoder extractor needs --codec")
        from .codec import load_codec
        extractor = load_codec(args.codec)
    else:
        extractor = args.extractor
    ckpt = _load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.data)
    report = evaluate_suite(ckpt, manifest, args.out, strength=args.strength,
                            guidance=args.guidance, steps=args.steps,
                            seed=args.seed, extractor=extractor,
                            max_per_class=args.max_per_class)
    _open_runlog(args).append(
        "evaluate", {"strength": args.strength, "guidance": args.guidance,
                     "steps": args.steps, "seed": args.seed,
                     "extractor": args.extractor, "data": args.data},
        {"kind": "none"},
        output_refs={"report": os.path.join(args.out, "report.json")},
        checkpoint_id=report["config"]["checkpoint_id"])
    print(f"report -> {os.path.join(args.out, 'report.json')}")
    return 0


def cmd_sweep(args) -> int:
    from .metrics import evaluate_suite
    from .phantoms import load_manifest

    try:
        strengths = [float(s) for s in args.strengths.split(",") if s]
        guidances = [float(g) for g in args.guidances.split(",") if g]
    except ValueError as e:
        raise UsageError(f"bad sweep grid: {e}")
    if not strengths or not guidances:
        raise UsageError("sweep grid is empty")
    for s in strengths:
        for g in guidances:
            _check_gen_ranges(s, g, args.steps)

    ckpt = _load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.data)
    log = _open_runlog(args)
    cells = []
    # one record per grid cell, so the log cardinality equals the grid size
    for s in strengths:
        for g in guidances:
            cell_dir = os.path.join(args.out, f"s{s:g}_g{g:g}")
            report = evaluate_suite(ckpt, manifest, cell_dir, strength=s,
                                    guidance=g, steps=args.steps, seed=args.seed,
                                    max_per_class=args.max_per_class)
            cells.append({"strength": s, "guidance": g, "dir": cell_dir,
                          "classes": report["classes"]})
            log.append("sweep-cell",
                       {"strength": s, "guidance": g, "steps": args.steps,
                        "seed": args.seed, "data": args.data},
                       {"kind": "none"},
                       output_refs={"report": os.path.join(cell_dir, "report.json")},
                       checkpoint_id=ckpt.checkpoint_id)
            print(f"done s={s:g} g={g:g}", flush=True)
    summary = {"checkpoint_id": ckpt.checkpoint_id, "steps": args.steps,
               "seed": args.seed, "cells": cells}
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"sweep -> {os.path.join(args.out, 'sweep.json')}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .phantoms import load_manifest
    from .runlog import RunLog
    from .service import create_app

    ckpt = _load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.data)
    runlog = RunLog(args.runlog or os.path.join(args.data, "runs.jsonl"))
    app = create_app(ckpt, manifest, runlog)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    from .checkpoint import CheckpointFormatError
    from .codec import CodecDivergenceError
    from .phantoms import HeldOutClassError
    from .training import DivergenceError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "train-codec":
            return cmd_train_codec(args)
        if args.command in ("counterfactual", "induce"):
            return cmd_generate(args, args.command)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "serve":
            return cmd_serve(args)
        raise AssertionError(args.command)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, CodecDivergenceError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, CheckpointFormatError, HeldOutClassError,
            KeyError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
