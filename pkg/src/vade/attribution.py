"""Counterfactual generation and subtractive visual attribution.

The pipeline edits an input scan toward a prompt (healthy direction for
counterfactuals, disease direction for induction) and forms the signed map
M = input - output. Bookkeeping is exact: images are quantized to float32 on
entry (the engine's working precision), the unclamped float32 output is
retained, and the subtraction runs in float64 where the difference of two
noise-floor-flushed float32 values is exactly representable. The identity
output + M == input therefore holds bitwise and is asserted on every run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .imgio import gray16_bytes, rgb8_bytes, write_rgb8
from .sampling import (
    DEFAULT_GUIDANCE,
    DEFAULT_STEPS,
    DEFAULT_STRENGTH,
    GUIDANCE_RANGE,
    STRENGTH_RANGE,
    sample_from_guide,
)

F32 = np.float32

# |M| at or above this renders at full overlay opacity
OVERLAY_SATURATION = 0.25


@dataclass(frozen=True)
class GenerationConfig:
    prompt: str = "normal chest scan"
    strength: float = DEFAULT_STRENGTH
    guidance: float = DEFAULT_GUIDANCE
    steps: int = DEFAULT_STEPS
    seed: int = 0
    control: np.ndarray = None

    def __post_init__(self):
        if not STRENGTH_RANGE[0] <= self.strength <= STRENGTH_RANGE[1]:
            raise ValueError(f"strength {self.strength} outside {STRENGTH_RANGE}")
        if not GUIDANCE_RANGE[0] <= self.guidance <= GUIDANCE_RANGE[1]:
            raise ValueError(f"guidance {self.guidance} outside {GUIDANCE_RANGE}")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "strength": self.strength,
            "guidance": self.guidance,
            "steps": self.steps,
            "seed": self.seed,
            "control": None if self.control is None else np.asarray(self.control).tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "GenerationConfig":
        control = d.get("control")
        return GenerationConfig(
            prompt=d["prompt"], strength=d["strength"], guidance=d["guidance"],
            steps=d["steps"], seed=d["seed"],
            control=None if control is None else np.asarray(control),
        )


@dataclass
class VAMap:
    """Signed attribution map M = original - counterfactual (float64, exact)."""
    m: np.ndarray
    source: str = ""
    config: GenerationConfig = None
    mask: np.ndarray = None  # set by masked_va

    @property
    def abs_mass(self) -> float:
        return float(np.abs(self.m).sum())

    @property
    def mean_abs(self) -> float:
        return float(np.abs(self.m).mean())


@dataclass
class AttributionResult:
    original: np.ndarray       # float32-quantized input, as float64
    counter: np.ndarray        # clamped counterfactual, float64 in [0,1]
    counter_raw: np.ndarray    # unclamped float32 output
    vamap: VAMap
    config: GenerationConfig
    checkpoint_id: str


def va_map(original: np.ndarray, counter: np.ndarray, source: str = "",
           config: GenerationConfig = None) -> VAMap:
    """Exact signed subtraction original - counter as a float64 map."""
    original = np.asarray(original)
    counter = np.asarray(counter)
    if original.shape != counter.shape:
        raise ValueError(f"shape mismatch {original.shape} vs {counter.shape}")
    m = original.astype(np.float64) - counter.astype(np.float64)
    return VAMap(m=m, source=source, config=config)


def masked_va(vm: VAMap, mask: np.ndarray) -> VAMap:
    """Zero the map outside a binary mask; the mask is recorded on the copy."""
    mask = np.asarray(mask)
    if mask.shape != vm.m.shape:
        raise ValueError(f"mask shape {mask.shape} vs map {vm.m.shape}")
    binary = (mask != 0)
    return VAMap(m=vm.m * binary, source=vm.source, config=vm.config,
                 mask=binary.astype(np.uint8))


def dilate_mask(mask: np.ndarray, px: int) -> np.ndarray:
    """Binary dilation by a Euclidean disk of radius px (pure shifts)."""
    mask = np.asarray(mask) != 0
    if px <= 0:
        return mask
    out = np.zeros_like(mask)
    h, w = mask.shape
    for dy in range(-px, px + 1):
        for dx in range(-px, px + 1):
            if dy * dy + dx * dx > px * px:
                continue
            out[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)] |= \
                mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    return out


def localization_score(vm: VAMap, lesion_mask: np.ndarray, dilation_px: int = 2) -> float:
    """Fraction of total |M| mass inside the dilated lesion mask.

    Returns 1.0 when the map carries no mass at all (a perfect no-op edit
    localizes trivially)."""
    total = float(np.abs(vm.m).sum())
    if total == 0.0:
        return 1.0
    region = dilate_mask(lesion_mask, dilation_px)
    inside = float(np.abs(vm.m[region]).sum())
    return inside / total


def _attribute(ckpt: Checkpoint, image: np.ndarray, cfg: GenerationConfig,
               source: str = "") -> AttributionResult:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected a single [H,W] image, got {image.shape}")
    orig_q = image.astype(F32).astype(np.float64)
    raw = sample_from_guide(
        ckpt, image, prompt=cfg.prompt, strength=cfg.strength, g=cfg.guidance,
        steps=cfg.steps, seed=cfg.seed, control=cfg.control, clamp=False)
    vm = va_map(orig_q, raw, source=source, config=cfg)
    # bitwise decomposition check; guards any precision regression upstream
    if not np.array_equal(raw.astype(np.float64) + vm.m, orig_q):
        raise AssertionError("attribution decomposition identity violated")
    counter = np.clip(raw.astype(np.float64), 0.0, 1.0)
    return AttributionResult(original=orig_q, counter=counter, counter_raw=raw,
                             vamap=vm, config=cfg, checkpoint_id=ckpt.checkpoint_id)


def counterfactual(ckpt: Checkpoint, image: np.ndarray,
                   cfg: GenerationConfig = None) -> AttributionResult:
    """Edit a scan toward its healthy counterpart and attribute the change."""
    cfg = cfg or GenerationConfig()
    return _attribute(ckpt, image, cfg, source="counterfactual")


def induce(ckpt: Checkpoint, healthy: np.ndarray,
           cfg: GenerationConfig) -> AttributionResult:
    """Edit a healthy scan toward a disease prompt; same pipeline, same
    bookkeeping, attribution shows what the model added."""
    return _attribute(ckpt, healthy, cfg, source="induce")


def overlay_rgb(original: np.ndarray, vm: VAMap) -> np.ndarray:
    """Grayscale base with the signed map blended in: positive mass red,
    negative blue, opacity ramping linearly to 1 at |M| >= OVERLAY_SATURATION."""
    base = np.clip(np.asarray(original, dtype=np.float64), 0.0, 1.0)
    if base.shape != vm.m.shape:
        raise ValueError(f"shape mismatch {base.shape} vs {vm.m.shape}")
    alpha = np.clip(np.abs(vm.m) / OVERLAY_SATURATION, 0.0, 1.0)
    color = np.zeros(base.shape + (3,))
    color[..., 0] = vm.m > 0
    color[..., 2] = vm.m < 0
    rgb = (1.0 - alpha[..., None]) * base[..., None] + alpha[..., None] * color
    return rgb


def render_overlay(original: np.ndarray, vm: VAMap, out_path: str) -> None:
    """Write the overlay composite as an 8-bit RGB PNG."""
    rgb = overlay_rgb(original, vm)
    write_rgb8(out_path, np.round(rgb * 255.0).astype(np.uint8))


def artifact_bytes(res: AttributionResult, roi: np.ndarray = None):
    """Canonical PNG encodings of a result's shareable artifacts.

    Every surface that persists or hashes outputs (CLI, service, replay)
    must call this so a run record replays bit-exactly. When a
    region-of-interest mask is available the map is masked before rendering,
    the same subtraction-masking step the evaluation applies; the
    counterfactual image itself is unaffected. Returns
    (map_used, counterfactual_png, overlay_png)."""
    vm = res.vamap if roi is None else masked_va(res.vamap, roi)
    rgb = np.round(overlay_rgb(res.original, vm) * 255.0).astype(np.uint8)
    return vm, gray16_bytes(res.counter), rgb8_bytes(rgb)
