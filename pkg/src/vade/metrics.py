"""Structural similarity (single and multi-scale), Gaussian feature
statistics with Fréchet distance, and the evaluation harness that reports
them per disease class alongside labeled full-scale reference values.

SSIM follows the standard windowed form: Gaussian 11x11 sigma 1.5 local
statistics, K1=0.01 K2=0.03 on the data range, unit exponents, C3=C2/2.
The multi-scale variant applies luminance only at the coarsest level and
contrast/structure at every level, averaging maps per level and combining
with the standard five-level weights renormalized to the levels in use, so
a one-level pyramid reduces to plain SSIM bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .numerics import downsample2x, psd_sqrt

# standard five-level multi-scale weights, truncated + renormalized as needed
MS_WEIGHTS_5 = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
DESK_LEVELS = 3  # 64 -> 32 -> 16, all comfortably above the 11px window


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0


@dataclass(frozen=True)
class MsSsimParams:
    levels: int = DESK_LEVELS
    ssim: SsimParams = SsimParams()

    @property
    def weights(self) -> np.ndarray:
        if not 1 <= self.levels <= len(MS_WEIGHTS_5):
            raise ValueError(f"levels must be in 1..{len(MS_WEIGHTS_5)}")
        w = np.asarray(MS_WEIGHTS_5[: self.levels], dtype=np.float64)
        return w / w.sum()


def _gauss_window(p: SsimParams) -> np.ndarray:
    half = (p.window - 1) / 2.0
    t = np.arange(p.window) - half
    g = np.exp(-(t ** 2) / (2.0 * p.sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _local_stats(x: np.ndarray, y: np.ndarray, p: SsimParams):
    """Windowed means, variances, covariance over valid positions."""
    from numpy.lib.stride_tricks import sliding_window_view

    w = _gauss_window(p)
    k = p.window
    if min(x.shape) < k:
        raise ValueError(f"image {x.shape} smaller than {k}x{k} window")

    def filt(img):
        v = sliding_window_view(img, (k, k))
        return np.einsum("ijkl,kl->ij", v, w)

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    return mx, my, vx, vy, cxy


def _lcs_maps(x: np.ndarray, y: np.ndarray, p: SsimParams):
    """Per-window luminance, contrast, structure comparison maps."""
    mx, my, vx, vy, cxy = _local_stats(x, y, p)
    # windowed variance estimates can dip epsilon-negative; floor for sqrt
    sx = np.sqrt(np.maximum(vx, 0.0))
    sy = np.sqrt(np.maximum(vy, 0.0))
    lum = (2 * mx * my + p.c1) / (mx * mx + my * my + p.c1)
    con = (2 * sx * sy + p.c2) / (vx + vy + p.c2)
    struct = (cxy + p.c3) / (sx * sy + p.c3)
    return lum, con, struct


def ssim(x: np.ndarray, y: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Mean structural similarity over valid windows; symmetric in (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    lum, con, struct = _lcs_maps(x, y, p)
    return float(np.mean(lum * con * struct))


def ms_ssim(x: np.ndarray, y: np.ndarray, p: MsSsimParams = MsSsimParams()) -> float:
    """Multi-scale structural similarity over a mean-pool pyramid."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    k = p.ssim.window
    if min(x.shape) < k * 2 ** (p.levels - 1):
        raise ValueError(
            f"image {x.shape} too small for {p.levels} levels with a {k}px window")
    weights = p.weights
    result = 1.0
    for j in range(p.levels):
        lum, con, struct = _lcs_maps(x, y, p.ssim)
        if j == p.levels - 1:
            level = float(np.mean(lum * con * struct))
            if p.levels == 1:
                return level  # degenerate pyramid is exactly plain ssim
        else:
            level = float(np.mean(con * struct))
            x = downsample2x(x, mode="mean")
            y = downsample2x(y, mode="mean")
        # anti-correlated windows can push a level mean below zero, where a
        # fractional power is undefined; clamp and let the product collapse
        result *= max(level, 0.0) ** weights[j]
    return result


RAW_DOWNSAMPLE = "raw-downsample"
CODEC_ENCODER = "codec-encoder"
FEATURE_DIM = 64


def feature_embed(images: np.ndarray, extractor=RAW_DOWNSAMPLE) -> np.ndarray:
    """Embed [N,H,W] images as an [N,64] feature matrix.

    raw-downsample: area-mean pool each image to 8x8. codec-encoder: a
    trained latent codec instance; its latent map is area-pooled to 64 dims.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"expected [N,H,W], got {images.shape}")
    if extractor == RAW_DOWNSAMPLE:
        feats = []
        for img in images:
            while min(img.shape) > 8:
                img = downsample2x(img, mode="mean")
            feats.append(img.ravel())
        out = np.asarray(feats)
    elif hasattr(extractor, "encode"):
        if extractor.is_identity or not extractor.params:
            raise ValueError("codec-encoder embedding needs a trained learned codec")
        z = extractor.encode(images[:, None].astype(np.float32)).astype(np.float64)
        while z.shape[-1] * z.shape[-2] * z.shape[1] > FEATURE_DIM:
            z = np.stack([[downsample2x(ch, mode="mean") for ch in img] for img in z])
        out = z.reshape(len(images), -1)
    else:
        raise ValueError(f"unknown extractor {extractor!r}")
    if out.shape[1] != FEATURE_DIM:
        raise ValueError(f"extractor produced {out.shape[1]} dims, expected {FEATURE_DIM}")
    return out


@dataclass
class GaussianStats:
    mu: np.ndarray
    sigma: np.ndarray
    n: int
    ridged: bool = False


def gaussian_stats(features: np.ndarray, ridge: float = 1e-6) -> GaussianStats:
    """Sample mean and unbiased covariance; a diagonal ridge is added (and
    flagged) when n is too small for a full-rank estimate."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need an [n,d] matrix with n >= 2")
    n, d = features.shape
    mu = features.mean(axis=0)
    centered = features - mu
    sigma = centered.T @ centered / (n - 1)
    sigma = 0.5 * (sigma + sigma.T)
    ridged = n < d + 1
    if ridged:
        sigma = sigma + ridge * np.eye(d)
    return GaussianStats(mu=mu, sigma=sigma, n=n, ridged=ridged)


def frechet(a: GaussianStats, b: GaussianStats) -> float:
    """Fréchet distance between two Gaussians:
    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}),
    with the cross term computed from the symmetrized product."""
    if a.mu.shape != b.mu.shape:
        raise ValueError("dimension mismatch")
    diff = a.mu - b.mu
    ra = psd_sqrt(a.sigma)
    inner = ra @ b.sigma @ ra
    inner = 0.5 * (inner + inner.T)
    cross = psd_sqrt(inner)
    val = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(cross))
    if val < -1e-8:
        raise ValueError(f"Fréchet distance {val} below the numerical floor")
    return max(val, 0.0)


# published full-scale numbers, shown beside desk results strictly as labeled,
# non-reproducible reference columns (different corpus, features, and model)
FULL_SCALE_REFERENCE = {
    "table1_fid_vs_counterfactuals": {
        "lung_opacity": {"fid_diseased_generated": 27.8, "fid_diseased_real": 46.9,
                         "abs_difference": 19.1},
        "focal_pneumonia": {"fid_diseased_generated": 37.63, "fid_diseased_real": 97.6,
                            "abs_difference": 59.97},
        "diffuse_haze": {"fid_diseased_generated": 32.2, "fid_diseased_real": 38.2,
                         "abs_difference": 6.0},
    },
    "table2_fid_healthy_vs_generated": {
        "lung_opacity": 60.60, "focal_pneumonia": 110.72, "diffuse_haze": 45.11,
    },
    "table3_similarity": {
        "diffuse_haze": {"ms_ssim": 0.830, "ssim": 0.798},
        "lung_opacity": {"ms_ssim": 0.813, "ssim": 0.780},
        "focal_pneumonia": {"ms_ssim": 0.802, "ssim": 0.768},
    },
    "zero_shot_fid": {"real_vs_generated": 52.08, "healthy_vs_generated": 17.71},
    "note": "full_scale_reference: published numbers from a full-scale system "
            "(real radiography corpora, pretrained feature extractors); not "
            "reproducible at desk scale, shown for side-by-side display only",
}


def evaluate_suite(ckpt, manifest, out_dir: str, strength: float = 0.85,
                   guidance: float = 7.5, steps: int = 75, seed: int = 0,
                   extractor=RAW_DOWNSAMPLE, max_per_class: int = None,
                   progress=None) -> dict:
    """Run the full comparison over a manifest's diseased classes.

    Per class: counterfactuals for every diseased scan, FID of diseased vs
    generated-healthy and vs real-healthy plus their difference, FID of
    real-healthy vs generated-healthy, mean SSIM and MS-SSIM of each diseased
    scan against its counterfactual, and mean localization. Attribution maps
    are masked by the scan's region-of-interest (lung field) mask before
    localization scoring, the same masked-subtraction step the interactive
    endpoints apply; the unmasked score is reported alongside. Writes
    report.json and report.csv under out_dir and returns the report dict."""
    from .attribution import (GenerationConfig, counterfactual,
                              localization_score, masked_va)
    from .phantoms import (TRAIN_CLASSES, CLASS_NORMAL, load_entry_image,
                           load_entry_mask, load_entry_roi)

    healthy_entries = manifest.by_class(CLASS_NORMAL)
    if not healthy_entries:
        raise ValueError("manifest has no healthy class")
    disease_classes = [c for c in TRAIN_CLASSES if c != CLASS_NORMAL]
    missing = [c for c in disease_classes if not manifest.by_class(c)]
    if missing:
        raise ValueError(f"manifest missing classes: {missing}")

    healthy_imgs = np.stack([load_entry_image(manifest, e) for e in healthy_entries])
    feats_real_healthy = gaussian_stats(feature_embed(healthy_imgs, extractor))

    report = {
        "config": {"strength": strength, "guidance": guidance, "steps": steps,
                   "seed": seed, "checkpoint_id": ckpt.checkpoint_id,
                   "extractor": extractor if isinstance(extractor, str) else CODEC_ENCODER},
        "classes": {},
        "full_scale_reference": FULL_SCALE_REFERENCE,
    }
    rows = []
    for cname in disease_classes:
        entries = manifest.by_class(cname)
        if max_per_class:
            entries = entries[:max_per_class]
        imgs = np.stack([load_entry_image(manifest, e) for e in entries])
        masks = [load_entry_mask(manifest, e) for e in entries]
        rois = [load_entry_roi(manifest, e) for e in entries]
        counters, ssims, msssims, locs, locs_raw = [], [], [], [], []
        for i, (img, mask, roi) in enumerate(zip(imgs, masks, rois)):
            cfg = GenerationConfig(prompt="normal chest scan", strength=strength,
                                   guidance=guidance, steps=steps, seed=seed + i)
            res = counterfactual(ckpt, img, cfg)
            counters.append(res.counter)
            ssims.append(ssim(res.original, res.counter))
            msssims.append(ms_ssim(res.original, res.counter))
            locs.append(localization_score(masked_va(res.vamap, roi), mask))
            locs_raw.append(localization_score(res.vamap, mask))
            if progress:
                progress(cname, i + 1, len(entries))
        counters = np.stack(counters)
        feats_diseased = gaussian_stats(feature_embed(imgs, extractor))
        feats_generated = gaussian_stats(feature_embed(counters, extractor))
        fid_dg = frechet(feats_diseased, feats_generated)
        fid_dr = frechet(feats_diseased, feats_real_healthy)
        fid_rg = frechet(feats_real_healthy, feats_generated)
        entry = {
            "n": len(entries),
            "fid_diseased_generated": fid_dg,
            "fid_diseased_real_healthy": fid_dr,
            "abs_difference": abs(fid_dg - fid_dr),
            "fid_real_healthy_generated": fid_rg,
            "mean_ssim": float(np.mean(ssims)),
            "mean_ms_ssim": float(np.mean(msssims)),
            "mean_localization": float(np.mean(locs)),
            "mean_localization_unmasked": float(np.mean(locs_raw)),
            "ridged": feats_diseased.ridged or feats_generated.ridged
                      or feats_real_healthy.ridged,
        }
        report["classes"][cname] = entry
        rows.append({"class": cname, **{k: v for k, v in entry.items()}})

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    if rows:
        with open(os.path.join(out_dir, "report.csv"), "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return report
