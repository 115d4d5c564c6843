"""
SSIM, MS-SSIM, and Frechet distance from scratch
================================================

The evaluation metrics are implemented directly on numpy (gaussian-window
SSIM, dyadic MS-SSIM, and the Frechet distance between gaussian feature
statistics via a Jacobi eigendecomposition matrix square root). A few
closed-form identities make good spot checks.
"""

import numpy as np

from vade.metrics import (ssim, ms_ssim, MsSsimParams, frechet, gaussian_stats,
                          GaussianStats, feature_embed, RAW_DOWNSAMPLE)
from vade.phantoms import PhantomSpec, generate_sample, draw_kind
from vade.numerics import SeededRng

rng = SeededRng(0)
spec = PhantomSpec()
healthy = np.stack([generate_sample(spec, None, rng.split(i)).image
                    for i in range(24)])
hazy = np.stack([generate_sample(spec, draw_kind("diffuse_haze", spec, rng.split(100 + i)),
                                 rng.split(200 + i)).image for i in range(24)])

x = healthy[0]
print(f"ssim(x, x)         = {ssim(x, x):.12f}   (exactly 1)")
print(f"ssim(x, blurred)   = {ssim(x, np.clip(x + 0.05, 0, 1)):.4f}")
print(f"ms_ssim, 1 level   = {ms_ssim(x, hazy[0], MsSsimParams(levels=1)):.6f} "
      f"== ssim {ssim(x, hazy[0]):.6f}")

# 1-d Frechet distance has the closed form (mu1-mu2)^2 + (s1-s2)^2
a = GaussianStats(mu=np.array([0.3]), sigma=np.array([[0.04]]), n=100)
b = GaussianStats(mu=np.array([0.5]), sigma=np.array([[0.09]]), n=100)
closed = (0.3 - 0.5) ** 2 + (0.2 - 0.3) ** 2
print(f"frechet 1-d        = {frechet(a, b):.12f}   closed form {closed:.12f}")

# set-level distance: healthy vs healthy is ~0, healthy vs hazy is not
fh = feature_embed(healthy[:, None], RAW_DOWNSAMPLE)
fz = feature_embed(hazy[:, None], RAW_DOWNSAMPLE)
sh, sz = gaussian_stats(fh), gaussian_stats(fz)
print(f"frechet(healthy, healthy) = {frechet(sh, sh):.2e}")
print(f"frechet(healthy, hazy)    = {frechet(sh, sz):.4f}")
