"""
Noise schedules and the forward process
=======================================

Two schedule families share one interface: variance-exploding (alpha = 1,
geometric sigma grid) and variance-preserving (alpha^2 + sigma^2 = 1). The
forward marginal x_t = alpha_t x_0 + sigma_t z is all a sampler ever needs.
"""

import os
import numpy as np

from vade.schedule import make_schedule, forward_marginal, VE, VP
from vade.phantoms import PhantomSpec, generate_sample, draw_kind
from vade.numerics import SeededRng
from vade import imgio

ve = make_schedule(VE, T=1000)
vp = make_schedule(VP, T=1000)

print("VE: alpha is identically 1:", bool(np.all(ve.alpha[1:] == 1.0)))
print(f"VE sigma grid: {ve.sigma[1]:.4f} .. {ve.sigma[-1]:.4f} (geometric)")
worst = np.max(np.abs(vp.alpha[1:] ** 2 + vp.sigma[1:] ** 2 - 1.0))
print(f"VP identity |alpha^2+sigma^2-1| worst case: {worst:.2e}")

# where a guided edit enters: strength s maps to index round(s*T)
for s in (0.5, 0.85, 1.0):
    i = round(s * ve.T)
    print(f"strength {s:.2f} -> t0={i}, VE sigma={ve.sigma[i]:.3f}, "
          f"VP alpha={vp.alpha[i]:.3f}")

# noising strip: one phantom pushed to increasing t under the VE schedule
rng = SeededRng(7)
spec = PhantomSpec()
sample = generate_sample(spec, draw_kind("lung_opacity", spec, rng.split(0)), rng)
x0 = sample.image
z = SeededRng(8).normal(x0.shape)
cells = [x0]
for s in (0.25, 0.5, 0.75, 1.0):
    xt = forward_marginal(x0, round(s * ve.T), z, ve)
    cells.append(np.clip(xt, 0, 1))
strip = np.concatenate(cells, axis=1)
out = os.path.join(os.path.dirname(__file__), "out", "noising_strip.png")
imgio.write_gray8(out, strip)
print("wrote", out)
