"""
Zero-shot prompting: conditions the model never saw
===================================================

Training never pairs the token "cardiomegaly" with an image: the class is
held out of every training corpus by policy. The token still guides, because
word embeddings are warm-started from co-occurrence statistics of a small
report grammar (where it sits next to "enlarged"/"heart") and unseen rows are
re-tied to trained rows after fine-tuning. Prompting it on a healthy scan
should add mass centrally, over the core; a sided prompt ("opacity in the
left lung") should put its mass on the named side.

Needs a trained checkpoint: set VADE_CHECKPOINT (or pass a path as argv[1]).
"""

import os
import sys
import numpy as np

from vade.checkpoint import Checkpoint
from vade.phantoms import (PhantomSpec, generate_sample, nominal_lung_mask,
                           central_region_mask)
from vade.attribution import GenerationConfig, induce, render_overlay
from vade.numerics import SeededRng

path = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("VADE_CHECKPOINT")
if not path:
    sys.exit("set VADE_CHECKPOINT or pass a checkpoint path")
ckpt = Checkpoint.load(path)

OUT = os.path.join(os.path.dirname(__file__), "out", "zero_shot")
os.makedirs(OUT, exist_ok=True)
spec = PhantomSpec()
central = central_region_mask(spec)
left = nominal_lung_mask(spec, "left")
right = nominal_lung_mask(spec, "right")

for i in range(3):
    healthy = generate_sample(spec, None, SeededRng(500 + i)).image

    r = induce(ckpt, healthy, GenerationConfig(
        prompt="cardiomegaly", strength=0.85, guidance=7.5, steps=75, seed=i))
    a = np.abs(r.vamap.m)
    frac = a[central].sum() / max(a.sum(), 1e-12)
    print(f"scan {i} cardiomegaly: {frac:.2f} of |M| in the central region")
    render_overlay(r.original, r.vamap, os.path.join(OUT, f"{i}_cardiomegaly.png"))

    for side, mask in (("left", left), ("right", right)):
        r = induce(ckpt, healthy, GenerationConfig(
            prompt=f"opacity in the {side} lung", strength=0.85, guidance=7.5,
            steps=75, seed=i))
        a = np.abs(r.vamap.m)
        frac = a[mask].sum() / max(a.sum(), 1e-12)
        print(f"scan {i} opacity {side:5s}: {frac:.2f} of |M| on the {side}")
        render_overlay(r.original, r.vamap, os.path.join(OUT, f"{i}_{side}.png"))

print("overlays under", OUT)
