"""
Healthy counterfactuals and attribution maps
============================================

The core loop: take a diseased scan, push it part-way into the noise
(strength 0.85), denoise it back under the prompt "normal chest scan" with
classifier-free guidance 7.5, and subtract. The signed map M = original -
counterfactual is the visual attribution; masking it to the lung field and
comparing against the lesion mask gives a localization score.

Needs a trained checkpoint: set VADE_CHECKPOINT (or pass a path as argv[1]).
Train one with:  vade gen-data --out data --seed 11
                 vade train --data data --out model.ckpt --seed 5
"""

import os
import sys

from vade.checkpoint import Checkpoint
from vade.phantoms import (PhantomSpec, generate_dataset, load_entry_image,
                           load_entry_mask, load_entry_roi)
from vade.attribution import (GenerationConfig, counterfactual, masked_va,
                              localization_score, render_overlay)
from vade.metrics import ssim
from vade import imgio

path = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("VADE_CHECKPOINT")
if not path:
    sys.exit("set VADE_CHECKPOINT or pass a checkpoint path")
ckpt = Checkpoint.load(path)

OUT = os.path.join(os.path.dirname(__file__), "out", "counterfactual")
man = generate_dataset(PhantomSpec(), {"lung_opacity": 3}, os.path.join(OUT, "data"),
                       seed=901)

for i, entry in enumerate(man.entries):
    img = load_entry_image(man, entry)
    res = counterfactual(ckpt, img, GenerationConfig(
        prompt="normal chest scan", strength=0.85, guidance=7.5, steps=75, seed=i))
    vm = masked_va(res.vamap, load_entry_roi(man, entry))
    loc = localization_score(vm, load_entry_mask(man, entry))
    s = ssim(res.original, res.counter)
    print(f"{entry.label_text!r:44s} localization {loc:.3f}  ssim {s:.3f}")

    imgio.write_gray8(os.path.join(OUT, f"{i}_original.png"), res.original)
    imgio.write_gray8(os.path.join(OUT, f"{i}_counterfactual.png"), res.counter)
    render_overlay(res.original, vm, os.path.join(OUT, f"{i}_overlay.png"))

print("triptychs under", OUT)
