"""
Rendering a phantom corpus
==========================

Every training image is procedural: two lung ellipses and a mediastinal core
on a value-noise texture, plus an optional lesion. Each sample also carries a
report-style text label, a lesion mask, and a region-of-interest mask (the
lung field) used later to mask attribution maps.
"""

import os
import numpy as np

from vade.phantoms import (PhantomSpec, generate_dataset, load_manifest,
                           load_entry_image, load_entry_mask, TRAIN_CLASSES)
from vade import imgio

OUT = os.path.join(os.path.dirname(__file__), "out", "corpus")

# a tiny corpus: 8 healthy plus 4 of each trained pathology
mix = {"normal": 8, "lung_opacity": 4, "diffuse_haze": 4, "focal_pneumonia": 4}
man = generate_dataset(PhantomSpec(), mix, OUT, seed=42)
print("class counts:", man.class_counts)

# labels are auto-generated from the drawn geometry; sided lesions say so
for cname in TRAIN_CLASSES:
    e = man.by_class(cname)[0]
    print(f"{cname:16s} -> {e.label_text!r}")

# same spec + seed renders the identical corpus (files are 16-bit PNGs)
man2 = generate_dataset(PhantomSpec(), mix, OUT + "_again", seed=42)
a = load_entry_image(man, man.entries[0])
b = load_entry_image(man2, man2.entries[0])
print("deterministic re-render:", bool(np.array_equal(a, b)))

# contact sheet: one row per class, image next to its lesion mask
rows = []
for cname in TRAIN_CLASSES:
    e = man.by_class(cname)[0]
    img = load_entry_image(man, e)
    msk = load_entry_mask(man, e).astype(np.float64)
    rows.append(np.concatenate([img, msk], axis=1))
sheet = np.concatenate(rows, axis=0)
imgio.write_gray8(os.path.join(OUT, "contact_sheet.png"), sheet)
print("wrote", os.path.join(OUT, "contact_sheet.png"))
