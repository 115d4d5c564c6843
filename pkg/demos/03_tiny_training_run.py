"""
A miniature staged training run
===============================

Full desk-scale training takes ~25 CPU minutes; this demo shrinks the network
and the step counts so the whole staged loop (healthy stage, then one stage
per pathology with a healthy prior batch) finishes in under a minute and the
loss trace is still visibly downhill.
"""

import os
import numpy as np

from vade.phantoms import PhantomSpec, generate_dataset
from vade.training import TrainConfig, train
from vade.denoiser import DenoiserConfig
from vade.schedule import make_schedule, VE

OUT = os.path.join(os.path.dirname(__file__), "out", "tiny_train")

mix = {"normal": 24, "lung_opacity": 8, "diffuse_haze": 8, "focal_pneumonia": 8}
man = generate_dataset(PhantomSpec(), mix, os.path.join(OUT, "data"), seed=3)

cfg = TrainConfig(desk_factor=0.05, seed=1)
net = DenoiserConfig(widths=(6, 8, 12), cond_dim=12, time_dim=12)
ckpt = train(man, cfg, denoiser_config=net, sched=make_schedule(VE, T=100),
             progress=lambda name, step, loss: print(f"  {name} step {step} loss {loss:.3f}"))

tr = ckpt.loss_trace
print(f"steps: {len(tr)}, stages: {[s[0] for s in ckpt.stages]}")
print(f"loss first 10 mean {np.mean(tr[:10]):.4f} -> last 10 mean {np.mean(tr[-10:]):.4f}")

# the checkpoint round-trips byte-identically
p = os.path.join(OUT, "tiny.ckpt")
ckpt.save(p)
from vade.checkpoint import Checkpoint
back = Checkpoint.load(p)
same = all(np.array_equal(ckpt.model_params[k], back.model_params[k])
           for k in ckpt.model_params)
print("checkpoint round-trip exact:", same, "| id:", back.checkpoint_id[:12])
