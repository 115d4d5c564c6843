"""
Run records and bit-exact replay
================================

Every generation appends a JSONL record: config, input reference, output
hashes. A record plus the checkpoint (plus the dataset, for scan inputs) is
enough to reproduce the outputs bit-exactly, months later, on another
machine. This demo runs one counterfactual, logs it, then replays from the
log alone and compares hashes.

Needs a trained checkpoint: set VADE_CHECKPOINT (or pass a path as argv[1]).
"""

import os
import sys

from vade.checkpoint import Checkpoint
from vade.phantoms import PhantomSpec, generate_dataset, load_entry_image, load_entry_roi
from vade.attribution import GenerationConfig, counterfactual, artifact_bytes
from vade.runlog import RunLog, replay, sha256_hex, scan_id_of

path = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("VADE_CHECKPOINT")
if not path:
    sys.exit("set VADE_CHECKPOINT or pass a checkpoint path")
ckpt = Checkpoint.load(path)

OUT = os.path.join(os.path.dirname(__file__), "out", "replay")
man = generate_dataset(PhantomSpec(), {"diffuse_haze": 1}, os.path.join(OUT, "data"),
                       seed=77)
entry = man.entries[0]

cfg = GenerationConfig(prompt="normal chest scan", strength=0.85, guidance=7.5,
                       steps=30, seed=4)
res = counterfactual(ckpt, load_entry_image(man, entry), cfg)
_, cf_png, ov_png = artifact_bytes(res, load_entry_roi(man, entry))

log = RunLog(os.path.join(OUT, "runs.jsonl"))
rec = log.append("counterfactual", cfg.to_dict(),
                 {"kind": "scan", "id": scan_id_of(entry)},
                 output_sha256={"counterfactual": sha256_hex(cf_png),
                                "overlay": sha256_hex(ov_png)},
                 checkpoint_id=res.checkpoint_id)
print("logged run", rec.run_id, "->", log.path)

# read the record back off disk and replay it
rec2 = RunLog(log.path).get(rec.run_id)
out = replay(rec2, ckpt, man)
print("replay hashes match:", out["match"])
for name, h in out["hashes"].items():
    print(f"  {name}: {h[:16]}...")
