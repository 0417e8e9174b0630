"""The full command-line workflow, end to end.

Each step calls the installed CLI in-process with the exact argv a shell
invocation would pass, so the printed commands can be pasted into a
terminal as-is. Artifacts land in a temp directory: a dataset file, then
per-run config.resolved, metrics.ndjson, best.ckpt, and summary.txt.
"""

import json
import tempfile
from pathlib import Path

from foalnet.cli import main

tmp = Path(tempfile.mkdtemp(prefix="foalnet_demo_"))
data = tmp / "emotions.bin"
run_dir = tmp / "run"
xval_dir = tmp / "xval"


def sh(*argv: str) -> None:
    print(f"\n$ foalnet {' '.join(argv)}")
    rc = main(list(argv))
    assert rc == 0, f"exit code {rc}"


# 1. synthesize a dataset (complementary scheme: fusion required)
sh("gen-data", "--out", str(data), "--groups", "2", "--per-class", "40",
   "--seed", "5")

# 2. train one split from a flat key=value config
cfg = tmp / "train.cfg"
cfg.write_text(f"""\
# held-out group 1, everything else trains
dataset = {data}
out_dir = {run_dir}
val_group = 1
epochs = 4
lr = 0.003
batch_size = 64
heads = 4
fusion_layers = 2
proj_hidden = 64
proj_dim = 32
seed = 3
""")
sh("train", "--config", str(cfg))

print("\nartifacts:", sorted(p.name for p in run_dir.iterdir()))
last = json.loads((run_dir / "metrics.ndjson").read_text().splitlines()[-1])
print("last epoch record:", last)

# 3. re-evaluate the checkpoint; reproduces the logged validation numbers
sh("eval", "--checkpoint", str(run_dir / "best.ckpt"),
   "--dataset", str(data), "--group", "1")

# 4. leave-one-group-out cross-validation with the ablation grid
xcfg = tmp / "xval.cfg"
xcfg.write_text(f"dataset = {data}\nout_dir = {xval_dir}\n"
                "epochs = 3\nlr = 0.003\nbatch_size = 64\nheads = 4\n"
                "fusion_layers = 2\nproj_hidden = 64\nproj_dim = 32\nseed = 1\n")
sh("xval", "--config", str(xcfg), "--ablation")

# 5. the gradient self-check the test suite also runs
sh("gradcheck")

print(f"\nall artifacts under {tmp}")
