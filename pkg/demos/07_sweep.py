"""The `skelcon` CLI: artifact directories, determinism, and sweeps.

Everything the library does is also reachable from one command-line tool:

    skelcon pretrain --out runs/pre --set trainer.epochs=40
    skelcon probe    --out runs/probe --checkpoint runs/pre/epoch0040.trainer.json
    skelcon sweep    --out runs/grid  --set sweep.key=augment.l_min ...

Every run writes its fully-resolved config (config.json) and a manifest
(run.json) next to its outputs, so any artifact directory can be replayed.
Exit codes are CI-friendly: 0 ok, 2 config error, 3 runtime failure, 4
metrics below a configured floor.

This demo drives the CLI in-process over a jitter-strength sweep, then reads
the machine-readable grid results back.
"""

import json
import os
import tempfile

from skelcon.cli import main

# A configuration small enough to sweep in seconds: 3 classes x 4 samples,
# 16-frame sequences, a tiny SEQ encoder, 2 pretraining epochs per cell.
BASE = [
    "dataset.num_classes=3", "dataset.samples_per_class=4",
    "dataset.frames=16", "dataset.joints=9",
    "augment.output_length=8", "augment.jitter_joints=4",
    "encoders.SEQ.hidden=4", "encoders.SEQ.projection_dim=8",
    "trainer.queue_size=8", "trainer.epochs=2", "trainer.batch_size=4",
]


def run(args, extra=()):
    argv = list(args)
    for item in BASE + list(extra):
        argv += ["--set", item]
    code = main(argv)
    print(f"  -> exit {code}")
    return code


with tempfile.TemporaryDirectory() as tmp:
    # --- one pretrain + probe, exercising checkpoint handoff ------------------
    pre = os.path.join(tmp, "pre")
    print("$ skelcon pretrain --out pre ... (tiny overrides)")
    run(["pretrain", "--out", pre])
    manifest = os.path.join(pre, "epoch0002.trainer.json")

    print("\n$ skelcon probe --out probe --checkpoint pre/epoch0002.trainer.json")
    run(["probe", "--out", os.path.join(tmp, "probe"), "--checkpoint", manifest])

    # --- a metrics floor turns the probe into a CI gate ------------------------
    print("\n$ skelcon probe ... --set downstream.min_accuracy=0.95")
    run(["probe", "--out", os.path.join(tmp, "gated"), "--checkpoint", manifest],
        ["downstream.min_accuracy=0.95"])

    # --- sweep over the jitter-subset size -------------------------------------
    grid = os.path.join(tmp, "grid")
    print("\n$ skelcon sweep --out grid --set sweep.key=augment.jitter_joints "
          "--set sweep.values=[2,4,6,8]")
    run(["sweep", "--out", grid],
        ["sweep.key=augment.jitter_joints", "sweep.values=[2,4,6,8]"])

    print("\ngrid results (grid/sweep.jsonl):")
    print(f"  {'cell':<30} {'status':<8} {'probe acc':>9}")
    for line in open(os.path.join(grid, "sweep.jsonl")):
        record = json.loads(line)
        cell = json.dumps(record["cell"])
        print(f"  {cell:<30} {record['status']:<8} "
              f"{record.get('accuracy', float('nan')):>9.3f}")

    # Each cell keeps its own replayable artifact directory.
    cell0 = os.path.join(grid, "cells", "cell00")
    print(f"\ncell00 artifacts: {sorted(os.listdir(cell0))}")
