"""Intra-skeleton momentum contrast: pretrain one encoder, from scratch.

The training loop is classic momentum contrast specialized to skeletons:

  1. every batch sample produces a query view and a key view (demo 02);
  2. the query encoder embeds queries; the momentum (key) encoder, an
     exponential moving average of the query weights, embeds keys;
  3. InfoNCE pulls each query toward its own key and pushes it away from a
     FIFO queue of past keys (the negatives);
  4. SGD updates the query encoder; the key encoder follows by EMA; the new
     keys are enqueued, evicting the oldest.

Everything below is deterministic in (seed, epoch, batch), so an interrupted
run resumed from a checkpoint replays the uninterrupted run bit for bit.
"""

import os
import tempfile

import numpy as np

from skelcon.augment import AugmentationSpec
from skelcon.contrast import (
    Schedule,
    TrainerConfig,
    load_trainer,
    make_trainer,
    pretrain,
    save_trainer,
    warmup_queues,
)
from skelcon.data import generate_synthetic
from skelcon.encoders import desk_config

dataset = generate_synthetic(3, 8, frames=24, joints=5, seed=7)
train_seqs = [s.sequence for s in dataset.samples]
print(f"pretraining on {len(train_seqs)} sequences, no labels used")

aug = AugmentationSpec(output_length=16, jitter_joints=2)
config = TrainerConfig(mode="intra", representations=("SEQ",),
                       tau=0.07, momentum=0.9, queue_size=64, lr=0.01)
encoders = {"SEQ": desk_config("SEQ", dataset.joint_count, hidden=8)}
trainer = make_trainer(config, encoders, aug, dataset.bones, seed=0)

# Fill the negative queue with key-encoder embeddings before the first step,
# so the very first InfoNCE term already sees a realistic negative set.
warmup_queues(trainer, train_seqs)
print(f"negative queue warmed: {len(trainer.queues['SEQ'])} entries")

records = pretrain(trainer, train_seqs, Schedule(epochs=20, batch_size=8))
head = np.mean([r["total"] for r in records[:3]])
tail = np.mean([r["total"] for r in records[-3:]])
print(f"steps: {trainer.step}, loss {head:.3f} -> {tail:.3f}")
print(f"positive-logit mean rose: "
      f"{records[0]['pos_logit_mean']:.2f} -> {records[-1]['pos_logit_mean']:.2f}")

# --- checkpoint, resume, replay ----------------------------------------------
with tempfile.TemporaryDirectory() as tmp:
    manifest = save_trainer(trainer, tmp)
    resumed = load_trainer(manifest)
    same = all(
        np.array_equal(resumed.pairs["SEQ"].query.params[name],
                       trainer.pairs["SEQ"].query.params[name])
        for name in trainer.pairs["SEQ"].query.params)
    print(f"\ncheckpoint bundle: {sorted(os.listdir(tmp))}")
    print(f"reloaded weights bit-identical: {same}")

    # Continue for 5 more epochs and compare against a single 25-epoch run.
    more = pretrain(resumed, train_seqs, Schedule(epochs=25, batch_size=8))

fresh = make_trainer(config, encoders, aug, dataset.bones, seed=0)
warmup_queues(fresh, train_seqs)
straight = pretrain(fresh, train_seqs, Schedule(epochs=25, batch_size=8))
print(f"resumed(20+5) == straight(25) loss log: {records + more == straight}")
