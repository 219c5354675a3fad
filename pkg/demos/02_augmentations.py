"""The three skeleton augmentations and the query/key view pipeline.

Contrastive pretraining needs two *different but label-preserving* views of
every sequence.  Three transforms provide them:

  pose augmentation   - one random 3D shear applied to every frame/joint,
                        imitating a camera shift (global, rigid-ish);
  joint jitter        - a random linear map applied to a random subset of
                        joints, a local distortion no camera could produce;
  temporal crop-resize- a random sub-window linearly resampled to a fixed
                        length, changing speed and phase.

Every transform is driven by an explicit numpy Generator, so a draw is
reproducible from its seed alone.
"""

import numpy as np

from skelcon.augment import (
    AugmentationSpec,
    CropResizeParams,
    JitterParams,
    ShearParams,
    draw_view,
    joint_jitter,
    make_query_key_pair,
    pose_augment,
    temporal_crop_resize,
)
from skelcon.data import generate_synthetic

dataset = generate_synthetic(2, 2, frames=24, joints=7, seed=5)
seq = dataset.samples[0].sequence
print(f"input: {seq.coords.shape} (frames, actors, joints, xyz)")

# --- pose augmentation: one shear matrix for the whole sequence -------------
shear = ShearParams(r01=0.3, r10=-0.2, r21=0.1)
sheared = pose_augment(seq, shear)
print(f"\npose_augment with matrix:\n{shear.matrix()}")
print(f"identity shear is exact: "
      f"{np.array_equal(pose_augment(seq, ShearParams()).coords, seq.coords)}")
print(f"max coordinate change: {np.abs(sheared.coords - seq.coords).max():.4f}")

# --- joint jitter: only the chosen joints move -------------------------------
jitter = JitterParams(joint_subset=(1, 4), matrix=0.25 * np.ones((3, 3)))
jittered = joint_jitter(seq, jitter)
moved = [j for j in range(seq.joints)
         if not np.array_equal(jittered.coords[:, :, j], seq.coords[:, :, j])]
print(f"\njoint_jitter subset {jitter.joint_subset}: joints moved = {moved}")

# --- temporal crop-resize: window + linear interpolation --------------------
ramp = np.zeros((4, 2, 7, 3))
ramp[:, 0, 0, 0] = [0.0, 1.0, 2.0, 3.0]
resampled = temporal_crop_resize(
    seq.with_coords(ramp),
    CropResizeParams(length_ratio=1.0, start=0, output_length=7))
print(f"\n[0,1,2,3] resampled to 7 frames: {resampled.coords[:, 0, 0, 0]}")

half = temporal_crop_resize(
    seq, CropResizeParams(length_ratio=0.5, start=6, output_length=24))
print(f"12-frame window resampled back to {half.frames} frames "
      f"(motion plays at half speed)")

# --- randomized view drawing -------------------------------------------------
# In randomized mode each view flips a fair coin between pose and jitter and
# independently applies a temporal crop.  Queries and keys share the spec
# but never the draw.
spec = AugmentationSpec(output_length=16, jitter_joints=3)
rng = np.random.default_rng(0)
kinds = [draw_view(spec, seq.frames, seq.joints, rng).kind
         for _ in range(2000)]
print(f"\nrandomized spatial mode over 2000 draws: "
      f"pose={kinds.count('pose')}, jitter={kinds.count('jitter')}")

query, key = make_query_key_pair(seq, spec, np.random.default_rng(1))
print(f"query/key shapes: {query.coords.shape} / {key.coords.shape}")
print(f"query != key (independent draws): "
      f"{not np.array_equal(query.coords, key.coords)}")

replay_q, replay_k = make_query_key_pair(seq, spec, np.random.default_rng(1))
print(f"same rng seed replays the exact pair: "
      f"{np.array_equal(query.coords, replay_q.coords) and np.array_equal(key.coords, replay_k.coords)}")
