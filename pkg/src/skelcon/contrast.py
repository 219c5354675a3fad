"""Momentum-contrast training engine.

Implements the InfoNCE loss with a dynamic FIFO queue of negatives, momentum
(EMA) key encoders, and the two training regimes:

* intra: a single representation contrasts its query embedding against the
  momentum-encoded key of the same sample and the queue of past keys.
* inter: two (or three) representations share ONE augmented query/key pair
  per sample; each representation's query is contrasted against the *other*
  representation's key and queue, and the per-representation terms are
  summed.

All randomness is derived statelessly from ``(seed, tag, epoch, step)`` so a
run resumed from a checkpoint replays the exact step stream of an
uninterrupted run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .augment import AugmentationSpec, make_query_key_pair
from .data import SkeletonSequence
from .encoders import (EncoderConfig, EncoderState, embed_forward,
                       embed_backward, init_encoder, save_checkpoint,
                       load_checkpoint)
from .errors import ContractError
from .represent import (REPRESENTATIONS, batch_views, bone_adjacency,
                        normalized_adjacency)

REP_IDS = {rep: i for i, rep in enumerate(REPRESENTATIONS)}

# rng stream tags (second entry of the default_rng seed tuple)
_TAG_SHUFFLE, _TAG_AUGMENT, _TAG_WARMUP = 1, 2, 4


# ---------------------------------------------------------------------------
# negative queue
# ---------------------------------------------------------------------------

class NegativeQueue:
    """Fixed-capacity FIFO of detached unit-norm key embeddings."""

    def __init__(self, capacity: int, dim: int, dtype=np.float32):
        if capacity < 1 or dim < 1:
            raise ValueError("capacity and dim must be positive")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.buffer = np.zeros((capacity, dim), dtype=dtype)
        self.size = 0
        self.head = 0  # next write slot

    def __len__(self) -> int:
        return self.size

    def push(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(np.asarray(batch))
        if batch.shape[0] > self.capacity:
            raise ValueError(
                f"push of {batch.shape[0]} embeddings exceeds capacity {self.capacity}")
        if batch.shape[1] != self.dim:
            raise ValueError(f"embedding dim {batch.shape[1]} != queue dim {self.dim}")
        norms = np.linalg.norm(batch, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            raise ContractError("queue only stores unit-norm embeddings")
        for row in batch.astype(self.buffer.dtype, copy=True):
            self.buffer[self.head] = row
            self.head = (self.head + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def negatives(self) -> np.ndarray:
        """Contents in oldest-to-newest order (detached copies)."""
        if self.size < self.capacity:
            return self.buffer[:self.size].copy()
        return np.concatenate([self.buffer[self.head:], self.buffer[:self.head]])

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"buffer": self.buffer.copy(),
                "size": np.array(self.size), "head": np.array(self.head)}

    @classmethod
    def from_state(cls, arrays: dict[str, np.ndarray]) -> "NegativeQueue":
        buf = arrays["buffer"]
        q = cls(buf.shape[0], buf.shape[1], dtype=buf.dtype)
        q.buffer = buf.copy()
        q.size = int(arrays["size"])
        q.head = int(arrays["head"])
        return q


# ---------------------------------------------------------------------------
# InfoNCE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InfoNCEResult:
    loss: float
    grad_q: np.ndarray          # dL/dz_q, float64, same shape as z_q
    pos_logit_mean: float
    neg_logit_mean: float


def info_nce(z_q: np.ndarray, z_k: np.ndarray, negatives,
             tau: float = 0.07) -> InfoNCEResult:
    """Noise-contrastive loss of queries against one positive key each plus a
    shared pool of queue negatives.

    loss = mean_i -log[ exp(q_i.k_i/t) / (exp(q_i.k_i/t) + sum_n exp(q_i.n/t)) ]

    Computed in 64-bit with per-row max subtraction; returns the exact
    analytic gradient with respect to ``z_q``.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if isinstance(negatives, NegativeQueue):
        negatives = negatives.negatives()
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if negatives.shape[0] == 0:
        raise ValueError("negative queue is empty")
    single = np.asarray(z_q).ndim == 1
    q = np.atleast_2d(np.asarray(z_q, dtype=np.float64))
    k = np.atleast_2d(np.asarray(z_k, dtype=np.float64))
    if q.shape != k.shape:
        raise ValueError(f"query/key shape mismatch: {q.shape} vs {k.shape}")
    for name, arr in (("z_q", q), ("z_k", k), ("negatives", negatives)):
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            raise ContractError(f"{name} must be unit-norm (worst |norm-1| = "
                                f"{float(np.max(np.abs(norms - 1.0))):.3e})")

    l_pos = np.sum(q * k, axis=1)                  # (B,)   cosine sims
    l_neg = q @ negatives.T                        # (B, K)
    logits = np.concatenate([l_pos[:, None], l_neg], axis=1) / tau
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    denom = exp.sum(axis=1, keepdims=True)
    log_p_pos = shift[:, 0] - np.log(denom[:, 0])
    loss = float(-log_p_pos.mean())

    b = q.shape[0]
    p = exp / denom                                # softmax rows
    dlogits = p.copy()
    dlogits[:, 0] -= 1.0
    dlogits /= b
    grad_q = (dlogits[:, :1] * k + dlogits[:, 1:] @ negatives) / tau
    if single:
        grad_q = grad_q[0]
    return InfoNCEResult(loss=loss, grad_q=grad_q,
                         pos_logit_mean=float(l_pos.mean() / tau),
                         neg_logit_mean=float(l_neg.mean() / tau))


# ---------------------------------------------------------------------------
# momentum pair
# ---------------------------------------------------------------------------

@dataclass
class MomentumPair:
    query: EncoderState
    key: EncoderState
    momentum: float

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"momentum must be in [0,1], got {self.momentum}")


def make_pair(config: EncoderConfig, seed: int, momentum: float = 0.999,
              dtype=np.float32) -> MomentumPair:
    query = init_encoder(config, seed, dtype=dtype)
    return MomentumPair(query=query, key=query.copy(), momentum=momentum)


def momentum_update(pair: MomentumPair) -> None:
    """theta_k <- m*theta_k + (1-m)*theta_q, elementwise and exactly."""
    m = pair.momentum
    for name, q in pair.query.params.items():
        k = pair.key.params[name]
        if k.shape != q.shape:
            raise ContractError(f"parameter {name}: key shape {k.shape} != query {q.shape}")
        pair.key.params[name] = m * k + (1.0 - m) * q
    pair.key.step = pair.query.step


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainerConfig:
    mode: str                              # intra | inter | inter3
    representations: tuple[str, ...]
    tau: float = 0.07
    momentum: float = 0.999
    queue_size: int = 16384
    lr: float = 0.01
    weight_decay: float = 1e-4
    opt_momentum: float = 0.9
    cross_terms: str = "full"              # inter3 only: full | cycle

    def __post_init__(self):
        expected = {"intra": 1, "inter": 2, "inter3": 3}
        if self.mode not in expected:
            raise ValueError(f"mode must be one of {sorted(expected)}, got {self.mode!r}")
        reps = tuple(self.representations)
        if len(reps) != expected[self.mode] or len(set(reps)) != len(reps):
            raise ValueError(f"mode {self.mode!r} needs {expected[self.mode]} "
                             f"distinct representations, got {reps}")
        for rep in reps:
            if rep not in REPRESENTATIONS:
                raise ValueError(f"unknown representation {rep!r}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must be in [0,1]")
        if self.queue_size < 1:
            raise ValueError("queue_size must be positive")
        if self.cross_terms not in ("full", "cycle"):
            raise ValueError("cross_terms must be 'full' or 'cycle'")


@dataclass
class TrainerState:
    config: TrainerConfig
    aug: AugmentationSpec
    pairs: dict[str, MomentumPair]
    queues: dict[str, NegativeQueue]
    bones: tuple[tuple[int, int], ...]
    a_hat: np.ndarray | None
    velocities: dict[str, dict[str, np.ndarray]]
    seed: int
    epoch: int = 0
    step: int = 0

    @property
    def representations(self) -> tuple[str, ...]:
        return self.config.representations


@dataclass(frozen=True)
class LossReport:
    total: float
    terms: dict[str, float]            # keyed by the query's representation
    pos_logit_mean: float
    neg_logit_mean: float
    step: int

    def record(self, epoch: int) -> dict:
        return {"step": self.step, "epoch": epoch, "total": self.total,
                "per_rep_terms": dict(self.terms),
                "pos_logit_mean": self.pos_logit_mean,
                "neg_logit_mean": self.neg_logit_mean}


def make_trainer(config: TrainerConfig, encoder_configs: dict[str, EncoderConfig],
                 aug: AugmentationSpec, bones, seed: int,
                 dtype=np.float32) -> TrainerState:
    reps = config.representations
    missing = [r for r in reps if r not in encoder_configs]
    if missing:
        raise ValueError(f"no encoder config for representations {missing}")
    pairs, queues, velocities = {}, {}, {}
    for rep in reps:
        enc_cfg = encoder_configs[rep]
        pairs[rep] = make_pair(enc_cfg, seed * 4 + REP_IDS[rep],
                               momentum=config.momentum, dtype=dtype)
        queues[rep] = NegativeQueue(config.queue_size, enc_cfg.projection_dim,
                                    dtype=dtype)
        velocities[rep] = {name: np.zeros_like(p)
                           for name, p in pairs[rep].query.params.items()}
    bones = tuple(tuple(int(v) for v in edge) for edge in bones)
    a_hat = None
    if "STG" in reps:
        joints = encoder_configs["STG"].joints
        a_hat = normalized_adjacency(bone_adjacency(bones, joints)).astype(dtype)
    return TrainerState(config=config, aug=aug, pairs=pairs, queues=queues,
                        bones=bones, a_hat=a_hat, velocities=velocities,
                        seed=int(seed))


def _sgd_update(params: dict, grads: dict, velocity: dict,
                lr: float, weight_decay: float, momentum: float) -> None:
    for name in sorted(grads):
        g = grads[name].astype(params[name].dtype) + weight_decay * params[name]
        v = velocity[name]
        v *= momentum
        v += g
        params[name] -= lr * v


def _embed(trainer: TrainerState, rep: str, state: EncoderState,
           seqs: list[SkeletonSequence], want_cache: bool):
    dtype = next(iter(state.params.values())).dtype
    x = batch_views(seqs, rep, trainer.bones).astype(dtype)
    a_hat = trainer.a_hat if rep == "STG" else None
    return embed_forward(state.config, state.params, x, a_hat, want_cache)


def _augment_batch(trainer: TrainerState, batch: list[SkeletonSequence],
                   rng: np.random.Generator):
    queries, keys = [], []
    for seq in batch:
        q, k = make_query_key_pair(seq, trainer.aug, rng)
        queries.append(q)
        keys.append(k)
    return queries, keys


def _cross_plan(config: TrainerConfig) -> list[tuple[str, str]]:
    """Ordered (query_rep, key_rep) contrast terms for the trainer's mode."""
    reps = config.representations
    if config.mode == "intra":
        return [(reps[0], reps[0])]
    if config.mode == "inter":
        a, b = reps
        return [(a, b), (b, a)]
    if config.cross_terms == "cycle":
        return [(reps[i], reps[(i + 1) % 3]) for i in range(3)]
    return [(r, s) for r in reps for s in reps if r != s]


def contrast_losses(trainer: TrainerState, queries: list[SkeletonSequence],
                    keys: list[SkeletonSequence]):
    """Loss terms and query-encoder gradients for one augmented batch.

    Pure in the parameters (no state mutation), which makes it the unit the
    finite-difference oracle probes.
    """
    z_q, caches, z_k = {}, {}, {}
    for rep in trainer.representations:
        pair = trainer.pairs[rep]
        z_q[rep], caches[rep] = _embed(trainer, rep, pair.query, queries, True)
        z_k[rep], _ = _embed(trainer, rep, pair.key, keys, False)

    terms: dict[str, float] = {rep: 0.0 for rep in trainer.representations}
    dz_q = {rep: np.zeros_like(z_q[rep], dtype=np.float64)
            for rep in trainer.representations}
    pos_means, neg_means = [], []
    for q_rep, k_rep in _cross_plan(trainer.config):
        res = info_nce(z_q[q_rep], z_k[k_rep], trainer.queues[k_rep],
                       trainer.config.tau)
        terms[q_rep] += res.loss
        dz_q[q_rep] += res.grad_q
        pos_means.append(res.pos_logit_mean)
        neg_means.append(res.neg_logit_mean)

    grads = {}
    for rep in trainer.representations:
        pair = trainer.pairs[rep]
        dtype = z_q[rep].dtype
        grads[rep] = embed_backward(pair.query.config, pair.query.params,
                                    caches[rep], dz_q[rep].astype(dtype))
    total = float(sum(terms.values()))
    report = LossReport(total=total, terms=terms,
                        pos_logit_mean=float(np.mean(pos_means)),
                        neg_logit_mean=float(np.mean(neg_means)),
                        step=trainer.step)
    return report, grads, z_k


def train_step(trainer: TrainerState, batch: list[SkeletonSequence],
               rng: np.random.Generator) -> LossReport:
    """One optimization step: augment, contrast, update, enqueue."""
    queries, keys = _augment_batch(trainer, batch, rng)
    report, grads, z_k = contrast_losses(trainer, queries, keys)
    if not np.isfinite(report.total):
        raise ContractError(
            f"non-finite loss {report.total} at step {trainer.step} "
            f"(terms={report.terms})")
    cfg = trainer.config
    for rep in trainer.representations:
        pair = trainer.pairs[rep]
        _sgd_update(pair.query.params, grads[rep], trainer.velocities[rep],
                    cfg.lr, cfg.weight_decay, cfg.opt_momentum)
        pair.query.step += 1
        momentum_update(pair)
        trainer.queues[rep].push(z_k[rep])
    trainer.step += 1
    return report


def intra_step(trainer: TrainerState, batch, rng) -> LossReport:
    if trainer.config.mode != "intra":
        raise ValueError(f"trainer mode is {trainer.config.mode!r}, not intra")
    return train_step(trainer, batch, rng)


def inter_step(trainer: TrainerState, batch, rng) -> LossReport:
    if trainer.config.mode not in ("inter", "inter3"):
        raise ValueError(f"trainer mode is {trainer.config.mode!r}, not inter")
    return train_step(trainer, batch, rng)


def warmup_queues(trainer: TrainerState, sequences: list[SkeletonSequence],
                  batch_size: int = 64) -> None:
    """Seed every queue with key-encoder embeddings of augmented views.

    One pass over the data (stopping once full) so early steps are never
    contrasted against off-manifold random vectors.
    """
    rng = np.random.default_rng((trainer.seed, _TAG_WARMUP))
    need = min(trainer.config.queue_size, len(sequences))
    picked = sequences[:need]
    for start in range(0, len(picked), batch_size):
        chunk = picked[start:start + batch_size]
        views = [make_query_key_pair(seq, trainer.aug, rng)[1] for seq in chunk]
        for rep in trainer.representations:
            z, _ = _embed(trainer, rep, trainer.pairs[rep].key, views, False)
            trainer.queues[rep].push(z)


# ---------------------------------------------------------------------------
# pretraining loop with checkpoint/resume
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    epochs: int = 450
    batch_size: int = 16
    checkpoint_every: int = 0      # in epochs; 0 = final checkpoint only

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


def _trainer_tag(epoch: int) -> str:
    return f"epoch{epoch:04d}"


def save_trainer(trainer: TrainerState, out_dir, tag: str | None = None) -> str:
    """Write one CKPT1 per encoder plus an aux blob and a trainer manifest.

    Returns the manifest path; `load_trainer` on it restores training exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    tag = tag or _trainer_tag(trainer.epoch)
    files = {}
    for rep in trainer.representations:
        qf, kf = f"{tag}.{rep}.query.ckpt", f"{tag}.{rep}.key.ckpt"
        save_checkpoint(trainer.pairs[rep].query, os.path.join(out_dir, qf))
        save_checkpoint(trainer.pairs[rep].key, os.path.join(out_dir, kf))
        files[rep] = {"query": qf, "key": kf}
    aux = {}
    for rep in trainer.representations:
        for name, arr in trainer.queues[rep].state_arrays().items():
            aux[f"queue.{rep}.{name}"] = arr
        for name, arr in trainer.velocities[rep].items():
            aux[f"velocity.{rep}.{name}"] = arr
    aux_file = f"{tag}.aux.npz"
    np.savez(os.path.join(out_dir, aux_file), **aux)
    manifest = {
        "format": "TRAINER1",
        "trainer": asdict(trainer.config),
        "aug": asdict(trainer.aug),
        "bones": [list(edge) for edge in trainer.bones],
        "seed": trainer.seed,
        "epoch": trainer.epoch,
        "step": trainer.step,
        "encoders": files,
        "aux": aux_file,
    }
    path = os.path.join(out_dir, f"{tag}.trainer.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def load_trainer(manifest_path) -> TrainerState:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "TRAINER1":
        raise ValueError(f"{manifest_path}: not a TRAINER1 manifest")
    base = os.path.dirname(manifest_path)
    cfg_d = dict(manifest["trainer"])
    cfg_d["representations"] = tuple(cfg_d["representations"])
    config = TrainerConfig(**cfg_d)
    aug = AugmentationSpec(**manifest["aug"])
    bones = tuple(tuple(edge) for edge in manifest["bones"])
    with np.load(os.path.join(base, manifest["aux"])) as aux:
        aux = dict(aux)
    pairs, queues, velocities = {}, {}, {}
    a_hat = None
    for rep in config.representations:
        files = manifest["encoders"][rep]
        query = load_checkpoint(os.path.join(base, files["query"]))
        key = load_checkpoint(os.path.join(base, files["key"]))
        pairs[rep] = MomentumPair(query=query, key=key, momentum=config.momentum)
        queues[rep] = NegativeQueue.from_state({
            name: aux[f"queue.{rep}.{name}"] for name in ("buffer", "size", "head")})
        velocities[rep] = {name[len(f"velocity.{rep}."):]: arr.copy()
                           for name, arr in aux.items()
                           if name.startswith(f"velocity.{rep}.")}
        if rep == "STG":
            dtype = next(iter(query.params.values())).dtype
            a_hat = normalized_adjacency(
                bone_adjacency(bones, query.config.joints)).astype(dtype)
    return TrainerState(config=config, aug=aug, pairs=pairs, queues=queues,
                        bones=bones, a_hat=a_hat, velocities=velocities,
                        seed=int(manifest["seed"]), epoch=int(manifest["epoch"]),
                        step=int(manifest["step"]))


def pretrain(trainer: TrainerState, sequences: list[SkeletonSequence],
             schedule: Schedule, out_dir=None) -> list[dict]:
    """Run the contrastive loop over shuffled epochs.

    Appends one record per step to ``out_dir/loss_log.jsonl`` (when an output
    directory is given) and writes checkpoints at the schedule's cadence plus
    a final one.  Returns the list of loss records from this call.

    A trainer restored with `load_trainer` continues from its stored epoch;
    because every rng is derived from (seed, tag, epoch, step), the resumed
    loss log is identical to the uninterrupted run's from that point on.
    """
    if not sequences:
        raise ValueError("pretrain needs a nonempty dataset")
    if trainer.epoch >= schedule.epochs:
        raise ValueError(f"trainer already at epoch {trainer.epoch}, "
                         f"schedule ends at {schedule.epochs}")
    if trainer.step == 0 and all(len(q) == 0 for q in trainer.queues.values()):
        warmup_queues(trainer, sequences)

    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "loss_log.jsonl"),
                      "a", encoding="utf-8")
    step_fn = intra_step if trainer.config.mode == "intra" else inter_step
    records = []
    try:
        n = len(sequences)
        for epoch in range(trainer.epoch, schedule.epochs):
            order = np.random.default_rng(
                (trainer.seed, _TAG_SHUFFLE, epoch)).permutation(n)
            for bi, start in enumerate(range(0, n, schedule.batch_size)):
                batch = [sequences[i] for i in order[start:start + schedule.batch_size]]
                rng = np.random.default_rng((trainer.seed, _TAG_AUGMENT, epoch, bi))
                report = step_fn(trainer, batch, rng)
                record = report.record(epoch)
                records.append(record)
                if log_fh is not None:
                    log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            trainer.epoch = epoch + 1
            last = trainer.epoch == schedule.epochs
            if out_dir is not None and (last or (
                    schedule.checkpoint_every
                    and trainer.epoch % schedule.checkpoint_every == 0)):
                save_trainer(trainer, out_dir)
                if log_fh is not None:
                    log_fh.flush()
    finally:
        if log_fh is not None:
            log_fh.close()
    return records
