"""Downstream evaluation harness.

Everything here consumes *backbone* features: the projection head used during
contrastive pretraining is removed, and evaluation inputs are center-cropped
to the training frame count (resampled up when the sequence is shorter).

Tasks: frozen linear probe, k=1 cosine retrieval, semi-supervised / transfer /
supervised-only finetuning, combined-representation probing, and embedding
export with an optional 2-d PCA projection.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .augment import CropResizeParams, temporal_crop_resize
from .data import LabeledSample
from .encoders import (EncoderConfig, EncoderState, encoder_forward,
                       encoder_backward, init_encoder)
from .errors import DegenerateTaskError
from .represent import batch_views, bone_adjacency, normalized_adjacency


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def center_crop(seq, length: int = 64):
    """Deterministic evaluation window: central `length` frames, or a linear
    resample of the whole sequence when it is shorter."""
    t = seq.frames
    if t == length:
        return seq
    if t > length:
        start = (t - length) // 2
        return seq.with_coords(seq.coords[start:start + length])
    return temporal_crop_resize(
        seq, CropResizeParams(length_ratio=1.0, start=0, output_length=length))


def _adjacency_for(state: EncoderState, bones):
    if state.config.representation != "STG":
        return None
    dtype = next(iter(state.params.values())).dtype
    return normalized_adjacency(
        bone_adjacency(bones, state.config.joints)).astype(dtype)


def extract_features(state: EncoderState, samples: list[LabeledSample], bones,
                     crop_length: int = 64, batch_size: int = 64):
    """Backbone (pre-projection) features and labels for a labeled split."""
    if not samples:
        raise ValueError("extract_features needs a nonempty split")
    rep = state.config.representation
    dtype = next(iter(state.params.values())).dtype
    a_hat = _adjacency_for(state, bones)
    feats = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        seqs = [center_crop(s.sequence, crop_length) for s in chunk]
        x = batch_views(seqs, rep, bones).astype(dtype)
        f, _ = encoder_forward(state.config, state.params, x, a_hat)
        feats.append(f)
    features = np.concatenate(feats, axis=0)
    labels = np.array([-1 if s.label is None else s.label for s in samples])
    return features, labels


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    correct: int
    total: int
    per_class: dict[int, float]
    protocol: str = ""

    def __post_init__(self):
        if self.total and self.correct != round(self.accuracy * self.total):
            raise ValueError("accuracy * total must equal the correct count")


def _score(predictions: np.ndarray, labels: np.ndarray, protocol: str) -> Metrics:
    correct = int(np.sum(predictions == labels))
    per_class = {}
    for c in np.unique(labels):
        mask = labels == c
        per_class[int(c)] = float(np.sum(predictions[mask] == c) / np.sum(mask))
    return Metrics(accuracy=correct / len(labels), correct=correct,
                   total=int(len(labels)), per_class=per_class, protocol=protocol)


# ---------------------------------------------------------------------------
# linear probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeSchedule:
    epochs: int = 80
    lr: float = 0.1
    momentum: float = 0.9
    decay_epochs: tuple[int, ...] = (50, 70)
    decay_factor: float = 0.1


def _softmax_ce(logits: np.ndarray, y_index: np.ndarray):
    """Mean cross-entropy and dlogits for integer class indices."""
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    p = exp / exp.sum(axis=1, keepdims=True)
    n = len(y_index)
    loss = float(-np.mean(np.log(p[np.arange(n), y_index] + 1e-300)))
    dlogits = p.copy()
    dlogits[np.arange(n), y_index] -= 1.0
    dlogits /= n
    return loss, dlogits


def linear_probe(features_train: np.ndarray, labels_train: np.ndarray,
                 features_test: np.ndarray, labels_test: np.ndarray,
                 schedule: ProbeSchedule = ProbeSchedule(),
                 protocol: str = "") -> Metrics:
    """Full-batch gradient descent with momentum on a softmax classifier over
    frozen features; returns top-1 accuracy on the test split.

    Features are standardized with training-split statistics before the
    classifier: small encoders concentrate their outputs in a narrow cone,
    and the probe's fixed schedule needs well-conditioned inputs to converge.
    The encoder itself is untouched (the transform is per-dimension affine).
    """
    classes = np.unique(labels_train)
    if len(classes) < 2:
        raise DegenerateTaskError(
            f"linear probe needs >= 2 classes, training set has {len(classes)}")
    class_index = {int(c): i for i, c in enumerate(classes)}
    y = np.array([class_index[int(l)] for l in labels_train])
    x = np.asarray(features_train, dtype=np.float64)
    mean, scale = x.mean(axis=0), x.std(axis=0) + 1e-8
    x = (x - mean) / scale
    w = np.zeros((x.shape[1], len(classes)))
    b = np.zeros(len(classes))
    vw, vb = np.zeros_like(w), np.zeros_like(b)
    lr = schedule.lr
    for epoch in range(schedule.epochs):
        if epoch in schedule.decay_epochs:
            lr *= schedule.decay_factor
        _, dlogits = _softmax_ce(x @ w + b, y)
        dw = x.T @ dlogits
        db = dlogits.sum(axis=0)
        vw = schedule.momentum * vw + dw
        vb = schedule.momentum * vb + db
        w -= lr * vw
        b -= lr * vb
    x_test = (np.asarray(features_test, dtype=np.float64) - mean) / scale
    predictions = classes[np.argmax(x_test @ w + b, axis=1)]
    return _score(predictions, np.asarray(labels_test), protocol)


# ---------------------------------------------------------------------------
# k=1 cosine retrieval
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalIndex:
    features: np.ndarray       # unit-norm rows
    labels: np.ndarray


def _unit_rows(features: np.ndarray, what: str) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmin(norms))
        raise ValueError(f"{what} sample {bad} has a zero-norm feature vector")
    return features / norms[:, None]

def build_index(features: np.ndarray, labels: np.ndarray) -> RetrievalIndex:
    if len(features) == 0:
        raise ValueError("retrieval gallery must be nonempty")
    return RetrievalIndex(features=_unit_rows(features, "gallery"),
                          labels=np.asarray(labels).copy())


def knn_retrieve(index: RetrievalIndex, query_features: np.ndarray,
                 query_labels=None, protocol: str = ""):
    """k=1 cosine-similarity retrieval; ties go to the lowest gallery index.

    Returns predicted labels, plus Metrics when query labels are given.
    """
    q = _unit_rows(query_features, "query")
    if q.shape[1] != index.features.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} != gallery dim "
                         f"{index.features.shape[1]}")
    sims = q @ index.features.T
    nearest = np.argmax(sims, axis=1)      # first occurrence = lowest index
    predictions = index.labels[nearest]
    if query_labels is None:
        return predictions, None
    return predictions, _score(predictions, np.asarray(query_labels), protocol)


# ---------------------------------------------------------------------------
# finetuning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FinetuneSchedule:
    epochs: int = 50
    lr: float = 1e-4
    decay_epochs: tuple[int, ...] = (30, 40)
    decay_factor: float = 0.1
    batch_size: int = 16


def stratified_subset(labels: np.ndarray, rho: float, seed: int) -> np.ndarray:
    """Indices of a labeled fraction, class-stratified when every class can
    contribute at least one sample; otherwise a plain random draw (warned)."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"labeled fraction must be in (0, 1], got {rho}")
    labels = np.asarray(labels)
    rng = np.random.default_rng((int(seed), 0x5B5E7))
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(rho * counts < 1.0):
        warnings.warn("labeled fraction leaves some class empty; "
                      "falling back to a non-stratified draw")
        k = max(1, round(rho * len(labels)))
        return np.sort(rng.choice(len(labels), size=k, replace=False))
    picked = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        k = max(1, round(rho * len(members)))
        picked.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(picked))


@dataclass(frozen=True)
class SeedSummary:
    task: str
    protocol: str
    seeds: tuple[int, ...]
    mean: float
    std: float
    per_seed: tuple[float, ...]

    def to_record(self) -> dict:
        return {"task": self.task, "protocol": self.protocol,
                "seeds": list(self.seeds), "mean": self.mean, "std": self.std,
                "per_seed": list(self.per_seed)}


def summarize(task: str, protocol: str, seeds, accuracies) -> SeedSummary:
    acc = np.asarray(list(accuracies), dtype=np.float64)
    return SeedSummary(task=task, protocol=protocol, seeds=tuple(int(s) for s in seeds),
                       mean=float(acc.mean()), std=float(acc.std()),
                       per_seed=tuple(float(a) for a in acc))


def write_report(summary: SeedSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_record(), fh, sort_keys=True, indent=1)
        fh.write("\n")


class _Adam:
    def __init__(self, params: dict, b1=0.9, b2=0.999, eps=1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.b1, self.b2, self.eps, self.t = b1, b2, eps, 0

    def update(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        bias1 = 1.0 - self.b1 ** self.t
        bias2 = 1.0 - self.b2 ** self.t
        for name in sorted(grads):
            g = grads[name].astype(params[name].dtype)
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            mhat = self.m[name] / bias1
            vhat = self.v[name] / bias2
            params[name] -= lr * mhat / (np.sqrt(vhat) + self.eps)


FINETUNE_MODES = ("semi-supervised", "transfer", "supervised-only")


def _finetune_one(init_state: EncoderState, train: list[LabeledSample],
                  test: list[LabeledSample], bones,
                  schedule: FinetuneSchedule, seed: int,
                  crop_length: int, protocol: str) -> Metrics:
    state = init_state.copy()
    config = state.config
    rep = config.representation
    dtype = next(iter(state.params.values())).dtype
    a_hat = _adjacency_for(state, bones)

    labels = np.array([s.label for s in train])
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DegenerateTaskError(
            f"finetune needs >= 2 classes, labeled subset has {len(classes)}")
    class_index = {int(c): i for i, c in enumerate(classes)}
    y = np.array([class_index[int(l)] for l in labels])
    x = batch_views([center_crop(s.sequence, crop_length) for s in train],
                    rep, bones).astype(dtype)

    rng = np.random.default_rng((int(seed), 0xF1E7))
    s = 1.0 / np.sqrt(config.feature_dim)
    head = {"cls.w": rng.uniform(-s, s, size=(config.feature_dim, len(classes))).astype(dtype),
            "cls.b": np.zeros(len(classes), dtype=dtype)}
    # projection-head parameters stay out of the task optimizer
    trainable = {k: v for k, v in state.params.items() if not k.startswith("head.")}
    opt = _Adam({**trainable, **head})

    lr = schedule.lr
    n = len(train)
    for epoch in range(schedule.epochs):
        if epoch in schedule.decay_epochs:
            lr *= schedule.decay_factor
        order = np.random.default_rng((int(seed), 0xF1E8, epoch)).permutation(n)
        for start in range(0, n, schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            feats, cache = encoder_forward(config, state.params, x[idx],
                                           a_hat, want_cache=True)
            logits = feats @ head["cls.w"] + head["cls.b"]
            _, dlogits = _softmax_ce(logits.astype(np.float64), y[idx])
            dlogits = dlogits.astype(dtype)
            grads = {"cls.w": feats.T @ dlogits, "cls.b": dlogits.sum(axis=0)}
            dfeats = dlogits @ head["cls.w"].T
            grads.update(encoder_backward(config, state.params, cache, dfeats))
            merged = {**trainable, **head}
            opt.update(merged, grads, lr)

    test_x = batch_views([center_crop(s.sequence, crop_length) for s in test],
                         rep, bones).astype(dtype)
    test_labels = np.array([s.label for s in test])
    feats, _ = encoder_forward(config, state.params, test_x, a_hat)
    predictions = classes[np.argmax(feats @ head["cls.w"] + head["cls.b"], axis=1)]
    return _score(predictions, test_labels, protocol)


def finetune(checkpoint, train: list[LabeledSample], test: list[LabeledSample],
             bones, rho: float = 0.1, mode: str = "semi-supervised",
             schedule: FinetuneSchedule = FinetuneSchedule(),
             seeds=(0, 1, 2, 3, 4), crop_length: int = 64,
             protocol: str = "") -> SeedSummary:
    """Joint encoder+classifier training on a labeled fraction.

    `checkpoint` is an EncoderState (pretrained weights) for semi-supervised
    and transfer modes, or an EncoderConfig/EncoderState whose config seeds a
    fresh random init for supervised-only.  Each seed draws its own
    stratified labeled subset; the summary reports mean +/- std.
    """
    if mode not in FINETUNE_MODES:
        raise ValueError(f"mode must be one of {FINETUNE_MODES}, got {mode!r}")
    config = checkpoint if isinstance(checkpoint, EncoderConfig) else checkpoint.config
    if mode != "supervised-only" and not isinstance(checkpoint, EncoderState):
        raise ValueError(f"{mode} finetuning needs pretrained encoder weights")
    labels = np.array([s.label for s in train])
    accuracies = []
    for seed in seeds:
        subset = stratified_subset(labels, rho, seed)
        labeled = [train[i] for i in subset]
        if mode == "supervised-only":
            init = init_encoder(config, int(seed))
        else:
            init = checkpoint
        accuracies.append(_finetune_one(init, labeled, test, bones, schedule,
                                        int(seed), crop_length, protocol).accuracy)
    return summarize(f"finetune/{mode}/rho={rho}", protocol, seeds, accuracies)


# ---------------------------------------------------------------------------
# combined probe and embedding export
# ---------------------------------------------------------------------------

def combined_probe(states: list[EncoderState], train: list[LabeledSample],
                   test: list[LabeledSample], bones,
                   schedule: ProbeSchedule = ProbeSchedule(),
                   crop_length: int = 64, protocol: str = "") -> Metrics:
    """Concatenate backbone features from several encoders, then probe."""
    if len(states) < 2:
        raise ValueError("combined_probe expects at least two encoders")
    train_parts, test_parts = [], []
    for state in states:
        f_train, labels_train = extract_features(state, train, bones, crop_length)
        f_test, labels_test = extract_features(state, test, bones, crop_length)
        train_parts.append(f_train)
        test_parts.append(f_test)
    return linear_probe(np.concatenate(train_parts, axis=1), labels_train,
                        np.concatenate(test_parts, axis=1), labels_test,
                        schedule, protocol)


def pca2d(features: np.ndarray):
    """Top-2 principal directions via SVD of the centered feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    return centered @ components.T, components


PROJECTORS = ("none", "pca2d")


def export_embeddings(state: EncoderState, samples: list[LabeledSample],
                      bones, path, projector: str = "none",
                      crop_length: int = 64) -> int:
    """Write one JSON record per sample: {id, label, vector[, xy]}.

    Returns the record count.  Vectors are the backbone features; with the
    pca2d projector each record also carries 2-d principal coordinates.
    """
    if projector not in PROJECTORS:
        raise ValueError(f"projector must be one of {PROJECTORS}, got {projector!r}")
    features, labels = extract_features(state, samples, bones, crop_length)
    coords = pca2d(features)[0] if projector == "pca2d" else None
    with open(path, "w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            record = {"id": sample.sequence.sample_id,
                      "label": None if sample.label is None else int(sample.label),
                      "vector": [float(v) for v in features[i]]}
            if coords is not None:
                record["xy"] = [float(coords[i, 0]), float(coords[i, 1])]
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return len(samples)
