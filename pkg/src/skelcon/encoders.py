"""Encoder families for the three skeleton representations.

* SEQ: bidirectional gated recurrent layers; the feature is the
  concatenation of the final hidden states of both directions of the last
  layer (``seq_pooling="mean"`` averages the output sequence instead).
* IMG: a reduced convolutional co-occurrence stack: pointwise coordinate
  stem, temporal convolutions, a joints-into-channels transpose followed by
  a pointwise co-occurrence mix, global pooling and a dense layer.
* STG: graph-convolution blocks over the fixed per-actor joint adjacency
  interleaved with temporal convolutions, global pooling, dense layer.

Each encoder ends in a two-layer projection head producing L2-normalized
embeddings (128-d by default).  Forward passes can retain caches so that
exact analytic parameter gradients flow back through the whole stack.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import nn
from .errors import DegenerateEmbeddingError
from .represent import GraphView, REPRESENTATIONS

CHECKPOINT_MAGIC = b"CKPT1\n"


@dataclass(frozen=True)
class EncoderConfig:
    representation: str
    joints: int
    depth: int = 1
    hidden: int = 32
    feature_dim: int = 64
    projection_dim: int = 128
    scale: str = "desk"
    temporal_kernel: int = 5
    seq_pooling: str = "final"
    actors: int = 2

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        if self.projection_dim < 2:
            raise ValueError("projection_dim must be >= 2")
        if self.depth < 1 or self.hidden < 1 or self.joints < 2:
            raise ValueError("depth, hidden and joints must be positive")
        if self.representation == "SEQ" and self.feature_dim != 2 * self.hidden:
            raise ValueError(
                f"SEQ feature_dim must equal 2*hidden={2 * self.hidden}, got {self.feature_dim}")
        if self.temporal_kernel % 2 != 1:
            raise ValueError("temporal_kernel must be odd (same-padding convolutions)")
        if self.seq_pooling not in ("final", "mean"):
            raise ValueError("seq_pooling must be 'final' or 'mean'")

    @property
    def input_dim(self) -> int:
        return self.actors * self.joints * 3

    @property
    def node_count(self) -> int:
        return self.actors * self.joints


def desk_config(representation: str, joints: int, hidden: int = 32,
                depth: int = 1, projection_dim: int = 128) -> EncoderConfig:
    return EncoderConfig(representation=representation, joints=joints,
                         depth=depth, hidden=hidden, feature_dim=2 * hidden,
                         projection_dim=projection_dim, scale="desk")


def full_scale_config(representation: str, joints: int = 25) -> EncoderConfig:
    """Full-scale configurations; used for shape checks and documentation."""
    if representation == "SEQ":
        return EncoderConfig("SEQ", joints, depth=3, hidden=1024,
                             feature_dim=2048, scale="full")
    if representation == "IMG":
        return EncoderConfig("IMG", joints, depth=2, hidden=64,
                             feature_dim=4096, scale="full")
    if representation == "STG":
        return EncoderConfig("STG", joints, depth=3, hidden=64,
                             feature_dim=256, scale="full")
    raise ValueError(f"unknown representation {representation!r}")


@dataclass
class EncoderState:
    config: EncoderConfig
    params: dict[str, np.ndarray]
    step: int = 0

    def copy(self) -> "EncoderState":
        return EncoderState(config=self.config,
                            params={k: v.copy() for k, v in self.params.items()},
                            step=self.step)


def parameter_count(state: EncoderState) -> int:
    return sum(int(v.size) for v in state.params.values())


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    h, f = config.hidden, config.feature_dim
    kt = config.temporal_kernel
    shapes: dict[str, tuple[int, ...]] = {}
    if config.representation == "SEQ":
        d = config.input_dim
        for layer in range(config.depth):
            d_in = d if layer == 0 else 2 * h
            for direction in ("fwd", "bwd"):
                shapes[f"gru{layer}.{direction}.w"] = (d_in, 3 * h)
                shapes[f"gru{layer}.{direction}.u"] = (h, 3 * h)
                shapes[f"gru{layer}.{direction}.b"] = (3 * h,)
    elif config.representation == "IMG":
        v = config.node_count
        shapes["conv_in.w"] = (h, 3, 1, 1)
        shapes["conv_in.b"] = (h,)
        for i in range(config.depth):
            shapes[f"tconv{i}.w"] = (h, h, kt, 1)
            shapes[f"tconv{i}.b"] = (h,)
        shapes["cooc.w"] = (2 * h, v, 1, 1)
        shapes["cooc.b"] = (2 * h,)
        shapes["fc.w"] = (2 * h, f)
        shapes["fc.b"] = (f,)
    elif config.representation == "STG":
        for i in range(config.depth):
            c_in = 3 if i == 0 else h
            shapes[f"block{i}.gc.w"] = (c_in, h)
            shapes[f"block{i}.gc.b"] = (h,)
            shapes[f"block{i}.tc.w"] = (h, h, kt, 1)
            shapes[f"block{i}.tc.b"] = (h,)
        shapes["fc.w"] = (h, f)
        shapes["fc.b"] = (f,)
    shapes["head.w1"] = (f, f)
    shapes["head.b1"] = (f,)
    shapes["head.w2"] = (f, config.projection_dim)
    shapes["head.b2"] = (config.projection_dim,)
    return shapes


def init_encoder(config: EncoderConfig, seed: int,
                 dtype=np.float32) -> EncoderState:
    """Deterministic small-magnitude init: uniform(-s, s) with s = fan_in^-1/2."""
    rng = np.random.default_rng((int(seed), 0xE0C0))
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith(".b") or name.endswith("b1") or name.endswith("b2"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
        else:
            fan_in = shape[0]
        s = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-s, s, size=shape).astype(dtype)
    return EncoderState(config=config, params=params, step=0)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _seq_forward(config, params, x, want_cache):
    h = config.hidden
    caches = []
    layer_in = x
    hf = hb = None
    for layer in range(config.depth):
        out_f, hf, cf = nn.gru_forward(layer_in, params[f"gru{layer}.fwd.w"],
                                       params[f"gru{layer}.fwd.u"],
                                       params[f"gru{layer}.fwd.b"])
        out_b, hb, cb = nn.gru_forward(layer_in, params[f"gru{layer}.bwd.w"],
                                       params[f"gru{layer}.bwd.u"],
                                       params[f"gru{layer}.bwd.b"], reverse=True)
        layer_in = np.concatenate([out_f, out_b], axis=2)
        caches.append((cf, cb))
    if config.seq_pooling == "final":
        feats = np.concatenate([hf, hb], axis=1)
    else:
        feats = layer_in.mean(axis=1)
    cache = (caches, layer_in.shape) if want_cache else None
    return feats, cache


def _seq_backward(config, params, cache, dfeat):
    h = config.hidden
    caches, out_shape = cache
    grads: dict[str, np.ndarray] = {}
    if config.seq_pooling == "final":
        dh_f, dh_b = dfeat[:, :h], dfeat[:, h:]
        dout_seq = None
    else:
        t = out_shape[1]
        dout_seq = np.broadcast_to(dfeat[:, None, :] / t, out_shape).astype(dfeat.dtype)
        dh_f = dh_b = None
    for layer in range(config.depth - 1, -1, -1):
        cf, cb = caches[layer]
        d_f = dout_seq[:, :, :h] if dout_seq is not None else None
        d_b = dout_seq[:, :, h:] if dout_seq is not None else None
        dx_f, dwf, duf, dbf = nn.gru_backward(d_f, dh_f, cf)
        dx_b, dwb, dub, dbb = nn.gru_backward(d_b, dh_b, cb)
        grads[f"gru{layer}.fwd.w"] = dwf
        grads[f"gru{layer}.fwd.u"] = duf
        grads[f"gru{layer}.fwd.b"] = dbf
        grads[f"gru{layer}.bwd.w"] = dwb
        grads[f"gru{layer}.bwd.u"] = dub
        grads[f"gru{layer}.bwd.b"] = dbb
        dout_seq = dx_f + dx_b
        dh_f = dh_b = None
    return grads


def _img_forward(config, params, x, want_cache):
    kt = config.temporal_kernel
    pad = (kt // 2, 0)
    steps = []
    y, c = nn.conv2d_forward(x, params["conv_in.w"], params["conv_in.b"])
    steps.append(("conv_in", c))
    y, r = nn.relu_forward(y)
    steps.append(("relu", r))
    for i in range(config.depth):
        y, c = nn.conv2d_forward(y, params[f"tconv{i}.w"], params[f"tconv{i}.b"], pad=pad)
        steps.append((f"tconv{i}", c))
        y, r = nn.relu_forward(y)
        steps.append(("relu", r))
    y = np.ascontiguousarray(y.transpose(0, 3, 2, 1))  # joints become channels
    steps.append(("transpose", None))
    y, c = nn.conv2d_forward(y, params["cooc.w"], params["cooc.b"])
    steps.append(("cooc", c))
    y, r = nn.relu_forward(y)
    steps.append(("relu", r))
    y, c = nn.mean_pool_forward(y, (2, 3))
    steps.append(("pool", c))
    y, c = nn.linear_forward(y, params["fc.w"], params["fc.b"])
    steps.append(("fc", c))
    feats, r = nn.relu_forward(y)
    steps.append(("relu", r))
    return feats, (steps if want_cache else None)


def _img_backward(config, params, cache, dfeat):
    grads: dict[str, np.ndarray] = {}
    d = dfeat
    for name, c in reversed(cache):
        if name == "relu":
            d = nn.relu_backward(d, c)
        elif name == "fc":
            d, grads["fc.w"], grads["fc.b"] = nn.linear_backward(d, c)
        elif name == "pool":
            d = nn.mean_pool_backward(d, c)
        elif name == "transpose":
            d = np.ascontiguousarray(d.transpose(0, 3, 2, 1))
        else:
            d, grads[f"{name}.w"], grads[f"{name}.b"] = nn.conv2d_backward(d, c, params[f"{name}.w"])
    return grads


def _stg_forward(config, params, x, a_hat, want_cache):
    kt = config.temporal_kernel
    pad = (kt // 2, 0)
    steps = []
    y = x
    for i in range(config.depth):
        y, c = nn.graph_conv_forward(y, a_hat, params[f"block{i}.gc.w"],
                                     params[f"block{i}.gc.b"], actors=config.actors)
        steps.append((f"block{i}.gc", c))
        y, r = nn.relu_forward(y)
        steps.append(("relu", r))
        y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))  # (N, C, T, V)
        steps.append(("to_nchw", None))
        y, c = nn.conv2d_forward(y, params[f"block{i}.tc.w"], params[f"block{i}.tc.b"], pad=pad)
        steps.append((f"block{i}.tc", c))
        y, r = nn.relu_forward(y)
        steps.append(("relu", r))
        y = np.ascontiguousarray(y.transpose(0, 2, 3, 1))  # back to (N, T, V, C)
        steps.append(("to_ntvc", None))
    y, c = nn.mean_pool_forward(y, (1, 2))
    steps.append(("pool", c))
    y, c = nn.linear_forward(y, params["fc.w"], params["fc.b"])
    steps.append(("fc", c))
    feats, r = nn.relu_forward(y)
    steps.append(("relu", r))
    return feats, (steps if want_cache else None)


def _stg_backward(config, params, cache, dfeat):
    grads: dict[str, np.ndarray] = {}
    d = dfeat
    for name, c in reversed(cache):
        if name == "relu":
            d = nn.relu_backward(d, c)
        elif name == "fc":
            d, grads["fc.w"], grads["fc.b"] = nn.linear_backward(d, c)
        elif name == "pool":
            d = nn.mean_pool_backward(d, c)
        elif name == "to_nchw":
            d = np.ascontiguousarray(d.transpose(0, 2, 3, 1))
        elif name == "to_ntvc":
            d = np.ascontiguousarray(d.transpose(0, 3, 1, 2))
        elif name.endswith(".tc"):
            d, grads[f"{name}.w"], grads[f"{name}.b"] = nn.conv2d_backward(d, c, params[f"{name}.w"])
        else:
            d, grads[f"{name}.w"], grads[f"{name}.b"] = nn.graph_conv_backward(d, c)
    return grads


_EXPECTED_NDIM = {"IMG": 4, "SEQ": 3, "STG": 4}


def encoder_forward(config: EncoderConfig, params: dict, x: np.ndarray,
                    a_hat: np.ndarray | None = None, want_cache: bool = False):
    """Backbone features for a batch of views (no projection head)."""
    if x.ndim != _EXPECTED_NDIM[config.representation]:
        raise ValueError(
            f"{config.representation} encoder expects a rank-"
            f"{_EXPECTED_NDIM[config.representation]} batch, got shape {x.shape}")
    if config.representation == "SEQ":
        if x.shape[2] != config.input_dim:
            raise ValueError(f"SEQ feature axis {x.shape[2]} != {config.input_dim}")
        return _seq_forward(config, params, x, want_cache)
    if config.representation == "IMG":
        if x.shape[1] != 3 or x.shape[3] != config.node_count:
            raise ValueError(f"IMG batch shape {x.shape} does not match config")
        return _img_forward(config, params, x, want_cache)
    if x.shape[2] != config.node_count or x.shape[3] != 3:
        raise ValueError(f"STG batch shape {x.shape} does not match config")
    if a_hat is None:
        raise ValueError("STG encoder needs the normalized adjacency")
    return _stg_forward(config, params, x, a_hat, want_cache)


def encoder_backward(config: EncoderConfig, params: dict, cache, dfeat: np.ndarray):
    if config.representation == "SEQ":
        return _seq_backward(config, params, cache, dfeat)
    if config.representation == "IMG":
        return _img_backward(config, params, cache, dfeat)
    return _stg_backward(config, params, cache, dfeat)


def head_forward(params: dict, feats: np.ndarray, want_cache: bool = False,
                 norm_floor: float = 1e-12):
    """Two-layer projection plus exact L2 normalization."""
    hidden, c1 = nn.linear_forward(feats, params["head.w1"], params["head.b1"])
    hidden, r1 = nn.relu_forward(hidden)
    y, c2 = nn.linear_forward(hidden, params["head.w2"], params["head.b2"])
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(norms < norm_floor):
        bad = int(np.argmin(norms))
        raise DegenerateEmbeddingError(
            f"projected vector {bad} has norm {float(norms.flat[bad]):.3e}")
    z = y / norms
    cache = (c1, r1, c2, z, norms) if want_cache else None
    return z, cache


def head_backward(params: dict, cache, dz: np.ndarray):
    c1, r1, c2, z, norms = cache
    # y = z * norm; dL/dy = (dz - z (z . dz)) / norm
    dy = (dz - z * np.sum(z * dz, axis=-1, keepdims=True)) / norms
    dh, dw2, db2 = nn.linear_backward(dy, c2)
    dh = nn.relu_backward(dh, r1)
    dfeat, dw1, db1 = nn.linear_backward(dh, c1)
    return dfeat, {"head.w1": dw1, "head.b1": db1, "head.w2": dw2, "head.b2": db2}


def embed_forward(config, params, x, a_hat=None, want_cache=False):
    """views -> unit-norm embeddings; cache covers backbone and head."""
    feats, enc_cache = encoder_forward(config, params, x, a_hat, want_cache)
    z, head_cache = head_forward(params, feats, want_cache)
    return z, ((enc_cache, head_cache) if want_cache else None)


def embed_backward(config, params, cache, dz):
    enc_cache, head_cache = cache
    dfeat, grads = head_backward(params, head_cache, dz)
    grads.update(encoder_backward(config, params, enc_cache, dfeat))
    return grads


# ---------------------------------------------------------------------------
# public single-sample / batch ops
# ---------------------------------------------------------------------------

def encode(view, state: EncoderState) -> np.ndarray:
    """Backbone feature vector(s) for one view or a batch of views."""
    config = state.config
    if isinstance(view, GraphView):
        x = view.nodes.transpose(1, 0, 2)[None]
        feats, _ = encoder_forward(config, state.params, x.astype(next(iter(state.params.values())).dtype),
                                   a_hat=view.adjacency_normalized)
        return feats[0]
    x = np.asarray(view)
    single = x.ndim == _EXPECTED_NDIM[config.representation] - 1
    if single:
        x = x[None]
    dtype = next(iter(state.params.values())).dtype
    feats, _ = encoder_forward(config, state.params, x.astype(dtype))
    return feats[0] if single else feats


def project_and_normalize(features: np.ndarray, state: EncoderState) -> np.ndarray:
    single = features.ndim == 1
    z, _ = head_forward(state.params, features[None] if single else features)
    return z[0] if single else z


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(state: EncoderState, path) -> None:
    """Single-file container: magic, manifest length, JSON manifest, f32 blob."""
    names = sorted(state.params)
    index = {}
    offset = 0
    blob = io.BytesIO()
    for name in names:
        arr = np.ascontiguousarray(state.params[name], dtype="<f4")
        index[name] = {"offset": offset, "shape": list(arr.shape)}
        blob.write(arr.tobytes())
        offset += arr.size
    manifest = {
        "format": "CKPT1",
        "config": asdict(state.config),
        "step": state.step,
        "params": index,
    }
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(blob.getvalue())


def load_checkpoint(path, dtype=np.float32) -> EncoderState:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a CKPT1 checkpoint")
        (mlen,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        blob = fh.read()
    config = EncoderConfig(**manifest["config"])
    flat = np.frombuffer(blob, dtype="<f4")
    params = {}
    for name, meta in manifest["params"].items():
        shape = tuple(meta["shape"])
        size = int(np.prod(shape)) if shape else 1
        arr = flat[meta["offset"]:meta["offset"] + size].reshape(shape)
        params[name] = arr.astype(dtype)
    return EncoderState(config=config, params=params, step=int(manifest["step"]))
