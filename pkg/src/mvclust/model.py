"""SiMVC / CoMVC network: per-view MLP encoders, softmax fusion, DDC head."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataFormatError, ShapeError, UsageError

CHECKPOINT_MAGIC = b"MVCK"
CHECKPOINT_VERSION = 1
BN_MOMENTUM = 0.1
BN_EPS = 1e-5
INIT_SCHEME = "uniform(+-1/sqrt(fan_in)); fusion logits 0; batch-norm gamma 1, beta 0"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture metadata.  Defaults follow the fully connected encoder
    (512-512-256, ReLU) and the 100-unit clustering head."""

    view_dims: tuple
    n_clusters: int
    encoder_layers: tuple = (512, 512, 256)
    hidden: int = 100

    def __post_init__(self):
        object.__setattr__(self, "view_dims", tuple(int(d) for d in self.view_dims))
        object.__setattr__(self, "encoder_layers", tuple(int(d) for d in self.encoder_layers))
        if len(self.view_dims) < 1:
            raise UsageError("model needs at least one view")
        if any(d <= 0 for d in self.view_dims):
            raise UsageError(f"view dimensions must be positive, got {self.view_dims}")
        if self.n_clusters < 2:
            raise UsageError(f"n_clusters must be at least 2, got {self.n_clusters}")
        if not self.encoder_layers or any(d <= 0 for d in self.encoder_layers) or self.hidden <= 0:
            raise UsageError("layer widths must be positive")

    @property
    def n_views(self) -> int:
        return len(self.view_dims)

    @property
    def rep_dim(self) -> int:
        return self.encoder_layers[-1]

    def to_dict(self) -> dict:
        return {
            "view_dims": list(self.view_dims),
            "n_clusters": self.n_clusters,
            "encoder_layers": list(self.encoder_layers),
            "hidden": self.hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            view_dims=tuple(d["view_dims"]),
            n_clusters=int(d["n_clusters"]),
            encoder_layers=tuple(d.get("encoder_layers", (512, 512, 256))),
            hidden=int(d.get("hidden", 100)),
        )


@dataclass
class ModelState:
    spec: ModelSpec
    params: dict = field(default_factory=dict)  # name -> Tensor, declaration order
    buffers: dict = field(default_factory=dict)  # batch-norm running statistics
    training: bool = True

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def fusion_weights(self) -> Tensor:
        return fusion_weights(self.params["fusion_logits"])

    def copy(self) -> "ModelState":
        return ModelState(
            spec=self.spec,
            params={k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            training=self.training,
        )


class Forward(NamedTuple):
    reps: list
    weights: Tensor
    fused: Tensor
    hidden: Tensor
    alpha: Tensor


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(spec: ModelSpec, seed: int) -> ModelState:
    """Deterministic initialization: weights and biases uniform in
    +-1/sqrt(fan_in), fusion logits zero, batch-norm affine (1, 0)."""
    if not isinstance(spec, ModelSpec):
        raise UsageError("init_model expects a ModelSpec")
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def leaf(x):
        return Tensor(x, requires_grad=True)

    for v, dim in enumerate(spec.view_dims):
        fan_in = dim
        for l, width in enumerate(spec.encoder_layers):
            params[f"enc{v}.{l}.weight"] = leaf(_uniform(rng, fan_in, (fan_in, width)))
            params[f"enc{v}.{l}.bias"] = leaf(_uniform(rng, fan_in, (width,)))
            fan_in = width
    params["fusion_logits"] = leaf(np.zeros(spec.n_views))
    d, hdim, k = spec.rep_dim, spec.hidden, spec.n_clusters
    params["head.hidden.weight"] = leaf(_uniform(rng, d, (d, hdim)))
    params["head.hidden.bias"] = leaf(_uniform(rng, d, (hdim,)))
    params["head.bn.gamma"] = leaf(np.ones(hdim))
    params["head.bn.beta"] = leaf(np.zeros(hdim))
    params["head.out.weight"] = leaf(_uniform(rng, hdim, (hdim, k)))
    params["head.out.bias"] = leaf(_uniform(rng, hdim, (k,)))
    buffers = {"head.bn.running_mean": np.zeros(hdim), "head.bn.running_var": np.ones(hdim)}
    return ModelState(spec=spec, params=params, buffers=buffers)


def _as_views(state: ModelState, batch) -> list[Tensor]:
    views = [ad.as_tensor(x) for x in batch]
    spec = state.spec
    if len(views) != spec.n_views:
        raise ShapeError(f"expected {spec.n_views} views, got {len(views)}")
    n = views[0].shape[0] if views[0].ndim == 2 else None
    for v, (x, dim) in enumerate(zip(views, spec.view_dims)):
        if x.ndim != 2 or x.shape[1] != dim:
            raise ShapeError(f"view {v}: expected shape (n, {dim}), got {x.shape}")
        if x.shape[0] != n:
            raise ShapeError(f"view {v} has {x.shape[0]} rows, view 0 has {n}")
    return views


def encode(state: ModelState, batch: Sequence) -> list[Tensor]:
    """Run each view through its own encoder."""
    reps = []
    for v, x in enumerate(_as_views(state, batch)):
        z = x
        for l in range(len(state.spec.encoder_layers)):
            z = ad.relu(z @ state.params[f"enc{v}.{l}.weight"] + state.params[f"enc{v}.{l}.bias"])
        reps.append(z)
    return reps


def fusion_weights(logits: Tensor) -> Tensor:
    return ad.row_softmax(logits.reshape(1, -1)).reshape(-1)


def fuse(weights: Tensor, reps: Sequence[Tensor]) -> Tensor:
    """Weighted average of view representations; ``weights`` are the
    normalized fusion weights (see :func:`fusion_weights`)."""
    if len(reps) == 0:
        raise UsageError("fuse needs at least one representation")
    if weights.shape != (len(reps),):
        raise ShapeError(f"{len(reps)} representations but weights of shape {weights.shape}")
    fused = None
    for v, z in enumerate(reps):
        term = weights[v] * z
        fused = term if fused is None else fused + term
    return fused


def assign(state: ModelState, fused: Tensor, mode: str = "train") -> tuple[Tensor, Tensor]:
    """Clustering head: FC -> ReLU -> batch norm gives ``h``; FC -> softmax
    gives soft assignments ``alpha``.

    In train mode batch statistics are used and the running estimates are
    updated; in inference mode the running estimates are used, so every row is
    processed independently of the rest of the batch.
    """
    p = state.params
    pre = ad.relu(fused @ p["head.hidden.weight"] + p["head.hidden.bias"])
    n = pre.shape[0]
    if mode == "train":
        if n < 2:
            raise UsageError("train-mode batch norm needs at least 2 samples")
        mean = pre.mean(axis=0, keepdims=True)
        centered = pre - mean
        var = ad.square(centered).mean(axis=0, keepdims=True)
        normed = centered / ad.sqrt(var + BN_EPS)
        b = state.buffers
        batch_var = var.data.ravel() * n / (n - 1)
        b["head.bn.running_mean"] = (1 - BN_MOMENTUM) * b["head.bn.running_mean"] + BN_MOMENTUM * mean.data.ravel()
        b["head.bn.running_var"] = (1 - BN_MOMENTUM) * b["head.bn.running_var"] + BN_MOMENTUM * batch_var
    elif mode == "inference":
        rm = state.buffers["head.bn.running_mean"]
        rv = state.buffers["head.bn.running_var"]
        normed = (pre - rm) / np.sqrt(rv + BN_EPS)
    else:
        raise UsageError(f"mode must be 'train' or 'inference', got {mode!r}")
    h = normed * p["head.bn.gamma"] + p["head.bn.beta"]
    alpha = ad.row_softmax(h @ p["head.out.weight"] + p["head.out.bias"])
    return h, alpha


def forward(state: ModelState, batch: Sequence, mode: str = "train") -> Forward:
    reps = encode(state, batch)
    weights = state.fusion_weights()
    fused = fuse(weights, reps)
    h, alpha = assign(state, fused, mode)
    return Forward(reps, weights, fused, h, alpha)


def predict(state: ModelState, views: Sequence) -> tuple[np.ndarray, Forward]:
    """Inference-mode hard assignments for a full set of views."""
    out = forward(state, [np.asarray(x, dtype=np.float64) for x in views], mode="inference")
    return out.alpha.data.argmax(axis=1), out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _tensor_items(state: ModelState):
    for name, t in state.params.items():
        yield name, t.data
    for name, arr in state.buffers.items():
        yield name, arr


def checkpoint_bytes(state: ModelState, extra: dict | None = None) -> bytes:
    meta = {"spec": state.spec.to_dict()}
    if extra:
        meta["extra"] = extra
    meta_raw = json.dumps(meta, sort_keys=True).encode()
    items = list(_tensor_items(state))
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta_raw)))
    buf.write(meta_raw)
    buf.write(struct.pack("<I", len(items)))
    for name, arr in items:
        raw_name = name.encode()
        buf.write(struct.pack("<I", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(state: ModelState, path, extra: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(state, extra))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def read(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataFormatError(f"truncated checkpoint while reading {what}", self.pos)
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.read(4, what))[0]


def load_checkpoint_bytes(raw: bytes) -> tuple[ModelState, dict]:
    r = _Reader(raw)
    if r.read(4, "magic") != CHECKPOINT_MAGIC:
        raise DataFormatError("bad checkpoint magic", 0)
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", 4)
    meta_pos = r.pos
    try:
        meta = json.loads(r.read(r.u32("metadata length"), "metadata").decode())
        spec = ModelSpec.from_dict(meta["spec"])
    except (ValueError, KeyError) as exc:
        raise DataFormatError(f"bad checkpoint metadata: {exc}", meta_pos) from None
    template = init_model(spec, 0)
    expected = {name: arr.shape for name, arr in _tensor_items(template)}
    count = r.u32("tensor count")
    if count != len(expected):
        raise DataFormatError(f"checkpoint holds {count} tensors, architecture needs {len(expected)}", r.pos - 4)
    for _ in range(count):
        at = r.pos
        name = r.read(r.u32("name length"), "tensor name").decode(errors="replace")
        ndim = r.u32("ndim")
        shape = struct.unpack(f"<{ndim}I", r.read(4 * ndim, "shape"))
        if name not in expected or tuple(shape) != expected[name]:
            raise DataFormatError(f"unexpected tensor {name!r} with shape {shape}", at)
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.read(8 * size, f"tensor {name}"), dtype="<f8").astype(np.float64).reshape(shape)
        if name in template.params:
            template.params[name] = Tensor(arr, requires_grad=True)
        else:
            template.buffers[name] = arr
    if r.pos != len(raw):
        raise DataFormatError("trailing bytes after checkpoint payload", r.pos)
    template.training = False
    return template, meta.get("extra", {})


def load_checkpoint(path) -> tuple[ModelState, dict]:
    with open(path, "rb") as fh:
        return load_checkpoint_bytes(fh.read())
