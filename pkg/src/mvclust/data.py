"""Multi-view datasets: toy generators, noise corruption, file I/O, batching."""

from __future__ import annotations

import csv
import io
import json
import os
import struct
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import DataFormatError, UsageError

MVD_MAGIC = b"MVD1"
MVD_VERSION = 1


@dataclass(frozen=True)
class MultiViewDataset:
    views: tuple  # per-view float64 arrays of shape (n, d_v)
    labels: np.ndarray | None = None
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        views = tuple(np.ascontiguousarray(v, dtype=np.float64) for v in self.views)
        if not views:
            raise UsageError("a dataset needs at least one view")
        n = views[0].shape[0]
        for v, x in enumerate(views):
            if x.ndim != 2:
                raise UsageError(f"view {v} must be 2-D, got shape {x.shape}")
            if x.shape[0] != n:
                raise UsageError(f"view {v} has {x.shape[0]} rows, view 0 has {n}")
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise UsageError(f"labels must have shape ({n},), got {labels.shape}")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> tuple:
        return tuple(x.shape[1] for x in self.views)

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else int(self.labels.max()) + 1


# ---------------------------------------------------------------------------
# toy data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToySpec:
    """Gaussian clusters in two 2-D views.

    ``means[v][c]`` and ``covs[v][c]`` give cluster ``c`` in view ``v``.
    """

    means: tuple
    covs: tuple
    per_cluster: int = 200
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.means[0])


GROUP_SEPARATION = 6.0
_AXIS_STDS = (1.0, 0.25)


def _elongated_cov(angle: float, scale: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return scale * rot @ np.diag(np.square(_AXIS_STDS)) @ rot.T


def _layout(groups: Sequence[Sequence[int]], k: int) -> np.ndarray:
    """Place group centres on a circle of chord length GROUP_SEPARATION
    (on a segment for two groups) and give each cluster its group's centre."""
    g = len(groups)
    if g == 1:
        centres = np.zeros((1, 2))
    elif g == 2:
        centres = np.array([[-0.5, 0.0], [0.5, 0.0]]) * GROUP_SEPARATION
    else:
        radius = GROUP_SEPARATION / (2 * np.sin(np.pi / g))
        ang = 2 * np.pi * np.arange(g) / g + np.pi / 2
        centres = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    means = np.zeros((k, 2))
    for centre, members in zip(centres, groups):
        for c in members:
            means[c] = centre
    return means


TOY_PARTITIONS = {
    5: ([[0, 1, 2], [3, 4]], [[0], [1, 3], [2, 4]]),
    3: ([[0], [1, 2]], [[0, 1], [2]]),
}


def toy_spec(k: int = 5, per_cluster: int = 200, seed: int = 0, cov_scale: float = 1.0) -> ToySpec:
    """Default toy configuration.

    k=5: view 1 merges clusters (1,2,3) and (4,5); view 2 isolates cluster 1
    and merges (2,4) and (3,5).  k=3: view 1 isolates cluster 1 and merges
    (2,3); view 2 merges (1,2) and isolates 3.  Clusters sharing a centre are
    distinguished only by the orientation of their 4:1 ellipses.
    """
    if k not in TOY_PARTITIONS:
        raise UsageError(f"toy data is defined for k in {sorted(TOY_PARTITIONS)}, got {k}")
    means, covs = [], []
    for groups in TOY_PARTITIONS[k]:
        means.append(tuple(map(tuple, _layout(groups, k))))
        covs.append(tuple(_elongated_cov(np.pi * c / k, cov_scale) for c in range(k)))
    return ToySpec(means=tuple(means), covs=tuple(covs), per_cluster=per_cluster, seed=seed)


def generate_toy(spec: ToySpec) -> MultiViewDataset:
    rng = np.random.default_rng(spec.seed)
    k, m = spec.k, spec.per_cluster
    if m < 1:
        raise UsageError("per_cluster must be positive")
    views = []
    for v, (means, covs) in enumerate(zip(spec.means, spec.covs)):
        if len(means) != k or len(covs) != k:
            raise UsageError(f"view {v} must describe all {k} clusters")
        blocks = []
        for c, (mu, cov) in enumerate(zip(means, covs)):
            cov = np.asarray(cov, dtype=np.float64)
            if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
                raise UsageError(f"covariance of cluster {c} in view {v} is not a symmetric 2x2 matrix")
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise UsageError(f"covariance of cluster {c} in view {v} is not positive definite") from None
            blocks.append(np.asarray(mu) + rng.standard_normal((m, 2)) @ chol.T)
        views.append(np.vstack(blocks))
    labels = np.repeat(np.arange(k), m)
    return MultiViewDataset(tuple(views), labels, name=f"toy{k}", meta={"generator": "toy", "k": k,
                                                                           "per_cluster": m, "seed": spec.seed})


def corrupt_view(ds: MultiViewDataset, view_index: int, noise_std: float, seed: int) -> MultiViewDataset:
    """Copy of ``ds`` with i.i.d. Gaussian noise added to one view."""
    if not 0 <= view_index < ds.n_views:
        raise UsageError(f"view index {view_index} out of range for {ds.n_views} views")
    if noise_std < 0:
        raise UsageError("noise_std must be non-negative")
    views = list(ds.views)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        views[view_index] = views[view_index] + rng.normal(0.0, noise_std, size=views[view_index].shape)
    meta = dict(ds.meta, corrupted={"view": view_index, "std": noise_std, "seed": seed})
    return replace(ds, views=tuple(views), meta=meta)


# ---------------------------------------------------------------------------
# MVD1 binary format
# ---------------------------------------------------------------------------

def dumps_mvd(ds: MultiViewDataset) -> bytes:
    buf = io.BytesIO()
    buf.write(MVD_MAGIC)
    buf.write(struct.pack("<III", MVD_VERSION, ds.n, ds.n_views))
    buf.write(struct.pack(f"<{ds.n_views}I", *ds.dims))
    buf.write(struct.pack("<B", 1 if ds.labels is not None else 0))
    for x in ds.views:
        buf.write(x.astype("<f8").tobytes())
    if ds.labels is not None:
        buf.write(ds.labels.astype("<u4").tobytes())
    return buf.getvalue()


def loads_mvd(raw: bytes, name: str = "dataset") -> MultiViewDataset:
    pos = 0

    def take(nbytes, what):
        nonlocal pos
        if pos + nbytes > len(raw):
            raise DataFormatError(f"truncated MVD1 data while reading {what}", pos)
        out = raw[pos:pos + nbytes]
        pos += nbytes
        return out

    if take(4, "magic") != MVD_MAGIC:
        raise DataFormatError("bad magic, expected MVD1", 0)
    version, n, n_views = struct.unpack("<III", take(12, "header"))
    if version != MVD_VERSION:
        raise DataFormatError(f"unsupported MVD1 version {version}", 4)
    if n_views < 1:
        raise DataFormatError("dataset declares zero views", 12)
    dims = struct.unpack(f"<{n_views}I", take(4 * n_views, "view dimensions"))
    flag_at = pos
    has_labels = take(1, "label flag")[0]
    if has_labels not in (0, 1):
        raise DataFormatError(f"label flag must be 0 or 1, got {has_labels}", flag_at)
    views = []
    for v, d in enumerate(dims):
        block = take(8 * n * d, f"view {v}")
        views.append(np.frombuffer(block, dtype="<f8").astype(np.float64).reshape(n, d))
    labels = None
    if has_labels:
        labels = np.frombuffer(take(4 * n, "labels"), dtype="<u4").astype(np.int64)
    if pos != len(raw):
        raise DataFormatError("trailing bytes after MVD1 payload", pos)
    return MultiViewDataset(tuple(views), labels, name=name, meta={"source": name})


def save(ds: MultiViewDataset, path) -> None:
    """Write ``ds`` as MVD1 (CSV export goes through :func:`save_csv`)."""
    with open(path, "wb") as fh:
        fh.write(dumps_mvd(ds))


def save_csv(ds: MultiViewDataset, manifest_path) -> None:
    """Write one CSV per view plus a JSON manifest next to them."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    stem = os.path.splitext(os.path.basename(manifest_path))[0]
    entries = []
    for v, x in enumerate(ds.views):
        fname = f"{stem}_view{v}.csv"
        np.savetxt(os.path.join(base, fname), x, delimiter=",", fmt="%.17g")
        entries.append({"path": fname, "dim": int(x.shape[1])})
    manifest = {"name": ds.name, "views": entries}
    if ds.labels is not None:
        fname = f"{stem}_labels.csv"
        np.savetxt(os.path.join(base, fname), ds.labels, fmt="%d")
        manifest["labels"] = fname
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)


def _read_csv(path: str, dim: int | None, what: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    try:
        arr = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"{what} ({path}): {exc}") from None
    if arr.ndim == 1:
        arr = arr.reshape(len(rows), -1)
    if dim is not None and arr.shape[1] != dim:
        raise DataFormatError(f"{what} ({path}) has {arr.shape[1]} columns, manifest says {dim}")
    return arr


def load_csv_manifest(path) -> MultiViewDataset:
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest {path} is not valid JSON: {exc.msg}", exc.pos) from None
    if "views" not in manifest or not manifest["views"]:
        raise DataFormatError(f"manifest {path} lists no views")
    views = []
    for v, entry in enumerate(manifest["views"]):
        vpath = os.path.join(base, entry["path"])
        if not os.path.exists(vpath):
            raise FileNotFoundError(f"manifest {path} references missing file {vpath}")
        views.append(_read_csv(vpath, entry.get("dim"), f"view {v}"))
    labels = None
    if manifest.get("labels"):
        lpath = os.path.join(base, manifest["labels"])
        if not os.path.exists(lpath):
            raise FileNotFoundError(f"manifest {path} references missing file {lpath}")
        labels = _read_csv(lpath, 1, "labels").ravel().astype(np.int64)
    try:
        return MultiViewDataset(tuple(views), labels, name=manifest.get("name", "dataset"), meta={"source": str(path)})
    except UsageError as exc:
        raise DataFormatError(str(exc)) from None


def load(path, format: str | None = None) -> MultiViewDataset:
    """Load MVD1 (``format='mvd1'``) or a CSV manifest (``format='csv'``).
    Without ``format`` the file's first bytes decide."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if format is None:
        format = "mvd1" if head == MVD_MAGIC else "csv"
    if format == "mvd1":
        with open(path, "rb") as fh:
            return loads_mvd(fh.read(), name=os.path.basename(path))
    if format == "csv":
        return load_csv_manifest(path)
    raise UsageError(f"unknown dataset format {format!r}")


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def batch_indices(n: int, batch_size: int, seed: int, epoch: int, train: bool = True) -> list[np.ndarray]:
    if batch_size < 2:
        raise UsageError("batch_size must be at least 2")
    if batch_size > n:
        raise UsageError(f"batch_size {batch_size} exceeds dataset size {n}")
    if not train:
        return [np.arange(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    order = np.random.default_rng([seed, epoch]).permutation(n)
    full = n // batch_size
    return [order[b * batch_size:(b + 1) * batch_size] for b in range(full)]


def batches(ds: MultiViewDataset, batch_size: int, seed: int, epoch: int, train: bool = True) -> Iterator[list]:
    """Per-view arrays for each batch.  Training shuffles per (seed, epoch)
    and drops the final partial batch; evaluation keeps order and all rows."""
    for idx in batch_indices(ds.n, batch_size, seed, epoch, train):
        yield [x[idx] for x in ds.views]
