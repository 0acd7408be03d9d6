"""Training loop, best-of-N protocol, noise sweep and ablation grids."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import MultiViewDataset, batches, corrupt_view
from .errors import DomainError, ShapeError, TrainingError, UsageError
from .losses import ContrastiveConfig, loss_breakdown
from .metrics import NMI_NORMALIZATION, acc, nmi
from .model import INIT_SCHEME, ModelSpec, ModelState, forward, init_model, predict

logger = logging.getLogger(__name__)

TERM_NAMES = ("L1", "L2", "L3")


_FIELD_TYPES = {
    "mode": str, "batch_size": int, "epochs": int, "lr": (int, float), "beta1": (int, float),
    "beta2": (int, float), "adam_eps": (int, float), "max_grad_norm": (int, float), "decay_step": int,
    "decay_factor": (int, float), "runs": int, "seed": int, "sigma_rel": (int, float), "n_clusters": int,
    "hidden": int,
}
_CONTRASTIVE_TYPES = {"tau": (int, float), "delta": (int, float), "negatives": int,
                      "negative_sampling": bool, "adaptive_weight": bool}


def _contrastive_from_dict(cc) -> ContrastiveConfig:
    if not isinstance(cc, dict):
        raise UsageError(f"contrastive settings must be a mapping, got {cc!r}")
    unknown = set(cc) - set(_CONTRASTIVE_TYPES)
    if unknown:
        raise UsageError(f"unknown contrastive config keys: {sorted(unknown)}")
    for name, value in cc.items():
        kind = _CONTRASTIVE_TYPES[name]
        if (isinstance(value, bool) and kind is not bool) or not isinstance(value, kind):
            raise UsageError(f"contrastive field {name!r} has invalid value {value!r}")
    return ContrastiveConfig(**cc)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "simvc"
    batch_size: int = 100
    epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float = 5.0
    decay_step: int | None = None
    decay_factor: float = 0.1
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    runs: int = 20
    seed: int = 0
    terms: tuple = (True, True, True)
    sigma_rel: float = 0.15
    n_clusters: int | None = None
    encoder_layers: tuple = (512, 512, 256)
    hidden: int = 100

    def __post_init__(self):
        for name, kind in _FIELD_TYPES.items():
            value = getattr(self, name)
            if value is None and name in ("decay_step", "n_clusters"):
                continue
            if isinstance(value, bool) or not isinstance(value, kind):
                raise UsageError(f"config field {name!r} has invalid value {value!r}")
        if not isinstance(self.terms, (list, tuple)) or not all(isinstance(t, bool) for t in self.terms):
            raise UsageError(f"terms must be a list of three booleans, got {self.terms!r}")
        if not isinstance(self.encoder_layers, (list, tuple)) or not all(
                isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in self.encoder_layers):
            raise UsageError(f"encoder_layers must be a list of positive widths, got {self.encoder_layers!r}")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "encoder_layers", tuple(self.encoder_layers))
        if isinstance(self.contrastive, dict):
            object.__setattr__(self, "contrastive", _contrastive_from_dict(self.contrastive))
        if self.mode not in ("simvc", "comvc"):
            raise UsageError(f"mode must be 'simvc' or 'comvc', got {self.mode!r}")
        if len(self.terms) != 3 or not any(self.terms):
            raise UsageError("terms must be three flags with at least one enabled")
        if self.epochs < 1 or self.runs < 1:
            raise UsageError("epochs and runs must be at least 1")
        if self.batch_size < 2:
            raise UsageError("batch_size must be at least 2")
        if self.lr < 0 or self.max_grad_norm <= 0:
            raise UsageError("lr must be non-negative and max_grad_norm positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["terms"] = list(self.terms)
        d["encoder_layers"] = list(self.encoder_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "contrastive" in d:
            d["contrastive"] = _contrastive_from_dict(d["contrastive"])
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def model_spec(self, ds: MultiViewDataset) -> ModelSpec:
        k = self.n_clusters if self.n_clusters is not None else ds.n_classes
        if k is None:
            raise UsageError("n_clusters must be configured for unlabelled data")
        return ModelSpec(ds.dims, k, self.encoder_layers, self.hidden)


_LITERALS = {"none": None, "null": None, "true": True, "false": False}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in _LITERALS:
        return _LITERALS[raw.lower()]
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str) -> TrainConfig:
    """Build a TrainConfig from ``key = value`` lines.

    Values are JSON literals (bare words are strings; ``none``/``true``/
    ``false`` in any case are accepted).  ``contrastive.<field>`` sets a
    contrastive option.  A document starting with ``{`` is read as JSON.
    """
    if text.lstrip().startswith("{"):
        return TrainConfig.from_dict(json.loads(text))
    d: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        value = _parse_value(raw)
        if key.startswith("contrastive."):
            d.setdefault("contrastive", {})[key.split(".", 1)[1]] = value
        else:
            d[key] = value
    return TrainConfig.from_dict(d)


def format_config_text(cfg: TrainConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if key == "contrastive":
            lines += [f"contrastive.{k} = {json.dumps(v)}" for k, v in value.items()]
        else:
            lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    epochs: list = field(default_factory=list)  # per-epoch mean loss values
    fusion_weights: list = field(default_factory=list)
    weight_trace: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)  # per epoch: max pre-clip, max post-clip
    metrics: dict | None = None
    score: float | None = None
    aborted: bool = False
    abort_reason: str | None = None
    selected: bool = False
    init: str = INIT_SCHEME
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.
    A ``None`` gradient is treated as zero."""
    if not len(params) == len(grads) == len(state.m):
        raise UsageError("params, grads and optimizer state differ in length")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    root_c2 = math.sqrt(1.0 - beta2 ** state.t)
    # (m / c1) / (sqrt(v / c2) + eps) rearranged to save passes over memory
    step_size = lr * root_c2 / c1
    eps_hat = eps * root_c2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam: parameter {p.shape}, gradient {g.shape}, state {m.shape}")
        m *= beta1
        tmp = g * (1.0 - beta1)
        m += tmp
        v *= beta2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - beta2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp += eps_hat
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p -= tmp


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def selection_score(epoch_means: dict, terms: Sequence[bool]) -> float:
    """Final-epoch L1 when L1 is trained, otherwise the sum of trained terms."""
    if terms[0]:
        return epoch_means["L1"]
    return sum(epoch_means[name] for name, on in zip(TERM_NAMES, terms) if on)


def evaluate(state: ModelState, ds: MultiViewDataset) -> dict:
    """Inference-mode predictions, fusion weights and (with labels) ACC/NMI."""
    pred, out = predict(state, ds.views)
    result = {"pred": pred, "fusion_weights": out.weights.data.tolist()}
    if ds.labels is not None:
        result["acc"] = acc(pred, ds.labels)
        result["nmi"] = nmi(pred, ds.labels)
        result["nmi_normalization"] = NMI_NORMALIZATION
    return result


def train_once(cfg: TrainConfig, ds: MultiViewDataset, seed: int) -> tuple[ModelState, RunRecord]:
    spec = cfg.model_spec(ds)
    if cfg.mode == "comvc" and ds.n_views < 2:
        raise UsageError("CoMVC needs at least two views")
    start = time.perf_counter()
    state = init_model(spec, seed)
    params = state.parameters()
    opt = AdamState.zeros_like([p.data for p in params])
    sample_rng = np.random.default_rng([seed, 1])
    ccfg = cfg.contrastive if cfg.mode == "comvc" else None
    record = RunRecord(seed=seed, config_hash=cfg.config_hash())

    for epoch in range(cfg.epochs):
        lr = cfg.lr
        if cfg.decay_step is not None and epoch >= cfg.decay_step:
            lr *= cfg.decay_factor
        sums: dict[str, float] = {}
        n_batches = 0
        max_pre = max_post = 0.0
        for batch in batches(ds, cfg.batch_size, seed, epoch, train=True):
            try:
                fwd = forward(state, batch, mode="train")
                lb = loss_breakdown(fwd, ccfg, sample_rng, cfg.terms, sigma_rel=cfg.sigma_rel)
                values = lb.values()
                reason = None if all(math.isfinite(x) for x in values.values()) else f"non-finite loss {values}"
            except DomainError as exc:
                reason = f"non-finite values in forward pass ({exc})"
            if reason is not None:
                record.aborted = True
                record.abort_reason = f"epoch {epoch}, batch {n_batches}: {reason}"
                logger.warning("run with seed %d aborted: %s", seed, record.abort_reason)
                record.wall_time = time.perf_counter() - start
                return state, record
            state.zero_grad()
            ad.backward(lb.total)
            pre = ad.clip_global_norm(params, cfg.max_grad_norm)
            post = math.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in params if p.grad is not None))
            max_pre, max_post = max(max_pre, pre), max(max_post, post)
            adam_step([p.data for p in params], [p.grad for p in params], opt, lr,
                      cfg.beta1, cfg.beta2, cfg.adam_eps)
            for key, val in values.items():
                sums[key] = sums.get(key, 0.0) + val
            n_batches += 1
        means = {key: val / n_batches for key, val in sums.items()}
        record.epochs.append(means)
        record.grad_norms.append([max_pre, max_post])
        record.weight_trace.append(state.fusion_weights().data.tolist())

    state.training = False
    ev = evaluate(state, ds)
    record.fusion_weights = ev["fusion_weights"]
    if "acc" in ev:
        record.metrics = {"acc": ev["acc"], "nmi": ev["nmi"], "nmi_normalization": ev["nmi_normalization"]}
    record.score = selection_score(record.epochs[-1], cfg.terms)
    record.wall_time = time.perf_counter() - start
    return state, record


def select_best(records: Sequence[RunRecord]) -> int:
    """Index of the non-aborted record with the lowest score (first on ties)."""
    best = None
    for i, rec in enumerate(records):
        if rec.aborted or rec.score is None or not math.isfinite(rec.score):
            continue
        if best is None or rec.score < records[best].score:
            best = i
    if best is None:
        raise TrainingError("every run aborted; nothing to select")
    return best


def train_protocol(cfg: TrainConfig, ds: MultiViewDataset) -> tuple[ModelState, list[RunRecord]]:
    """``cfg.runs`` independent runs with seeds ``cfg.seed + r``; returns the
    model of the run with the lowest selection score and every record."""
    records: list[RunRecord] = []
    best_state, best_score = None, math.inf
    for r in range(cfg.runs):
        state, rec = train_once(cfg, ds, cfg.seed + r)
        records.append(rec)
        logger.info("run %d/%d seed=%d score=%s metrics=%s weights=%s", r + 1, cfg.runs, rec.seed,
                    rec.score, rec.metrics, np.round(rec.fusion_weights, 3).tolist() if rec.fusion_weights else None)
        if not rec.aborted and rec.score < best_score:
            best_state, best_score = state, rec.score
    try:
        idx = select_best(records)
    except TrainingError as exc:
        raise TrainingError(str(exc), records) from None
    records[idx].selected = True
    return best_state, records


def records_document(cfg: TrainConfig, records: Sequence[RunRecord], dataset: str = "") -> dict:
    idx = next((i for i, r in enumerate(records) if r.selected), None)
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "dataset": dataset,
        "selected": idx,
        "runs": [r.to_dict() for r in records],
    }


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def view_std(ds: MultiViewDataset, view: int) -> float:
    """Mean per-feature standard deviation of one view."""
    return float(ds.views[view].std(axis=0).mean())


def noise_sweep(cfg: TrainConfig, ds: MultiViewDataset, view: int, stds: Sequence[float],
                noise_seed: int | None = None) -> list[dict]:
    """Train the full protocol on copies of ``ds`` with increasing Gaussian
    noise on ``view``; one row per noise level."""
    if len(stds) == 0:
        raise UsageError("stds must be non-empty")
    noise_seed = cfg.seed if noise_seed is None else noise_seed
    rows = []
    for std in stds:
        noisy = corrupt_view(ds, view, float(std), noise_seed)
        _, records = train_protocol(cfg, noisy)
        best = records[select_best(records)]
        rows.append({
            "std": float(std),
            "fusion_weights": best.fusion_weights,
            "noisy_weight": best.fusion_weights[view],
            "acc": None if best.metrics is None else best.metrics["acc"],
            "nmi": None if best.metrics is None else best.metrics["nmi"],
            "seed": best.seed,
            "score": best.score,
        })
    return rows


def contrastive_ablation(cfg: TrainConfig, ds: MultiViewDataset) -> list[dict]:
    """CoMVC with negative sampling and the adaptive weight switched on/off."""
    rows = []
    for sampling, adaptive in product((False, True), repeat=2):
        cc = replace(cfg.contrastive, negative_sampling=sampling, adaptive_weight=adaptive)
        rows.append(_ablation_row(replace(cfg, mode="comvc", contrastive=cc), ds,
                                  {"negative_sampling": sampling, "adaptive_weight": adaptive}))
    return rows


LOSS_TERM_GRID = (
    (True, False, False), (False, True, False), (False, False, True),
    (True, True, False), (True, False, True), (False, True, True), (True, True, True),
)


def loss_term_ablation(cfg: TrainConfig, ds: MultiViewDataset, modes: Sequence[str] = ("simvc", "comvc")) -> list[dict]:
    """The seven non-empty subsets of {L1, L2, L3}, per model."""
    rows = []
    for mode in modes:
        for terms in LOSS_TERM_GRID:
            rows.append(_ablation_row(replace(cfg, mode=mode, terms=terms), ds,
                                      {"model": mode, **dict(zip(TERM_NAMES, terms))}))
    return rows


def _ablation_row(cfg: TrainConfig, ds: MultiViewDataset, toggles: dict) -> dict:
    _, records = train_protocol(cfg, ds)
    best = records[select_best(records)]
    return {**toggles,
            "acc": None if best.metrics is None else best.metrics["acc"],
            "nmi": None if best.metrics is None else best.metrics["nmi"],
            "score": best.score,
            "fusion_weights": best.fusion_weights}
