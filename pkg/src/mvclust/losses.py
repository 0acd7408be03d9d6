"""DDC clustering loss and the selective contrastive loss.

The DDC terms are built on a Gaussian kernel over the hidden representation
``h``; the kernel bandwidth is recomputed for every batch and treated as a
constant.  The contrastive loss compares cosine similarities of view
representations, drawing negatives only from objects that the clustering
head currently places in a different cluster.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import UsageError

DENOM_FLOOR = 1e-12
SIGMA_FLOOR = 1e-9


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.1
    delta: float = 0.1
    negatives: int = 25
    negative_sampling: bool = True
    adaptive_weight: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise UsageError(f"tau must be positive, got {self.tau}")
        if self.delta < 0:
            raise UsageError(f"delta must be non-negative, got {self.delta}")
        if self.negatives < 1:
            raise UsageError(f"negatives must be at least 1, got {self.negatives}")


@dataclass
class LossBreakdown:
    l1: Tensor
    l2: Tensor
    l3: Tensor
    cluster: Tensor
    contrastive: Tensor
    gate: float
    total: Tensor

    def values(self) -> dict:
        return {
            "L1": self.l1.item(),
            "L2": self.l2.item(),
            "L3": self.l3.item(),
            "L_cluster": self.cluster.item(),
            "L_contrastive": self.contrastive.item(),
            "gate": float(self.gate),
            "L": self.total.item(),
        }


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def compute_sigma(h, rel: float = 0.15) -> float:
    """Bandwidth as ``rel`` times the median pairwise distance between rows."""
    x = h.data if isinstance(h, Tensor) else np.asarray(h, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise UsageError("compute_sigma needs at least 2 rows")
    sq = np.einsum("ij,ij->i", x, x)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    iu = np.triu_indices(n, k=1)
    median = float(np.median(np.sqrt(d2[iu])))
    sigma = rel * median
    return sigma if sigma > 0 else SIGMA_FLOOR


def gaussian_kernel(h, sigma: float) -> Tensor:
    if sigma <= 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    return ad.exp(ad.scalar_mul(ad.pairwise_sq_dists(h), -1.0 / (2.0 * sigma * sigma)))


# ---------------------------------------------------------------------------
# DDC terms
# ---------------------------------------------------------------------------

def _cauchy_schwarz(a: Tensor, kappa: Tensor) -> Tensor:
    k = a.shape[1]
    if k < 2:
        raise UsageError(f"need at least 2 clusters, got {k}")
    inner = (a.T @ kappa) @ a
    diag_idx = np.arange(k)
    d = inner[diag_idx, diag_idx]
    prod = d.reshape(k, 1) * d.reshape(1, k)
    ratio = inner / ad.sqrt(ad.clamp_min(prod, DENOM_FLOOR * DENOM_FLOOR))
    upper = np.triu(np.ones((k, k)), k=1) / comb(k, 2)
    return (ratio * upper).sum()


def simplex_affinity(alpha) -> Tensor:
    """m_ij = exp(-||alpha_i - e_j||^2)."""
    alpha = ad.as_tensor(alpha)
    sqnorm = ad.square(alpha).sum(axis=1, keepdims=True)
    return ad.exp(ad.negate(sqnorm - ad.scalar_mul(alpha, 2.0) + 1.0))


def ddc_l1(alpha, kappa) -> Tensor:
    return _cauchy_schwarz(ad.as_tensor(alpha), ad.as_tensor(kappa))


def ddc_l2(alpha) -> Tensor:
    alpha = ad.as_tensor(alpha)
    n = alpha.shape[0]
    if n < 2:
        raise UsageError("ddc_l2 needs at least 2 objects")
    # summing the strict upper triangle keeps every term non-negative; the
    # (sum^2 - sum of squares) / 2 shortcut can cancel to slightly below 0
    upper = np.triu(np.ones((n, n)), k=1) / comb(n, 2)
    return ((alpha @ alpha.T) * upper).sum()


def ddc_l3(alpha, kappa) -> Tensor:
    return _cauchy_schwarz(simplex_affinity(alpha), ad.as_tensor(kappa))


# ---------------------------------------------------------------------------
# contrastive
# ---------------------------------------------------------------------------

def cosine_similarities(reps: Sequence) -> Tensor:
    """All cross-view cosine similarities, shape (V, V, n, n); entry
    [v, u, i, j] compares view v of object i with view u of object j."""
    reps = [ad.as_tensor(z) for z in reps]
    n_views, n = len(reps), reps[0].shape[0]
    z = ad.concat(reps, axis=0)
    norms = ad.sqrt(ad.clamp_min(ad.square(z).sum(axis=1, keepdims=True), DENOM_FLOOR * DENOM_FLOOR))
    zn = z / norms
    sims = (zn @ zn.T).reshape(n_views, n, n_views, n)
    return ad.transpose(sims, (0, 2, 1, 3))


def cluster_labels(alpha) -> np.ndarray:
    a = alpha.data if isinstance(alpha, Tensor) else np.asarray(alpha)
    return a.argmax(axis=1)


def _pool_mask(alpha, sampling: bool) -> np.ndarray:
    labels = cluster_labels(alpha)
    n = labels.shape[0]
    other = ~np.eye(n, dtype=bool)
    if not sampling:
        return other
    return other & (labels[:, None] != labels[None, :])


def build_negative_pool(alpha, n_views: int, negative_sampling: bool = True) -> list[np.ndarray]:
    """Per object ``i``, every (j, u, v) with j != i whose similarity
    s_ij^(uv) is a legal negative.  With ``negative_sampling`` off the pool
    holds all views of all other objects."""
    mask = _pool_mask(alpha, negative_sampling)
    uv = np.array([(u, v) for u in range(n_views) for v in range(n_views)], dtype=np.intp).reshape(-1, 2)
    pools = []
    for i in range(mask.shape[0]):
        js = np.flatnonzero(mask[i])
        triples = np.column_stack([np.repeat(js, len(uv)), np.tile(uv, (len(js), 1))]) if len(js) else np.empty((0, 3), np.intp)
        pools.append(triples.astype(np.intp))
    return pools


def sample_negatives(alpha, n_views: int, cfg: ContrastiveConfig, rng: np.random.Generator):
    """Draw the negative set for each positive pair.

    Returns ``(rows, negs)``: ``rows`` is (R, 3) of (i, u, v) positive pairs
    with a non-empty pool, ``negs`` is (R, m, 3) of (j, a, b) negatives.
    Pools at least ``cfg.negatives`` large are sampled without replacement,
    smaller ones with replacement; with sampling disabled every pool entry is
    used.
    """
    mask = _pool_mask(alpha, cfg.negative_sampling)
    n = mask.shape[0]
    vv = n_views * n_views
    pairs = [(u, v) for u in range(n_views) for v in range(n_views) if u != v]
    counts = mask.sum(axis=1)
    objs = np.flatnonzero(counts > 0)
    rows = np.array([(i, u, v) for i in objs for (u, v) in pairs], dtype=np.intp).reshape(-1, 3)
    if len(rows) == 0:
        return rows, np.empty((0, 0, 3), np.intp)

    # candidate c in [0, n*V*V) encodes j = c // V^2, (a, b) = divmod(c % V^2, V)
    if not cfg.negative_sampling:
        # every pool has (n - 1) * V^2 entries here
        flat = np.stack([np.flatnonzero(np.repeat(mask[i], vv)) for i in rows[:, 0]])
    else:
        m = cfg.negatives
        valid = np.repeat(mask[rows[:, 0]], vv, axis=1)
        sizes = valid.sum(axis=1)
        keys = rng.random(valid.shape)
        keys[~valid] = np.inf
        flat = np.empty((len(rows), m), dtype=np.intp)
        big = sizes >= m
        if big.any():
            picked = np.argpartition(keys[big], m - 1, axis=1)[:, :m] if valid.shape[1] > m else np.argsort(keys[big], axis=1)
            flat[big] = np.sort(picked, axis=1)
        for r in np.flatnonzero(~big):
            options = np.flatnonzero(valid[r])
            flat[r] = options[rng.integers(0, len(options), size=m)]
    j, ab = np.divmod(flat, vv)
    a, b = np.divmod(ab, n_views)
    return rows, np.stack([j, a, b], axis=-1)


def contrastive_loss(reps: Sequence, alpha, cfg: ContrastiveConfig, rng: np.random.Generator,
                     return_samples: bool = False):
    """Generalized NT-Xent over all ordered view pairs.

    l_i^(uv) = -s_ii^(uv)/tau + log sum_{s' in Neg} exp(s'/tau), with the
    positive similarity kept out of the denominator.  Pairs whose pool is empty
    are skipped and not counted in the average.
    """
    n_views = len(reps)
    if n_views < 2:
        raise UsageError("contrastive loss needs at least 2 views")
    sims = cosine_similarities(reps)
    n = sims.shape[2]
    rows, negs = sample_negatives(alpha, n_views, cfg, rng)
    if len(rows) == 0:
        loss = Tensor(0.0)
    else:
        i, u, v = rows.T
        pos_idx = ((u * n_views + v) * n + i) * n + i
        ii = i[:, None]
        neg_idx = ((negs[..., 1] * n_views + negs[..., 2]) * n + ii) * n + negs[..., 0]
        pos = ad.take(sims, pos_idx)
        neg = ad.take(sims, neg_idx)
        inv_tau = 1.0 / cfg.tau
        per_pair = ad.logsumexp(ad.scalar_mul(neg, inv_tau), axis=1) - ad.scalar_mul(pos, inv_tau)
        loss = per_pair.mean()
    if return_samples:
        return loss, (rows, negs)
    return loss


# ---------------------------------------------------------------------------
# total
# ---------------------------------------------------------------------------

def total_loss(l1: Tensor, l2: Tensor, l3: Tensor, contrastive: Tensor | None, weights: Tensor,
               cfg: ContrastiveConfig | None, terms=(True, True, True), gate: float | None = None) -> LossBreakdown:
    """Combine the terms.  ``contrastive=None`` gives the SiMVC loss.

    The gate is min(w) taken outside the graph (or 1 when the adaptive
    weight is disabled); passing ``gate`` overrides it.
    """
    if not any(terms):
        raise UsageError("at least one clustering term must be enabled")
    cluster = None
    for on, term in zip(terms, (l1, l2, l3)):
        if on:
            cluster = term if cluster is None else cluster + term
    if contrastive is None or cfg is None:
        return LossBreakdown(l1, l2, l3, cluster, Tensor(0.0), 0.0, cluster)
    if gate is None:
        gate = ad.detach(weights).min().item() if cfg.adaptive_weight else 1.0
    total = cluster + ad.scalar_mul(contrastive, cfg.delta * gate)
    return LossBreakdown(l1, l2, l3, cluster, contrastive, gate, total)


def loss_breakdown(fwd, cfg: ContrastiveConfig | None, rng: np.random.Generator | None = None,
                   terms=(True, True, True), sigma: float | None = None, gate: float | None = None,
                   sigma_rel: float = 0.15) -> LossBreakdown:
    """All losses for one forward pass (a :class:`mvclust.model.Forward`).

    ``cfg=None`` selects SiMVC.  ``sigma`` and ``gate`` may be pinned to fixed
    values, which is how finite-difference checks hold the non-differentiated
    quantities constant.
    """
    if sigma is None:
        sigma = compute_sigma(fwd.hidden, sigma_rel)
    kappa = gaussian_kernel(fwd.hidden, sigma)
    l1 = ddc_l1(fwd.alpha, kappa)
    l2 = ddc_l2(fwd.alpha)
    l3 = ddc_l3(fwd.alpha, kappa)
    contrastive = None
    if cfg is not None:
        if rng is None:
            raise UsageError("contrastive loss needs an rng")
        contrastive = contrastive_loss(fwd.reps, fwd.alpha, cfg, rng)
    return total_loss(l1, l2, l3, contrastive, fwd.weights, cfg, terms, gate)
