"""Cluster-count bounds after fusion in the idealized multi-view setting.

Each view collapses the ``k`` ground-truth clusters into ``k_v`` distinct
input points (a partition of the clusters).  Encoders map those points to
representation ids; fusion with distinct weights keeps distinct id tuples
apart.  Without alignment the achievable count is the size of the common
refinement of the view partitions; with perfectly aligned (equal-mass)
representation distributions every view must use the same ids with the same
cluster counts per id.

The closed forms ``min(k, min(k_v)^V)`` and ``min(k, prod k_v)`` are upper
bounds; :func:`brute_force_kappa` enumerates labelings to get the exact
achievable value for small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import prod
from typing import Iterator, Sequence

from .errors import PropositionViolation, UsageError

MAX_K = 6
MAX_VIEWS = 3


def _check_counts(k: int, kv: Sequence[int]) -> None:
    if len(kv) == 0:
        raise UsageError("need at least one view count")
    if k < 1 or any(not 1 <= c <= k for c in kv):
        raise UsageError(f"view counts must lie in [1, k={k}], got {list(kv)}")


def kappa_aligned(k: int, kv: Sequence[int]) -> int:
    _check_counts(k, kv)
    return min(k, min(kv) ** len(kv))


def kappa_unaligned(k: int, kv: Sequence[int]) -> int:
    _check_counts(k, kv)
    return min(k, prod(kv))


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------

def set_partitions(k: int) -> Iterator[tuple]:
    """All partitions of {0..k-1} as restricted growth strings: entry c is
    the block index of element c, blocks numbered in order of first use."""
    if k == 0:
        yield ()
        return
    rgs = [0] * k

    def rec(pos, used):
        if pos == k:
            yield tuple(rgs)
            return
        for b in range(used + 1):
            rgs[pos] = b
            yield from rec(pos + 1, max(used, b + 1))

    yield from rec(1, 1)


def _canonical(labels: Sequence[int]) -> tuple:
    seen: dict = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


@dataclass(frozen=True)
class ViewPartitions:
    """``k`` clusters and, per view, a block label for every cluster."""

    k: int
    views: tuple

    def __post_init__(self):
        views = tuple(_canonical(v) for v in self.views)
        if not views:
            raise UsageError("need at least one view partition")
        for v in views:
            if len(v) != self.k:
                raise UsageError(f"each partition must label all {self.k} clusters, got {len(v)}")
        object.__setattr__(self, "views", views)

    @classmethod
    def from_blocks(cls, k: int, blocks_per_view: Sequence[Sequence[Sequence[int]]]) -> "ViewPartitions":
        views = []
        for blocks in blocks_per_view:
            labels = [None] * k
            for b, members in enumerate(blocks):
                for c in members:
                    if not 0 <= c < k or labels[c] is not None:
                        raise UsageError(f"blocks {blocks} are not a partition of range({k})")
                    labels[c] = b
            if None in labels:
                raise UsageError(f"blocks {blocks} do not cover range({k})")
            views.append(tuple(labels))
        return cls(k, tuple(views))

    @property
    def counts(self) -> tuple:
        return tuple(max(v) + 1 for v in self.views)

    def blocks(self, view: int) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.counts[view])]
        for c, b in enumerate(self.views[view]):
            out[b].append(c)
        return out


def meet_size(parts: ViewPartitions) -> int:
    """Number of blocks in the common refinement of all view partitions."""
    return len(set(zip(*parts.views)))


TOY5 = ViewPartitions.from_blocks(5, [[[0, 1, 2], [3, 4]], [[0], [1, 3], [2, 4]]])
TOY3 = ViewPartitions.from_blocks(3, [[[0], [1, 2]], [[0, 1], [2]]])


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------

@dataclass
class KappaResult:
    kappa_aligned: int
    kappa_unaligned: int
    brute_aligned: int | None = None
    brute_unaligned: int | None = None
    witness_aligned: tuple | None = None
    witness_unaligned: tuple | None = None


def _distinct(parts: ViewPartitions, labelings: Sequence[Sequence[int]]) -> int:
    # labelings[v][b] is the id of block b in view v
    return len({tuple(lab[blk[c]] for lab, blk in zip(labelings, parts.views)) for c in range(parts.k)})


def _labelings_with_profile(sizes: Sequence[int], capacity: list, n_ids: int) -> Iterator[tuple]:
    """Assign an id to each block so that the cluster count per id matches
    ``capacity`` exactly."""
    out = [0] * len(sizes)

    def rec(b):
        if b == len(sizes):
            if not any(capacity):
                yield tuple(out)
            return
        s = sizes[b]
        for i in range(n_ids):
            if capacity[i] >= s:
                capacity[i] -= s
                out[b] = i
                yield from rec(b + 1)
                capacity[i] += s

    yield from rec(0)


def brute_force_kappa(parts: ViewPartitions, aligned: bool) -> tuple[int, tuple]:
    """Largest number of distinct fused points over all encoder labelings,
    with one labeling that attains it.

    A labeling gives every block of every view an id in ``range(k)``.  Under
    ``aligned`` each id must carry the same number of ground-truth clusters
    in every view.
    """
    k, n_views = parts.k, len(parts.views)
    if k > MAX_K or n_views > MAX_VIEWS:
        raise UsageError(f"exhaustive search is limited to k <= {MAX_K} and V <= {MAX_VIEWS}")
    block_sizes = [[len(b) for b in parts.blocks(v)] for v in range(n_views)]
    best, witness = 0, None

    # ids are interchangeable, so view 0 is enumerated up to relabeling
    for first in set_partitions(len(block_sizes[0])):
        if aligned:
            profile = [0] * k
            for b, i in enumerate(first):
                profile[i] += block_sizes[0][b]
            options = [list(_labelings_with_profile(sizes, list(profile), k)) for sizes in block_sizes[1:]]
        else:
            # ids are never compared across views here, so every view is
            # enumerated up to relabeling
            options = [list(set_partitions(len(sizes))) for sizes in block_sizes[1:]]
        for rest in itertools.product(*options):
            labelings = (first,) + rest
            count = _distinct(parts, labelings)
            if count > best:
                best, witness = count, labelings
                if best == k:
                    return best, witness
    return best, witness


def analyze(parts: ViewPartitions) -> KappaResult:
    kv = parts.counts
    res = KappaResult(kappa_aligned(parts.k, kv), kappa_unaligned(parts.k, kv))
    res.brute_aligned, res.witness_aligned = brute_force_kappa(parts, aligned=True)
    res.brute_unaligned, res.witness_unaligned = brute_force_kappa(parts, aligned=False)
    return res


def verify_proposition(parts: ViewPartitions) -> dict:
    """Check both brute-force counts against the closed-form bounds.

    Raises :class:`PropositionViolation` if either bound is exceeded;
    otherwise returns a report marking each bound tight or slack.
    """
    res = analyze(parts)
    report = {
        "k": parts.k,
        "partitions": [parts.blocks(v) for v in range(len(parts.views))],
        "kv": list(parts.counts),
        "formula": {"aligned": res.kappa_aligned, "unaligned": res.kappa_unaligned},
        "brute_force": {"aligned": res.brute_aligned, "unaligned": res.brute_unaligned},
        "witness": {"aligned": [list(w) for w in res.witness_aligned],
                    "unaligned": [list(w) for w in res.witness_unaligned]},
    }
    for kind in ("aligned", "unaligned"):
        if report["brute_force"][kind] > report["formula"][kind]:
            raise PropositionViolation(f"{kind} count {report['brute_force'][kind]} exceeds bound "
                                       f"{report['formula'][kind]} for partitions {report['partitions']}")
    report["status"] = {kind: "tight" if report["brute_force"][kind] == report["formula"][kind] else "slack"
                        for kind in ("aligned", "unaligned")}
    return report


def sweep(k: int, n_views: int = 2) -> list[dict]:
    """verify_proposition on every combination of view partitions of k clusters."""
    all_parts = list(set_partitions(k))
    reports = []
    for combo in itertools.product(all_parts, repeat=n_views):
        reports.append(verify_proposition(ViewPartitions(k, combo)))
    return reports
