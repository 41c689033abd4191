"""Step 1: the undirected neighbourhood structure.

The built-in learner is the PC-stable skeleton phase driven by a G^2
conditional-independence test on count contingency tables.  Skeletons from
external tools can be supplied as edge-list files instead.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

from scipy.stats import chi2

from .data import Dataset
from .graph import Dag, Skeleton, read_skeleton, skeleton_of


class DegenerateTableError(ValueError):
    """The stratified table has zero degrees of freedom."""


@dataclass(frozen=True)
class CiConfig:
    alpha: float = 0.05
    max_conditioning: int = 2
    max_category: int = 10

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.max_conditioning < 0 or self.max_category < 1:
            raise ValueError("max_conditioning must be >= 0 and max_category >= 1")


def _collapsed(data: Dataset, j: int, cap: int) -> list[int]:
    col = data.column_list(j)
    return [v if v < cap else cap for v in col]


def ci_test_g2(data: Dataset, i: int, j: int, S: Sequence[int] = (), cfg: CiConfig = CiConfig()) -> tuple[float, float]:
    """G^2 test of X_i independent of X_j given X_S; returns (statistic, p-value).

    Counts at or above ``max_category`` share one category.  Within each
    stratum of X_S, empty rows and columns are dropped and contribute no
    degrees of freedom.
    """
    S = tuple(S)
    if i == j or i in S or j in S:
        raise ValueError("i, j and S must be disjoint")
    if len(S) > cfg.max_conditioning:
        raise ValueError(f"|S|={len(S)} exceeds max_conditioning={cfg.max_conditioning}")
    cap = cfg.max_category
    xi = _collapsed(data, i, cap)
    xj = _collapsed(data, j, cap)
    if S:
        strata = zip(*(_collapsed(data, k, cap) for k in S))
        joint = Counter(zip(strata, xi, xj))
    else:
        joint = Counter(zip(xi, xj))
        joint = Counter({((), a, b): c for (a, b), c in joint.items()})

    tables: dict[tuple, dict[tuple[int, int], int]] = {}
    for (s, a, b), c in joint.items():
        tables.setdefault(s, {})[a, b] = c

    stat = 0.0
    dof = 0
    for cells in tables.values():
        rows: Counter = Counter()
        cols: Counter = Counter()
        for (a, b), c in cells.items():
            rows[a] += c
            cols[b] += c
        if len(rows) < 2 or len(cols) < 2:
            continue
        total = sum(rows.values())
        dof += (len(rows) - 1) * (len(cols) - 1)
        for (a, b), c in cells.items():
            stat += 2.0 * c * math.log(c * total / (rows[a] * cols[b]))
    if dof == 0:
        raise DegenerateTableError(f"no degrees of freedom testing {i} vs {j} given {S}")
    stat = max(stat, 0.0)
    return stat, float(chi2.sf(stat, dof))


def learn_skeleton(data: Dataset, cfg: CiConfig = CiConfig()) -> Skeleton:
    """PC-stable skeleton search with conditioning sets up to ``max_conditioning``.

    Conditioning sets are drawn from the adjacencies frozen at the start of each
    level, first around i and then around j, in lexicographic order.  A
    degenerate table counts as independence.
    """
    p = data.p
    adj = [set(range(p)) - {v} for v in range(p)]
    for level in range(cfg.max_conditioning + 1):
        frozen = [frozenset(a) for a in adj]
        if level > 0 and all(len(a) - 1 < level for a in frozen):
            break
        for i, j in combinations(range(p), 2):
            if j not in adj[i]:
                continue
            if _separated(data, i, j, frozen, level, cfg):
                adj[i].discard(j)
                adj[j].discard(i)
    return Skeleton(p, ((i, j) for i in range(p) for j in adj[i] if i < j))


def _separated(data, i, j, frozen, level, cfg) -> bool:
    seen = set()
    for a, b in ((i, j), (j, i)):
        for S in combinations(sorted(frozen[a] - {b}), level):
            if S in seen:
                continue
            seen.add(S)
            try:
                _, pval = ci_test_g2(data, i, j, S, cfg)
            except DegenerateTableError:
                return True
            if pval > cfg.alpha:
                return True
    return False


@dataclass(frozen=True)
class SkeletonSource:
    """Where step 1 gets its skeleton: ``oracle``, ``file`` or ``learned``."""

    mode: str
    path: Path | None = None
    ci: CiConfig = field(default_factory=CiConfig)

    def __post_init__(self):
        if self.mode not in ("oracle", "file", "learned"):
            raise ValueError(f"unknown skeleton mode {self.mode!r}")
        if self.mode == "file" and self.path is None:
            raise ValueError("file mode needs a path")

    @classmethod
    def oracle(cls) -> SkeletonSource:
        return cls("oracle")

    @classmethod
    def file(cls, path) -> SkeletonSource:
        return cls("file", Path(path))

    @classmethod
    def learned(cls, cfg: CiConfig = CiConfig()) -> SkeletonSource:
        return cls("learned", ci=cfg)


def resolve_skeleton(source: SkeletonSource, data: Dataset, true_dag: Dag | None = None) -> Skeleton:
    if source.mode == "oracle":
        if true_dag is None:
            raise ValueError("oracle skeleton requested without a true DAG")
        return skeleton_of(true_dag)
    if source.mode == "file":
        skel = read_skeleton(source.path, data.p)
        return skel
    return learn_skeleton(data, source.ci)
