"""Step 2: moments ratio scoring (MRS), ordering estimation and orientation.

For node j with candidate parents C the score is a cell-weighted average of

    E(X_j^r | x) / (c_r E(X_j | x)^r - sum_{k<r} s(r, k) E(X_j^k | x))

over configurations x of X_C seen at least ``n_min`` times.  The
denominator is E(X_j^r) as implied by the CMR property, rewritten through
(x)_r = sum_k s(r, k) x^k so that low counts never produce a zero factorial
moment.  In population the score is 1 when C covers the parents of j and
exceeds 1 otherwise, so the ordering is built greedily by argmin.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .data import Dataset
from .ghd import GhdFamily, cmr_coefficient, stirling_first
from .graph import Dag, Ordering, Skeleton, orient_by_ordering
from .skeleton import SkeletonSource, resolve_skeleton

INF = math.inf
HYPER_POISSON_B_FLOOR = 1e-6
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ScoreConfig:
    """Scoring parameters.

    ``families`` assigns a GHD family per node (all Poisson when None).
    ``tie_break`` is ``"lowest_id"`` or ``"random"`` (seeded by ``tie_seed``).
    """

    r: int = 2
    n_min: int = 1
    denom_epsilon: float = 1e-9
    families: tuple[GhdFamily, ...] | None = None
    tie_break: str = "lowest_id"
    tie_seed: int = 0

    def __post_init__(self):
        if self.r < 2:
            raise ValueError(f"r must be >= 2, got {self.r}")
        if self.n_min < 1:
            raise ValueError(f"n_min must be >= 1, got {self.n_min}")
        if self.tie_break not in ("lowest_id", "random"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.families is not None:
            object.__setattr__(self, "families", tuple(self.families))

    def family(self, j: int) -> GhdFamily:
        if self.families is None:
            return GhdFamily.poisson()
        return self.families[j]


@dataclass(frozen=True)
class ConditionalTable:
    """Per-cell counts and power sums of X_j over configurations of X_C.

    ``power_sums[c, k]`` is the sum of X_j^k over the rows in cell c, for
    k = 0..r (column 0 is the cell count).  Only cells with at least
    ``n_min`` rows are kept.
    """

    node: int
    conditioning: tuple[int, ...]
    keys: tuple[tuple[int, ...], ...]
    power_sums: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return self.power_sums[:, 0]

    @property
    def total_kept(self) -> int:
        return int(self.counts.sum())

    def moments(self) -> np.ndarray:
        """Conditional raw moments E(X_j^k | x), one row per cell."""
        return self.power_sums / self.power_sums[:, :1]


class ScoredCandidate(NamedTuple):
    node: int
    position: int
    candidate_parents: tuple[int, ...]
    score: float
    cells_used: int


class MomentKernel:
    """Per-dataset scoring state.

    Holds the powers X^0..X^r of every column, laid out (k, column, row) so
    each column's rows are contiguous, and each node's denominator
    coefficients.  Cell sums are recomputed on every call; no score is
    remembered between calls.
    """

    def __init__(self, data: Dataset, r: int, families: Callable[[int], GhdFamily] | None = None):
        self.data = data
        self.r = r
        self._family = families or (lambda j: _POISSON)
        x = np.ascontiguousarray(data.values.T, dtype=np.float64)
        pw = np.empty((r + 1,) + x.shape)
        pw[0] = 1.0
        for k in range(1, r + 1):
            np.multiply(pw[k - 1], x, out=pw[k])
        self._powers = pw
        self._coef: dict[int, tuple[float, tuple[float, ...]]] = {}
        self._stirling = tuple(float(stirling_first(r, k)) for k in range(1, r))

    def powers(self, j: int) -> np.ndarray:
        """Rows X_j^0..X_j^r, shape (r + 1, n)."""
        return self._powers[:, j, :]

    def coefficient(self, j: int) -> float:
        """c_r for node j's family."""
        out = self._coef.get(j)
        if out is None:
            out = self._coef[j] = cmr_coefficient(self._family(j), self.r)
        return out

    def marginal_sums(self, nodes: Sequence[int]) -> np.ndarray:
        """Power sums over all rows, one row per node, shape (len(nodes), r + 1)."""
        return self._powers[:, list(nodes), :].sum(axis=2).T

    def _cell_ids(self, C: Sequence[int]) -> tuple[np.ndarray, dict]:
        """Cell index of every row for the configurations of X_C, in first-seen order."""
        data = self.data
        if len(C) == 1:
            keys = data.column_list(C[0])
        else:
            keys = zip(*(data.column_list(c) for c in C))
        index: dict = {}
        cell = np.fromiter((index.setdefault(k, len(index)) for k in keys), dtype=np.intp, count=data.n)
        return cell, index

    def cell_sums(self, j: int, C: Sequence[int], n_min: int = 1, with_keys: bool = False) -> tuple[list | None, np.ndarray]:
        """Power sums of the cells of X_C with at least n_min rows, and their keys if asked."""
        cell, index = self._cell_ids(C)
        ncell = len(index)
        pw = self.powers(j)
        sums = np.empty((ncell, self.r + 1))
        sums[:, 0] = np.bincount(cell, minlength=ncell)
        for k in range(1, self.r + 1):
            sums[:, k] = np.bincount(cell, weights=pw[k], minlength=ncell)
        keep = sums[:, 0] >= n_min
        all_kept = n_min <= 1 or bool(keep.all())
        if not with_keys:
            return None, sums if all_kept else sums[keep]
        cell_keys = list(index)
        if len(C) == 1:
            cell_keys = [(k,) for k in cell_keys]
        if all_kept:
            return cell_keys, sums
        return [k for k, kept in zip(cell_keys, keep) if kept], sums[keep]

    def _ratios(self, c, sums: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-row moments ratios of the rows whose denominator exceeds eps, and that mask."""
        r = self.r
        moments = sums / sums[:, :1]
        den = c * moments[:, 1] ** r
        for k, s in enumerate(self._stirling, start=1):
            den -= s * moments[:, k]
        ok = den > eps
        return moments[ok, r] / den[ok], ok

    def ratio(self, j: int, sums: np.ndarray, eps: float) -> tuple[float, int]:
        """Cell-weighted moments ratio over the rows of ``sums``."""
        if len(sums) == 0:
            return INF, 0
        ratios, ok = self._ratios(self.coefficient(j), sums, eps)
        used = len(ratios)
        if not used:
            return INF, 0
        weights = sums[ok, 0]
        return float(np.dot(weights, ratios) / weights.sum()), used

    def marginal_scores(self, nodes: Sequence[int], eps: float = 1e-9) -> list[tuple[float, int]]:
        """Unconditional scores of several nodes in one vectorized pass."""
        if not nodes:
            return []
        c = np.array([self.coefficient(j) for j in nodes])
        ratios, ok = self._ratios(c, self.marginal_sums(nodes), eps)
        values = iter(ratios.tolist())
        return [(next(values), 1) if good else (INF, 0) for good in ok.tolist()]

    def scores(self, cands: Sequence[tuple[int, tuple[int, ...]]], n_min: int = 1, eps: float = 1e-9) -> list[tuple[float, int]]:
        """Scores of several (node, conditioning set) candidates.

        The cells of all conditional candidates are stacked into one table so
        the sums, ratios and weighted averages each take a single numpy pass
        however many candidates there are.
        """
        out: list[tuple[float, int]] = [(INF, 0)] * len(cands)
        free = [i for i, (_, C) in enumerate(cands) if not C]
        if free:
            for i, res in zip(free, self.marginal_scores([cands[i][0] for i in free], eps)):
                out[i] = res
        cond = [i for i, (_, C) in enumerate(cands) if C]
        if not cond:
            return out
        r = self.r
        ids, sizes, total = [], [], 0
        for i in cond:
            cell, index = self._cell_ids(cands[i][1])
            ids.append(cell + total if total else cell)
            sizes.append(len(index))
            total += len(index)
        cell = np.concatenate(ids)
        nodes = [cands[i][0] for i in cond]
        pw = self._powers[:, nodes, :].reshape(r + 1, -1)
        sums = np.empty((total, r + 1))
        sums[:, 0] = np.bincount(cell, minlength=total)
        for k in range(1, r + 1):
            sums[:, k] = np.bincount(cell, weights=pw[k], minlength=total)
        group = np.repeat(np.arange(len(cond)), sizes)
        coef = np.array([self.coefficient(j) for j in nodes])[group]

        moments = sums / sums[:, :1]
        den = coef * moments[:, 1] ** r
        for k, st in enumerate(self._stirling, start=1):
            den -= st * moments[:, k]
        ok = (sums[:, 0] >= n_min) & (den > eps)
        weight = np.where(ok, sums[:, 0], 0.0)
        ratio = np.where(ok, moments[:, r] / np.where(ok, den, 1.0), 0.0)
        ng = len(cond)
        used = np.bincount(group, weights=ok, minlength=ng)
        wsum = np.bincount(group, weights=weight, minlength=ng)
        num = np.bincount(group, weights=weight * ratio, minlength=ng)
        for i, u, w, v in zip(cond, used.tolist(), wsum.tolist(), num.tolist()):
            if u:
                out[i] = (v / w, int(u))
        return out

    def score(self, j: int, C: Sequence[int], n_min: int = 1, eps: float = 1e-9) -> tuple[float, int]:
        return self.scores([(j, tuple(C))], n_min, eps)[0]

    def overdispersion(self, j: int, C: Sequence[int], n_min: int = 1) -> tuple[float, int]:
        sums = self.cell_sums(j, C, n_min)[1] if C else self.marginal_sums([j])
        if len(sums) == 0:
            return INF, 0
        m = sums / sums[:, :1]
        diff = (m[:, 2] - m[:, 1]) - m[:, 1] ** 2
        return float(np.dot(sums[:, 0], diff) / sums[:, 0].sum()), len(sums)


_POISSON = GhdFamily.poisson()


def _kernel(data: Dataset, cfg: ScoreConfig) -> MomentKernel:
    return MomentKernel(data, cfg.r, cfg.family)


def conditional_table(data: Dataset, j: int, C: Sequence[int], r: int, n_min: int = 1) -> ConditionalTable:
    C = tuple(C)
    keys, sums = MomentKernel(data, r).cell_sums(j, C, n_min, with_keys=True)
    return ConditionalTable(j, C, tuple(keys), sums)


def score_denominator(family: GhdFamily, r: int, moments: Sequence[float]) -> float:
    """c_r E(X)^r - sum_{k<r} s(r, k) E(X^k), from raw moments E(X^0..X^{r-1})."""
    c = cmr_coefficient(family, r)
    return c * moments[1] ** r - sum(stirling_first(r, k) * moments[k] for k in range(r))


def marginal_score(data: Dataset, j: int, cfg: ScoreConfig = ScoreConfig()) -> float:
    """Unconditional moments ratio of column j; +inf if the denominator vanishes."""
    return conditional_score(data, j, (), cfg)[0]


def conditional_score(data: Dataset, j: int, C: Sequence[int], cfg: ScoreConfig = ScoreConfig()) -> tuple[float, int]:
    """Weighted conditional moments ratio of j given X_C and the number of cells used.

    Cells whose denominator is at most ``denom_epsilon`` are left out of both
    the average and its normalization.
    """
    return _kernel(data, cfg).score(j, tuple(C), cfg.n_min, cfg.denom_epsilon)


def ods_score(data: Dataset, j: int, C: Sequence[int], n_min: int = 1) -> tuple[float, int]:
    """Overdispersion baseline: weighted E((X_j)_2 | x) - E(X_j | x)^2."""
    return MomentKernel(data, 2).overdispersion(j, tuple(C), n_min)


ScoreFn = Callable[[int, tuple[int, ...]], tuple[float, int]]
BatchFn = Callable[[list[tuple[int, tuple[int, ...]]]], list[tuple[float, int]]]


def _select(scores: list[tuple[float, int]], tie_break: str, rng) -> int:
    """Argmin node; scores within TIE_TOLERANCE (relative) of the minimum tie.

    Some scores are equal in exact arithmetic (a Binomial(3) node at r = 4
    scores 1 whatever it is conditioned on), so bitwise comparison would
    let rounding noise pick among them.
    """
    finite = [(s, j) for s, j in scores if math.isfinite(s)]
    if not finite:
        tied = sorted(j for _, j in scores)
    else:
        best = min(s for s, _ in finite)
        cut = best + TIE_TOLERANCE * max(1.0, abs(best))
        tied = sorted(j for s, j in finite if s <= cut)
    if tie_break == "random" and len(tied) > 1:
        return tied[int(rng.integers(len(tied)))]
    return tied[0]


def greedy_ordering(
    skeleton: Skeleton,
    score: ScoreFn,
    tie_break: str = "lowest_id",
    tie_seed: int = 0,
    batch: BatchFn | None = None,
) -> tuple[Ordering, list[ScoredCandidate]]:
    """Place nodes one at a time by argmin score given placed neighbours.

    ``batch``, when given, scores all (node, candidate parents) pairs of a
    position in one call; it must agree with ``score``.
    """
    p = skeleton.node_count
    rng = np.random.default_rng(tie_seed)
    neighbors = [skeleton.neighbors(j) for j in range(p)]
    placed: list[int] = []
    placed_set: set[int] = set()
    remaining = list(range(p))
    trace: list[ScoredCandidate] = []
    for m in range(1, p):
        cands = [(j, tuple(sorted(neighbors[j] & placed_set))) for j in remaining]
        results = batch(cands) if batch is not None else [score(j, C) for j, C in cands]
        scores = []
        for (j, C), (s, used) in zip(cands, results):
            trace.append(ScoredCandidate(j, m, C, s, used))
            scores.append((s, j))
        chosen = _select(scores, tie_break, rng)
        placed.append(chosen)
        placed_set.add(chosen)
        remaining.remove(chosen)
    placed.extend(remaining)
    return Ordering(placed), trace


def estimate_ordering(data: Dataset, skeleton: Skeleton, cfg: ScoreConfig = ScoreConfig()) -> tuple[Ordering, list[ScoredCandidate]]:
    if data.p != skeleton.node_count:
        raise ValueError(f"data has {data.p} columns, skeleton has {skeleton.node_count} nodes")
    kernel = _kernel(data, cfg)
    n_min, eps = cfg.n_min, cfg.denom_epsilon
    return greedy_ordering(
        skeleton,
        lambda j, C: kernel.score(j, C, n_min, eps),
        cfg.tie_break,
        cfg.tie_seed,
        batch=lambda cands: kernel.scores(cands, n_min, eps),
    )


def ods_ordering(data: Dataset, skeleton: Skeleton, n_min: int = 1, tie_break: str = "lowest_id", tie_seed: int = 0) -> Ordering:
    if data.p != skeleton.node_count:
        raise ValueError(f"data has {data.p} columns, skeleton has {skeleton.node_count} nodes")
    kernel = MomentKernel(data, 2)
    ordering, _ = greedy_ordering(skeleton, lambda j, C: kernel.overdispersion(j, C, n_min), tie_break, tie_seed)
    return ordering


def random_ordering(p: int, rng_seed: int) -> Ordering:
    return Ordering(np.random.default_rng(rng_seed).permutation(p).tolist())


def orient_edges(skeleton: Skeleton, ordering: Ordering) -> Dag:
    """Direct every skeleton edge from its earlier to its later endpoint."""
    return orient_by_ordering(skeleton, ordering)


@dataclass(frozen=True)
class MrsResult:
    dag: Dag
    ordering: Ordering
    trace: list[ScoredCandidate]
    skeleton: Skeleton
    step1_seconds: float
    step2_seconds: float


def learn(data: Dataset, source: SkeletonSource, cfg: ScoreConfig = ScoreConfig(), true_dag: Dag | None = None) -> MrsResult:
    """Full pipeline: resolve the skeleton, estimate the ordering, orient."""
    t0 = time.perf_counter()
    skeleton = resolve_skeleton(source, data, true_dag)
    t1 = time.perf_counter()
    ordering, trace = estimate_ordering(data, skeleton, cfg)
    dag = orient_edges(skeleton, ordering)
    t2 = time.perf_counter()
    return MrsResult(dag, ordering, trace, skeleton, t1 - t0, t2 - t1)


def plug_in_hyper_poisson(data: Dataset) -> tuple[GhdFamily, ...]:
    """Hyper-Poisson family per column with b = sample variance / sample mean."""
    out = []
    for j in range(data.p):
        x = data.column(j).astype(np.float64)
        mean = x.mean()
        var = x.var(ddof=1) if len(x) > 1 else 0.0
        b = var / mean if mean > 0 else 0.0
        out.append(GhdFamily.hyper_poisson(max(b, HYPER_POISSON_B_FLOOR)))
    return tuple(out)


TRACE_FIELDS = ("m", "node", "score", "cells_used", "candidate_parent_ids")


def write_trace(path: str | Path, trace: Sequence[ScoredCandidate], comments: Sequence[str] = ()) -> None:
    """Score trace as CSV; parent ids are ';'-separated, comments lead with '#'."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for c in trace:
            writer.writerow([c.position, c.node, repr(c.score), c.cells_used, ";".join(map(str, c.candidate_parents))])


def margin_violations(trace: Sequence[ScoredCandidate], ordering: Ordering, m_min: float) -> list[ScoredCandidate]:
    """Non-selected candidates whose score is at most 1 + m_min.

    A diagnostic for the margin between the selected node and its
    competitors at each position; an empty list means every competitor
    cleared the threshold.
    """
    chosen = {m: ordering[m - 1] for m in range(1, len(ordering))}
    return [c for c in trace if c.node != chosen[c.position] and c.score <= 1.0 + m_min]
