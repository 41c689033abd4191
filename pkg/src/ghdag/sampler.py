"""Generative GHD DAG models and forward sampling.

A node's series parameter is a link of a linear predictor in its parents,

    eta_j = intercept_j + sum_k weight_jk * X_k
    theta_j = exp(eta_j)                 (Poisson, hyper-Poisson)
    p_j = 1 / (1 + exp(-eta_j))          (binomial, theta_j = -p_j)

Random streams are per node, not per row, so that each column is one
vectorized draw.  Node j uses ``stream(seed, DATA_STREAM, j)`` for its data
and ``stream(seed, PARAM_STREAM, j, k)`` for the k-th draw of its
parameters; any subset of nodes can therefore be regenerated, or sampled in
parallel, reproducibly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import Dataset
from .ghd import GhdFamily, pmf_table
from .graph import Dag
from .seeding import DATA_STREAM, MASK64, PARAM_STREAM, derive_seed, stream

log = logging.getLogger(__name__)

LOG_RATE = "log-rate"
LOGIT = "logit-probability"

DEFAULT_OVERFLOW_CAP = 1e9
HYBRID_CYCLE = (
    GhdFamily.poisson(),
    GhdFamily.binomial(3),
    GhdFamily.hyper_poisson(2.0),
    GhdFamily.binomial(3),
)
POISSON_WEIGHT_RANGE = (0.25, 1.75)  # magnitude; sign is a fair coin
HYBRID_WEIGHT_RANGE = (-1.2, -0.2)
INTERCEPT_RANGE = (1.0, 3.0)
INVERSE_CDF_MASS = 1.0 - 1e-12


class RateOverflowError(ArithmeticError):
    """A node's series parameter exceeded the overflow cap."""

    def __init__(self, node: int, value: float, cap: float):
        self.node = node
        super().__init__(f"node {node}: rate {value:.3g} exceeds cap {cap:.3g}")


class RetriesExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class NodeMechanism:
    family: GhdFamily
    link: str
    intercept: float
    weights: tuple[tuple[int, float], ...] = ()
    binomial_trials: int | None = None

    def __post_init__(self):
        trials = self.family.binomial_trials
        if trials is not None:
            if self.link != LOGIT or self.binomial_trials != trials:
                raise ValueError("binomial nodes need the logit link and matching trials")
        elif self.link != LOG_RATE or self.binomial_trials is not None:
            raise ValueError(f"{self.family.label} needs the log-rate link and no trials")

    @property
    def parents(self) -> frozenset[int]:
        return frozenset(k for k, _ in self.weights)

    def linear_predictor(self, values: np.ndarray) -> np.ndarray:
        eta = np.full(values.shape[0], float(self.intercept))
        for k, w in self.weights:
            eta += w * values[:, k]
        return eta


class GhdDagModel:
    def __init__(self, dag: Dag, mechanisms: Sequence[NodeMechanism]):
        if len(mechanisms) != dag.node_count:
            raise ValueError("one mechanism per node required")
        for j, mech in enumerate(mechanisms):
            if mech.parents != dag.parents(j):
                raise ValueError(f"node {j}: weights keyed by {sorted(mech.parents)}, parents are {sorted(dag.parents(j))}")
        self.dag = dag
        self.mechanisms = tuple(mechanisms)

    @property
    def families(self) -> tuple[GhdFamily, ...]:
        return tuple(m.family for m in self.mechanisms)

    def __eq__(self, other):
        return isinstance(other, GhdDagModel) and self.dag == other.dag and self.mechanisms == other.mechanisms

    def __repr__(self):
        return f"GhdDagModel(p={self.dag.node_count}, edges={len(self.dag.edges)})"


def _draw_mechanism(kind: str, parents: frozenset[int], position: int, rng: np.random.Generator) -> NodeMechanism:
    intercept = float(rng.uniform(*INTERCEPT_RANGE))
    ordered = sorted(parents)
    if kind == "poisson":
        signs = np.where(rng.random(len(ordered)) < 0.5, -1.0, 1.0)
        mags = rng.uniform(*POISSON_WEIGHT_RANGE, size=len(ordered))
        weights = tuple((k, float(s * m)) for k, s, m in zip(ordered, signs, mags))
        return NodeMechanism(GhdFamily.poisson(), LOG_RATE, intercept, weights)
    if kind == "hybrid":
        weights = tuple((k, float(w)) for k, w in zip(ordered, rng.uniform(*HYBRID_WEIGHT_RANGE, size=len(ordered))))
        family = HYBRID_CYCLE[position % len(HYBRID_CYCLE)]
        trials = family.binomial_trials
        return NodeMechanism(family, LOGIT if trials else LOG_RATE, intercept, weights, trials)
    raise ValueError(f"unknown model kind {kind!r}")


def _positions(dag: Dag) -> dict[int, int]:
    return {j: m for m, j in enumerate(dag.topological_order())}


def random_model(dag: Dag, kind: str, rng_seed: int) -> GhdDagModel:
    pos = _positions(dag)
    seed = rng_seed & MASK64
    mechs = [_draw_mechanism(kind, dag.parents(j), pos[j], stream(seed, PARAM_STREAM, j, 0)) for j in range(dag.node_count)]
    return GhdDagModel(dag, mechs)


def random_poisson_model(dag: Dag, rng_seed: int) -> GhdDagModel:
    """All-Poisson model; weights +-U[0.25, 1.75], intercepts U[1, 3]."""
    return random_model(dag, "poisson", rng_seed)


def random_hybrid_model(dag: Dag, rng_seed: int) -> GhdDagModel:
    """Families cycle Poisson, Binomial(3), hyper-Poisson(2), Binomial(3)
    along the DAG's topological order; weights U[-1.2, -0.2]."""
    return random_model(dag, "hybrid", rng_seed)


def sample_inverse_cdf(family: GhdFamily, thetas: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws, one per (theta, uniform) pair, from the series pmf."""
    out = np.empty(len(thetas), dtype=np.int64)
    uniq, inverse = np.unique(thetas, return_inverse=True)
    for t_idx, theta in enumerate(uniq):
        rows = np.flatnonzero(inverse == t_idx)
        cdf = np.cumsum(pmf_table(family, float(theta), INVERSE_CDF_MASS))
        x = np.searchsorted(cdf, uniforms[rows], side="right")
        out[rows] = np.minimum(x, len(cdf) - 1)
    return out


def sample_node(
    mech: NodeMechanism,
    values: np.ndarray,
    rng: np.random.Generator,
    overflow_cap: float,
    node: int = -1,
) -> np.ndarray:
    eta = mech.linear_predictor(values)
    n = len(eta)
    if mech.link == LOGIT:
        with np.errstate(over="ignore"):
            prob = 1.0 / (1.0 + np.exp(-eta))
        return rng.binomial(mech.binomial_trials, prob).astype(np.int64)
    with np.errstate(over="ignore"):
        rate = np.exp(eta)
    peak = float(rate.max()) if n else 0.0
    if not peak <= overflow_cap:
        raise RateOverflowError(node, peak, overflow_cap)
    if not mech.family.upper and not mech.family.lower:
        return rng.poisson(rate).astype(np.int64)
    return sample_inverse_cdf(mech.family, rate, rng.random(n))


def forward_sample(
    model: GhdDagModel,
    n: int,
    rng_seed: int,
    overflow_cap: float = DEFAULT_OVERFLOW_CAP,
) -> Dataset:
    """Draw n i.i.d. rows, nodes in topological order.

    Raises RateOverflowError when any node's rate exceeds ``overflow_cap``;
    the caller decides whether to regenerate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seed = rng_seed & MASK64
    p = model.dag.node_count
    values = np.zeros((n, p), dtype=np.int64)
    for j in model.dag.topological_order():
        values[:, j] = sample_node(model.mechanisms[j], values, stream(seed, DATA_STREAM, j), overflow_cap, j)
    return Dataset(values)


class Draw(NamedTuple):
    model: GhdDagModel
    data: Dataset
    attempt: int
    data_seed: int


def regenerate_until_valid(
    dag: Dag,
    kind: str,
    n: int,
    rng_seed: int,
    max_retries: int = 20,
    overflow_cap: float = DEFAULT_OVERFLOW_CAP,
    node_redraws: int = 200,
    max_backtracks: int = 50,
) -> Draw:
    """Draw (model, data) pairs until no column is constant and nothing overflows.

    Attempt a works from ``derive_seed(rng_seed, a)``.  Within an attempt,
    nodes are processed in topological order and a node whose column
    overflows or comes out constant gets its parameters redrawn, up to
    ``node_redraws`` times.  A node that still fails usually sits below a
    parent with huge counts (every child weight then either overflows or
    zeroes the rate), so the parent with the largest column gets a fresh
    draw and sampling resumes from there; after ``max_backtracks`` such
    steps the attempt is abandoned.  With ``node_redraws=0`` and
    ``max_backtracks=0`` every failure restarts the whole model.  The
    returned data equal ``forward_sample(model, n, data_seed)``.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    pos = _positions(dag)
    order = dag.topological_order()
    p = dag.node_count
    for attempt in range(max_retries):
        seed = derive_seed(rng_seed, attempt)
        values = np.zeros((n, p), dtype=np.int64)
        mechs: list[NodeMechanism | None] = [None] * p
        draws = [0] * p
        backtracks = 0
        i = 0
        while i < p:
            j = order[i]
            while draws[j] <= node_redraws:
                mech = _draw_mechanism(kind, dag.parents(j), pos[j], stream(seed, PARAM_STREAM, j, draws[j]))
                draws[j] += 1
                try:
                    col = sample_node(mech, values, stream(seed, DATA_STREAM, j), overflow_cap, j)
                except RateOverflowError:
                    continue
                if n > 1 and np.any(col != col[0]):
                    values[:, j] = col
                    mechs[j] = mech
                    break
            else:
                pa = sorted(dag.parents(j))
                if not pa or backtracks >= max_backtracks:
                    log.debug("attempt %d: node %d exhausted %d redraws", attempt, j, node_redraws)
                    break
                backtracks += 1
                q = max(pa, key=lambda k: (int(values[:, k].max()), -k))
                i = pos[q]
                for later in order[i + 1:]:
                    draws[later] = 0
                continue
            i += 1
        else:
            return Draw(GhdDagModel(dag, mechs), Dataset(values), attempt + 1, seed)
    raise RetriesExhaustedError(f"no valid {kind} draw in {max_retries} attempts")
