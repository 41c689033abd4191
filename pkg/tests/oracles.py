"""Reference computations written independently of the package code.

None of these call into ghdag's numerics: pmfs come from scipy.stats or
from expanding the pgf in mpmath at high precision, Stirling numbers from
polynomial expansion, Markov equivalence from d-separation by brute force.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import mpmath
import networkx as nx
import numpy as np
from scipy import stats

mpmath.mp.dps = 40


# ------------------------------------------------------------ distributions


def pgf_coefficient_pmf(upper, lower, theta, x, terms=400):
    """P(X = x) as the s^x coefficient of pFq[upper; lower; theta (s - 1)].

    Expands (s - 1)^j binomially inside the series and sums in mpmath:
        sum_j  <a>^j / <b>^j theta^j / j!  C(j, x) (-1)^(j - x).
    """
    theta = mpmath.mpf(theta)
    total = mpmath.mpf(0)
    for j in range(x, terms):
        num = mpmath.mpf(1)
        for a in upper:
            num *= mpmath.rf(a, j)
        if num == 0:
            break
        den = mpmath.mpf(1)
        for b in lower:
            den *= mpmath.rf(b, j)
        total += num / den * theta**j / mpmath.factorial(j) * mpmath.binomial(j, x) * (-1) ** (j - x)
    return float(total)


def scipy_pmf(kind: str, param, theta: float, x):
    """Closed-form pmfs for the named families, in the pFq(theta) parametrization."""
    if kind == "poisson":
        return stats.poisson.pmf(x, theta)
    if kind == "binomial":  # theta = -p
        return stats.binom.pmf(x, param, -theta)
    if kind == "negbinomial":  # pgf (1 - theta (s - 1))^-k
        return stats.nbinom.pmf(x, param, 1.0 / (1.0 + theta))
    raise ValueError(kind)


def falling_poly_coefficients(r: int) -> list[int]:
    """Coefficients of x(x-1)...(x-r+1), lowest degree first."""
    coef = np.polynomial.polynomial.polyfromroots(list(range(r)))
    return [int(round(c)) for c in coef]


def exact_falling(x: int, r: int) -> int:
    out = 1
    for i in range(r):
        out *= x - i
    return out


def poisson_raw_moment(lam: Fraction, k: int) -> Fraction:
    """E(X^k) for Poisson(lam) through Stirling numbers of the second kind."""
    total = Fraction(0)
    for j in range(k + 1):
        s2 = sum((-1) ** (j - i) * math.comb(j, i) * i**k for i in range(j + 1)) // math.factorial(j)
        total += s2 * lam**j
    return total


# ---------------------------------------------------------- contingency G^2


def g2_oracle(xi, xj, strata=None):
    """Stratified G^2 and dof using scipy's log-likelihood contingency test."""
    xi, xj = np.asarray(xi), np.asarray(xj)
    if strata is None:
        strata = np.zeros(len(xi), dtype=int)
    else:
        strata = np.asarray(strata)
        if strata.ndim == 2:
            _, strata = np.unique(strata, axis=0, return_inverse=True)
            strata = strata.ravel()
    stat, dof = 0.0, 0
    for s in np.unique(strata):
        mask = strata == s
        a_vals, a = np.unique(xi[mask], return_inverse=True)
        b_vals, b = np.unique(xj[mask], return_inverse=True)
        if len(a_vals) < 2 or len(b_vals) < 2:
            continue
        table = np.zeros((len(a_vals), len(b_vals)))
        np.add.at(table, (a, b), 1)
        g, _, df, _ = stats.chi2_contingency(table, correction=False, lambda_="log-likelihood")
        stat += g
        dof += df
    return stat, dof


# ------------------------------------------------------- Markov equivalence


def all_dags(p: int):
    """Every DAG on nodes 0..p-1 as a frozenset of directed edges."""
    pairs = list(itertools.combinations(range(p), 2))
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (u, v), s in zip(pairs, states):
            if s == 1:
                edges.append((u, v))
            elif s == 2:
                edges.append((v, u))
        g = nx.DiGraph(edges)
        g.add_nodes_from(range(p))
        if nx.is_directed_acyclic_graph(g):
            yield frozenset(edges)


def _d_separated(g, x, y, z):
    if hasattr(nx, "is_d_separator"):
        return nx.is_d_separator(g, {x}, {y}, set(z))
    return nx.d_separated(g, {x}, {y}, set(z))


def independence_signature(p: int, edges) -> frozenset:
    """All (i, j, S) with i and j d-separated by S."""
    g = nx.DiGraph(list(edges))
    g.add_nodes_from(range(p))
    out = []
    for i, j in itertools.combinations(range(p), 2):
        rest = [k for k in range(p) if k not in (i, j)]
        for size in range(len(rest) + 1):
            for S in itertools.combinations(rest, size):
                if _d_separated(g, i, j, S):
                    out.append((i, j, S))
    return frozenset(out)


def equivalence_classes(p: int) -> dict[frozenset, list[frozenset]]:
    classes: dict[frozenset, list[frozenset]] = {}
    for edges in all_dags(p):
        classes.setdefault(independence_signature(p, edges), []).append(edges)
    return classes


def cpdag_from_class(members) -> tuple[frozenset, frozenset]:
    """(directed, undirected) edge sets shared by a Markov equivalence class."""
    first = members[0]
    directed, undirected = set(), set()
    for u, v in first:
        if all((u, v) in m for m in members):
            directed.add((u, v))
        else:
            undirected.add((min(u, v), max(u, v)))
    return frozenset(directed), frozenset(undirected)


# ------------------------------------------------- low-mean model population


def low_mean_population(lam: float, a: float, b: float, support: int = 200):
    """Exact moments of X0 ~ Poisson(lam), X1 | X0 = x ~ Poisson(exp(a + b x)).

    Returns the marginal MRS (r=2) and ODS scores of both nodes.
    """
    x = np.arange(support)
    w = stats.poisson.pmf(x, lam)
    mu = np.exp(a + b * x)
    m1 = float(np.dot(w, mu))
    m2 = float(np.dot(w, mu + mu**2))
    child_mrs = m2 / (m1**2 + m1)
    child_ods = (m2 - m1) - m1**2
    return {
        "child_mean": m1,
        "child_mrs": child_mrs,
        "child_ods": child_ods,
        "root_mrs": 1.0,
        "root_ods": 0.0,
        "var_conditional_mean": float(np.dot(w, mu**2) - m1**2),
    }
