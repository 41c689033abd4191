"""Structure-recovery metrics against a known DAG."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import Dag, GraphError, Ordering, orient_by_ordering, skeleton_of, to_cpdag


@dataclass(frozen=True)
class EdgeMetrics:
    precision: float
    recall: float
    true_edge_count: int
    estimated_edge_count: int
    correct_count: int

    @classmethod
    def from_counts(cls, true_count: int, est_count: int, correct: int) -> EdgeMetrics:
        # empty reference sets count as perfect so degenerate trials don't drag averages
        precision = correct / est_count if est_count else 1.0
        recall = correct / true_count if true_count else 1.0
        return cls(precision, recall, true_count, est_count, correct)


def _check_sizes(a: Dag, b: Dag):
    if a.node_count != b.node_count:
        raise GraphError(f"node counts differ: {a.node_count} vs {b.node_count}")


def dag_metrics(true_dag: Dag, est_dag: Dag) -> EdgeMetrics:
    """Directed precision/recall; an edge is correct only with the same direction."""
    _check_sizes(true_dag, est_dag)
    correct = len(true_dag.edges & est_dag.edges)
    return EdgeMetrics.from_counts(len(true_dag.edges), len(est_dag.edges), correct)


def mec_metrics(true_dag: Dag, est_dag: Dag) -> EdgeMetrics:
    """Precision/recall between the two CPDAGs.

    An edge matches when the other CPDAG has the same pair with the same
    status: directed the same way, or undirected in both.
    """
    _check_sizes(true_dag, est_dag)
    t, e = to_cpdag(true_dag), to_cpdag(est_dag)
    correct = len(t.directed & e.directed) + len(t.undirected & e.undirected)
    return EdgeMetrics.from_counts(
        len(t.directed) + len(t.undirected), len(e.directed) + len(e.undirected), correct
    )


def ordering_precision(true_dag: Dag, ordering: Ordering) -> float:
    """Precision of the true skeleton oriented by ``ordering``."""
    est = orient_by_ordering(skeleton_of(true_dag), ordering)
    return dag_metrics(true_dag, est).precision
