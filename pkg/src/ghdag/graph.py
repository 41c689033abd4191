"""DAGs, skeletons, orderings and CPDAGs over dense integer node ids."""

from __future__ import annotations

import heapq
from itertools import combinations
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


class EdgeListError(GraphError):
    pass


def _check_ids(p: int, pairs: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    for u, v in pairs:
        u, v = int(u), int(v)
        if not (0 <= u < p and 0 <= v < p):
            raise GraphError(f"edge ({u}, {v}) outside node range 0..{p - 1}")
        if u == v:
            raise GraphError(f"self-loop on node {u}")
        out.append((u, v))
    return out


class Dag:
    """Directed acyclic graph on nodes ``0..node_count-1``."""

    def __init__(self, node_count: int, edges: Iterable[tuple[int, int]] = ()):
        if node_count < 1:
            raise GraphError("a DAG needs at least one node")
        pairs = _check_ids(node_count, edges)
        edge_set = frozenset(pairs)
        if len(edge_set) != len(pairs):
            raise GraphError("duplicate edges")
        self.node_count = node_count
        self.edges = edge_set
        pa: list[set[int]] = [set() for _ in range(node_count)]
        ch: list[set[int]] = [set() for _ in range(node_count)]
        for u, v in edge_set:
            pa[v].add(u)
            ch[u].add(v)
        self._parents = tuple(frozenset(s) for s in pa)
        self._children = tuple(frozenset(s) for s in ch)
        self._order = self._toposort()

    def _toposort(self) -> tuple[int, ...]:
        indeg = [len(s) for s in self._parents]
        heap = [j for j in range(self.node_count) if indeg[j] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for v in self._children[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(heap, v)
        if len(order) != self.node_count:
            raise CycleError("edge set contains a directed cycle")
        return tuple(order)

    def parents(self, j: int) -> frozenset[int]:
        self._check_node(j)
        return self._parents[j]

    def children(self, j: int) -> frozenset[int]:
        self._check_node(j)
        return self._children[j]

    def descendants(self, j: int) -> frozenset[int]:
        seen: set[int] = set()
        stack = list(self.children(j))
        while stack:
            u = stack.pop()
            if u not in seen:
                seen.add(u)
                stack.extend(self._children[u])
        return frozenset(seen)

    def topological_order(self) -> tuple[int, ...]:
        """Smallest-id-first topological order (deterministic)."""
        return self._order

    def max_indegree(self) -> int:
        return max(len(s) for s in self._parents)

    def _check_node(self, j: int):
        if not 0 <= j < self.node_count:
            raise GraphError(f"node {j} outside 0..{self.node_count - 1}")

    def __eq__(self, other):
        return isinstance(other, Dag) and (self.node_count, self.edges) == (other.node_count, other.edges)

    def __hash__(self):
        return hash((self.node_count, self.edges))

    def __repr__(self):
        return f"Dag({self.node_count}, {sorted(self.edges)})"


class Ordering(tuple):
    """A permutation of ``0..p-1``; ``ordering[m]`` is the node at position m."""

    def __new__(cls, sequence: Iterable[int]):
        seq = tuple(int(v) for v in sequence)
        if sorted(seq) != list(range(len(seq))):
            raise GraphError(f"not a permutation of 0..{len(seq) - 1}: {seq}")
        return super().__new__(cls, seq)

    def positions(self) -> dict[int, int]:
        return {v: m for m, v in enumerate(self)}


class Skeleton:
    """Undirected graph; each edge is stored once as ``(min, max)``."""

    def __init__(self, node_count: int, edges: Iterable[tuple[int, int]] = ()):
        pairs = _check_ids(node_count, edges)
        self.node_count = node_count
        self.edges = frozenset((min(u, v), max(u, v)) for u, v in pairs)
        nb: list[set[int]] = [set() for _ in range(node_count)]
        for u, v in self.edges:
            nb[u].add(v)
            nb[v].add(u)
        self._neighbors = tuple(frozenset(s) for s in nb)

    def neighbors(self, j: int) -> frozenset[int]:
        return self._neighbors[j]

    def adjacent(self, u: int, v: int) -> bool:
        return v in self._neighbors[u]

    @classmethod
    def complete(cls, node_count: int) -> Skeleton:
        return cls(node_count, combinations(range(node_count), 2))

    def __eq__(self, other):
        return isinstance(other, Skeleton) and (self.node_count, self.edges) == (other.node_count, other.edges)

    def __hash__(self):
        return hash((self.node_count, self.edges))

    def __repr__(self):
        return f"Skeleton({self.node_count}, {sorted(self.edges)})"


class Cpdag:
    """Partially directed graph representing a Markov equivalence class."""

    def __init__(self, node_count: int, directed: Iterable[tuple[int, int]], undirected: Iterable[tuple[int, int]]):
        self.node_count = node_count
        self.directed = frozenset(_check_ids(node_count, directed))
        self.undirected = frozenset((min(u, v), max(u, v)) for u, v in _check_ids(node_count, undirected))
        if {(min(u, v), max(u, v)) for u, v in self.directed} & self.undirected:
            raise GraphError("a pair is both directed and undirected")

    def skeleton(self) -> Skeleton:
        return Skeleton(self.node_count, list(self.directed) + list(self.undirected))

    def __eq__(self, other):
        return isinstance(other, Cpdag) and (self.node_count, self.directed, self.undirected) == (
            other.node_count,
            other.directed,
            other.undirected,
        )

    def __hash__(self):
        return hash((self.node_count, self.directed, self.undirected))

    def __repr__(self):
        return f"Cpdag({self.node_count}, directed={sorted(self.directed)}, undirected={sorted(self.undirected)})"


def parents(dag: Dag, j: int) -> frozenset[int]:
    return dag.parents(j)


def ordering_is_consistent(dag: Dag, ordering: Ordering) -> bool:
    """True iff every edge's source precedes its target in ``ordering``."""
    if len(ordering) != dag.node_count:
        raise GraphError(f"ordering has {len(ordering)} nodes, DAG has {dag.node_count}")
    pos = ordering.positions()
    return all(pos[u] < pos[v] for u, v in dag.edges)


def skeleton_of(dag: Dag) -> Skeleton:
    return Skeleton(dag.node_count, dag.edges)


def orient_by_ordering(skeleton: Skeleton, ordering: Ordering) -> Dag:
    """Direct each skeleton edge from the earlier to the later node."""
    if len(ordering) != skeleton.node_count:
        raise GraphError("ordering and skeleton sizes differ")
    pos = ordering.positions()
    return Dag(skeleton.node_count, ((u, v) if pos[u] < pos[v] else (v, u) for u, v in skeleton.edges))


def random_dag(
    p: int,
    max_indegree: int,
    edge_probability: float | None = None,
    rng_seed: int = 0,
) -> Dag:
    """Random DAG over a uniformly random latent ordering.

    Each earlier node is proposed as a parent with ``edge_probability``
    (default ``2d / (p - 1)``, capped at 1); nodes with more than
    ``max_indegree`` proposals keep a uniform random subset.
    """
    if p < 1 or max_indegree < 0:
        raise GraphError("need p >= 1 and max_indegree >= 0")
    if edge_probability is None:
        edge_probability = min(1.0, 2.0 * max_indegree / (p - 1)) if p > 1 else 0.0
    rng = np.random.default_rng(rng_seed)
    latent = rng.permutation(p)
    edges = []
    for m in range(1, p):
        accept = rng.random(m) < edge_probability
        chosen = latent[:m][accept]
        if len(chosen) > max_indegree:
            chosen = rng.choice(chosen, size=max_indegree, replace=False)
        child = int(latent[m])
        edges.extend((int(u), child) for u in chosen)
    return Dag(p, edges)


def v_structures(dag: Dag) -> set[tuple[int, int, int]]:
    """Triples (a, b, c), a < c, with a -> b <- c and a, c nonadjacent."""
    skel = skeleton_of(dag)
    out = set()
    for b in range(dag.node_count):
        for a, c in combinations(sorted(dag.parents(b)), 2):
            if not skel.adjacent(a, c):
                out.add((a, b, c))
    return out


def to_cpdag(dag: Dag) -> Cpdag:
    """CPDAG of the Markov equivalence class of ``dag``.

    Orients v-structures, then applies Meek rules 1-4 to a fixpoint,
    scanning node ids in increasing order.
    """
    p = dag.node_count
    skel = skeleton_of(dag)
    directed: set[tuple[int, int]] = set()
    for a, b, c in v_structures(dag):
        directed.add((a, b))
        directed.add((c, b))
    undirected = {e for e in skel.edges if e not in directed and e[::-1] not in directed}

    def und(u, v):
        return (min(u, v), max(u, v)) in undirected

    def orient(u, v):
        undirected.discard((min(u, v), max(u, v)))
        directed.add((u, v))

    changed = True
    while changed:
        changed = False
        for u, v in sorted(undirected):
            for x, y in ((u, v), (v, u)):
                if not und(x, y):
                    break
                nb_x = skel.neighbors(x)
                # R1: a -> x - y, a and y nonadjacent
                r1 = any((a, x) in directed and not skel.adjacent(a, y) for a in range(p) if a != y)
                # R2: x -> k -> y
                r2 = any((x, k) in directed and (k, y) in directed for k in nb_x)
                # R3: x - k1 -> y, x - k2 -> y, k1 and k2 nonadjacent
                ks = sorted(k for k in nb_x if und(x, k) and (k, y) in directed)
                r3 = any(not skel.adjacent(k1, k2) for k1, k2 in combinations(ks, 2))
                # R4: x - k -> l -> y, k and y nonadjacent, x adjacent to l
                r4 = any(
                    und(x, k) and (k, l) in directed and (l, y) in directed and not skel.adjacent(k, y)
                    for k in nb_x
                    for l in nb_x
                    if k != l and l != y and k != y
                )
                if r1 or r2 or r3 or r4:
                    orient(x, y)
                    changed = True
                    break
    return Cpdag(p, directed, undirected)


def write_edge_list(path: str | Path, node_count: int, edges: Iterable[tuple[int, int]], header: str = "") -> None:
    """Write ``src<TAB>dst`` lines, sorted, behind a ``# nodes=p`` comment."""
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append(f"# nodes={node_count}")
    lines.extend(f"{u}\t{v}" for u, v in sorted(edges))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edge_list(path: str | Path) -> tuple[int | None, list[tuple[int, int]]]:
    """Parse an edge-list file; returns (declared node count or None, edges)."""
    declared = None
    edges = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("nodes="):
                try:
                    declared = int(body[len("nodes="):])
                except ValueError:
                    raise EdgeListError(f"{path}:{lineno}: bad node count {body!r}") from None
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise EdgeListError(f"{path}:{lineno}: expected 'src<TAB>dst', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"{path}:{lineno}: node ids must be integers, got {raw!r}") from None
        if u < 0 or v < 0:
            raise EdgeListError(f"{path}:{lineno}: negative node id")
        edges.append((u, v))
    return declared, edges


def _node_count(path, declared, edges, node_count):
    inferred = max((max(e) for e in edges), default=-1) + 1
    if node_count is not None and declared is not None and node_count != declared:
        raise EdgeListError(f"{path}: file declares {declared} nodes, expected {node_count}")
    p = node_count or declared or max(inferred, 1)
    if inferred > p:
        raise EdgeListError(f"{path}: edge references node {inferred - 1} but graph has {p} nodes")
    return p


def read_dag(path: str | Path, node_count: int | None = None) -> Dag:
    declared, edges = read_edge_list(path)
    p = _node_count(path, declared, edges, node_count)
    try:
        return Dag(p, edges)
    except GraphError as exc:
        raise EdgeListError(f"{path}: {exc}") from None


def read_skeleton(path: str | Path, node_count: int | None = None) -> Skeleton:
    declared, edges = read_edge_list(path)
    p = _node_count(path, declared, edges, node_count)
    try:
        return Skeleton(p, edges)
    except GraphError as exc:
        raise EdgeListError(f"{path}: {exc}") from None
