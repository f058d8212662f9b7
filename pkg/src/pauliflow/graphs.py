"""Conflict graphs for Hamiltonian terms, colorings, and clique-cover groupings.

The conflict graph is the complement of the commutativity graph: vertices are
Hamiltonian terms and an edge joins two terms that are NOT compatible under
the chosen mode (fc or qwc). A proper coloring of the conflict graph is
therefore a partition of the terms into mutually compatible groups, and the
minimum color count equals the minimum clique cover of the commutativity
graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pauli import QubitHamiltonian, commutes_fc, commutes_qwc

MODES = ("fc", "qwc")
UNCOLORED = 0

STRATEGIES = ("largest_first", "dsatur", "random_sequential")


class EmptyInputError(ValueError):
    pass


class IncompleteColoringError(ValueError):
    pass


class InvalidColoringError(ValueError):
    pass


class GraphSizeError(ValueError):
    pass


@dataclass(frozen=True)
class CompatGraph:
    """Symmetric, irreflexive conflict relation over term indices."""

    mode: str
    adjacency: np.ndarray  # (n, n) bool

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency must be irreflexive")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[v])

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])


@dataclass(frozen=True)
class Coloring:
    """Vertex -> color assignment; colors run 1..max_color, 0 means uncolored."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignment must be a vector")
        if np.any(a < 0):
            raise ValueError("colors must be >= 1 (0 marks uncolored)")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n_vertices(self) -> int:
        return self.assignment.shape[0]

    @property
    def max_color(self) -> int:
        return int(self.assignment.max(initial=0))

    def is_complete(self) -> bool:
        return bool(np.all(self.assignment != UNCOLORED))


@dataclass(frozen=True)
class Grouping:
    """Partition of term indices; one group per color."""

    groups: tuple[tuple[int, ...], ...] = field(default_factory=tuple)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group_sizes(self) -> list[int]:
        return [len(g) for g in self.groups]


def build_complement_graph(h: QubitHamiltonian, mode: str) -> CompatGraph:
    """Conflict graph of h's terms: edge(i, j) iff terms i, j are incompatible."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if h.n_terms == 0:
        raise EmptyInputError("Hamiltonian has no groupable terms")
    words = h.words()
    n = len(words)
    compatible = commutes_fc if mode == "fc" else commutes_qwc
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if not compatible(words[i], words[j]):
                adj[i, j] = adj[j, i] = True
    return CompatGraph(mode=mode, adjacency=adj)


def _smallest_feasible_color(adj_row: np.ndarray, assignment: np.ndarray) -> int:
    used = set(int(c) for c in assignment[adj_row] if c != UNCOLORED)
    c = 1
    while c in used:
        c += 1
    return c


def greedy_color(g: CompatGraph, strategy: str, seed: int = 0) -> Coloring:
    """Sequential greedy coloring; deterministic given (strategy, seed).

    largest_first orders vertices by descending degree (ties by index); dsatur
    repeatedly picks the uncolored vertex with the most distinct neighbor
    colors (ties by degree, then index); random_sequential permutes vertices
    with a seeded PCG64 generator. Each vertex then takes the smallest color
    not used by its neighbors.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    n = g.n_vertices
    assignment = np.zeros(n, dtype=np.int64)
    if strategy == "dsatur":
        return _dsatur(g)
    if strategy == "largest_first":
        degs = g.degrees()
        order = sorted(range(n), key=lambda v: (-int(degs[v]), v))
    else:
        order = list(np.random.Generator(np.random.PCG64(seed)).permutation(n))
    for v in order:
        assignment[v] = _smallest_feasible_color(g.adjacency[v], assignment)
    return Coloring(assignment)


def _dsatur(g: CompatGraph) -> Coloring:
    n = g.n_vertices
    degrees = g.degrees()
    assignment = np.zeros(n, dtype=np.int64)
    neighbor_colors: list[set[int]] = [set() for _ in range(n)]
    for _ in range(n):
        best = -1
        best_key = None
        for v in range(n):
            if assignment[v] != UNCOLORED:
                continue
            key = (len(neighbor_colors[v]), int(degrees[v]), -v)
            if best_key is None or key > best_key:
                best, best_key = v, key
        c = 1
        while c in neighbor_colors[best]:
            c += 1
        assignment[best] = c
        for u in g.neighbors(best):
            if assignment[u] == UNCOLORED:
                neighbor_colors[u].add(c)
    return Coloring(assignment)


def validate_coloring(g: CompatGraph, coloring: Coloring) -> bool:
    """True iff no edge joins two equal-colored vertices."""
    a = coloring.assignment
    if a.shape[0] != g.n_vertices:
        raise InvalidColoringError(
            f"coloring covers {a.shape[0]} vertices, graph has {g.n_vertices}"
        )
    if not coloring.is_complete():
        raise IncompleteColoringError("coloring has uncolored vertices")
    same = a[:, None] == a[None, :]
    return not bool(np.any(same & g.adjacency))


def exact_min_colors(g: CompatGraph, vertex_limit: int = 20) -> Coloring:
    """Provably minimal proper coloring via DSATUR-ordered branch and bound."""
    n = g.n_vertices
    if n > vertex_limit:
        raise GraphSizeError(f"{n} vertices exceeds the exact-search limit {vertex_limit}")
    best = _dsatur(g)
    best_count = best.max_color
    lower = _greedy_clique_size(g)
    if best_count == lower:
        return best

    adjacency = g.adjacency
    assignment = np.zeros(n, dtype=np.int64)
    best_assignment = best.assignment.copy()

    def search(colored: int, used: int):
        nonlocal best_count, best_assignment
        if used >= best_count:
            return
        if colored == n:
            best_count = used
            best_assignment = assignment.copy()
            return
        # most saturated uncolored vertex next (ties: degree, then index)
        best_v, best_key = -1, None
        for v in range(n):
            if assignment[v] != UNCOLORED:
                continue
            sat = len({int(c) for c in assignment[adjacency[v]] if c != UNCOLORED})
            key = (sat, int(adjacency[v].sum()), -v)
            if best_key is None or key > best_key:
                best_v, best_key = v, key
        forbidden = {int(c) for c in assignment[adjacency[best_v]] if c != UNCOLORED}
        for c in range(1, min(used + 1, best_count - 1) + 1):
            if c in forbidden:
                continue
            assignment[best_v] = c
            search(colored + 1, max(used, c))
            assignment[best_v] = UNCOLORED

    search(0, 0)
    return Coloring(best_assignment)


def _greedy_clique_size(g: CompatGraph) -> int:
    """Greedy max-clique lower bound for the chromatic number."""
    n = g.n_vertices
    if n == 0:
        return 0
    order = sorted(range(n), key=lambda v: -int(g.degrees()[v]))
    clique: list[int] = []
    for v in order:
        if all(g.adjacency[v, u] for u in clique):
            clique.append(v)
    return len(clique)


def coloring_to_grouping(g: CompatGraph, coloring: Coloring) -> Grouping:
    """Groups of term indices by color; requires a complete, proper coloring."""
    if not validate_coloring(g, coloring):
        raise InvalidColoringError("coloring is not proper for this graph")
    a = coloring.assignment
    groups = tuple(
        tuple(int(v) for v in np.flatnonzero(a == c)) for c in range(1, coloring.max_color + 1)
    )
    return Grouping(tuple(grp for grp in groups if grp))


# distinct fill colors for DOT output, reused cyclically past 12 groups
_DOT_PALETTE = (
    "#66c2a5", "#fc8d62", "#8da0cb", "#e78ac3", "#a6d854", "#ffd92f",
    "#e5c494", "#b3b3b3", "#1b9e77", "#d95f02", "#7570b3", "#e7298a",
)


def coloring_to_dot(
    h: QubitHamiltonian,
    g: CompatGraph,
    coloring: Coloring,
    label: str | None = None,
) -> str:
    """Render the colored conflict graph in DOT format.

    Vertices are labeled with the Pauli text of the corresponding term and
    filled with a per-group color; an optional label annotates the graph.
    """
    if not validate_coloring(g, coloring):
        raise InvalidColoringError("coloring is not proper for this graph")
    if h.n_terms != g.n_vertices:
        raise InvalidColoringError("Hamiltonian and graph disagree on term count")
    words = h.words()
    lines = ["graph grouping {", "  node [style=filled];"]
    if label:
        lines.append(f'  label="{label}";')
    for v in range(g.n_vertices):
        color = int(coloring.assignment[v])
        fill = _DOT_PALETTE[(color - 1) % len(_DOT_PALETTE)]
        lines.append(f'  v{v} [label="{words[v].to_dense()}" fillcolor="{fill}" group={color}];')
    for i in range(g.n_vertices):
        for j in range(i + 1, g.n_vertices):
            if g.adjacency[i, j]:
                lines.append(f"  v{i} -- v{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"
