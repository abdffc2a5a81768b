"""Simple undirected labeled graphs and their static statistics.

The graph state is kept in synchronized containers: a dense boolean
adjacency matrix (O(1) membership tests), a flat edge stack with
swap-remove (O(1) uniform edge sampling), and a position matrix mapping
each present edge to its stack slot (O(1) targeted removal). Vertex
counts here are small (n up to a few hundred), so dense storage wins
over anything fancier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Graph",
    "GraphStats",
    "build_graph",
    "edge_update",
    "edge_density",
    "degree_sequence",
    "count_cherries_triangles",
    "homomorphism_density",
    "clustering_coefficients",
    "graph_stats",
    "write_edge_list",
    "read_edge_list",
]


class Graph:
    """Undirected simple graph on vertices 0..n-1.

    Attributes:
        n: number of vertices.
        adj: (n, n) boolean adjacency matrix, symmetric, zero diagonal.
        edge_stack: (C(n,2), 2) int32 array; rows 0..edge_count-1 are the
            live edges, in insertion order disturbed only by swap-removes.
        edge_pos: (n, n) int32 matrix with the stack slot of each present
            edge (symmetric), -1 where no edge is present.
        edge_count: current number of edges.

    Graph values are single-owner mutable; use :meth:`copy` before sharing
    across workers. All statistics functions below are read-only.
    """

    __slots__ = ("n", "adj", "edge_stack", "edge_pos", "edge_count")

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"vertex count must be positive, got {n}")
        self.n = int(n)
        self.adj = np.zeros((n, n), dtype=np.bool_)
        self.edge_stack = np.zeros((n * (n - 1) // 2, 2), dtype=np.int32)
        self.edge_pos = np.full((n, n), -1, dtype=np.int32)
        self.edge_count = 0

    # -- basic mutation/access -------------------------------------------

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u, v])

    def set_edge(self, u: int, v: int, present: bool) -> bool:
        """Set or clear one edge; returns True if the state changed."""
        u, v = _check_pair(self.n, u, v)
        if present == bool(self.adj[u, v]):
            return False
        if present:
            m = self.edge_count
            self.adj[u, v] = True
            self.adj[v, u] = True
            self.edge_stack[m, 0] = u
            self.edge_stack[m, 1] = v
            self.edge_pos[u, v] = m
            self.edge_pos[v, u] = m
            self.edge_count = m + 1
        else:
            k = int(self.edge_pos[u, v])
            last = self.edge_count - 1
            self.adj[u, v] = False
            self.adj[v, u] = False
            self.edge_pos[u, v] = -1
            self.edge_pos[v, u] = -1
            if k != last:
                a, b = self.edge_stack[last]
                self.edge_stack[k, 0] = a
                self.edge_stack[k, 1] = b
                self.edge_pos[a, b] = k
                self.edge_pos[b, a] = k
            self.edge_count = last
        return True

    def edges(self) -> np.ndarray:
        """Live edges as an (edge_count, 2) int array (copy)."""
        return self.edge_stack[: self.edge_count].copy()

    def copy(self) -> "Graph":
        g = Graph.__new__(Graph)
        g.n = self.n
        g.adj = self.adj.copy()
        g.edge_stack = self.edge_stack.copy()
        g.edge_pos = self.edge_pos.copy()
        g.edge_count = self.edge_count
        return g

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.adj, other.adj)

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count})"


@dataclass
class GraphStats:
    """Bundle of static statistics for one graph snapshot.

    clustering holds NaN for vertices of degree < 2, where the defining
    ratio has a zero denominator.
    """

    edge_density: float
    degree_sequence: np.ndarray
    cherry_count: int
    triangle_count: int
    clustering: np.ndarray


def _check_pair(n: int, u: int, v: int) -> tuple[int, int]:
    u, v = int(u), int(v)
    if not (0 <= u < n and 0 <= v < n):
        raise ValueError(f"vertex pair ({u}, {v}) out of range for n={n}")
    if u == v:
        raise ValueError(f"self-loop ({u}, {u}) is not allowed")
    return u, v


def build_graph(n: int, edges) -> Graph:
    """Build a graph from an edge list; duplicate pairs collapse to one edge."""
    g = Graph(n)
    for u, v in edges:
        u, v = _check_pair(n, u, v)
        g.set_edge(u, v, True)
    return g


def edge_update(g: Graph, pair, present: bool) -> bool:
    """Set/clear the given unordered pair; returns True if the graph changed."""
    u, v = pair
    return g.set_edge(u, v, present)


def edge_density(g: Graph) -> float:
    """Edges divided by C(n,2)."""
    if g.n < 2:
        raise ValueError("edge density needs at least 2 vertices")
    return g.edge_count / (g.n * (g.n - 1) / 2)


def degree_sequence(g: Graph) -> np.ndarray:
    return g.adj.sum(axis=1).astype(np.int64)


def _triangles_per_vertex(g: Graph) -> np.ndarray:
    # (A @ A) * A summed over rows counts, for each vertex, adjacent pairs
    # of neighbors twice; float64 matmul is exact for these sizes.
    a = g.adj.astype(np.float64)
    per_vertex = ((a @ a) * a).sum(axis=1) / 2.0
    return np.rint(per_vertex).astype(np.int64)


def count_cherries_triangles(g: Graph) -> tuple[int, int]:
    """Exact cherry (2-path) and triangle counts.

    cherries = sum_v C(deg v, 2); triangles = trace(A^3) / 6.
    """
    deg = degree_sequence(g)
    cherries = int((deg * (deg - 1) // 2).sum())
    triangles = int(_triangles_per_vertex(g).sum() // 3)
    return cherries, triangles


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Per-vertex triangles(v) / C(deg v, 2); NaN where deg < 2."""
    deg = degree_sequence(g)
    tri = _triangles_per_vertex(g)
    out = np.full(g.n, np.nan)
    ok = deg >= 2
    out[ok] = tri[ok] / (deg[ok] * (deg[ok] - 1) / 2)
    return out


_TEST_GRAPH_SIZE = {"edge": 2, "cherry": 3, "triangle": 3}


def homomorphism_density(test: str, g: Graph) -> float:
    """Fraction of injective maps of the test graph into g that preserve edges.

    Normalization is over all C(n,k)*k! injective maps; for the three test
    graphs supported here the count reduces to closed formulas in the edge,
    cherry and triangle counts.
    """
    try:
        k = _TEST_GRAPH_SIZE[test]
    except KeyError:
        raise ValueError(f"unknown test graph {test!r}") from None
    n = g.n
    if n < k:
        raise ValueError(f"test graph {test!r} needs n >= {k}, got n={n}")
    if test == "edge":
        return edge_density(g)
    cherries, triangles = count_cherries_triangles(g)
    maps = n * (n - 1) * (n - 2)
    if test == "cherry":
        # each cherry admits 2 injections (leaves swap around the center)
        return 2 * cherries / maps
    return 6 * triangles / maps


def graph_stats(g: Graph, with_clustering: bool = False) -> GraphStats:
    deg = degree_sequence(g)
    cherries, triangles = count_cherries_triangles(g)
    clustering = clustering_coefficients(g) if with_clustering else np.array([])
    return GraphStats(
        edge_density=edge_density(g),
        degree_sequence=deg,
        cherry_count=cherries,
        triangle_count=triangles,
        clustering=clustering,
    )


# -- edge-list text format: first line "n m", then m lines "u v" ----------


def write_edge_list(g: Graph, path) -> None:
    edges = g.edges()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n} {g.edge_count}\n")
        for u, v in edges:
            a, b = (int(u), int(v)) if u < v else (int(v), int(u))
            fh.write(f"{a} {b}\n")


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("edge-list header must be 'n m'")
        n, m = int(header[0]), int(header[1])
        pairs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            u, v = line.split()
            pairs.append((int(u), int(v)))
    if len(pairs) != m:
        raise ValueError(f"edge-list declared {m} edges but contains {len(pairs)}")
    return build_graph(n, pairs)
