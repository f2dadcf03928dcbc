"""Finite weighted graphs with an absorbing boundary, and their symmetries.

These graphs are the desk-scale model spaces: truncated regular trees
(vertices at the truncation radius form the boundary), paths (the two
endpoints form the boundary), and custom edge lists.  Vertices are dense
integers ``0..n-1``; for trees vertex 0 is the root.  The graph metric is
hop distance.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import CapacityError

DEFAULT_MAX_VERTICES = 50_000


class GraphSpace:
    """Immutable weighted graph with an interior/boundary split and a vertex measure.

    Parameters
    ----------
    weights : (n, n) array_like
        Symmetric nonnegative edge weights; zero means "no edge", the
        diagonal must be zero.
    interior_mask : (n,) array_like of bool
        True marks an interior vertex, False an absorbing boundary vertex.
    measure : (n,) array_like, optional
        Strictly positive vertex measure.  Defaults to counting measure.
    kind : str
        Construction tag ("regular_tree", "path", "custom").

    Raises
    ------
    ValueError
        If the weights are not symmetric, an interior vertex is isolated,
        or the interior subgraph is disconnected.
    """

    def __init__(self, weights, interior_mask, measure=None, kind="custom", meta=None):
        w = np.array(weights, dtype=float)
        mask = np.array(interior_mask, dtype=bool)
        n = w.shape[0]
        if w.shape != (n, n):
            raise ValueError("weight matrix must be square")
        if mask.shape != (n,):
            raise ValueError("interior mask length must equal the vertex count")
        if not np.array_equal(w, w.T):
            raise ValueError("edge weights must be symmetric")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("self loops are not allowed")
        if measure is None:
            measure = np.ones(n)
        mu = np.array(measure, dtype=float)
        if mu.shape != (n,) or np.any(mu <= 0):
            raise ValueError("vertex measure must be strictly positive")
        if not mask.any():
            raise ValueError("graph needs at least one interior vertex")

        incident = w.sum(axis=1)
        if np.any(incident[mask] == 0):
            bad = int(np.where(mask & (incident == 0))[0][0])
            raise ValueError(f"interior vertex {bad} is isolated")

        interior_idx = np.flatnonzero(mask)
        sub = w[np.ix_(interior_idx, interior_idx)]
        if len(interior_idx) > 1:
            ncomp, _ = connected_components(csr_matrix(sub), directed=False)
            if ncomp != 1:
                raise ValueError("interior subgraph is not connected")

        for arr in (w, mask, mu):
            arr.setflags(write=False)
        self._w = w
        self._mask = mask
        self._mu = mu
        self.kind = kind
        self.meta = dict(meta or {})
        self._dist = None

    # -- basic queries -----------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self._w.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def interior_mask(self) -> np.ndarray:
        return self._mask

    @property
    def measure(self) -> np.ndarray:
        return self._mu

    @property
    def interior(self) -> np.ndarray:
        """Indices of interior vertices, ascending."""
        return np.flatnonzero(self._mask)

    @property
    def boundary(self) -> np.ndarray:
        """Indices of boundary vertices, ascending."""
        return np.flatnonzero(~self._mask)

    @property
    def incident_weight(self) -> np.ndarray:
        """Total edge weight at each vertex (the walk's jump normalisation)."""
        return self._w.sum(axis=1)

    def neighbors(self, x: int) -> np.ndarray:
        return np.flatnonzero(self._w[x] > 0)

    def distance_matrix(self) -> np.ndarray:
        """All-pairs hop distance (unweighted shortest path), cached."""
        if self._dist is None:
            d = shortest_path(csr_matrix(self._w != 0), method="D", unweighted=True)
            d.setflags(write=False)
            self._dist = d
        return self._dist

    def distance(self, x: int, y: int) -> float:
        return float(self.distance_matrix()[x, y])

    def default_base_point(self) -> int:
        """Interior vertex farthest from the boundary (lowest index on ties).

        This is the root for trees and the midpoint for paths.
        """
        if len(self.boundary) == 0:
            return int(self.interior[0])
        d = self.distance_matrix()[:, self.boundary].min(axis=1)
        d = np.where(self._mask, d, -np.inf)
        return int(np.argmax(d))

    def __repr__(self):  # pragma: no cover
        return (f"GraphSpace(kind={self.kind!r}, n={self.n_vertices}, "
                f"interior={len(self.interior)}, boundary={len(self.boundary)})")


class Automorphism:
    """A graph symmetry: a vertex permutation preserving weights, measure,
    and the interior/boundary split.

    The action on functions is ``(a . v)(x) = v(a^{-1}(x))``.
    """

    def __init__(self, graph: GraphSpace, permutation, _validate=True):
        perm = np.array(permutation, dtype=int)
        n = graph.n_vertices
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError("permutation must be a bijection on the vertex set")
        if _validate:
            w = graph.weights
            if not np.array_equal(w[np.ix_(perm, perm)], w):
                raise ValueError("permutation does not preserve edge weights")
            if not np.array_equal(graph.interior_mask[perm], graph.interior_mask):
                raise ValueError("permutation does not preserve the boundary split")
            if not np.array_equal(graph.measure[perm], graph.measure):
                raise ValueError("permutation does not preserve the vertex measure")
        perm.setflags(write=False)
        self.graph = graph
        self.perm = perm
        self._inv = np.argsort(perm)
        self._inv.setflags(write=False)

    def apply(self, x: int) -> int:
        return int(self.perm[x])

    def inverse(self) -> "Automorphism":
        return Automorphism(self.graph, self._inv, _validate=False)

    def act_on_field(self, values: np.ndarray) -> np.ndarray:
        """Pull a vertex field back through the inverse map: result[x] = values[a^-1 x].

        Works on the last axis, so stacked fields transform in one call.
        """
        return np.asarray(values)[..., self._inv]

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.perm, np.arange(self.graph.n_vertices)))

    def __repr__(self):  # pragma: no cover
        return f"Automorphism(n={len(self.perm)}, identity={self.is_identity()})"


def _tree_level_sizes(q: int, radius: int) -> list[int]:
    sizes = [1]
    for k in range(1, radius + 1):
        sizes.append((q + 1) * q ** (k - 1))
    return sizes


def build_regular_tree(q: int, radius: int,
                       max_vertices: int = DEFAULT_MAX_VERTICES) -> GraphSpace:
    """Rooted (q+1)-regular tree truncated at hop radius ``radius``.

    The root (vertex 0) has q+1 children, every deeper interior vertex has
    q children; vertices at distance ``radius`` are the absorbing boundary.
    Unit edge weights, counting measure.  Vertices are numbered level by
    level, children consecutively per parent.

    Raises
    ------
    CapacityError
        If the vertex count would exceed ``max_vertices``.
    """
    if q < 1 or radius < 1:
        raise ValueError("need q >= 1 and radius >= 1")
    total = sum(_tree_level_sizes(q, radius))
    if total > max_vertices:
        raise CapacityError(
            f"regular tree q={q}, radius={radius} has {total} vertices "
            f"(limit {max_vertices})")

    w = np.zeros((total, total))
    mask = np.ones(total, dtype=bool)
    level = [0]
    nxt = 1
    for k in range(1, radius + 1):
        new_level = []
        n_children = q + 1 if k == 1 else q
        for parent in level:
            for _ in range(n_children):
                w[parent, nxt] = w[nxt, parent] = 1.0
                new_level.append(nxt)
                nxt += 1
        level = new_level
    mask[level] = False
    return GraphSpace(w, mask, kind="regular_tree", meta={"q": q, "radius": radius})


def build_path(n: int) -> GraphSpace:
    """Path of ``n >= 3`` vertices with unit weights; the endpoints are boundary."""
    if n < 3:
        raise ValueError("a path needs at least 3 vertices")
    w = np.zeros((n, n))
    for i in range(n - 1):
        w[i, i + 1] = w[i + 1, i] = 1.0
    mask = np.ones(n, dtype=bool)
    mask[0] = mask[n - 1] = False
    return GraphSpace(w, mask, kind="path", meta={"n": n})


def _bfs_children(g: GraphSpace, root: int) -> dict[int, list[int]]:
    """Children lists of the BFS tree from ``root``, in ascending index order."""
    children: dict[int, list[int]] = {}
    seen = {root}
    frontier = [root]
    while frontier:
        nxt = []
        for v in frontier:
            kids = [int(u) for u in g.neighbors(v) if u not in seen]
            kids.sort()
            children[v] = kids
            seen.update(kids)
            nxt.extend(kids)
        frontier = nxt
    return children


def tree_automorphism(g: GraphSpace, subtree_swap: tuple[int, int]) -> Automorphism:
    """Permutation exchanging two root subtrees of a tree, identity elsewhere.

    ``subtree_swap`` names two children of the root by their position in the
    root's ascending child list.  The subtrees are matched recursively in
    child order; non-isomorphic subtrees are rejected.
    """
    i, j = subtree_swap
    root = 0
    children = _bfs_children(g, root)
    top = children[root]
    if not (0 <= i < len(top) and 0 <= j < len(top)):
        raise ValueError(f"root has {len(top)} children; swap {subtree_swap} invalid")
    perm = np.arange(g.n_vertices)
    if i != j:
        def pair_up(a, b):
            ka, kb = children.get(a, []), children.get(b, [])
            if len(ka) != len(kb):
                raise ValueError(
                    f"subtrees at root children {i} and {j} are not isomorphic")
            perm[a], perm[b] = b, a
            for ca, cb in zip(ka, kb):
                pair_up(ca, cb)
        pair_up(top[i], top[j])
    return Automorphism(g, perm)


def load_edge_list(path, boundary, measure=None) -> GraphSpace:
    """Graph from a text file of ``u v weight`` triples plus a boundary list.

    Lines starting with ``#`` and blank lines are skipped.  Vertex ids must
    be dense in ``0..n-1``.
    """
    edges = []
    max_id = -1
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"bad edge line: {line!r}")
            u, v, wt = int(parts[0]), int(parts[1]), float(parts[2])
            if u == v:
                raise ValueError(f"self loop on vertex {u}")
            if wt <= 0:
                raise ValueError(f"nonpositive weight on edge {u},{v}")
            edges.append((u, v, wt))
            max_id = max(max_id, u, v)
    n = max_id + 1
    w = np.zeros((n, n))
    for u, v, wt in edges:
        w[u, v] = w[v, u] = wt
    mask = np.ones(n, dtype=bool)
    mask[list(boundary)] = False
    return GraphSpace(w, mask, measure=measure, kind="custom")
