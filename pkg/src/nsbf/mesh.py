"""Forest-of-quadtrees meshes split into triangles, with hanging facets.

Every leaf quad of the forest is cut along its lower-left to upper-right
diagonal into two counter-clockwise triangles.  Leaves are addressed as
``(level, I, J)`` in a global integer lattice: at ``level`` the lattice
spacing is ``root_size / 2**level`` and ``(I >> level, J >> level)`` is the
owning root.  Vertex coordinates are kept as exact integers at resolution
``2**MAX_LEVEL`` per root, which makes hanging-node detection exact.
"""
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAX_LEVEL",
    "INTERIOR",
    "BOUNDARY",
    "HANGING",
    "QuadForest",
    "TriMesh",
    "build_coarse_mesh",
    "uniform_refine",
    "adapt",
    "facet_patches",
    "dump_mesh",
]

MAX_LEVEL = 40

INTERIOR, BOUNDARY, HANGING = 0, 1, 2

_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class StaleCellError(ValueError):
    """A marked cell id does not belong to the mesh being adapted."""


@dataclass(frozen=True)
class QuadForest:
    """Leaves of a forest of quadtrees over equally sized square roots.

    Attributes
    ----------
    origin : tuple of float
        Physical position of the lattice point ``(0, 0)``.
    root_size : float
        Side length of every root square.
    roots : frozenset of (int, int)
        Root positions in units of ``root_size``.
    leaves : frozenset of (int, int, int)
        ``(level, I, J)`` triples.
    balanced : bool
        Whether the 2:1 edge balance has been enforced.
    """

    origin: tuple
    root_size: float
    roots: frozenset
    leaves: frozenset
    balanced: bool = True

    def contains_root(self, level, I, J):
        return (I >> level, J >> level) in self.roots

    def find_leaf(self, level, I, J):
        """Leaf covering lattice cell ``(level, I, J)``, or ``None``.

        Returns the leaf itself, an ancestor, or ``None`` when the position is
        covered by finer leaves or lies outside the forest.
        """
        if I < 0 or J < 0 or not self.contains_root(level, I, J):
            return None
        for lv in range(level, -1, -1):
            s = level - lv
            key = (lv, I >> s, J >> s)
            if key in self.leaves:
                return key
        return None

    def edge_neighbours(self, leaf):
        """Leaves sharing (part of) an edge with ``leaf``."""
        lv, I, J = leaf
        out = []
        for dx, dy in _DIRS:
            nI, nJ = I + dx, J + dy
            if nI < 0 or nJ < 0 or not self.contains_root(lv, nI, nJ):
                continue
            hit = self.find_leaf(lv, nI, nJ)
            if hit is not None:
                out.append(hit)
                continue
            # finer neighbours: descend along the shared edge
            stack = [(lv, nI, nJ)]
            while stack:
                cl, cI, cJ = stack.pop()
                for a in (0, 1):
                    for b in (0, 1):
                        ch = (cl + 1, 2 * cI + a, 2 * cJ + b)
                        # keep only children touching the shared edge
                        if dx == 1 and a != 0 or dx == -1 and a != 1:
                            continue
                        if dy == 1 and b != 0 or dy == -1 and b != 1:
                            continue
                        if ch in self.leaves:
                            out.append(ch)
                        else:
                            stack.append(ch)
        return out

    def is_balanced(self):
        return all(
            abs(nb[0] - leaf[0]) <= 1
            for leaf in self.leaves
            for nb in self.edge_neighbours(leaf)
        )

    def leaf_bounds(self, leaf):
        lv, I, J = leaf
        h = self.root_size / 2**lv
        x0 = self.origin[0] + I * h
        y0 = self.origin[1] + J * h
        return x0, y0, h


def _children(leaf):
    lv, I, J = leaf
    return [(lv + 1, 2 * I + a, 2 * J + b) for b in (0, 1) for a in (0, 1)]


def _parent(leaf):
    lv, I, J = leaf
    return (lv - 1, I >> 1, J >> 1)


def _balance(forest_like, leaves):
    """Refine coarser neighbours until all edge neighbours differ by <= 1."""
    leaves = set(leaves)
    f = QuadForest(forest_like.origin, forest_like.root_size, forest_like.roots, leaves, False)
    work = sorted(leaves, reverse=True)
    while work:
        leaf = work.pop()
        if leaf not in leaves:
            continue
        lv, I, J = leaf
        for dx, dy in _DIRS:
            nI, nJ = I + dx, J + dy
            if nI < 0 or nJ < 0 or not f.contains_root(lv, nI, nJ):
                continue
            hit = f.find_leaf(lv, nI, nJ)
            if hit is not None and hit[0] < lv - 1:
                leaves.remove(hit)
                kids = _children(hit)
                leaves.update(kids)
                work.extend(kids)
                work.append(leaf)
                break
    return leaves


@dataclass(eq=False)
class TriMesh:
    """Triangulation of a quad forest.

    Facets are stored once; ``facet_cells[:, 1] == -1`` for boundary and
    hanging-parent facets.  Normals point out of ``facet_cells[:, 0]`` (the
    lower cell id).  Hanging child facets are regular interior facets whose
    two cells are the fine cell and the coarse cell behind the parent.
    """

    forest: QuadForest
    vertices: np.ndarray  # (V, 2)
    cells: np.ndarray  # (N, 3)
    cell_leaf: list  # leaf key per cell
    cell_local: np.ndarray  # 0 or 1
    cell_facets: np.ndarray  # (N, 3), facet opposite local vertex i
    facets: np.ndarray  # (E, 2) vertex ids
    facet_cells: np.ndarray  # (E, 2)
    facet_kind: np.ndarray  # INTERIOR / BOUNDARY / HANGING
    hanging: dict  # parent facet -> (child, child)
    facet_parent: np.ndarray = field(default=None)  # child -> parent or -1

    def __post_init__(self):
        v = self.vertices
        P = v[self.cells]  # (N,3,2)
        self.cell_verts = P
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        self.area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(self.area <= 0):
            raise ValueError("degenerate or clockwise cell")
        self.centroid = P.mean(axis=1)
        edges = np.stack(
            [P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]], axis=1
        )
        lens = np.linalg.norm(edges, axis=2)
        self.diameter = lens.max(axis=1)
        # outward normals of the local facets (counter-clockwise cells)
        self.cell_normals = np.stack([edges[..., 1], -edges[..., 0]], axis=2) / lens[..., None]
        self.cell_facet_len = lens

        a = v[self.facets[:, 0]]
        b = v[self.facets[:, 1]]
        t = b - a
        self.h_F = np.linalg.norm(t, axis=1)
        self.midpoint = 0.5 * (a + b)
        n = np.column_stack([t[:, 1], -t[:, 0]]) / self.h_F[:, None]
        # orient outward of facet_cells[:, 0]
        owner = self.facet_cells[:, 0]
        flip = np.einsum("ij,ij->i", n, self.midpoint - self.centroid[owner]) < 0
        n[flip] *= -1
        self.normal = n
        if self.facet_parent is None:
            fp = -np.ones(len(self.facets), dtype=int)
            for p, (c1, c2) in self.hanging.items():
                fp[c1] = p
                fp[c2] = p
            self.facet_parent = fp

    # -- convenience -----------------------------------------------------
    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def h(self):
        """Maximum cell diameter."""
        return float(self.diameter.max())

    @property
    def interior_facets(self):
        return np.flatnonzero(self.facet_kind == INTERIOR)

    @property
    def boundary_facets(self):
        return np.flatnonzero(self.facet_kind == BOUNDARY)

    @property
    def hanging_facets(self):
        return np.flatnonzero(self.facet_kind == HANGING)

    def barycentric(self, cell_ids, x):
        """Barycentric coordinates of points ``x`` (M, 2) in ``cell_ids`` (M,)."""
        P = self.cell_verts[cell_ids]
        T = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
        rhs = x - P[:, 0]
        l12 = np.linalg.solve(T, rhs[..., None])[..., 0]
        return np.column_stack([1.0 - l12.sum(axis=1), l12])


def _triangulate(forest):
    M = MAX_LEVEL
    leaves = sorted(forest.leaves, key=lambda k: (k[2] << (M - k[0]), k[1] << (M - k[0]), k[0]))
    vid = {}
    keys = []

    def vert(X, Y):
        k = (X, Y)
        i = vid.get(k)
        if i is None:
            i = vid[k] = len(keys)
            keys.append(k)
        return i

    cells, cell_leaf, cell_local = [], [], []
    for leaf in leaves:
        lv, I, J = leaf
        s = 1 << (M - lv)
        X0, Y0 = I * s, J * s
        v00 = vert(X0, Y0)
        v10 = vert(X0 + s, Y0)
        v11 = vert(X0 + s, Y0 + s)
        v01 = vert(X0, Y0 + s)
        cells.append((v00, v10, v11))
        cells.append((v00, v11, v01))
        cell_leaf += [leaf, leaf]
        cell_local += [0, 1]
    cells = np.array(cells, dtype=np.int64)
    ikeys = np.array(keys, dtype=object)
    scale = forest.root_size / float(1 << M)
    verts = np.array(
        [[forest.origin[0] + X * scale, forest.origin[1] + Y * scale] for X, Y in keys]
    )

    # facet opposite local vertex i
    loc = cells[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
    srt = np.sort(loc, axis=1)
    uniq, first, inv = np.unique(srt, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    # keep the orientation of the first occurrence (not significant)
    facets = loc[first]
    E = len(facets)
    cell_facets = inv.reshape(-1, 3)
    owner = np.repeat(np.arange(len(cells)), 3)
    fc = -np.ones((E, 2), dtype=np.int64)
    count = np.zeros(E, dtype=np.int64)
    for c, f in zip(owner, inv):
        fc[f, count[f]] = c
        count[f] += 1
    kind = np.where(count == 2, INTERIOR, BOUNDARY)

    edge_id = {(int(a), int(b)): i for i, (a, b) in enumerate(uniq)}
    hanging = {}
    for f in np.flatnonzero(count == 1):
        a, b = uniq[f]
        Xa, Ya = ikeys[a]
        Xb, Yb = ikeys[b]
        m = vid.get(((Xa + Xb) // 2, (Ya + Yb) // 2))
        if m is None:
            continue
        c1 = edge_id.get((min(a, m), max(a, m)))
        c2 = edge_id.get((min(m, b), max(m, b)))
        if c1 is None or c2 is None:
            raise ValueError("unbalanced forest: hanging facet without children")
        hanging[int(f)] = (int(c1), int(c2))
    for p, (c1, c2) in hanging.items():
        kind[p] = HANGING
        coarse = fc[p, 0]
        for c in (c1, c2):
            kind[c] = INTERIOR
            fc[c, 1] = coarse
    fc_sorted = fc.copy()
    two = fc[:, 1] >= 0
    fc_sorted[two] = np.sort(fc[two], axis=1)
    return TriMesh(
        forest=forest,
        vertices=verts,
        cells=cells,
        cell_leaf=cell_leaf,
        cell_local=np.array(cell_local),
        cell_facets=cell_facets,
        facets=facets,
        facet_cells=fc_sorted,
        facet_kind=kind,
        hanging=hanging,
    )


def build_coarse_mesh(domain="unit_square", n=2):
    """Triangulated macro mesh.

    ``domain`` is ``"unit_square"`` (``n`` x ``n`` quads on (0,1)^2) or
    ``"l_shape"`` (three unit quads covering (-1,1)^2 minus [0,1)x(-1,0]).
    """
    if domain == "unit_square":
        if n < 1:
            raise ValueError("n must be >= 1")
        roots = frozenset((i, j) for i in range(n) for j in range(n))
        forest = QuadForest((0.0, 0.0), 1.0 / n, roots, frozenset((0, i, j) for i, j in roots))
    elif domain == "l_shape":
        roots = frozenset([(0, 0), (0, 1), (1, 1)])
        forest = QuadForest((-1.0, -1.0), 1.0, roots, frozenset((0, i, j) for i, j in roots))
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return _triangulate(forest)


def uniform_refine(mesh, times=1):
    forest = mesh.forest
    leaves = forest.leaves
    for _ in range(times):
        leaves = frozenset(c for leaf in leaves for c in _children(leaf))
    return _triangulate(QuadForest(forest.origin, forest.root_size, forest.roots, leaves))


def adapt(mesh, refine_set=(), coarsen_set=()):
    """Refine and coarsen the owning quads of marked triangles.

    A quad is refined when any of its triangles is marked for refinement.  A
    parent is restored only when all triangles of its four leaf children are
    marked for coarsening and the coarser cell keeps the 2:1 balance.  Balance
    is then enforced by refining coarse neighbours.
    """
    refine_set = set(int(c) for c in refine_set)
    coarsen_set = set(int(c) for c in coarsen_set)
    n = mesh.n_cells
    for c in refine_set | coarsen_set:
        if not 0 <= c < n:
            raise StaleCellError(f"cell id {c} not in mesh with {n} cells")
    if refine_set & coarsen_set:
        raise ValueError("refine and coarsen sets must be disjoint")

    forest = mesh.forest
    leaves = set(forest.leaves)
    to_refine = {mesh.cell_leaf[c] for c in refine_set}
    for leaf in to_refine:
        leaves.remove(leaf)
        leaves.update(_children(leaf))

    # coarsening candidates: all 8 triangles of 4 sibling leaves marked
    marked_leaves = {}
    for c in coarsen_set:
        leaf = mesh.cell_leaf[c]
        marked_leaves[leaf] = marked_leaves.get(leaf, 0) + 1
    full = {leaf for leaf, k in marked_leaves.items() if k == 2 and leaf[0] > 0}
    parents = {_parent(leaf) for leaf in full}
    parents = {p for p in parents if all(ch in full and ch in leaves for ch in _children(p))}

    leaves = _balance(forest, leaves)
    for p in sorted(parents):
        kids = _children(p)
        if not all(ch in leaves for ch in kids):
            continue
        trial = (leaves - set(kids)) | {p}
        tf = QuadForest(forest.origin, forest.root_size, forest.roots, frozenset(trial), False)
        if all(abs(nb[0] - p[0]) <= 1 for nb in tf.edge_neighbours(p)):
            leaves = trial
    new = QuadForest(forest.origin, forest.root_size, forest.roots, frozenset(leaves))
    return _triangulate(new)


def facet_patches(mesh):
    """Cell-to-facet incidences with signs, and facet-to-cell adjacency.

    Returns
    -------
    dict with keys
        ``cell_facets`` (N, 3) facet ids as seen by each cell (a coarse cell
        lists its hanging parent facet), ``cell_signs`` (N, 3) +1 where the
        stored facet normal is outward of the cell, ``integration_facets``
        (interior facets including hanging children), ``facet_cells``.
    """
    cf = mesh.cell_facets
    owner = mesh.facet_cells[cf, 0]
    signs = np.where(owner == np.arange(mesh.n_cells)[:, None], 1, -1)
    return {
        "cell_facets": cf,
        "cell_signs": signs,
        "integration_facets": mesh.interior_facets,
        "boundary_facets": mesh.boundary_facets,
        "facet_cells": mesh.facet_cells,
    }


def dump_mesh(mesh):
    """Plain-text dump with VERTICES, CELLS, FACETS and HANGING blocks."""
    lines = [f"VERTICES {len(mesh.vertices)}"]
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{i} {x:.17g} {y:.17g}")
    lines.append(f"CELLS {mesh.n_cells}")
    for i, (a, b, c) in enumerate(mesh.cells):
        lv, I, J = mesh.cell_leaf[i]
        lines.append(f"{i} {a} {b} {c} {lv} {I} {J} {mesh.cell_local[i]}")
    lines.append(f"FACETS {mesh.n_facets}")
    names = {INTERIOR: "interior", BOUNDARY: "boundary", HANGING: "hanging"}
    for i, (a, b) in enumerate(mesh.facets):
        c0, c1 = mesh.facet_cells[i]
        lines.append(f"{i} {a} {b} {c0} {c1} {names[int(mesh.facet_kind[i])]}")
    lines.append(f"HANGING {len(mesh.hanging)}")
    for p in sorted(mesh.hanging):
        c1, c2 = mesh.hanging[p]
        lines.append(f"{p} {c1} {c2}")
    return "\n".join(lines) + "\n"
