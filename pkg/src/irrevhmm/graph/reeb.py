"""Reeb graph of a 2D potential by connected-component labelling of energy bands.

The distinct critical energies ``L_0 < ... < L_{K-1}`` cut the energy axis
into bands. Inside a band there are no critical points, so every connected
component of ``{L_k < U < L_{k+1}}`` is an annulus foliated by closed level
curves: one piece of one edge. Components are labelled on a lattice (with
a small energy margin so that the pinch at a saddle is resolved) and tied
together at each critical level:

* a critical point touches the components of the bands just above and just
  below it (found by probing a small circle around it);
* a component whose upper boundary touches no critical point continues
  into exactly one component of the next band (found by gradient ascent).

Chains of band components form the edges. Projection of a state onto the
graph is then an O(1) lattice lookup.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .contour import DEFAULT_BOX, LevelCurveExtractor, _project
from .critical import ConditionViolation, find_critical_points

logger = logging.getLogger(__name__)

__all__ = ["Vertex", "Edge", "ReebGraph", "build_reeb_graph", "project"]

UNRESOLVED = -1


@dataclass(frozen=True)
class Vertex:
    index: int
    location: tuple
    energy: float
    kind: str
    edges_below: tuple = ()
    edges_above: tuple = ()

    @property
    def exterior(self):
        return len(self.edges_below) + len(self.edges_above) == 1

    @property
    def incident(self):
        return self.edges_below + self.edges_above


@dataclass(frozen=True)
class Edge:
    index: int
    lo: float
    hi: float
    lower_vertex: object  # vertex index or None
    upper_vertex: object  # vertex index or None (edge extends to infinite energy)
    pieces: tuple  # ((band, label), ...) from low to high energy

    def contains(self, x):
        return self.lo < x < self.hi


@dataclass
class ReebGraph:
    """Vertices, edges and the lattice data needed to project states onto the graph."""

    potential: object
    box: tuple
    levels: np.ndarray
    vertices: list
    edges: list
    energy_cap: float
    zeta_res: float
    _grid_energy: np.ndarray = field(repr=False)
    _labels: list = field(repr=False)
    _filled: list = field(repr=False)
    _margin: float = 0.0
    _extractor: object = field(default=None, repr=False)
    _piece_edge: dict = field(default_factory=dict, repr=False)
    _vertex_energies: np.ndarray = field(default=None, repr=False)
    _top_labels: list = field(default_factory=list, repr=False)
    _lut: list = field(default_factory=list, repr=False)

    # lattice helpers -------------------------------------------------------
    @property
    def shape(self):
        return self._grid_energy.shape

    def _index(self, z):
        x0, x1, y0, y1 = self.box
        nx, ny = self.shape
        i = np.rint((z[..., 0] - x0) / (x1 - x0) * (nx - 1)).astype(np.int64)
        j = np.rint((z[..., 1] - y0) / (y1 - y0) * (ny - 1)).astype(np.int64)
        inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1), inside

    def band_of(self, x):
        return np.searchsorted(self.levels, x, side="right") - 1

    @property
    def extractor(self):
        if self._extractor is None:
            self._extractor = LevelCurveExtractor(self.potential, self.box)
        return self._extractor

    # public API ------------------------------------------------------------
    @property
    def n_edges(self):
        return len(self.edges)

    def edge_of_piece(self, band, label):
        return self._piece_edge.get((int(band), int(label)))

    def vertex_energy(self, j):
        return self.vertices[j].energy

    def lower_edges(self, j):
        return self.vertices[j].edges_below

    def upper_edges(self, j):
        return self.vertices[j].edges_above

    def lower_edges_by_x(self, j):
        """Lower edges of vertex ``j`` ordered by the x-coordinate of their bottom vertex (left first)."""
        return tuple(sorted(self.vertices[j].edges_below,
                            key=lambda i: self.vertices[self.edges[i].lower_vertex].location[0]))

    def saddles(self):
        return [v.index for v in self.vertices if v.kind == "saddle"]

    def edge_seed(self, i, x):
        """A point on the level curve ``{U = x}`` belonging to edge ``i``."""
        edge = self.edges[i]
        if not (edge.lo <= x <= edge.hi):
            raise ValueError(f"energy {x} outside edge {i} interval ({edge.lo}, {edge.hi})")
        k = int(self.band_of(x))
        k = min(max(k, edge.pieces[0][0]), edge.pieces[-1][0])
        label = dict(edge.pieces)[k]
        ii, jj = np.nonzero(self._labels[k] == label)
        gap = np.abs(self._grid_energy[ii, jj] - x)
        lo = self.levels[k]
        hi = self.levels[k + 1] if k + 1 < len(self.levels) else lo + 1.0
        near = gap <= gap.min() + 0.05 * (hi - lo)
        ii, jj = ii[near], jj[near]
        x0, x1, y0, y1 = self.box
        nx, ny = self.shape
        pts = np.column_stack([x0 + ii * (x1 - x0) / (nx - 1), y0 + jj * (y1 - y0) / (ny - 1)])
        # stay away from the pinch at the edge's vertices
        ends = [self.vertices[v].location for v in (edge.lower_vertex, edge.upper_vertex) if v is not None]
        dist = np.min([np.linalg.norm(pts - np.asarray(e), axis=1) for e in ends], axis=0)
        z = pts[np.argmax(dist)]
        return _project(self.potential, z[None, :], x, n_iter=8)[0]

    def edge_window(self, i):
        """Lattice index window (in extractor coordinates) covering edge ``i``."""
        edge = self.edges[i]
        rows, cols = [], []
        for k, label in edge.pieces:
            r, c = np.nonzero(self._labels[k] == label)
            rows.append(r)
            cols.append(c)
        r, c = np.concatenate(rows), np.concatenate(cols)
        scale = (self.extractor.nx - 1) / (self.shape[0] - 1)
        pad = 8
        return (int(r.min() * scale) - pad, int(r.max() * scale) + pad,
                int(c.min() * scale) - pad, int(c.max() * scale) + pad)

    def project(self, z, zeta_res=None):
        """``(U(z), edge index)``; the index is ``-1`` within ``zeta_res`` of a vertex energy."""
        z = np.asarray(z, dtype=float)
        zeta = self.zeta_res if zeta_res is None else zeta_res
        x = self.potential.energy(z)
        band = self.band_of(x)
        i, j, inside = self._index(z)
        edge = np.full(np.shape(x), UNRESOLVED, dtype=np.int64)
        top = len(self.levels) - 1
        for k in np.unique(band):
            sel = band == k
            if k < 0:
                continue
            labels = self._filled[k][i[sel], j[sel]]
            if k == top and len(self._top_labels) == 1:
                labels = np.where(inside[sel], labels, self._top_labels[0])
            elif not np.all(inside[sel]):
                raise ValueError("state outside the analysed box below the top band")
            edge[sel] = self._lut[k][labels]
        if zeta > 0:
            # near a vertex energy only the edges ending at that vertex are unresolved
            for v, ve in zip(self.vertices, self._vertex_energies):
                sel = np.abs(x - ve) < zeta
                if np.any(sel):
                    edge = np.where(sel & np.isin(edge, v.incident), UNRESOLVED, edge)
        if np.ndim(x) == 0:
            return float(x), int(edge)
        return x, edge

    def describe(self):
        lines = [f"potential {self.potential.name}", f"box {self.box}",
                 f"vertices {len(self.vertices)}"]
        for v in self.vertices:
            lines.append(
                f"  O{v.index} {v.kind:8s} U={v.energy:.8f} at ({v.location[0]:.6f}, {v.location[1]:.6f})"
                f" below={list(v.edges_below)} above={list(v.edges_above)}"
            )
        lines.append(f"edges {len(self.edges)}")
        for e in self.edges:
            hi = "inf" if np.isinf(e.hi) else f"{e.hi:.8f}"
            lines.append(f"  I{e.index} [{e.lo:.8f}, {hi}] lower=O{e.lower_vertex} "
                         f"upper={'-' if e.upper_vertex is None else 'O%d' % e.upper_vertex}")
        return "\n".join(lines)


def _merge_levels(energies, tol):
    levels = []
    for e in sorted(energies):
        if not levels or e - levels[-1] > tol:
            levels.append(e)
    return np.array(levels)


def _probe(grid, labels, box, crit, lo, hi, radius, n=720):
    """Labels of band ``labels`` met on a circle around ``crit`` where ``lo < U < hi``."""
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    z = np.asarray(crit.location) + radius * np.column_stack([np.cos(theta), np.sin(theta)])
    u = grid.potential.energy(z)
    sel = (u > lo) & (u < hi)
    i, j, inside = grid._index(z[sel])
    found = labels[i[inside], j[inside]]
    return set(int(v) for v in found if v > 0)


def build_reeb_graph(potential, criticals=None, box=DEFAULT_BOX, resolution=1024, zeta_res=1e-3):
    """Reeb graph of ``potential`` on ``box``.

    Raises :class:`ConditionViolation` if the level-set topology around a
    critical point is not that of a nondegenerate minimum, saddle or
    maximum alone on its level component.
    """
    if potential.dimension != 2:
        raise ValueError("Reeb graphs are implemented for d = 2")
    if criticals is None:
        criticals = find_critical_points(potential, box)
    if not criticals:
        raise ConditionViolation("no critical points in the box")
    x0, x1, y0, y1 = box
    h = max(x1 - x0, y1 - y0) / (resolution - 1)
    nx = int(round((x1 - x0) / h)) + 1
    ny = int(round((y1 - y0) / h)) + 1
    xs, ys = np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)
    U = potential.energy(np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1))
    boundary = min(U[0].min(), U[-1].min(), U[:, 0].min(), U[:, -1].min())

    scale = max(float(np.ptp([c.energy for c in criticals])), 1e-3)
    levels = _merge_levels([c.energy for c in criticals], 1e-9 * scale)
    if levels[-1] >= boundary:
        raise ConditionViolation("a critical level reaches the box boundary; enlarge the box")
    sad = [max(abs(e) for e in c.eigenvalues) for c in criticals if c.kind == "saddle"]
    margin = 4.0 * (max(sad) if sad else 1.0) * h * h
    widths = np.diff(np.r_[levels, boundary])
    if margin > 0.1 * widths.min():
        raise ConditionViolation("critical levels too close for the lattice resolution; raise resolution")

    K = len(levels)
    structure = ndimage.generate_binary_structure(2, 1)
    labels, filled, counts = [], [], []
    for k in range(K):
        hi = levels[k + 1] - margin if k + 1 < K else np.inf
        region = (U > levels[k] + margin) & (U < hi)
        lab, n = ndimage.label(region, structure=structure)
        lab = lab.astype(np.int16 if n < 2**15 else np.int32)
        if n == 0:
            raise ConditionViolation(f"band {k} is empty on the lattice")
        idx = ndimage.distance_transform_edt(lab == 0, return_distances=False, return_indices=True)
        labels.append(lab)
        filled.append(lab[idx[0], idx[1]])
        counts.append(n)

    graph = ReebGraph(potential, tuple(box), levels, [], [], float(boundary), zeta_res,
                      U, labels, filled, margin)

    # which band components touch each critical point
    touch_above, touch_below = {}, {}
    for c_idx, c in enumerate(criticals):
        k = int(np.argmin(np.abs(levels - c.energy)))
        lam = min(abs(e) for e in c.eigenvalues)
        radius = max(3.0 * h, 1.2 * np.sqrt(8.0 * margin / lam))
        up_hi = levels[k + 1] - margin if k + 1 < K else np.inf
        above = _probe(graph, labels[k], box, c, levels[k] + 2 * margin, up_hi, radius)
        below = set()
        if k > 0:
            below = _probe(graph, labels[k - 1], box, c, levels[k - 1] + margin, levels[k] - 2 * margin, radius)
        expected = {"minimum": (1, 0), "saddle": None, "maximum": (0, 1)}[c.kind]
        shape = (len(above), len(below))
        ok = shape in ((1, 2), (2, 1)) if c.kind == "saddle" else shape == expected
        if not ok:
            raise ConditionViolation(
                f"{c.kind} at {c.location} meets {shape[0]} component(s) above and {shape[1]} below"
            )
        touch_above[c_idx] = [(k, a) for a in sorted(above)]
        touch_below[c_idx] = [(k - 1, b) for b in sorted(below)]

    # continuation of pieces whose upper boundary has no critical point
    ends_at_vertex = {p for c in touch_below.values() for p in c}
    starts_at_vertex = {p for c in touch_above.values() for p in c}
    nxt = {}
    for k in range(K - 1):
        for a in range(1, counts[k] + 1):
            if (k, a) in ends_at_vertex:
                continue
            nxt[(k, a)] = (k + 1, _ascend(graph, labels, k, a, levels, margin, h))
    targets = list(nxt.values())
    if len(set(targets)) != len(targets):
        raise ConditionViolation("two level components merge without a critical point")
    for k in range(1, K):
        for a in range(1, counts[k] + 1):
            p = (k, a)
            if (p in starts_at_vertex) == (p in targets):
                raise ConditionViolation(f"band component {p} has inconsistent lower boundary")

    # chain pieces into edges
    prev = {v: k for k, v in nxt.items()}
    crit_of_start = {p: ci for ci, ps in touch_above.items() for p in ps}
    crit_of_end = {p: ci for ci, ps in touch_below.items() for p in ps}
    chains = []
    for p in sorted(starts_at_vertex):
        chain = [p]
        while chain[-1] in nxt:
            chain.append(nxt[chain[-1]])
        chains.append(chain)
    if sum(len(c) for c in chains) != sum(counts):
        raise ConditionViolation("band components not covered by edges")

    def crit_key(ci):
        c = criticals[ci]
        return (c.energy, c.location)

    order = sorted(range(len(criticals)), key=crit_key)
    vmap = {ci: n for n, ci in enumerate(order)}
    raw_edges = []
    for chain in chains:
        lo_c = crit_of_start[chain[0]]
        hi_c = crit_of_end.get(chain[-1])
        lo = criticals[lo_c].energy
        hi = criticals[hi_c].energy if hi_c is not None else np.inf
        seed = _piece_anchor(graph, labels, chain[0])
        raw_edges.append((lo, hi, vmap[lo_c], None if hi_c is None else vmap[hi_c], seed, tuple(chain)))
    raw_edges.sort(key=lambda e: (e[0], e[1], e[4]))
    edges = [Edge(n, lo, hi, lv, uv, chain) for n, (lo, hi, lv, uv, _, chain) in enumerate(raw_edges)]
    piece_edge = {p: e.index for e in edges for p in e.pieces}

    vertices = []
    for ci in order:
        c = criticals[ci]
        below = tuple(sorted(piece_edge[p] for p in touch_below[ci]))
        above = tuple(sorted(piece_edge[p] for p in touch_above[ci]))
        vertices.append(Vertex(vmap[ci], c.location, c.energy, c.kind, below, above))

    graph.vertices = vertices
    graph.edges = edges
    graph._piece_edge = piece_edge
    graph._vertex_energies = np.array([v.energy for v in vertices])
    graph._top_labels = list(range(1, counts[-1] + 1))
    graph._lut = []
    for k in range(K):
        lut = np.full(counts[k] + 1, UNRESOLVED, dtype=np.int64)
        for a in range(1, counts[k] + 1):
            lut[a] = piece_edge[(k, a)]
        graph._lut.append(lut)
    logger.info("Reeb graph of %s: %d vertices, %d edges", potential.name, len(vertices), len(edges))
    return graph


def _piece_anchor(graph, labels, piece):
    k, a = piece
    i, j = np.nonzero(labels[k] == a)
    n = np.argmin(i * labels[k].shape[1] + j)
    return (int(i[n]), int(j[n]))


def _ascend(graph, labels, k, a, levels, margin, h):
    """Follow the gradient from the top of piece ``(k, a)`` into band ``k + 1``."""
    mask = labels[k] == a
    u = np.where(mask, graph._grid_energy, -np.inf)
    i0, j0 = np.unravel_index(np.argmax(u), u.shape)
    x0, x1, y0, y1 = graph.box
    nx, ny = graph.shape
    z = np.array([x0 + i0 * (x1 - x0) / (nx - 1), y0 + j0 * (y1 - y0) / (ny - 1)])
    pot = graph.potential
    target = levels[k + 1] + 3.0 * margin
    for _ in range(100000):
        if pot(z) > target:
            i, j, inside = graph._index(z)
            lab = int(labels[k + 1][i, j])
            if lab > 0:
                return lab
            target += margin
        g = pot.grad(z)
        z = z + 0.25 * h * g / max(np.linalg.norm(g), 1e-300)
    raise ConditionViolation(f"gradient ascent from band component {(k, a)} did not reach band {k + 1}")


def project(graph, z, zeta_res=None):
    """Projection ``Q(z) = (U(z), edge index)``; see :meth:`ReebGraph.project`."""
    return graph.project(z, zeta_res)
