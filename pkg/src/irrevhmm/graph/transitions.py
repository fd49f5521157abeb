"""Counting descents through a saddle energy, attributed to the edge entered."""

from dataclasses import dataclass

import numpy as np

__all__ = ["TransitionCounter", "TransitionCounts", "count_transitions"]


@dataclass
class TransitionCounts:
    vertex: int
    edges: tuple
    counts: np.ndarray  # shape (n_chains, n_edges)
    other: np.ndarray  # descents that landed on an edge not below the vertex (per chain)

    @property
    def total(self):
        return self.counts.sum(axis=0)

    @property
    def n(self):
        return int(self.total.sum())

    def fraction(self, edge):
        n = self.n
        return float(self.total[self.edges.index(edge)] / n) if n else float("nan")

    def standard_error(self, edge, p=None):
        """Binomial standard error of the descent fraction into ``edge``."""
        n = self.n
        p = self.fraction(edge) if p is None else p
        return float(np.sqrt(p * (1 - p) / n)) if n else float("nan")


class TransitionCounter:
    """Observer ``(t, z)`` that counts energy descents through ``U(O_j)``.

    A chain is armed once its energy exceeds ``U(O_j) + zeta_hyst``; an
    armed chain whose energy then falls below ``U(O_j) - zeta_hyst`` registers
    one transition into the edge containing its current state, and is
    disarmed. With ``zeta_hyst = 0`` every down-crossing of the level counts.
    States before ``t_burn`` are ignored.
    """

    def __init__(self, graph, vertex, zeta_hyst=5e-3, t_burn=0.0):
        v = graph.vertices[vertex]
        if not v.edges_below:
            raise ValueError(f"vertex {vertex} has no lower edges")
        self.graph = graph
        self.vertex = vertex
        self.level = v.energy
        self.edges = tuple(v.edges_below)
        self.zeta = float(zeta_hyst)
        self.t_burn = float(t_burn)
        self.armed = None
        self.counts = None
        self.other = None

    def _init(self, n):
        self.armed = np.zeros(n, dtype=bool)
        self.counts = np.zeros((n, len(self.edges)), dtype=np.int64)
        self.other = np.zeros(n, dtype=np.int64)

    def __call__(self, t, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if self.armed is None:
            self._init(len(z))
        if t < self.t_burn:
            return
        finite = np.all(np.isfinite(z), axis=1)
        u = np.where(finite, self.graph.potential.energy(np.where(finite[:, None], z, 0.0)), np.nan)
        fire = self.armed & (u < self.level - self.zeta)
        if self.zeta > 0:
            self.armed = (self.armed & ~fire) | (u > self.level + self.zeta)
        else:
            self.armed = (self.armed & ~fire) | (u >= self.level)
        if fire.any():
            _, edge = self.graph.project(z[fire], zeta_res=0.0)
            rows = np.nonzero(fire)[0]
            for r, e in zip(rows, edge):
                if e in self.edges:
                    self.counts[r, self.edges.index(e)] += 1
                else:
                    self.other[r] += 1

    def result(self):
        if self.armed is None:
            self._init(1)
        return TransitionCounts(self.vertex, self.edges, self.counts.copy(), self.other.copy())


def count_transitions(stream, graph, vertex, zeta_hyst=5e-3, t_burn=0.0):
    """Fold a ``(t, z)`` stream (single state or a batch of chains) into descent counts."""
    counter = TransitionCounter(graph, vertex, zeta_hyst, t_burn)
    for t, z in stream:
        counter(t, z)
    return counter.result()
