"""Min-sum message passing over finite per-node particle sets.

Messages are stored as ``msgs[(t, s)]``: an array over the particles of node ``s``.
Beliefs are log-disbeliefs, one array per node; lower is better.
"""
from __future__ import annotations

import numpy as np

from ..mrf import MrfModel, UnaryField, pairwise_table


def unary_tables(field: UnaryField, particles) -> list[np.ndarray]:
    return [np.asarray(field.energy(p), dtype=float) for p in particles]


def pairwise_tables(model: MrfModel, particles) -> dict:
    """``pair[(s, t)][i, j] = psi_{s,t}(x_s^i, x_t^j)`` for every directed neighbour pair."""
    pair = {}
    for s, t in model.edges():
        tab = pairwise_table(model, s, t, particles[s], particles[t])
        pair[(s, t)] = tab
        pair[(t, s)] = tab.T
    return pair


def zero_messages(model: MrfModel, particles) -> dict:
    msgs = {}
    for s, t in model.edges():
        msgs[(s, t)] = np.zeros(len(particles[t]))
        msgs[(t, s)] = np.zeros(len(particles[s]))
    return msgs


def _message(pair_st: np.ndarray, h_t: np.ndarray) -> np.ndarray:
    m = np.min(pair_st + h_t[None, :], axis=1)
    return m - m.min()


def compute_messages(model: MrfModel, field: UnaryField, particles, prev_msgs: dict, prev_beliefs,
                     pair: dict | None = None) -> dict:
    """One synchronous update of every message from the previous tables:

    ``M[t->s](x_s) = min_{x_t in P_t} psi_{s,t}(x_s, x_t) + B_t(x_t) - M[s->t](x_t)``,
    then shifted so each message has minimum zero.
    """
    if pair is None:
        pair = pairwise_tables(model, particles)
    new = {}
    for (t, s) in prev_msgs:
        h = prev_beliefs[t] - prev_msgs[(s, t)]
        new[(t, s)] = _message(pair[(s, t)], h)
    return new


def compute_disbelief(model: MrfModel, field: UnaryField, particles, msgs: dict,
                      unary: list | None = None) -> list[np.ndarray]:
    if unary is None:
        unary = unary_tables(field, particles)
    beliefs = [u.copy() for u in unary]
    for (t, s), m in msgs.items():
        beliefs[s] += m
    return beliefs


def sweep_messages(model: MrfModel, unary, pair: dict, msgs: dict, n_sweeps: int = 1) -> dict:
    """In-place style sweeps: basal to apical sending upward, then apical to basal sending downward.

    On a chain (theta4 = 0) one sweep from zero messages yields exact min-marginals.
    """
    msgs = dict(msgs)
    n = model.n_nodes
    nbrs = [model.neighbors(s) for s in range(n)]

    def incoming(t, exclude):
        acc = unary[t].copy()
        for u in nbrs[t]:
            if u != exclude:
                acc += msgs[(u, t)]
        return acc

    for _ in range(n_sweeps):
        for t in range(n):
            for s in nbrs[t]:
                if s > t:
                    msgs[(t, s)] = _message(pair[(s, t)], incoming(t, s))
        for t in range(n - 1, -1, -1):
            for s in nbrs[t]:
                if s < t:
                    msgs[(t, s)] = _message(pair[(s, t)], incoming(t, s))
    return msgs


def decode(beliefs) -> np.ndarray:
    """Per-node argmin of the disbelief; ties go to the lowest particle index."""
    return np.array([int(np.argmin(b)) for b in beliefs])


class ContinuousDisbelief:
    """Disbelief of arbitrary positions given the neighbours' current particle sets:

    ``B_s(x) = psi_s(x) + sum_t min_{x_t} psi_{s,t}(x, x_t) + B_t(x_t) - M[s->t](x_t)``.

    Called as ``f(points, rows)`` where ``row_nodes[rows]`` names the node of each
    point. ``for_axis`` gives a faster evaluator for moves along one coordinate.
    """

    OFFSETS = (-2, -1, 1, 2)

    def __init__(self, model: MrfModel, field: UnaryField, particles, beliefs, msgs: dict, row_nodes=None,
                 anchor=None):
        n = model.n_nodes
        q = max(len(p) for p in particles)
        self.field = field
        pos = np.zeros((n, 4, q, 3))
        h = np.full((n, 4, q), np.inf)
        w = np.zeros((n, 4))
        rest = np.zeros((n, 4))
        for s in range(n):
            for k, off in enumerate(self.OFFSETS):
                t = s + off
                if 0 <= t < n:
                    pt = particles[t]
                    pos[s, k, : len(pt)] = pt
                    h[s, k, : len(pt)] = beliefs[t] - msgs[(s, t)]
                    w[s, k], rest[s, k] = model.edge_params(s, t)
                else:
                    h[s, k, 0] = 0.0
        if row_nodes is None:
            row_nodes = np.arange(n)
        row_nodes = np.asarray(row_nodes)
        self.row_nodes = row_nodes
        self.pos = pos[row_nodes]
        self.h = h[row_nodes]
        self.w = w[row_nodes][:, :, None]
        self.rest = rest[row_nodes][:, :, None]
        # optional hard constraint: node 0 stays within ``radius`` of ``center``
        self.anchor = None
        if anchor is not None:
            center, radius = anchor
            self.anchor = (np.asarray(center, dtype=float), float(radius), row_nodes == 0)

    def _constrain(self, e, pts, rows):
        if self.anchor is None:
            return e
        center, radius, is_basal = self.anchor
        outside = is_basal[rows] & (np.linalg.norm(pts - center, axis=1) > radius)
        return np.where(outside, np.inf, e)

    def _pairwise(self, d2, rows):
        d = np.sqrt(d2)
        pot = self.w[rows] * (d - self.rest[rows]) ** 2 + self.h[rows]
        return pot.min(axis=2).sum(axis=1)

    def __call__(self, x: np.ndarray, rows=None) -> np.ndarray:
        x = np.atleast_2d(x)
        rows = np.arange(len(self.row_nodes)) if rows is None else np.asarray(rows)
        diff = x[:, None, None, :] - self.pos[rows]
        e = self.field.energy(x) + self._pairwise(np.einsum("kabc,kabc->kab", diff, diff), rows)
        return self._constrain(e, x, rows)

    def for_axis(self, x: np.ndarray, axis: int):
        """Evaluator ``(rows, values)`` for points equal to ``x[rows]`` except along ``axis``."""
        others = [c for c in range(3) if c != axis]
        base = sum((x[:, None, None, c] - self.pos[..., c]) ** 2 for c in others)
        along = np.ascontiguousarray(self.pos[..., axis])

        def evaluate(rows, values):
            pts = x[rows].copy()
            pts[:, axis] = values
            d2 = base[rows] + (values[:, None, None] - along[rows]) ** 2
            return self._constrain(self.field.energy(pts) + self._pairwise(d2, rows), pts, rows)

        return evaluate
