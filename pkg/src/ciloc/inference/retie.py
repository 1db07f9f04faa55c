"""Plateau detection and relabelling of a folded chain along the shortest open path."""
from __future__ import annotations

import numpy as np


def shortest_open_path(dist: np.ndarray, start: int = 0) -> list[int]:
    """Exact Held-Karp: the visiting order of minimum total length that starts at
    ``start``, covers every node once and may end anywhere."""
    n = len(dist)
    if n == 1:
        return [start]
    full = 1 << n
    dp = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=np.int8)
    dp[1 << start, start] = 0.0
    popcount = np.array([bin(m).count("1") for m in range(full)])
    masks_by_size = [np.flatnonzero((popcount == c) & ((np.arange(full) >> start) & 1 == 1))
                     for c in range(n + 1)]
    for size in range(2, n + 1):
        masks = masks_by_size[size]
        for k in range(n):
            if k == start:
                continue
            sel = masks[(masks >> k) & 1 == 1]
            if sel.size == 0:
                continue
            prev = sel ^ (1 << k)
            cand = dp[prev] + dist[:, k][None, :]
            j = np.argmin(cand, axis=1)
            dp[sel, k] = cand[np.arange(sel.size), j]
            parent[sel, k] = j
    mask = full - 1
    last = int(np.argmin(dp[mask]))
    order = []
    while last != -1:
        order.append(last)
        prev = int(parent[mask, last])
        mask ^= 1 << last
        last = prev
    return order[::-1]


def is_plateau(history, window: int = 5, rel_eps: float = 1e-6) -> bool:
    if window < 2:
        raise ValueError("plateau window must be >= 2")
    if len(history) < window:
        return False
    recent = np.asarray(history[-window:], dtype=float)
    return float(recent.max() - recent.min()) < rel_eps * (abs(float(recent[-1])) + 1.0)


def retie(x_hat: np.ndarray) -> np.ndarray:
    """Relabel the points along the shortest open path that starts at the basal node."""
    x = np.asarray(x_hat, dtype=float)
    dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    return x[shortest_open_path(dist, 0)]


def detect_plateau_and_retie(history, x_hat, window: int = 5, rel_eps: float = 1e-6):
    """Returns (configuration, retied flag); the configuration is unchanged without a plateau."""
    if not is_plateau(history, window, rel_eps):
        return np.asarray(x_hat, dtype=float), False
    return retie(x_hat), True
