"""Particle-set heuristics: neighbour/extrapolated moves, helix prediction, the
rotated branch, nearest candidates, and diversity-preserving decimation."""
from __future__ import annotations

import numpy as np

from ..candidates import CandidateSet
from ..mrf import MrfModel, UnaryField, pairwise_table


def rotate_about_axis(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation of row vectors ``v`` about the unit vector ``axis``."""
    k = axis / np.linalg.norm(axis)
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(k, v) * s + np.outer(v @ k, k) * (1 - c)


def extrapolate_apical(x_hat: np.ndarray) -> np.ndarray:
    """Next contact beyond the apical end: repeat the last link length and last turn."""
    v1 = x_hat[-2] - x_hat[-3]
    v2 = x_hat[-1] - x_hat[-2]
    axis = np.cross(v1, v2)
    n1, n2, na = np.linalg.norm(v1), np.linalg.norm(v2), np.linalg.norm(axis)
    if n1 < 1e-12 or n2 < 1e-12 or na < 1e-12 * n1 * n2:
        return x_hat[-1] + v2
    angle = np.arctan2(na, float(v1 @ v2))
    return x_hat[-1] + rotate_about_axis(v2[None, :], axis, angle)[0]


def mobility_particles(x_hat: np.ndarray) -> list[np.ndarray]:
    n = len(x_hat)
    out = []
    for t in range(n):
        pts = [x_hat[u] for u in (t - 1, t + 1) if 0 <= u < n]
        if t == n - 1 and n >= 3:
            pts.append(extrapolate_apical(x_hat))
        out.append(np.asarray(pts).reshape(-1, 3))
    return out


def rotated_particles(x_hat: np.ndarray) -> np.ndarray | None:
    """x_hat turned 180 degrees about the line from the basal node through the centroid."""
    base = x_hat[0]
    axis = x_hat.mean(axis=0) - base
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        return None
    a = axis / norm
    rel = x_hat - base
    along = np.outer(rel @ a, a)
    return base + 2 * along - rel


def fit_helix(window, first_index: int, n_nodes: int) -> np.ndarray:
    """Fit a constant-pitch helix to 4-6 consecutive positions and predict all ``n_nodes`` contacts.

    The axis is the principal direction of the cross products of successive second
    differences, which on a helix point straight at the axis (successive links are
    the fallback when those vanish). Turn and rise per step are averaged over the
    window and the circle (center and radius) is a linear least-squares fit in the
    plane normal to the axis. Returns an empty ``(0, 3)`` array when the window is
    collinear.
    """
    q = np.asarray(window, dtype=float)
    if not 4 <= len(q) <= 6:
        raise ValueError(f"helix window needs 4 to 6 points, got {len(q)}")
    d = np.diff(q, axis=0)
    cr = np.cross(d[:-1], d[1:])
    scale = float(np.mean(np.linalg.norm(d, axis=1))) ** 2
    if scale == 0 or np.max(np.linalg.norm(cr, axis=1)) < 1e-9 * scale:
        return np.zeros((0, 3))
    dd = np.diff(d, axis=0)
    cr2 = np.cross(dd[:-1], dd[1:])
    basis = cr2 if np.max(np.linalg.norm(cr2, axis=1)) > 1e-9 * scale**2 else cr
    evals, evecs = np.linalg.eigh(basis.T @ basis)
    a = evecs[:, -1]
    if cr.sum(axis=0) @ a < 0:
        a = -a
    e1 = d[0] - (d[0] @ a) * a
    if np.linalg.norm(e1) < 1e-12:
        e1 = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(e1) < 1e-6:
            e1 = np.cross(a, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)

    planar = np.stack([q @ e1, q @ e2], axis=1)
    axial = q @ a
    pd = np.diff(planar, axis=0)
    turns = np.arctan2(pd[:-1, 0] * pd[1:, 1] - pd[:-1, 1] * pd[1:, 0], np.sum(pd[:-1] * pd[1:], axis=1))
    phi = float(np.mean(turns))
    rise = float(np.mean(np.diff(axial)))

    steps = np.arange(len(q), dtype=float)
    c, s = np.cos(phi * steps), np.sin(phi * steps)
    # planar_j = center + R(phi * j) @ [A, B]
    rows_x = np.stack([np.ones_like(c), np.zeros_like(c), c, -s], axis=1)
    rows_y = np.stack([np.zeros_like(c), np.ones_like(c), s, c], axis=1)
    sol, *_ = np.linalg.lstsq(np.vstack([rows_x, rows_y]), np.concatenate([planar[:, 0], planar[:, 1]]),
                              rcond=None)
    cx, cy, ra, rb = sol
    z0 = float(np.mean(axial - rise * steps))

    rel = np.arange(n_nodes, dtype=float) - first_index
    c, s = np.cos(phi * rel), np.sin(phi * rel)
    px = cx + c * ra - s * rb
    py = cy + s * ra + c * rb
    pz = z0 + rise * rel
    return np.outer(px, e1) + np.outer(py, e2) + np.outer(pz, a)


def lowest_energy_window(model: MrfModel, field: UnaryField, x_hat: np.ndarray,
                         lengths=(4, 5, 6)) -> tuple[int, int]:
    """(start, length) of the consecutive section with the lowest energy per node."""
    n = len(x_hat)
    unary = np.asarray(field.energy(x_hat), dtype=float)
    best = None
    for length in lengths:
        if length > n:
            continue
        for start in range(n - length + 1):
            e = unary[start:start + length].sum()
            for s in range(start, start + length):
                for t in (s + 1, s + 2):
                    if t < start + length:
                        e += pairwise_table(model, s, t, x_hat[s:s + 1], x_hat[t:t + 1])[0, 0]
            score = e / length
            if best is None or score < best[0]:
                best = (score, start, length)
    return best[1], best[2]


def helix_particles(model: MrfModel, field: UnaryField, x_hat: np.ndarray) -> np.ndarray:
    start, length = lowest_energy_window(model, field, x_hat)
    return fit_helix(x_hat[start:start + length], start, len(x_hat))


def augment_particles(particles, x_hat, model: MrfModel, field: UnaryField,
                      cands: CandidateSet | None, k: int) -> list[np.ndarray]:
    """Union of the current sets with the mobility, helix, rotated and nearest-candidate sets."""
    if x_hat is None:
        return [np.asarray(p, dtype=float) for p in particles]
    x_hat = np.asarray(x_hat, dtype=float)
    extra = [[np.asarray(p, dtype=float)] for p in particles]
    for t, pts in enumerate(mobility_particles(x_hat)):
        extra[t].append(pts)
    helix = helix_particles(model, field, x_hat)
    if len(helix):
        for t in range(len(x_hat)):
            extra[t].append(helix[t:t + 1])
    rot = rotated_particles(x_hat)
    if rot is not None:
        for t in range(len(x_hat)):
            extra[t].append(rot[t:t + 1])
    if cands is not None and k > 0 and len(cands):
        for t in range(len(x_hat)):
            extra[t].append(cands.nearest(x_hat[t], k))
    return [np.vstack(parts) for parts in extra]


def decimate_diverse(particles, beliefs, target: int, radius: float):
    """Greedy selection in ascending disbelief that skips particles within ``radius`` of a
    chosen one, topped up with the best leftovers. Returns (particles, kept indices)."""
    if target < 2:
        raise ValueError(f"target particle count must be >= 2, got {target}")
    out, kept = [], []
    for pts, b in zip(particles, beliefs):
        order = np.argsort(b, kind="stable")
        if len(pts) <= target:
            chosen = list(order)
        else:
            dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
            chosen = []
            blocked = np.zeros(len(pts), dtype=bool)
            for i in order:
                if blocked[i]:
                    continue
                chosen.append(i)
                if len(chosen) == target:
                    break
                blocked |= dist[i] < radius
            if len(chosen) < target:
                taken = set(chosen)
                chosen += [i for i in order if i not in taken][: target - len(chosen)]
        idx = np.asarray(chosen, dtype=int)
        out.append(pts[idx])
        kept.append(idx)
    return out, kept
