"""Coordinate-wise slice sampling of exp(-energy / temperature), vectorized over independent rows.

Every row runs its own chain; rows advance in lockstep but never share random
numbers or state. Brackets are found by doubling (initial width ``width``, at most
``max_doublings`` expansions) and shrunk on rejection, with the doubling
acceptance test so the chain leaves the target invariant.
"""
from __future__ import annotations

import numpy as np


class SamplerError(RuntimeError):
    pass


def _inside(e, level):
    return e <= level


def slice_sample(x0, energy_fn, rng: np.random.Generator, n_steps: int, width=1.0,
                 temperature: float = 1.0, max_doublings: int = 10, max_shrink: int = 60) -> np.ndarray:
    """Run ``n_steps`` sweeps over the three coordinates for every row of ``x0``.

    ``energy_fn(points, rows)`` returns the energy of ``points[i]`` under the target of
    row ``rows[i]``. If it also has ``for_axis(x, axis)``, that is used to build an
    evaluator ``(rows, values)`` for points differing from ``x`` along one axis. A row
    whose shrinkage does not terminate keeps its previous point.
    """
    if n_steps < 1:
        raise SamplerError(f"need at least one MCMC step, got {n_steps}")
    x = np.array(x0, dtype=float, copy=True)
    n_rows, n_dim = x.shape
    all_rows = np.arange(n_rows)
    w = np.broadcast_to(np.asarray(width, dtype=float), (n_rows,)).copy()

    def energy(points, rows):
        return np.asarray(energy_fn(points, rows), dtype=float) / temperature

    e_cur = energy(x, all_rows)
    if not np.all(np.isfinite(e_cur)):
        bad = int(np.flatnonzero(~np.isfinite(e_cur))[0])
        raise SamplerError(f"energy at the current point of row {bad} is not finite")

    fast = getattr(energy_fn, "for_axis", None)

    for _ in range(n_steps):
        for axis in range(n_dim):
            if fast is not None:
                along = fast(x, axis)

                def eval_axis(rows, _axis, values, _f=along):
                    return np.asarray(_f(rows, values), dtype=float) / temperature
            else:
                def eval_axis(rows, _axis, values):
                    pts = x[rows].copy()
                    pts[:, _axis] = values
                    return energy(pts, rows)

            x0a = x[:, axis].copy()
            level = e_cur + rng.exponential(1.0, size=n_rows)
            left = x0a - w * rng.random(n_rows)
            right = left + w
            e_left = eval_axis(all_rows, axis, left)
            e_right = eval_axis(all_rows, axis, right)

            # doubling
            grow = _inside(e_left, level) | _inside(e_right, level)
            for _k in range(max_doublings):
                rows = np.flatnonzero(grow)
                if rows.size == 0:
                    break
                span = right[rows] - left[rows]
                go_left = rng.random(rows.size) < 0.5
                lr, rr = rows[go_left], rows[~go_left]
                if lr.size:
                    left[lr] -= span[go_left]
                    e_left[lr] = eval_axis(lr, axis, left[lr])
                if rr.size:
                    right[rr] += span[~go_left]
                    e_right[rr] = eval_axis(rr, axis, right[rr])
                grow[rows] = _inside(e_left[rows], level[rows]) | _inside(e_right[rows], level[rows])

            # shrinkage
            pending = np.ones(n_rows, dtype=bool)
            for _k in range(max_shrink):
                rows = np.flatnonzero(pending)
                if rows.size == 0:
                    break
                cand = left[rows] + rng.random(rows.size) * (right[rows] - left[rows])
                e_cand = eval_axis(rows, axis, cand)
                ok = _inside(e_cand, level[rows])
                doubled = (right[rows] - left[rows]) > 1.1 * w[rows]
                test = ok & doubled
                if np.any(test):
                    ok[test] = _doubling_accept(
                        rows[test], axis, x0a, cand[test], left, right, level, w, eval_axis
                    )
                acc = rows[ok]
                x[acc, axis] = cand[ok]
                e_cur[acc] = e_cand[ok]
                pending[acc] = False
                rej = ~ok
                rr, cr = rows[rej], cand[rej]
                below = cr < x0a[rr]
                left[rr[below]] = cr[below]
                right[rr[~below]] = cr[~below]
    return x


def _doubling_accept(rows, axis, x0a, cand, left, right, level, w, eval_axis) -> np.ndarray:
    """Neal's check that the doubling procedure could have produced the interval from ``cand``."""
    lo = left[rows].copy()
    hi = right[rows].copy()
    start = x0a[rows]
    lev = level[rows]
    e_lo = eval_axis(rows, axis, lo)
    e_hi = eval_axis(rows, axis, hi)
    differ = np.zeros(rows.size, dtype=bool)
    accept = np.ones(rows.size, dtype=bool)
    active = (hi - lo) > 1.1 * w[rows]
    while np.any(active):
        idx = np.flatnonzero(active)
        mid = 0.5 * (lo[idx] + hi[idx])
        c, s0 = cand[idx], start[idx]
        differ[idx] |= (s0 < mid) != (c < mid)
        e_mid = eval_axis(rows[idx], axis, mid)
        move_hi = c < mid
        hi[idx[move_hi]] = mid[move_hi]
        e_hi[idx[move_hi]] = e_mid[move_hi]
        lo[idx[~move_hi]] = mid[~move_hi]
        e_lo[idx[~move_hi]] = e_mid[~move_hi]
        both_out = ~_inside(e_lo[idx], lev[idx]) & ~_inside(e_hi[idx], lev[idx])
        reject = differ[idx] & both_out
        accept[idx[reject]] = False
        active[idx[reject]] = False
        active[idx] &= (hi[idx] - lo[idx]) > 1.1 * w[rows[idx]]
    return accept


def slice_sample_node(s: int, current, disbelief_fn, rng: np.random.Generator, n_steps: int,
                      width: float = 1.0, temperature: float = 1.0) -> np.ndarray:
    """Single-chain form: ``disbelief_fn`` maps an ``(k, 3)`` array of positions of node ``s`` to energies."""
    x = np.asarray(current, dtype=float).reshape(1, 3)
    out = slice_sample(x, lambda pts, rows: disbelief_fn(pts), rng, n_steps, width, temperature)
    return out[0]
