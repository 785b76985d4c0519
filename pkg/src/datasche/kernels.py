"""Hot numeric kernels, each in a numba-compiled and a pure-numpy flavour.

The numba path is used when numba imports and ``DATASCHE_NUMBA`` is not set
to ``0``. Both flavours are always importable (``*_numba`` / ``*_numpy``) so
tests and the benchmark can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and os.environ.get("DATASCHE_NUMBA", "1") not in ("0", "false", "no")

INF = np.inf


# ---------------------------------------------------------------------------
# Rectangular assignment (shortest augmenting path with potentials).
#
# ``cost`` is n x m with n <= m. Every row is assigned to a distinct column,
# minimising total cost. Returns ``col_of_row`` (length n).
# ---------------------------------------------------------------------------

@njit(cache=True)
def assign_min_cost_numba(cost):
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)    # p[j]: 1-based row assigned to column j
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.empty(m + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = np.inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            ui0 = u[i0]
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def assign_min_cost_numpy(cost):
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    padded = np.zeros((n + 1, m + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    rows = p[1:]
    has = rows != 0
    col_of_row[rows[has] - 1] = np.nonzero(has)[0]
    return col_of_row


def assign_min_cost(cost):
    cost = np.ascontiguousarray(cost, dtype=float)
    if cost.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if cost.shape[0] > cost.shape[1]:
        raise ValueError("assignment requires rows <= columns")
    if USE_NUMBA:
        return assign_min_cost_numba(cost)
    return assign_min_cost_numpy(cost)


# ---------------------------------------------------------------------------
# Pair log-utility program, solved with a log-barrier Newton method.
#
# Per source i there are four variables (columns of ``v``):
#   0: x1 = train own queue at worker j       (coef b1, uses R1, F_j)
#   1: y1 = ship k's queue to j and train     (coef g1, uses R2, F_j, link)
#   2: x2 = train own queue at worker k       (coef b2, uses R2, F_k)
#   3: y2 = ship j's queue to k and train     (coef g2, uses R1, F_k, link)
# Terms: ln(b1 x1 + g1 y1) and ln(b2 x2 + g2 y2) where active.
# Local rows:  x1 + y2 <= R1,  x2 + y1 <= R2.
# Global rows: sum(y1 + y2) <= link,  sum(x1 + y1) <= F_j,  sum(x2 + y2) <= F_k.
#
# ``free`` (N x 4, bool) marks variables allowed to move; fixed ones stay 0.
# ``act`` (N x 2, bool) marks active terms; each must contain a free variable.
# ---------------------------------------------------------------------------

# Rows of the constraint incidence, per source variable.
_LOCAL = np.array([[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]])
_GLOBAL = np.array([[0.0, 1.0, 0.0, 1.0], [1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])


@njit(cache=True)
def _pair_barrier_value_numba(v, coef, free, act, R, caps, t, loc_on, glob_on, loc_a, glob_a):
    n = v.shape[0]
    val = 0.0
    gl = np.zeros(3)
    for i in range(n):
        for h in range(2):
            if act[i, h]:
                tt = coef[i, 2 * h] * v[i, 2 * h] + coef[i, 2 * h + 1] * v[i, 2 * h + 1]
                if tt <= 0.0:
                    return -np.inf
                val += t * np.log(tt)
        for q in range(2):
            if loc_on[i, q]:
                s = R[i, q]
                for c in range(4):
                    s -= loc_a[q, c] * v[i, c]
                if s <= 0.0:
                    return -np.inf
                val += np.log(s)
        for c in range(4):
            if free[i, c]:
                if v[i, c] <= 0.0:
                    return -np.inf
                val += np.log(v[i, c])
            for g in range(3):
                gl[g] += glob_a[g, c] * v[i, c]
    for g in range(3):
        if glob_on[g]:
            s = caps[g] - gl[g]
            if s <= 0.0:
                return -np.inf
            val += np.log(s)
    return val


@njit(cache=True)
def _solve_spd4(a, b):
    # Cholesky on a 4x4 SPD matrix. Pivots are clamped relative to the largest
    # diagonal entry: near a degenerate vertex one slack term can dwarf the
    # rest and round-off would otherwise push a pivot below zero.
    L = np.zeros((4, 4))
    floor = 1e-13 * max(a[0, 0], a[1, 1], a[2, 2], a[3, 3])
    for r in range(4):
        for c in range(r + 1):
            s = a[r, c]
            for k in range(c):
                s -= L[r, k] * L[c, k]
            if r == c:
                L[r, r] = np.sqrt(max(s, floor))
            else:
                L[r, c] = s / L[c, c]
    y = np.zeros(4)
    for r in range(4):
        s = b[r]
        for k in range(r):
            s -= L[r, k] * y[k]
        y[r] = s / L[r, r]
    x = np.zeros(4)
    for r in range(3, -1, -1):
        s = y[r]
        for k in range(r + 1, 4):
            s -= L[k, r] * x[k]
        x[r] = s / L[r, r]
    return x


@njit(cache=True)
def pair_log_barrier_numba(coef, free, act, R, caps, v0, gap_tol, mu_factor, max_newton):
    n = coef.shape[0]
    loc_a = np.array([[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]])
    glob_a = np.array([[0.0, 1.0, 0.0, 1.0], [1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    loc_on = np.zeros((n, 2), dtype=np.bool_)
    glob_on = np.zeros(3, dtype=np.bool_)
    n_barrier = 0
    for i in range(n):
        for q in range(2):
            for c in range(4):
                if free[i, c] and loc_a[q, c] > 0:
                    loc_on[i, q] = True
            if loc_on[i, q]:
                n_barrier += 1
        for c in range(4):
            if free[i, c]:
                n_barrier += 1
                for g in range(3):
                    if glob_a[g, c] > 0:
                        glob_on[g] = True
    for g in range(3):
        if glob_on[g]:
            n_barrier += 1
    v = v0.copy()
    if n_barrier == 0:
        return v
    t = 1.0
    grad = np.zeros((n, 4))
    h_blk = np.zeros((n, 4, 4))
    zb = np.zeros((n, 4, 3))
    hb = np.zeros((n, 4))
    step = np.zeros((n, 4))
    iters = 0
    while True:
        for _ in range(max_newton):
            iters += 1
            # slacks
            gsum = np.zeros(3)
            for i in range(n):
                for c in range(4):
                    for g in range(3):
                        gsum[g] += glob_a[g, c] * v[i, c]
            gsl = np.ones(3)
            for g in range(3):
                if glob_on[g]:
                    gsl[g] = caps[g] - gsum[g]
            # per-source gradient and block Hessian (negated)
            for i in range(n):
                for r in range(4):
                    grad[i, r] = 0.0
                    for c in range(4):
                        h_blk[i, r, c] = 0.0
                for h in range(2):
                    if act[i, h]:
                        a0 = coef[i, 2 * h]
                        a1 = coef[i, 2 * h + 1]
                        tt = a0 * v[i, 2 * h] + a1 * v[i, 2 * h + 1]
                        cvec0 = a0 if free[i, 2 * h] else 0.0
                        cvec1 = a1 if free[i, 2 * h + 1] else 0.0
                        grad[i, 2 * h] += t * cvec0 / tt
                        grad[i, 2 * h + 1] += t * cvec1 / tt
                        w = t / (tt * tt)
                        h_blk[i, 2 * h, 2 * h] += w * cvec0 * cvec0
                        h_blk[i, 2 * h, 2 * h + 1] += w * cvec0 * cvec1
                        h_blk[i, 2 * h + 1, 2 * h] += w * cvec0 * cvec1
                        h_blk[i, 2 * h + 1, 2 * h + 1] += w * cvec1 * cvec1
                for q in range(2):
                    if loc_on[i, q]:
                        s = R[i, q]
                        for c in range(4):
                            s -= loc_a[q, c] * v[i, c]
                        for r in range(4):
                            ar = loc_a[q, r] if free[i, r] else 0.0
                            grad[i, r] -= ar / s
                            for c in range(4):
                                ac = loc_a[q, c] if free[i, c] else 0.0
                                h_blk[i, r, c] += ar * ac / (s * s)
                for r in range(4):
                    if free[i, r]:
                        grad[i, r] += 1.0 / v[i, r]
                        h_blk[i, r, r] += 1.0 / (v[i, r] * v[i, r])
                        for g in range(3):
                            if glob_on[g]:
                                grad[i, r] -= glob_a[g, r] / gsl[g]
                    else:
                        for c in range(4):
                            h_blk[i, r, c] = 0.0
                            h_blk[i, c, r] = 0.0
                        h_blk[i, r, r] = 1.0
                        grad[i, r] = 0.0
            # Woodbury: (B + U W U^T)^{-1} g
            cap = np.zeros((3, 3))
            uth = np.zeros(3)
            for g in range(3):
                cap[g, g] = gsl[g] * gsl[g] if glob_on[g] else 1.0
            for i in range(n):
                hb[i] = _solve_spd4(h_blk[i], grad[i])
                for g in range(3):
                    col = np.zeros(4)
                    if glob_on[g]:
                        for c in range(4):
                            if free[i, c]:
                                col[c] = glob_a[g, c]
                    zb[i, :, g] = _solve_spd4(h_blk[i], col)
                for g in range(3):
                    if glob_on[g]:
                        for c in range(4):
                            if free[i, c]:
                                uth[g] += glob_a[g, c] * hb[i, c]
                                for g2 in range(3):
                                    cap[g, g2] += glob_a[g, c] * zb[i, c, g2]
            if not (np.all(np.isfinite(cap)) and np.all(np.isfinite(uth))):
                break
            corr = np.linalg.solve(cap, uth)
            dec = 0.0
            for i in range(n):
                for c in range(4):
                    s = hb[i, c]
                    for g in range(3):
                        s -= zb[i, c, g] * corr[g]
                    step[i, c] = s
                    dec += grad[i, c] * s
            if not np.isfinite(dec) or dec * 0.5 <= 1e-10 * max(1.0, t):
                break
            # largest feasible step
            amax = 1.0 / 0.99
            for i in range(n):
                for c in range(4):
                    if free[i, c] and step[i, c] < 0:
                        amax = min(amax, -v[i, c] / step[i, c])
                for q in range(2):
                    if loc_on[i, q]:
                        s = R[i, q]
                        ds = 0.0
                        for c in range(4):
                            s -= loc_a[q, c] * v[i, c]
                            ds += loc_a[q, c] * step[i, c]
                        if ds > 0:
                            amax = min(amax, s / ds)
                for h in range(2):
                    if act[i, h]:
                        tt = coef[i, 2 * h] * v[i, 2 * h] + coef[i, 2 * h + 1] * v[i, 2 * h + 1]
                        dt = coef[i, 2 * h] * step[i, 2 * h] + coef[i, 2 * h + 1] * step[i, 2 * h + 1]
                        if dt < 0:
                            amax = min(amax, -tt / dt)
            for g in range(3):
                if glob_on[g]:
                    ds = 0.0
                    for i in range(n):
                        for c in range(4):
                            ds += glob_a[g, c] * step[i, c]
                    if ds > 0:
                        amax = min(amax, gsl[g] / ds)
            alpha = 0.99 * amax
            f0 = _pair_barrier_value_numba(v, coef, free, act, R, caps, t, loc_on, glob_on, loc_a, glob_a)
            accepted = False
            for _ls in range(60):
                cand = v + alpha * step
                f1 = _pair_barrier_value_numba(cand, coef, free, act, R, caps, t, loc_on, glob_on, loc_a, glob_a)
                if f1 >= f0 + 0.25 * alpha * dec:
                    v = cand
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
        if n_barrier / t < gap_tol:
            break
        t *= mu_factor
    return v


def _pair_barrier_value_numpy(v, coef, free, act, R, caps, t, loc_on, glob_on):
    terms = np.stack([coef[:, 0] * v[:, 0] + coef[:, 1] * v[:, 1],
                      coef[:, 2] * v[:, 2] + coef[:, 3] * v[:, 3]], axis=1)
    loc_s = R - v @ _LOCAL.T
    glob_s = caps - (v @ _GLOBAL.T).sum(axis=0)
    if (np.any(terms[act] <= 0) or np.any(loc_s[loc_on] <= 0)
            or np.any(glob_s[glob_on] <= 0) or np.any(v[free] <= 0)):
        return -INF
    return (t * np.log(terms[act]).sum() + np.log(loc_s[loc_on]).sum()
            + np.log(glob_s[glob_on]).sum() + np.log(v[free]).sum())


def pair_log_barrier_numpy(coef, free, act, R, caps, v0, gap_tol, mu_factor, max_newton):
    n = coef.shape[0]
    freef = free.astype(float)
    loc_on = (freef @ _LOCAL.T) > 0
    glob_on = ((freef @ _GLOBAL.T) > 0).any(axis=0)
    n_barrier = int(free.sum() + loc_on.sum() + glob_on.sum())
    v = v0.copy()
    if n_barrier == 0:
        return v
    cmask = coef * freef
    glob_a = _GLOBAL[None, :, :] * freef[:, None, :]      # n x 3 x 4
    glob_a = glob_a * glob_on[None, :, None]
    eye = np.eye(4)
    t = 1.0
    while True:
        for _ in range(max_newton):
            glob_s = np.where(glob_on, caps - (v @ _GLOBAL.T).sum(axis=0), 1.0)
            loc_s = np.where(loc_on, R - v @ _LOCAL.T, 1.0)
            grad = np.zeros((n, 4))
            hess = np.zeros((n, 4, 4))
            for h in range(2):
                cv = cmask[:, 2 * h:2 * h + 2]
                tt = coef[:, 2 * h] * v[:, 2 * h] + coef[:, 2 * h + 1] * v[:, 2 * h + 1]
                on = act[:, h]
                tt = np.where(on, tt, 1.0)
                w = np.where(on, t / tt ** 2, 0.0)
                grad[:, 2 * h:2 * h + 2] += np.where(on, t / tt, 0.0)[:, None] * cv
                hess[:, 2 * h:2 * h + 2, 2 * h:2 * h + 2] += w[:, None, None] * cv[:, :, None] * cv[:, None, :]
            for q in range(2):
                a = _LOCAL[q][None, :] * freef * loc_on[:, q:q + 1]
                grad -= a / loc_s[:, q:q + 1]
                hess += (a[:, :, None] * a[:, None, :]) / (loc_s[:, q] ** 2)[:, None, None]
            vs = np.where(free, v, 1.0)
            grad += np.where(free, 1.0 / vs, 0.0)
            hess += np.where(free, 1.0 / vs ** 2, 0.0)[:, :, None] * eye[None]
            grad -= np.einsum("igc,g->ic", glob_a, 1.0 / glob_s)
            fixed = ~free
            hess[fixed[:, :, None].repeat(4, 2)] = 0.0
            hess[fixed[:, None, :].repeat(4, 1)] = 0.0
            hess += fixed[:, :, None] * eye[None]
            grad[fixed] = 0.0
            rhs = np.concatenate([grad[:, :, None], np.transpose(glob_a, (0, 2, 1))], axis=2)
            try:
                sol = np.linalg.solve(hess, rhs)             # n x 4 x 4
                hb, zb = sol[:, :, 0], sol[:, :, 1:]
                cap = np.diag(np.where(glob_on, glob_s ** 2, 1.0)) + np.einsum("igc,ich->gh", glob_a, zb)
                uth = np.einsum("igc,ic->g", glob_a, hb)
                step = hb - np.einsum("icg,g->ic", zb, np.linalg.solve(cap, uth))
            except np.linalg.LinAlgError:
                break
            dec = float(np.sum(grad * step))
            if not np.isfinite(dec) or dec * 0.5 <= 1e-10 * max(1.0, t):
                break
            amax = 1.0 / 0.99
            neg = free & (step < 0)
            if neg.any():
                amax = min(amax, float(np.min(-v[neg] / step[neg])))
            dl = step @ _LOCAL.T
            pos = loc_on & (dl > 0)
            if pos.any():
                amax = min(amax, float(np.min(loc_s[pos] / dl[pos])))
            for h in range(2):
                tt = coef[:, 2 * h] * v[:, 2 * h] + coef[:, 2 * h + 1] * v[:, 2 * h + 1]
                dt = coef[:, 2 * h] * step[:, 2 * h] + coef[:, 2 * h + 1] * step[:, 2 * h + 1]
                sel = act[:, h] & (dt < 0)
                if sel.any():
                    amax = min(amax, float(np.min(-tt[sel] / dt[sel])))
            dg = (step @ _GLOBAL.T).sum(axis=0)
            sel = glob_on & (dg > 0)
            if sel.any():
                amax = min(amax, float(np.min(glob_s[sel] / dg[sel])))
            alpha = 0.99 * amax
            f0 = _pair_barrier_value_numpy(v, coef, free, act, R, caps, t, loc_on, glob_on)
            for _ls in range(60):
                cand = v + alpha * step
                if _pair_barrier_value_numpy(cand, coef, free, act, R, caps, t, loc_on, glob_on) >= f0 + 0.25 * alpha * dec:
                    v = cand
                    break
                alpha *= 0.5
            else:
                break
        if n_barrier / t < gap_tol:
            break
        t *= mu_factor
    return v


def pair_log_barrier(coef, free, act, R, caps, v0, gap_tol=1e-9, mu_factor=20.0, max_newton=80):
    args = (np.ascontiguousarray(coef, dtype=float), np.ascontiguousarray(free, dtype=np.bool_),
            np.ascontiguousarray(act, dtype=np.bool_), np.ascontiguousarray(R, dtype=float),
            np.ascontiguousarray(caps, dtype=float), np.ascontiguousarray(v0, dtype=float),
            float(gap_tol), float(mu_factor), int(max_newton))
    if USE_NUMBA:
        return pair_log_barrier_numba(*args)
    return pair_log_barrier_numpy(*args)
