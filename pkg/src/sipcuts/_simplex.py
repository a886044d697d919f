"""Dense bounded-variable primal simplex kernel.

Solves   min c'x   s.t.  A x {<=,>=,==} b,  lb <= x <= ub
with a two-phase method: slack columns absorb row senses, artificial
columns give a feasible start, phase 1 minimizes the artificial sum.
The basis inverse is kept explicitly and refactorized every 64 pivots.
Entering variable: Dantzig rule, switching to Bland's rule after
2*(rows+cols) consecutive degenerate steps. Leaving variable: minimum
ratio, ties broken by largest pivot magnitude then lowest index, so
runs are deterministic.

The core loop is written in the numpy subset numba can compile. By
default it is jitted (cache=True, nogil=True); setting the environment
variable SIPCUTS_PURE_NUMPY=1 before import selects the identical
uncompiled path. `benchmarks/bench_simplex.py` times both.

Status codes: 0 optimal, 1 infeasible, 2 unbounded, 3 iteration limit,
4 numerical trouble. For status 1 the returned ray holds the phase-1 row
multipliers (a Farkas certificate); for status 2 it holds an improving
primal direction in the structural variables.
"""

from __future__ import annotations

import os

import numpy as np

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITER_LIMIT = 3
NUMERIC = 4

FEASTOL = 1e-7
_TOL_D = 1e-9
_TOL_PIV = 1e-9
_REFACTOR_EVERY = 64


def _lp_core(A, b, sense, c, lb, ub, itmax, refactor_every):
    m, n = A.shape
    ncol = n + 2 * m
    inf = np.inf

    # columns: [structural | slack | artificial]; WT[j] is column j of the
    # equality system  A x + slack = b
    WT = np.zeros((ncol, m))
    for j in range(n):
        WT[j] = A[:, j]
    lo = np.empty(ncol)
    hi = np.empty(ncol)
    lo[:n] = lb
    hi[:n] = ub
    for i in range(m):
        WT[n + i, i] = 1.0
        if sense[i] == 0:  # <=
            lo[n + i], hi[n + i] = 0.0, inf
        elif sense[i] == 1:  # >=
            lo[n + i], hi[n + i] = -inf, 0.0
        else:  # ==
            lo[n + i], hi[n + i] = 0.0, 0.0
        lo[n + m + i], hi[n + m + i] = 0.0, 0.0

    # nonbasic start: structural at the finite bound nearest zero, free at 0
    x = np.zeros(ncol)
    vstat = np.zeros(ncol, dtype=np.int8)  # 0 basic, 1 at lb, 2 at ub, 3 free
    for j in range(n):
        if np.isfinite(lo[j]):
            x[j], vstat[j] = lo[j], 1
        elif np.isfinite(hi[j]):
            x[j], vstat[j] = hi[j], 2
        else:
            x[j], vstat[j] = 0.0, 3
    for i in range(m):
        vstat[n + i] = 2 if sense[i] == 1 else 1
        vstat[n + m + i] = 1

    r = b - x[:n] @ WT[:n]  # residuals with slacks at zero
    basis = np.empty(m, dtype=np.int64)
    Binv = np.eye(m)
    for i in range(m):
        ri = r[i]
        slack_ok = (
            (sense[i] == 0 and ri >= 0.0)
            or (sense[i] == 1 and ri <= 0.0)
            or (sense[i] == 2 and ri == 0.0)
        )
        if slack_ok:
            basis[i] = n + i
            x[n + i] = ri
            vstat[n + i] = 0
            WT[n + m + i, i] = 1.0  # unused artificial, stays fixed at 0
        else:
            sig = 1.0 if ri >= 0.0 else -1.0
            WT[n + m + i, i] = sig
            basis[i] = n + m + i
            x[n + m + i] = sig * ri
            vstat[n + m + i] = 0
            hi[n + m + i] = inf
            Binv[i, i] = sig

    cost = np.zeros(ncol)
    cost[n + m :] = 1.0  # phase 1: minimize artificial sum

    phase = 1
    bland = False
    bland_after = 2 * (m + ncol)
    degen_streak = 0
    since_refactor = 0
    it = 0
    status = -1
    y = np.zeros(m)
    ray = np.zeros(n + m)
    scale_b = 1.0 + np.abs(b).max() if m > 0 else 1.0
    rng_ok = (hi - lo) > 1e-12

    while True:
        it += 1
        if it > itmax:
            status = ITER_LIMIT
            break
        if since_refactor >= refactor_every:
            Binv = np.ascontiguousarray(np.linalg.inv(np.ascontiguousarray(WT[basis].T)))
            xt = x.copy()
            xt[basis] = 0.0
            x[basis] = Binv @ (b - xt @ WT)
            since_refactor = 0

        y = cost[basis] @ Binv
        d = cost - WT @ y
        elig = (
            ((vstat == 1) & (d < -_TOL_D))
            | ((vstat == 2) & (d > _TOL_D))
            | ((vstat == 3) & (np.abs(d) > _TOL_D))
        ) & rng_ok
        if phase == 2 and m > 0:
            elig[n + m :] = False

        if not elig.any():
            if phase == 1:
                p1 = x[n + m :].sum()
                if p1 > FEASTOL * scale_b:
                    status = INFEASIBLE
                    ray[n : n + m] = y  # Farkas multipliers for the rows
                    break
                # drive basic artificials out on nonzero pivots; rows whose
                # artificial cannot leave are redundant and keep it at 0
                for p in range(m):
                    if basis[p] >= n + m:
                        alpha = WT[: n + m] @ Binv[p]
                        pick = -1
                        for j in range(n + m):
                            if vstat[j] != 0 and abs(alpha[j]) > 1e-7:
                                pick = j
                                break
                        if pick >= 0:
                            u = Binv @ WT[pick]
                            lv = basis[p]
                            vstat[lv] = 1
                            x[lv] = 0.0
                            hi[lv] = 0.0
                            rng_ok[lv] = False
                            basis[p] = pick
                            vstat[pick] = 0
                            rowl = Binv[p] / u[p]
                            Binv -= np.outer(u, rowl)
                            Binv[p] = rowl
                            since_refactor += 1
                hi[n + m :] = 0.0
                cost = np.zeros(ncol)
                cost[:n] = c
                phase = 2
                bland = False
                degen_streak = 0
                continue
            status = OPTIMAL
            break

        if bland:
            e = np.argmax(elig.astype(np.int8))
        else:
            e = np.argmax(np.where(elig, np.abs(d), -1.0))
        dirn = 1.0 if (vstat[e] == 1 or (vstat[e] == 3 and d[e] < 0.0)) else -1.0

        u = Binv @ WT[e]
        du = dirn * u
        xb = x[basis]
        lbb = lo[basis]
        ubb = hi[basis]
        posm = du > _TOL_PIV
        negm = du < -_TOL_PIV
        dus = np.where(posm | negm, du, 1.0)
        tall = np.where(
            posm, (xb - lbb) / dus, np.where(negm, (xb - ubb) / dus, inf)
        )
        tall = np.where(tall < 0.0, 0.0, tall)
        tmin = tall.min() if m > 0 else inf
        tb = hi[e] - lo[e]
        t = tb if tb < tmin else tmin
        if not np.isfinite(t):
            if phase == 1:
                status = NUMERIC
            else:
                status = UNBOUNDED
                if e < n:
                    ray[e] = dirn
                for p in range(m):
                    if basis[p] < n:
                        ray[basis[p]] = -du[p]
            break

        if t <= _TOL_PIV:
            degen_streak += 1
            if degen_streak > bland_after:
                bland = True
        else:
            degen_streak = 0

        if tb <= tmin:  # entering variable flips to its other bound
            x[basis] = xb - tb * du
            x[e] = hi[e] if vstat[e] == 1 else lo[e]
            vstat[e] = 2 if vstat[e] == 1 else 1
            continue

        cand = tall <= tmin + 1e-9
        if bland:
            leave = np.argmax(np.where(cand, -basis.astype(np.float64), -inf))
        else:
            leave = np.argmax(np.where(cand, np.abs(du), -1.0))
        t = tall[leave]
        x[basis] = xb - t * du
        x[e] = x[e] + dirn * t
        lv = basis[leave]
        if du[leave] > 0.0:
            x[lv] = lo[lv]
            vstat[lv] = 1
        else:
            x[lv] = hi[lv]
            vstat[lv] = 2
        if lv >= n + m:
            hi[lv] = 0.0
            rng_ok[lv] = False
        basis[leave] = e
        vstat[e] = 0
        piv = u[leave]
        rowl = Binv[leave] / piv
        Binv -= np.outer(u, rowl)
        Binv[leave] = rowl
        since_refactor += 1

    if status == OPTIMAL and m > 0:
        Binv = np.ascontiguousarray(np.linalg.inv(np.ascontiguousarray(WT[basis].T)))
        xt = x.copy()
        xt[basis] = 0.0
        x[basis] = Binv @ (b - xt @ WT)
        y = cost[basis] @ Binv
        viol = 0.0
        for p in range(m):
            bp = basis[p]
            v1 = lo[bp] - x[bp]
            v2 = x[bp] - hi[bp]
            if v1 > viol:
                viol = v1
            if v2 > viol:
                viol = v2
        if viol > 1e-5 * scale_b:
            status = NUMERIC

    obj = float(c @ x[:n])
    return status, x[:n].copy(), obj, y, ray, it


_PURE = os.environ.get("SIPCUTS_PURE_NUMPY", "") not in ("", "0")
HAS_NUMBA = False
if not _PURE:
    try:
        from numba import njit

        _lp_core = njit(cache=True, nogil=True)(_lp_core)
        HAS_NUMBA = True
    except ImportError:
        pass

KERNEL_MODE = "numba" if HAS_NUMBA else "numpy"


def _pow2_scales(A):
    """Row/column equilibration factors, rounded to powers of two.

    Geometric-mean scaling: each factor is the inverse square root of
    (largest x smallest) nonzero magnitude of its row or column, snapped
    to a power of two so applying it is exact in floating point."""
    m, n = A.shape
    mag = np.abs(A)
    R = np.ones(m)
    C = np.ones(n)
    for _ in range(2):
        S = mag * np.outer(R, C)
        for i in range(m):
            nz = S[i][S[i] > 0.0]
            if nz.size:
                R[i] *= 2.0 ** np.round(-0.5 * (np.log2(nz.max()) + np.log2(nz.min())))
        S = mag * np.outer(R, C)
        for j in range(n):
            nz = S[:, j][S[:, j] > 0.0]
            if nz.size:
                C[j] *= 2.0 ** np.round(-0.5 * (np.log2(nz.max()) + np.log2(nz.min())))
    return R, C


#: (equilibrate?, refactorization cadence) tried in order; the first
#: attempt reproduces the historical behavior bit for bit, the rest
#: trade speed for numerical headroom on badly scaled bases
_ATTEMPTS = ((False, _REFACTOR_EVERY), (True, 8), (True, 1))


def _ray_certifies(A, sense, c, lb, ub, ray):
    """True when `ray` really proves unboundedness: it descends, stays in
    the recession cone of every row, and only moves through infinite
    bounds. A drifted basis inverse can fabricate a ray; rejecting it
    here sends the solve to the next, better-conditioned attempt."""
    nrm = float(np.abs(ray).max()) if ray.size else 0.0
    if not np.isfinite(nrm) or nrm <= 0.0:
        return False
    r = ray / nrm
    ar = A @ r
    tol = FEASTOL * (1.0 + np.abs(A) @ np.abs(r))
    if np.any((sense == 0) & (ar > tol)):  # <= rows must not grow
        return False
    if np.any((sense == 1) & (ar < -tol)):  # >= rows must not shrink
        return False
    if np.any((sense > 1) & (np.abs(ar) > tol)):
        return False
    if np.any((r > 1e-9) & np.isfinite(ub)):
        return False
    if np.any((r < -1e-9) & np.isfinite(lb)):
        return False
    return float(c @ r) < -1e-9 * (1.0 + float(np.abs(c) @ np.abs(r)))


def _farkas_certifies(A, b, sense, lb, ub, ray):
    """True when the row multipliers really prove infeasibility: after
    clamping to the sense-sign pattern, the certified value y'b minus the
    best the box can absorb stays clearly positive."""
    nrm = float(np.abs(ray).max()) if ray.size else 0.0
    if not np.isfinite(nrm) or nrm <= 0.0:
        return False
    y = ray / nrm
    y = np.where(sense == 0, np.minimum(y, 0.0), y)  # <= rows: y <= 0
    y = np.where(sense == 1, np.maximum(y, 0.0), y)  # >= rows: y >= 0
    w = A.T @ y
    wtol = FEASTOL * (1.0 + np.abs(A).T @ np.abs(y))
    w = np.where(np.abs(w) <= wtol, 0.0, w)
    if np.any((w > 0.0) & ~np.isfinite(ub)) or np.any((w < 0.0) & ~np.isfinite(lb)):
        return False
    absorbed = np.where(
        w > 0.0,
        w * np.where(np.isfinite(ub), ub, 0.0),
        w * np.where(np.isfinite(lb), lb, 0.0),
    )
    bound = float(absorbed.sum())
    return float(y @ b) - bound > FEASTOL * (1.0 + abs(bound))


def solve_dense(A, b, sense, c, lb, ub, itmax=0):
    """Run the kernel on dense float64 data. Handles the no-row case that
    the compiled core does not.

    A run that ends in numerical trouble is retried on an equilibrated
    copy of the data with more frequent basis refactorization; solutions,
    duals, and rays are mapped back to the original scaling. Infeasible
    and unbounded exits are only accepted when their certificates check
    out against the original data."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    sense = np.ascontiguousarray(sense, dtype=np.int8)
    c = np.ascontiguousarray(c, dtype=np.float64)
    lb = np.ascontiguousarray(lb, dtype=np.float64)
    ub = np.ascontiguousarray(ub, dtype=np.float64)
    m, n = A.shape
    if itmax <= 0:
        itmax = 500 * (m + n + 20)
    if m == 0:
        x = np.zeros(n)
        ray = np.zeros(n)
        for j in range(n):
            if lb[j] > ub[j]:
                return INFEASIBLE, x, 0.0, b.copy(), ray, 0
            if c[j] > 0.0:
                if not np.isfinite(lb[j]):
                    ray[j] = -1.0
                    return UNBOUNDED, x, 0.0, b.copy(), ray, 0
                x[j] = lb[j]
            elif c[j] < 0.0:
                if not np.isfinite(ub[j]):
                    ray[j] = 1.0
                    return UNBOUNDED, x, 0.0, b.copy(), ray, 0
                x[j] = ub[j]
            else:
                x[j] = lb[j] if np.isfinite(lb[j]) else (ub[j] if np.isfinite(ub[j]) else 0.0)
        return OPTIMAL, x, float(c @ x), b.copy(), ray, 0
    status = NUMERIC
    x = np.zeros(n)
    obj = 0.0
    y = np.zeros(m)
    ray = np.zeros(n)
    it = 0
    for scaled, refactor_every in _ATTEMPTS:
        if scaled:
            R, C = _pow2_scales(A)
            As = A * np.outer(R, C)
            bs = b * R
            cs = c * C
            lbs, ubs = lb / C, ub / C
        else:
            R = C = None
            As, bs, cs, lbs, ubs = A, b, c, lb, ub
        try:
            status, x, obj, y, rayfull, it = _lp_core(
                As, bs, sense, cs, lbs, ubs, itmax, refactor_every
            )
        except np.linalg.LinAlgError:
            status = NUMERIC
            continue
        if status == NUMERIC:
            continue
        if status == INFEASIBLE:
            ray = rayfull[n : n + m].copy()
            if scaled:
                ray *= R
                y = y * R
            if not _farkas_certifies(A, b, sense, lb, ub, ray):
                status = NUMERIC
                continue
        else:
            ray = rayfull[:n].copy()
            if scaled:
                x = x * C
                ray = ray * C
                y = y * R
                obj = float(c @ x)
            if status == UNBOUNDED and not _ray_certifies(A, sense, c, lb, ub, ray):
                status = NUMERIC
                continue
        break
    return status, x, obj, y, ray, it
