"""Self-contained LP and MIP solving on top of the dense simplex kernel.

`LinearProgram` / `MipProgram` hold the problem data (sparse rows, senses,
bounds). `solve_lp` returns primal and dual vectors plus certificates;
`solve_mip` runs a deterministic best-bound branch and bound with
most-fractional branching and records every improving incumbent, so a
caller can harvest sub-optimal feasible points as well.

Everything is deterministic: identical inputs give identical outputs,
including the incumbent pool order and node counts.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from . import _simplex
from .sparse import CooMatrix

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"

FEASTOL = 1e-7
INTTOL = 1e-6

LE, GE, EQ = 0, 1, 2
_SENSE_CODE = {"<=": LE, ">=": GE, "==": EQ, "=": EQ}
_SENSE_STR = {LE: "<=", GE: ">=", EQ: "="}


class KernelError(RuntimeError):
    """Numerical failure inside the simplex kernel."""


def _as_sense_array(senses, nrows: int) -> np.ndarray:
    out = np.empty(nrows, dtype=np.int8)
    if len(senses) != nrows:
        raise ValueError("sense count does not match row count")
    for i, s in enumerate(senses):
        if isinstance(s, str):
            out[i] = _SENSE_CODE[s]
        else:
            out[i] = int(s)
    return out


@dataclass
class LinearProgram:
    """min (or max) c'x + c0  s.t.  A x {<=,>=,=} rhs,  lb <= x <= ub."""

    c: np.ndarray
    A: CooMatrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c0: float = 0.0
    maximize: bool = False
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        self.lb = np.asarray(self.lb, dtype=np.float64)
        self.ub = np.asarray(self.ub, dtype=np.float64)
        n = self.c.size
        if self.A.ncols != n:
            raise ValueError("objective length does not match column count")
        self.senses = _as_sense_array(self.senses, self.A.nrows)
        if self.rhs.size != self.A.nrows:
            raise ValueError("rhs length does not match row count")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound length does not match column count")
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise ValueError(f"empty bound interval on column {j}")

    @property
    def nvars(self) -> int:
        return int(self.c.size)

    @property
    def nrows(self) -> int:
        return int(self.A.nrows)


@dataclass
class MipProgram(LinearProgram):
    """LinearProgram plus integrality markers."""

    is_int: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self):
        super().__post_init__()
        self.is_int = np.asarray(self.is_int, dtype=bool)
        if self.is_int.size != self.nvars:
            raise ValueError("integrality marker length does not match columns")


def lp_relaxation(prog: MipProgram) -> LinearProgram:
    return LinearProgram(
        c=prog.c.copy(),
        A=prog.A,
        senses=prog.senses.copy(),
        rhs=prog.rhs.copy(),
        lb=prog.lb.copy(),
        ub=prog.ub.copy(),
        c0=prog.c0,
        maximize=prog.maximize,
        names=prog.names,
    )


@dataclass
class SolveOutcome:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    ray: np.ndarray | None = None
    bound: float | None = None
    incumbent_pool: list = field(default_factory=list)
    node_count: int = 0
    iterations: int = 0
    wall_time: float = 0.0


def _solve_dense(c, A, senses, rhs, lb, ub, itmax=0):
    return _simplex.solve_dense(A, rhs, senses, c, lb, ub, itmax=itmax)


def solve_lp(prog: LinearProgram, itmax: int = 0) -> SolveOutcome:
    """Solve an LP. Optimal outcomes carry row duals satisfying strong
    duality; infeasible ones carry Farkas row multipliers in `ray`;
    unbounded ones carry an improving primal direction."""
    t0 = time.perf_counter()
    sign = -1.0 if prog.maximize else 1.0
    dense = prog.A.to_dense()
    status, x, obj, y, ray, it = _solve_dense(
        sign * prog.c, dense, prog.senses, prog.rhs, prog.lb, prog.ub, itmax
    )
    wall = time.perf_counter() - t0
    if status == _simplex.NUMERIC:
        raise KernelError("simplex reported numerical trouble")
    if status == _simplex.OPTIMAL:
        return SolveOutcome(
            status=OPTIMAL,
            x=x,
            objective=sign * obj + prog.c0,
            duals=sign * y,
            iterations=it,
            wall_time=wall,
        )
    if status == _simplex.INFEASIBLE:
        return SolveOutcome(status=INFEASIBLE, x=x, ray=ray, iterations=it, wall_time=wall)
    if status == _simplex.UNBOUNDED:
        return SolveOutcome(status=UNBOUNDED, x=x, ray=ray, iterations=it, wall_time=wall)
    return SolveOutcome(status=LIMIT, x=x, iterations=it, wall_time=wall)


def _round_in_integer_bounds(lb, ub, is_int):
    lb = lb.copy()
    ub = ub.copy()
    ii = np.nonzero(is_int)[0]
    lb[ii] = np.where(np.isfinite(lb[ii]), np.ceil(lb[ii] - INTTOL), lb[ii])
    ub[ii] = np.where(np.isfinite(ub[ii]), np.floor(ub[ii] + INTTOL), ub[ii])
    return lb, ub


def solve_mip(
    prog: MipProgram,
    node_limit: int = 2_000_000,
    time_limit: float | None = None,
    itmax: int = 0,
) -> SolveOutcome:
    """Best-bound branch and bound on the simplex kernel.

    Node selection is lowest relaxation bound with FIFO tie-break, the
    branching variable is the most fractional integer (lowest index on
    ties), children are floor/ceil bound splits. Every improving
    incumbent is appended to `incumbent_pool` as (x, objective). On a
    node or time limit the outcome has status "limit" and a valid
    `bound`.
    """
    t0 = time.perf_counter()
    sign = -1.0 if prog.maximize else 1.0
    c = sign * prog.c
    dense = prog.A.to_dense()
    senses = prog.senses
    rhs = prog.rhs
    is_int = prog.is_int
    int_idx = np.nonzero(is_int)[0]
    lb0, ub0 = _round_in_integer_bounds(prog.lb, prog.ub, is_int)

    def finish(status, inc, inc_val, bound, pool, nodes):
        wall = time.perf_counter() - t0
        out = SolveOutcome(status=status, node_count=nodes, wall_time=wall)
        if inc is not None:
            out.x = inc
            out.objective = sign * inc_val + prog.c0
        if bound is not None:
            out.bound = sign * bound + prog.c0
        out.incumbent_pool = [(xv, sign * ov + prog.c0) for (xv, ov) in pool]
        return out

    status0, x0, obj0, y0, ray0, _ = _solve_dense(c, dense, senses, rhs, lb0, ub0, itmax)
    if status0 == _simplex.NUMERIC:
        raise KernelError("simplex reported numerical trouble at the root")
    if status0 == _simplex.INFEASIBLE:
        return finish(INFEASIBLE, None, None, None, [], 1)
    if status0 == _simplex.UNBOUNDED:
        return finish(UNBOUNDED, None, None, None, [], 1)
    if status0 == _simplex.ITER_LIMIT:
        raise KernelError("iteration limit in root relaxation")

    heap = []
    counter = 0
    heapq.heappush(heap, (obj0, counter, lb0, ub0))
    counter += 1
    incumbent = None
    inc_val = np.inf
    pool = []
    nodes = 0

    while heap:
        if nodes >= node_limit:
            bound = heap[0][0] if heap else inc_val
            return finish(LIMIT, incumbent, inc_val, min(bound, inc_val), pool, nodes)
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            bound = heap[0][0] if heap else inc_val
            return finish(LIMIT, incumbent, inc_val, min(bound, inc_val), pool, nodes)
        parent_bound, _, nlb, nub = heapq.heappop(heap)
        if parent_bound >= inc_val - 1e-9 * (1.0 + abs(inc_val)):
            continue
        nodes += 1
        status, x, obj, y, ray, _ = _solve_dense(c, dense, senses, rhs, nlb, nub, itmax)
        if status == _simplex.NUMERIC or status == _simplex.ITER_LIMIT:
            raise KernelError("simplex failure inside branch and bound")
        if status == _simplex.INFEASIBLE:
            continue
        if status == _simplex.UNBOUNDED:
            return finish(UNBOUNDED, None, None, None, pool, nodes)
        if obj >= inc_val - 1e-9 * (1.0 + abs(inc_val)):
            continue

        if int_idx.size:
            xi = x[int_idx]
            frac = np.abs(xi - np.round(xi))
        else:
            frac = np.zeros(0)
        if frac.size == 0 or frac.max() <= INTTOL:
            # integral candidate: snap integer parts and re-verify rows
            xs = x.copy()
            if int_idx.size:
                xs[int_idx] = np.round(xs[int_idx]) + 0.0
                xs[int_idx] = np.clip(xs[int_idx], nlb[int_idx], nub[int_idx])
            ax = dense @ xs
            viol = 0.0
            for i in range(rhs.size):
                gap = ax[i] - rhs[i]
                if senses[i] == LE:
                    v = gap
                elif senses[i] == GE:
                    v = -gap
                else:
                    v = abs(gap)
                viol = max(viol, v / (1.0 + abs(rhs[i])))
            if viol <= 10 * FEASTOL:
                val = float(c @ xs)
            else:
                xs, val = x.copy(), obj  # snap broke a row, keep the LP point
            if val < inc_val - 1e-9 * (1.0 + abs(val)):
                incumbent = xs
                inc_val = val
                pool.append((xs.copy(), val))
            continue

        j = int(int_idx[np.argmax(np.minimum(frac, 1.0 - frac))])
        xj = x[j]
        lb_dn, ub_dn = nlb.copy(), nub.copy()
        ub_dn[j] = np.floor(xj)
        lb_up, ub_up = nlb.copy(), nub.copy()
        lb_up[j] = np.ceil(xj)
        heapq.heappush(heap, (obj, counter, lb_dn, ub_dn))
        counter += 1
        heapq.heappush(heap, (obj, counter, lb_up, ub_up))
        counter += 1

    if incumbent is None:
        return finish(INFEASIBLE, None, None, None, pool, nodes)
    return finish(OPTIMAL, incumbent, inc_val, inc_val, pool, nodes)


def to_lp_text(prog: LinearProgram) -> str:
    """Render a deterministic LP-format-like dump for debugging."""

    def name(j):
        if prog.names and j < len(prog.names):
            return prog.names[j]
        return f"x{j}"

    def term(coef, j):
        return f"{'+' if coef >= 0 else '-'} {abs(coef):.12g} {name(j)}"

    lines = ["\\ sipcuts debug dump", "Maximize" if prog.maximize else "Minimize"]
    obj = " ".join(term(prog.c[j], j) for j in range(prog.nvars) if prog.c[j] != 0.0)
    lines.append(f" obj: {obj if obj else '0'}")
    lines.append("Subject To")
    dense = prog.A.to_dense()
    for i in range(prog.nrows):
        row = " ".join(term(dense[i, j], j) for j in range(prog.nvars) if dense[i, j] != 0.0)
        lines.append(f" r{i}: {row if row else '0'} {_SENSE_STR[int(prog.senses[i])]} {prog.rhs[i]:.12g}")
    lines.append("Bounds")
    for j in range(prog.nvars):
        lo = "-inf" if not np.isfinite(prog.lb[j]) else f"{prog.lb[j]:.12g}"
        hi = "+inf" if not np.isfinite(prog.ub[j]) else f"{prog.ub[j]:.12g}"
        lines.append(f" {lo} <= {name(j)} <= {hi}")
    if isinstance(prog, MipProgram) and prog.is_int.any():
        lines.append("General")
        for j in np.nonzero(prog.is_int)[0]:
            lines.append(f" {name(int(j))}")
    lines.append("End")
    return "\n".join(lines) + "\n"
