"""Problem data model for two-stage stochastic integer programs.

An instance is
    min  c'x + sum_s p_s Q_s(x)
    s.t. A x >= b, bounds, integrality on x
with recourse
    Q_s(x) = min { q_s'y : W_s y >= h_s - T_s x, bounds, integrality on y }
mapping to +inf when the subproblem is infeasible. All constraint rows
are stored in >= form; writers that need equalities emit paired rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import optbase
from .optbase import GE, MipProgram, solve_lp, solve_mip
from .sparse import CooMatrix

CONT, INT, BIN = 0, 1, 2
_VTYPE_LETTER = {CONT: "C", INT: "I", BIN: "B"}
_VTYPE_CODE = {"C": CONT, "I": INT, "B": BIN}


class InstanceError(ValueError):
    """Inconsistent instance data."""


class RecourseUnboundedError(RuntimeError):
    """A scenario subproblem is unbounded below."""


class EnumerationCapError(RuntimeError):
    """Enumeration exceeded the point cap."""

    def __init__(self, msg, count):
        super().__init__(msg)
        self.count = count


def vtype_from_string(s: str) -> np.ndarray:
    try:
        return np.array([_VTYPE_CODE[ch] for ch in s], dtype=np.int8)
    except KeyError as exc:
        raise InstanceError(f"unknown variable type letter {exc}") from exc


def vtype_to_string(v: np.ndarray) -> str:
    return "".join(_VTYPE_LETTER[int(code)] for code in v)


def _check_vectors(prefix, n, vtype, lb, ub):
    if vtype.size != n or lb.size != n or ub.size != n:
        raise InstanceError(f"{prefix}: type/bound arrays do not match {n} variables")
    if np.any(lb > ub):
        j = int(np.argmax(lb > ub))
        raise InstanceError(f"{prefix}: empty bound interval on variable {j}")
    for j in range(n):
        if vtype[j] == BIN and (lb[j] < 0.0 or ub[j] > 1.0):
            raise InstanceError(f"{prefix}: binary variable {j} has bounds outside [0,1]")


@dataclass
class Scenario:
    prob: float
    q: np.ndarray
    W: CooMatrix
    h: np.ndarray
    T: CooMatrix
    vtype: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        self.vtype = np.asarray(self.vtype, dtype=np.int8)
        self.lb = np.asarray(self.lb, dtype=np.float64)
        self.ub = np.asarray(self.ub, dtype=np.float64)

    @property
    def ny(self) -> int:
        return int(self.q.size)

    @property
    def nrows(self) -> int:
        return int(self.W.nrows)


@dataclass
class SipInstance:
    name: str
    c: np.ndarray
    A: CooMatrix
    b: np.ndarray
    vtype: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    scenarios: list[Scenario] = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.vtype = np.asarray(self.vtype, dtype=np.int8)
        self.lb = np.asarray(self.lb, dtype=np.float64)
        self.ub = np.asarray(self.ub, dtype=np.float64)
        n = self.c.size
        if self.A.ncols != n:
            raise InstanceError("first stage: constraint columns do not match objective length")
        if self.b.size != self.A.nrows:
            raise InstanceError("first stage: rhs length does not match row count")
        _check_vectors("first stage", n, self.vtype, self.lb, self.ub)
        if not self.scenarios:
            raise InstanceError("instance has no scenarios")
        total = 0.0
        for s, scen in enumerate(self.scenarios):
            if scen.prob <= 0.0:
                raise InstanceError(f"scenario {s}: probability must be positive")
            total += scen.prob
            if scen.W.nrows != scen.h.size:
                raise InstanceError(f"scenario {s}: h length does not match W rows")
            if scen.T.nrows != scen.W.nrows:
                raise InstanceError(f"scenario {s}: T rows do not match W rows")
            if scen.T.ncols != n:
                raise InstanceError(f"scenario {s}: T columns do not match first-stage variables")
            if scen.W.ncols != scen.q.size:
                raise InstanceError(f"scenario {s}: q length does not match W columns")
            _check_vectors(f"scenario {s}", scen.ny, scen.vtype, scen.lb, scen.ub)
        if abs(total - 1.0) > 1e-9:
            raise InstanceError(f"scenario probabilities sum to {total!r}, expected 1")

    @property
    def nx(self) -> int:
        return int(self.c.size)

    @property
    def nscen(self) -> int:
        return len(self.scenarios)

    @property
    def probs(self) -> np.ndarray:
        return np.array([s.prob for s in self.scenarios])


def toy_instance() -> SipInstance:
    """Single binary first-stage variable, two equiprobable scenarios whose
    integer recourse must cover 1 - x at unit costs 2 and 3. Used across
    the test suite; its optimal value is 1 at x = 1."""
    scen = []
    for cost in (2.0, 3.0):
        scen.append(
            Scenario(
                prob=0.5,
                q=np.array([cost]),
                W=CooMatrix(1, 1, [0], [0], [1.0]),
                h=np.array([1.0]),
                T=CooMatrix(1, 1, [0], [0], [1.0]),
                vtype=np.array([INT], dtype=np.int8),
                lb=np.array([0.0]),
                ub=np.array([np.inf]),
            )
        )
    return SipInstance(
        name="toy2s",
        c=np.array([1.0]),
        A=CooMatrix.empty(0, 1),
        b=np.zeros(0),
        vtype=np.array([BIN], dtype=np.int8),
        lb=np.array([0.0]),
        ub=np.array([1.0]),
        scenarios=scen,
    )


def first_stage_program(inst: SipInstance, c: np.ndarray | None = None) -> MipProgram:
    """MIP over the first-stage feasible set with an optional objective."""
    obj = np.zeros(inst.nx) if c is None else np.asarray(c, dtype=np.float64)
    return MipProgram(
        c=obj,
        A=inst.A,
        senses=np.full(inst.A.nrows, GE, dtype=np.int8),
        rhs=inst.b.copy(),
        lb=inst.lb.copy(),
        ub=inst.ub.copy(),
        is_int=inst.vtype != CONT,
    )


def recourse_program(inst: SipInstance, s: int, x: np.ndarray) -> MipProgram:
    """Scenario subproblem min q'y s.t. W y >= h - T x for fixed x."""
    scen = inst.scenarios[s]
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inst.nx,):
        raise InstanceError(f"candidate x has shape {x.shape}, expected ({inst.nx},)")
    rhs = scen.h - scen.T.matvec(x)
    return MipProgram(
        c=scen.q.copy(),
        A=scen.W,
        senses=np.full(scen.W.nrows, GE, dtype=np.int8),
        rhs=rhs,
        lb=scen.lb.copy(),
        ub=scen.ub.copy(),
        is_int=scen.vtype != CONT,
    )


def eval_recourse(inst: SipInstance, s: int, x: np.ndarray, relaxed: bool = False) -> float:
    """Exact recourse value Q_s(x), or its LP relaxation value when
    `relaxed`. Returns +inf when the subproblem is infeasible."""
    prog = recourse_program(inst, s, x)
    if relaxed:
        out = solve_lp(optbase.lp_relaxation(prog))
    else:
        out = solve_mip(prog)
    if out.status == optbase.OPTIMAL:
        return float(out.objective)
    if out.status == optbase.INFEASIBLE:
        return math.inf
    if out.status == optbase.UNBOUNDED:
        raise RecourseUnboundedError(f"scenario {s} recourse is unbounded at x={x.tolist()}")
    raise optbase.KernelError(f"recourse solve hit a limit in scenario {s}")


def joint_scenario_program(
    inst: SipInstance,
    s: int,
    obj_x: np.ndarray,
    obj_y: np.ndarray,
) -> MipProgram:
    """MIP over one scenario's joint feasible set
    K_s = {(x, y) : A x >= b, T_s x + W_s y >= h_s, bounds, integrality}."""
    scen = inst.scenarios[s]
    n, ny = inst.nx, scen.ny
    mA, mW = inst.A.nrows, scen.W.nrows
    rows = np.concatenate([inst.A.rows, scen.T.rows + mA, scen.W.rows + mA])
    cols = np.concatenate([inst.A.cols, scen.T.cols, scen.W.cols + n])
    vals = np.concatenate([inst.A.vals, scen.T.vals, scen.W.vals])
    A = CooMatrix(mA + mW, n + ny, rows, cols, vals)
    return MipProgram(
        c=np.concatenate([obj_x, obj_y]),
        A=A,
        senses=np.full(mA + mW, GE, dtype=np.int8),
        rhs=np.concatenate([inst.b, scen.h]),
        lb=np.concatenate([inst.lb, scen.lb]),
        ub=np.concatenate([inst.ub, scen.ub]),
        is_int=np.concatenate([inst.vtype != CONT, scen.vtype != CONT]),
    )


@dataclass
class ExtensiveForm:
    program: MipProgram
    x_cols: np.ndarray
    y_cols: list[np.ndarray]


def build_extensive_form(inst: SipInstance) -> ExtensiveForm:
    """Single MIP over (x, y_1, ..., y_S) whose optimal value is the
    instance optimum and whose LP relaxation value is the LP bound."""
    n = inst.nx
    col_off = n
    row_off = inst.A.nrows
    rows = [inst.A.rows]
    cols = [inst.A.cols]
    vals = [inst.A.vals]
    obj = [inst.c]
    rhs = [inst.b]
    lb = [inst.lb]
    ub = [inst.ub]
    is_int = [inst.vtype != CONT]
    y_cols = []
    for scen in inst.scenarios:
        rows.append(scen.T.rows + row_off)
        cols.append(scen.T.cols)
        vals.append(scen.T.vals)
        rows.append(scen.W.rows + row_off)
        cols.append(scen.W.cols + col_off)
        vals.append(scen.W.vals)
        obj.append(scen.prob * scen.q)
        rhs.append(scen.h)
        lb.append(scen.lb)
        ub.append(scen.ub)
        is_int.append(scen.vtype != CONT)
        y_cols.append(np.arange(col_off, col_off + scen.ny))
        col_off += scen.ny
        row_off += scen.W.nrows
    A = CooMatrix(
        row_off,
        col_off,
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
    )
    prog = MipProgram(
        c=np.concatenate(obj),
        A=A,
        senses=np.full(row_off, GE, dtype=np.int8),
        rhs=np.concatenate(rhs),
        lb=np.concatenate(lb),
        ub=np.concatenate(ub),
        is_int=np.concatenate(is_int),
    )
    return ExtensiveForm(program=prog, x_cols=np.arange(n), y_cols=y_cols)


def enumerate_first_stage(inst: SipInstance, cap: int = 100_000) -> np.ndarray:
    """All integer first-stage points satisfying A x >= b. Requires a
    pure-integer first stage with finite bounds."""
    n = inst.nx
    if np.any(inst.vtype == CONT):
        raise InstanceError("first stage has continuous variables, cannot enumerate")
    lo = np.ceil(inst.lb - 1e-9).astype(np.int64)
    hi = np.floor(inst.ub + 1e-9).astype(np.int64)
    if not (np.all(np.isfinite(inst.lb)) and np.all(np.isfinite(inst.ub))):
        raise InstanceError("first stage has unbounded variables, cannot enumerate")
    counts = hi - lo + 1
    total = int(np.prod(counts.astype(np.float64)))
    if total > cap:
        raise EnumerationCapError(f"{total} first-stage points exceed cap {cap}", total)
    grids = np.meshgrid(*[np.arange(lo[j], hi[j] + 1) for j in range(n)], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(np.float64)
    if inst.A.nrows:
        ok = np.all(pts @ inst.A.to_dense().T >= inst.b - 1e-9, axis=1)
        pts = pts[ok]
    return pts


def brute_force_epigraph(
    inst: SipInstance, s: int, cap: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Exact recourse values over every feasible first-stage point.
    Infeasible-recourse points carry +inf."""
    pts = enumerate_first_stage(inst, cap)
    vals = np.array([eval_recourse(inst, s, pts[k]) for k in range(pts.shape[0])])
    return pts, vals
