"""
Dense two-phase simplex for small linear programs.

Problems are given as ``min c.x`` subject to rows ``a.x (<=|>=|=) b`` and
per-variable bounds (infinite bounds allowed).  The solver rewrites the
problem in standard form (shifted / mirrored / split variables, slacks,
artificials), scales right-hand sides and rows to unit magnitude and runs
a tableau simplex with Dantzig pricing, falling back to Bland's rule when
degenerate pivots stall.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

INF = math.inf
SENSES = ("<=", ">=", "=")


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpProblem:
    c: list[float]
    rows: list[list[float]] = field(default_factory=list)
    senses: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    bounds: list[tuple[float, float]] | None = None

    def __post_init__(self):
        n = len(self.c)
        if self.bounds is None:
            self.bounds = [(0.0, INF)] * n
        if len(self.bounds) != n:
            raise ValueError("one (lo, hi) bound pair per variable")
        if not (len(self.rows) == len(self.senses) == len(self.rhs)):
            raise ValueError("rows, senses and rhs differ in length")
        for r, s, b in zip(self.rows, self.senses, self.rhs):
            self._check_row(r, s, b)

    @property
    def n(self) -> int:
        return len(self.c)

    def _check_row(self, row, sense, rhs):
        if len(row) != self.n:
            raise ValueError(f"row has {len(row)} coefficients, expected {self.n}")
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        if not math.isfinite(rhs):
            raise ValueError("right-hand sides must be finite")

    def add(self, row: Sequence[float], sense: str, rhs: float) -> None:
        row = [float(v) for v in row]
        self._check_row(row, sense, rhs)
        self.rows.append(row)
        self.senses.append(sense)
        self.rhs.append(float(rhs))

    def copy(self) -> "LpProblem":
        return LpProblem(list(self.c), [list(r) for r in self.rows], list(self.senses),
                         list(self.rhs), list(self.bounds))

    def violation(self, x: Sequence[float]) -> float:
        """Largest constraint or bound violation at ``x``, in problem units."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for row, sense, b in zip(self.rows, self.senses, self.rhs):
            v = float(np.dot(row, x))
            if sense == "<=":
                worst = max(worst, v - b)
            elif sense == ">=":
                worst = max(worst, b - v)
            else:
                worst = max(worst, abs(v - b))
        for xi, (lo, hi) in zip(x, self.bounds):
            worst = max(worst, lo - xi, xi - hi)
        return worst


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float | None = None
    unique: bool = False
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int], tol: float, max_iter: int):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        prow = T[r] / T[r, j]
        T -= np.outer(T[:, j], prow)
        T[r] = prow
        self.basis[r] = j

    def set_objective(self, cost: np.ndarray) -> None:
        obj = np.zeros(self.T.shape[1])
        obj[: cost.size] = cost
        for i, bj in enumerate(self.basis):
            if obj[bj] != 0.0:
                obj -= obj[bj] * self.T[i]
        self.T[-1] = obj

    def run(self, allowed: np.ndarray) -> LpStatus:
        T, tol = self.T, self.tol
        stall = 0
        while True:
            if self.iterations >= self.max_iter:
                raise RuntimeError("simplex iteration limit reached")
            d = T[-1, :-1]
            cand = np.flatnonzero(allowed & (d < -tol))
            if cand.size == 0:
                return LpStatus.OPTIMAL
            j = int(cand[0]) if stall > 25 else int(cand[np.argmin(d[cand])])
            col = T[:-1, j]
            pos = np.flatnonzero(col > tol)
            if pos.size == 0:
                return LpStatus.UNBOUNDED
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            stall = stall + 1 if best <= tol else 0
            self.pivot(r, j)
            self.iterations += 1


def solve_lp(p: LpProblem, tol: float = 1e-9, max_iter: int = 50_000) -> LpResult:
    """Minimize ``p.c . x``.  Infeasible and unbounded are results, not errors."""
    n = p.n
    c = np.asarray(p.c, dtype=float)
    A = np.asarray(p.rows, dtype=float).reshape(-1, n)
    b = np.asarray(p.rhs, dtype=float)
    lo = np.array([bd[0] for bd in p.bounds], dtype=float)
    hi = np.array([bd[1] for bd in p.bounds], dtype=float)
    if np.any(lo > hi):
        return LpResult(LpStatus.INFEASIBLE)

    finite = np.concatenate([np.abs(b), np.abs(lo[np.isfinite(lo)]), np.abs(hi[np.isfinite(hi)])])
    scale = max(1.0, float(finite.max())) if finite.size else 1.0
    b, lo, hi = b / scale, lo / scale, hi / scale

    # x = offset + M z, z >= 0
    offset = np.zeros(n)
    cols: list[tuple[int, float]] = []
    upper: list[tuple[int, float]] = []
    for j in range(n):
        if math.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            if math.isfinite(hi[j]):
                upper.append((len(cols) - 1, hi[j] - lo[j]))
        elif math.isfinite(hi[j]):
            offset[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    M = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s

    rows = [A @ M] if A.size else []
    rhs = [b - A @ offset] if A.size else []
    senses = list(p.senses)
    if upper:
        U = np.zeros((len(upper), nz))
        for i, (k, ub) in enumerate(upper):
            U[i, k] = 1.0
        rows.append(U)
        rhs.append(np.array([ub for _, ub in upper]))
        senses += ["<="] * len(upper)
    A2 = np.vstack(rows) if rows else np.zeros((0, nz))
    b2 = np.concatenate(rhs) if rhs else np.zeros(0)
    c2 = c @ M

    keep = []
    for i in range(A2.shape[0]):
        m = np.abs(A2[i]).max() if nz else 0.0
        if m <= tol:
            ok = {"<=": b2[i] >= -tol, ">=": b2[i] <= tol, "=": abs(b2[i]) <= tol}[senses[i]]
            if not ok:
                return LpResult(LpStatus.INFEASIBLE)
            continue
        A2[i] /= m
        b2[i] /= m
        if b2[i] < 0:
            A2[i] *= -1
            b2[i] *= -1
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]
        keep.append(i)
    A2, b2 = A2[keep], b2[keep]
    senses = [senses[i] for i in keep]
    m = len(keep)

    n_slack = sum(1 for s in senses if s != "=")
    n_art = sum(1 for s in senses if s != "<=")
    width = nz + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :nz] = A2
    T[:m, -1] = b2
    basis = [0] * m
    si, ai = nz, nz + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, si] = 1.0
            basis[i] = si
            si += 1
        else:
            if s == ">=":
                T[i, si] = -1.0
                si += 1
            T[i, ai] = 1.0
            basis[i] = ai
            ai += 1
    art_start = nz + n_slack

    tab = _Tableau(T, basis, tol, max_iter)
    if n_art:
        cost1 = np.zeros(width)
        cost1[art_start:] = 1.0
        tab.set_objective(cost1)
        tab.run(np.ones(width, dtype=bool))
        if -tab.T[-1, -1] > tol * max(1, m) * 10:
            return LpResult(LpStatus.INFEASIBLE, iterations=tab.iterations)
        # drive artificials out of the basis; drop redundant rows
        r = 0
        while r < len(tab.basis):
            if tab.basis[r] >= art_start:
                nonart = np.flatnonzero(np.abs(tab.T[r, :art_start]) > tol)
                if nonart.size:
                    tab.pivot(r, int(nonart[0]))
                else:
                    tab.T = np.delete(tab.T, r, axis=0)
                    del tab.basis[r]
                    continue
            r += 1

    allowed = np.zeros(width, dtype=bool)
    allowed[:art_start] = True
    cost2 = np.zeros(width)
    cost2[:nz] = c2
    tab.set_objective(cost2)
    status = tab.run(allowed)
    if status is LpStatus.UNBOUNDED:
        return LpResult(status, iterations=tab.iterations)

    z = np.zeros(width)
    for i, bj in enumerate(tab.basis):
        z[bj] = tab.T[i, -1]
    x = (offset + M @ z[:nz]) * scale
    d = tab.T[-1, :-1]
    nonbasic = allowed.copy()
    nonbasic[tab.basis] = False
    unique = bool(np.all(d[nonbasic] > tol))
    objective = float(c @ x)
    return LpResult(LpStatus.OPTIMAL, x, objective, unique, tab.iterations)
