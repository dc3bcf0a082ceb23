"""Offline fluid LP: exact solve, Slater margin and parameter prescriptions.

The LP is tiny (N*M variables, N equalities, M*K inequalities), so it is
solved with a dense two-phase tableau simplex using Bland's rule. A brute
force vertex enumeration is kept alongside as an independent check.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-11


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpInternalError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# generic LP: max c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0
# --------------------------------------------------------------------------


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    col_vals = tab[:, col].copy()
    col_vals[row] = 0.0
    tab -= np.outer(col_vals, tab[row])


def _run_simplex(tab: np.ndarray, basis: list[int], allowed: int) -> bool:
    """Minimize the objective held in the last tableau row; False if unbounded.

    Columns ``>= allowed`` never enter. Bland's rule: lowest-index entering
    column, ties in the ratio test go to the lowest basic index.
    """
    m = tab.shape[0] - 1
    while True:
        costs = tab[-1, :allowed]
        entering = np.flatnonzero(costs < -_PIVOT_TOL)
        if entering.size == 0:
            return True
        col = int(entering[0])
        column = tab[:m, col]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            return False
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        cand = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        row = int(min(cand, key=lambda r: basis[r]))
        _pivot(tab, row, col)
        basis[row] = col


def simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None) -> tuple[LpStatus, np.ndarray | None, float]:
    """Two-phase dense simplex. Returns ``(status, x, objective)``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    n_std = n + m_ub

    A = np.zeros((m, n_std))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: one artificial per row
    tab = np.zeros((m + 1, n_std + m + 1))
    tab[:m, :n_std] = A
    tab[:m, n_std:n_std + m] = np.eye(m)
    tab[:m, -1] = b
    tab[-1, :n_std] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = list(range(n_std, n_std + m))
    _run_simplex(tab, basis, n_std)
    if -tab[-1, -1] > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LpStatus.INFEASIBLE, None, math.nan

    # drive zero-level artificials out; rows that cannot pivot are redundant
    keep = []
    for r in range(m):
        if basis[r] >= n_std:
            cols = np.flatnonzero(np.abs(tab[r, :n_std]) > 1e-9)
            if cols.size == 0:
                continue
            _pivot(tab, r, int(cols[0]))
            basis[r] = int(cols[0])
        keep.append(r)
    tab = np.vstack([tab[keep], tab[-1:]])
    basis = [basis[r] for r in keep]
    tab = np.hstack([tab[:, :n_std], tab[:, -1:]])

    # phase 2: minimize -c
    cost = np.zeros(n_std)
    cost[:n] = -c
    tab[-1, :] = 0.0
    tab[-1, :n_std] = cost
    for r, bcol in enumerate(basis):
        tab[-1] -= cost[bcol] * tab[r]
    if not _run_simplex(tab, basis, n_std):
        return LpStatus.UNBOUNDED, None, math.nan

    # re-solve the basic system on the original data to clean up round-off
    xb = np.linalg.lstsq(A[:, basis], b, rcond=None)[0]
    if np.abs(A[:, basis] @ xb - b).max(initial=0.0) > FEAS_TOL:
        xb = tab[:-1, -1]
    z = np.zeros(n_std)
    z[basis] = xb
    x = np.maximum(z[:n], 0.0)
    return LpStatus.OPTIMAL, x, float(c @ x)


def vertex_enumeration(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, max_bases: int = 2_000_000):
    """Brute-force LP optimum over all vertices of the feasible polyhedron.

    Every choice of ``n - m_eq`` active inequalities (including x >= 0)
    that together with the equalities pins down a unique point is solved,
    and the best feasible point wins. Only valid for bounded problems whose
    equality rows are linearly independent.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)

    G = np.vstack([-np.eye(n), A_ub])
    h = np.concatenate([np.zeros(n), b_ub])
    need = n - A_eq.shape[0]
    if need < 0:
        raise ValueError("more equalities than variables")
    if A_eq.shape[0] and np.linalg.matrix_rank(A_eq) < A_eq.shape[0]:
        raise ValueError("equality rows are linearly dependent")
    n_choices = math.comb(G.shape[0], need)
    if n_choices > max_bases:
        raise ValueError(f"{n_choices} candidate bases exceeds max_bases={max_bases}")
    combos = np.array(list(itertools.combinations(range(G.shape[0]), need)), dtype=np.int64).reshape(n_choices, need)

    mats = np.concatenate([np.broadcast_to(A_eq, (n_choices,) + A_eq.shape), G[combos]], axis=1)
    rhs = np.concatenate([np.broadcast_to(b_eq, (n_choices, b_eq.size)), h[combos]], axis=1)
    sv = np.linalg.svd(mats, compute_uv=False)
    ok = sv[:, -1] > 1e-10 * np.maximum(sv[:, 0], 1.0)
    if not ok.any():
        return LpStatus.INFEASIBLE, None, math.nan
    pts = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]

    feas = np.all(pts >= -FEAS_TOL, axis=1)
    if A_ub.shape[0]:
        feas &= np.all(pts @ A_ub.T <= b_ub + FEAS_TOL, axis=1)
    if A_eq.shape[0]:
        feas &= np.all(np.abs(pts @ A_eq.T - b_eq) <= FEAS_TOL, axis=1)
    if not feas.any():
        return LpStatus.INFEASIBLE, None, math.nan
    vals = pts[feas] @ c
    best = int(np.argmax(vals))
    return LpStatus.OPTIMAL, pts[feas][best], float(vals[best])


# --------------------------------------------------------------------------
# the fluid problem
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FluidProblem:
    lam: np.ndarray   # (N,)
    r: np.ndarray     # (N, M)
    w: np.ndarray     # (K, N, M)
    rho: np.ndarray   # (K, M)
    epsilon: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.lam, float)
        r = np.asarray(self.r, float)
        n, m = r.shape
        w = np.asarray(self.w, float).reshape(-1, n, m)
        rho = np.asarray(self.rho, float).reshape(-1, m)
        if lam.shape != (n,) or w.shape[0] != rho.shape[0]:
            raise ValueError("inconsistent fluid problem shapes")
        if np.any(lam < 0):
            raise ValueError("arrival means must be non-negative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "rho", rho)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.r.shape[0], self.r.shape[1], self.w.shape[0]

    def with_epsilon(self, epsilon: float) -> "FluidProblem":
        return FluidProblem(self.lam, self.r, self.w, self.rho, float(epsilon))

    @classmethod
    def from_instance(cls, inst, epsilon: float = 0.0) -> "FluidProblem":
        lam = inst.arrival_means
        n, m = inst.n_types, inst.n_servers
        w = np.array([c.weight_means() for c in inst.constraints]).reshape(-1, n, m)
        rho = np.array([c.requirement_means(lam) for c in inst.constraints]).reshape(-1, m)
        return cls(lam, inst.reward_means, w, rho, epsilon)

    def lp_arrays(self, active: np.ndarray | None = None):
        """(c, A_eq, b_eq, A_ub, b_ub) over the active job types, x flattened row-major."""
        n, m, k = self.shape
        act = np.arange(n) if active is None else active
        na = act.size
        c = self.r[act].ravel()
        A_eq = np.zeros((na, na * m))
        for a in range(na):
            A_eq[a, a * m:(a + 1) * m] = 1.0
        b_eq = self.lam[act]
        A_ub = np.zeros((k * m, na * m))
        for kk in range(k):
            for j in range(m):
                A_ub[kk * m + j, j::m] = self.w[kk, act, j]
        b_ub = (self.rho - self.epsilon).ravel()
        return c, A_eq, b_eq, A_ub, b_ub


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x_star: np.ndarray | None
    objective: float

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "x_star": None if self.x_star is None else self.x_star.tolist(),
            "objective": None if math.isnan(self.objective) else self.objective,
        }


def check_feasible(problem: FluidProblem, x: np.ndarray, tol: float = FEAS_TOL) -> list[str]:
    """Violations of the fluid constraints by ``x`` beyond ``tol``."""
    out = []
    if np.any(x < -tol):
        out.append("negative allocation")
    row = x.sum(axis=1) - problem.lam
    if np.any(np.abs(row) > tol):
        out.append(f"conservation residual {np.abs(row).max():.3g}")
    if problem.w.shape[0]:
        load = np.einsum("knm,nm->km", problem.w, x) + problem.epsilon - problem.rho
        if np.any(load > tol):
            out.append(f"constraint excess {load.max():.3g}")
    return out


def solve_fluid_lp(problem: FluidProblem, method: str = "simplex") -> LpSolution:
    """Optimal allocation of the (epsilon-tightened) fluid LP.

    ``method="vertices"`` uses brute-force vertex enumeration instead of the
    simplex; it is meant for cross-checking small problems.
    """
    n, m, _ = problem.shape
    active = np.flatnonzero(problem.lam > 0)
    x_full = np.zeros((n, m))
    if active.size == 0:
        viol = check_feasible(problem, x_full)
        if viol:
            return LpSolution(LpStatus.INFEASIBLE, None, math.nan)
        return LpSolution(LpStatus.OPTIMAL, x_full, 0.0)

    arrays = problem.lp_arrays(active)
    solver = simplex if method == "simplex" else vertex_enumeration
    status, x, obj = solver(*arrays)
    if status is LpStatus.UNBOUNDED:
        raise LpInternalError("fluid LP reported unbounded; allocations are bounded by the arrival means")
    if status is LpStatus.INFEASIBLE:
        return LpSolution(status, None, math.nan)
    x_full[active] = x.reshape(active.size, m)
    viol = check_feasible(problem, x_full)
    if viol:
        raise LpInternalError("solution fails feasibility certificate: " + "; ".join(viol))
    return LpSolution(LpStatus.OPTIMAL, x_full, float(np.sum(problem.r * x_full)))


@dataclass(frozen=True)
class SlaterResult:
    status: LpStatus
    delta: float
    x: np.ndarray | None = None


def slater_margin(problem: FluidProblem, method: str = "simplex") -> SlaterResult:
    """Largest uniform slack ``delta`` achievable by a feasible allocation.

    Solves max delta s.t. the conservation constraints and
    ``sum_i w x - rho <= -delta`` for every (server, family); epsilon is ignored.
    """
    n, m, k = problem.shape
    base = problem.with_epsilon(0.0)
    if k == 0:
        return SlaterResult(LpStatus.OPTIMAL, math.inf, None)
    active = np.flatnonzero(base.lam > 0)
    _, A_eq, b_eq, A_ub, b_ub = base.lp_arrays(active)
    nv = A_eq.shape[1]
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    A_eq = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
    A_ub = np.hstack([A_ub, np.ones((A_ub.shape[0], 1))])
    solver = simplex if method == "simplex" else vertex_enumeration
    status, z, obj = solver(c, A_eq, b_eq, A_ub, b_ub)
    if status is not LpStatus.OPTIMAL:
        return SlaterResult(LpStatus.INFEASIBLE, math.nan, None)
    x = np.zeros((n, m))
    x[active] = z[:-1].reshape(active.size, m)
    return SlaterResult(LpStatus.OPTIMAL, float(obj), x)


@dataclass(frozen=True)
class TheoremParams:
    epsilon: float
    v: float
    B: float
    gamma: float
    nu_max: float
    delta: float
    epsilon_first_pass: float
    fixed_point_residual: float
    precondition_ok: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def theorem_params(problem: FluidProblem, horizon: int, c_lambda: float, c_u: float) -> TheoremParams:
    """epsilon, V and the drift constants prescribed for horizon ``T``.

    The bound constant B depends on epsilon and epsilon on B; this is broken
    with two passes starting from ``B0 = MK C_lambda^2 C_u^2``.
    ``fixed_point_residual`` is the relative change of epsilon if it were
    recomputed once more from the final B.
    """
    if horizon < 1 or c_lambda <= 0 or c_u <= 0:
        raise ValueError("horizon and bounds must be positive")
    _, m, k = problem.shape
    sl = slater_margin(problem)
    if sl.status is not LpStatus.OPTIMAL:
        raise ValueError("fluid problem is infeasible")
    delta = sl.delta
    mk = m * k
    root_mk = math.sqrt(mk)
    base = mk * (c_lambda * c_u) ** 2

    def eps_of(B: float) -> float:
        return 2.0 * math.sqrt(B * root_mk) / math.sqrt(horizon)

    eps0 = eps_of(base)
    B = mk * ((c_lambda * c_u) ** 2 + eps0 ** 2)
    eps = eps_of(B)
    eps_next = eps_of(mk * ((c_lambda * c_u) ** 2 + eps ** 2))
    v = delta / (2.0 * float(problem.lam.sum())) * math.sqrt(horizon * B / root_mk)
    gamma = delta / 2.0 - eps
    nu_max = max(gamma, mk * c_lambda * c_u)
    return TheoremParams(
        epsilon=eps, v=v, B=B, gamma=gamma, nu_max=nu_max, delta=delta,
        epsilon_first_pass=eps0,
        fixed_point_residual=abs(eps_next - eps) / eps if eps > 0 else 0.0,
        precondition_ok=delta >= 4.0 * eps,
    )


@dataclass(frozen=True)
class GapCheck:
    epsilon: float
    status: LpStatus
    gap: float
    bound: float
    holds: bool


@dataclass(frozen=True)
class GapReport:
    delta: float
    rows: tuple[GapCheck, ...] = field(default_factory=tuple)

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.rows)


def tightness_gap_bound_check(problem: FluidProblem, eps_grid, tol: float = FEAS_TOL) -> GapReport:
    """Check ``opt(0) - opt(eps) <= (eps / delta) * sum(lambda)`` on a grid of eps."""
    sl = slater_margin(problem)
    if sl.status is not LpStatus.OPTIMAL or not sl.delta > 0:
        raise ValueError("gap bound needs a strictly feasible problem (delta > 0)")
    base = solve_fluid_lp(problem.with_epsilon(0.0))
    rows = []
    for eps in eps_grid:
        sol = solve_fluid_lp(problem.with_epsilon(eps))
        bound = eps / sl.delta * float(problem.lam.sum())
        if sol.status is not LpStatus.OPTIMAL:
            rows.append(GapCheck(float(eps), sol.status, math.nan, bound, False))
            continue
        gap = base.objective - sol.objective
        rows.append(GapCheck(float(eps), sol.status, gap, bound, gap <= bound + tol))
    return GapReport(sl.delta, tuple(rows))
