"""Node relaxation: linearized subset problem with capped squared residuals.

At a search node the binary subset problem is relaxed by replacing each
product w_k * r_k^2 with a variable u_k >= max(0, r_k^2 - Pi_k (1 - w_k))
and letting w range over the box.  The caps Pi_k come from the global
residual-cap estimate (inflated on fixed-out observations so their u_k
vanish).  The relaxation

    minimize  sum_k u_k
    s.t.      u_k >= 0,  u_k >= r_k^2 - Pi_k (1 - w_k)
              r = y - X beta,  sum(w) = h,  w in [0, 1]^n
              w fixed on the node's in/out sets

is convex (each cap constraint is rotated-cone representable) and is
solved by a small dense primal-dual interior-point method after
eliminating r.  Lower bounds are never read off the primal: every
iteration evaluates an exact Lagrangian dual value from the current
multipliers (one weighted least-squares solve plus a one-dimensional
piecewise-linear maximization), so the reported bound stays valid no
matter where the iteration stopped.  A solution is *consistent* when
every squared residual outside the fixed-out set is strictly below its
cap; only consistent solutions may justify pruning.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lsq import Dataset, RankDeficient, _checked_cholesky, _cho_solve
from .tree import NodeState


class RelaxStatus(enum.Enum):
    OPTIMAL = "optimal"
    GAP_TOO_LARGE = "gap_too_large"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class RelaxationProblem:
    """Relaxation input: dataset, per-observation caps and node fixings."""

    data: Dataset
    pi: np.ndarray
    s0: frozenset[int]
    s1: frozenset[int]
    h: int

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        if pi.shape != (self.data.n,):
            raise ValueError("pi must have one cap per observation")
        if np.any(pi <= 0.0):
            raise ValueError("caps must be strictly positive")
        if self.s0 & self.s1:
            raise ValueError("fixed-in and fixed-out sets overlap")
        object.__setattr__(self, "pi", pi)

    @property
    def free(self) -> np.ndarray:
        fixed = self.s0 | self.s1
        return np.array([k for k in range(self.data.n) if k not in fixed], dtype=np.intp)


@dataclass(frozen=True)
class RelaxationResult:
    """Relaxation outcome.

    ``lower_bound`` is a certified lower bound on the relaxation optimum
    (a true dual value, valid on early termination); ``primal_value`` is
    the objective of the returned feasible (beta, w).  ``status`` is
    OPTIMAL when the duality gap closed below tolerance or the solve
    stopped early because the caller's cutoff question was already
    decided; GAP_TOO_LARGE when the iteration cap was reached first.
    """

    lower_bound: float
    primal_value: float
    w: np.ndarray
    beta: np.ndarray
    residuals: np.ndarray
    consistent: bool
    status: RelaxStatus
    iterations: int = 0


def build_node_problem(data: Dataset, pi_global: float, node: NodeState, h: int) -> RelaxationProblem:
    """Per-observation caps for a node: the global cap everywhere, ten
    times the global cap on fixed-out observations (their u_k must
    vanish, so the cap only needs to dominate; a moderate multiple keeps
    the conditioning sane where an infinite cap is meant)."""
    if pi_global <= 0.0:
        raise ValueError("pi_global must be strictly positive")
    pi = np.full(data.n, pi_global)
    if node.s0:
        pi[list(node.s0)] = 10.0 * pi_global
    return RelaxationProblem(data, pi, frozenset(node.s0), frozenset(node.s1), h)


def check_consistency(residuals: np.ndarray, pi: np.ndarray, free) -> bool:
    """True iff residuals_k^2 < pi_k strictly for every k in ``free``
    (callers pass everything outside the fixed-out set)."""
    idx = np.asarray(list(free), dtype=np.intp)
    if idx.size == 0:
        return True
    r = np.asarray(residuals, dtype=np.float64)[idx]
    return bool(np.all(r**2 < np.asarray(pi, dtype=np.float64)[idx]))


def _wls_exact(X: np.ndarray, y: np.ndarray, lam: np.ndarray):
    """Exact minimizer and value of sum lam_k r_k^2 (no ridge: the value
    enters dual certificates and must not overestimate the infimum)."""
    M = X.T @ (X * lam[:, None])
    b = X.T @ (lam * y)
    try:
        L = _checked_cholesky(M)
        beta = _cho_solve(L, b)
    except RankDeficient:
        beta = np.linalg.lstsq(M, b, rcond=None)[0]
    r = y - X @ beta
    return float(np.sum(lam * r**2)), beta


def _dual_value(X, y, pi, lam_b, scale_idx, free_idx, h_free) -> float:
    """Lagrangian dual value for multipliers lam_b on the cap constraints.

    The remaining multipliers are eliminated: u-stationarity pins the
    positivity multipliers to 1 - lam_b (so lam_b is clipped to [0, 1]),
    and the box multipliers together with the mass multiplier nu reduce
    to a concave piecewise-linear maximization over nu whose breakpoints
    are lam_b * pi on the free set.  ``scale_idx`` is the fixed-out plus
    free index set, whose lam * pi total is charged against the value.
    """
    lam = np.clip(lam_b, 0.0, 1.0)
    value, _ = _wls_exact(X, y, lam)
    if scale_idx.size:
        value -= float(np.sum(lam[scale_idx] * pi[scale_idx]))
    if free_idx.size:
        t = np.sort(lam[free_idx] * pi[free_idx])
        cs = np.cumsum(t)
        counts = np.arange(1.0, t.size + 1.0)
        phi = t * h_free - (counts * t - cs)
        value += float(phi.max())
    return value


def _primal_value(r2: np.ndarray, pi: np.ndarray, w: np.ndarray) -> float:
    return float(np.maximum(0.0, r2 - pi * (1.0 - w)).sum())


def solve_relaxation(prob: RelaxationProblem, tol: float = 1e-7,
                     prune_cutoff: float | None = None, max_iter: int = 60) -> RelaxationResult:
    """Solve the node relaxation to the requested relative duality gap.

    With ``prune_cutoff`` given, iteration also stops as soon as the
    cutoff question is decided: either the certified lower bound exceeds
    the cutoff on a consistent iterate (the caller will prune) or the
    primal value is already below the cutoff (no bound from this node can
    prune; the residuals are then only needed for child ordering).
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    data = prob.data
    n, d = data.n, data.d
    if len(prob.s1) > prob.h or n - len(prob.s0) < prob.h:
        return RelaxationResult(np.inf, np.inf, np.zeros(n), np.zeros(d),
                                np.zeros(n), False, RelaxStatus.INFEASIBLE)
    free = prob.free
    h_free = prob.h - len(prob.s1)
    if free.size == 0 or h_free == 0 or h_free == free.size:
        active = np.zeros(n, dtype=bool)
        if prob.s1:
            active[list(prob.s1)] = True
        if free.size and h_free == free.size:
            active[free] = True
        return _solve_fixed(prob, active, free, float(h_free), tol)
    return _ipm(prob, free, h_free, tol, prune_cutoff, max_iter)


def _consistency_scope(prob: RelaxationProblem) -> np.ndarray:
    return np.flatnonzero(~np.isin(np.arange(prob.data.n), list(prob.s0)))


def _solve_fixed(prob: RelaxationProblem, active: np.ndarray, free: np.ndarray,
                 h_free: float, tol: float) -> RelaxationResult:
    """Closed form when no weight is actually variable: fit the active
    subset by weighted least squares; observations fixed out contribute
    only through their (normally inactive) cap hinges."""
    data = prob.data
    lam = active.astype(np.float64)
    _, beta = _wls_exact(data.X, data.y, lam)
    r = data.y - data.X @ beta
    primal = _primal_value(r**2, prob.pi, lam)
    scale_idx = np.concatenate([np.array(sorted(prob.s0), dtype=np.intp), free])
    lower = max(0.0, _dual_value(data.X, data.y, prob.pi, lam, scale_idx, free, h_free))
    status = RelaxStatus.OPTIMAL if primal - lower <= tol * (1.0 + abs(primal)) else RelaxStatus.GAP_TOO_LARGE
    return RelaxationResult(lower, primal, lam, beta, r,
                            check_consistency(r, prob.pi, _consistency_scope(prob)), status)


def _ipm(prob: RelaxationProblem, free: np.ndarray, h_free: int, tol: float,
         prune_cutoff: float | None, max_iter: int) -> RelaxationResult:
    data, pi = prob.data, prob.pi
    X, y = data.X, data.y
    n, d = data.n, data.d
    f = free.size
    N = d + f + n
    m = 2 * n + 2 * f
    scope = _consistency_scope(prob)
    cert_scale_idx = np.concatenate([np.array(sorted(prob.s0), dtype=np.intp), free])

    w_fixed = np.zeros(n)
    if prob.s1:
        w_fixed[list(prob.s1)] = 1.0

    def w_full(wf):
        w = w_fixed.copy()
        w[free] = wf
        return w

    # start from the plain LS coefficients with uniform free weights
    _, beta = _wls_exact(X, y, np.ones(n))
    wf = np.full(f, h_free / f)
    r = y - X @ beta
    u = np.maximum(0.0, r**2 - pi * (1.0 - w_full(wf))) + 1.0 + 0.01 * float(np.mean(r**2))

    # constant Jacobian blocks; only the beta block of the cap rows moves
    J = np.zeros((m, N))
    J[:n, d + f :] = np.eye(n)
    J[n : 2 * n, d + f :] = np.eye(n)
    J[n + free, d + np.arange(f)] = -pi[free]
    J[2 * n : 2 * n + f, d : d + f] = np.eye(f)
    J[2 * n + f :, d : d + f] = -np.eye(f)
    a = np.zeros(N)
    a[d : d + f] = 1.0
    c = np.zeros(N)
    c[d + f :] = 1.0

    def slacks(wf, u, r):
        return np.concatenate([u, u + pi * (1.0 - w_full(wf)) - r**2, wf, 1.0 - wf])

    s = slacks(wf, u, r)
    lam = np.maximum((1.0 + float(u.sum())) / (m * s), 1e-8)
    nu = 0.0

    best_lb = 0.0
    best_val = np.inf
    best_state = (beta, wf, r)
    status = RelaxStatus.GAP_TOO_LARGE
    return_current = False
    it = 0
    diag = np.arange(N)
    for it in range(1, max_iter + 1):
        r = y - X @ beta
        r2 = r**2
        val = _primal_value(r2, pi, w_full(wf))
        if val < best_val:
            best_val = val
            best_state = (beta.copy(), wf.copy(), r.copy())
        lam_b = lam[n : 2 * n]
        best_lb = max(best_lb, _dual_value(X, y, pi, lam_b, cert_scale_idx, free, float(h_free)))
        if best_val - best_lb <= tol * (1.0 + abs(best_val)):
            status = RelaxStatus.OPTIMAL
            break
        if prune_cutoff is not None:
            if best_lb > prune_cutoff and check_consistency(r, pi, scope):
                status = RelaxStatus.OPTIMAL
                return_current = True
                break
            if best_val <= prune_cutoff:
                status = RelaxStatus.OPTIMAL
                break

        J[n : 2 * n, :d] = 2.0 * r[:, None] * X
        g = slacks(wf, u, r)
        rg = g - s
        re = wf.sum() - h_free
        rd = c - J.T @ lam - a * nu
        mu = float(s @ lam) / m

        K = J.T @ ((lam / s)[:, None] * J)
        K[:d, :d] += 2.0 * X.T @ (X * lam_b[:, None])
        KB = np.zeros((N + 1, N + 1))
        KB[:N, :N] = K
        KB[diag, diag] += 1e-13 * (1.0 + np.trace(K) / N)
        KB[:N, N] = -a
        KB[N, :N] = a
        try:
            lu = sla.lu_factor(KB, check_finite=False)
        except (ValueError, sla.LinAlgError):
            break

        def direction(rc):
            rhs = np.concatenate([-rd - J.T @ ((rc + lam * rg) / s), [-re]])
            sol = sla.lu_solve(lu, rhs, check_finite=False)
            dx, dnu = sol[:N], sol[N]
            ds = J @ dx + rg
            dlam = -(rc + lam * ds) / s
            return dx, dnu, ds, dlam

        def steplen(v, dv):
            neg = dv < 0.0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(0.995 * np.min(-v[neg] / dv[neg])))

        dx_a, _, ds_a, dlam_a = direction(s * lam)
        mu_aff = float((s + steplen(s, ds_a) * ds_a) @ (lam + steplen(lam, dlam_a) * dlam_a)) / m
        sigma = min(0.9, max(1e-4, (mu_aff / max(mu, 1e-300)) ** 3))
        dx, dnu, ds, dlam = direction(s * lam + ds_a * dlam_a - sigma * mu)
        ap = steplen(s, ds)
        ad = steplen(lam, dlam)

        beta = beta + ap * dx[:d]
        wf = wf + ap * dx[d : d + f]
        u = u + ap * dx[d + f :]
        s = s + ap * ds
        lam = lam + ad * dlam
        nu = nu + ad * dnu

    if not return_current:
        beta, wf, r = best_state
    w = w_full(wf)
    primal = _primal_value(r**2, pi, w)
    return RelaxationResult(best_lb, primal, w, beta, r,
                            check_consistency(r, pi, scope), status, it)
