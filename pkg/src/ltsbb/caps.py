"""Global residual cap by concave maximization of the weighted LS value.

The cap is the maximum of v(w), the weighted least-squares value, over
weight vectors in the unit box with fixed total mass q (q = d/2 by
default).  v is concave, so a Frank-Wolfe scheme with exact
supergradients applies: the linear subproblem over the capped simplex has
a closed-form vertex, and the linearization value at any iterate upper
bounds the optimum, certifying the gap.

Plain Frank-Wolfe zigzags when the maximizer sits on a low-dimensional
face, which is the common case here, so the loop periodically polishes
through the equivalent min-max form: minimizing over the coefficients the
sum of the q largest squared residuals (every such value upper-bounds the
cap).  The polish smooths the hinge in the threshold representation
q*tau + sum max(0, r_k^2 - tau), follows a decreasing smoothing ladder,
and finishes with Newton steps on the exact saddle equations; the hinge
sigmoids double as a feasible primal weight vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .lsq import Dataset, weighted_fit


@dataclass(frozen=True)
class PiBound:
    """Residual cap estimate.

    ``pi`` is the best feasible value found (a lower estimate of the true
    maximum); ``certified_gap`` bounds the distance to the optimum from
    above, via the Frank-Wolfe linearization.
    """

    pi: float
    q: float
    iterations: int
    certified_gap: float

    def converged(self, tol: float) -> bool:
        return self.certified_gap <= tol * (1.0 + self.pi)


def v_supergradient(data: Dataset, w: np.ndarray) -> np.ndarray:
    """Supergradient of the weighted LS value at w: the squared residuals
    of the (ridge-regularized when singular) weighted fit."""
    _, _, residuals = weighted_fit(data, w)
    return residuals**2


def _lmo(g: np.ndarray, q: float) -> np.ndarray:
    """Maximize g'w over {0 <= w <= 1, sum w = q}: weight 1 on the
    floor(q) largest entries, the fractional remainder on the next.
    Ties are broken by index."""
    n = g.shape[0]
    order = np.lexsort((np.arange(n), -g))
    whole = int(np.floor(q))
    w = np.zeros(n)
    w[order[:whole]] = 1.0
    frac = q - whole
    if frac > 0.0 and whole < n:
        w[order[whole]] = frac
    return w


def project_capped_simplex(v: np.ndarray, mass: float, iters: int = 60) -> np.ndarray:
    """Euclidean projection of v onto {0 <= w <= 1, sum w = mass}."""
    lo = float(v.min()) - 1.0
    hi = float(v.max())
    for _ in range(iters):
        theta = 0.5 * (lo + hi)
        if np.clip(v - theta, 0.0, 1.0).sum() > mass:
            lo = theta
        else:
            hi = theta
    return np.clip(v - 0.5 * (lo + hi), 0.0, 1.0)


def _top_q_value(data: Dataset, beta: np.ndarray, q: float) -> float:
    """Sum of the q largest squared residuals at beta (upper-bounds the cap)."""
    r = data.y - data.X @ beta
    w = _lmo(r**2, q)
    return float((w * r) @ r)


def _smoothed_polish(data: Dataset, q: float, beta0: np.ndarray):
    """Minimize q*tau + sum softplus(r^2 - tau) over (beta, tau) along a
    decreasing smoothing ladder; returns (beta, tau, weights).

    Each ladder rung is solved by damped Newton: the objective is smooth
    and convex and the (d+1)-dimensional Hessian is explicit, which stays
    reliable at smoothing levels where quasi-Newton line searches stall.
    """
    d, X, y = data.d, data.X, data.y
    r0 = y - X @ beta0
    scale = max(float(np.mean(r0**2)), 1e-12)
    pivot_pos = min(int(np.ceil(q)), data.n) - 1
    tau = float(np.sort(r0**2)[::-1][pivot_pos])
    beta = np.asarray(beta0, dtype=np.float64).copy()
    mu = scale * 1e-1

    def value(beta, tau, mu):
        r = y - X @ beta
        return q * tau + mu * np.logaddexp(0.0, (r**2 - tau) / mu).sum()

    for _ in range(9):
        for _ in range(25):
            r = y - X @ beta
            t = (r**2 - tau) / mu
            sig = expit(t)
            dsig = sig * (1.0 - sig) / mu
            grad = np.concatenate([-2.0 * (X.T @ (sig * r)), [q - sig.sum()]])
            if np.abs(grad).max() <= 1e-13 * (1.0 + q * abs(tau)):
                break
            H = np.zeros((d + 1, d + 1))
            H[:d, :d] = X.T @ (X * (4.0 * dsig * r**2 + 2.0 * sig)[:, None])
            cross = 2.0 * (X.T @ (dsig * r))
            H[:d, d] = cross
            H[d, :d] = cross
            H[d, d] = dsig.sum()
            try:
                step = np.linalg.solve(H + 1e-14 * np.trace(H) * np.eye(d + 1), -grad)
            except np.linalg.LinAlgError:
                break
            f0 = value(beta, tau, mu)
            alpha = 1.0
            for _ in range(40):
                if value(beta + alpha * step[:d], tau + alpha * step[d], mu) <= f0 + 1e-4 * alpha * (grad @ step):
                    break
                alpha *= 0.5
            beta = beta + alpha * step[:d]
            tau = tau + alpha * step[d]
        mu *= 1e-1
    r = y - X @ beta
    return beta, float(tau), expit((r**2 - tau) / (10.0 * mu))


def _saddle_refine(data: Dataset, q: float, beta, tau, w, steps: int = 12):
    """Newton refinement of the max-v saddle for a fixed active structure.

    The structure (weights at 1, fractional tie group) is read off ``w``;
    the unknowns are the coefficients, the tie masses and the residual
    threshold, and the equations are weighted-fit stationarity, squared
    residuals equal to the threshold on the tie group, and the mass
    budget.  Returns the refined (beta, weights) or None if the solve is
    rejected.
    """
    top = np.flatnonzero(w >= 1.0 - 1e-6)
    tie = np.flatnonzero((w > 1e-6) & (w < 1.0 - 1e-6))
    d, X, y = data.d, data.X, data.y
    mass_left = q - top.size
    if tie.size == 0:
        if top.size == 0:
            return None
        _, beta, _ = weighted_fit(data, np.isin(np.arange(data.n), top).astype(float))
        wq = np.zeros(data.n)
        wq[top] = 1.0
        return beta, project_capped_simplex(wq, q)
    m = w[tie].copy()
    beta = beta.copy()
    prev = np.inf
    for _ in range(steps):
        r = y - X @ beta
        Xt, Xtop = X[tie], X[top]
        e1 = Xtop.T @ r[top] + Xt.T @ (m * r[tie]) if top.size else Xt.T @ (m * r[tie])
        e2 = r[tie] ** 2 - tau
        e3 = np.array([m.sum() - mass_left])
        F = np.concatenate([e1, e2, e3])
        norm = float(np.abs(F).max())
        if norm >= prev * 2.0 or not np.isfinite(norm):
            return None
        if norm < 1e-12 * (1.0 + tau):
            break
        prev = norm
        Mw = Xt.T @ (m[:, None] * Xt)
        if top.size:
            Mw += Xtop.T @ Xtop
        t = tie.size
        J = np.zeros((d + t + 1, d + t + 1))
        J[:d, :d] = -Mw
        J[:d, d : d + t] = (r[tie] * Xt.T)
        J[d : d + t, :d] = -2.0 * r[tie, None] * Xt
        J[d : d + t, d + t] = -1.0
        J[d + t, d : d + t] = 1.0
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        beta = beta + step[:d]
        m = m + step[d : d + t]
        tau = tau + step[d + t]
        if np.any(m < -0.25) or np.any(m > 1.25):
            return None
    wq = np.zeros(data.n)
    wq[top] = 1.0
    wq[tie] = np.clip(m, 0.0, 1.0)
    return beta, project_capped_simplex(wq, q)


def estimate_pi(data: Dataset, q: float, tol: float = 1e-6, max_iter: int = 5000) -> PiBound:
    """Estimate the residual cap for total weight mass q.

    Runs Frank-Wolfe from the uniform feasible point with the 2/(k+2)
    schedule, certifying optimality through the linearization gap, with
    polish passes at fixed checkpoints (see module docstring).  Fully
    deterministic for fixed inputs.  If the iteration cap is reached, the
    best value so far is returned with its remaining ``certified_gap``.
    """
    if not 0.0 < q <= data.n:
        raise ValueError(f"q={q} outside (0, n]")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    w = np.full(data.n, q / data.n)
    best_v = 0.0
    best_w = w
    upper = np.inf
    polish_at = {10, 50, 200, 1000, 3000}
    k = 0
    for k in range(1, max_iter + 1):
        value, _, residuals = weighted_fit(data, w)
        g = residuals**2
        if value > best_v:
            best_v, best_w = value, w
        s = _lmo(g, q)
        upper = min(upper, value + g @ (s - w))
        if upper - best_v <= tol * (1.0 + best_v):
            break
        if k in polish_at:
            beta0 = weighted_fit(data, best_w)[1]
            beta, tau, w_sig = _smoothed_polish(data, q, beta0)
            upper = min(upper, _top_q_value(data, beta, q))
            refined = _saddle_refine(data, q, beta, tau, w_sig)
            candidates = [project_capped_simplex(w_sig, q)]
            if refined is not None:
                beta_r, w_r = refined
                upper = min(upper, _top_q_value(data, beta_r, q))
                candidates.append(w_r)
            for w_cand in candidates:
                v_cand = weighted_fit(data, w_cand)[0]
                if v_cand > best_v:
                    best_v, best_w = v_cand, w_cand
                    w = w_cand
            if upper - best_v <= tol * (1.0 + best_v):
                break
        w = w + (2.0 / (k + 2.0)) * (s - w)
    return PiBound(best_v, float(q), k, max(0.0, upper - best_v))
