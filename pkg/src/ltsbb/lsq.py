"""Dense least-squares kernels for trimmed-regression subset search.

Everything here operates on a fixed design matrix X (n x d) and response
vector y (n).  The central objects are weighted least-squares values for
weight vectors in the unit box and incremental refits when one observation
is added to an active subset.  Fits carry a lower-triangular Cholesky
factor of the weighted normal matrix so that adding an observation costs
O(d^2) in the factor update plus O(n d) to refresh the full residual
vector (residuals are kept for all n observations, since bound checks and
child ordering need them outside the active subset).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# Relative pivot threshold below which a weighted normal matrix is treated
# as numerically singular.
PIVOT_RTOL = 1e-10


class RankDeficient(Exception):
    """The weighted normal matrix X' D(w) X is numerically singular."""


@dataclass(frozen=True)
class Dataset:
    """Immutable regression problem: rows of X are observations.

    Parameters
    ----------
    X : ndarray, shape (n, d)
        Explicative variables, one observation per row.
    y : ndarray, shape (n,)
        Responses.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on the number of observations")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need at least one observation and one variable")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class FitState:
    """State of a least-squares fit on an active subset of observations.

    Fields
    ------
    chol : lower-triangular Cholesky factor L with L L' = X' D(w) X,
        where w is the indicator of ``active``.
    beta : minimizer of the subset sum of squared residuals.
    residuals : y - X beta for all n observations, not just active ones.
    rss : sum of squared residuals over the active subset.
    active : sorted tuple of active observation indices.
    """

    chol: np.ndarray
    beta: np.ndarray
    residuals: np.ndarray
    rss: float
    active: tuple[int, ...]


def _checked_cholesky(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of M with a relative pivot check."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise RankDeficient("normal matrix is not positive definite") from None
    piv = np.diagonal(L) ** 2
    if piv.min() < PIVOT_RTOL * M.diagonal().max():
        raise RankDeficient("normal matrix pivot below relative threshold")
    return L


def _cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, z, lower=False, check_finite=False)


def ols_fit(data: Dataset, subset) -> FitState:
    """Ordinary least squares on a subset of observations.

    Parameters
    ----------
    data : Dataset
    subset : iterable of observation indices; must contain at least d
        indices whose rows span dimension d.

    Returns
    -------
    FitState with residuals for all n observations and rss summed over
    the subset only.

    Raises
    ------
    RankDeficient
        If the subset normal matrix is numerically singular.
    """
    idx = np.asarray(sorted(subset), dtype=np.intp)
    if idx.size < data.d:
        raise RankDeficient(
            f"subset of size {idx.size} cannot span dimension {data.d}"
        )
    Xs = data.X[idx]
    M = Xs.T @ Xs
    L = _checked_cholesky(M)
    beta = _cho_solve(L, Xs.T @ data.y[idx])
    residuals = data.y - data.X @ beta
    rss = float(np.sum(residuals[idx] ** 2))
    return FitState(L, beta, residuals, rss, tuple(int(i) for i in idx))


def weighted_fit(data: Dataset, w: np.ndarray):
    """Weighted least squares for box weights, total on [0, 1]^n.

    Returns ``(value, beta, residuals)`` where ``value`` is the weighted
    sum of squared residuals at ``beta``.  A singular normal matrix is
    regularized with a ridge eps * I, eps = 1e-8 * trace(M) / d, so the
    function is defined for any weight vector in the box (fractional
    weight vectors with mass below d rows arise in cap estimation and in
    dual certificates and must not abort).
    """
    w = np.asarray(w, dtype=np.float64)
    Xw = data.X * w[:, None]
    M = Xw.T @ data.X
    b = Xw.T @ data.y
    try:
        L = _checked_cholesky(M)
    except RankDeficient:
        eps = 1e-8 * np.trace(M) / data.d
        if eps > 0.0:
            try:
                L = _checked_cholesky(M + eps * np.eye(data.d))
            except RankDeficient:
                L = None
        else:
            L = None
        if L is None:
            beta = np.linalg.lstsq(M, b, rcond=None)[0]
            residuals = data.y - data.X @ beta
            return float(np.sum(w * residuals**2)), beta, residuals
    beta = _cho_solve(L, b)
    residuals = data.y - data.X @ beta
    return float(np.sum(w * residuals**2)), beta, residuals


def wls_value(data: Dataset, w: np.ndarray) -> float:
    """Value of the weighted least-squares problem at weights w.

    For binary w this is the subset residual sum of squares; the function
    is total on the box [0, 1]^n (see ``weighted_fit`` for the singular
    case) and always nonnegative.
    """
    return weighted_fit(data, w)[0]


def rss_increment(state: FitState, data: Dataset, j: int) -> float:
    """Increase of the subset RSS when observation j joins the fit.

    Computes r_j^2 / (1 + x_j' M^{-1} x_j) by triangular solves against
    the state's Cholesky factor.  Nonnegative, so the weighted value is
    non-decreasing from a node to any of its children.
    """
    if j in state.active:
        raise ValueError(f"observation {j} already active")
    x = data.X[j]
    z = solve_triangular(state.chol, x, lower=True, check_finite=False)
    return float(state.residuals[j] ** 2 / (1.0 + z @ z))


def _increments(state: FitState, data: Dataset, idx: np.ndarray) -> np.ndarray:
    """Vectorized ``rss_increment`` over several candidate indices."""
    Z = solve_triangular(state.chol, data.X[idx].T, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", Z, Z)
    return state.residuals[idx] ** 2 / (1.0 + quad)


def rank_one_add(state: FitState, data: Dataset, j: int) -> FitState:
    """New FitState with observation j added to the active subset.

    The Cholesky factor is updated in place of a refit (O(d^2)); beta is
    then recovered from beta + r_j * M_new^{-1} x_j and residuals are
    refreshed for all n observations.  The input state is not modified.
    """
    if j in state.active:
        raise ValueError(f"observation {j} already active")
    inc = rss_increment(state, data, j)
    L = _chol_update(state.chol, data.X[j])
    beta = state.beta + state.residuals[j] * _cho_solve(L, data.X[j])
    residuals = data.y - data.X @ beta
    active = tuple(sorted(state.active + (j,)))
    return FitState(L, beta, residuals, state.rss + inc, active)


def _chol_update(L: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lower factor of L L' + x x' by the standard rank-one update."""
    L = L.copy()
    x = x.astype(np.float64, copy=True)
    d = L.shape[0]
    for k in range(d):
        lkk = L[k, k]
        r = np.hypot(lkk, x[k])
        if r <= 0.0:
            raise RankDeficient("rank-one update annihilated a pivot")
        c, s = r / lkk, x[k] / lkk
        L[k, k] = r
        if k + 1 < d:
            L[k + 1 :, k] = (L[k + 1 :, k] + s * x[k + 1 :]) / c
            x[k + 1 :] = c * x[k + 1 :] - s * L[k + 1 :, k]
    return L


def lts_objective(data: Dataset, beta: np.ndarray, h: int) -> float:
    """Sum of the h smallest squared residuals of beta.

    Ties among equal squared residuals cannot change the sum; where a
    selected subset is needed elsewhere, ties on |r| are broken by index.
    """
    if not 1 <= h <= data.n:
        raise ValueError(f"h={h} outside 1..{data.n}")
    r2 = (data.y - data.X @ np.asarray(beta, dtype=np.float64)) ** 2
    return float(np.sort(r2)[:h].sum())


def smallest_residual_subset(residuals: np.ndarray, h: int) -> np.ndarray:
    """Indices of the h smallest absolute residuals, ties broken by index."""
    order = np.argsort(np.abs(residuals), kind="stable")
    return np.sort(order[:h])
