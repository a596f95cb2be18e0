"""Concentration steps: local improvement of a trimmed-squares incumbent.

One step takes the current coefficients, selects the h observations with
the smallest absolute residuals (ties by index) and refits ordinary least
squares on that subset.  The subset RSS never increases from one step to
the next, so iterating terminates at a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lsq import Dataset, FitState, RankDeficient, ols_fit


@dataclass(frozen=True)
class Incumbent:
    """A size-h subset with its OLS coefficients and subset RSS."""

    subset: tuple[int, ...]
    beta: np.ndarray
    objective: float


def _fit_near_subset(data: Dataset, residuals: np.ndarray, h: int) -> FitState:
    """Fit the h smallest-|r| subset, swapping in next-smallest indices
    while the selection is rank deficient."""
    order = np.argsort(np.abs(residuals), kind="stable")
    base = list(order[: h - 1])
    for t in range(h - 1, data.n):
        try:
            return ols_fit(data, base + [int(order[t])])
        except RankDeficient:
            continue
    raise RankDeficient("no full-rank selection near the h smallest residuals")


def _c_step_iter(data: Dataset, beta: np.ndarray, h: int):
    """Yield (subset, beta, objective) after each concentration step."""
    residuals = data.y - data.X @ np.asarray(beta, dtype=np.float64)
    while True:
        fit = _fit_near_subset(data, residuals, h)
        yield fit.active, fit.beta, fit.rss
        residuals = fit.residuals


def c_steps(data: Dataset, start_beta: np.ndarray, h: int, max_iter: int = 50) -> Incumbent:
    """Iterate concentration steps from ``start_beta`` to a fixed point.

    Stops when the selected subset repeats (fixed point) or after
    ``max_iter`` refits, whichever comes first; at least one refit is
    performed so the returned objective is always a subset OLS value.
    """
    if h < data.d:
        raise ValueError(f"h={h} below dimension d={data.d}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    best = None
    prev_subset = None
    for k, (subset, beta, objective) in enumerate(_c_step_iter(data, start_beta, h)):
        if best is None or objective < best.objective:
            best = Incumbent(subset, beta, objective)
        if subset == prev_subset or k + 1 >= max_iter:
            break
        prev_subset = subset
    return best
