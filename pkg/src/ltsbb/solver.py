"""Branch-and-bound solvers for the least-trimmed-squares subset problem.

Three modes share one report format:

* ``SBB``    - depth-first subset search with relaxation bounds at the
  top ``d`` tree levels, the monotone incremental bound below them, and
  concentration steps at every evaluated leaf.
* ``BBA``    - the monotone-bound-only baseline.  Its pruning is
  lossless, so the result is exact.
* ``BRUTE``  - exhaustive enumeration of all size-h subsets, the oracle.

In the relaxation zone each child candidate with a large enough subtree
gets a relaxation solve; a child is pruned only when the relaxation
solution is consistent and its certified lower bound exceeds the
incumbent, and the relaxation residuals order the surviving children
(largest squared residual leftmost, where subtrees are biggest).  Child
relaxations are built without left-sibling exclusions so that prune
decisions stay valid under reordering.  Below the relaxation zone, a
node's subset RSS bounds every descendant; children are ordered by
ascending RSS increment.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .caps import estimate_pi
from .csteps import Incumbent, c_steps
from .lsq import (Dataset, FitState, RankDeficient, _increments, lts_objective,
                  ols_fit, rank_one_add, smallest_residual_subset)
from .relaxation import RelaxStatus, build_node_problem, solve_relaxation
from .tree import NodeState

logger = logging.getLogger(__name__)


class SolveMode(enum.Enum):
    SBB = "sbb"
    BBA = "bba"
    BRUTE = "brute"


class InfeasibleConfig(Exception):
    """Coverage or tolerance settings incompatible with the data shape."""


class RankDeficientData(Exception):
    """No full-rank fit is available where the search requires one."""


def default_coverage(n: int, d: int) -> int:
    """Coverage giving the maximum asymptotic breakdown point of 50%."""
    return n // 2 + (d + 1) // 2


@dataclass
class SolverConfig:
    h: int | None = None
    q: float | None = None
    socp_leaf_threshold: int | float = 10**6
    mode: SolveMode = SolveMode.SBB
    tol_relax: float = 1e-7
    tol_pi: float = 1e-6
    unsafe_inconsistent_prune: bool = False
    max_cstep_iter: int = 50
    enable_csteps: bool | None = None  # None: on for SBB, off for BBA
    socp_depth_cutoff: int | None = None  # None: the data dimension d

    def csteps_on(self) -> bool:
        if self.enable_csteps is None:
            return self.mode is SolveMode.SBB
        return self.enable_csteps


@dataclass
class SolveReport:
    beta: np.ndarray
    subset: tuple[int, ...]
    objective: float
    h: int
    mode: str
    nodes_visited: int = 0
    leaves_visited: int = 0
    monotone_prunes: int = 0
    socp_calls: int = 0
    socp_prunes: int = 0
    inconsistent_relaxations: int = 0
    elapsed: float = 0.0

    def signature(self) -> tuple:
        """Everything except the wall clock, for determinism checks."""
        return (tuple(np.asarray(self.beta).tolist()), self.subset, self.objective,
                self.h, self.mode, self.nodes_visited, self.leaves_visited,
                self.monotone_prunes, self.socp_calls, self.socp_prunes,
                self.inconsistent_relaxations)


class IncumbentTracker:
    """Monotone incumbent store: objective never increases."""

    def __init__(self, incumbent: Incumbent):
        self.current = incumbent

    def update(self, candidate: Incumbent) -> bool:
        if candidate.objective < self.current.objective - 1e-12:
            self.current = candidate
            return True
        return False


def update_incumbent(tracker: IncumbentTracker, candidate: Incumbent) -> bool:
    """Offer a candidate; True iff it strictly improved the incumbent."""
    return tracker.update(candidate)


def _subset_value(data: Dataset, subset) -> tuple[float, np.ndarray]:
    """Exact minimum subset RSS and a minimizer; falls back to a
    least-squares pseudo-solution when the subset is rank deficient so
    that every subset has a well-defined value in every mode."""
    try:
        fit = ols_fit(data, subset)
        return fit.rss, fit.beta
    except RankDeficient:
        idx = np.asarray(sorted(subset), dtype=np.intp)
        beta = np.linalg.lstsq(data.X[idx], data.y[idx], rcond=None)[0]
        r = data.y[idx] - data.X[idx] @ beta
        return float(r @ r), beta


def solve(data: Dataset, cfg: SolverConfig) -> SolveReport:
    """Run the configured solve mode and report the best subset found.

    BRUTE and BBA modes return the exact optimum; SBB may trade a small
    probability of missing it for pruning speed (the relaxation caps are
    estimates, not guaranteed bounds).
    """
    t0 = time.perf_counter()
    n, d = data.n, data.d
    h = cfg.h if cfg.h is not None else default_coverage(n, d)
    if not d <= h <= n:
        raise InfeasibleConfig(f"need d <= h <= n, got d={d}, h={h}, n={n}")
    if cfg.q is not None and not 0.0 < cfg.q <= n:
        raise InfeasibleConfig(f"q={cfg.q} outside (0, n]")
    if cfg.socp_leaf_threshold < 0:
        raise InfeasibleConfig("socp_leaf_threshold must be nonnegative")
    if cfg.max_cstep_iter < 1:
        raise InfeasibleConfig("max_cstep_iter must be at least 1")
    if cfg.mode is SolveMode.BRUTE:
        report = _solve_brute(data, h)
    else:
        report = _Search(data, cfg, h).run()
    report.elapsed = time.perf_counter() - t0
    return report


def _solve_brute(data: Dataset, h: int) -> SolveReport:
    best_rss = np.inf
    best = None
    count = 0
    for subset in itertools.combinations(range(data.n), h):
        count += 1
        rss, beta = _subset_value(data, subset)
        if rss < best_rss:
            best_rss, best = rss, (subset, beta)
    if best is None:
        raise RankDeficientData("no evaluable subset")
    subset, beta = best
    return SolveReport(beta, tuple(subset), best_rss, h, SolveMode.BRUTE.value,
                       nodes_visited=count, leaves_visited=count)


class _Search:
    """Shared state for one SBB/BBA run."""

    def __init__(self, data: Dataset, cfg: SolverConfig, h: int):
        self.data = data
        self.cfg = cfg
        self.h = h
        self.n, self.d = data.n, data.d
        self.sbb = cfg.mode is SolveMode.SBB
        self.cutoff = cfg.socp_depth_cutoff if cfg.socp_depth_cutoff is not None else self.d
        self.report = SolveReport(np.zeros(self.d), (), np.inf, h, cfg.mode.value)

    def run(self) -> SolveReport:
        data, cfg, h = self.data, self.cfg, self.h
        try:
            full = ols_fit(data, range(self.n))
        except RankDeficient as exc:
            raise RankDeficientData("design matrix is rank deficient") from exc
        if cfg.csteps_on():
            start = c_steps(data, full.beta, h, cfg.max_cstep_iter)
        else:
            subset = tuple(int(i) for i in smallest_residual_subset(full.residuals, h))
            start = Incumbent(subset, full.beta, lts_objective(data, full.beta, h))
        self.incumbent = IncumbentTracker(start)

        self.pi_global = None
        if self.sbb:
            pi = estimate_pi(data, cfg.q if cfg.q is not None else self.d / 2.0, cfg.tol_pi)
            if not pi.converged(cfg.tol_pi):
                logger.warning("cap estimate stopped with relative gap %.2e", pi.certified_gap / (1.0 + pi.pi))
            # a vanishing cap only happens on exactly-fittable data; keep
            # the relaxation caps strictly positive
            self.pi_global = max(pi.pi, 1e-9 * (1.0 + full.rss / self.n))

        self._expand(NodeState(), None)

        best = self.incumbent.current
        self.report.beta = np.asarray(best.beta, dtype=np.float64)
        self.report.subset = tuple(int(i) for i in best.subset)
        self.report.objective = float(best.objective)
        return self.report

    # ---- tree expansion -------------------------------------------------

    def _expand(self, node: NodeState, fit: FitState | None) -> None:
        self.report.nodes_visited += 1
        depth = node.depth
        if depth == self.h:
            self._leaf(node, fit)
            return
        if fit is None and depth >= self.d:
            try:
                fit = ols_fit(self.data, node.s1)
            except RankDeficient:
                fit = None
        if fit is not None and fit.rss >= self.incumbent.current.objective:
            self.report.monotone_prunes += 1
            return
        if self.sbb and depth < self.cutoff:
            self._expand_relaxed(node)
        else:
            self._expand_monotone(node, fit)

    def _leaf(self, node: NodeState, fit: FitState | None) -> None:
        self.report.leaves_visited += 1
        if fit is not None:
            rss, beta = fit.rss, fit.beta
        else:
            rss, beta = _subset_value(self.data, node.s1)
        candidate = Incumbent(tuple(sorted(node.s1)), beta, rss)
        if self.cfg.csteps_on():
            candidate = c_steps(self.data, beta, self.h, self.cfg.max_cstep_iter)
            if candidate.objective > rss + 1e-12:
                candidate = Incumbent(tuple(sorted(node.s1)), beta, rss)
        self.incumbent.update(candidate)

    def _candidates(self, node: NodeState) -> list[int]:
        fixed = node.s0.union(node.s1)
        free = [i for i in range(self.n) if i not in fixed]
        return free[: self.n - len(node.s0) - self.h + 1]

    def _expand_monotone(self, node: NodeState, fit: FitState | None) -> None:
        cand = self._candidates(node)
        if fit is None:
            ordered = cand
            bounds = None
        else:
            idx = np.asarray(cand, dtype=np.intp)
            inc = _increments(fit, self.data, idx)
            order = np.argsort(inc, kind="stable")
            ordered = [cand[i] for i in order]
            bounds = fit.rss + inc[order]
        s0 = node.s0
        for pos, c in enumerate(ordered):
            child = NodeState(node.s1 + (c,), s0)
            s0 = s0.union((c,))
            if bounds is not None and bounds[pos] >= self.incumbent.current.objective:
                self.report.nodes_visited += 1
                self.report.monotone_prunes += 1
                continue
            child_fit = None
            if fit is not None:
                try:
                    child_fit = rank_one_add(fit, self.data, c)
                except RankDeficient:
                    child_fit = None
            self._expand(child, child_fit)

    def _expand_relaxed(self, node: NodeState) -> None:
        cand = self._candidates(node)
        free_before = self.n - len(node.s0) - len(node.s1)
        want = self.h - len(node.s1) - 1
        scores: dict[int, float] = {}
        bounds: dict[int, tuple[float, bool]] = {}
        reference: np.ndarray | None = None
        for l, c in enumerate(cand, start=1):
            # subtree size of the child in its default position; small
            # subtrees are not worth a relaxation solve
            if math.comb(free_before - l, want) <= self.cfg.socp_leaf_threshold:
                continue
            # the child problem carries no left-sibling exclusions, so the
            # bound covers the child subtree in any position and pruning
            # stays valid after reordering
            prob = build_node_problem(self.data, self.pi_global,
                                      NodeState(node.s1 + (c,), node.s0), self.h)
            res = solve_relaxation(prob, self.cfg.tol_relax,
                                   prune_cutoff=self.incumbent.current.objective)
            self.report.socp_calls += 1
            if not res.consistent:
                self.report.inconsistent_relaxations += 1
            if res.status is RelaxStatus.GAP_TOO_LARGE:
                logger.debug("relaxation gap too large at node %s child %d", node.s1, c)
                continue
            if reference is None:
                reference = res.residuals**2
            scores[c] = float(res.residuals[c] ** 2)
            bounds[c] = (res.lower_bound, res.consistent)
        if reference is not None:
            for c in cand:
                if c not in scores:
                    scores[c] = float(reference[c] ** 2)
            ordered = sorted(cand, key=lambda c: (-scores[c], c))
        else:
            ordered = cand
        s0 = node.s0
        for c in ordered:
            child = NodeState(node.s1 + (c,), s0)
            s0 = s0.union((c,))
            if c in bounds:
                lb, consistent = bounds[c]
                if (consistent or self.cfg.unsafe_inconsistent_prune) and \
                        lb > self.incumbent.current.objective:
                    self.report.nodes_visited += 1
                    self.report.socp_prunes += 1
                    logger.debug("relaxation prune at node %s child %d: lb=%.6g",
                                 node.s1, c, lb)
                    continue
            self._expand(child, None)
