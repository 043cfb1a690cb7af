"""Automation cost design against an identified human partner.

design_automation searches the automation's diagonal weights so that the
two-player Nash closed loop minimizes the global objective; every candidate
evaluation solves the coupled Riccati system as a constraint.  The search
runs Nelder-Mead over log-transformed entries (positivity for free) with the
automation's first input weight pinned to 1, removing the scale direction
along which the equilibrium gains are invariant.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import minimize

from .errors import InfeasibleError, LqSharedError, NoStableCandidateError
from .games import (
    AUTOMATION,
    HUMAN,
    CostParams,
    FeedbackGain,
    GameSystem,
    GlobalObjective,
    RiccatiSolution,
    SolverOptions,
    _best_response_fast,
    _cost_matrices,
    _nash_iteration,
    closed_loop_matrix,
    evaluate_global_cost,
    solve_coupled_riccati,
    stability_margins,
)
from .inverse import IdentificationDiagnostics


@dataclass(frozen=True)
class DesignBounds:
    """Per-entry positive bounds for diag(Q_a) and diag(R_aa)."""

    q_lo: float = 1e-4
    q_hi: float = 1e5
    r_lo: float = 1e-3
    r_hi: float = 1e3

    def __post_init__(self):
        if self.q_lo <= 0 or self.r_lo <= 0:
            raise InfeasibleError("bounds must be strictly positive")
        if self.q_hi < self.q_lo or self.r_hi < self.r_lo:
            raise InfeasibleError("upper bound below lower bound")


@dataclass(frozen=True)
class DesignProblem:
    sys: GameSystem
    human_cost: CostParams
    objective: GlobalObjective
    theta_a_init: CostParams
    bounds: DesignBounds = field(default_factory=DesignBounds)
    budget: int = 2000              # max coupled-Riccati solves
    x0_weight: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        q0 = self.theta_a_init.q
        if np.any(q0 < self.bounds.q_lo) or np.any(q0 > self.bounds.q_hi):
            raise InfeasibleError("warm start q outside bounds")
        r0 = self.theta_a_init.r_self[1:]
        if r0.size and (np.any(r0 < self.bounds.r_lo) or np.any(r0 > self.bounds.r_hi)):
            raise InfeasibleError("warm start r outside bounds")


@dataclass(frozen=True)
class DesignResult:
    sys: GameSystem
    theta_a: CostParams
    k_a: FeedbackGain
    k_h_predicted: FeedbackGain
    j_g: float
    human_cost: CostParams          # the cost the design was computed against
    max_eig_real: float             # stability certificate of the design loop
    iterations: int                 # objective evaluations spent
    best_curve: tuple[float, ...]   # best-so-far J after each evaluation
    budget_exhausted: bool = False
    cancelled: bool = False
    riccati: RiccatiSolution | None = None


class _Stop(Exception):
    pass


class _Objective:
    """Budgeted, warm-started evaluation of J_g over log weight vectors.

    Works on raw matrices for speed; the winning candidate is re-solved
    through the validated public solver before it is returned.
    """

    def __init__(self, problem: DesignProblem, cancel: threading.Event | None):
        self.problem = problem
        self.cancel = cancel
        self.evals = 0
        self.best = np.inf
        self.best_vec = None
        self.curve: list[float] = []
        self.any_stable = False
        sys = problem.sys
        self.a = sys.a
        self.b = list(sys.b)
        self.n = sys.n
        costs_fixed = [problem.human_cost, problem.human_cost]
        q_m, r_m, rc_m = _cost_matrices(sys, costs_fixed)
        self.q_h = q_m[HUMAN]
        self.r_h = r_m[HUMAN]
        self.r_cross = {k: v for k, v in rc_m.items() if k[0] == HUMAN}
        self.qg = problem.objective.qg_matrix
        self.rg = [problem.objective.rg_matrix(j) for j in range(sys.n_players)]
        self.x0w = (np.eye(self.n) if problem.x0_weight is None
                    else np.atleast_2d(np.asarray(problem.x0_weight, float)))
        self.warm_p = [np.zeros((self.n, self.n)) for _ in range(2)]
        self.warm_k = [np.zeros((sys.m[j], self.n)) for j in range(2)]

    def cost_from_vec(self, v: np.ndarray) -> CostParams:
        n = self.n
        q = np.exp(v[:n])
        ma = self.problem.sys.m[AUTOMATION]
        r = np.ones(ma)
        if ma > 1:
            r[1:] = np.exp(v[n:])
        return CostParams(q, r)

    def __call__(self, v: np.ndarray) -> float:
        if self.cancel is not None and self.cancel.is_set():
            raise _Stop
        if self.evals >= self.problem.budget:
            raise _Stop
        self.evals += 1
        n = self.n
        ma = self.problem.sys.m[AUTOMATION]
        q_a = np.diag(np.exp(v[:n]))
        r_a = np.eye(ma)
        if ma > 1:
            r_a[range(1, ma), range(1, ma)] = np.exp(v[n:])
        p = [w.copy() for w in self.warm_p]
        k = [w.copy() for w in self.warm_k]
        try:
            # search-grade tolerance: the winning candidate is re-solved
            # tightly afterwards, the ranking only needs ~1e-7 resolution
            _nash_iteration(self.a, self.b, [q_a, self.q_h], [r_a, self.r_h],
                            self.r_cross, p, k, 1e-7, 300,
                            response=_best_response_fast)
            a_cl = self.a - self.b[0] @ k[0] - self.b[1] @ k[1]
            if np.max(np.linalg.eigvals(a_cl).real) >= 0:
                raise LqSharedError
            m = self.qg + k[0].T @ self.rg[0] @ k[0] + k[1].T @ self.rg[1] @ k[1]
            pg = solve_continuous_lyapunov(a_cl.T, -m)
            j = float(0.5 * np.trace(pg @ self.x0w))
            self.warm_p, self.warm_k = p, k
            self.any_stable = True
        except LqSharedError:
            j = np.inf
        if j < self.best:
            self.best = j
            self.best_vec = np.array(v)
        self.curve.append(self.best)
        return j


def _log_bounds(problem: DesignProblem) -> list[tuple[float, float]]:
    n = problem.sys.n
    b = problem.bounds
    out = [(np.log(b.q_lo), np.log(b.q_hi))] * n
    out += [(np.log(b.r_lo), np.log(b.r_hi))] * (problem.sys.m[AUTOMATION] - 1)
    return out


def design_automation(problem: DesignProblem,
                      cancel: threading.Event | None = None) -> DesignResult:
    """Minimize the global objective over the automation's weights.

    One simplex run from the warm start plus a 4-point seeded multistart;
    the best evaluation ever seen wins, so the result never falls behind the
    warm start.  Raises NoStableCandidateError when no candidate produced a
    Hurwitz loop; a budget overrun returns best-so-far with a flag.
    """
    obj = _Objective(problem, cancel)
    n = problem.sys.n
    v0 = np.concatenate([
        np.log(problem.theta_a_init.q),
        np.log(problem.theta_a_init.r_self[1:]),
    ])
    bounds = _log_bounds(problem)
    stopped = False

    try:
        obj(v0)
        remaining = max(problem.budget - obj.evals, 1)
        # reserve the four multistart probes out of the budget
        minimize(obj, v0, method="Nelder-Mead", bounds=bounds,
                 options=dict(xatol=1e-7, fatol=1e-10,
                              maxfev=max(remaining - 4, 1)))
        rng = np.random.default_rng(problem.seed)
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        starts = rng.uniform(lo, hi, size=(4, len(v0)))
        vals = [obj(s) for s in starts]
        best_start = starts[int(np.argmin(vals))]
        if np.min(vals) < obj.best * (1.0 + 1e-9) and obj.evals < problem.budget:
            minimize(obj, best_start, method="Nelder-Mead", bounds=bounds,
                     options=dict(xatol=1e-7, fatol=1e-10,
                                  maxfev=max(problem.budget - obj.evals, 1)))
    except _Stop:
        stopped = True

    if not obj.any_stable or obj.best_vec is None or not np.isfinite(obj.best):
        raise NoStableCandidateError(
            "no stabilizing automation weights found within budget")

    # tight re-solve of both the search winner and the warm start; keeping
    # the tighter-better of the two guarantees monotone improvement even
    # though the search itself ran at reduced tolerance
    def _resolve(vec):
        theta = obj.cost_from_vec(vec)
        sol = solve_coupled_riccati(problem.sys, [theta, problem.human_cost],
                                    SolverOptions(warm_start=tuple(obj.warm_p)))
        j = evaluate_global_cost(problem.sys, sol.k, problem.objective,
                                 problem.x0_weight)
        return theta, sol, j

    theta_a, sol, j_final = _resolve(obj.best_vec)
    if not np.allclose(obj.best_vec, v0):
        try:
            theta_0, sol_0, j_0 = _resolve(v0)
            if j_0 < j_final:
                theta_a, sol, j_final = theta_0, sol_0, j_0
        except LqSharedError:
            pass
    a_cl = closed_loop_matrix(problem.sys, sol.k)
    return DesignResult(
        sys=problem.sys,
        theta_a=theta_a,
        k_a=sol.k[AUTOMATION],
        k_h_predicted=sol.k[HUMAN],
        j_g=float(j_final),
        human_cost=problem.human_cost,
        max_eig_real=float(stability_margins(a_cl)[0]),
        iterations=obj.evals,
        best_curve=tuple(obj.curve),
        budget_exhausted=(stopped or obj.evals >= problem.budget)
        and not (cancel is not None and cancel.is_set()),
        cancelled=cancel is not None and cancel.is_set(),
        riccati=sol,
    )


@dataclass(frozen=True)
class AdaptPolicy:
    """Gating thresholds for the 1 Hz adaptation loop."""

    deadband: float = 0.05              # relative change triggering redesign
    max_relative_residual: float = 1e-4
    min_null_space_gap: float = 10.0
    min_stability_margin: float = 0.0   # require max Re < -margin to publish
    budget: int = 150
    seed: int = 0


@dataclass(frozen=True)
class AdaptOutcome:
    result: DesignResult | None
    held: bool
    cause: str | None

    @property
    def published(self) -> bool:
        return self.result is not None and not self.held


def _relative_change(new: CostParams, old: CostParams) -> float:
    a = np.concatenate([new.q, new.r_self])
    b = np.concatenate([old.q, old.r_self])
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-3)))


def adapt_step(current: DesignResult, identified_human: CostParams,
               diagnostics: IdentificationDiagnostics | None,
               objective: GlobalObjective, policy: AdaptPolicy,
               cancel: threading.Event | None = None) -> AdaptOutcome:
    """Redesign the automation if the identified human changed enough.

    Holds (returns the previous result untouched) when identification
    confidence fails any gate, when the identified cost sits inside the
    deadband, or when the redesigned loop cannot be certified stable.
    """
    if diagnostics is not None:
        if diagnostics.low_confidence:
            return AdaptOutcome(None, True, "low_confidence")
        if diagnostics.relative_residual > policy.max_relative_residual:
            return AdaptOutcome(None, True, "residual")
        if diagnostics.null_space_gap < policy.min_null_space_gap:
            return AdaptOutcome(None, True, "null_space_gap")
    if _relative_change(identified_human, current.human_cost) <= policy.deadband:
        return AdaptOutcome(None, True, "deadband")

    problem = DesignProblem(
        sys=current.sys,
        human_cost=identified_human,
        objective=objective,
        theta_a_init=current.theta_a,
        budget=policy.budget,
        seed=policy.seed,
    )
    try:
        result = design_automation(problem, cancel=cancel)
    except LqSharedError as exc:
        return AdaptOutcome(None, True, f"design_failed:{type(exc).__name__}")
    if result.max_eig_real >= -policy.min_stability_margin:
        return AdaptOutcome(None, True, "uncertified_stability")
    return AdaptOutcome(result, False, None)
