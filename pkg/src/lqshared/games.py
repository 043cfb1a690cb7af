"""Two-player LQ differential games: Nash gains, stability, closed-loop cost.

The game is continuous-time and stationary: dynamics ``xdot = A x + sum_i B_i u_i``
with one input channel per player and quadratic infinite-horizon costs.  Player
order is fixed throughout the package: automation first, human second.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_continuous_are, solve_continuous_lyapunov

from .errors import (
    DimensionError,
    NoConvergenceError,
    NonFiniteError,
    NotStabilizableError,
    UnstableError,
)

AUTOMATION = 0
HUMAN = 1

# state magnitude beyond which integration is considered diverged
_OVERFLOW_GUARD = 1e12


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GameSystem:
    """Linear dynamics with one input matrix per player.

    a: n x n state matrix (1/s); b: per-player n x m_i input matrices,
    automation first, human second.
    """

    a: np.ndarray
    b: tuple[np.ndarray, ...]

    def __init__(self, a, b: Sequence) -> None:
        a = _freeze(_as_matrix(a, "A"))
        bs = tuple(_freeze(_as_matrix(bi, f"B[{i}]")) for i, bi in enumerate(b))
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"A must be square, got {a.shape}")
        for i, bi in enumerate(bs):
            if bi.shape[0] != a.shape[0]:
                raise DimensionError(
                    f"B[{i}] has {bi.shape[0]} rows, expected {a.shape[0]}"
                )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", bs)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_players(self) -> int:
        return len(self.b)

    @property
    def m(self) -> tuple[int, ...]:
        return tuple(bi.shape[1] for bi in self.b)


@dataclass(frozen=True)
class CostParams:
    """One player's quadratic weights, diagonal by construction.

    q: state weight diagonal (entries >= 0); r_self: own-input weight diagonal
    (entries > 0); r_cross: optional other-player input weight diagonal
    (entries >= 0, zero when omitted).
    """

    q: np.ndarray
    r_self: np.ndarray
    r_cross: np.ndarray | None = None

    def __init__(self, q, r_self, r_cross=None) -> None:
        q = _freeze(np.atleast_1d(np.asarray(q, dtype=float)))
        r_self = _freeze(np.atleast_1d(np.asarray(r_self, dtype=float)))
        if q.ndim != 1 or r_self.ndim != 1:
            raise ValueError("q and r_self must be diagonal vectors")
        if np.any(q < 0):
            raise ValueError("q entries must be >= 0")
        if np.any(r_self <= 0):
            raise ValueError("r_self entries must be > 0")
        if r_cross is not None:
            r_cross = _freeze(np.atleast_1d(np.asarray(r_cross, dtype=float)))
            if np.any(r_cross < 0):
                raise ValueError("r_cross entries must be >= 0")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r_self", r_self)
        object.__setattr__(self, "r_cross", r_cross)

    @property
    def q_matrix(self) -> np.ndarray:
        return np.diag(self.q)

    @property
    def r_self_matrix(self) -> np.ndarray:
        return np.diag(self.r_self)

    def r_cross_matrix(self, m_other: int) -> np.ndarray:
        if self.r_cross is None:
            return np.zeros((m_other, m_other))
        return np.diag(self.r_cross)

    def scaled(self, c: float) -> "CostParams":
        rc = None if self.r_cross is None else c * self.r_cross
        return CostParams(c * self.q, c * self.r_self, rc)


@dataclass(frozen=True)
class FeedbackGain:
    """A player's state-feedback matrix in u = -K x."""

    k: np.ndarray

    def __init__(self, k) -> None:
        k = _freeze(_as_matrix(k, "K"))
        object.__setattr__(self, "k", k)


@dataclass(frozen=True)
class GlobalObjective:
    """Designer-level weights ranking closed-loop behavior.

    qg: state weight diagonal; rg: per-player input weight diagonals.
    """

    qg: np.ndarray
    rg: tuple[np.ndarray, ...]

    def __init__(self, qg, rg: Sequence) -> None:
        qg = _freeze(np.atleast_1d(np.asarray(qg, dtype=float)))
        rgs = tuple(_freeze(np.atleast_1d(np.asarray(r, dtype=float))) for r in rg)
        if np.any(qg < 0):
            raise ValueError("qg entries must be >= 0")
        for r in rgs:
            if np.any(r <= 0):
                raise ValueError("rg entries must be > 0")
        object.__setattr__(self, "qg", qg)
        object.__setattr__(self, "rg", rgs)

    @property
    def qg_matrix(self) -> np.ndarray:
        return np.diag(self.qg)

    def rg_matrix(self, j: int) -> np.ndarray:
        return np.diag(self.rg[j])


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing solution of the coupled Riccati system.

    p: one symmetric n x n value matrix per player; k: the Nash feedback
    gains, k_i = r_self_i^-1 B_i^T p_i by construction; residual_norm: largest
    per-player Frobenius residual of the coupled equations.
    """

    p: tuple[np.ndarray, ...]
    k: tuple[FeedbackGain, ...]
    residual_norm: float
    iterations: int


@dataclass(frozen=True)
class SolverOptions:
    gain_tol: float = 1e-10
    residual_tol: float = 1e-9
    max_iterations: int = 500
    warm_start: tuple[np.ndarray, ...] | None = None


def gain_matrix(g) -> np.ndarray:
    """Coerce a FeedbackGain or array-like to an m x n matrix."""
    if isinstance(g, FeedbackGain):
        return g.k
    return np.atleast_2d(np.asarray(g, dtype=float))


def _check_costs(sys: GameSystem, costs: Sequence[CostParams]) -> None:
    if len(costs) != sys.n_players:
        raise DimensionError("one CostParams per player required")
    for i, c in enumerate(costs):
        if c.q.shape[0] != sys.n:
            raise DimensionError(f"cost[{i}].q has wrong dimension")
        if c.r_self.shape[0] != sys.m[i]:
            raise DimensionError(f"cost[{i}].r_self has wrong dimension")


def _best_response(a_eff: np.ndarray, b: np.ndarray, q_eff: np.ndarray,
                   r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-player LQR solve: returns (P, K) for the effective plant."""
    n = a_eff.shape[0]
    if not np.any(b):
        # no control authority: value matrix from the Lyapunov equation
        if np.max(np.linalg.eigvals(a_eff).real) >= 0:
            raise NotStabilizableError("zero-input player faces an unstable plant")
        p = solve_continuous_lyapunov(a_eff.T, -q_eff)
        return 0.5 * (p + p.T), np.zeros((b.shape[1], n))
    try:
        p = solve_continuous_are(a_eff, b, q_eff, r)
    except Exception as exc:  # scipy raises LinAlgError or ValueError
        raise NotStabilizableError(f"Riccati solve failed: {exc}") from exc
    p = 0.5 * (p + p.T)
    k = np.linalg.solve(r, b.T @ p)
    return p, k


def _best_response_fast(a_eff: np.ndarray, b: np.ndarray, q_eff: np.ndarray,
                        r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Search-grade LQR solve via the Hamiltonian eigendecomposition.

    An order of magnitude faster than the refined solver on small systems at
    ~1e-9 accuracy; candidate rankings only, never published results.
    """
    n = a_eff.shape[0]
    if not np.any(b):
        return _best_response(a_eff, b, q_eff, r)
    s = b @ np.linalg.solve(r, b.T)
    h = np.block([[a_eff, -s], [-q_eff, -a_eff.T]])
    w, v = np.linalg.eig(h)
    sel = w.real < 0
    if int(np.count_nonzero(sel)) != n:
        raise NotStabilizableError("Hamiltonian has no stable n-dim subspace")
    vs = v[:, sel]
    try:
        p = np.real(vs[n:] @ np.linalg.inv(vs[:n]))
    except np.linalg.LinAlgError as exc:
        raise NotStabilizableError("singular subspace basis") from exc
    if not np.all(np.isfinite(p)):
        raise NotStabilizableError("non-finite Riccati solution")
    p = 0.5 * (p + p.T)
    k = np.linalg.solve(r, b.T @ p)
    return p, k


def coupled_riccati_residual(sys: GameSystem, costs: Sequence[CostParams],
                             p: Sequence[np.ndarray]) -> list[float]:
    """Frobenius norm of each player's coupled-Riccati residual at P.

    Gains are reconstructed from P, so this is an independent check of any
    candidate solution, not of the iteration that produced it.
    """
    ks = [np.linalg.solve(costs[i].r_self_matrix, sys.b[i].T @ p[i])
          for i in range(sys.n_players)]
    a_cl = sys.a - sum(sys.b[j] @ ks[j] for j in range(sys.n_players))
    out = []
    for i in range(sys.n_players):
        res = a_cl.T @ p[i] + p[i] @ a_cl + costs[i].q_matrix
        res = res + ks[i].T @ costs[i].r_self_matrix @ ks[i]
        for j in range(sys.n_players):
            if j != i:
                rc = costs[i].r_cross_matrix(sys.m[j])
                res = res + ks[j].T @ rc @ ks[j]
        out.append(float(np.linalg.norm(res, "fro")))
    return out


def _nash_iteration(a: np.ndarray, b: list[np.ndarray], q: list[np.ndarray],
                    r: list[np.ndarray], r_cross: dict[tuple[int, int], np.ndarray],
                    p: list[np.ndarray], k: list[np.ndarray],
                    gain_tol: float, max_iterations: int,
                    response=_best_response) -> int:
    """Best-response sweeps on raw matrices, updating p and k in place.

    r_cross maps (i, j) to the weight player i puts on player j's input.
    Returns the sweep count; raises on cap or an unsolvable best response.
    """
    np_ = len(b)
    for iterations in range(1, max_iterations + 1):
        delta = 0.0
        for i in range(np_):
            a_eff = a
            q_eff = q[i]
            for j in range(np_):
                if j == i:
                    continue
                a_eff = a_eff - b[j] @ k[j]
                rc = r_cross.get((i, j))
                if rc is not None:
                    q_eff = q_eff + k[j].T @ rc @ k[j]
            p[i], k_new = response(a_eff, b[i], q_eff, r[i])
            delta = max(delta, float(np.max(np.abs(k_new - k[i]))) if k[i].size else 0.0)
            k[i] = k_new
        if delta < gain_tol:
            return iterations
    raise NoConvergenceError(
        f"gain iteration did not settle in {max_iterations} sweeps")


def _cost_matrices(sys: GameSystem, costs: Sequence[CostParams]):
    q = [c.q_matrix for c in costs]
    r = [c.r_self_matrix for c in costs]
    r_cross = {}
    for i, c in enumerate(costs):
        if c.r_cross is None:
            continue
        for j in range(sys.n_players):
            if j != i:
                r_cross[(i, j)] = c.r_cross_matrix(sys.m[j])
    return q, r, r_cross


def solve_coupled_riccati(sys: GameSystem, costs: Sequence[CostParams],
                          options: SolverOptions | None = None) -> RiccatiSolution:
    """Compute the stabilizing feedback Nash equilibrium of the game.

    Lyapunov iteration: each player's best-response LQR is re-solved against
    the other players' current gains until gains settle below gain_tol.
    Warm starting from a previous solution (options.warm_start, value
    matrices) speeds up repeated solves of nearby games.

    Raises NoConvergenceError if the iteration cap is hit and
    NotStabilizableError if the converged loop is not Hurwitz.
    """
    opt = options or SolverOptions()
    _check_costs(sys, costs)
    n, np_ = sys.n, sys.n_players

    # per-player scale normalization: the equations are homogeneous in each
    # player's (cost, P) pair, so solving at unit scale keeps the residual
    # meaningful for arbitrarily scaled costs; gains are scale-free
    scales = [max(float(np.max(c.q, initial=0.0)), float(np.max(c.r_self)),
                  float(np.max(c.r_cross, initial=0.0))
                  if c.r_cross is not None else 0.0, 1e-300)
              for c in costs]
    scales = [max(s, 1e-300) for s in scales]
    norm_costs = [c.scaled(1.0 / s) for c, s in zip(costs, scales)]

    if opt.warm_start is not None:
        p = [np.asarray(w, dtype=float) / s
             for w, s in zip(opt.warm_start, scales)]
        k = [np.linalg.solve(norm_costs[i].r_self_matrix, sys.b[i].T @ p[i])
             for i in range(np_)]
    else:
        p = [np.zeros((n, n)) for _ in range(np_)]
        k = [np.zeros((sys.m[i], n)) for i in range(np_)]

    q_m, r_m, rc_m = _cost_matrices(sys, norm_costs)
    iterations = _nash_iteration(sys.a, list(sys.b), q_m, r_m, rc_m, p, k,
                                 opt.gain_tol, opt.max_iterations)

    a_cl = sys.a - sum(sys.b[j] @ k[j] for j in range(np_))
    if np.max(np.linalg.eigvals(a_cl).real) >= 0:
        raise NotStabilizableError("converged solution is not stabilizing")

    residuals = coupled_riccati_residual(sys, norm_costs, p)
    res = max(residuals)
    if res > opt.residual_tol:
        raise NoConvergenceError(
            f"coupled residual {res:.3e} above tolerance {opt.residual_tol:.1e}")

    return RiccatiSolution(
        p=tuple(_freeze(s * pi) for s, pi in zip(scales, p)),
        k=tuple(FeedbackGain(ki) for ki in k),
        residual_norm=res,
        iterations=iterations,
    )


def closed_loop_matrix(sys: GameSystem, gains: Sequence) -> np.ndarray:
    """A - sum_j B_j K_j for the given per-player gains."""
    if len(gains) != sys.n_players:
        raise DimensionError("one gain per player required")
    a_cl = sys.a.copy()
    for j, g in enumerate(gains):
        kj = gain_matrix(g)
        if kj.shape != (sys.m[j], sys.n):
            raise DimensionError(
                f"gain[{j}] has shape {kj.shape}, expected {(sys.m[j], sys.n)}")
        a_cl = a_cl - sys.b[j] @ kj
    return a_cl


def stability_margins(a_cl: np.ndarray) -> np.ndarray:
    """Real parts of the eigenvalues of a_cl, sorted descending.

    The loop is asymptotically stable iff the first entry is negative.
    """
    a_cl = np.atleast_2d(np.asarray(a_cl, dtype=float))
    if a_cl.shape[0] != a_cl.shape[1]:
        raise DimensionError("closed-loop matrix must be square")
    return np.sort(np.linalg.eigvals(a_cl).real)[::-1]


def evaluate_global_cost(sys: GameSystem, gains: Sequence, g: GlobalObjective,
                         x0_weight: np.ndarray | None = None) -> float:
    """Stationary closed-loop value of the global objective.

    Solves A_cl^T P + P A_cl + Qg + sum_j K_j^T Rg_j K_j = 0 and returns
    0.5 * trace(P @ X0).  X0 weights the initial-state directions; identity
    by default, pass an outer product x0 x0^T for a single initial state.
    """
    a_cl = closed_loop_matrix(sys, gains)
    if np.max(np.linalg.eigvals(a_cl).real) >= 0:
        raise UnstableError("closed loop is not Hurwitz")
    x0w = np.eye(sys.n) if x0_weight is None else np.atleast_2d(
        np.asarray(x0_weight, dtype=float))
    m = g.qg_matrix.copy()
    for j, gj in enumerate(gains):
        kj = gain_matrix(gj)
        m = m + kj.T @ g.rg_matrix(j) @ kj
    pg = solve_continuous_lyapunov(a_cl.T, -m)
    return float(0.5 * np.trace(pg @ x0w))


@dataclass
class SimTrace:
    """Fixed-step trajectory record from simulate()."""

    t: np.ndarray             # (N+1,)
    x: np.ndarray             # (N+1, n)
    u: list[np.ndarray]       # per player, (N+1, m_j)

    def __len__(self) -> int:
        return self.t.shape[0]


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float,
             x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(sys: GameSystem, gains, x0, dt: float, duration: float,
             disturbance: Callable[[float], np.ndarray] | None = None) -> SimTrace:
    """Integrate the closed loop xdot = A x - sum B_j K_j x + w(t) with RK4.

    gains is either a list of per-player gains (constant) or a callable
    t -> list of gains (piecewise schedules are evaluated at the step start
    and held through the substeps).  Raises NonFiniteError if the state
    leaves the overflow guard.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if duration < dt:
        raise ValueError("duration must cover at least one step")
    n_steps = int(round(duration / dt))
    x = np.asarray(x0, dtype=float).reshape(sys.n)
    schedule = gains if callable(gains) else (lambda _t: gains)

    ts = np.empty(n_steps + 1)
    xs = np.empty((n_steps + 1, sys.n))
    us = [np.empty((n_steps + 1, mj)) for mj in sys.m]

    for step in range(n_steps + 1):
        t = step * dt
        ks = [gain_matrix(g) for g in schedule(t)]
        ts[step] = t
        xs[step] = x
        for j, kj in enumerate(ks):
            us[j][step] = -kj @ x
        if step == n_steps:
            break
        a_cl = sys.a - sum(sys.b[j] @ ks[j] for j in range(sys.n_players))
        if disturbance is None:
            f = lambda tt, xx: a_cl @ xx
        else:
            f = lambda tt, xx: a_cl @ xx + disturbance(tt)
        x = rk4_step(f, t, x, dt)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > _OVERFLOW_GUARD:
            raise NonFiniteError(f"state diverged at t={t + dt:.3f}s")

    return SimTrace(t=ts, x=xs, u=us)
