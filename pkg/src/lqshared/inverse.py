"""Inverse LQ game: recover a player's cost weights from observed gains.

The Nash stationarity conditions of one player, with every other player's
gain fixed at its estimate, are linear in that player's unknowns once the
value matrix P is carried explicitly:

    (E1)  A_cl^T P + P A_cl + Q + K_i^T R_ii K_i + sum_j K_j^T R_ij K_j = 0
    (E2)  B_i^T P - R_ii K_i = 0

with A_cl = A - sum_j B_j K_j.  Stacking vech(P), diag(Q), diag(R_ii) (and
optionally diag(R_ij)) into a vector theta gives M theta = 0; the cost is
identifiable up to positive scale, resolved by pinning one entry to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .errors import DimensionError
from .games import CostParams, GameSystem, gain_matrix

# second-smallest singular value below this marks a non-unique solution set
_RANK_GAP_FLOOR = 1e-10


@dataclass(frozen=True)
class ResidualSystem:
    """Linear Nash-residual system M theta = 0 for one player.

    Column layout: vech(P) | diag(Q) | diag(R_self) | [diag(R_cross)].
    M depends only on the system matrices and the supplied gains.
    """

    m: np.ndarray
    n: int
    m_self: int
    m_cross: int          # 0 when cross weights are excluded
    player: int
    svals_smallest: tuple[float, float]   # two smallest singular values of M

    @property
    def n_p(self) -> int:
        return self.n * (self.n + 1) // 2

    @property
    def dim_theta(self) -> int:
        return self.n_p + self.n + self.m_self + self.m_cross

    def split(self, theta: np.ndarray):
        """theta -> (p_entries, q_diag, r_self_diag, r_cross_diag|None)."""
        np_, n, ms = self.n_p, self.n, self.m_self
        p = theta[:np_]
        q = theta[np_:np_ + n]
        rs = theta[np_ + n:np_ + n + ms]
        rc = theta[np_ + n + ms:] if self.m_cross else None
        return p, q, rs, rc


@dataclass(frozen=True)
class ThetaVector:
    """Identified cost parameters, normalized by the pinned entry."""

    p_entries: np.ndarray
    q_diag: np.ndarray
    r_self_diag: np.ndarray
    r_cross_diag: np.ndarray | None
    pin: tuple[str, int]
    residual: float            # ||M theta||_2 at the solution
    kkt_residual: float
    low_confidence: bool = False

    def stacked(self) -> np.ndarray:
        parts = [self.p_entries, self.q_diag, self.r_self_diag]
        if self.r_cross_diag is not None:
            parts.append(self.r_cross_diag)
        return np.concatenate(parts)

    def to_cost_params(self) -> CostParams:
        rc = self.r_cross_diag
        cross = rc if rc is not None and np.any(rc) else None
        return CostParams(self.q_diag, self.r_self_diag, cross)


def _sym_basis(n: int):
    """Upper-triangle index pairs and their symmetric basis matrices."""
    idx = [(i, j) for i in range(n) for j in range(i, n)]
    mats = []
    for i, j in idx:
        e = np.zeros((n, n))
        e[i, j] = 1.0
        e[j, i] = 1.0
        mats.append(e)
    return idx, mats


def _vech(m: np.ndarray, idx) -> np.ndarray:
    return np.array([m[i, j] for i, j in idx])


def build_residual_system(sys: GameSystem, gains, player: int,
                          include_cross: bool = False) -> ResidualSystem:
    """Assemble M for the given player from estimated gains of all players.

    Cross-input weights are excluded (fixed to zero) unless include_cross is
    set; the reproduced scenario's human cost carries none.
    """
    if len(gains) != sys.n_players:
        raise DimensionError("gains for all players are required")
    ks = [gain_matrix(g) for g in gains]
    for j, kj in enumerate(ks):
        if kj.shape != (sys.m[j], sys.n):
            raise DimensionError(
                f"gain[{j}] has shape {kj.shape}, expected {(sys.m[j], sys.n)}")
    n = sys.n
    i = player
    others = [j for j in range(sys.n_players) if j != i]
    m_cross = sum(sys.m[j] for j in others) if include_cross else 0

    a_cl = sys.a - sum(sys.b[j] @ ks[j] for j in range(sys.n_players))
    idx, sym = _sym_basis(n)
    n_p = len(idx)
    ki = ks[i]
    mi = sys.m[i]
    rows_e1, rows_e2 = n_p, mi * n
    m = np.zeros((rows_e1 + rows_e2, n_p + n + mi + m_cross))

    col = 0
    for e in sym:  # vech(P) columns
        d1 = a_cl.T @ e + e @ a_cl
        m[:rows_e1, col] = _vech(d1, idx)
        m[rows_e1:, col] = (sys.b[i].T @ e).ravel()
        col += 1
    for kq in range(n):  # diag(Q) columns
        e = np.zeros((n, n))
        e[kq, kq] = 1.0
        m[:rows_e1, col] = _vech(e, idx)
        col += 1
    for d in range(mi):  # diag(R_self) columns
        m[:rows_e1, col] = _vech(np.outer(ki[d], ki[d]), idx)
        e2 = np.zeros((mi, n))
        e2[d] = -ki[d]
        m[rows_e1:, col] = e2.ravel()
        col += 1
    if include_cross:
        for j in others:
            for d in range(sys.m[j]):  # diag(R_cross) columns
                m[:rows_e1, col] = _vech(np.outer(ks[j][d], ks[j][d]), idx)
                col += 1

    # singular values of the quadratic form M^T M: the rectangular SVD omits
    # the structural null direction (scale ambiguity), the Gram spectrum not
    ev = np.linalg.eigvalsh(m.T @ m)
    sv = np.sqrt(np.clip(ev, 0.0, None))
    return ResidualSystem(
        m=m, n=n, m_self=mi, m_cross=m_cross, player=i,
        svals_smallest=(float(sv[0]), float(sv[1])),
    )


def _pin_column(rs: ResidualSystem, pin: tuple[str, int]) -> int:
    kind, k = pin
    if kind == "r_self":
        if not 0 <= k < rs.m_self:
            raise ValueError("pin index out of range")
        return rs.n_p + rs.n + k
    if kind == "q":
        if not 0 <= k < rs.n:
            raise ValueError("pin index out of range")
        return rs.n_p + k
    raise ValueError(f"unknown pin kind {kind!r}")


def identify_cost(rs: ResidualSystem, epsilon: float = 1e-6,
                  pin: tuple[str, int] = ("r_self", 0)) -> ThetaVector:
    """Minimize ||M theta||^2 with theta_pin = 1, q >= 0, r_self >= epsilon.

    The pin replaces the strict positivity device that rules out the trivial
    zero solution; the problem is a tiny convex bounded least-squares solved
    to KKT residual ~1e-9.  A second-smallest singular value of M below
    1e-10 flags the result as low-confidence (non-unique solution set).
    """
    pin_col = _pin_column(rs, pin)
    m = rs.m
    n_cols = rs.dim_theta
    free = [c for c in range(n_cols) if c != pin_col]
    a = m[:, free]
    rhs = -m[:, pin_col]

    lo = np.full(len(free), -np.inf)
    hi = np.full(len(free), np.inf)
    for pos, c in enumerate(free):
        if rs.n_p <= c < rs.n_p + rs.n:
            lo[pos] = 0.0                       # q >= 0
        elif rs.n_p + rs.n <= c < rs.n_p + rs.n + rs.m_self:
            lo[pos] = epsilon                   # r_self >= eps
        elif c >= rs.n_p + rs.n + rs.m_self:
            lo[pos] = 0.0                       # r_cross >= 0

    sol, _ = np.linalg.lstsq(a, rhs, rcond=None)[:2]
    if np.any(sol < lo - 1e-12):
        res = lsq_linear(a, rhs, bounds=(lo, hi), tol=1e-14, max_iter=400)
        sol = res.x
        # polish: re-solve the equality-constrained problem on the free set
        for _ in range(n_cols):
            active = sol <= lo + 1e-12
            if not np.any(active):
                break
            inact = ~active
            sol = sol.copy()
            sol[active] = lo[active]
            rhs_eff = rhs - a[:, active] @ sol[active]
            sub, *_ = np.linalg.lstsq(a[:, inact], rhs_eff, rcond=None)
            sol[inact] = sub
            if not np.any(sol < lo - 1e-12):
                break
        sol = np.maximum(sol, lo)

    theta = np.empty(n_cols)
    theta[free] = sol
    theta[pin_col] = 1.0

    # KKT: zero gradient on free coordinates, nonnegative on active bounds
    grad = 2.0 * m.T @ (m @ theta)
    kkt = 0.0
    for pos, c in enumerate(free):
        at_bound = np.isfinite(lo[pos]) and theta[c] <= lo[pos] + 1e-12
        kkt = max(kkt, max(0.0, -grad[c]) if at_bound else abs(grad[c]))

    p, q, rsf, rc = rs.split(theta)
    return ThetaVector(
        p_entries=p, q_diag=q, r_self_diag=rsf, r_cross_diag=rc,
        pin=pin,
        residual=float(np.linalg.norm(m @ theta)),
        kkt_residual=float(kkt),
        low_confidence=rs.svals_smallest[1] < _RANK_GAP_FLOOR,
    )


@dataclass(frozen=True)
class IdentificationDiagnostics:
    residual: float
    relative_residual: float      # ||M theta|| / (sigma_max ||theta||)
    null_space_gap: float         # second-smallest / smallest singular value
    active_bounds: tuple[str, ...]
    low_confidence: bool


def identification_confidence(rs: ResidualSystem,
                              theta: ThetaVector) -> IdentificationDiagnostics:
    """Quality report consumed by the adaptation gate."""
    if rs is None or theta is None:
        raise ValueError("residual system and theta are required")
    vec = theta.stacked()
    if vec.shape[0] != rs.dim_theta:
        raise DimensionError("theta does not match the residual system layout")
    sv_max = float(np.linalg.norm(rs.m, 2))
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("theta is identically zero")
    resid = float(np.linalg.norm(rs.m @ vec))
    s1, s2 = rs.svals_smallest
    gap = s2 / max(s1, 1e-300)
    active = []
    active += [f"q[{i}]" for i in range(rs.n) if theta.q_diag[i] <= 1e-12]
    active += [f"r_self[{i}]" for i in range(rs.m_self)
               if theta.r_self_diag[i] <= 1e-6 + 1e-12]
    low = theta.low_confidence or s2 < _RANK_GAP_FLOOR
    return IdentificationDiagnostics(
        residual=resid,
        relative_residual=resid / (sv_max * norm) if sv_max > 0 else np.inf,
        null_space_gap=float(gap),
        active_bounds=tuple(active),
        low_confidence=low,
    )
