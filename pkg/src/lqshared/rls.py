"""Recursive least-squares gain estimation with exponential forgetting.

Fits the feedback law u = -K x row by row from streamed (x, u) samples.
The regression target is -u so the estimate carries the same sign convention
as the control law; the regressor x is shared by all input rows, so a single
covariance matrix serves every row.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .games import FeedbackGain

# updates are skipped below this excitation to keep the covariance sane
_EXCITATION_FLOOR = 1e-8


@dataclass(frozen=True)
class RlsState:
    k_hat: np.ndarray        # (m, n) current gain estimate
    p_cov: np.ndarray        # (n, n) shared covariance, symmetric PD
    lambda_f: float          # forgetting factor in (0, 1]
    sample_count: int = 0
    skipped: int = 0         # non-finite or unexcited samples


def rls_init(n: int, m: int, lambda_f: float = 0.985,
             p0: float = 1000.0) -> RlsState:
    """Fresh estimator state: zero gain, p0-scaled identity covariance."""
    if not 0.0 < lambda_f <= 1.0:
        raise ValueError(f"lambda_f must be in (0, 1], got {lambda_f}")
    if p0 <= 0:
        raise ValueError(f"p0 must be positive, got {p0}")
    return RlsState(
        k_hat=np.zeros((m, n)),
        p_cov=p0 * np.eye(n),
        lambda_f=float(lambda_f),
    )


def rls_update(state: RlsState, x, u) -> RlsState:
    """One recursive update from a sample pair of the law u = -K x.

    Non-finite samples are skipped and counted (upstream fault signal), as
    are samples with negligible excitation where the gain is unobservable.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        return replace(state, skipped=state.skipped + 1)
    if np.linalg.norm(x) < _EXCITATION_FLOOR:
        return replace(state, skipped=state.skipped + 1)

    p = state.p_cov
    lam = state.lambda_f
    w = p @ x / (lam + x @ p @ x)
    # target is -u so k_hat estimates K directly
    k_hat = state.k_hat + np.outer(-u - state.k_hat @ x, w)
    p_new = (p - np.outer(w, x @ p)) / lam
    p_new = 0.5 * (p_new + p_new.T)
    return RlsState(
        k_hat=k_hat,
        p_cov=p_new,
        lambda_f=lam,
        sample_count=state.sample_count + 1,
        skipped=state.skipped,
    )


def current_gain(state: RlsState) -> FeedbackGain:
    """Assemble the row estimates into a feedback gain."""
    return FeedbackGain(state.k_hat)
