"""Vehicle-manipulator shared-control scenario with a mid-run human switch.

A synthetic human plays the best-response LQR gain against the currently
published automation gain; its cost switches partway through the run.  The
dual-rate pipeline updates the gain estimator every control tick and gets one
adaptation opportunity per adaptation period: identify the human cost from
the estimated gain, then redesign the automation if the gates pass.

The engine is driven either by the offline runner below (simulated clock) or
by the real-time service, which substitutes live human input for the
synthetic law.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import solve_continuous_are

from . import rls
from .design import (
    AdaptOutcome,
    AdaptPolicy,
    DesignProblem,
    DesignResult,
    adapt_step,
    design_automation,
)
from .errors import DimensionError, NotStabilizableError
from .games import (
    AUTOMATION,
    HUMAN,
    CostParams,
    FeedbackGain,
    GameSystem,
    GlobalObjective,
    gain_matrix,
    rk4_step,
    stability_margins,
)
from .inverse import build_residual_system, identification_confidence, identify_cost

CSV_HEADER = ("t,x1,x2,x3,p_m,ref_m,p_v,ref_v,u_a,u_h,"
              "ka1,ka2,ka3,kh1,kh2,kh3,khhat1,khhat2,khhat3,"
              "eig1,eig2,eig3,eK")


def paper_system() -> GameSystem:
    """Default three-state vehicle-manipulator error dynamics."""
    a = [[-0.1, 0.0, 0.0], [0.0, 0.0, 0.9], [0.0, 0.0, 0.0]]
    b_auto = [[1.95], [0.0], [1.25]]
    b_human = [[0.85], [0.0], [0.0]]
    return GameSystem(a, [b_auto, b_human])


@dataclass(frozen=True)
class HumanPhase:
    start: float
    cost: CostParams


@dataclass(frozen=True)
class Excitation:
    """Seeded sum of sinusoids injected on the error dynamics.

    Each sinusoid drives one state axis (random phase).  The default pattern
    plays the role of track curvature: it enters through the vehicle-side
    error axes and reaches the manipulator error only through the coupled
    loop, which keeps the closed-loop state persistently exciting for the
    gain estimator.
    """

    amplitudes: tuple[float, ...] = (0.5, 0.3, 0.2)
    frequencies_hz: tuple[float, ...] = (0.1, 0.23, 0.41)
    axes: tuple[int, ...] = (1, 2, 0)

    def sampler(self, n: int, rng: np.random.Generator):
        amps = np.asarray(self.amplitudes, float)
        omega = 2.0 * np.pi * np.asarray(self.frequencies_hz, float)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=amps.shape[0])
        gains = np.zeros((n, amps.shape[0]))
        for k, ax in enumerate(self.axes[:amps.shape[0]]):
            gains[ax % n, k] = amps[k]

        def w(t: float) -> np.ndarray:
            return gains @ np.sin(omega * t + phases)

        return w


@dataclass(frozen=True)
class ReferenceProfile:
    """Plotting reference; positions are reconstructed as ref + error."""

    kind: str = "sines"          # "sines" | "steps" | "zero"
    amplitude: float = 2.0
    period_s: float = 20.0

    def sample(self, t: float) -> tuple[float, float]:
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "steps":
            k = int(t // self.period_s)
            level = self.amplitude * (1.0 if k % 2 == 0 else -1.0)
            return level, 0.5 * level
        w = 2.0 * np.pi / self.period_s
        return (self.amplitude * np.sin(w * t),
                0.5 * self.amplitude * np.sin(0.7 * w * t))


def _default_phases() -> tuple[HumanPhase, ...]:
    return (
        HumanPhase(0.0, CostParams([50.0, 0.2, 0.2], [1.0])),
        HumanPhase(60.0, CostParams([0.5, 0.2, 0.2], [1.0])),
    )


def _default_objective() -> GlobalObjective:
    return GlobalObjective([35.0, 1.0, 3.0], [[1.0], [1.0]])


@dataclass(frozen=True)
class ScenarioConfig:
    sys: GameSystem = field(default_factory=paper_system)
    phases: tuple[HumanPhase, ...] = field(default_factory=_default_phases)
    objective: GlobalObjective = field(default_factory=_default_objective)
    duration: float = 120.0
    control_rate_hz: float = 25.0
    adapt_period: float = 1.0
    lambda_f: float = 0.985
    p0: float = 1000.0
    adaptive: bool = True
    seed: int = 42
    excitation: Excitation = field(default_factory=Excitation)
    reference: ReferenceProfile = field(default_factory=ReferenceProfile)
    x0: tuple[float, ...] | None = None
    warmup: float = 5.0              # identification stays gated off this long
    cov_trace_gate: float = 500.0    # estimator covariance must settle below
    innovation_gate: float = 2e-3    # smoothed |u + k_hat x| / |x| must settle below
    reset_threshold: float = 0.05    # innovation level that re-opens the covariance
    policy: AdaptPolicy = field(default_factory=AdaptPolicy)
    theta_a_init: CostParams | None = None   # default: global weights
    offline_budget: int = 3000
    human_hold: bool = False  # hold u_h over each step (live-input semantics)

    def __post_init__(self):
        if self.control_rate_hz <= 0 or self.adapt_period <= 0:
            raise ValueError("rates must be positive")
        starts = [p.start for p in self.phases]
        if starts != sorted(starts) or starts[0] != 0.0:
            raise ValueError("phases must be time-ordered and start at t=0")
        if self.duration <= max(starts):
            raise ValueError("duration must cover all phases")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz

    def phase_at(self, t: float) -> HumanPhase:
        current = self.phases[0]
        for p in self.phases:
            if t >= p.start:
                current = p
        return current


@dataclass
class TimeSeries:
    """Uniformly sampled pipeline record, one row per control tick."""

    t: np.ndarray
    x: np.ndarray            # (N, 3)
    p_m: np.ndarray
    ref_m: np.ndarray
    p_v: np.ndarray
    ref_v: np.ndarray
    u_a: np.ndarray
    u_h: np.ndarray
    k_a: np.ndarray          # (N, 3) published automation gain
    k_h: np.ndarray          # (N, 3) reference human gain (ground truth)
    k_h_hat: np.ndarray      # (N, 3) estimated human gain
    eig: np.ndarray          # (N, 3) closed-loop eigenvalue real parts, descending
    e_k: np.ndarray
    jg_integrand: np.ndarray

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def window(self, t_start: float = -np.inf, t_end: float = np.inf) -> np.ndarray:
        return (self.t >= t_start) & (self.t < t_end)

    def to_csv(self, path) -> None:
        fmt = lambda v: f"{v + 0.0:.9g}"   # + 0.0 folds negative zero
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for i in range(len(self)):
                row = [self.t[i], *self.x[i], self.p_m[i], self.ref_m[i],
                       self.p_v[i], self.ref_v[i], self.u_a[i], self.u_h[i],
                       *self.k_a[i], *self.k_h[i], *self.k_h_hat[i],
                       *self.eig[i], self.e_k[i]]
                fh.write(",".join(fmt(v) for v in row) + "\n")

    @staticmethod
    def read_csv(path) -> dict[str, np.ndarray]:
        """Read a trace back as a column dict (header names as keys)."""
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.size == 0:
            data = np.empty((0, len(header)))
        if data.shape[1] != len(header):
            raise DimensionError("trace has wrong column count")
        return {name: data[:, j] for j, name in enumerate(header)}


@dataclass
class ScenarioSummary:
    rmse_full: float
    rmse_adaptive_window: float
    final_eigs: list[float]
    holds: int
    adaptations: int
    seed: int
    mean_ek_per_phase: list[float]
    hold_causes: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "rmse_adaptive_window": self.rmse_adaptive_window,
            "rmse_full": self.rmse_full,
            "final_eigs": list(self.final_eigs),
            "holds": self.holds,
            "adaptations": self.adaptations,
            "seed": self.seed,
        }


def synthetic_human(phase_cost: CostParams, automation_gain,
                    sys: GameSystem) -> FeedbackGain:
    """Best-response LQR gain of the human against the automation's gain.

    Cross weights on the automation input, when present, fold into the
    effective state weight.
    """
    k_a = gain_matrix(automation_gain)
    a_eff = sys.a - sys.b[AUTOMATION] @ k_a
    q_eff = phase_cost.q_matrix
    rc = phase_cost.r_cross_matrix(sys.m[AUTOMATION])
    if np.any(rc):
        q_eff = q_eff + k_a.T @ rc @ k_a
    try:
        p = solve_continuous_are(a_eff, sys.b[HUMAN], q_eff,
                                 phase_cost.r_self_matrix)
    except Exception as exc:
        raise NotStabilizableError(f"human best response failed: {exc}") from exc
    return FeedbackGain(np.linalg.solve(phase_cost.r_self_matrix,
                                        sys.b[HUMAN].T @ p))


def design_offline(cfg: ScenarioConfig) -> DesignResult:
    """Initial automation design against the first-phase human cost."""
    init = cfg.theta_a_init or CostParams(cfg.objective.qg,
                                          np.ones(cfg.sys.m[AUTOMATION]))
    problem = DesignProblem(
        sys=cfg.sys, human_cost=cfg.phases[0].cost, objective=cfg.objective,
        theta_a_init=init, budget=cfg.offline_budget, seed=cfg.seed)
    return design_automation(problem)


class ScenarioEngine:
    """Dual-rate adaptive pipeline: one instance per run or live session.

    tick() advances one control step; pass u_h to substitute live human input
    for the synthetic law (the input is then held over the step).  Adaptation
    opportunities fire automatically on their tick boundary.
    """

    def __init__(self, cfg: ScenarioConfig, initial_design: DesignResult | None = None,
                 auto_adapt: bool = True):
        self.cfg = cfg
        self.auto_adapt = auto_adapt   # service drives the cadence itself
        self.rng = np.random.default_rng(cfg.seed)
        self.disturbance = cfg.excitation.sampler(cfg.sys.n, self.rng)
        self.design = initial_design or design_offline(cfg)
        self.rls_state = rls.rls_init(cfg.sys.n, cfg.sys.m[HUMAN],
                                      cfg.lambda_f, cfg.p0)
        self.x = np.zeros(cfg.sys.n) if cfg.x0 is None else np.asarray(cfg.x0, float)
        self.tick_index = 0
        self.ticks_per_adapt = int(round(cfg.adapt_period * cfg.control_rate_hz))
        self.phase = cfg.phases[0]
        self.k_h_syn = synthetic_human(self.phase.cost, self.design.k_a, cfg.sys)
        self.holds = 0
        self.adaptations = 0
        self.hold_causes: dict[str, int] = {}
        self.last_outcome: AdaptOutcome | None = None
        self.innovation_ema = np.inf     # settles once k_hat explains samples
        self.rows: list[dict] = []

    @property
    def t(self) -> float:
        return self.tick_index * self.cfg.dt

    @property
    def k_a(self) -> np.ndarray:
        return self.design.k_a.k

    def reset(self) -> None:
        self.x = np.zeros(self.cfg.sys.n)

    def _record(self, t, u_a, u_h, k_h_ref) -> dict:
        cfg = self.cfg
        ref_m, ref_v = cfg.reference.sample(t)
        k_a = self.k_a.ravel()
        k_h = k_h_ref.ravel()
        k_hat = self.rls_state.k_hat.ravel()
        a_cl = cfg.sys.a - cfg.sys.b[AUTOMATION] @ self.k_a \
            - cfg.sys.b[HUMAN] @ k_h_ref
        eig = stability_margins(a_cl)
        e_k = float(np.linalg.norm(k_h - k_hat))
        jg = 0.5 * float(self.x @ cfg.objective.qg_matrix @ self.x
                         + u_a * cfg.objective.rg[AUTOMATION][0] * u_a
                         + u_h * cfg.objective.rg[HUMAN][0] * u_h)
        row = dict(t=t, x=self.x.copy(), p_m=ref_m + self.x[0], ref_m=ref_m,
                   p_v=ref_v + self.x[1], ref_v=ref_v, u_a=u_a, u_h=u_h,
                   k_a=k_a.copy(), k_h=k_h.copy(), k_h_hat=k_hat.copy(),
                   eig=eig, e_k=e_k, jg=jg)
        self.rows.append(row)
        return row

    def tick(self, u_h: float | None = None) -> dict:
        cfg = self.cfg
        t = self.t
        new_phase = cfg.phase_at(t)
        if new_phase is not self.phase:
            self.phase = new_phase
            self.k_h_syn = synthetic_human(self.phase.cost, self.design.k_a, cfg.sys)

        live = u_h is not None
        if live:
            u_h_val = float(u_h)
            k_h_ref = gain_matrix(self.design.k_h_predicted)
        else:
            k_h_ref = gain_matrix(self.k_h_syn)
            u_h_val = float(-(k_h_ref @ self.x)[0])
        u_a_val = float(-(self.k_a @ self.x)[0])

        xnorm = float(np.linalg.norm(self.x))
        if xnorm > 1e-8:
            innov = abs(-u_h_val - float(self.rls_state.k_hat[0] @ self.x)) / xnorm
            if np.isinf(self.innovation_ema):
                self.innovation_ema = innov
            else:
                self.innovation_ema = 0.9 * self.innovation_ema + 0.1 * innov
        # estimator supervision: a converged estimator that stops explaining
        # fresh samples has seen the human change; re-open its covariance so
        # it re-converges at the initial-transient rate instead of waiting
        # out the forgetting horizon (the gain estimate is kept as the prior)
        if (self.innovation_ema > cfg.reset_threshold
                and float(np.trace(self.rls_state.p_cov)) < cfg.cov_trace_gate):
            self.rls_state = replace(self.rls_state,
                                     p_cov=cfg.p0 * np.eye(cfg.sys.n))
        self.rls_state = rls.rls_update(self.rls_state, self.x, [u_h_val])
        row = self._record(t, u_a_val, u_h_val, k_h_ref)

        hold_human = live or cfg.human_hold
        if hold_human:
            a_fb = cfg.sys.a - cfg.sys.b[AUTOMATION] @ self.k_a
            b_h = cfg.sys.b[HUMAN][:, 0]
            f = lambda tt, xx: a_fb @ xx + b_h * u_h_val + self.disturbance(tt)
        else:
            a_fb = cfg.sys.a - cfg.sys.b[AUTOMATION] @ self.k_a \
                - cfg.sys.b[HUMAN] @ k_h_ref
            f = lambda tt, xx: a_fb @ xx + self.disturbance(tt)
        self.x = rk4_step(f, t, self.x, cfg.dt)
        self.tick_index += 1

        if self.auto_adapt and self.tick_index % self.ticks_per_adapt == 0:
            self.last_outcome = self._adaptation_opportunity()
        else:
            self.last_outcome = None
        return row

    def _hold(self, cause: str) -> AdaptOutcome:
        self.holds += 1
        self.hold_causes[cause] = self.hold_causes.get(cause, 0) + 1
        return AdaptOutcome(None, True, cause)

    def prepare_adaptation(self):
        """Gate checks plus identification.

        Returns an AdaptOutcome hold when a gate closes, otherwise the
        identified human cost and its diagnostics for adapt_step.
        """
        cfg = self.cfg
        if not cfg.adaptive:
            return AdaptOutcome(None, True, "disabled")
        if self.t < cfg.warmup:
            return AdaptOutcome(None, True, "warmup")
        if float(np.trace(self.rls_state.p_cov)) > cfg.cov_trace_gate:
            return AdaptOutcome(None, True, "covariance")
        if self.innovation_ema > cfg.innovation_gate:
            return AdaptOutcome(None, True, "innovation")
        rs = build_residual_system(
            cfg.sys, [FeedbackGain(self.k_a), rls.current_gain(self.rls_state)],
            player=HUMAN)
        theta = identify_cost(rs)
        diag = identification_confidence(rs, theta)
        return theta.to_cost_params(), diag

    def finish_adaptation(self, outcome: AdaptOutcome) -> AdaptOutcome:
        """Publish a redesign or book a hold; keeps the synthetic human consistent."""
        if outcome.published:
            self.design = outcome.result
            self.k_h_syn = synthetic_human(self.phase.cost, self.design.k_a,
                                           self.cfg.sys)
            self.adaptations += 1
        else:
            self._hold(outcome.cause or "unknown")
        self.last_outcome = outcome
        return outcome

    def _adaptation_opportunity(self) -> AdaptOutcome:
        prep = self.prepare_adaptation()
        if isinstance(prep, AdaptOutcome):
            return self.finish_adaptation(prep)
        cost, diag = prep
        outcome = adapt_step(self.design, cost, diag, self.cfg.objective,
                             self.cfg.policy)
        return self.finish_adaptation(outcome)

    def series(self) -> TimeSeries:
        rows = self.rows
        pick = lambda key: np.array([r[key] for r in rows])
        return TimeSeries(
            t=pick("t"), x=pick("x"), p_m=pick("p_m"), ref_m=pick("ref_m"),
            p_v=pick("p_v"), ref_v=pick("ref_v"), u_a=pick("u_a"),
            u_h=pick("u_h"), k_a=pick("k_a"), k_h=pick("k_h"),
            k_h_hat=pick("k_h_hat"), eig=pick("eig"), e_k=pick("e_k"),
            jg_integrand=pick("jg"))

    def summary(self) -> ScenarioSummary:
        series = self.series()
        if len(self.rows) == 0:
            return ScenarioSummary(
                rmse_full=0.0, rmse_adaptive_window=0.0, final_eigs=[],
                holds=self.holds, adaptations=self.adaptations,
                seed=self.cfg.seed, mean_ek_per_phase=[], hold_causes={})
        switch_times = [p.start for p in self.cfg.phases[1:]]
        window_start = switch_times[-1] if switch_times else 0.0
        mean_ek = []
        bounds = [p.start for p in self.cfg.phases] + [self.cfg.duration]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            mask = series.window(lo, hi)
            mean_ek.append(float(np.mean(series.e_k[mask])) if np.any(mask) else 0.0)
        return ScenarioSummary(
            rmse_full=rmse_manipulator(series),
            rmse_adaptive_window=rmse_manipulator(series, window_start),
            final_eigs=[float(v) for v in series.eig[-1]],
            holds=self.holds,
            adaptations=self.adaptations,
            seed=self.cfg.seed,
            mean_ek_per_phase=mean_ek,
            hold_causes=dict(self.hold_causes),
        )


def run_scenario(cfg: ScenarioConfig,
                 initial_design: DesignResult | None = None
                 ) -> tuple[TimeSeries, ScenarioSummary]:
    """Execute the full dual-rate loop on a simulated clock."""
    engine = ScenarioEngine(cfg, initial_design)
    n_ticks = int(round(cfg.duration * cfg.control_rate_hz))
    for _ in range(n_ticks):
        engine.tick()
    return engine.series(), engine.summary()


def rmse_manipulator(series: TimeSeries, t_start: float = -np.inf,
                     t_end: float = np.inf) -> float:
    """Root-mean-square manipulator deviation sqrt(mean(x1^2))."""
    if len(series) == 0:
        raise ValueError("empty series")
    mask = series.window(t_start, t_end)
    if not np.any(mask):
        raise ValueError("window selects no samples")
    return float(np.sqrt(np.mean(series.x[mask, 0] ** 2)))


def gain_error(series: TimeSeries, truth: np.ndarray | None = None) -> np.ndarray:
    """Per-sample gain-estimation error ||K_h_true(t) - K_h_hat(t)||_2."""
    truth = series.k_h if truth is None else np.asarray(truth, float)
    if truth.shape != series.k_h_hat.shape:
        raise DimensionError("gain schedule misaligned with the series")
    return np.linalg.norm(truth - series.k_h_hat, axis=1)


def write_outputs(series: TimeSeries, summary: ScenarioSummary, outdir,
                  stem: str = "scenario") -> tuple[Path, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{stem}.csv"
    json_path = outdir / f"{stem}_summary.json"
    series.to_csv(csv_path)
    with open(json_path, "w") as fh:
        json.dump(summary.to_json_dict(), fh, indent=2)
        fh.write("\n")
    return csv_path, json_path
