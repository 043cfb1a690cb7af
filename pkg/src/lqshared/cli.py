"""Command-line entry point: simulate, identify, design, hil.

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure
(instability, no stable design), 4 low-confidence identification (result is
still written, flagged).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .design import design_automation
from .errors import (
    ConfigError,
    InfeasibleError,
    LqSharedError,
    NonFiniteError,
    NoStableCandidateError,
)
from .games import AUTOMATION, HUMAN, FeedbackGain, closed_loop_matrix, stability_margins
from .inverse import build_residual_system, identification_confidence, identify_cost
from .scenario import TimeSeries, design_offline, run_scenario, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_LOW_CONFIDENCE = 4


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    try:
        raw = cfgmod.load_config(args.config, "scenario")
        cfg = cfgmod.scenario_from_config(raw, seed_override=args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    outdir = Path(args.out)
    try:
        base_design = design_offline(cfg)
        runs = {}
        if args.compare:
            variants = [("adaptive", True), ("baseline", False)]
        else:
            variants = [("adaptive" if cfg.adaptive else "baseline", cfg.adaptive)]
        for stem, adaptive in variants:
            run_cfg = replace(cfg, adaptive=adaptive)
            series, summary = run_scenario(run_cfg, base_design)
            csv_path, json_path = write_outputs(series, summary, outdir, stem)
            runs[stem] = (series, summary)
            print(f"[{stem}] wrote {csv_path} and {json_path}")
        if args.plot:
            from .report import render_figures
            baseline = runs.get("baseline", (None,))[0] if args.compare else None
            for stem, (series, _) in runs.items():
                figs = render_figures(series, outdir, stem,
                                      baseline if stem == "adaptive" else None)
                print(f"[{stem}] figures: " + ", ".join(p.name for p in figs))
        _print_summary_table(runs)
    except NonFiniteError as exc:
        return _fail(EXIT_RUNTIME, f"simulation diverged: {exc}")
    except NoStableCandidateError as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    return EXIT_OK


def _print_summary_table(runs: dict) -> None:
    print(f"{'run':<10} {'rmse_full':>12} {'rmse_window':>12} "
          f"{'adaptations':>12} {'holds':>8} {'max_eig':>10}")
    for stem, (series, summary) in runs.items():
        print(f"{stem:<10} {summary.rmse_full:>12.5g} "
              f"{summary.rmse_adaptive_window:>12.5g} "
              f"{summary.adaptations:>12d} {summary.holds:>8d} "
              f"{max(summary.final_eigs):>10.4f}")
    if {"adaptive", "baseline"} <= runs.keys():
        ra = runs["adaptive"][1].rmse_adaptive_window
        rb = runs["baseline"][1].rmse_adaptive_window
        if ra > 0:
            print(f"post-switch RMSE ratio (baseline/adaptive): {rb / ra:.2f}")


def _estimate_gain_rows(x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, bool]:
    """Batch least squares for u = -K x; returns (K, excited)."""
    gram = x.T @ x
    sv = np.linalg.svd(gram, compute_uv=False)
    excited = bool(sv[-1] > 1e-9 * max(sv[0], 1.0) and sv[0] > 1e-12)
    k, *_ = np.linalg.lstsq(x, -u, rcond=None)
    return k.T.reshape(1, -1), excited


def cmd_identify(args) -> int:
    try:
        raw = cfgmod.load_config(args.config, "identify")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    sys_ = cfgmod._system_from(raw.get("system"))
    trace_path = Path(raw["trace"])
    if not trace_path.is_absolute():
        trace_path = Path(args.config).parent / trace_path
    try:
        cols = TimeSeries.read_csv(trace_path)
    except (OSError, ValueError, LqSharedError) as exc:
        return _fail(EXIT_CONFIG, f"cannot read trace: {exc}")
    required = ["t", "x1", "x2", "x3", "u_a", "u_h"]
    if any(name not in cols for name in required):
        return _fail(EXIT_CONFIG, "trace is missing required columns")
    data = np.column_stack([cols[c] for c in required])
    if data.shape[0] == 0:
        return _fail(EXIT_CONFIG, "trace is empty")
    if not np.all(np.isfinite(data)):
        return _fail(EXIT_CONFIG, "trace contains non-finite rows")

    window = raw.get("window", {})
    t = cols["t"]
    mask = (t >= window.get("t_start", -np.inf)) & (t < window.get("t_end", np.inf))
    if not np.any(mask):
        return _fail(EXIT_CONFIG, "window selects no samples")
    x = np.column_stack([cols["x1"], cols["x2"], cols["x3"]])[mask]
    u = {"automation": cols["u_a"][mask], "human": cols["u_h"][mask]}

    players = raw.get("players", ["human", "automation"])
    index = {"automation": AUTOMATION, "human": HUMAN}
    gains, excited = {}, {}
    for name in ("automation", "human"):
        gains[name], excited[name] = _estimate_gain_rows(x, u[name])

    out = {"trace": str(trace_path), "players": {}}
    any_low = False
    for name in players:
        rs = build_residual_system(
            sys_, [FeedbackGain(gains["automation"]), FeedbackGain(gains["human"])],
            player=index[name], include_cross=raw.get("include_cross", False))
        theta = identify_cost(rs, epsilon=raw.get("epsilon", 1e-6))
        diag = identification_confidence(rs, theta)
        low = diag.low_confidence or not excited[name]
        any_low = any_low or low
        out["players"][name] = {
            "estimated_gain": gains[name].ravel().tolist(),
            "q": theta.q_diag.tolist(),
            "r": theta.r_self_diag.tolist(),
            "residual": diag.residual,
            "relative_residual": diag.relative_residual,
            "null_space_gap": diag.null_space_gap,
            "low_confidence": low,
        }
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    result_path = outdir / "identified_costs.json"
    with open(result_path, "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(f"wrote {result_path}")
    for name in players:
        rec = out["players"][name]
        flag = " LOW-CONFIDENCE" if rec["low_confidence"] else ""
        print(f"  {name}: q={np.round(rec['q'], 6).tolist()} "
              f"r={np.round(rec['r'], 6).tolist()}{flag}")
    return EXIT_LOW_CONFIDENCE if any_low else EXIT_OK


def cmd_design(args) -> int:
    try:
        raw = cfgmod.load_config(args.config, "design")
        problem = cfgmod.design_problem_from_config(raw, seed_override=args.seed)
    except (ConfigError, InfeasibleError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        result = design_automation(problem)
    except NoStableCandidateError as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    a_cl = closed_loop_matrix(problem.sys, [result.k_a, result.k_h_predicted])
    out = {
        "theta_a": {"q": result.theta_a.q.tolist(),
                    "r": result.theta_a.r_self.tolist()},
        "k_automation": result.k_a.k.ravel().tolist(),
        "k_human_predicted": result.k_h_predicted.k.ravel().tolist(),
        "j_g": result.j_g,
        "eigenvalues_real": stability_margins(a_cl).tolist(),
        "iterations": result.iterations,
        "budget_exhausted": result.budget_exhausted,
    }
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    result_path = outdir / "design_result.json"
    with open(result_path, "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(f"wrote {result_path}")
    print(f"  K_a = {np.round(out['k_automation'], 4).tolist()}")
    print(f"  K_h = {np.round(out['k_human_predicted'], 4).tolist()}")
    print(f"  J_g = {out['j_g']:.6f}")
    return EXIT_OK


def cmd_hil(args) -> int:
    from .service import run_service
    try:
        raw = cfgmod.load_config(args.config, "hil")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    host, _, port = args.bind.rpartition(":")
    try:
        run_service(raw, host or "127.0.0.1", int(port),
                    virtual_clock=args.virtual_clock,
                    duration=args.duration)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot bind {args.bind}: {exc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqshared",
        description="Adaptive shared control: LQ games, identification, design")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the shared-control scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--compare", action="store_true",
                   help="run adaptive and non-adaptive variants")
    p.add_argument("--no-plot", dest="plot", action="store_false",
                   help="skip figure rendering")
    p.set_defaults(func=cmd_simulate, plot=True)

    p = sub.add_parser("identify", help="identify costs from a recorded trace")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("design", help="design automation weights")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("hil", help="serve the human-in-the-loop session")
    p.add_argument("--config", required=True)
    p.add_argument("--bind", default="127.0.0.1:8750")
    p.add_argument("--virtual-clock", action="store_true",
                   help="lockstep ticks driven by client input (testing)")
    p.add_argument("--duration", type=float, default=None,
                   help="stop after this many simulated/wall seconds")
    p.set_defaults(func=cmd_hil)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
