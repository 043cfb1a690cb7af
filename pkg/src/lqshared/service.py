"""Real-time human-in-the-loop service.

Runs the shared-control pipeline against a live human: a 25 Hz control loop
applies the latest human command, a 1 Hz adaptation loop identifies the
human cost and redesigns the automation.  Telemetry streams to clients as
JSON text messages over a WebSocket; clients send normalized input commands
upstream.

Two clock modes: wall-clock for live use (control ticks scheduled on the
event loop, adaptation in a worker thread so ticks never block) and virtual
clock for deterministic tests (lockstep: every upstream input message
advances exactly one tick).
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import websockets

from .config import scenario_from_config
from .design import AdaptOutcome, adapt_step
from .errors import LqSharedError
from .games import AUTOMATION, HUMAN, stability_margins
from .scenario import ScenarioEngine, design_offline, write_outputs

# candidates certified closer to the imaginary axis than this are held
_PUBLISH_MARGIN = 0.01


@dataclass
class ServiceStats:
    control_ticks: int = 0
    ticks_on_deadline: int = 0
    missed_ticks: int = 0
    adaptation_cycles: int = 0
    adaptations_on_deadline: int = 0
    adaptation_overruns: int = 0
    dropped_frames: int = 0
    protocol_errors: int = 0

    def deadline_rates(self) -> tuple[float, float]:
        ticks = self.ticks_on_deadline / max(self.control_ticks, 1)
        cycles = self.adaptations_on_deadline / max(self.adaptation_cycles, 1)
        return ticks, cycles


class HilSession:
    """Engine wrapper owning live-input state and the wire representation."""

    def __init__(self, raw_config: dict):
        scen_raw = raw_config.get("scenario", {"version": 1})
        self.cfg = scenario_from_config(scen_raw)
        # power-of-two default keeps scripted wire replays bit-exact
        self.input_gain = float(raw_config.get("input_gain", 16.0))
        self.human_timeout = float(raw_config.get("human_timeout_s", 1.0))
        self.record_dir = raw_config.get("record_dir")
        self.mode = raw_config.get("mode", "adaptive" if self.cfg.adaptive else "fixed")
        self.engine = ScenarioEngine(self.cfg, design_offline(self.cfg),
                                     auto_adapt=False)
        self.axis = 0.0
        self.last_input_time: float | None = None
        self.stats = ServiceStats()
        self.history = None  # ring buffer is sized on first use

    @property
    def human_present(self) -> bool:
        return self.last_input_time is not None

    def apply_input(self, axis: float, now: float) -> None:
        self.axis = float(np.clip(axis, -1.0, 1.0))
        self.last_input_time = now

    def human_command(self, now: float) -> float:
        if self.last_input_time is None:
            return 0.0
        if now - self.last_input_time > self.human_timeout:
            return 0.0
        return self.axis * self.input_gain

    def effective_mode(self, now: float) -> str:
        if self.last_input_time is None or now - self.last_input_time > self.human_timeout:
            return "fixed"
        return self.mode

    def tick(self, now: float) -> None:
        if self.history is None:
            self.history = int(30.0 * self.cfg.control_rate_hz)
        self.engine.tick(u_h=self.human_command(now))
        self.stats.control_ticks += 1

    def adaptation_due(self) -> bool:
        return self.engine.tick_index % self.engine.ticks_per_adapt == 0

    def state_message(self, now: float) -> dict:
        eng = self.engine
        t = eng.t
        ref_m, ref_v = self.cfg.reference.sample(t)
        last = eng.rows[-1] if eng.rows else None
        k_hat = eng.rls_state.k_hat
        k_pred = eng.design.k_h_predicted.k
        a_cl = (self.cfg.sys.a - self.cfg.sys.b[AUTOMATION] @ eng.k_a
                - self.cfg.sys.b[HUMAN] @ k_hat)
        return {
            "type": "state",
            "t": t,
            "x": [float(v) for v in eng.x],
            "ref": [ref_m, ref_v],
            "u_a": [float(last["u_a"])] if last else [0.0],
            "u_h": [float(last["u_h"])] if last else [0.0],
            "K_a": [float(v) for v in eng.k_a.ravel()],
            "K_h_hat": [float(v) for v in k_hat.ravel()],
            "eig": [float(v) for v in stability_margins(a_cl)],
            "e_K": float(np.linalg.norm(k_pred - k_hat)),
            "mode": self.effective_mode(now),
        }

    def adaptation_message(self, outcome: AdaptOutcome) -> dict:
        design = self.engine.design
        return {
            "type": "adaptation",
            "theta_a": {"q": design.theta_a.q.tolist(),
                        "r": design.theta_a.r_self.tolist()},
            "J_g": design.j_g,
            "held": bool(outcome.held),
            "cause": outcome.cause,
        }

    def run_adaptation_sync(self) -> AdaptOutcome:
        """One full adaptation cycle on the calling thread."""
        self.stats.adaptation_cycles += 1
        if self.effective_mode(time.monotonic()) == "fixed" and self.mode == "adaptive":
            return self.engine.finish_adaptation(
                AdaptOutcome(None, True, "human_absent"))
        if self.mode == "fixed":
            return self.engine.finish_adaptation(AdaptOutcome(None, True, "disabled"))
        prep = self.engine.prepare_adaptation()
        if isinstance(prep, AdaptOutcome):
            return self.engine.finish_adaptation(prep)
        cost, diag = prep
        outcome = adapt_step(self.engine.design, cost, diag,
                             self.cfg.objective, self.cfg.policy)
        outcome = self._certify_against_estimate(outcome)
        return self.engine.finish_adaptation(outcome)

    def _certify_against_estimate(self, outcome: AdaptOutcome) -> AdaptOutcome:
        """Never publish a gain not certified against the latest estimate."""
        if not outcome.published:
            return outcome
        k_hat = self.engine.rls_state.k_hat
        a_cl = (self.cfg.sys.a
                - self.cfg.sys.b[AUTOMATION] @ outcome.result.k_a.k
                - self.cfg.sys.b[HUMAN] @ k_hat)
        if float(stability_margins(a_cl)[0]) >= -_PUBLISH_MARGIN:
            return AdaptOutcome(None, True, "uncertified_vs_estimate")
        return outcome

    def record(self, outdir=None) -> tuple[Path, Path]:
        outdir = Path(outdir or self.record_dir or "out")
        return write_outputs(self.engine.series(), self.engine.summary(),
                             outdir, "session")


class _Client:
    def __init__(self, socket, stats: ServiceStats):
        self.socket = socket
        self.stats = stats
        self.queue: asyncio.Queue[str] = asyncio.Queue(maxsize=64)

    def offer(self, payload: str) -> None:
        # lossy: slow clients lose the oldest frame, the loop never stalls
        while True:
            try:
                self.queue.put_nowait(payload)
                return
            except asyncio.QueueFull:
                with contextlib.suppress(asyncio.QueueEmpty):
                    self.queue.get_nowait()
                    self.stats.dropped_frames += 1

    async def sender(self) -> None:
        while True:
            payload = await self.queue.get()
            await self.socket.send(payload)


class HilServer:
    def __init__(self, session: HilSession, virtual_clock: bool = False,
                 duration: float | None = None):
        self.session = session
        self.virtual_clock = virtual_clock
        self.duration = duration
        self.clients: set[_Client] = set()
        self.executor = ThreadPoolExecutor(max_workers=1)
        self.adaptation_running = False
        self.skip_next_adaptation = False
        self.stopped = asyncio.Event()

    # -- broadcasting -------------------------------------------------
    def broadcast(self, message: dict) -> None:
        if not self.clients:
            return
        payload = json.dumps(message)
        for client in list(self.clients):
            client.offer(payload)

    def broadcast_state(self) -> None:
        self.broadcast(self.session.state_message(time.monotonic()))

    # -- upstream handling --------------------------------------------
    def handle_message(self, raw: str) -> None:
        try:
            msg = json.loads(raw)
            kind = msg["type"]
        except (json.JSONDecodeError, TypeError, KeyError):
            self.session.stats.protocol_errors += 1
            return
        if kind == "input":
            try:
                axis = float(msg["axis"])
            except (KeyError, TypeError, ValueError):
                self.session.stats.protocol_errors += 1
                return
            self.session.apply_input(axis, time.monotonic())
            if self.virtual_clock:
                self.virtual_tick()
        elif kind == "mode":
            if msg.get("value") in ("adaptive", "fixed"):
                self.session.mode = msg["value"]
            else:
                self.session.stats.protocol_errors += 1
        elif kind == "reset":
            self.session.engine.reset()
        else:
            self.session.stats.protocol_errors += 1

    # -- virtual clock: every input advances exactly one tick ----------
    def virtual_tick(self) -> None:
        session = self.session
        session.tick(time.monotonic())
        session.stats.ticks_on_deadline += 1
        if session.adaptation_due():
            t0 = time.monotonic()
            outcome = session.run_adaptation_sync()
            if time.monotonic() - t0 <= session.cfg.adapt_period:
                session.stats.adaptations_on_deadline += 1
            # adaptation event first, then a state built from the new snapshot
            self.broadcast(session.adaptation_message(outcome))
        self.broadcast_state()
        if (self.duration is not None
                and session.engine.t >= self.duration - 1e-9):
            self.stopped.set()

    # -- wall clock ----------------------------------------------------
    async def control_loop(self) -> None:
        session = self.session
        dt = session.cfg.dt
        loop = asyncio.get_running_loop()
        next_due = loop.time()
        started = loop.time()
        while not self.stopped.is_set():
            now = loop.time()
            if now < next_due:
                await asyncio.sleep(next_due - now)
            session.tick(time.monotonic())
            adaptation_due = session.adaptation_due()
            self.broadcast_state()
            done = loop.time()
            if done - next_due <= dt:
                session.stats.ticks_on_deadline += 1
            next_due += dt
            if done > next_due + dt:
                missed = int((done - next_due) / dt)
                session.stats.missed_ticks += missed
                next_due += missed * dt
            if adaptation_due:
                self._launch_adaptation(loop)
            if self.duration is not None and done - started >= self.duration:
                self.stopped.set()

    def _launch_adaptation(self, loop) -> None:
        session = self.session
        if self.adaptation_running or self.skip_next_adaptation:
            # previous cycle overran its period: count and skip this slot
            if self.adaptation_running:
                session.stats.adaptation_overruns += 1
                self.skip_next_adaptation = True
            else:
                self.skip_next_adaptation = False
            return
        session.stats.adaptation_cycles += 1
        if session.effective_mode(time.monotonic()) == "fixed":
            cause = "disabled" if session.mode == "fixed" else "human_absent"
            outcome = session.engine.finish_adaptation(
                AdaptOutcome(None, True, cause))
            session.stats.adaptations_on_deadline += 1
            self.broadcast(session.adaptation_message(outcome))
            return
        prep = session.engine.prepare_adaptation()
        if isinstance(prep, AdaptOutcome):
            outcome = session.engine.finish_adaptation(prep)
            session.stats.adaptations_on_deadline += 1
            self.broadcast(session.adaptation_message(outcome))
            return
        cost, diag = prep
        design = session.engine.design
        cancel = threading.Event()
        started = time.monotonic()
        self.adaptation_running = True

        def compute():
            return adapt_step(design, cost, diag, session.cfg.objective,
                              session.cfg.policy, cancel=cancel)

        def finish(fut):
            self.adaptation_running = False
            elapsed = time.monotonic() - started
            if elapsed <= session.cfg.adapt_period:
                session.stats.adaptations_on_deadline += 1
            try:
                outcome = fut.result()
            except LqSharedError as exc:
                outcome = AdaptOutcome(None, True, f"design_failed:{type(exc).__name__}")
            outcome = session._certify_against_estimate(outcome)
            outcome = session.engine.finish_adaptation(outcome)
            self.broadcast(session.adaptation_message(outcome))

        future = loop.run_in_executor(self.executor, compute)
        future.add_done_callback(
            lambda fut: loop.call_soon_threadsafe(finish, fut)
            if not loop.is_closed() else None)

    # -- connection handling --------------------------------------------
    async def handler(self, socket) -> None:
        client = _Client(socket, self.session.stats)
        self.clients.add(client)
        sender = asyncio.create_task(client.sender())
        try:
            client.offer(json.dumps(self.session.state_message(time.monotonic())))
            async for raw in socket:
                self.handle_message(raw)
        except websockets.ConnectionClosed:
            pass
        finally:
            sender.cancel()
            self.clients.discard(client)

    async def run(self, host: str, port: int) -> None:
        async with websockets.serve(self.handler, host, port):
            if self.virtual_clock:
                await self.stopped.wait()
            else:
                loop_task = asyncio.create_task(self.control_loop())
                await self.stopped.wait()
                loop_task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await loop_task
        self.executor.shutdown(wait=False, cancel_futures=True)


def run_service(raw_config: dict, host: str, port: int,
                virtual_clock: bool = False,
                duration: float | None = None) -> HilSession:
    session = HilSession(raw_config)
    server = HilServer(session, virtual_clock=virtual_clock, duration=duration)
    print(f"hil service on ws://{host}:{port} "
          f"({'virtual' if virtual_clock else 'wall'} clock)")
    try:
        asyncio.run(server.run(host, port))
    except KeyboardInterrupt:
        pass
    finally:
        ticks, cycles = session.stats.deadline_rates()
        print(f"ticks={session.stats.control_ticks} on-deadline={ticks:.3f} "
              f"adaptation-cycles={session.stats.adaptation_cycles} "
              f"on-deadline={cycles:.3f} overruns={session.stats.adaptation_overruns}")
        if session.record_dir:
            csv_path, json_path = session.record(session.record_dir)
            print(f"recorded {csv_path} and {json_path}")
    return session
