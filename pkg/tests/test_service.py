"""HIL service: wire protocol, lockstep mode, recording, safety gate."""

import asyncio
import json

import numpy as np
import websockets

from lqshared.design import AdaptOutcome
from lqshared.scenario import TimeSeries, synthetic_human
from lqshared.service import HilServer, HilSession

SINGLE_PHASE_SCENARIO = {
    "version": 1,
    "human_phases": [{"start": 0.0, "cost": {"q": [50.0, 0.2, 0.2], "r": [1.0]}}],
    "duration": 80.0,
    "seed": 7,
}


def make_session(duration=80.0, input_gain=20.0, **scenario_extra):
    scenario = dict(SINGLE_PHASE_SCENARIO, duration=duration, **scenario_extra)
    return HilSession({"version": 1, "scenario": scenario,
                       "input_gain": input_gain})


async def serve_virtual(session, client_coro, duration=None):
    server = HilServer(session, virtual_clock=True, duration=duration)
    async with websockets.serve(server.handler, "127.0.0.1", 0) as ws_server:
        port = ws_server.sockets[0].getsockname()[1]
        await asyncio.wait_for(client_coro(server, port), timeout=120)
    return server


def scripted_input(session, msg):
    """The synthetic human law replayed through the wire: axis = u / gain."""
    x = np.array(msg["x"])
    k_a = np.array(msg["K_a"]).reshape(1, -1)
    cost = session.cfg.phase_at(msg["t"]).cost
    k_h = synthetic_human(cost, k_a, session.cfg.sys).k
    return float(-(k_h @ x)[0]) / session.input_gain


class TestVirtualClockSession:
    def test_sixty_second_session_row_count(self):
        session = make_session(duration=60.0)

        async def client(server, port):
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                sent = 0
                while sent < 1500:
                    msg = json.loads(await ws.recv())
                    if msg["type"] != "state":
                        continue
                    await ws.send(json.dumps(
                        {"type": "input", "axis": scripted_input(session, msg)}))
                    sent += 1
                # wait for the final state broadcast before closing
                while json.loads(await ws.recv())["type"] != "state":
                    pass

        asyncio.run(serve_virtual(session, client))
        assert abs(len(session.engine.rows) - 1500) <= 1

    def test_state_message_schema(self):
        session = make_session(duration=10.0)
        seen = {}

        async def client(server, port):
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                msg = json.loads(await ws.recv())
                seen.update(msg)
                await ws.send(json.dumps({"type": "input", "axis": 0.1}))
                seen["second"] = json.loads(await ws.recv())

        asyncio.run(serve_virtual(session, client))
        assert set(seen["second"]) == {"type", "t", "x", "ref", "u_a", "u_h",
                                       "K_a", "K_h_hat", "eig", "e_K", "mode",
                                       "second"} - {"second"}
        assert seen["second"]["mode"] in ("adaptive", "fixed")
        assert len(seen["second"]["x"]) == 3
        assert len(seen["second"]["ref"]) == 2

    def test_malformed_messages_dropped_session_continues(self):
        session = make_session(duration=10.0)

        async def client(server, port):
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                await ws.recv()
                await ws.send("this is not json")
                await ws.send(json.dumps({"no_type": 1}))
                await ws.send(json.dumps({"type": "input", "axis": "wide"}))
                await ws.send(json.dumps({"type": "warp", "axis": 1}))
                await ws.send(json.dumps({"type": "input", "axis": 0.5}))
                msg = json.loads(await ws.recv())
                assert msg["type"] == "state"

        asyncio.run(serve_virtual(session, client))
        assert session.stats.protocol_errors == 4
        assert session.stats.control_ticks == 1

    def test_mode_toggle_and_reset_round_trip(self):
        session = make_session(duration=10.0)
        observed = []

        async def next_state(ws):
            while True:
                msg = json.loads(await ws.recv())
                if msg["type"] == "state":
                    return msg

        async def client(server, port):
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                await ws.recv()
                await ws.send(json.dumps({"type": "mode", "value": "fixed"}))
                await ws.send(json.dumps({"type": "input", "axis": 0.4}))
                observed.append(await next_state(ws))
                await ws.send(json.dumps({"type": "mode", "value": "adaptive"}))
                await ws.send(json.dumps({"type": "input", "axis": 0.4}))
                observed.append(await next_state(ws))
                await ws.send(json.dumps({"type": "reset"}))
                await ws.send(json.dumps({"type": "input", "axis": 0.0}))
                observed.append(await next_state(ws))

        asyncio.run(serve_virtual(session, client))
        assert observed[0]["mode"] == "fixed"
        assert observed[1]["mode"] == "adaptive"
        # reset pulled the state to the origin; only one step of drift remains
        drift = np.linalg.norm(observed[2]["x"])
        assert drift < 0.1
        assert drift < np.linalg.norm(observed[1]["x"])

    def test_adaptation_messages_on_cadence(self):
        session = make_session(duration=10.0)
        kinds = []

        async def client(server, port):
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                msg = json.loads(await ws.recv())
                for _ in range(60):
                    await ws.send(json.dumps(
                        {"type": "input", "axis": scripted_input(session, msg)}))
                    while True:
                        msg = json.loads(await ws.recv())
                        kinds.append(msg["type"])
                        if msg["type"] == "state":
                            break

        asyncio.run(serve_virtual(session, client))
        assert kinds.count("adaptation") == 2  # two 1 s boundaries in 60 ticks
        assert session.stats.adaptation_cycles == 2


class TestWallClock:
    def test_idle_without_client(self):
        # excitation off: nothing moves, no adaptation pressure
        session = make_session(duration=30.0,
                               excitation={"amplitudes": [0.0, 0.0, 0.0]})
        server = HilServer(session, virtual_clock=False, duration=1.2)
        asyncio.run(server.run("127.0.0.1", 0))
        assert session.stats.control_ticks >= 25
        assert np.allclose(session.engine.x, 0.0)
        assert session.stats.protocol_errors == 0
        assert session.stats.adaptation_overruns == 0
        ticks_rate, _ = session.stats.deadline_rates()
        assert ticks_rate > 0.9


class TestSafetyGate:
    def test_uncertified_candidate_held(self, offline_design):
        session = make_session(duration=10.0)
        # craft an estimate that destabilizes the candidate's certificate
        k_destab = -np.array([[10.0, 0.0, 0.0]])
        object.__setattr__(session.engine.rls_state, "k_hat", k_destab)
        outcome = AdaptOutcome(offline_design, False, None)
        gated = session._certify_against_estimate(outcome)
        assert gated.held and gated.cause == "uncertified_vs_estimate"

    def test_certified_candidate_passes(self, offline_design):
        session = make_session(duration=10.0)
        k_good = offline_design.k_h_predicted.k
        object.__setattr__(session.engine.rls_state, "k_hat", k_good)
        outcome = AdaptOutcome(offline_design, False, None)
        assert session._certify_against_estimate(outcome) is outcome


class TestRecording:
    def test_recorded_trace_matches_schema(self, tmp_path):
        session = make_session(duration=10.0)
        engine = session.engine
        for _ in range(250):
            engine.tick(u_h=0.2)
        csv_path, json_path = session.record(tmp_path)
        cols = TimeSeries.read_csv(csv_path)
        assert cols["t"].shape[0] == 250
        doc = json.loads(json_path.read_text())
        assert set(doc) == {"rmse_adaptive_window", "rmse_full", "final_eigs",
                            "holds", "adaptations", "seed"}

    def test_empty_session_writes_header_only(self, tmp_path):
        session = make_session(duration=10.0)
        csv_path, _ = session.record(tmp_path)
        lines = csv_path.read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("t,x1")
