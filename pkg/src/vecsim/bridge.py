"""Environment-as-a-service: drive episodes over a line-delimited JSON
protocol (stdio or TCP) so an external learner can train against the
simulator.

Protocol (one JSON object per line, UTF-8):
  server -> {"kind": "hello", "version": "1"}
  client -> {"kind": "reset", "seed": <int, optional>}
  server -> {"kind": "reset_ok", "episode", "slot", "obs", "mask", "done"}
  client -> {"kind": "step", "episode", "slot", "actions"}
  server -> {"kind": "step_ok", "episode", "slot", "obs", "mask", "rewards",
             "reward", "done", "debug", ["metrics" when done]}
  client -> {"kind": "close"}

Actions are one logit vector per edge, length OBS_CAP * E; each visible task
slot is decoded by argmax over its E logits (ties to the lowest edge id).
Tasks beyond the observation cap execute at their origin edge. Protocol
violations get {"kind": "error", "message": ...} and reset the session.
"""

from __future__ import annotations

import json
import socket
import sys

import numpy as np

from vecsim.channel import realize_channel
from vecsim.config import ScenarioConfig, build_edges, require_valid
from vecsim.engine import (
    OBS_CAP,
    EpisodeMetrics,
    Snapshot,
    aggregate_metrics,
    arrivals,
    build_snapshot,
    score_slot,
)
from vecsim.game import OffloadProfile
from vecsim.mobility import TrajectorySet, build_coverage
from vecsim.power import PowerSolverParams

PROTOCOL_VERSION = "1"


class ProtocolError(Exception):
    pass


def decode_actions(snap: Snapshot, actions) -> OffloadProfile:
    """Turn per-edge logit vectors into an offload profile."""
    g = snap.game
    E = g.E
    arr = np.asarray(actions, dtype=float)
    if arr.shape != (E, OBS_CAP * E):
        raise ProtocolError(
            f"actions must have shape ({E}, {OBS_CAP * E}), got {list(arr.shape)}"
        )
    assign = g.origin.copy()  # over-cap tasks stay local
    for e in range(E):
        for i, k in enumerate(snap.visible[e]):
            logits = arr[e, i * E : (i + 1) * E]
            assign[k] = int(np.argmax(logits))
    return g.to_profile(assign)


class EpisodeSession:
    """One episode being driven slot by slot by an external client."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        traj: TrajectorySet,
        seed: int,
        episode_id: int,
        power_params: PowerSolverParams | None = None,
    ):
        require_valid(cfg)
        self.cfg = cfg
        self.seed = seed
        self.episode_id = episode_id
        self.power_params = power_params
        self.edges = build_edges(cfg, seed)
        self.cov = build_coverage(traj, self.edges)
        self.ch = realize_channel(self.cov, cfg, seed)
        self.slot = 0
        self.next_task_id = 0
        self.outcomes = []
        self.snapshot = self._make_snapshot(0)

    def _make_snapshot(self, slot: int) -> Snapshot:
        tasks = arrivals(slot, self.cov, self.cfg, self.seed, first_task_id=self.next_task_id)
        self.next_task_id += len(tasks)
        return build_snapshot(slot, self.cov, self.ch, tasks, self.cfg, self.edges, self.power_params)

    @property
    def done(self) -> bool:
        return self.slot >= self.cfg.horizon_slots

    def observation_payload(self) -> dict:
        if self.done:
            E = self.cfg.num_edges
            obs = np.zeros((E, self.snapshot.observations.shape[1]))
            mask = np.zeros((E, OBS_CAP), dtype=bool)
        else:
            obs = self.snapshot.observations
            mask = self.snapshot.obs_mask
        return {"obs": obs.tolist(), "mask": mask.astype(int).tolist()}

    def step(self, actions):
        if self.done:
            raise ProtocolError("episode already finished; send reset")
        profile = decode_actions(self.snapshot, actions)
        outcome = score_slot(self.snapshot, profile)
        self.outcomes.append(outcome)
        self.slot += 1
        if not self.done:
            self.snapshot = self._make_snapshot(self.slot)
        return outcome

    def metrics(self) -> EpisodeMetrics:
        return aggregate_metrics(self.outcomes, self.cfg, self.seed, "external")


def _metrics_payload(m: EpisodeMetrics) -> dict:
    return {
        "asr": m.asr,
        "cr": m.cr,
        "aap": m.aap,
        "ast": m.ast,
        "apt": m.apt,
        "p_local": m.p_local,
        "p_migrated": m.p_migrated,
        "k_total": m.k_total,
        "k_serviced": m.k_serviced,
        "k_local": m.k_local,
        "k_migrated": m.k_migrated,
        "slots": m.slots,
        "seed": m.seed,
    }


class BridgeServer:
    """Single-session request/response server over a line pair."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        traj: TrajectorySet,
        power_params: PowerSolverParams | None = None,
        seed_base: int | None = None,
    ):
        self.cfg = cfg
        self.traj = traj
        self.power_params = power_params
        self.seed_base = cfg.rng_seed if seed_base is None else seed_base
        self.session: EpisodeSession | None = None
        self.episode_counter = 0

    def handle_line(self, line: str) -> tuple[dict | None, bool]:
        """Process one request; returns (reply, keep_going)."""
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict) or "kind" not in msg:
                raise ProtocolError("message must be an object with a 'kind'")
        except json.JSONDecodeError as exc:
            self.session = None
            return {"kind": "error", "message": f"malformed line: {exc}"}, True
        try:
            return self._dispatch(msg)
        except ProtocolError as exc:
            self.session = None
            return {"kind": "error", "message": str(exc)}, True

    def _dispatch(self, msg: dict) -> tuple[dict | None, bool]:
        kind = msg["kind"]
        if kind == "close":
            return None, False
        if kind == "reset":
            seed = int(msg.get("seed", self.seed_base + self.episode_counter))
            self.episode_counter += 1
            self.session = EpisodeSession(
                self.cfg, self.traj, seed, self.episode_counter, self.power_params
            )
            reply = {
                "kind": "reset_ok",
                "episode": self.session.episode_id,
                "slot": 0,
                "done": False,
            }
            reply.update(self.session.observation_payload())
            return reply, True
        if kind == "step":
            if self.session is None:
                raise ProtocolError("no active episode")
            sess = self.session
            slot = msg.get("slot")
            if slot is not None and int(slot) != sess.slot:
                raise ProtocolError(f"slot mismatch: expected {sess.slot}, got {slot}")
            if "actions" not in msg:
                raise ProtocolError("step requires 'actions'")
            outcome = sess.step(msg["actions"])
            reply = {
                "kind": "step_ok",
                "episode": sess.episode_id,
                "slot": outcome.slot,
                "rewards": outcome.rewards.tolist(),
                "reward": outcome.system_reward,
                "done": sess.done,
                "debug": {
                    "system_reward": outcome.system_reward,
                    "null_utilities": outcome.null_utilities.tolist(),
                },
            }
            reply.update(sess.observation_payload())
            if sess.done:
                reply["metrics"] = _metrics_payload(sess.metrics())
            return reply, True
        raise ProtocolError(f"unknown kind {kind!r}")

    def timeout_reply(self) -> dict | None:
        """Abort a stalled episode; partial metrics are flagged, not final."""
        if self.session is None:
            return None
        partial = _metrics_payload(self.session.metrics())
        slot = self.session.slot
        self.session = None
        return {
            "kind": "error",
            "message": f"client timed out; episode aborted at slot {slot}",
            "partial": True,
            "partial_metrics": partial,
        }

    # ---- transports -------------------------------------------------------

    def serve_stream(self, rfile, wfile, timeout_s: float | None = None, read_line=None) -> None:
        wfile.write(json.dumps({"kind": "hello", "version": PROTOCOL_VERSION}) + "\n")
        wfile.flush()
        reader = read_line if read_line is not None else rfile.readline
        while True:
            try:
                line = reader()
            except TimeoutError:
                reply = self.timeout_reply()
                if reply is not None:
                    wfile.write(json.dumps(reply) + "\n")
                    wfile.flush()
                continue
            if not line:
                break
            if not line.strip():
                continue
            reply, keep = self.handle_line(line)
            if reply is not None:
                wfile.write(json.dumps(reply) + "\n")
                wfile.flush()
            if not keep:
                break

    def serve_stdio(self) -> None:
        self.serve_stream(sys.stdin, sys.stdout)

    def serve_tcp(
        self,
        port: int,
        max_sessions: int | None = None,
        ready_callback=None,
        timeout_s: float | None = None,
    ) -> None:
        """Accept one client at a time; each connection is its own session."""
        served = 0
        with socket.create_server(("127.0.0.1", port)) as server:
            if ready_callback is not None:
                ready_callback(server.getsockname()[1])
            while max_sessions is None or served < max_sessions:
                conn, _ = server.accept()
                with conn:
                    reader = _SocketLineReader(conn, timeout_s)
                    wfile = conn.makefile("w", encoding="utf-8")
                    self.session = None
                    try:
                        self.serve_stream(None, wfile, read_line=reader.readline)
                    except (ConnectionResetError, BrokenPipeError):
                        pass
                served += 1


class _SocketLineReader:
    """Line reader with an inactivity timeout; buffered file objects cannot
    resume after a socket timeout, so buffering is done here."""

    def __init__(self, conn: socket.socket, timeout_s: float | None):
        self.conn = conn
        self.timeout_s = timeout_s
        self.buf = b""

    def readline(self) -> str:
        import select

        while b"\n" not in self.buf:
            if self.timeout_s is not None:
                ready, _, _ = select.select([self.conn], [], [], self.timeout_s)
                if not ready:
                    raise TimeoutError("no client data within the timeout")
            chunk = self.conn.recv(65536)
            if not chunk:
                line, self.buf = self.buf, b""
                return line.decode("utf-8")
            self.buf += chunk
        line, _, self.buf = self.buf.partition(b"\n")
        return line.decode("utf-8") + "\n"


def serve(
    cfg: ScenarioConfig,
    traj: TrajectorySet,
    endpoint: str = "stdio",
    port: int = 0,
    power_params: PowerSolverParams | None = None,
    seed_base: int | None = None,
    max_sessions: int | None = None,
    ready_callback=None,
    timeout_s: float | None = None,
) -> None:
    server = BridgeServer(cfg, traj, power_params, seed_base)
    if endpoint == "stdio":
        server.serve_stdio()
    elif endpoint == "tcp":
        server.serve_tcp(
            port, max_sessions=max_sessions, ready_callback=ready_callback, timeout_s=timeout_s
        )
    else:
        raise ValueError(f"endpoint must be 'stdio' or 'tcp', got {endpoint!r}")
