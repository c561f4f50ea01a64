"""Client side of the environment bridge protocol (newline-delimited JSON
over a child process's stdio or a TCP socket)."""

from __future__ import annotations

import json
import socket
import subprocess
import sys
from dataclasses import dataclass

import numpy as np


class BridgeError(RuntimeError):
    pass


@dataclass
class StepResult:
    obs: np.ndarray  # (E, W)
    mask: np.ndarray  # (E, OBS_CAP) bool
    rewards: np.ndarray  # (E,)
    reward: float
    done: bool
    debug: dict
    metrics: dict | None


class BridgeClient:
    """Single-session, strictly request/response bridge client."""

    def __init__(self, argv: list[str] | None = None, host: str | None = None, port: int | None = None):
        self._proc = None
        self._sock = None
        if argv is not None:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
            )
            self._rfile = self._proc.stdout
            self._wfile = self._proc.stdin
        elif host is not None and port is not None:
            self._sock = socket.create_connection((host, port), timeout=60)
            self._rfile = self._sock.makefile("r", encoding="utf-8")
            self._wfile = self._sock.makefile("w", encoding="utf-8")
        else:
            raise ValueError("need either a child argv or a host/port")
        hello = self._read()
        if hello.get("kind") != "hello" or hello.get("version") != "1":
            raise BridgeError(f"unexpected handshake: {hello}")

    def _read(self) -> dict:
        line = self._rfile.readline()
        if not line:
            raise BridgeError("bridge closed the stream")
        return json.loads(line)

    def _request(self, msg: dict) -> dict:
        self._wfile.write(json.dumps(msg) + "\n")
        self._wfile.flush()
        reply = self._read()
        if reply.get("kind") == "error":
            raise BridgeError(reply.get("message", "unknown bridge error"))
        return reply

    def reset(self, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        msg = {"kind": "reset"}
        if seed is not None:
            msg["seed"] = int(seed)
        reply = self._request(msg)
        if reply["kind"] != "reset_ok":
            raise BridgeError(f"expected reset_ok, got {reply['kind']}")
        return np.asarray(reply["obs"], dtype=np.float64), np.asarray(reply["mask"], dtype=bool)

    def step(self, actions: np.ndarray) -> StepResult:
        reply = self._request({"kind": "step", "actions": np.asarray(actions).tolist()})
        if reply["kind"] != "step_ok":
            raise BridgeError(f"expected step_ok, got {reply['kind']}")
        return StepResult(
            obs=np.asarray(reply["obs"], dtype=np.float64),
            mask=np.asarray(reply["mask"], dtype=bool),
            rewards=np.asarray(reply["rewards"], dtype=np.float64),
            reward=float(reply["reward"]),
            done=bool(reply["done"]),
            debug=reply.get("debug", {}),
            metrics=reply.get("metrics"),
        )

    def close(self) -> None:
        try:
            self._wfile.write(json.dumps({"kind": "close"}) + "\n")
            self._wfile.flush()
        except (BrokenPipeError, ValueError, OSError):
            pass
        if self._proc is not None:
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def bridge_argv(config_path: str, vehicles: int, seed: int | None = None) -> list[str]:
    """Command line that serves the environment for one actor over stdio."""
    argv = [sys.executable, "-m", "vecsim.cli", "bridge", "--config", str(config_path), "--vehicles", str(vehicles)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return argv
