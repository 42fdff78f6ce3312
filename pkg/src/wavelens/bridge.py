"""Bridge client: drive external classifier processes as models.

The wire format is one JSON object per line. A connection is a serial
channel with one request in flight; request ids increase strictly.
Samples travel as base64-encoded little-endian float32.
"""

from __future__ import annotations

import base64
import json
import os
import select
import shlex
import socket
import subprocess
import threading
import time

import numpy as np

from .models import (
    BlackBoxModel,
    EnergyCounterModel,
    TemplateDetectorModel,
    validate_posteriors,
)
from .signal import AudioSignal, load_wav

DEFAULT_TIMEOUT = 30.0


class BridgeError(RuntimeError):
    """Transport or protocol failure while talking to a bridge server."""


class CmdTransport:
    """Child process speaking the line protocol on stdin/stdout."""

    def __init__(self, argv):
        try:
            self._proc = subprocess.Popen(
                list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise BridgeError("cannot start bridge command %r: %s" % (argv, exc))
        self._fd = self._proc.stdout.fileno()
        self._buffer = b""

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write((line + "\n").encode())
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise BridgeError("cannot write to bridge process: %s" % exc)

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = self._buffer[:newline]
                self._buffer = self._buffer[newline + 1 :]
                return line.decode()
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeError("bridge request timed out after %.1f s" % timeout)
            ready, _, _ = select.select([self._fd], [], [], remaining)
            if not ready:
                raise BridgeError("bridge request timed out after %.1f s" % timeout)
            chunk = os.read(self._fd, 65536)
            if not chunk:
                raise BridgeError("bridge process closed its output")
            self._buffer += chunk

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._proc.stdout.close()


class TcpTransport:
    """TCP connection speaking the same line protocol."""

    def __init__(self, address: str, connect_timeout: float = 10.0):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError("bridge TCP address must be host:port, got %r" % address)
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=connect_timeout)
        except OSError as exc:
            raise BridgeError("cannot connect to bridge at %s: %s" % (address, exc))
        self._buffer = b""

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode())
        except OSError as exc:
            raise BridgeError("cannot write to bridge socket: %s" % exc)

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = self._buffer[:newline]
                self._buffer = self._buffer[newline + 1 :]
                return line.decode()
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeError("bridge request timed out after %.1f s" % timeout)
            self._sock.settimeout(max(remaining, 1e-3))
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise BridgeError("bridge request timed out after %.1f s" % timeout)
            except OSError as exc:
                raise BridgeError("bridge socket failed: %s" % exc)
            if not chunk:
                raise BridgeError("bridge server closed the connection")
            self._buffer += chunk

    def close(self) -> None:
        self._sock.close()


class BridgeModel(BlackBoxModel):
    """Model living behind a bridge transport.

    The constructor performs the hello handshake and adopts the class
    list the server declares. evaluate() is serialized by a lock so a
    shared instance still honors the one-in-flight channel contract.
    """

    def __init__(self, transport, timeout: float = DEFAULT_TIMEOUT):
        self._transport = transport
        self._timeout = float(timeout)
        self._lock = threading.Lock()
        self._next_id = 1
        try:
            transport.send_line(json.dumps({"op": "hello"}))
            hello = self._read_frame()
            classes = hello.get("classes")
            if (
                not isinstance(classes, list)
                or not classes
                or not all(isinstance(c, str) for c in classes)
            ):
                raise BridgeError("bridge handshake returned no usable class list")
        except BaseException:
            transport.close()
            raise
        self.classes = tuple(classes)
        self.name = str(hello.get("name", "bridge"))

    def _read_frame(self) -> dict:
        line = self._transport.recv_line(self._timeout)
        try:
            frame = json.loads(line)
        except ValueError as exc:
            raise BridgeError("malformed bridge frame: %s" % exc)
        if not isinstance(frame, dict):
            raise BridgeError("bridge frame is not a JSON object")
        return frame

    def evaluate(self, signal: AudioSignal) -> dict[str, float]:
        payload = base64.b64encode(
            np.ascontiguousarray(signal.samples, dtype="<f4").tobytes()
        ).decode("ascii")
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            self._transport.send_line(
                json.dumps(
                    {
                        "id": request_id,
                        "op": "evaluate",
                        "sample_rate": signal.sample_rate,
                        "samples_b64": payload,
                    }
                )
            )
            frame = self._read_frame()
        if frame.get("id") != request_id:
            raise BridgeError(
                "response id %r does not match request id %d" % (frame.get("id"), request_id)
            )
        if "error" in frame:
            raise BridgeError("bridge server error: %s" % frame["error"])
        posteriors = frame.get("posteriors")
        if posteriors is None:
            raise BridgeError("bridge response carries neither posteriors nor error")
        try:
            validate_posteriors(posteriors, self.classes)
        except ValueError as exc:
            raise BridgeError(str(exc))
        return {str(c): float(p) for c, p in posteriors.items()}

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False


def model_from_spec(spec: str, timeout: float = DEFAULT_TIMEOUT) -> BlackBoxModel:
    """Build a model from its command-line spec.

    Recognized forms: ``builtin:energy-counter``,
    ``builtin:template:<wav path>``, ``bridge:cmd:<command line>``,
    ``bridge:tcp:<host:port>``.
    """
    if spec == "builtin:energy-counter":
        return EnergyCounterModel()
    if spec.startswith("builtin:template:"):
        path = spec[len("builtin:template:") :]
        if not path:
            raise ValueError("builtin:template needs a WAV path")
        return TemplateDetectorModel(load_wav(path))
    if spec.startswith("bridge:cmd:"):
        argv = shlex.split(spec[len("bridge:cmd:") :])
        if not argv:
            raise ValueError("bridge:cmd needs a command line")
        return BridgeModel(CmdTransport(argv), timeout=timeout)
    if spec.startswith("bridge:tcp:"):
        return BridgeModel(TcpTransport(spec[len("bridge:tcp:") :]), timeout=timeout)
    raise ValueError("unknown model spec %r" % (spec,))
