"""Reference server for the audio-model bridge protocol.

Wire format, one JSON object per line:

    request   {"id": int, "op": "evaluate", "sample_rate": int,
               "samples_b64": str}
    response  {"id": int, "posteriors": {class: float}}
              or {"id": int, "error": str}
    handshake {"op": "hello"} -> {"classes": [...], "name": str}

Samples cross as base64-encoded little-endian float32. A connection is
a serial channel: requests are answered in arrival order, one in
flight. A scorer exception never terminates the loop; it becomes the
error response for that request id.

To serve your own model, write a scorer callable and hand it to
``serve``::

    def my_scorer(sample_rate, samples):
        # samples is a float32 numpy array in [-1, 1]
        # run your network here and return {class_name: probability}
        logits = my_network(samples, sample_rate)
        return dict(zip(MY_CLASSES, softmax(logits)))

    serve(my_scorer, MY_CLASSES, name="my-model")
"""

from __future__ import annotations

import base64
import io
import json
import math
import socket
import sys

import numpy as np

__version__ = "0.1.0"

EVENT_CLASSES = ("event", "background")
COUNT_CLASSES = tuple(str(i) for i in range(7))


def encode_samples(samples) -> str:
    """float sequence -> base64 of little-endian float32 bytes."""
    return base64.b64encode(np.asarray(samples, dtype="<f4").tobytes()).decode("ascii")


def decode_samples(text: str) -> np.ndarray:
    """Inverse of encode_samples; raises ValueError on bad payloads."""
    if not isinstance(text, str):
        raise ValueError("samples_b64 must be a string")
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    if len(raw) % 4 != 0:
        raise ValueError("payload length %d is not a multiple of 4" % len(raw))
    return np.frombuffer(raw, dtype="<f4")


def _band_frame_energies(samples, sample_rate, low_hz, high_hz, frame_seconds):
    """Mean-square energy per frame after a hard band-pass."""
    x = np.asarray(samples, dtype=np.float64)
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
    spectrum[(freqs < low_hz) | (freqs > high_hz)] = 0.0
    filtered = np.fft.irfft(spectrum, x.size)
    frame = max(1, int(round(frame_seconds * sample_rate)))
    count = filtered.size // frame
    if count == 0:
        return np.zeros(0)
    return np.mean(filtered[: count * frame].reshape(count, frame) ** 2, axis=1)


def band_event_detector(low_hz=40.0, high_hz=120.0, threshold=0.005, frame_seconds=0.01):
    """Dependency-free example scorer: does any frame carry band energy?

    Probability saturates toward 1 as the loudest frame's band energy
    exceeds the threshold; silence scores 0.
    """

    def scorer(sample_rate, samples):
        energies = _band_frame_energies(samples, sample_rate, low_hz, high_hz, frame_seconds)
        peak = float(energies.max()) if energies.size else 0.0
        p = 1.0 - math.exp(-peak / threshold)
        return {"event": p, "background": 1.0 - p}

    return scorer


def energy_count_scorer(
    low_hz=40.0,
    high_hz=120.0,
    threshold=0.02,
    release_threshold=0.01,
    frame_seconds=0.01,
    max_count=6,
    epsilon=0.01,
):
    """Onset-counting scorer: softened one-hot over counts 0..max_count.

    An onset starts a run when a band-passed frame energy rises above
    the threshold; the run persists until energy drops below the release
    threshold, so ripple between the two levels cannot split it.
    """

    classes = tuple(str(i) for i in range(max_count + 1))

    def scorer(sample_rate, samples):
        energies = _band_frame_energies(samples, sample_rate, low_hz, high_hz, frame_seconds)
        moves = np.where(energies > threshold, 1, np.where(energies < release_threshold, -1, 0))
        moves = moves[moves != 0]
        if moves.size == 0:
            count = 0
        else:
            count = int(np.count_nonzero((moves[1:] == 1) & (moves[:-1] == -1))) + int(moves[0] == 1)
        count = min(count, max_count)
        posteriors = {c: epsilon for c in classes}
        posteriors[str(count)] = 1.0 - max_count * epsilon
        return posteriors

    return scorer


def _validated_posteriors(result, classes):
    if not isinstance(result, dict) or not result:
        raise ValueError("scorer must return a non-empty dict")
    for key, value in result.items():
        if not isinstance(key, str):
            raise ValueError("scorer returned a non-string class %r" % (key,))
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError("posterior for %r is not a number" % key)
        value = float(value)
        if not math.isfinite(value) or not 0.0 <= value <= 1.0:
            raise ValueError("posterior for %r out of [0, 1]: %r" % (key, value))
    if set(result) != set(classes):
        raise ValueError(
            "scorer classes %r do not match declared %r" % (sorted(result), sorted(classes))
        )
    return {key: float(value) for key, value in result.items()}


def handle_line(line: str, scorer, classes, name: str):
    """One request line -> one response frame dict, or None to skip."""
    if not line.strip():
        return None
    try:
        frame = json.loads(line)
    except ValueError as exc:
        return {"id": None, "error": "malformed JSON: %s" % exc}
    if not isinstance(frame, dict):
        return {"id": None, "error": "frame is not a JSON object"}
    op = frame.get("op")
    if op == "hello":
        return {"classes": list(classes), "name": name}
    request_id = frame.get("id")
    if op != "evaluate":
        return {"id": request_id, "error": "unknown op %r" % (op,)}
    try:
        sample_rate = frame["sample_rate"]
        if not isinstance(sample_rate, int) or sample_rate < 1:
            raise ValueError("sample_rate must be a positive integer")
        samples = decode_samples(frame["samples_b64"])
    except KeyError as exc:
        return {"id": request_id, "error": "missing field %s" % exc}
    except ValueError as exc:
        return {"id": request_id, "error": str(exc)}
    try:
        posteriors = _validated_posteriors(scorer(sample_rate, samples), classes)
    except Exception as exc:
        return {"id": request_id, "error": "%s: %s" % (type(exc).__name__, exc)}
    return {"id": request_id, "posteriors": posteriors}


def serve(scorer, classes, *, name="wavebridge", reader=None, writer=None) -> None:
    """Answer requests line by line until EOF on the reader."""
    if reader is None:
        # replacement decoding keeps garbage bytes from killing the loop
        buffer = getattr(sys.stdin, "buffer", None)
        if buffer is not None:
            reader = io.TextIOWrapper(buffer, encoding="utf-8", errors="replace")
        else:
            reader = sys.stdin
    writer = sys.stdout if writer is None else writer
    for line in reader:
        response = handle_line(line, scorer, classes, name)
        if response is None:
            continue
        writer.write(json.dumps(response) + "\n")
        writer.flush()


def serve_tcp(scorer, classes, *, host, port, name="wavebridge", announce=None) -> None:
    """Serve connections sequentially on a TCP socket.

    The bound address is announced as "listening on host:port" so a
    parent process can read back an ephemeral port.
    """
    announce = sys.stderr if announce is None else announce
    listener = socket.create_server((host, port))
    bound_host, bound_port = listener.getsockname()[:2]
    announce.write("listening on %s:%d\n" % (bound_host, bound_port))
    announce.flush()
    try:
        while True:
            connection, _ = listener.accept()
            with connection:
                reader = connection.makefile("r", encoding="utf-8", errors="replace", newline="\n")
                writer = connection.makefile("w", encoding="utf-8", newline="\n")
                try:
                    serve(scorer, classes, name=name, reader=reader, writer=writer)
                except (OSError, ValueError):
                    pass  # client went away mid-frame; wait for the next one
                finally:
                    # the wrappers hold fd references; close them so the
                    # client sees EOF
                    for stream in (writer, reader):
                        try:
                            stream.close()
                        except OSError:
                            pass
    finally:
        listener.close()
