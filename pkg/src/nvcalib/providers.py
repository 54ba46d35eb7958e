"""
Sweep acquisition backends.

Both backends expose the same three calls (``set_field``, ``acquire``,
``acquire_trace``) so the optimizer and the sensitivity pipeline do not
care whether they talk to the built-in simulator or to a lab controller.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .errors import ProviderError
from .physics import (BiasField, NoiseModel, NVAxes, SpectrumModel, Sweep, cw_spectrum,
                      lockin_spectrum, resonance_centers, synth_timetrace)

logger = logging.getLogger(__name__)

__all__ = [
    "SweepRequest",
    "ProviderDescriptor",
    "SimulatorProvider",
    "RemoteProvider",
    "provider_from_spec",
    "DEFAULT_ENBW",
]

DEFAULT_ENBW = 77.92


@dataclass(frozen=True)
class SweepRequest:
    f_start: float = 2.790e9
    f_stop: float = 2.950e9
    n_points: int = 1334
    field: BiasField | None = None
    mode: str = "cw"
    mod_depth: float | None = None
    three_tone: bool = False

    def __post_init__(self):
        if not self.f_start < self.f_stop:
            raise ValueError("f_start must be below f_stop")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise ValueError("n_points must be an integer >= 3")
        if self.mode not in protocol.MODES:
            raise ValueError(f"mode must be one of {protocol.MODES}, got {self.mode!r}")

    def grid(self) -> np.ndarray:
        return np.linspace(self.f_start, self.f_stop, int(self.n_points))

    def with_field(self, b: BiasField) -> "SweepRequest":
        return SweepRequest(self.f_start, self.f_stop, self.n_points, b, self.mode,
                            self.mod_depth, self.three_tone)

    def digest(self, field_t) -> bytes:
        payload = struct.pack("<3d", *field_t) + struct.pack(
            "<ddq?d?", self.f_start, self.f_stop, int(self.n_points), self.mode == "lockin",
            -1.0 if self.mod_depth is None else self.mod_depth, self.three_tone)
        return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class ProviderDescriptor:
    kind: str
    concurrency_safe: bool
    settle_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("simulator", "remote"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "simulator" and not self.concurrency_safe:
            raise ValueError("the simulator is always concurrency safe")


@dataclass
class SimulatorProvider:
    """In-process sweep source backed by the closed-form spectrum model.

    Per-point Gaussian noise has std ``noise.white_density * sqrt(enbw)``.
    The noise stream for a request is seeded from ``(seed, request digest)``,
    so acquisitions are reproducible and independent of call order.
    """

    model: SpectrumModel = field(default_factory=SpectrumModel)
    axes: NVAxes = field(default_factory=NVAxes.ideal)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    enbw: float = DEFAULT_ENBW
    lockin_gain: float = 1.0
    field_limit: float = 0.01

    def __post_init__(self):
        self._field = BiasField((0.0, 0.0, 0.0))
        self._lock = threading.Lock()

    @property
    def descriptor(self) -> ProviderDescriptor:
        return ProviderDescriptor("simulator", True, 0.0)

    @property
    def field(self) -> BiasField:
        return self._field

    def _check_range(self, b: BiasField) -> None:
        if math.hypot(*b.b) > self.field_limit:
            raise ProviderError("range", f"|b| = {math.hypot(*b.b):.4g} T exceeds "
                                         f"coil limit {self.field_limit} T")

    def set_field(self, b: BiasField) -> None:
        self._check_range(b)
        with self._lock:
            self._field = b

    def _rng(self, tag: bytes) -> np.random.Generator:
        words = np.frombuffer(tag[:16], dtype=np.uint32)
        return np.random.default_rng(np.random.SeedSequence([int(self.seed), *map(int, words)]))

    def acquire(self, req: SweepRequest) -> Sweep:
        b = req.field if req.field is not None else self._field
        self._check_range(b)
        freqs = req.grid()
        if req.mode == "cw":
            sweep = cw_spectrum(self.model, b, freqs, axes=self.axes)
        else:
            sweep = lockin_spectrum(self.model, b, freqs, mod_depth=req.mod_depth,
                                    three_tone=req.three_tone, axes=self.axes,
                                    gain=self.lockin_gain)
        std = self.noise.white_density * math.sqrt(self.enbw)
        if std > 0:
            rng = self._rng(req.digest(b.b))
            sweep.values = sweep.values + rng.normal(0.0, std, len(freqs))
        return sweep

    def on_resonance(self, carrier: float, b: BiasField | None = None) -> bool:
        """Whether ``carrier`` sits within one linewidth of a hyperfine line."""
        b = b if b is not None else self._field
        c = self.model.constants
        centers = resonance_centers(b, c, self.axes)
        lines = np.concatenate([centers + j * c.delta_hf for j in (-1, 0, 1)])
        return bool(np.min(np.abs(lines - carrier)) <= self.model.linewidth)

    def acquire_trace(self, fs: float, n_samples: int, carrier: float,
                      laser: bool = True, record: int = 0) -> np.ndarray:
        """Lock-in output record at a fixed carrier frequency.

        Mains pickup only appears when the carrier is on resonance (the
        sensor is then magnetically sensitive); with the laser off only the
        electronic floor remains.  ``record`` selects an independent noise
        realization for otherwise identical requests.
        """
        noise = self.noise
        if not laser:
            noise = NoiseModel(0.0, (), noise.electronic_floor)
        elif not self.on_resonance(carrier):
            noise = noise.without_mains()
        tag = hashlib.sha256(struct.pack("<3d?q3d", fs, float(n_samples), carrier, laser,
                                         int(record), *self._field.b)).digest()
        return synth_timetrace(0.0, None, noise, fs, n_samples / fs, seed=self._rng(tag))


class RemoteProvider:
    """Client for a lab controller speaking the line protocol over TCP.

    All commands are serialized; only one request is ever in flight.
    """

    def __init__(self, host: str, port: int, timeout: float = 10.0,
                 settle_time: float = 0.05):
        self.host = host
        self.port = int(port)
        self.timeout = timeout
        self.settle_time = settle_time
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._reader = None
        self._field: BiasField | None = None

    @property
    def descriptor(self) -> ProviderDescriptor:
        return ProviderDescriptor("remote", False, self.settle_time)

    @property
    def field(self) -> BiasField | None:
        return self._field

    def connect(self) -> None:
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise ProviderError("timeout", f"cannot reach {self.host}:{self.port}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="ascii", newline="\n")

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._reader.close()
                self._sock.close()
            finally:
                self._sock = None
                self._reader = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def _readline(self) -> str:
        try:
            line = self._reader.readline()
        except (socket.timeout, TimeoutError) as exc:
            self.close()
            raise ProviderError("timeout", "controller did not answer in time") from exc
        except OSError as exc:
            self.close()
            raise ProviderError("timeout", str(exc)) from exc
        if not line:
            self.close()
            raise ProviderError("timeout", "connection closed by controller")
        if not line.endswith("\n"):
            raise ProviderError("protocol", f"truncated line {line!r}")
        return line

    def _transact(self, msg) -> object:
        self.connect()
        try:
            self._sock.sendall(protocol.serialize(msg).encode("ascii"))
        except OSError as exc:
            self.close()
            raise ProviderError("timeout", str(exc)) from exc
        head = protocol.parse_response_header(self._readline())
        if isinstance(head, protocol.Err):
            raise ProviderError(head.code, head.message)
        if isinstance(head, int):
            return [protocol.parse_data_row(self._readline()) for _ in range(head)]
        return head

    def set_field(self, b: BiasField) -> None:
        with self._lock:
            self._set_field_locked(b)

    def _set_field_locked(self, b: BiasField) -> None:
        reply = self._transact(protocol.SetField(*b.b))
        if not isinstance(reply, protocol.Ok):
            raise ProviderError("protocol", "SETFIELD must be answered with OK")
        self._field = b
        if self.settle_time > 0:
            time.sleep(self.settle_time)

    def acquire(self, req: SweepRequest) -> Sweep:
        with self._lock:
            if req.field is not None:
                self._set_field_locked(req.field)
            rows = self._transact(protocol.SweepCommand(req.f_start, req.f_stop,
                                                        int(req.n_points), req.mode))
            if not isinstance(rows, list):
                raise ProviderError("protocol", "SWEEP must be answered with DATA")
        if len(rows) != req.n_points:
            raise ProviderError("protocol", f"expected {req.n_points} points, got {len(rows)}")
        data = np.array(rows, dtype=float)
        try:
            meta = {"mode": req.mode}
            if self._field is not None:
                meta["field_t"] = list(self._field.b)
            return Sweep(data[:, 0], data[:, 1], meta)
        except ValueError as exc:
            raise ProviderError("protocol", str(exc)) from exc

    def acquire_trace(self, fs: float, n_samples: int, carrier: float,
                      laser: bool = True, record: int = 0) -> np.ndarray:
        # hardware records are fresh on every call, so ``record`` is unused
        if not laser:
            raise ProviderError("range", "laser control is not part of the remote protocol")
        with self._lock:
            rows = self._transact(protocol.TraceCommand(fs, int(n_samples), carrier))
        if not isinstance(rows, list) or len(rows) != n_samples:
            raise ProviderError("protocol", f"expected {n_samples} trace samples")
        return np.array([v for _, v in rows], dtype=float)


def provider_from_spec(spec: str | None, simulator_factory=None, **remote_kwargs):
    """Build a provider from ``"simulator"`` or ``"remote:host:port"``.

    Falls back to the ``NVCALIB_PROVIDER`` environment variable and then to
    the simulator.
    """
    spec = spec or os.environ.get("NVCALIB_PROVIDER") or "simulator"
    if spec == "simulator":
        return simulator_factory() if simulator_factory else SimulatorProvider()
    if spec.startswith("remote:"):
        try:
            _, host, port = spec.split(":")
            return RemoteProvider(host, int(port), **remote_kwargs)
        except ValueError:
            raise ValueError(f"remote provider must look like remote:host:port, got {spec!r}") from None
    raise ValueError(f"unknown provider {spec!r}")
