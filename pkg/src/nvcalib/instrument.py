"""
Loopback lab-controller emulator.

Serves the line protocol over TCP, backed by a ``SimulatorProvider``.  Used
as a test double for ``RemoteProvider`` and for dry runs of the CLI against
``remote:host:port`` without hardware.
"""

from __future__ import annotations

import logging
import socketserver
import threading

import numpy as np

from . import protocol
from .errors import ProviderError
from .physics import BiasField
from .providers import SimulatorProvider, SweepRequest

logger = logging.getLogger(__name__)

__all__ = ["InstrumentServer", "serve"]


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: InstrumentServer = self.server  # type: ignore[assignment]
        for raw in self.rfile:
            try:
                line = raw.decode("ascii")
                reply = server.dispatch(line)
            except UnicodeDecodeError:
                reply = protocol.Err("protocol", "non-ascii input")
            self.wfile.write(protocol.serialize(reply).encode("ascii"))
            self.wfile.flush()


class InstrumentServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server answering SETFIELD, SWEEP and TRACE.

    Parameters
    ----------
    provider : SimulatorProvider
        Backing model.  Its ``field_limit`` acts as the coil range.
    address : tuple
        Bind address; port 0 picks a free port (see ``.port``).
    lockin : dict, optional
        ``mod_depth`` and ``three_tone`` used for ``SWEEP ... lockin``.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, provider: SimulatorProvider | None = None,
                 address=("127.0.0.1", 0), lockin: dict | None = None):
        super().__init__(address, _Handler)
        self.provider = provider or SimulatorProvider()
        self.lockin = dict(lockin or {})
        self._lock = threading.Lock()
        self._n_traces = 0
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    def dispatch(self, line: str):
        try:
            req = protocol.parse_request(line)
        except ProviderError as exc:
            return protocol.Err("protocol", exc.message)
        try:
            with self._lock:
                return self._execute(req)
        except ProviderError as exc:
            return protocol.Err(exc.kind, exc.message)
        except ValueError as exc:
            return protocol.Err("range", str(exc))

    def _execute(self, req):
        if isinstance(req, protocol.SetField):
            self.provider.set_field(BiasField((req.bx, req.by, req.bz)))
            return protocol.Ok()
        if isinstance(req, protocol.SweepCommand):
            kw = self.lockin if req.mode == "lockin" else {}
            sweep = self.provider.acquire(SweepRequest(req.f_start, req.f_stop, req.n_points,
                                                       mode=req.mode, **kw))
            return protocol.Data(tuple(zip(sweep.freqs.tolist(), sweep.values.tolist())))
        # like hardware, every TRACE returns a fresh record
        trace = self.provider.acquire_trace(req.fs, req.n_samples, req.carrier,
                                            record=self._n_traces)
        self._n_traces += 1
        t = np.arange(req.n_samples) / req.fs
        return protocol.Data(tuple(zip(t.tolist(), trace.tolist())))

    def start(self) -> "InstrumentServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        logger.info("instrument emulator listening on %s:%d", *self.server_address)
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(provider: SimulatorProvider | None = None, host: str = "127.0.0.1",
          port: int = 0, lockin: dict | None = None) -> InstrumentServer:
    """Start an emulator in a background thread and return it."""
    return InstrumentServer(provider, (host, port), lockin).start()


def main(argv=None) -> None:
    import argparse

    from .presets import calibration_simulator

    parser = argparse.ArgumentParser(prog="python -m nvcalib.instrument",
                                     description="Serve the simulator over the line protocol.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=5025)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    server = InstrumentServer(calibration_simulator(args.seed), (args.host, args.port),
                              lockin={"three_tone": True})
    print(f"listening on {args.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


if __name__ == "__main__":
    main()
