"""
Line-oriented wire protocol spoken between the calibration host and a lab
controller.

Requests::

    SETFIELD <bx_t> <by_t> <bz_t>
    SWEEP <f_start_hz> <f_stop_hz> <n_points> <mode>
    TRACE <fs_hz> <n_samples> <carrier_hz>

Responses::

    OK
    DATA <n>            followed by n lines "<x> <y>"
    ERR <code> <message>

Numbers are written with ``repr(float)`` so that parsing and re-serializing
a message reproduces it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ProviderError

__all__ = [
    "SetField", "SweepCommand", "TraceCommand", "Ok", "Data", "Err",
    "parse_request", "parse_response_header", "parse_data_row", "parse_message",
    "serialize",
]

MODES = ("cw", "lockin")
ERROR_CODES = ProviderError.KINDS


def _num(x: float) -> str:
    return repr(float(x))


def _parse_float(tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ProviderError("protocol", f"not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise ProviderError("protocol", f"non-finite number: {tok!r}")
    return v


def _parse_int(tok: str) -> int:
    if not tok.isdigit():
        raise ProviderError("protocol", f"not a non-negative integer: {tok!r}")
    return int(tok)


@dataclass(frozen=True)
class SetField:
    bx: float
    by: float
    bz: float

    def line(self) -> str:
        return f"SETFIELD {_num(self.bx)} {_num(self.by)} {_num(self.bz)}\n"


@dataclass(frozen=True)
class SweepCommand:
    f_start: float
    f_stop: float
    n_points: int
    mode: str

    def line(self) -> str:
        return f"SWEEP {_num(self.f_start)} {_num(self.f_stop)} {int(self.n_points)} {self.mode}\n"


@dataclass(frozen=True)
class TraceCommand:
    fs: float
    n_samples: int
    carrier: float

    def line(self) -> str:
        return f"TRACE {_num(self.fs)} {int(self.n_samples)} {_num(self.carrier)}\n"


@dataclass(frozen=True)
class Ok:
    def line(self) -> str:
        return "OK\n"


@dataclass(frozen=True)
class Data:
    rows: tuple[tuple[float, float], ...]

    def line(self) -> str:
        body = "".join(f"{_num(a)} {_num(b)}\n" for a, b in self.rows)
        return f"DATA {len(self.rows)}\n" + body


@dataclass(frozen=True)
class Err:
    code: str
    message: str

    def line(self) -> str:
        return f"ERR {self.code} {self.message}\n"


def serialize(msg) -> str:
    return msg.line()


def parse_request(line: str):
    """Parse one request line (with or without its trailing newline)."""
    if line.endswith("\n"):
        line = line[:-1]
    parts = line.split(" ")
    cmd, args = parts[0], parts[1:]
    if cmd == "SETFIELD":
        if len(args) != 3:
            raise ProviderError("protocol", "SETFIELD takes 3 arguments")
        return SetField(*(_parse_float(a) for a in args))
    if cmd == "SWEEP":
        if len(args) != 4:
            raise ProviderError("protocol", "SWEEP takes 4 arguments")
        mode = args[3]
        if mode not in MODES:
            raise ProviderError("protocol", f"unknown sweep mode {mode!r}")
        return SweepCommand(_parse_float(args[0]), _parse_float(args[1]), _parse_int(args[2]), mode)
    if cmd == "TRACE":
        if len(args) != 3:
            raise ProviderError("protocol", "TRACE takes 3 arguments")
        return TraceCommand(_parse_float(args[0]), _parse_int(args[1]), _parse_float(args[2]))
    raise ProviderError("protocol", f"unknown command {cmd!r}")


def parse_response_header(line: str):
    """Parse the first line of a response.

    Returns ``Ok()``, ``Err(...)`` or the integer row count announced by a
    ``DATA`` header.
    """
    if line.endswith("\n"):
        line = line[:-1]
    if line == "OK":
        return Ok()
    if line.startswith("ERR "):
        parts = line.split(" ", 2)
        if len(parts) < 3 or parts[1] not in ERROR_CODES:
            raise ProviderError("protocol", f"malformed error response {line!r}")
        return Err(parts[1], parts[2])
    if line.startswith("DATA "):
        return _parse_int(line[5:])
    raise ProviderError("protocol", f"unexpected response {line!r}")


def parse_data_row(line: str) -> tuple[float, float]:
    if line.endswith("\n"):
        line = line[:-1]
    parts = line.split(" ")
    if len(parts) != 2:
        raise ProviderError("protocol", f"malformed data row {line!r}")
    return _parse_float(parts[0]), _parse_float(parts[1])


def parse_message(text: str):
    """Parse a complete message: a request line or a full response."""
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    if not lines:
        raise ProviderError("protocol", "empty message")
    head = lines[0]
    if head.split(" ", 1)[0] in ("SETFIELD", "SWEEP", "TRACE"):
        if len(lines) != 1:
            raise ProviderError("protocol", "request must be a single line")
        return parse_request(head)
    hdr = parse_response_header(head)
    if isinstance(hdr, int):
        if len(lines) - 1 != hdr:
            raise ProviderError("protocol", f"DATA announced {hdr} rows, got {len(lines) - 1}")
        return Data(tuple(parse_data_row(ln) for ln in lines[1:]))
    if len(lines) != 1:
        raise ProviderError("protocol", "trailing lines after response")
    return hdr
