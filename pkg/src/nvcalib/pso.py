"""
Particle swarm search for the compensation field that overlaps all NV
transitions.

The swarm moves in the (B_y, B_z) plane with B_x held at ``b_main_x``.  Each
particle evaluation acquires one sweep and scores it with a loss where
larger is better (by default the inverse central hyperfine linewidth).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .fitting import triplet_loss
from .physics import BiasField, Constants, Sweep
from .providers import SweepRequest

logger = logging.getLogger(__name__)

__all__ = [
    "PsoConfig",
    "Particle",
    "Swarm",
    "IterationRecord",
    "CalibrationResult",
    "init_swarm",
    "update_velocity",
    "update_position",
    "evaluate",
    "step",
    "check_convergence",
    "calibrate",
    "default_loss",
    "default_request",
]

MT = 1e-3


def _pair(v) -> tuple[float, float]:
    a = tuple(float(x) for x in v)
    if len(a) != 2:
        raise ValueError(f"expected a 2-vector, got {v!r}")
    return a


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyper-parameters.

    Bounds are in tesla (positions) and tesla per iteration (velocities).
    The default search box is +-0.1 mT around zero compensation with
    velocities up to half the box per iteration.  The overlap basin of the
    inverse-linewidth loss is only about 0.02 mT wide, and wider boxes
    contain spurious optima where orientation pairs shifted by one
    hyperfine spacing mimic a narrow central line.
    """

    n_particles: int = 10
    w: float = 1.0
    c_l: float = 2.0
    c_g: float = 2.0
    x_min: tuple[float, float] = (-0.1 * MT, -0.1 * MT)
    x_max: tuple[float, float] = (0.1 * MT, 0.1 * MT)
    v_min: tuple[float, float] = (-0.1 * MT, -0.1 * MT)
    v_max: tuple[float, float] = (0.1 * MT, 0.1 * MT)
    b_main_x: float = 2.12 * MT
    density_radius: float = 0.02 * MT
    density_fraction: float = 0.8
    max_iterations: int = 25
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("x_min", "x_max", "v_min", "v_max"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if not all(a < b for a, b in zip(self.x_min, self.x_max)):
            raise ValueError("x_min must be below x_max componentwise")
        if not all(a < b for a, b in zip(self.v_min, self.v_max)):
            raise ValueError("v_min must be below v_max componentwise")
        if int(self.n_particles) != self.n_particles or self.n_particles < 2:
            raise ValueError("n_particles must be an integer >= 2")
        if not 0.0 < self.density_fraction <= 1.0:
            raise ValueError("density_fraction must lie in (0, 1]")
        if not self.density_radius > 0:
            raise ValueError("density_radius must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ValueError("max_iterations must be a non-negative integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k in ("x_min", "x_max", "v_min", "v_max"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PsoConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(sorted(unknown)[0])
        return cls(**data)


@dataclass
class Particle:
    x: np.ndarray
    v: np.ndarray
    l_best_x: np.ndarray
    l_best_f: float = -math.inf


@dataclass
class IterationRecord:
    iteration: int
    positions: np.ndarray
    losses: np.ndarray
    g_best_x: np.ndarray
    g_best_f: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "positions_t": self.positions.tolist(),
            "losses": self.losses.tolist(),
            "g_best_x_t": self.g_best_x.tolist(),
            "g_best_f": self.g_best_f,
        }


@dataclass
class Swarm:
    particles: list[Particle]
    rng: np.random.Generator
    g_best_x: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))
    g_best_f: float = -math.inf
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    n_evaluations: int = 0

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.x for p in self.particles])


@dataclass
class CalibrationResult:
    best_field: BiasField
    best_loss: float
    converged: bool
    iterations: int
    n_evaluations: int
    history: list[IterationRecord]

    @property
    def best_compensation(self) -> tuple[float, float]:
        return self.best_field.b[1], self.best_field.b[2]

    @property
    def g_best_curve(self) -> list[float]:
        return [r.g_best_f for r in self.history]

    def to_dict(self) -> dict:
        return {
            "best_field_t": list(self.best_field.b),
            "best_loss": self.best_loss,
            "best_linewidth_hz": (1.0 / self.best_loss) if self.best_loss > 0 else None,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_evaluations": self.n_evaluations,
            "history": [r.to_dict() for r in self.history],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def history_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["iteration", "particle", "by_t", "bz_t", "loss", "g_best_loss"])
        for rec in self.history:
            for i, (pos, loss) in enumerate(zip(rec.positions, rec.losses)):
                wr.writerow([rec.iteration, i, repr(float(pos[0])), repr(float(pos[1])),
                             repr(float(loss)), repr(float(rec.g_best_f))])
        return buf.getvalue()


def init_swarm(cfg: PsoConfig) -> Swarm:
    """Uniform random positions and velocities inside the configured box."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = np.array(cfg.x_min), np.array(cfg.x_max)
    vlo, vhi = np.array(cfg.v_min), np.array(cfg.v_max)
    particles = []
    for _ in range(int(cfg.n_particles)):
        x = np.clip(rng.uniform(lo, hi), lo, hi)
        v = np.clip(rng.uniform(vlo, vhi), vlo, vhi)
        particles.append(Particle(x, v, x.copy()))
    return Swarm(particles, rng)


def update_velocity(p: Particle, g_best_x, cfg: PsoConfig, rng: np.random.Generator,
                    r_l: Sequence[float] | None = None,
                    r_g: Sequence[float] | None = None) -> np.ndarray:
    """Inertia plus stochastic pulls towards the local and global bests.

    ``r_l`` and ``r_g`` are the diagonal random factors; they are drawn from
    ``rng`` (local first) when not supplied.
    """
    r_l = rng.random(2) if r_l is None else np.asarray(r_l, dtype=float)
    r_g = rng.random(2) if r_g is None else np.asarray(r_g, dtype=float)
    g = np.asarray(g_best_x, dtype=float)
    v = cfg.w * p.v + cfg.c_l * r_l * (p.l_best_x - p.x) + cfg.c_g * r_g * (g - p.x)
    return np.clip(v, cfg.v_min, cfg.v_max)


def update_position(p: Particle, cfg: PsoConfig) -> tuple[np.ndarray, np.ndarray]:
    """Advance by the (already updated) velocity; walls absorb.

    Returns the new ``(x, v)``; a velocity component is zeroed wherever the
    position had to be clamped.
    """
    raw = p.x + p.v
    x = np.clip(raw, cfg.x_min, cfg.x_max)
    v = np.where(x != raw, 0.0, p.v)
    return x, v


def field_of(x, cfg: PsoConfig) -> BiasField:
    return BiasField((cfg.b_main_x, float(x[0]), float(x[1])))


def default_request(cfg: PsoConfig, half_width: float = 7.5e6, n_points: int = 301,
                    constants: Constants | None = None) -> SweepRequest:
    """Sweep window centred on the expected overlapped resonance."""
    c = constants or Constants()
    f0 = c.D + c.gamma_e * cfg.b_main_x * c.projection_factor
    return SweepRequest(f0 - half_width, f0 + half_width, n_points)


# a 5 % residual gate rejects interleaved-pair look-alikes that pass at 10 %
default_loss: Callable[[Sweep], float] = partial(triplet_loss, residual_tolerance=0.05,
                                                 multi_start=False)


def evaluate(swarm: Swarm, provider, loss_fn: Callable[[Sweep], float],
             cfg: PsoConfig, request: SweepRequest) -> np.ndarray:
    """Score every particle and fold the results into the local/global bests.

    All acquisitions finish before any state changes, so a provider error
    leaves the swarm untouched.
    """
    fields = [field_of(p.x, cfg) for p in swarm.particles]

    def one(b):
        return float(loss_fn(provider.acquire(request.with_field(b))))

    safe = getattr(getattr(provider, "descriptor", None), "concurrency_safe", False)
    if safe and cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            losses = list(pool.map(one, fields))
    else:
        losses = [one(b) for b in fields]
    losses = np.asarray(losses, dtype=float)
    if np.any(np.isnan(losses)):
        raise ValueError("loss function returned NaN")

    for p, f in zip(swarm.particles, losses):
        if f > p.l_best_f:
            p.l_best_f = f
            p.l_best_x = p.x.copy()
        if f > swarm.g_best_f:
            swarm.g_best_f = f
            swarm.g_best_x = p.x.copy()
    swarm.n_evaluations += len(losses)
    return losses


def _move(swarm: Swarm, cfg: PsoConfig) -> None:
    for p in swarm.particles:
        p.v = update_velocity(p, swarm.g_best_x, cfg, swarm.rng)
        p.x, p.v = update_position(p, cfg)


def step(swarm: Swarm, provider, loss_fn: Callable[[Sweep], float] | None,
         cfg: PsoConfig, request: SweepRequest | None = None, move: bool = True) -> Swarm:
    """One synchronous iteration: evaluate all, update bests, then move all."""
    loss_fn = loss_fn or default_loss
    request = request or default_request(cfg)
    positions = swarm.positions
    losses = evaluate(swarm, provider, loss_fn, cfg, request)
    swarm.history.append(IterationRecord(swarm.iteration, positions, losses,
                                         swarm.g_best_x.copy(), swarm.g_best_f))
    swarm.iteration += 1
    if move:
        _move(swarm, cfg)
    return swarm


def check_convergence(swarm: Swarm, cfg: PsoConfig) -> bool:
    """True when at least ``density_fraction`` of particles sit within
    ``density_radius`` of the global best."""
    if swarm.iteration == 0 or not np.all(np.isfinite(swarm.g_best_x)):
        return False
    d = np.linalg.norm(swarm.positions - swarm.g_best_x, axis=1)
    return int(np.count_nonzero(d <= cfg.density_radius)) >= cfg.density_fraction * len(d)


def calibrate(cfg: PsoConfig, provider, loss_fn: Callable[[Sweep], float] | None = None,
              request: SweepRequest | None = None) -> CalibrationResult:
    """Run the swarm until the density criterion holds or the budget ends.

    ``iterations`` counts evaluation passes.  With ``max_iterations == 0``
    a single pass is made without moving and the result is never converged.
    """
    loss_fn = loss_fn or default_loss
    request = request or default_request(cfg)
    swarm = init_swarm(cfg)
    converged = False
    if cfg.max_iterations == 0:
        step(swarm, provider, loss_fn, cfg, request, move=False)
    else:
        for _ in range(int(cfg.max_iterations)):
            step(swarm, provider, loss_fn, cfg, request)
            logger.debug("iteration %d: g_best %.4g at %s", swarm.iteration,
                         swarm.g_best_f, swarm.g_best_x)
            if check_convergence(swarm, cfg):
                converged = True
                break
    return CalibrationResult(field_of(swarm.g_best_x, cfg), swarm.g_best_f, converged,
                             swarm.iteration, swarm.n_evaluations, swarm.history)
