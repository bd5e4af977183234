"""Event-driven N-particle move-to-front simulator.

Particles sit in a queue of ranks 1..N. Particle i jumps to rank 1 at the
events of a Poisson clock with rate w_i; every particle it overtakes is
pushed back by one rank. The engine processes events in (time, particle)
order with O(log N) work per jump; positions are decoded lazily at
snapshot time.

The hot loop lives in a compiled extension (``rankflow._engine``) with a
pure-Python twin (``rankflow._engine_py``) selected at import; set
``RANKFLOW_PURE_PYTHON=1`` to force the fallback. Both backends produce
bit-identical trajectories for equal seeds.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .limit import RegimeError
from .measures import InitialProfile, sample_rates_and_positions

DEFAULT_CAPACITY_FACTOR = 8

try:
    from . import _engine as _compiled

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - source checkout without build
    _compiled = None
    HAVE_COMPILED = False

from . import _engine_py as _pure


def default_backend() -> str:
    """Backend chosen at import: "compiled" unless unavailable or overridden
    by the RANKFLOW_PURE_PYTHON environment variable."""
    forced = os.environ.get("RANKFLOW_PURE_PYTHON", "").strip().lower()
    if forced in {"1", "true", "yes"}:
        return "python"
    return "compiled" if HAVE_COMPILED else "python"


def _engine_module(backend: str | None):
    name = default_backend() if backend is None else backend
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled engine not available; build the extension")
        return _compiled, name
    if name == "python":
        return _pure, name
    raise ValueError(f"unknown backend {name!r}")


def _apply(g: Callable, x: np.ndarray) -> np.ndarray:
    vals = np.asarray(g(x), dtype=float)
    return np.broadcast_to(vals, x.shape)


@dataclass(frozen=True)
class EmpiricalSnapshot:
    """Frozen per-particle table at one query time.

    ``y`` is the scaled position (rank - 1)/N, ``y0`` the scaled initial
    position, ``jumped`` the has-jumped-by-now flag.
    """

    t: float
    rates: np.ndarray
    y: np.ndarray
    y0: np.ndarray
    jumped: np.ndarray

    @property
    def n(self) -> int:
        return self.rates.size

    def boundary_fraction(self) -> float:
        return float(np.count_nonzero(self.jumped)) / self.n

    def statistic(self, g: Callable, y: float) -> float:
        """(1/N) sum of g(w_i) over particles at scaled position <= y."""
        vals = _apply(g, self.rates)
        return float(np.sum(vals, where=self.y <= y)) / self.n

    def initial_position_estimate(self, y: float) -> float:
        """Smallest initial position among particles beyond y.

        Only meaningful above the empirical boundary (the never-jumped
        region); queries at or below it raise :class:`RegimeError`.
        """
        if y <= self.boundary_fraction():
            raise RegimeError("query at or below the empirical boundary")
        mask = self.y > y
        if not mask.any():
            raise ValueError(f"no particle beyond position {y}")
        return float(self.y0[mask].min())


class SystemState:
    """Live N-particle system; construct through :func:`init`."""

    def __init__(self, engine, profile, seed, rates, init_ranks, backend):
        self._engine = engine
        self.profile = profile
        self.seed = seed
        self.backend = backend
        self.n = rates.size
        self.rates = rates
        self.initial_ranks = init_ranks
        self.y0 = (init_ranks - 1) / self.n
        self.rates.flags.writeable = False
        self.y0.flags.writeable = False

    @property
    def t(self) -> float:
        return self._engine.t_now

    @property
    def total_events(self) -> int:
        return self._engine.total_events

    @property
    def event_log(self):
        return self._engine.event_log

    @property
    def first_jump_times(self) -> np.ndarray:
        return self._engine.first_jump_times

    @property
    def jump_counts(self) -> np.ndarray:
        return self._engine.jump_counts

    @property
    def jumped(self) -> np.ndarray:
        return self._engine.jump_counts > 0

    def advance_to(self, t: float) -> int:
        """Process all events up to and including time t; event count."""
        return self._engine.advance_to(t)

    def boundary(self) -> float:
        """Fraction of particles that have jumped at least once."""
        return self._engine.n_jumped / self.n

    def flow_position(self, y: float) -> float:
        """y plus the fraction of jumped particles that started at or beyond y."""
        if not 0.0 <= y < 1.0:
            raise ValueError("position must lie in [0, 1)")
        crossed = np.count_nonzero(self.jumped & (self.y0 >= y))
        return y + crossed / self.n

    def position_of(self, i: int) -> int:
        """Current rank of particle i, via the order-statistic index."""
        return int(self._engine.rank_of(int(i)))

    def positions(self) -> np.ndarray:
        """All current ranks (1..N), decoded in O(N log N)."""
        order = np.argsort(self._engine.slots)
        ranks = np.empty(self.n, dtype=np.int64)
        ranks[order] = np.arange(1, self.n + 1)
        return ranks

    def snapshot(self) -> EmpiricalSnapshot:
        y = (self.positions() - 1) / self.n
        y.flags.writeable = False
        jumped = self.jumped
        jumped.flags.writeable = False
        return EmpiricalSnapshot(
            t=self.t, rates=self.rates, y=y, y0=self.y0, jumped=jumped
        )

    def initial_position_estimate(self, y: float) -> float:
        return self.snapshot().initial_position_estimate(y)


def _prepare(profile, n, seed, initial_order=None, clock_seed=None):
    """Shared deterministic setup: rates, initial ranks, first event times.

    The returned generator has consumed exactly the sampling draws; engines
    continue the same stream for renewals, which is what makes the fast and
    reference simulators event-for-event identical under one seed.

    A separate ``clock_seed`` decouples the jump clocks from the sampling
    stream, so replicas can share one sampled configuration while drawing
    independent dynamics.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    slot_rates, ranks = sample_rates_and_positions(profile, n, rng)
    if initial_order is not None:
        order = np.asarray(initial_order, dtype=np.int64)
        if order.size != n or set(order.tolist()) != set(range(1, n + 1)):
            raise ValueError("initial_order must list each particle id 1..N once")
        ranks = np.empty(n, dtype=np.int64)
        ranks[order - 1] = np.arange(1, n + 1)
    rates = slot_rates[ranks - 1]
    if clock_seed is not None:
        rng = np.random.Generator(np.random.Philox(clock_seed))
    next_times = -np.log1p(-rng.random(n)) / rates
    return rates, ranks, next_times, rng


def init(
    profile: InitialProfile,
    n: int,
    seed: int,
    *,
    initial_order: Sequence[int] | None = None,
    event_override: Sequence[tuple[float, int]] | None = None,
    capacity_factor: int = DEFAULT_CAPACITY_FACTOR,
    log_events: bool = False,
    backend: str | None = None,
    clock_seed: int | None = None,
) -> SystemState:
    """Build a system of n particles from a profile, deterministically in seed.

    ``initial_order`` optionally lists particle ids (1-based) front to back.
    ``event_override`` replaces the exponential clocks with an explicit
    nondecreasing list of (time, particle id) jumps for scripted scenarios.
    ``clock_seed`` reseeds the jump clocks separately from the sampled
    configuration (replicas over a fixed configuration).
    """
    if n < 1:
        raise ValueError("need at least one particle")
    mod, name = _engine_module(backend)
    rates, ranks, next_times, rng = _prepare(profile, n, seed, initial_order, clock_seed)
    forced_t = forced_i = None
    if event_override is not None:
        forced_t = np.asarray([t for t, _ in event_override], dtype=float)
        forced_i = np.asarray([i - 1 for _, i in event_override], dtype=np.int64)
        if np.any(forced_t[1:] < forced_t[:-1]) or np.any(forced_t < 0.0):
            raise ValueError("event override times must be nondecreasing and >= 0")
        if np.any(forced_i < 0) or np.any(forced_i >= n):
            raise ValueError("event override particle ids must lie in 1..N")
        next_times = None
    engine = mod.Engine(
        rates, ranks, next_times, forced_t, forced_i, capacity_factor, rng, log_events
    )
    return SystemState(engine, profile, seed, rates, ranks, name)
