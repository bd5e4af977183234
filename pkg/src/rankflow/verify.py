"""Oracles and convergence studies for the simulator and the limit field.

Three kinds of checks live here:

* literal-definition oracles: a naive O(N)-per-jump reference simulator fed
  the identical event stream as the fast engine, and the closed-form
  conditional mean of a particle's rank before its first jump;
* empirical-vs-limit convergence: RMS-over-replicas of sup-over-grid
  deviations between simulated observables and their closed-form limits,
  with a log-log slope fit against particle count;
* reconstruction helpers: empirical CDF distance and quadrature recovery
  of the rate marginal from the limit density.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .limit import LimitField
from .measures import InitialProfile
from .simulator import _prepare, init

NAIVE_MAX_PARTICLES = 2000


def naive_reference(
    profile: InitialProfile,
    n: int,
    seed: int,
    checkpoints: Sequence[float],
    initial_order: Sequence[int] | None = None,
    event_override: Sequence[tuple[float, int]] | None = None,
) -> list[np.ndarray]:
    """Rank tables at each checkpoint from the literal-definition simulator.

    Keeps an explicit rank array and shifts every overtaken particle by one
    on each jump (O(N) per event). Consumes the event stream exactly like
    the fast engine under the same seed, so positions must agree bit for
    bit; intended as an independent oracle, not for production use.
    """
    if n > NAIVE_MAX_PARTICLES:
        raise ValueError(f"naive reference is O(N) per jump; N <= {NAIVE_MAX_PARTICLES}")
    rates, ranks, next_times, rng = _prepare(profile, n, seed, initial_order)
    inv = 1.0 / rates
    pos = ranks.copy()
    forced = None
    if event_override is not None:
        forced = [(float(t), int(i) - 1) for t, i in event_override]
        forced_at = 0
    heap = [(float(t), i) for i, t in enumerate(next_times)]
    heapq.heapify(heap)

    def jump(i: int) -> None:
        old = pos[i]
        pos[pos < old] += 1
        pos[i] = 1

    out = []
    for cp in checkpoints:
        if forced is None:
            while heap and heap[0][0] <= cp:
                tt, ii = heap[0]
                jump(ii)
                gap = -math.log1p(-rng.random())
                heapq.heapreplace(heap, (tt + gap * inv[ii], ii))
        else:
            while forced_at < len(forced) and forced[forced_at][0] <= cp:
                jump(forced[forced_at][1])
                forced_at += 1
        out.append(pos.copy())
    return out


def conditional_position_oracle(
    profile: InitialProfile, n: int, seed: int, i: int, t: float
) -> float:
    """Exact E[rank of particle i at t | particle i has not jumped].

    Before its first jump a particle is overtaken once by each initially
    later particle that has jumped, so the conditional mean is its start
    rank plus a sum of independent Bernoulli means.
    """
    rates, ranks, _, _ = _prepare(profile, n, seed)
    behind = ranks > ranks[i]
    return float(ranks[i] + np.sum(1.0 - np.exp(-rates[behind] * t)))


def conditional_position_spread(
    profile: InitialProfile, n: int, seed: int, i: int, t: float
) -> float:
    """Standard deviation matching :func:`conditional_position_oracle`."""
    rates, ranks, _, _ = _prepare(profile, n, seed)
    q = 1.0 - np.exp(-rates[ranks > ranks[i]] * t)
    return float(math.sqrt(np.sum(q * (1.0 - q))))


@dataclass
class ConditionalMeanCheck:
    particle: int
    t: float
    oracle: float
    simulated: float
    sigma: float
    kept: int
    ok: bool


def conditional_mean_battery(
    profile: InitialProfile,
    n: int,
    seed: int,
    pairs: Sequence[tuple[int, float]],
    replicas: int,
    band_sigmas: float = 3.0,
) -> list[ConditionalMeanCheck]:
    """Simulated conditional mean ranks against the closed-form oracle.

    Every replica shares the configuration sampled from ``seed`` (the one
    the oracle formula sees) and redraws only the jump clocks; each
    (particle, time) pair is conditioned on the particle not having jumped.
    """
    times = sorted({t for _, t in pairs})
    sums: dict[tuple[int, float], float] = {p: 0.0 for p in pairs}
    counts: dict[tuple[int, float], int] = {p: 0 for p in pairs}
    for r in range(replicas):
        state = init(profile, n, seed, clock_seed=seed ^ (r + 1))
        for t in times:
            state.advance_to(t)
            jumped = state.jumped
            for i, tp in pairs:
                if tp == t and not jumped[i]:
                    sums[(i, tp)] += state.position_of(i)
                    counts[(i, tp)] += 1
    out = []
    for i, t in pairs:
        kept = counts[(i, t)]
        mean = sums[(i, t)] / kept if kept else math.nan
        oracle = conditional_position_oracle(profile, n, seed, i, t)
        sigma = conditional_position_spread(profile, n, seed, i, t) / math.sqrt(
            max(kept, 1)
        )
        ok = kept > 0 and abs(mean - oracle) <= band_sigmas * sigma
        out.append(ConditionalMeanCheck(i, t, oracle, mean, sigma, kept, ok))
    return out


def initial_profile_discrepancy(
    profile: InitialProfile,
    n: int,
    seed: int,
    g: Callable,
    ys: Sequence[float],
) -> float:
    """Sup over ys of |empirical initial statistic - its profile integral|.

    Measures how well a sampled initial configuration satisfies the
    uniform-in-position convergence hypothesis for one test function.
    """
    state = init(profile, n, seed)
    vals = np.broadcast_to(
        np.asarray(g(state.rates), dtype=float), state.rates.shape
    )
    worst = 0.0
    for y in ys:
        emp = float(np.sum(vals, where=state.y0 <= y)) / n
        exact = profile.test_integral_over(0.0, min(y, 1.0), g, 0.0)
        # the profile integral over [0, y] vs indicator y0 <= y: the lattice
        # point at y contributes 1/n at most, inside the measured sup
        worst = max(worst, abs(emp - exact))
    return worst


def ks_distance(snapshot, field: LimitField | None, ys: Sequence[float]) -> float:
    """Max over ys of |empirical mass below y - limit mass below y|.

    The limit measure is uniform in position (mass below y equals y), so
    the field argument only exists to make that dependence explicit.
    """
    one = lambda w: np.ones_like(w)
    worst = 0.0
    for y in ys:
        limit = y if field is None else field.statistic(one, y, snapshot.t)
        worst = max(worst, abs(snapshot.statistic(one, y) - limit))
    return worst


def reconstruct_marginal(
    field: LimitField, t: float, panels: int = 10_000
) -> tuple[np.ndarray, np.ndarray]:
    """Composite-midpoint recovery of the rate marginal from the density.

    Integrates the per-rate weight vector of the limit density over
    position, splitting panels at the boundary curve and at the images of
    stratum edges where the integrand is non-smooth. Atom-only models.
    Returns (support rates, integrated weights); the weights should match
    the marginal's atom weights.
    """
    support = field.atom_support()
    breaks = {0.0, 1.0, field.boundary(t)}
    for s in field.profile.strata:
        img = field.flow(s.lo, t)
        if 0.0 < img < 1.0:
            breaks.add(img)
    pts = sorted(breaks)
    total = np.zeros(len(support))
    for a, b in zip(pts, pts[1:]):
        k = max(1, int(round(panels * (b - a))))
        mids = a + (np.arange(k) + 0.5) * (b - a) / k
        for y in mids:
            total += field.atom_weight_vector(float(y), t, support) * ((b - a) / k)
    return support, total


# -- convergence study ---------------------------------------------------------


@dataclass
class ObservableTrack:
    """RMS errors for one observable across system sizes."""

    name: str
    ns: list[int]
    rms: list[float]
    tolerances: list[float]
    within: list[bool]
    slope: float
    slope_band: tuple[float, float]

    @property
    def slope_ok(self) -> bool:
        return self.slope_band[0] <= self.slope <= self.slope_band[1]


@dataclass
class ConvergenceReport:
    model_id: str
    replicas: int
    grid_y: list[float]
    grid_t: list[float]
    tracks: list[ObservableTrack] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(
            all(t.within) and t.slope_ok for t in self.tracks
        )

    def csv_rows(self) -> list[str]:
        rows = ["observable,N,rms,tolerance,pass"]
        for tr in self.tracks:
            for n, rms, tol, ok in zip(tr.ns, tr.rms, tr.tolerances, tr.within):
                rows.append(f"{tr.name},{n},{rms!r},{tol!r},{ok}")
        return rows

    def summary(self) -> str:
        lines = [
            f"model {self.model_id}: {self.replicas} replicas, "
            f"{len(self.grid_y)}x{len(self.grid_t)} grid"
        ]
        for tr in self.tracks:
            flag = "pass" if all(tr.within) and tr.slope_ok else "FAIL"
            lines.append(
                f"  {tr.name:<12} slope {tr.slope:+.3f} in "
                f"[{tr.slope_band[0]:+.2f}, {tr.slope_band[1]:+.2f}]: {flag}"
            )
        return "\n".join(lines)


def _fit_slope(ns: Sequence[int], rms: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(rms), 1)[0])


DEFAULT_TEST_FUNCTIONS: dict[str, Callable] = {
    "stat[1]": lambda w: np.ones_like(w),
    "stat[w]": lambda w: w,
    "stat[exp(-w)]": lambda w: np.exp(-w),
}


UNIT_STATISTIC_SLOPE_BAND = (-1.1, -0.9)


def convergence_study(
    field: LimitField,
    profile: InitialProfile,
    ns: Sequence[int],
    replicas: int,
    grid_y: Sequence[float],
    grid_t: Sequence[float],
    seed: int = 0,
    gs: dict[str, Callable] | None = None,
    exclusion: float = 0.05,
    flow_points: Sequence[tuple[float, float]] = ((0.3, 0.5), (0.3, 1.0), (0.7, 0.5), (0.7, 1.0)),
    boundary_tol: float = 1.5,
    statistic_tol: float = 5.0,
    slope_band: tuple[float, float] = (-0.65, -0.35),
    model_id: str = "model",
) -> ConvergenceReport:
    """Empirical-vs-limit errors across system sizes, with slope fits.

    Per replica and observable the error is the sup over the declared grid
    (positions within ``exclusion`` of the moving boundary are skipped);
    per size it is the RMS over replicas. Tolerances: boundary_tol/sqrt(N)
    for the boundary observable, statistic_tol/sqrt(N) for statistics and
    flow trajectories. Replica r of any size uses seed^r.

    The unit test function is special: positions always form an exact
    lattice permutation, so its empirical mass below y is deterministic
    and off by at most 1/N. Its error therefore decays at rate N^-1, not
    the stochastic N^-1/2, and its slope is checked against
    ``UNIT_STATISTIC_SLOPE_BAND`` instead of ``slope_band``.
    """
    if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("need at least three increasing system sizes")
    if replicas < 1:
        raise ValueError("need at least one replica")
    if not grid_y or not grid_t:
        raise ValueError("empty observation grid")
    gs = DEFAULT_TEST_FUNCTIONS if gs is None else gs

    limit_boundary = {t: field.boundary(t) for t in grid_t}
    limit_stat = {
        (name, y, t): field.statistic(g, y, t)
        for name, g in gs.items()
        for t in grid_t
        for y in grid_y
        if abs(y - limit_boundary[t]) >= exclusion
    }
    limit_flow = {(y, t): field.flow(y, t) for y, t in flow_points}
    times = sorted(set(grid_t) | {t for _, t in flow_points})

    names = ["boundary", *gs.keys(), "flow"]
    sup: dict[str, np.ndarray] = {}
    report = ConvergenceReport(
        model_id=model_id,
        replicas=replicas,
        grid_y=list(grid_y),
        grid_t=list(grid_t),
    )
    rms: dict[str, list[float]] = {name: [] for name in names}
    for n in ns:
        for name in names:
            sup[name] = np.zeros(replicas)
        for r in range(replicas):
            state = init(profile, n, seed ^ r)
            for t in times:
                state.advance_to(t)
                if t in limit_boundary:
                    dev = abs(state.boundary() - limit_boundary[t])
                    sup["boundary"][r] = max(sup["boundary"][r], dev)
                    snap = state.snapshot()
                    for name, g in gs.items():
                        for y in grid_y:
                            key = (name, y, t)
                            if key not in limit_stat:
                                continue
                            dev = abs(snap.statistic(g, y) - limit_stat[key])
                            sup[name][r] = max(sup[name][r], dev)
                for (y, tf) in flow_points:
                    if tf == t:
                        dev = abs(state.flow_position(y) - limit_flow[(y, tf)])
                        sup["flow"][r] = max(sup["flow"][r], dev)
        for name in names:
            rms[name].append(float(np.sqrt(np.mean(sup[name] ** 2))))

    for name in names:
        coeff = boundary_tol if name == "boundary" else statistic_tol
        tols = [coeff / math.sqrt(n) for n in ns]
        band = UNIT_STATISTIC_SLOPE_BAND if name == "stat[1]" else slope_band
        report.tracks.append(
            ObservableTrack(
                name=name,
                ns=list(ns),
                rms=rms[name],
                tolerances=tols,
                within=[e <= tol for e, tol in zip(rms[name], tols)],
                slope=_fit_slope(ns, rms[name]),
                slope_band=band,
            )
        )
    return report
