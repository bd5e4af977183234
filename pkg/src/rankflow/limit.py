"""Deterministic large-N limit of the ranking dynamics.

Everything here is closed-form or semi-closed-form arithmetic on a
:class:`~rankflow.measures.JumpRateLaw` marginal and an
:class:`~rankflow.measures.InitialProfile`:

* ``boundary(t)``          -- position separating ever-jumped from
  never-jumped mass at time t (strictly increasing, onto [0, 1)).
* ``boundary_time(y)``     -- its inverse: when the boundary reaches y.
* ``flow(y, t)``           -- position at time t of never-jumped mass that
  started at y.
* ``initial_position(y, t)`` -- spatial inverse of the flow.
* ``rate_distribution(y, t)`` -- the local jump-rate law, with distinct
  head (y below the boundary) and tail (y above) branches.
* ``statistic(g, y, t)``   -- integral of g against the limit measure over
  positions up to y.
* ``velocity(y, t)``       -- transport velocity of the limit measure.
* ``transport_residual``   -- finite-difference check that the limit
  measure solves the non-local mass-conservation equation with per-rate
  evaporation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import InitialProfile, JumpRateLaw


class RegimeError(ValueError):
    """Query on the wrong side of the moving boundary."""


class BoundaryError(ValueError):
    """Query exactly on the boundary curve, where the density jumps."""


@dataclass(frozen=True)
class RateDistribution:
    """Local jump-rate law at a space-time point, tagged with its regime."""

    regime: str  # "head" or "tail"
    law: JumpRateLaw


class LimitField:
    """Evaluator bundle for the deterministic limit of one model.

    Pure and immutable; safe to share across threads.
    """

    def __init__(
        self,
        profile: InitialProfile,
        marginal: JumpRateLaw | None = None,
        root_tol: float = 1e-12,
        laguerre_nodes: int = 64,
    ):
        self.profile = profile
        if marginal is None:
            marginal = profile.marginal()
        elif not profile.matches_marginal(marginal):
            raise ValueError("declared marginal does not match the profile average")
        self.marginal = marginal
        self.root_tol = float(root_tol)
        self.laguerre_nodes = int(laguerre_nodes)

    # -- boundary curve and its inverse -------------------------------------

    def boundary(self, t):
        """Fraction of mass that has jumped by time t: 1 - laplace(t)."""
        return 1.0 - self.marginal.laplace(t)

    def boundary_time(self, y: float) -> float:
        """Unique t with boundary(t) = y, for y in [0, 1).

        Bracketing by doubling, bisection to width 1e-3, then Newton with
        the exact derivative (the rate-weighted Laplace transform), clamped
        to the bracket. Converges to |boundary(t) - y| <= root_tol.
        """
        if not 0.0 <= y < 1.0:
            raise ValueError("boundary position must lie in [0, 1)")
        if y == 0.0:
            return 0.0
        lo, hi = 0.0, 1.0
        while self.boundary(hi) <= y:
            lo = hi
            hi *= 2.0
        while hi - lo > 1e-3:
            mid = 0.5 * (lo + hi)
            if self.boundary(mid) < y:
                lo = mid
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        for _ in range(100):
            f = self.boundary(t) - y
            if abs(f) <= self.root_tol:
                return t
            if f < 0.0:
                lo = t
            else:
                hi = t
            step = f / self.marginal.weighted_laplace(t)
            t -= step
            if not lo < t < hi:
                t = 0.5 * (lo + hi)
        raise RuntimeError(f"boundary_time failed to converge at y={y}")

    # -- flow and its spatial inverse ----------------------------------------

    def flow(self, y: float, t: float) -> float:
        """Position at time t of never-jumped mass started at y."""
        if not 0.0 <= y < 1.0:
            raise ValueError("position must lie in [0, 1)")
        return 1.0 - self.profile.tail_integral(y, t)

    def initial_position(self, y: float, t: float) -> float:
        """Starting position of never-jumped mass located at y at time t.

        Defined for boundary(t) <= y < 1; the flow is piecewise linear in
        the start position, so the inverse is exact stratum arithmetic.
        """
        if not 0.0 <= y < 1.0:
            raise ValueError("position must lie in [0, 1)")
        if y < self.boundary(t):
            raise RegimeError("position is in the head regime; no flow preimage")
        for s in self.profile.strata:
            if s.hi < 1.0 and y >= self.flow(s.hi, t):
                continue
            f_lo = self.flow(s.lo, t)
            z = s.lo + (y - f_lo) / s.law.laplace(t)
            return min(max(z, s.lo), np.nextafter(s.hi, 0.0))
        raise AssertionError("unreachable: the last stratum image reaches 1")

    # -- local rate distribution ---------------------------------------------

    def rate_distribution(
        self, y: float, t: float, side: str | None = None
    ) -> RateDistribution:
        """Limit jump-rate law at position y and time t.

        The law has two branches meeting discontinuously on the boundary
        curve. Exactly on the curve a side must be requested explicitly
        ("head" or "tail"); otherwise :class:`BoundaryError` is raised.
        """
        if not 0.0 <= y < 1.0:
            raise ValueError("position must lie in [0, 1)")
        if t < 0.0:
            raise ValueError("time must be nonnegative")
        yc = self.boundary(t)
        if side is None:
            if y == yc:
                raise BoundaryError(
                    "density is discontinuous on the boundary curve; pass side="
                )
            side = "head" if y < yc else "tail"
        if side == "head":
            if y > yc:
                raise RegimeError("head branch queried above the boundary")
            t0 = t if y == yc else self.boundary_time(y)
            return RateDistribution("head", self.marginal.size_biased_exp_tilt(t0))
        if side == "tail":
            if y < yc:
                raise RegimeError("tail branch queried below the boundary")
            yhat = self.initial_position(y, t)
            return RateDistribution("tail", self.profile.law_at(yhat).exp_tilt(t))
        raise ValueError(f"unknown side {side!r}")

    # -- integrated statistics -----------------------------------------------

    def statistic(self, g: Callable, y: float, t: float) -> float:
        """Integral of g(w) against the limit measure over positions <= y.

        Head contribution in closed form through the inverse boundary time;
        above the boundary the tail is removed from the total marginal
        integral via stratum sums, so no quadrature in position is needed.
        """
        if not 0.0 < y < 1.0:
            raise ValueError("position must lie in (0, 1)")
        if t < 0.0:
            raise ValueError("time must be nonnegative")
        nodes = self.laguerre_nodes
        total = self.marginal.test_integral(g, 0.0, nodes=nodes)
        yc = self.boundary(t)
        if y <= yc:
            t0 = t if y == yc else self.boundary_time(y)
            return total - self.marginal.test_integral(g, t0, nodes=nodes)
        yhat = self.initial_position(y, t)
        return total - self.profile.test_integral_over(yhat, 1.0, g, t, nodes=nodes)

    # -- velocity --------------------------------------------------------------

    def velocity(self, y: float, t: float, side: str | None = None) -> float:
        """Transport velocity at (y, t): total evaporation rate beyond y.

        Head branch: boundary speed at the time the boundary was at y.
        Tail branch: flow speed of the never-jumped mass through y.
        """
        if not 0.0 <= y < 1.0:
            raise ValueError("position must lie in [0, 1)")
        if t < 0.0:
            raise ValueError("time must be nonnegative")
        yc = self.boundary(t)
        if side is None:
            if y == yc:
                raise BoundaryError(
                    "velocity branches meet at the boundary curve; pass side="
                )
            side = "head" if y < yc else "tail"
        if side == "head":
            if y > yc:
                raise RegimeError("head branch queried above the boundary")
            t0 = t if y == yc else self.boundary_time(y)
            return self.marginal.weighted_laplace(t0)
        if side == "tail":
            if y < yc:
                raise RegimeError("tail branch queried below the boundary")
            yhat = self.initial_position(y, t)
            return self.profile.tail_rate_integral(yhat, t)
        raise ValueError(f"unknown side {side!r}")

    # -- conservation-law residual ----------------------------------------------

    def atom_support(self) -> np.ndarray:
        """Sorted union of atom rates across the marginal and all strata."""
        rates: set[float] = set(self.marginal.atom_rates.tolist())
        for s in self.profile.strata:
            rates.update(s.law.atom_rates.tolist())
        return np.array(sorted(rates))

    def atom_weight_vector(self, y: float, t: float, support: np.ndarray) -> np.ndarray:
        """Rate-distribution weights at (y, t) mapped onto a support grid."""
        law = self.rate_distribution(y, t).law
        out = np.zeros(len(support))
        idx = np.searchsorted(support, law.atom_rates)
        out[idx] = law.atom_weights
        return out

    def transport_residual(self, y: float, t: float, h: float) -> float:
        """Max-over-rates residual of the mass-conservation equation.

        For atom-only models the limit measure is a weight vector p(y, t)
        over the atom rates; the residual of
        d/dt p_k + d/dy (v p_k) + w_k p_k = 0 is formed with central
        differences of step h and is O(h^2) away from the boundary curve.
        The five-point stencil must stay on one side of the curve (margin
        2h) and, in the tail regime, inside one stratum preimage.
        """
        if h <= 0.0:
            raise ValueError("step must be positive")
        if t - h < 0.0:
            raise ValueError("time stencil leaves t >= 0")
        if y - h < 0.0 or y + h >= 1.0:
            raise ValueError("position stencil leaves [0, 1)")
        if not self.marginal.is_atomic or any(
            not s.law.is_atomic for s in self.profile.strata
        ):
            raise ValueError("residual check requires atom-only laws")
        sides = set()
        for tt in (t - h, t, t + h):
            yc = self.boundary(tt)
            if abs(y - yc) <= 2.0 * h:
                raise BoundaryError("stencil too close to the boundary curve")
            sides.add(y < yc)
        if len(sides) > 1:
            raise BoundaryError("stencil straddles the boundary curve")
        if not sides.pop():  # tail: stencil must stay inside one stratum preimage
            strata = {
                self.profile.stratum_index(self.initial_position(yy, tt))
                for yy, tt in (
                    (y - h, t),
                    (y + h, t),
                    (y, t - h),
                    (y, t + h),
                )
            }
            if len(strata) > 1:
                raise ValueError("stencil crosses a stratum preimage")
        support = self.atom_support()
        p = lambda yy, tt: self.atom_weight_vector(yy, tt, support)
        dt_p = (p(y, t + h) - p(y, t - h)) / (2.0 * h)
        flux_hi = self.velocity(y + h, t) * p(y + h, t)
        flux_lo = self.velocity(y - h, t) * p(y - h, t)
        dy_flux = (flux_hi - flux_lo) / (2.0 * h)
        residual = dt_p + dy_flux + support * p(y, t)
        return float(np.max(np.abs(residual)))
