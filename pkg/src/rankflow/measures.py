"""Jump-rate laws and initial profiles.

A :class:`JumpRateLaw` is a probability distribution over jump rates w > 0,
represented as a mixture of point masses and Gamma components so that the
exponential-moment integrals used everywhere downstream (Laplace transform,
its derivative, exponentially damped test-function integrals) have closed or
semi-closed forms.

An :class:`InitialProfile` assigns a jump-rate law to each scaled position
y in [0, 1) through an ordered list of strata (intervals with a law each);
the single-stratum case is the factorized profile where the law does not
depend on the position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, roots_genlaguerre

WEIGHT_TOL = 1e-12

DEFAULT_LAGUERRE_NODES = 64


@lru_cache(maxsize=None)
def _laguerre_rule(shape: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    # Nodes/weights for weight x^(shape-1) e^(-x), normalized to total mass 1.
    x, w = roots_genlaguerre(nodes, shape - 1.0)
    return x, w / math.exp(gammaln(shape))


def _apply(g: Callable, x: np.ndarray) -> np.ndarray:
    vals = np.asarray(g(x), dtype=float)
    return np.broadcast_to(vals, x.shape)


@dataclass(frozen=True)
class GammaComponent:
    """Gamma(shape, rate) mixture component carrying mixture weight."""

    shape: float
    rate: float
    weight: float


class JumpRateLaw:
    """Mixture of atoms (w_k, p_k) and Gamma(shape, rate) components.

    Weights must sum to one, all atom rates must be strictly positive, and
    the mean is finite by construction, so every instance satisfies the
    standing assumptions of the limit formulas (no mass at rate zero,
    integrable rates).
    """

    def __init__(
        self,
        atoms: Sequence[tuple[float, float]] = (),
        gammas: Sequence[GammaComponent] = (),
    ):
        rates = np.asarray([w for w, _ in atoms], dtype=float)
        weights = np.asarray([p for _, p in atoms], dtype=float)
        if rates.size and np.any(rates <= 0.0):
            raise ValueError("atom rates must be strictly positive")
        if (weights.size and np.any(weights < 0.0)) or any(
            c.weight < 0.0 for c in gammas
        ):
            raise ValueError("mixture weights must be nonnegative")
        for c in gammas:
            if c.shape <= 0.0 or c.rate <= 0.0:
                raise ValueError("Gamma shape and rate must be positive")
        total = float(weights.sum()) + sum(c.weight for c in gammas)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        if rates.size == 0 and not gammas:
            raise ValueError("law needs at least one component")
        order = np.argsort(rates, kind="stable")
        self.atom_rates = rates[order]
        self.atom_weights = weights[order]
        self.atom_rates.flags.writeable = False
        self.atom_weights.flags.writeable = False
        self._atom_rate_list = self.atom_rates.tolist()
        self._atom_weight_list = self.atom_weights.tolist()
        self.gammas = tuple(gammas)

    # -- constructors -----------------------------------------------------

    @classmethod
    def delta(cls, rate: float) -> "JumpRateLaw":
        """Point mass at a single rate."""
        return cls(atoms=[(rate, 1.0)])

    @classmethod
    def from_atoms(cls, pairs: Sequence[tuple[float, float]]) -> "JumpRateLaw":
        return cls(atoms=pairs)

    @classmethod
    def gamma(cls, shape: float, rate: float) -> "JumpRateLaw":
        return cls(gammas=[GammaComponent(shape, rate, 1.0)])

    @classmethod
    def mixture(cls, parts: Sequence[tuple[float, "JumpRateLaw"]]) -> "JumpRateLaw":
        """Weighted mixture of laws; weights must sum to one."""
        atoms = []
        gammas = []
        for weight, law in parts:
            for w, p in zip(law.atom_rates, law.atom_weights):
                atoms.append((float(w), weight * float(p)))
            for c in law.gammas:
                gammas.append(GammaComponent(c.shape, c.rate, weight * c.weight))
        return cls(atoms=_merge_atoms(atoms), gammas=_merge_gammas(gammas))

    # -- basic structure ---------------------------------------------------

    @property
    def is_atomic(self) -> bool:
        return not self.gammas

    def mean(self) -> float:
        return float(self.weighted_laplace(0.0))

    def __repr__(self) -> str:
        parts = [f"({w:g}, {p:g})" for w, p in zip(self.atom_rates, self.atom_weights)]
        parts += [f"Gamma({c.shape:g},{c.rate:g})*{c.weight:g}" for c in self.gammas]
        return f"JumpRateLaw[{', '.join(parts)}]"

    # -- exponential moments ----------------------------------------------

    def laplace(self, t):
        """Integral of e^(-w t) against the law; in (0, 1] for t >= 0."""
        if np.ndim(t) == 0:  # scalar fast path; root finders hammer this
            t = float(t)
            if t < 0.0:
                raise ValueError("time must be nonnegative")
            out = sum(
                p * math.exp(-w * t)
                for w, p in zip(self._atom_rate_list, self._atom_weight_list)
            )
            return out + sum(
                c.weight * (c.rate / (c.rate + t)) ** c.shape for c in self.gammas
            )
        t = _check_time(t)
        out = np.zeros_like(t, dtype=float)
        if self.atom_rates.size:
            out += np.exp(-np.multiply.outer(t, self.atom_rates)) @ self.atom_weights
        for c in self.gammas:
            out += c.weight * (c.rate / (c.rate + t)) ** c.shape
        return out

    def weighted_laplace(self, t):
        """Integral of w e^(-w t) against the law; minus the Laplace derivative."""
        if np.ndim(t) == 0:
            t = float(t)
            if t < 0.0:
                raise ValueError("time must be nonnegative")
            out = sum(
                p * w * math.exp(-w * t)
                for w, p in zip(self._atom_rate_list, self._atom_weight_list)
            )
            return out + sum(
                c.weight * (c.shape / c.rate) * (c.rate / (c.rate + t)) ** (c.shape + 1.0)
                for c in self.gammas
            )
        t = _check_time(t)
        out = np.zeros_like(t, dtype=float)
        if self.atom_rates.size:
            damp = np.exp(-np.multiply.outer(t, self.atom_rates))
            out += damp @ (self.atom_weights * self.atom_rates)
        for c in self.gammas:
            out += (
                c.weight
                * (c.shape / c.rate)
                * (c.rate / (c.rate + t)) ** (c.shape + 1.0)
            )
        return out

    def test_integral(
        self, g: Callable, t: float, nodes: int = DEFAULT_LAGUERRE_NODES
    ) -> float:
        """Integral of g(w) e^(-w t) against the law.

        Exact sum over atoms; generalized Gauss-Laguerre quadrature with the
        given node count for Gamma components. g must accept numpy arrays.
        """
        t = float(_check_time(t))
        total = 0.0
        if self.atom_rates.size:
            vals = _apply(g, self.atom_rates)
            total += float(
                np.sum(self.atom_weights * vals * np.exp(-self.atom_rates * t))
            )
        for c in self.gammas:
            x, wts = _laguerre_rule(c.shape, nodes)
            scale = c.rate + t
            total += (
                c.weight
                * (c.rate / scale) ** c.shape
                * float(np.sum(wts * _apply(g, x / scale)))
            )
        return total

    # -- exponential tilts (limit-density reweightings) --------------------

    def exp_tilt(self, t: float) -> "JumpRateLaw":
        """Law reweighted by e^(-w t), renormalized.

        Atoms keep their rates with damped weights; Gamma(a, b) becomes
        Gamma(a, b + t).
        """
        t = float(_check_time(t))
        z = self.laplace(t)
        atoms = [
            (float(w), float(p) * math.exp(-float(w) * t) / z)
            for w, p in zip(self.atom_rates, self.atom_weights)
        ]
        gammas = [
            GammaComponent(
                c.shape,
                c.rate + t,
                c.weight * (c.rate / (c.rate + t)) ** c.shape / z,
            )
            for c in self.gammas
        ]
        return JumpRateLaw(atoms=atoms, gammas=gammas)

    def size_biased_exp_tilt(self, t: float) -> "JumpRateLaw":
        """Law reweighted by w e^(-w t), renormalized.

        Atoms keep their rates; Gamma(a, b) becomes Gamma(a + 1, b + t).
        """
        t = float(_check_time(t))
        z = self.weighted_laplace(t)
        atoms = [
            (float(w), float(p) * float(w) * math.exp(-float(w) * t) / z)
            for w, p in zip(self.atom_rates, self.atom_weights)
        ]
        gammas = [
            GammaComponent(
                c.shape + 1.0,
                c.rate + t,
                c.weight
                * (c.shape / c.rate)
                * (c.rate / (c.rate + t)) ** (c.shape + 1.0)
                / z,
            )
            for c in self.gammas
        ]
        return JumpRateLaw(atoms=atoms, gammas=gammas)

    # -- sampling -----------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw i.i.d. rates; a single atom is deterministic (no RNG use)."""
        if self.is_atomic and self.atom_rates.size == 1:
            return np.full(size, self.atom_rates[0])
        ncomp = self.atom_rates.size + len(self.gammas)
        weights = np.concatenate(
            [self.atom_weights, [c.weight for c in self.gammas]]
        )
        comp = rng.choice(ncomp, size=size, p=weights)
        out = np.empty(size, dtype=float)
        for k in range(self.atom_rates.size):
            out[comp == k] = self.atom_rates[k]
        for j, c in enumerate(self.gammas):
            mask = comp == self.atom_rates.size + j
            out[mask] = rng.gamma(c.shape, 1.0 / c.rate, size=int(mask.sum()))
        return out


def _merge_atoms(pairs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    acc: dict[float, float] = {}
    for w, p in pairs:
        acc[w] = acc.get(w, 0.0) + p
    return sorted(acc.items())


def _merge_gammas(comps: list[GammaComponent]) -> list[GammaComponent]:
    acc: dict[tuple[float, float], float] = {}
    for c in comps:
        key = (c.shape, c.rate)
        acc[key] = acc.get(key, 0.0) + c.weight
    return [GammaComponent(s, r, q) for (s, r), q in sorted(acc.items())]


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("time must be nonnegative")
    return t


@dataclass(frozen=True)
class Stratum:
    lo: float
    hi: float
    law: JumpRateLaw


class InitialProfile:
    """Piecewise-constant field y -> law on [0, 1), given as ordered strata.

    The strata must partition [0, 1) exactly: contiguous, ordered, first
    endpoint 0 and last endpoint 1.
    """

    def __init__(self, strata: Sequence[Stratum | tuple[float, float, JumpRateLaw]]):
        items = [s if isinstance(s, Stratum) else Stratum(*s) for s in strata]
        if not items:
            raise ValueError("profile needs at least one stratum")
        if items[0].lo != 0.0 or items[-1].hi != 1.0:
            raise ValueError("strata must cover [0, 1)")
        for a, b in zip(items, items[1:]):
            if a.hi != b.lo:
                raise ValueError("strata must be contiguous and ordered")
        for s in items:
            if not (0.0 <= s.lo < s.hi <= 1.0):
                raise ValueError(f"bad stratum interval [{s.lo}, {s.hi})")
        self.strata = tuple(items)
        self._los = np.array([s.lo for s in items])

    @classmethod
    def factorized(cls, law: JumpRateLaw) -> "InitialProfile":
        """Profile with the same law at every position."""
        return cls([Stratum(0.0, 1.0, law)])

    @property
    def is_factorized(self) -> bool:
        return len(self.strata) == 1

    def stratum_index(self, y: float) -> int:
        if not 0.0 <= y < 1.0:
            raise ValueError("position must lie in [0, 1)")
        return int(np.searchsorted(self._los, y, side="right")) - 1

    def law_at(self, y: float) -> JumpRateLaw:
        return self.strata[self.stratum_index(y)].law

    def marginal(self) -> JumpRateLaw:
        """Position-average of the strata laws (length-weighted mixture)."""
        return JumpRateLaw.mixture(
            [(s.hi - s.lo, s.law) for s in self.strata]
        )

    def matches_marginal(self, law: JumpRateLaw, tol: float = WEIGHT_TOL) -> bool:
        """Whether the declared marginal equals the strata average (atom
        weights and Gamma weights within tol, parameters within tol)."""
        mine = self.marginal()
        if mine.atom_rates.size != law.atom_rates.size or len(mine.gammas) != len(
            law.gammas
        ):
            return False
        if not np.allclose(mine.atom_rates, law.atom_rates, rtol=tol, atol=tol):
            return False
        if not np.allclose(mine.atom_weights, law.atom_weights, rtol=0.0, atol=tol):
            return False
        for a, b in zip(mine.gammas, law.gammas):
            if abs(a.shape - b.shape) > tol or abs(a.rate - b.rate) > tol:
                return False
            if abs(a.weight - b.weight) > tol:
                return False
        return True

    # -- integrals over position bands --------------------------------------

    def tail_integral(self, a: float, t) -> float:
        """Integral over z in [a, 1) of laplace(law at z, t)."""
        if not 0.0 <= a <= 1.0:
            raise ValueError("position must lie in [0, 1]")
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for s in self.strata:
            length = min(s.hi, 1.0) - max(a, s.lo)
            if length > 0.0:
                out += length * s.law.laplace(t)
        return out if out.ndim else float(out)

    def tail_rate_integral(self, a: float, t) -> float:
        """Integral over z in [a, 1) of weighted_laplace(law at z, t)."""
        if not 0.0 <= a <= 1.0:
            raise ValueError("position must lie in [0, 1]")
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for s in self.strata:
            length = min(s.hi, 1.0) - max(a, s.lo)
            if length > 0.0:
                out += length * s.law.weighted_laplace(t)
        return out if out.ndim else float(out)

    def test_integral_over(
        self,
        a: float,
        b: float,
        g: Callable,
        t: float,
        nodes: int = DEFAULT_LAGUERRE_NODES,
    ) -> float:
        """Integral over z in [a, b) of the damped test integral of g."""
        if not 0.0 <= a <= b <= 1.0:
            raise ValueError("need 0 <= a <= b <= 1")
        total = 0.0
        for s in self.strata:
            length = min(s.hi, b) - max(a, s.lo)
            if length > 0.0:
                total += length * s.law.test_integral(g, t, nodes=nodes)
        return total


def profile_tail_integral(profile: InitialProfile, a: float, t: float) -> float:
    return profile.tail_integral(a, t)


def sample_rates_and_positions(
    profile: InitialProfile, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Rates and initial ranking for an n-particle system.

    Particle i starts at rank i+1 (scaled position i/n) and draws its rate
    from the law of the stratum containing i/n. Returns (rates, ranks) with
    ranks the identity permutation 1..n.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    rates = np.empty(n, dtype=float)
    filled = 0
    for s in profile.strata:
        lo = math.ceil(s.lo * n - 1e-9)
        hi = math.ceil(s.hi * n - 1e-9)
        if hi > lo:
            rates[lo:hi] = s.law.sample(rng, hi - lo)
            filled += hi - lo
    if filled != n:
        raise RuntimeError("strata did not cover all slots")
    return rates, np.arange(1, n + 1, dtype=np.int64)
