"""Jump measures, spectrally negative Lévy characteristics and path sampling.

A jump measure on (-inf, 0) is a finite list of atoms plus a finite list of
density components.  Every density component knows how to evaluate itself,
integrate a function against itself and draw samples from its restriction to
``z <= -cutoff``.  The algebra needed elsewhere (reflection through
``z -> log(1 - e^z)``, thinning by a weight function, restriction to an
interval) is closed over these components.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

LOG2 = math.log(2.0)
ATOM_TOL = 1e-12
QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-14
DEFAULT_CHUNK = 1.0


class ConfigurationError(ValueError):
    """Raised for inputs that cannot be simulated as requested."""


# ---------------------------------------------------------------------------
# the involution z -> log(1 - e^z)
# ---------------------------------------------------------------------------

def reflect_jump(z: float) -> float:
    """Return ``log(1 - e^z)`` for a negative jump ``z``.

    The map is an involution of (-inf, 0) with fixed point ``-log 2``.
    """
    if not z < 0:
        raise ValueError(f"jump must be strictly negative, got {z}")
    if z == -math.inf:
        return 0.0
    # log1p is accurate when e^z is small, log(-expm1) when z is near 0
    if z < -LOG2:
        return math.log1p(-math.exp(z))
    return math.log(-math.expm1(z))


def reflect(z):
    """Vectorised :func:`reflect_jump`; maps 0 <-> -inf at the ends."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z < -LOG2, np.log1p(-np.exp(z)), np.log(-np.expm1(z)))


def _reflect_endpoint(z: float) -> float:
    if z == 0.0:
        return -math.inf
    if z == -math.inf:
        return 0.0
    return reflect_jump(z)


def _quad(fn: Callable[[float], float], lo: float, hi: float, breakpoints=()) -> float:
    """Adaptive quadrature on (lo, hi), split at the given interior breakpoints."""
    if not lo < hi:
        return 0.0
    cuts = [lo] + sorted(b for b in breakpoints if lo < b < hi) + [hi]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(cuts[:-1], cuts[1:]):
            val, _ = integrate.quad(fn, a, b, epsrel=QUAD_EPSREL, epsabs=QUAD_EPSABS, limit=500)
            total += val
    return total


# ---------------------------------------------------------------------------
# density components
# ---------------------------------------------------------------------------

class DensityComponent:
    """Absolutely continuous part of a jump measure supported on (lower, upper).

    Subclasses provide ``pdf`` and ``sample``.  ``near_zero_index`` is the
    exponent beta when the density behaves like ``|z|^(-1-beta)`` at 0
    (0 means finite mass near 0); ``infinite_at_minus_inf`` flags components
    with infinite mass near -inf (only produced by reflection).
    """

    lower: float
    upper: float
    near_zero_index: float = 0.0
    infinite_at_minus_inf: bool = False

    def pdf(self, z):
        raise NotImplementedError

    def integrate(self, g: Callable[[float], float], lo: float = -math.inf, hi: float = 0.0) -> float:
        """Integral of ``g`` against this density over ``(lo, hi)``."""
        a, b = max(lo, self.lower), min(hi, self.upper)

        def integrand(z):
            d = float(self.pdf(z))
            return g(z) * d if d != 0.0 else 0.0

        return _quad(integrand, a, b, breakpoints=(-LOG2,))

    def mass(self, cutoff: float = 0.0) -> float:
        """Mass carried on ``z <= -cutoff``."""
        if self.infinite_at_minus_inf:
            return math.inf
        if cutoff <= 0.0 and self.near_zero_index > 0.0:
            return math.inf
        return self.integrate(lambda z: 1.0, hi=-cutoff)

    def sample(self, gen: np.random.Generator, n: int, cutoff: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def reflected(self) -> "DensityComponent":
        return ReflectedDensity(self)

    def to_json(self) -> dict:
        raise ConfigurationError(f"{type(self).__name__} has no JSON form")


@dataclass(frozen=True)
class UniformDensity(DensityComponent):
    lower: float
    upper: float
    total_mass: float

    def __post_init__(self):
        if not (-math.inf < self.lower < self.upper <= 0.0):
            raise ValueError(f"uniform support must satisfy -inf < lower < upper <= 0, got ({self.lower}, {self.upper})")
        if self.total_mass < 0:
            raise ValueError("mass must be non-negative")

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        h = self.total_mass / (self.upper - self.lower)
        return np.where((z > self.lower) & (z < self.upper), h, 0.0)

    def mass(self, cutoff: float = 0.0) -> float:
        hi = min(self.upper, -cutoff)
        if hi <= self.lower:
            return 0.0
        return self.total_mass * (hi - self.lower) / (self.upper - self.lower)

    def sample(self, gen, n, cutoff=0.0):
        hi = min(self.upper, -cutoff)
        return self.lower + (hi - self.lower) * gen.random(n)

    def to_json(self):
        return {"kind": "uniform", "lower": self.lower, "upper": self.upper, "mass": self.total_mass}


@dataclass(frozen=True)
class ExponentialDensity(DensityComponent):
    """Density proportional to ``exp(rate * z)`` on (lower, upper), total mass fixed."""

    rate: float
    total_mass: float
    lower: float = -math.inf
    upper: float = 0.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if not self.lower < self.upper <= 0.0:
            raise ValueError("need lower < upper <= 0")

    def _norm(self, hi: float) -> float:
        # integral of exp(rate z) over (lower, hi)
        lo_term = 0.0 if self.lower == -math.inf else math.exp(self.rate * self.lower)
        return (math.exp(self.rate * hi) - lo_term) / self.rate

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        val = self.total_mass * np.exp(self.rate * np.minimum(z, 0.0)) / self._norm(self.upper)
        return np.where((z > self.lower) & (z < self.upper), val, 0.0)

    def mass(self, cutoff: float = 0.0) -> float:
        hi = min(self.upper, -cutoff)
        if hi <= self.lower:
            return 0.0
        return self.total_mass * self._norm(hi) / self._norm(self.upper)

    def sample(self, gen, n, cutoff=0.0):
        hi = min(self.upper, -cutoff)
        lo_term = 0.0 if self.lower == -math.inf else math.exp(self.rate * (self.lower - hi))
        u = gen.random(n)
        return hi + np.log1p(-u * (1.0 - lo_term)) / self.rate

    def to_json(self):
        return {"kind": "exponential", "rate": self.rate, "mass": self.total_mass,
                "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class PowerDensity(DensityComponent):
    """Stable-like density ``weight * |z|^(-1-beta)`` on (lower, 0); infinite activity."""

    weight: float
    beta: float
    lower: float = -1.0
    upper: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not 0.0 < self.beta < 2.0:
            raise ValueError("beta must lie in (0, 2)")
        if not -math.inf < self.lower < 0.0:
            raise ValueError("power density needs a finite negative lower end")
        object.__setattr__(self, "near_zero_index", self.beta)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.weight * np.abs(z) ** (-1.0 - self.beta)
        return np.where((z > self.lower) & (z < 0.0), val, 0.0)

    def mass(self, cutoff: float = 0.0) -> float:
        if cutoff <= 0.0:
            return math.inf
        L = -self.lower
        if cutoff >= L:
            return 0.0
        return self.weight * (cutoff ** -self.beta - L ** -self.beta) / self.beta

    def sample(self, gen, n, cutoff=0.0):
        if cutoff <= 0.0:
            raise ConfigurationError("infinite-activity component needs a positive small_jump_cutoff")
        L = -self.lower
        a, b = cutoff ** -self.beta, L ** -self.beta
        u = gen.random(n)
        return -((a - u * (a - b)) ** (-1.0 / self.beta))

    def to_json(self):
        return {"kind": "power", "weight": self.weight, "beta": self.beta, "lower": self.lower}


def _mark_reflected(obj, base: DensityComponent):
    object.__setattr__(obj, "lower", _reflect_endpoint(base.upper))
    object.__setattr__(obj, "upper", _reflect_endpoint(base.lower))
    object.__setattr__(obj, "infinite_at_minus_inf", base.near_zero_index > 0.0)
    object.__setattr__(obj, "near_zero_index", 0.0 if not base.infinite_at_minus_inf else 1.0)


@dataclass(frozen=True)
class ReflectedDensity(DensityComponent):
    """Image of ``base`` under ``z -> log(1 - e^z)``."""

    base: DensityComponent
    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self):
        _mark_reflected(self, self.base)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z > self.lower) & (z < self.upper)
        zc = np.where(inside, z, -1.0)
        zb = reflect(zc)
        # |d zbar / dz| = e^z / (1 - e^z) = exp(z - zbar)
        val = self.base.pdf(zb) * np.exp(zc - zb)
        return np.where(inside, val, 0.0)

    def integrate(self, g, lo=-math.inf, hi=0.0):
        # change variables back to the base measure: exact mass bookkeeping
        def gb(z):
            w = reflect_jump(z) if z < 0 else -math.inf
            return g(w) if lo < w < hi else 0.0

        return self.base.integrate(gb)

    def mass(self, cutoff: float = 0.0) -> float:
        if cutoff <= 0.0:
            return self.base.mass()
        if self.infinite_at_minus_inf:
            return math.inf
        return self.integrate(lambda z: 1.0, hi=-cutoff)

    def sample(self, gen, n, cutoff=0.0):
        if self.infinite_at_minus_inf:
            raise ConfigurationError("reflected infinite-activity component is not samplable")
        if cutoff <= 0.0:
            return reflect(self.base.sample(gen, n))
        return _rejection(lambda k: reflect(self.base.sample(gen, k)), lambda z: z <= -cutoff, n)

    def reflected(self):
        return self.base

    def to_json(self):
        return {"kind": "reflected", "base": self.base.to_json()}


@dataclass(frozen=True)
class WeightedDensity(DensityComponent):
    """``weight(z) * base(dz)`` with ``0 <= weight <= 1``; sampled by rejection."""

    base: DensityComponent
    weight: Callable
    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self):
        lo, hi = self.base.lower, self.base.upper
        if isinstance(self.weight, Indicator):
            lo, hi = max(lo, self.weight.lo), min(hi, self.weight.hi)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        near0 = float(np.asarray(self.weight(np.array([-1e-12])))[0]) > 0.0
        far = float(np.asarray(self.weight(np.array([-1e6])))[0]) > 0.0
        object.__setattr__(self, "near_zero_index", self.base.near_zero_index if near0 else 0.0)
        object.__setattr__(self, "infinite_at_minus_inf", self.base.infinite_at_minus_inf and far)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return self.base.pdf(z) * np.asarray(self.weight(z), dtype=float)

    def integrate(self, g, lo=-math.inf, hi=0.0):
        if isinstance(self.weight, Indicator):
            # single points carry no density mass, so closedness is irrelevant here
            lo, hi = max(lo, self.weight.lo), min(hi, self.weight.hi)
            return self.base.integrate(g, lo, hi) if hi > lo else 0.0
        return self.base.integrate(lambda z: g(z) * float(np.asarray(self.weight(np.array([z])))[0]), lo, hi)

    def mass(self, cutoff: float = 0.0) -> float:
        if self.infinite_at_minus_inf or (cutoff <= 0.0 and self.near_zero_index > 0.0):
            return math.inf
        return self.integrate(lambda z: 1.0, hi=-cutoff)

    def sample(self, gen, n, cutoff=0.0):
        def draw(k):
            z = self.base.sample(gen, k, cutoff)
            keep = gen.random(k) < np.asarray(self.weight(z), dtype=float)
            return z[keep]

        return _rejection(draw, lambda z: np.ones(z.shape, dtype=bool), n)


@dataclass(frozen=True)
class Indicator:
    """Weight function ``1{lo <?> z <?> hi}`` with selectable closedness."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        left = z >= self.lo if self.lo_closed else z > self.lo
        right = z <= self.hi if self.hi_closed else z < self.hi
        return (left & right).astype(float)


def _rejection(draw, accept, n: int, max_rounds: int = 10_000) -> np.ndarray:
    out: list[np.ndarray] = []
    have = 0
    batch = max(n, 8)
    for _ in range(max_rounds):
        if have >= n:
            break
        z = np.asarray(draw(batch), dtype=float)
        z = z[accept(z)]
        out.append(z)
        have += z.size
    else:
        raise ConfigurationError("rejection sampler failed to produce enough samples")
    return np.concatenate(out)[:n] if out else np.empty(0)


def density_from_json(doc: dict) -> DensityComponent:
    kind = doc.get("kind")
    if kind == "uniform":
        return UniformDensity(float(doc["lower"]), float(doc["upper"]), float(doc["mass"]))
    if kind == "exponential":
        return ExponentialDensity(float(doc["rate"]), float(doc["mass"]),
                                  float(doc.get("lower", -math.inf)), float(doc.get("upper", 0.0)))
    if kind == "power":
        return PowerDensity(float(doc["weight"]), float(doc["beta"]), float(doc.get("lower", -1.0)))
    if kind == "reflected":
        return ReflectedDensity(density_from_json(doc["base"]))
    raise ConfigurationError(f"unknown density kind {kind!r}")


# ---------------------------------------------------------------------------
# jump measures
# ---------------------------------------------------------------------------

def merge_atoms(atoms, tol: float = ATOM_TOL) -> tuple[tuple[float, float], ...]:
    """Sort atoms by location and add the masses of atoms closer than ``tol``."""
    items = sorted((float(z), float(m)) for z, m in atoms if m != 0.0)
    merged: list[list[float]] = []
    for z, m in items:
        if merged and abs(z - merged[-1][0]) <= tol:
            merged[-1][1] += m
        else:
            merged.append([z, m])
    return tuple((z, m) for z, m in merged if m > 0.0)


@dataclass(frozen=True)
class JumpMeasure:
    """A measure on (-inf, 0): atoms ``(z, mass)`` plus density components.

    Jumps in ``(-small_jump_cutoff, 0)`` are not sampled individually; the
    sampler replaces them by a compensating drift.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    densities: tuple[DensityComponent, ...] = ()
    small_jump_cutoff: float = 0.0

    def __post_init__(self):
        for z, m in self.atoms:
            if not z < 0:
                raise ValueError(f"atom location must be negative, got {z}")
            if not m > 0:
                raise ValueError(f"atom mass must be positive, got {m}")
        for d in self.densities:
            if d.upper > 0.0:
                raise ValueError("density support must lie in (-inf, 0)")
        if self.small_jump_cutoff < 0:
            raise ValueError("small_jump_cutoff must be >= 0")
        object.__setattr__(self, "atoms", merge_atoms(self.atoms))
        object.__setattr__(self, "densities", tuple(self.densities))

    # -- construction helpers -------------------------------------------------
    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]], cutoff: float = 0.0) -> "JumpMeasure":
        return cls(tuple((float(z), float(m)) for z, m in atoms), (), cutoff)

    @property
    def is_empty(self) -> bool:
        return not self.atoms and not self.densities

    @property
    def atom_locations(self) -> np.ndarray:
        return np.array([z for z, _ in self.atoms], dtype=float)

    @property
    def atom_masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms], dtype=float)

    def __add__(self, other: "JumpMeasure") -> "JumpMeasure":
        return JumpMeasure(self.atoms + other.atoms, self.densities + other.densities,
                           max(self.small_jump_cutoff, other.small_jump_cutoff))

    def scaled(self, weight: Callable) -> "JumpMeasure":
        """The measure ``weight(z) * self(dz)`` for a [0, 1]-valued weight."""
        atoms = []
        for z, m in self.atoms:
            w = float(np.asarray(weight(np.array([z])))[0])
            if w > 0:
                atoms.append((z, w * m))
        dens = tuple(WeightedDensity(d, weight) for d in self.densities)
        return JumpMeasure(tuple(atoms), dens, self.small_jump_cutoff)

    def restricted(self, lo: float, hi: float, lo_closed: bool = False, hi_closed: bool = False) -> "JumpMeasure":
        ind = Indicator(lo, hi, lo_closed, hi_closed)
        atoms = tuple((z, m) for z, m in self.atoms if ind(z) > 0)
        dens = []
        for d in self.densities:
            if d.upper <= lo or d.lower >= hi:
                continue
            if d.lower >= lo and d.upper <= hi:
                dens.append(d)
            else:
                dens.append(WeightedDensity(d, ind))
        return JumpMeasure(atoms, tuple(dens), self.small_jump_cutoff)

    # -- integrals ------------------------------------------------------------
    def integrate(self, g: Callable[[float], float], lo: float = -math.inf, hi: float = 0.0) -> float:
        """Integral of ``g`` over the open interval (lo, hi); atoms summed exactly."""
        total = 0.0
        for z, m in self.atoms:
            if lo < z < hi:
                total += m * g(z)
        for d in self.densities:
            total += d.integrate(g, lo, hi)
        return total

    def total_mass(self) -> float:
        return sum(m for _, m in self.atoms) + sum(d.mass() for d in self.densities)

    def sampled_mass(self) -> float:
        """Mass of the part sampled as compound Poisson (``|z| >= cutoff``)."""
        c = self.small_jump_cutoff
        total = sum(m for z, m in self.atoms if z <= -c)
        for d in self.densities:
            total += d.mass(c)
        return total

    def levy_integral(self) -> float:
        """``int (z^2 ^ 1) dLambda``; finite for a Lévy measure."""
        total = sum(m * min(z * z, 1.0) for z, m in self.atoms)
        for d in self.densities:
            if d.infinite_at_minus_inf or d.near_zero_index >= 2.0:
                return math.inf
            total += d.integrate(lambda z: min(z * z, 1.0))
        return total

    def check_levy(self) -> None:
        if not math.isfinite(self.levy_integral()):
            raise ValueError("measure fails the Lévy integrability condition")
        below = self.integrate(lambda z: 1.0, hi=-LOG2) + sum(m for z, m in self.atoms if abs(z + LOG2) <= ATOM_TOL)
        if not math.isfinite(below):
            raise ValueError("measure has infinite mass on (-inf, -log 2]")
        if not math.isfinite(self.sampled_mass()):
            raise ValueError("part with |z| >= small_jump_cutoff must be finite; set a positive cutoff")

    # -- sampling -------------------------------------------------------------
    def _sampling_table(self):
        c = self.small_jump_cutoff
        atoms = [(z, m) for z, m in self.atoms if z <= -c]
        weights = [m for _, m in atoms] + [d.mass(c) for d in self.densities]
        return atoms, np.asarray(weights, dtype=float)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` jumps from the normalised sampled part."""
        if n == 0:
            return np.empty(0)
        atoms, w = self._sampling_table()
        if w.size == 1 and atoms:
            return np.full(n, atoms[0][0])
        cum = np.cumsum(w)
        idx = np.searchsorted(cum, gen.random(n) * cum[-1], side="right")
        idx = np.minimum(idx, w.size - 1)
        out = np.empty(n)
        na = len(atoms)
        if na:
            locs = np.array([z for z, _ in atoms])
            sel = idx < na
            out[sel] = locs[idx[sel]]
        for j, d in enumerate(self.densities):
            sel = idx == na + j
            k = int(sel.sum())
            if k:
                out[sel] = d.sample(gen, k, self.small_jump_cutoff)
        return out

    # -- serialisation ----------------------------------------------------------
    def to_json(self) -> dict:
        doc = {"atoms": [[z, m] for z, m in self.atoms],
               "densities": [d.to_json() for d in self.densities]}
        if self.small_jump_cutoff:
            doc["small_jump_cutoff"] = self.small_jump_cutoff
        return doc


def pushforward_bar(levy: JumpMeasure) -> JumpMeasure:
    """Image of ``levy`` under ``z -> log(1 - e^z)``."""
    atoms = tuple((reflect_jump(z), m) for z, m in levy.atoms)
    dens = tuple(d.reflected() for d in levy.densities)
    out = JumpMeasure(atoms, dens, 0.0)
    # the image must put finite mass on [-log 2, 0)
    upper_part = out.integrate(lambda z: 1.0, lo=-LOG2) + sum(m for z, m in out.atoms if abs(z + LOG2) <= ATOM_TOL)
    assert math.isfinite(upper_part), "pushforward has infinite mass on [-log 2, 0)"
    return out


# ---------------------------------------------------------------------------
# characteristics and exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SnlpCharacteristics:
    """Characteristics ``(sigma, c, Lambda, k)`` of a killed spectrally negative Lévy process."""

    sigma: float = 0.0
    c: float = 0.0
    levy: JumpMeasure = field(default_factory=JumpMeasure)
    kill_rate: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kill_rate < 0:
            raise ValueError("kill rate must be >= 0")
        self.levy.check_levy()

    def effective_drift(self) -> float:
        """Linear drift of the sampled process between jumps.

        Compound-Poisson part gets ``int (1 - e^z)``; unsampled small jumps are
        replaced by their first-order mean ``int (1 - e^z + z)``.
        """
        cut = self.levy.small_jump_cutoff
        big = self.levy.integrate(lambda z: -math.expm1(z), hi=-cut if cut > 0 else 0.0)
        if cut > 0:
            big += sum(m * -math.expm1(z) for z, m in self.levy.atoms if z == -cut)
            small = self.levy.integrate(lambda z: -math.expm1(z) + z, lo=-cut)
        else:
            small = 0.0
        return self.c + big + small

    @cached_property
    def sampling_drift(self) -> float:
        return self.effective_drift()

    @cached_property
    def sampling_rate(self) -> float:
        return self.levy.sampled_mass()

    def to_json(self) -> dict:
        doc = {"sigma": self.sigma, "c": self.c, "kill": self.kill_rate}
        doc.update(self.levy.to_json())
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SnlpCharacteristics":
        atoms = tuple((float(z), float(m)) for z, m in doc.get("atoms", []))
        dens = tuple(density_from_json(d) for d in doc.get("densities", []))
        levy = JumpMeasure(atoms, dens, float(doc.get("small_jump_cutoff", 0.0)))
        return cls(float(doc.get("sigma", 0.0)), float(doc.get("c", 0.0)), levy, float(doc.get("kill", 0.0)))


def _lk_integrand(q: float):
    return lambda z: math.expm1(q * z) - q * math.expm1(z)


def laplace_exponent(chars: SnlpCharacteristics, q: float) -> float:
    """Laplace exponent: ``E[exp(q xi(t))] = exp(t * Phi(q))``."""
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    if q == 0:
        return 0.0 - chars.kill_rate
    jumps = chars.levy.integrate(_lk_integrand(q))
    return -chars.kill_rate + 0.5 * chars.sigma ** 2 * q * q + chars.c * q + jumps


def cumulant(chars: SnlpCharacteristics, q: float) -> float:
    """``kappa(q) = Phi(q) + int (1 - e^z)^q dLambda``, possibly ``+inf`` for q < 2."""
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    for d in chars.levy.densities:
        if d.infinite_at_minus_inf or (d.near_zero_index > 0 and q <= d.near_zero_index):
            return math.inf
    extra = chars.levy.integrate(lambda z: (-math.expm1(z)) ** q)
    return laplace_exponent(chars, q) + extra


def has_negative_cumulant(chars: SnlpCharacteristics, grid=None) -> bool:
    """True when ``kappa(q) < 0`` for some q on a grid of (0, 20]."""
    if grid is None:
        grid = np.linspace(0.05, 20.0, 400)
    return any(cumulant(chars, float(q)) < 0 for q in grid)


# ---------------------------------------------------------------------------
# path skeletons
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PathSkeleton:
    """Piecewise-exact record of one SNLP path on ``[0, min(horizon, kill_time))``.

    Between events the path is ``start + drift * t + W(t)`` where ``W`` is the
    Brownian component, linearly interpolated between grid points.
    """

    start_value: float
    horizon: float
    drift: float
    event_times: np.ndarray
    event_sizes: np.ndarray
    kill_time: float = math.inf
    grid_step: float | None = None
    brownian_increments: np.ndarray = field(default_factory=lambda: np.empty(0))
    tail_slope: float | None = None

    @property
    def end(self) -> float:
        return min(self.horizon, self.kill_time)

    def _brownian(self, t):
        if self.grid_step is None or self.brownian_increments.size == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        h = self.grid_step
        w = np.concatenate(([0.0], np.cumsum(self.brownian_increments)))
        grid = h * np.arange(w.size)
        return np.interp(t, grid, w)

    def value(self, t):
        """Right-continuous value at ``t`` (``t < end``)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        csum = np.concatenate(([0.0], np.cumsum(self.event_sizes)))
        return self.start_value + self.drift * t + self._brownian(t) + csum[idx]

    def left_value(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="left")
        csum = np.concatenate(([0.0], np.cumsum(self.event_sizes)))
        return self.start_value + self.drift * t + self._brownian(t) + csum[idx]

    def segments(self):
        """Linear pieces ``(knot_times, values_after, jumps, slopes, end)``.

        Knot 0 is time 0; further knots are jump times and Brownian grid points.
        ``slopes[k]`` is the slope on ``[knot_times[k], knot_times[k+1])``.
        """
        end = self.end
        ev_t = self.event_times[self.event_times < end]
        ev_z = self.event_sizes[: ev_t.size]
        if self.grid_step is not None and self.brownian_increments.size:
            h = self.grid_step
            g = h * np.arange(1, int(math.ceil(end / h)) + 1)
            g = g[g < end]
            times = np.concatenate(([0.0], ev_t, g))
            jumps = np.concatenate(([0.0], ev_z, np.zeros(g.size)))
            order = np.argsort(times, kind="stable")
            times, jumps = times[order], jumps[order]
        else:
            times = np.concatenate(([0.0], ev_t))
            jumps = np.concatenate(([0.0], ev_z))
        values = self.start_value + self.drift * times + self._brownian(times) + np.cumsum(jumps)
        nxt = np.append(times[1:], end)
        left_next = self.start_value + self.drift * nxt + self._brownian(nxt) + np.cumsum(jumps)
        with np.errstate(invalid="ignore", divide="ignore"):
            dt = nxt - times
            slopes = np.where(dt > 0, (left_next - values) / np.where(dt > 0, dt, 1.0), self.drift)
        return times, values, jumps, slopes, end


class SkeletonSampler:
    """Lazily extendable SNLP sampler with prefix-stable output.

    Lévy time is consumed in fixed chunks; the draws of chunk ``j`` never
    depend on how far the path is eventually extended, so a path sampled to
    a short horizon is an exact prefix of the same stream sampled further.
    """

    def __init__(self, chars: SnlpCharacteristics, gen: np.random.Generator,
                 grid_step: float | None = None, chunk: float = DEFAULT_CHUNK, start_value: float = 0.0):
        if chars.sigma > 0 and grid_step is None:
            raise ConfigurationError("sigma > 0 requires a grid_step")
        self.chars = chars
        self.gen = gen
        self.start_value = start_value
        self.drift = chars.sampling_drift
        self.rate = chars.sampling_rate
        if not math.isfinite(self.rate):
            raise ConfigurationError("jump part above the cutoff has infinite mass")
        self.kill_time = gen.exponential(1.0 / chars.kill_rate) if chars.kill_rate > 0 else math.inf
        if chars.sigma > 0:
            n = max(1, int(round(chunk / grid_step)))
            self.grid_step = float(grid_step)
            self.chunk = n * self.grid_step
            self._n_grid = n
        else:
            self.grid_step = None
            self.chunk = float(chunk)
            self._n_grid = 0
        self.covered = 0.0
        self._times: list[np.ndarray] = []
        self._sizes: list[np.ndarray] = []
        self._bm: list[np.ndarray] = []
        self.deterministic = chars.levy.is_empty and chars.sigma == 0 and chars.kill_rate == 0

    def _draw_chunk(self):
        gen, L, s0 = self.gen, self.chunk, self.covered
        n = int(gen.poisson(self.rate * L)) if self.rate > 0 else 0
        if n:
            t = s0 + L * np.sort(gen.random(n))
            z = self.chars.levy.sample(gen, n)
        else:
            t = z = np.empty(0)
        self._times.append(t)
        self._sizes.append(z)
        if self._n_grid:
            self._bm.append(gen.normal(0.0, self.chars.sigma * math.sqrt(self.grid_step), self._n_grid))
        self.covered = s0 + L

    def extend_to(self, s: float) -> None:
        if self.deterministic:
            self.covered = max(self.covered, s)
            return
        while self.covered < s and self.covered < self.kill_time:
            self._draw_chunk()

    def skeleton(self, horizon: float) -> PathSkeleton:
        self.extend_to(horizon)
        times = np.concatenate(self._times) if self._times else np.empty(0)
        sizes = np.concatenate(self._sizes) if self._sizes else np.empty(0)
        keep = times < min(horizon, self.kill_time)
        bm = np.concatenate(self._bm) if self._bm else np.empty(0)
        if self.grid_step is not None:
            bm = bm[: int(math.ceil(horizon / self.grid_step))]
        return PathSkeleton(
            start_value=self.start_value, horizon=horizon, drift=self.drift,
            event_times=times[keep], event_sizes=sizes[keep],
            kill_time=self.kill_time if self.kill_time < horizon else math.inf,
            grid_step=self.grid_step, brownian_increments=bm,
            tail_slope=self.drift if self.deterministic else None,
        )


def sample_snlp_path(chars: SnlpCharacteristics, horizon: float, grid_step: float | None, rng) -> PathSkeleton:
    """Sample one path of the SNLP on ``[0, horizon]``."""
    from .rng import as_stream

    if horizon <= 0:
        raise ValueError("horizon must be positive")
    sampler = SkeletonSampler(chars, as_stream(rng).generator, grid_step)
    return sampler.skeleton(horizon)
