"""Switching transforms of spectrally negative Lévy processes.

Switching a jump ``z`` replaces it by its reflection ``log(1 - e^z)``: the
cell keeps the other fragment.  Marking each jump independently with
probability ``p(z)`` leaves the cumulant ``kappa`` unchanged, which is the
basis of every equality-in-law check in this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .levy import (
    ATOM_TOL,
    LOG2,
    ConfigurationError,
    JumpMeasure,
    PathSkeleton,
    ReflectedDensity,
    SnlpCharacteristics,
    WeightedDensity,
    merge_atoms,
    pushforward_bar,
    reflect,
    reflect_jump,
)
from .rng import as_stream


class SwitchValidationError(ConfigurationError):
    """The switching probability has infinite total rate against the measure."""


# ---------------------------------------------------------------------------
# switching probabilities
# ---------------------------------------------------------------------------

class SwitchProbability:
    """A measurable ``p: (-inf, 0) -> [0, 1]``; instances are vectorised callables."""

    kind: str = "abstract"
    structured_complement: bool | None = None

    def __call__(self, z):
        raise NotImplementedError

    def scalar(self, z: float) -> float:
        return float(np.asarray(self(np.array([z], dtype=float)))[0])

    def complement(self):
        """``z -> p(zbar)``."""
        return _Composed(self)

    def one_minus(self):
        return _OneMinus(self)

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class _Composed:
    inner: SwitchProbability

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self.inner(reflect(z)), dtype=float)


@dataclass(frozen=True)
class _OneMinus:
    inner: SwitchProbability

    def __call__(self, z):
        return 1.0 - np.asarray(self.inner(z), dtype=float)


@dataclass(frozen=True)
class ConstantSwitch(SwitchProbability):
    p0: float
    kind: str = field(default="constant", init=False)

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError("constant switching probability must lie in [0, 1]")

    @property
    def structured_complement(self):
        return self.p0 == 0.5

    def __call__(self, z):
        return np.full(np.shape(z), self.p0, dtype=float)

    def to_json(self):
        return {"kind": "constant", "p": self.p0}


@dataclass(frozen=True)
class HalflineSwitch(SwitchProbability):
    """``1{z < -log 2} + 1/2 * 1{z = -log 2}``: always keep the larger fragment."""

    kind: str = field(default="canonical_halfline", init=False)
    structured_complement = True

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        at = np.abs(z + LOG2) <= ATOM_TOL
        return np.where(at, 0.5, np.where(z < -LOG2, 1.0, 0.0))

    def to_json(self):
        return {"kind": "canonical_halfline"}


@dataclass(frozen=True)
class TabulatedSwitch(SwitchProbability):
    """Piecewise-constant ``p``: ``values[i]`` on ``[edges[i], edges[i+1])``.

    ``edges`` runs from ``-inf`` to ``0``.
    """

    edges: tuple[float, ...]
    values: tuple[float, ...]
    kind: str = field(default="tabulated", init=False)
    structured_complement = None

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        values = tuple(float(v) for v in self.values)
        if len(edges) != len(values) + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if edges[0] != -math.inf or edges[-1] != 0.0 or any(a >= b for a, b in zip(edges[:-1], edges[1:])):
            raise ValueError("edges must increase strictly from -inf to 0")
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("tabulated values must lie in [0, 1]")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        idx = np.searchsorted(np.asarray(self.edges[1:-1]), z, side="right")
        return np.asarray(self.values)[idx]

    def to_json(self):
        edges = ["-inf" if e == -math.inf else e for e in self.edges]
        return {"kind": "tabulated", "edges": edges, "values": list(self.values)}


@dataclass(frozen=True)
class RadonNikodymSwitch(SwitchProbability):
    """``p = dbar(Lambda)/d(Lambda + bar(Lambda))`` for a target measure ``Lambda``."""

    target: JumpMeasure
    kind: str = field(default="radon_nikodym", init=False)
    structured_complement = True

    def __post_init__(self):
        bar = pushforward_bar(self.target)
        total = merge_atoms(self.target.atoms + bar.atoms)
        bar_atoms = dict()
        for z, m in bar.atoms:
            bar_atoms[z] = bar_atoms.get(z, 0.0) + m
        ratios = []
        for z, m in total:
            num = sum(mb for zb, mb in bar.atoms if abs(zb - z) <= ATOM_TOL)
            ratios.append((z, num / m))
        object.__setattr__(self, "_atom_ratios", tuple(ratios))
        object.__setattr__(self, "_dens", self.target.densities)
        object.__setattr__(self, "_bar_dens", bar.densities)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        num = np.zeros(z.shape)
        den = np.zeros(z.shape)
        for d in self._bar_dens:
            num = num + d.pdf(z)
        den = num.copy()
        for d in self._dens:
            den = den + d.pdf(z)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        for za, r in self._atom_ratios:
            out = np.where(np.abs(z - za) <= ATOM_TOL, r, out)
        return out

    def to_json(self):
        return {"kind": "radon_nikodym", "target": self.target.to_json()}


def switch_probability_from_json(doc: dict) -> SwitchProbability:
    kind = doc.get("kind")
    if kind == "canonical_halfline":
        return HalflineSwitch()
    if kind == "constant":
        return ConstantSwitch(float(doc["p"]))
    if kind == "tabulated":
        edges = [-math.inf if e in ("-inf", None) else float(e) for e in doc["edges"]]
        return TabulatedSwitch(tuple(edges), tuple(doc["values"]))
    if kind == "radon_nikodym":
        target = SnlpCharacteristics.from_json({**doc["target"], "sigma": 0.0, "c": 0.0}).levy
        return RadonNikodymSwitch(target)
    raise ConfigurationError(f"unknown switching probability kind {kind!r}")


# ---------------------------------------------------------------------------
# validation and characteristic-level transform
# ---------------------------------------------------------------------------

class SwitchValidation(NamedTuple):
    ok: bool
    rate: float
    complementary: bool
    divergent_component: str | None = None


def _complementarity(p: SwitchProbability) -> bool:
    if p.structured_complement is not None:
        return bool(p.structured_complement)
    grid = np.concatenate((-np.logspace(-6, 1.5, 5000), -np.linspace(1e-6, 30.0, 5000)))
    grid = grid[np.abs(grid + LOG2) > ATOM_TOL]
    lhs = np.asarray(p(grid)) + np.asarray(p(reflect(grid)))
    return bool(np.all(np.abs(lhs - 1.0) <= 1e-9)) and abs(p.scalar(-LOG2) - 0.5) <= 1e-9


def weighted_rate(p, levy: JumpMeasure, exclude_fixed_point: bool = False) -> tuple[float, str | None]:
    """``int p dLambda``; returns ``(inf, name)`` naming the first divergent component."""
    total = 0.0
    for z, m in levy.atoms:
        if exclude_fixed_point and abs(z + LOG2) <= ATOM_TOL:
            continue
        total += m * float(np.asarray(p(np.array([z])))[0])
    for i, d in enumerate(levy.densities):
        w = WeightedDensity(d, p)
        mass = w.mass()
        if not math.isfinite(mass):
            return math.inf, f"densities[{i}] ({type(d).__name__})"
        total += mass
    return total, None


def validate_switch_probability(p: SwitchProbability, levy: JumpMeasure) -> SwitchValidation:
    """Check that ``int p dLambda`` is finite and whether ``p(z) + p(zbar) = 1``."""
    rate, bad = weighted_rate(p, levy)
    return SwitchValidation(bad is None, rate, _complementarity(p), bad)


def _require_valid(p, levy) -> SwitchValidation:
    v = validate_switch_probability(p, levy)
    if not v.ok:
        raise SwitchValidationError(f"switching rate diverges on {v.divergent_component}")
    return v


def switched_measure(levy: JumpMeasure, p: SwitchProbability) -> JumpMeasure:
    """``(1 - p) Lambda + p(zbar) bar(Lambda)``."""
    atoms = []
    for z, m in levy.atoms:
        pz = p.scalar(z)
        if pz < 1.0:
            atoms.append((z, (1.0 - pz) * m))
        if pz > 0.0:
            atoms.append((reflect_jump(z), pz * m))
    dens = []
    for d in levy.densities:
        dens.append(WeightedDensity(d, p.one_minus()))
        dens.append(WeightedDensity(ReflectedDensity(d), p.complement()))
    return JumpMeasure(tuple(atoms), tuple(dens), levy.small_jump_cutoff)


def switching_characteristics(chars: SnlpCharacteristics, p: SwitchProbability) -> SnlpCharacteristics:
    """Characteristics of the switched process; ``kappa`` is unchanged."""
    _require_valid(p, chars.levy)
    shift = chars.levy.integrate(lambda z: (1.0 - 2.0 * math.exp(z)) * p.scalar(z))
    return SnlpCharacteristics(chars.sigma, chars.c + shift, switched_measure(chars.levy, p), chars.kill_rate)


def apply_switching(path: PathSkeleton, p: SwitchProbability, rng) -> tuple[PathSkeleton, float]:
    """Mark each jump with probability ``p(z)`` and reflect the marked ones.

    Returns the transformed skeleton and the first marked jump time away from
    the fixed point ``-log 2`` (``inf`` if none).
    """
    gen = as_stream(rng).generator
    z = path.event_sizes
    if z.size == 0:
        return path, math.inf
    marks = gen.random(z.size) < np.asarray(p(z), dtype=float)
    new_z = np.where(marks, reflect(z), z)
    effective = marks & (np.abs(z + LOG2) > ATOM_TOL)
    hits = np.flatnonzero(effective)
    tau = float(path.event_times[hits[0]]) if hits.size else math.inf
    out = PathSkeleton(
        start_value=path.start_value, horizon=path.horizon, drift=path.drift,
        event_times=path.event_times, event_sizes=new_z, kill_time=path.kill_time,
        grid_step=path.grid_step, brownian_increments=path.brownian_increments,
        tail_slope=path.tail_slope,
    )
    return out, tau


# ---------------------------------------------------------------------------
# canonical probability and the kappa-equivalence test
# ---------------------------------------------------------------------------

def canonical_switch_probability(target: SnlpCharacteristics) -> SwitchProbability:
    """Switching probability that turns a same-kappa process into ``target``."""
    return RadonNikodymSwitch(target.levy)


def _symmetrised(levy: JumpMeasure) -> tuple[tuple[tuple[float, float], ...], tuple]:
    bar = pushforward_bar(levy)
    return merge_atoms(levy.atoms + bar.atoms), levy.densities + bar.densities


def _lower_drift(chars: SnlpCharacteristics) -> float:
    return chars.c + chars.levy.integrate(lambda z: 1.0 - 2.0 * math.exp(z), hi=-LOG2)


_DENSITY_GRID = np.unique(np.concatenate((-np.logspace(-8, 1.7, 3000), -np.linspace(1e-8, 40.0, 4000))))


def kappa_mismatch(a: SnlpCharacteristics, b: SnlpCharacteristics) -> str | None:
    """Name of the first component on which ``a`` and ``b`` differ (None if same kappa)."""
    if a.sigma != b.sigma:
        return "sigma"
    if a.kill_rate != b.kill_rate:
        return "kill_rate"
    atoms_a, dens_a = _symmetrised(a.levy)
    atoms_b, dens_b = _symmetrised(b.levy)
    if len(atoms_a) != len(atoms_b):
        return "symmetrised atoms"
    for (za, ma), (zb, mb) in zip(atoms_a, atoms_b):
        if abs(za - zb) > ATOM_TOL or abs(ma - mb) > ATOM_TOL * max(1.0, abs(ma)):
            return "symmetrised atoms"
    if dens_a or dens_b:
        fa = sum((d.pdf(_DENSITY_GRID) for d in dens_a), np.zeros(_DENSITY_GRID.size))
        fb = sum((d.pdf(_DENSITY_GRID) for d in dens_b), np.zeros(_DENSITY_GRID.size))
        if np.any(np.abs(fa - fb) > 1e-9 * np.maximum(1.0, np.abs(fa))):
            return "symmetrised densities"
    if abs(_lower_drift(a) - _lower_drift(b)) > 1e-10:
        return "drift below -log 2"
    return None


def same_kappa_characteristics(a: SnlpCharacteristics, b: SnlpCharacteristics) -> bool:
    """True iff ``a`` and ``b`` share the same cumulant function."""
    return kappa_mismatch(a, b) is None
