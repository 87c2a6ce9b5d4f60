"""Binary branching Lévy processes (BBLP) and their link to homogeneous growth-fragmentations.

A BBLP particle moves as a spectrally negative Lévy process and, at rate
``mu_b(total)``, is replaced by two children displaced by ``(z, zbar)`` with
``e^z + e^zbar = 1``; ``z`` (the closer child) lies in ``[-log 2, 0)``.

With a truncation level ``trunc <= -log 2`` the far child is suppressed when
``zbar <= trunc`` (equivalently ``z >= reflect(trunc)``); such events become
ordinary jumps of the motion.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .cellsystem import ResourceLimits
from .levy import (
    ATOM_TOL,
    LOG2,
    ConfigurationError,
    JumpMeasure,
    PathSkeleton,
    SkeletonSampler,
    SnlpCharacteristics,
    laplace_exponent,
    pushforward_bar,
    reflect,
    reflect_jump,
)
from .rng import RandomStream, as_stream


@dataclass(frozen=True)
class BblpCharacteristics:
    sigma: float
    c: float
    levy: JumpMeasure
    kill_rate: float
    mu: JumpMeasure

    def __post_init__(self):
        for z, _ in self.mu.atoms:
            if not -LOG2 - ATOM_TOL <= z < 0:
                raise ValueError(f"branching atom {z} outside [-log 2, 0)")
        for d in self.mu.densities:
            if d.lower < -LOG2 - ATOM_TOL:
                raise ValueError("branching density must be supported in [-log 2, 0)")
        if not math.isfinite(self.mu.levy_integral()):
            raise ValueError("branching measure fails int (1 ^ z^2) dmu < inf")

    @property
    def motion(self) -> SnlpCharacteristics:
        return SnlpCharacteristics(self.sigma, self.c, self.levy, self.kill_rate)


def _branch_integrand(q: float):
    def g(z):
        return math.expm1(q * z) + (-math.expm1(z)) ** q - q * math.expm1(z)
    return g


def bblp_cumulant(b: BblpCharacteristics, q: float) -> float:
    """``Phi_b(q) + int (e^{qz} + (1-e^z)^q - 1 + q(1-e^z)) mu_b(dz)``."""
    if q < 0:
        raise ValueError("q must be >= 0")
    for d in b.mu.densities:
        if d.near_zero_index > 0 and q <= d.near_zero_index:
            return math.inf
    return laplace_exponent(b.motion, q) + b.mu.integrate(_branch_integrand(q))


def _at_fixed_point(z: float) -> bool:
    return abs(z + LOG2) <= ATOM_TOL


def gf_to_bblp_characteristics(chars: SnlpCharacteristics) -> BblpCharacteristics:
    """BBLP whose positions have the law of the log-sizes of the growth-fragmentation of ``chars``."""
    levy = chars.levy
    bar = pushforward_bar(levy)
    c_b = chars.c + levy.integrate(lambda z: 1.0 - 2.0 * math.exp(z), hi=-LOG2)
    atoms = []
    for z, m in levy.atoms + bar.atoms:
        if _at_fixed_point(z):
            atoms.append((-LOG2, 0.5 * m))
        elif z > -LOG2:
            atoms.append((z, m))
    dens = JumpMeasure((), levy.densities + bar.densities, levy.small_jump_cutoff).restricted(-LOG2, 0.0).densities
    mu = JumpMeasure(tuple(atoms), dens, levy.small_jump_cutoff)
    return BblpCharacteristics(chars.sigma, c_b, JumpMeasure(), chars.kill_rate, mu)


def truncated_characteristics(b: BblpCharacteristics, trunc: float) -> BblpCharacteristics:
    """Characteristics of the level-``trunc`` system: branching on ``[-log 2, reflect(trunc))``."""
    if trunc > -LOG2 + ATOM_TOL:
        raise ValueError("trunc must be <= -log 2")
    if trunc == -math.inf:
        if not math.isfinite(b.mu.total_mass()):
            raise ConfigurationError("infinite branching measure needs a finite truncation level")
        return b
    upper = reflect_jump(trunc) if trunc < -LOG2 - ATOM_TOL else -LOG2
    branch = b.mu.restricted(-LOG2, upper, lo_closed=True)
    to_motion = b.mu.restricted(upper, 0.0, lo_closed=True)
    if _at_fixed_point(upper):
        # trunc = -log 2: the symmetric split has its far child at distance log 2 = |trunc|
        branch = JumpMeasure((), (), b.mu.small_jump_cutoff)
        to_motion = b.mu
    return BblpCharacteristics(b.sigma, b.c, b.levy + to_motion, b.kill_rate, branch)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Particle:
    label: tuple[int, ...]  # 0 = closer child, 1 = farther child
    birth_time: float
    birth_position: float
    displacement: float  # offset from the mother's position at the branch (0 for the root)
    motion: PathSkeleton
    lifetime: float  # local time to branch or death; inf if beyond the horizon
    fate: str | None  # "branch" | "killed" | None

    @property
    def death(self) -> float:
        return self.birth_time + self.lifetime

    def position(self, t: float) -> float:
        return self.birth_position + float(self.motion.value(t - self.birth_time))

    def to_record(self) -> dict:
        return {"label": list(self.label), "birth": self.birth_time, "position": self.birth_position,
                "displacement": self.displacement,
                "lifetime": self.lifetime if math.isfinite(self.lifetime) else None, "fate": self.fate}


@dataclass(eq=False)
class ParticleSystem:
    particles: dict[tuple[int, ...], Particle]
    truncation_level: float
    horizon: float
    complete: bool = True
    notes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.particles)

    def positions(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon:
            raise ValueError(f"t must lie in [0, {self.horizon}]")
        out = [p.position(t) for p in self.particles.values() if p.birth_time <= t < p.death]
        return np.sort(np.asarray(out, dtype=float))[::-1]

    def iter_ndjson(self) -> Iterator[str]:
        for label in sorted(self.particles):
            yield json.dumps(self.particles[label].to_record(), sort_keys=True)


def simulate_bblp(b: BblpCharacteristics, trunc: float, horizon: float,
                  limits: ResourceLimits = ResourceLimits(), rng=0) -> ParticleSystem:
    """Simulate the level-``trunc`` BBLP of ``b`` started from one particle at 0.

    Particle ``v`` uses stream ``root.split(0, len(v), *v)``: sub-stream 0 for
    its motion, 1 for its branching clock and 2 for the displacement.
    """
    if not horizon > 0:
        raise ConfigurationError("horizon must be positive")
    tb = truncated_characteristics(b, trunc)
    branch_rate = tb.mu.total_mass()
    drift_shift = tb.mu.integrate(lambda z: -math.expm1(z))
    motion = SnlpCharacteristics(tb.sigma, tb.c + drift_shift, tb.levy, tb.kill_rate)
    grid = 1e-3 if motion.sigma > 0 else None
    root = as_stream(rng)
    system = ParticleSystem({}, trunc, horizon)
    queue = deque([((), 0.0, 0.0, 0.0)])
    while queue:
        label, birth, pos, disp = queue.popleft()
        if len(system.particles) >= limits.max_nodes:
            system.complete = False
            system.notes.append("max_nodes")
            break
        if len(label) > limits.max_generation:
            system.complete = False
            if "max_generation" not in system.notes:
                system.notes.append("max_generation")
            continue
        stream = root.split(0, len(label), *label)
        local_h = horizon - birth
        skel = SkeletonSampler(motion, stream.split(0).generator, grid).skeleton(local_h)
        clock = stream.split(1).generator.exponential(1.0 / branch_rate) if branch_rate > 0 else math.inf
        killed_at = skel.kill_time
        if clock < min(killed_at, local_h):
            lifetime, fate = clock, "branch"
        elif killed_at < local_h:
            lifetime, fate = killed_at, "killed"
        else:
            lifetime, fate = math.inf, None
        system.particles[label] = Particle(label, birth, pos, disp, skel, lifetime, fate)
        if fate == "branch":
            z = float(tb.mu.sample(stream.split(2).generator, 1)[0])
            zbar = reflect_jump(z)
            at = pos + float(skel.left_value(clock))
            queue.append((label + (0,), birth + clock, at + z, z))
            queue.append((label + (1,), birth + clock, at + zbar, zbar))
    return system


def truncate_system(sys: ParticleSystem, trunc2: float) -> ParticleSystem:
    """Suppress every far child (with offspring) born at distance ``>= |trunc2|``."""
    if not sys.truncation_level <= trunc2 <= -LOG2 + ATOM_TOL:
        raise ValueError("trunc2 must lie in [truncation_level, -log 2]")
    if trunc2 == sys.truncation_level:
        return sys
    removed: set[tuple[int, ...]] = set()
    kept = {}
    for label in sorted(sys.particles, key=lambda l: (len(l), l)):
        if label and label[:-1] in removed:
            removed.add(label)
            continue
        p = sys.particles[label]
        if label and label[-1] == 1 and p.displacement <= trunc2 + ATOM_TOL * (trunc2 == -LOG2):
            removed.add(label)
            continue
        kept[label] = p
    return ParticleSystem(kept, trunc2, sys.horizon, sys.complete, list(sys.notes))


# ---------------------------------------------------------------------------
# characteristic recovery from the cumulant
# ---------------------------------------------------------------------------

def recover_atom_characteristics(kappa, locations: Sequence[float], q_grid: Sequence[float] | None = None
                                 ) -> BblpCharacteristics:
    """Solve for ``(k, sigma, c_b, atom masses)`` from cumulant values on a q-grid.

    ``kappa(q) = -k + sigma^2 q^2/2 + c q + sum_i m_i g_i(q)`` is linear in the
    unknowns once the candidate branching locations are fixed.
    """
    q = np.asarray(q_grid if q_grid is not None else np.linspace(2.0, 10.0, 33), dtype=float)
    locs = [float(z) for z in locations]
    cols = [-np.ones_like(q), 0.5 * q * q, q]
    for z in locs:
        g = _branch_integrand
        cols.append(np.array([g(qq)(z) for qq in q]))
    A = np.column_stack(cols)
    rhs = np.array([kappa(float(qq)) for qq in q])
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    k, half_s2, c = sol[:3]
    sigma = math.sqrt(max(2.0 * half_s2, 0.0))
    atoms = tuple((z, float(m)) for z, m in zip(locs, sol[3:]) if abs(m) > 1e-12)
    mu = JumpMeasure(tuple((z, m) for z, m in atoms if m > 0))
    out = BblpCharacteristics(sigma, float(c), JumpMeasure(), max(float(k), 0.0), mu)
    object.__setattr__(out, "residual", float(np.max(np.abs(A @ sol - rhs))))
    object.__setattr__(out, "raw_solution", tuple(float(s) for s in sol))
    return out
