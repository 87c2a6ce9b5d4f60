"""Epsilon-truncated growth-fragmentation cell systems.

Cells are indexed by Ulam–Harris labels (tuples of positive integers).  The
daughter born at the ``j``-th jump of a cell (counting every sampled jump,
including those too small to spawn anything) gets label ``parent + (j,)`` and
the random stream ``root.split(0, *label)``.  Because the Lévy sampler is
prefix-stable, changing ``eps`` or ``horizon`` never changes the path of a
cell that exists in both runs.
"""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from .lamperti import CellPath, self_similar_path
from .levy import (
    ConfigurationError,
    SkeletonSampler,
    SnlpCharacteristics,
    has_negative_cumulant,
)
from .rng import RandomStream, as_stream

logger = logging.getLogger(__name__)

DEFAULT_GRID_STEP = 1e-3
MAX_LEVY_TIME = 1e6


@dataclass(frozen=True)
class ResourceLimits:
    """Hard caps; exceeding any of them flags the result as incomplete."""

    max_nodes: int = 10**6
    max_generation: int = 60
    max_wall_events: int = 10**8
    max_levy_time: float = MAX_LEVY_TIME

    @classmethod
    def from_json(cls, doc: dict | None) -> "ResourceLimits":
        doc = doc or {}
        return cls(int(doc.get("max_nodes", 10**6)), int(doc.get("max_generation", 60)),
                   int(doc.get("max_wall_events", 10**8)), float(doc.get("max_levy_time", MAX_LEVY_TIME)))


@dataclass(frozen=True)
class CellModel:
    """A cell process: SNLP characteristics, self-similarity index and start size."""

    chars: SnlpCharacteristics
    alpha: float = 0.0
    start_size: float = 1.0
    grid_step: float | None = None

    def __post_init__(self):
        if not self.start_size > 0:
            raise ConfigurationError("start_size must be positive")
        if self.chars.sigma > 0 and self.grid_step is None:
            object.__setattr__(self, "grid_step", DEFAULT_GRID_STEP)
        if not _negative_cumulant_exists(self.chars):
            msg = "no q in (0, 20] with kappa(q) < 0"
            if self.alpha != 0:
                raise ConfigurationError(f"self-similar model needs a negative cumulant value: {msg}")
            _warn_once(self.chars, msg)

    def with_start(self, x: float) -> "CellModel":
        return CellModel(self.chars, self.alpha, x, self.grid_step)


@lru_cache(maxsize=256)
def _negative_cumulant_exists(chars: SnlpCharacteristics) -> bool:
    return has_negative_cumulant(chars)


@lru_cache(maxsize=256)
def _warn_once(chars: SnlpCharacteristics, msg: str) -> None:
    logger.info("homogeneous model: %s", msg)


# ---------------------------------------------------------------------------
# single cells
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CellRun:
    """One cell path with its truncation outcome (all times are local)."""

    path: CellPath
    kill_time: float  # local time at which the cell leaves the system (inf if alive at horizon)
    kill_reason: str | None  # "eps" | "absorbed" | "incomplete" | None
    n_events: int


def _sampler(model: CellModel, stream: RandomStream) -> SkeletonSampler:
    return SkeletonSampler(model.chars, stream.generator, model.grid_step)


def grow_cell_path(sampler: SkeletonSampler, alpha: float, x: float, horizon: float,
                   floor: float = 0.0, max_levy_time: float = MAX_LEVY_TIME) -> CellPath:
    """Extend the Lévy skeleton (doubling) until the Lamperti image covers the horizon.

    Extension also stops once the path has entered ``(0, floor]``.
    """
    levy_span = horizon if alpha == 0 else horizon * x ** alpha
    levy_span = max(levy_span, sampler.chunk)
    while True:
        path = self_similar_path(sampler.skeleton(levy_span), alpha, x, horizon)
        if path.complete:
            return path
        if floor > 0 and path.first_passage_below(floor) < path.coverage:
            return path
        if levy_span >= max_levy_time:
            return path
        levy_span = min(2.0 * levy_span, max_levy_time)


def run_cell(model: CellModel, x: float, horizon: float, eps: float, stream: RandomStream,
             limits: ResourceLimits = ResourceLimits()) -> CellRun:
    path = grow_cell_path(_sampler(model, stream), model.alpha, x, horizon, eps, limits.max_levy_time)
    t_eps = path.first_passage_below(eps)
    t_kill, reason = math.inf, None
    if t_eps < math.inf and t_eps <= path.coverage:
        t_kill, reason = t_eps, "eps"
    if path.death_time < t_kill:
        t_kill, reason = path.death_time, "absorbed"
    if reason is None and not path.complete:
        t_kill, reason = path.coverage, "incomplete"
    return CellRun(path, t_kill, reason, int(path.knot_times.size))


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CellNode:
    label: tuple[int, ...]
    birth_time: float
    initial_size: float
    run: CellRun

    @property
    def path(self) -> CellPath:
        return self.run.path

    @property
    def generation(self) -> int:
        return len(self.label)

    @property
    def kill_reason(self) -> str | None:
        return self.run.kill_reason

    @property
    def parent_jump_size(self) -> float:
        return self.initial_size

    @property
    def death(self) -> float:
        """Absolute time the cell leaves the system."""
        return self.birth_time + self.run.kill_time

    def to_record(self) -> dict:
        life = self.run.kill_time
        return {"label": list(self.label), "birth": self.birth_time, "initial_size": self.initial_size,
                "lifetime": life if math.isfinite(life) else None, "kill_reason": self.kill_reason}


def daughter_births(run: CellRun, eps: float, local_horizon: float):
    """``(ordinal, local_time, size)`` of jumps that spawn daughters larger than ``eps``."""
    t, before, after = run.path.jumps()
    out = []
    sizes = before - after
    for j in np.flatnonzero((sizes > eps) & (t <= run.kill_time) & (t <= local_horizon)):
        if t[j] >= run.path.death_time:
            continue
        out.append((int(j) + 1, float(t[j]), float(sizes[j])))
    return out


def lost_daughters(run: CellRun, eps: float, local_horizon: float) -> list[float]:
    """Sizes of daughters that would be born at or below ``eps`` (and are therefore dropped)."""
    t, before, after = run.path.jumps()
    sizes = before - after
    sel = (sizes <= eps) & (t <= run.kill_time) & (t < local_horizon) & (t < run.path.death_time)
    return [float(v) for v in sizes[sel]]


@dataclass(eq=False)
class CellTree:
    nodes: list[CellNode]
    eps: float
    horizon: float
    complete: bool = True
    eps_kills: int = 0
    notes: list[str] = field(default_factory=list)
    # sizes removed by the truncation: cells at their eps-kill and daughters born at or below eps
    lost_sizes: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def iter_ndjson(self) -> Iterator[str]:
        for node in sorted(self.nodes, key=lambda n: n.label):
            yield json.dumps(node.to_record(), sort_keys=True)


def simulate_cell_system(model: CellModel, eps: float, horizon: float,
                         limits: ResourceLimits = ResourceLimits(), rng=0) -> CellTree:
    """Grow the eps-truncated cell system of ``model`` up to ``horizon``."""
    if not 0 < eps < model.start_size:
        raise ConfigurationError("need 0 < eps < start_size")
    if not horizon > 0:
        raise ConfigurationError("horizon must be positive")
    root = as_stream(rng)
    tree = CellTree([], eps, horizon)
    queue = deque([((), 0.0, model.start_size)])
    events = 0
    while queue:
        label, birth, size = queue.popleft()
        if len(tree.nodes) >= limits.max_nodes:
            tree.complete = False
            tree.notes.append("max_nodes")
            break
        if len(label) > limits.max_generation:
            tree.complete = False
            if "max_generation" not in tree.notes:
                tree.notes.append("max_generation")
            continue
        local_h = horizon - birth
        run = run_cell(model, size, local_h, eps, root.split(0, *label), limits)
        node = CellNode(label, birth, size, run)
        tree.nodes.append(node)
        events += run.n_events
        if run.kill_reason == "eps":
            tree.eps_kills += 1
            tree.lost_sizes.append(float(run.path.size_at(run.kill_time)))
        elif run.kill_reason == "incomplete":
            tree.complete = False
            if "max_levy_time" not in tree.notes:
                tree.notes.append("max_levy_time")
        tree.lost_sizes.extend(lost_daughters(run, eps, local_h))
        if events > limits.max_wall_events:
            tree.complete = False
            tree.notes.append("max_wall_events")
            break
        for j, t, y in daughter_births(run, eps, local_h):
            if birth + t < horizon:
                queue.append((label + (j,), birth + t, y))
    return tree


# ---------------------------------------------------------------------------
# snapshots and functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Snapshot:
    time: float
    sizes: np.ndarray  # descending

    def __len__(self) -> int:
        return int(self.sizes.size)

    def csv_row(self) -> str:
        return ",".join([repr(float(self.time))] + [repr(float(v)) for v in self.sizes])


def snapshot(tree: CellTree, t: float) -> Snapshot:
    """Sizes of the cells alive at time ``t``, sorted in decreasing order."""
    if t < 0 or t > tree.horizon:
        raise ValueError(f"t must lie in [0, {tree.horizon}]")
    sizes = []
    for node in tree.nodes:
        if node.birth_time <= t < node.death:
            local = t - node.birth_time
            if local >= node.path.death_time:
                continue
            v = float(node.path.size_at(local))
            if v > 0:
                sizes.append(v)
    arr = np.sort(np.asarray(sizes, dtype=float))[::-1]
    return Snapshot(float(t), arr)


def q_mass(s: Snapshot, q: float) -> float:
    """``sum of y**q`` over the snapshot."""
    return float(np.sum(s.sizes ** q)) if s.sizes.size else 0.0


def time_integrated_mass(tree: CellTree, q: float, alpha: float, t_max: float) -> float:
    """``int_0^{t_max} q_mass(snapshot(tree, t), q + alpha) dt`` by exact piecewise integration."""
    if t_max <= 0:
        return 0.0
    if t_max > tree.horizon:
        raise ValueError("tree does not cover t_max")
    total = 0.0
    for node in tree.nodes:
        if node.birth_time >= t_max:
            continue
        hi = min(t_max, node.death) - node.birth_time
        total += node.path.integrate_power(q + alpha, 0.0, hi)
    return total


# ---------------------------------------------------------------------------
# single-path excessive statistic
# ---------------------------------------------------------------------------

TimeSizeFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PowerExponential:
    """``f(t, x) = x**q * exp(-K t)``; the cemetery (size 0) maps to 0."""

    q: float
    K: float = 0.0

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, np.abs(x) ** self.q * np.exp(-self.K * t), 0.0)


def excessive_terms(model: CellModel, f: TimeSizeFunction, s: float, t: float, rng,
                    floor_fraction: float = 1e-12) -> tuple[float, float]:
    """``(f(s+t, X(t)), sum_{r<=t} f(s+r, -Delta X(r)))`` along one cell path.

    For self-similar paths that reach size zero in finite time the path is
    stopped below ``floor_fraction * start_size`` and treated as absorbed.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = model.start_size
    sampler = _sampler(model, as_stream(rng))
    path = grow_cell_path(sampler, model.alpha, x, t, floor_fraction * x if model.alpha < 0 else 0.0)
    times, before, after = path.jumps()
    sel = (times <= t) & (times < path.death_time)
    jump_part = float(np.sum(f(s + times[sel], before[sel] - after[sel]))) if np.any(sel) else 0.0
    if path.complete:
        end_val = float(f(s + t, path.size_at(t)))
    else:
        end_val = 0.0
    return end_val, jump_part


def excessive_sample(model: CellModel, f: TimeSizeFunction, s: float, t: float, rng) -> float:
    """One draw of ``f(s+t, X(t)) + sum_{0<=r<=t} f(s+r, -Delta X(r))``."""
    a, b = excessive_terms(model, f, s, t, rng)
    return a + b
