"""Bifurcators built by switching, and the coupled bivariate cell system.

A bifurcator ``(X, Y)`` starts from one size; the two components agree up to
the switching time ``tau``, at which the pre-jump size is shared between them
(``X(tau) + Y(tau) = X(tau-)``), and evolve independently afterwards.

Random-stream layout for one bifurcator with stream ``r``:
``r.split(0)`` drives the Lévy path of X, ``r.split(1)`` the switching marks
and ``r.split(2)`` the continuation of Y after the switch.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .cellsystem import MAX_LEVY_TIME, ResourceLimits, Snapshot, grow_cell_path
from .lamperti import CellPath
from .levy import (
    ATOM_TOL,
    LOG2,
    ConfigurationError,
    JumpMeasure,
    SkeletonSampler,
    SnlpCharacteristics,
    has_negative_cumulant,
)
from .rng import RandomStream, as_stream
from .switching import SwitchProbability, canonical_switch_probability, kappa_mismatch, weighted_rate


class PreconditionError(ConfigurationError):
    """The two characteristics cannot be coupled into a bifurcator."""


def switching_time_rate(p: SwitchProbability, levy: JumpMeasure) -> float:
    """``int p dLambda`` over ``(-inf, 0)`` minus the fixed point ``-log 2``."""
    rate, bad = weighted_rate(p, levy, exclude_fixed_point=True)
    if bad is not None:
        raise ConfigurationError(f"switching rate diverges on {bad}")
    # densities put no mass on the single point -log 2
    return rate


@dataclass(frozen=True, eq=False)
class BifurcatorPath:
    path_x: CellPath
    path_y: CellPath
    switch_time: float  # real time, inf if no switch within the horizon
    switch_levy_time: float = math.inf

    def junction_error(self) -> float:
        """``|X(tau) + Y(tau) - X(tau-)|`` (0 when there is no switch)."""
        t = self.switch_time
        if not math.isfinite(t):
            return 0.0
        return abs(float(self.path_x.size_at(t)) + float(self.path_y.size_at(t)) - float(self.path_x.left_size_at(t)))


def _check_pair(chars_x: SnlpCharacteristics, chars_y: SnlpCharacteristics, alpha: float) -> None:
    bad = kappa_mismatch(chars_x, chars_y)
    if bad is not None:
        raise PreconditionError(f"characteristics do not share a cumulant: they differ in {bad}")
    if alpha != 0 and not has_negative_cumulant(chars_x):
        raise PreconditionError("self-similar bifurcator needs kappa(q) < 0 for some q > 0")


def concatenate(head: CellPath, t_switch: float, left_value: float, tail: CellPath) -> CellPath:
    """``head`` on ``[0, t_switch)`` followed by ``tail`` shifted to start at ``t_switch``."""
    keep = head.knot_times < t_switch
    times = np.concatenate((head.knot_times[keep], t_switch + tail.knot_times))
    left = np.concatenate((head.knot_left[keep], [left_value], tail.knot_left[1:]))
    right = np.concatenate((head.knot_right[keep], tail.knot_right))
    slopes = np.concatenate((head.slopes[keep], tail.slopes))
    levy = np.concatenate((head.levy_times[keep], np.nan * np.ones(tail.levy_times.size)))
    return CellPath(
        initial_size=head.initial_size, index=head.index, knot_times=times, knot_left=left,
        knot_right=right, slopes=slopes, levy_times=levy, end=t_switch + tail.end,
        death_time=t_switch + tail.death_time, horizon=head.horizon,
    )


def _build(chars_x, chars_y, alpha, x, horizon, rng, with_y=True, max_levy_time=MAX_LEVY_TIME,
           switch_p: SwitchProbability | None = None):
    stream = as_stream(rng)
    p = switch_p if switch_p is not None else canonical_switch_probability(chars_y)
    sampler = SkeletonSampler(chars_x, stream.split(0).generator)
    path_x = grow_cell_path(sampler, alpha, x, horizon, 0.0, max_levy_time)
    # Lévy-level jumps covered by the real-time path
    skel = sampler.skeleton(sampler.covered)
    z = skel.event_sizes
    tau_levy, tau, k_knot = math.inf, math.inf, -1
    if z.size:
        marks = stream.split(1).generator.random(z.size) < np.asarray(p(z), dtype=float)
        hits = np.flatnonzero(marks & (np.abs(z + LOG2) > ATOM_TOL))
        if hits.size:
            j = hits[0]
            s_j = float(skel.event_times[j])
            k = int(np.searchsorted(path_x.levy_times, s_j, side="left"))
            if k < path_x.levy_times.size and path_x.levy_times[k] == s_j:
                t_j = float(path_x.knot_times[k])
                if t_j < horizon and t_j < path_x.death_time:
                    tau_levy, tau, k_knot = s_j, t_j, k
    if not math.isfinite(tau) or not with_y:
        return BifurcatorPath(path_x, path_x if not math.isfinite(tau) else None, tau, tau_levy)
    left = float(path_x.knot_left[k_knot])
    z_j = math.log(path_x.knot_right[k_knot] / left)
    y = left * -math.expm1(z_j)
    y_sampler = SkeletonSampler(chars_y, stream.split(2).generator)
    tail = grow_cell_path(y_sampler, alpha, y, horizon - tau, 0.0, max_levy_time)
    path_y = concatenate(path_x, tau, left, tail)
    return BifurcatorPath(path_x, path_y, tau, tau_levy)


def build_homogeneous_bifurcator(chars_x: SnlpCharacteristics, chars_y: SnlpCharacteristics, x: float,
                                 horizon: float, rng) -> BifurcatorPath:
    """Couple the homogeneous cell processes of ``chars_x`` and ``chars_y`` from size ``x``."""
    _check_pair(chars_x, chars_y, 0.0)
    return _build(chars_x, chars_y, 0.0, x, horizon, rng)


def build_self_similar_bifurcator(chars_x: SnlpCharacteristics, chars_y: SnlpCharacteristics, alpha: float,
                                  x: float, horizon: float, rng) -> BifurcatorPath:
    """Self-similar bifurcator: switching at Lévy level, Lamperti clock on top."""
    _check_pair(chars_x, chars_y, alpha)
    return _build(chars_x, chars_y, alpha, x, horizon, rng)


# ---------------------------------------------------------------------------
# coupled bivariate system
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CoupledNode:
    label: tuple[int, ...]  # 0 = left child (X(delta)), 1 = right child (-Delta X(delta))
    birth_time: float
    initial_size: float
    bifurcator: BifurcatorPath | None
    lifetime: float  # local; inf if alive at the horizon
    marked: bool = False
    kill_reason: str | None = None  # "eps" | "absorbed" | "incomplete" | None (branched or alive)
    child_sizes: tuple[float, float] | None = None

    @property
    def death(self) -> float:
        return self.birth_time + self.lifetime

    def to_record(self) -> dict:
        return {
            "label": list(self.label), "birth": self.birth_time,
            "lifetime": self.lifetime if math.isfinite(self.lifetime) else None,
            "marked": self.marked, "kill_reason": self.kill_reason,
            "child_sizes": list(self.child_sizes) if self.child_sizes else None,
        }


@dataclass(eq=False)
class CoupledSystem:
    nodes: dict[tuple[int, ...], CoupledNode]
    eps: float
    horizon: float
    alpha: float
    chars_x: SnlpCharacteristics
    chars_y: SnlpCharacteristics
    root: RandomStream
    complete: bool = True
    notes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def node_stream(self, label) -> RandomStream:
        return node_stream(self.root, label)

    def iter_ndjson(self) -> Iterator[str]:
        for label in sorted(self.nodes):
            yield json.dumps(self.nodes[label].to_record(), sort_keys=True)

    def snapshot(self, t: float) -> Snapshot:
        """The multiset ``{X_v(t - beta_v) : beta_v <= t < beta_v + delta_v}``."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"t must lie in [0, {self.horizon}]")
        sizes = []
        for node in self.nodes.values():
            if node.bifurcator is None or not node.birth_time <= t < node.death:
                continue
            v = float(node.bifurcator.path_x.size_at(t - node.birth_time))
            if v > 0:
                sizes.append(v)
        return Snapshot(float(t), np.sort(np.asarray(sizes, dtype=float))[::-1])

    def leftmost_branch_size(self, t: float) -> float:
        """Leftmost X-branch at ``t``, continued past its kill time by the killed node's own path."""
        label: tuple[int, ...] = ()
        while True:
            node = self.nodes.get(label)
            if node is None:
                raise RuntimeError("leftmost branch left the simulated tree")
            if node.bifurcator is None:
                # killed at birth: rebuild its X path from its own stream
                bif = _build(self.chars_x, self.chars_y, self.alpha, node.initial_size,
                             self.horizon - node.birth_time, self.node_stream(label), with_y=False)
                return float(bif.path_x.size_at(t - node.birth_time))
            if t < node.death or node.child_sizes is None:
                return float(node.bifurcator.path_x.size_at(t - node.birth_time))
            label = label + (0,)


def node_stream(root: RandomStream, label) -> RandomStream:
    # the length prefix keeps node streams and their sub-streams disjoint
    return root.split(0, len(label), *label)


def simulate_coupled_system(chars_x: SnlpCharacteristics, chars_y: SnlpCharacteristics, alpha: float,
                            x: float, eps: float, horizon: float,
                            limits: ResourceLimits = ResourceLimits(), rng=0) -> CoupledSystem:
    """Binary tree of bifurcators with lifetimes ``min(tau, T_eps, T_bigjump)``."""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    _check_pair(chars_x, chars_y, alpha)
    p = canonical_switch_probability(chars_y)
    root = as_stream(rng)
    system = CoupledSystem({}, eps, horizon, alpha, chars_x, chars_y, root)
    queue = deque([((), 0.0, float(x))])
    events = 0
    while queue:
        label, birth, a = queue.popleft()
        if len(system.nodes) >= limits.max_nodes:
            system.complete = False
            system.notes.append("max_nodes")
            break
        if len(label) > limits.max_generation:
            system.complete = False
            if "max_generation" not in system.notes:
                system.notes.append("max_generation")
            continue
        if a <= eps:
            system.nodes[label] = CoupledNode(label, birth, a, None, 0.0, False, "eps")
            continue
        local_h = horizon - birth
        bif = _build(chars_x, chars_y, alpha, a, local_h, node_stream(root, label), with_y=False,
                     max_levy_time=limits.max_levy_time, switch_p=p)
        path = bif.path_x
        events += path.knot_times.size
        t_low = path.first_passage_below(eps)
        t_big = path.first_jump_exceeding(eps)
        tau = bif.switch_time
        delta = min(tau, t_low, t_big)
        node = CoupledNode(label, birth, a, bif, math.inf)
        if delta == math.inf or delta >= local_h:
            # no event inside the horizon: absorbed, incomplete or alive
            if path.death_time < local_h:
                node.lifetime, node.kill_reason = path.death_time, "absorbed"
            elif not path.complete:
                node.lifetime, node.kill_reason = path.coverage, "incomplete"
                system.complete = False
                if "max_levy_time" not in system.notes:
                    system.notes.append("max_levy_time")
        elif path.death_time < delta:
            node.lifetime, node.kill_reason = path.death_time, "absorbed"
        elif t_low == delta and t_low < min(t_big, tau):
            node.lifetime, node.kill_reason = delta, "eps"
        else:
            node.lifetime = delta
            node.marked = tau <= min(t_low, t_big)
            after = float(path.size_at(delta))
            before = float(path.left_size_at(delta))
            node.child_sizes = (after, before - after)
            queue.append((label + (0,), birth + delta, after))
            queue.append((label + (1,), birth + delta, before - after))
        system.nodes[label] = node
        if events > limits.max_wall_events:
            system.complete = False
            system.notes.append("max_wall_events")
            break
    return system
