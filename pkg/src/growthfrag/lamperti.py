"""Lamperti time change: self-similar cell paths from SNLP skeletons.

A cell path is stored as a list of knots in real time.  On the piece after
knot ``k`` the Lévy path has constant slope ``m`` and the Lévy clock runs at
speed ``ds/dt = X(t)**alpha``, so that

* ``X(t)**(-alpha) = X_k**(-alpha) - alpha*m*(t - t_k)``   (alpha != 0),
* ``X(t) = X_k * exp(m*(t - t_k))``                         (alpha == 0).

Every quantity below (values, passage times, power integrals) is evaluated in
closed form from this description.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy import PathSkeleton

CEMETERY = 0.0


def _phi(b, ds):
    """``(1 - exp(-b*ds)) / b`` with the ``b -> 0`` limit ``ds``; ``ds`` may be inf."""
    b = np.asarray(b, dtype=float)
    ds = np.asarray(ds, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        finite = -np.expm1(-b * ds) / np.where(b == 0, 1.0, b)
        out = np.where(b == 0, ds, finite)
        # infinite Lévy duration: converges only when b > 0
        out = np.where(np.isinf(ds) & (b > 0), 1.0 / np.where(b > 0, b, 1.0), out)
        out = np.where(np.isinf(ds) & (b <= 0), np.inf, out)
    return out


@dataclass(frozen=True, eq=False)
class CellPath:
    """Piecewise-exact self-similar cell path on ``[0, end)``.

    ``death_time`` is the absorption time (inf if the cell is alive at ``end``);
    ``end`` may be smaller than the requested horizon when the underlying
    skeleton was too short, in which case ``complete`` is False.
    """

    initial_size: float
    index: float
    knot_times: np.ndarray
    knot_left: np.ndarray
    knot_right: np.ndarray
    slopes: np.ndarray
    levy_times: np.ndarray
    end: float
    death_time: float = math.inf
    horizon: float = math.inf

    @property
    def alpha(self) -> float:
        return self.index

    @property
    def complete(self) -> bool:
        return self.end >= self.horizon or self.death_time <= self.end

    @property
    def coverage(self) -> float:
        return min(self.end, self.death_time)

    # -- pointwise evaluation ---------------------------------------------------
    def _advance(self, k, dt):
        xk = self.knot_right[k]
        m = self.slopes[k]
        a = self.index
        if a == 0.0:
            return xk * np.exp(m * dt)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            base = 1.0 - a * m * xk ** a * dt
            return np.where(base > 0, xk * np.abs(base) ** (-1.0 / a), np.where(a * m > 0, np.inf, 0.0))

    def size_at(self, t):
        """Right-continuous size; ``CEMETERY`` (0) at or after ``death_time``."""
        t = np.asarray(t, dtype=float)
        if np.any(t > self.end) and np.any(t[t > self.end] < self.death_time):
            raise ValueError(f"path only covers [0, {self.end}]")
        k = np.maximum(np.searchsorted(self.knot_times, t, side="right") - 1, 0)
        val = self._advance(k, t - self.knot_times[k])
        return np.where(t >= self.death_time, CEMETERY, val)

    def left_size_at(self, t):
        t = np.asarray(t, dtype=float)
        k = np.maximum(np.searchsorted(self.knot_times, t, side="left") - 1, 0)
        val = self._advance(k, t - self.knot_times[k])
        val = np.where(t <= 0, self.initial_size, val)
        return np.where(t > self.death_time, CEMETERY, val)

    def segment_end_left(self) -> np.ndarray:
        """Left limit at the end of each piece (at the next knot, or at coverage end)."""
        n = self.knot_times.size
        out = np.empty(n)
        if n > 1:
            out[:-1] = self.knot_left[1:]
        last_end = self.coverage
        out[-1] = self._advance(n - 1, last_end - self.knot_times[-1]) if math.isfinite(last_end) else np.nan
        return out

    # -- jumps ------------------------------------------------------------------
    def jumps(self):
        """``(times, size_before, size_after)`` of the genuine jumps (knot 0 excluded)."""
        sel = self.knot_left[1:] != self.knot_right[1:]
        idx = np.flatnonzero(sel) + 1
        return self.knot_times[idx], self.knot_left[idx], self.knot_right[idx]

    def first_jump_exceeding(self, eps: float) -> float:
        """First time with ``-Delta X > eps`` (inf if none within coverage)."""
        t, before, after = self.jumps()
        hit = np.flatnonzero(before - after > eps)
        return float(t[hit[0]]) if hit.size else math.inf

    def first_passage_below(self, eps: float) -> float:
        """First time ``X`` enters ``(0, eps]`` before death (inf if it does not)."""
        x0 = self.knot_right
        if x0[0] <= eps:
            return 0.0
        xe = self.segment_end_left()
        lim = self.coverage
        n = x0.size
        by_jump = np.flatnonzero(x0 <= eps)
        by_drift = np.flatnonzero(np.nan_to_num(xe, nan=np.inf) <= eps)
        kj = by_jump[0] if by_jump.size else n
        kd = by_drift[0] if by_drift.size else n
        if kd < kj:
            k = kd
            if x0[k] <= eps:
                return float(self.knot_times[k])
            m, a, xk = self.slopes[k], self.index, x0[k]
            if a == 0.0:
                dt = math.log(eps / xk) / m
            else:
                dt = (xk ** -a - eps ** -a) / (a * m)
            t = float(self.knot_times[k] + dt)
            # rounding can put the crossing marginally past the piece end
            upper = float(self.knot_times[k + 1]) if k + 1 < n else lim
            return min(max(t, float(self.knot_times[k])), upper)
        if kj < n:
            t = float(self.knot_times[kj])
            return t if t < self.death_time else math.inf
        return math.inf

    # -- integrals --------------------------------------------------------------
    def integrate_power(self, p: float, t0: float = 0.0, t1: float | None = None) -> float:
        """``int_{t0}^{t1} X(t)**p dt`` (cemetery contributes zero)."""
        if t1 is None:
            t1 = self.coverage
        t1 = min(t1, self.death_time)
        if not t1 > t0:
            return 0.0
        if t1 > self.end:
            raise ValueError(f"path only covers [0, {self.end}]")
        times = self.knot_times
        starts = np.maximum(times, t0)
        ends = np.minimum(np.append(times[1:], np.inf), t1)
        sel = ends > starts
        if not np.any(sel):
            return 0.0
        k = np.flatnonzero(sel)
        xs = self._advance(k, starts[k] - times[k])
        dur = ends[k] - starts[k]
        m = self.slopes[k]
        a = self.index
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            if a == 0.0:
                rate = p * m
                val = xs ** p * np.where(rate == 0, dur, np.expm1(rate * dur) / np.where(rate == 0, 1.0, rate))
            else:
                A = xs ** -a
                B = a * m
                r = 1.0 - p / a
                u = np.log1p(-B * dur / A)
                if r == 0.0:
                    piece = -u / np.where(B == 0, 1.0, B)
                else:
                    piece = -(A ** r) * np.expm1(r * u) / (np.where(B == 0, 1.0, B) * r)
                val = np.where(B == 0, A ** (-p / a) * dur, piece)
        return float(np.sum(val))


def _segments_with_tail(skeleton: PathSkeleton):
    s, v, jumps, m, s_end = skeleton.segments()
    ds = np.append(s[1:], s_end) - s
    killed = math.isfinite(skeleton.kill_time)
    if skeleton.tail_slope is not None and not killed:
        ds[-1] = math.inf
        s_end = math.inf
    return s, v, jumps, m, ds, s_end, killed


def lamperti_integrals(skeleton: PathSkeleton, alpha: float):
    """Cumulative ``int_0^{s_k} exp(-alpha*xi)`` at each Lévy knot, plus the total."""
    s, v, jumps, m, ds, s_end, killed = _segments_with_tail(skeleton)
    dur = np.exp(-alpha * v) * _phi(alpha * m, ds) if alpha != 0 else ds
    cum = np.concatenate(([0.0], np.cumsum(dur)))
    return s, v, m, ds, cum, killed


def time_change(skeleton: PathSkeleton, alpha: float, t: float) -> float:
    """``inf{r : int_0^r exp(-alpha*xi(s)) ds >= t}`` (inf if never reached)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    s, v, m, ds, cum, killed = lamperti_integrals(skeleton, alpha)
    total = cum[-1]
    if t >= total:
        if killed or skeleton.tail_slope is not None:
            return math.inf
        if t == total:
            return float(s[-1] + ds[-1])
        raise ValueError("skeleton too short to evaluate the time change at this t")
    if alpha == 0:
        return float(t)
    k = int(np.searchsorted(cum, t, side="left")) - 1
    k = min(max(k, 0), s.size - 1)
    rem = t - cum[k]
    b = alpha * m[k]
    if b == 0:
        return float(s[k] + rem * math.exp(alpha * v[k]))
    arg = rem * b * math.exp(alpha * v[k])
    if arg >= 1.0:
        return math.inf if not math.isfinite(ds[k]) else float(s[k] + ds[k])
    return float(s[k] - math.log1p(-arg) / b)


def self_similar_path(skeleton: PathSkeleton, alpha: float, x: float, horizon: float) -> CellPath:
    """Cell path ``t -> x*exp(xi(tau_{t x^alpha}))`` on ``[0, horizon]``."""
    if not x > 0:
        raise ValueError("initial size must be positive")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    s, v, jumps, m, ds, s_end, killed = _segments_with_tail(skeleton)
    v = v - skeleton.start_value
    if alpha == 0:
        dur = ds
    else:
        dur = (x * np.exp(v)) ** -alpha * _phi(alpha * m, ds)
    t_knots = np.concatenate(([0.0], np.cumsum(dur)[:-1]))
    total = float(np.sum(dur))
    keep = t_knots < horizon
    keep[0] = True
    k = np.flatnonzero(keep)
    right = x * np.exp(v[k])
    left = x * np.exp(v[k] - jumps[k])
    death = math.inf
    end = min(horizon, total)
    if killed:
        death = total if total <= horizon else math.inf
    elif skeleton.tail_slope is not None:
        death = total if total <= horizon else math.inf
        end = horizon
    if math.isfinite(death):
        end = max(end, death)
    return CellPath(
        initial_size=float(x), index=float(alpha), knot_times=t_knots[k], knot_left=left,
        knot_right=right, slopes=m[k].astype(float), levy_times=s[k], end=float(end),
        death_time=float(death), horizon=float(horizon),
    )


def levy_to_real_time(path: CellPath, skeleton: PathSkeleton, s_levy: float) -> float:
    """Real time at which the Lévy clock of ``path`` reaches ``s_levy``."""
    if not math.isfinite(s_levy):
        return math.inf
    if path.index == 0:
        return float(s_levy)
    k = int(np.searchsorted(path.levy_times, s_levy, side="right")) - 1
    if k < 0:
        return 0.0
    ds = s_levy - path.levy_times[k]
    a = path.index
    xk = path.knot_right[k]
    return float(path.knot_times[k] + xk ** -a * _phi(a * path.slopes[k], ds))
