"""Adaptive integration with dense output and event localization.

The stepper itself lives in ``vwshoot._kernels`` (compiled when available,
pure Python otherwise); this module owns the configuration contract, the
Trajectory container, event bisection and time reversal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (MaxStepsExceeded, NonFiniteState, OutOfSpan,
                     StepSizeUnderflow)
from .fields import VectorField

# chunks grow geometrically: early exits stay cheap, long runs amortize the
# per-chunk fold overhead
_CHUNK0 = 16
_CHUNK_MAX = 512


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = np.inf
    min_step: float = 0.0
    event_tol: float = 1e-10
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.event_tol <= 0:
            raise ValueError("event tolerance must be positive")
        if self.min_step > self.max_step:
            raise ValueError("min_step must not exceed max_step")


@dataclass(frozen=True)
class EventSpec:
    """Scalar event function g(t, x) with a crossing direction.

    With batch=True the callable receives the whole chunk at once
    (ts array, states matrix) and returns an array of values.
    """
    g: object
    direction: str = "any"          # rising | falling | any
    terminal: bool = False
    name: str = ""
    batch: bool = False

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"bad direction {self.direction!r}")

    def values(self, ts, xs):
        if self.batch:
            return np.asarray(self.g(ts, xs), dtype=float)
        return np.array([self.g(t, x) for t, x in zip(ts, xs)], dtype=float)

    def value(self, t, x):
        if self.batch:
            return float(self.g(np.array([t]), np.asarray(x)[None, :])[0])
        return float(self.g(t, x))


@dataclass(frozen=True)
class EventHit:
    t: float
    x: np.ndarray
    index: int
    name: str = ""


class Trajectory:
    """Dense-output solution segment.

    Nodes are the accepted integration steps; between consecutive nodes the
    quartic interpolant of the embedded pair is evaluated.  Node times are
    strictly increasing regardless of integration direction.
    """

    interpolation_order = 4

    def __init__(self, times, states, derivs, seg_anchor, seg_h, seg_x0, seg_K,
                 t_lo, t_hi):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        self._anchor = np.asarray(seg_anchor, dtype=float)
        self._h = np.asarray(seg_h, dtype=float)          # signed real-time width
        self._x0 = np.asarray(seg_x0, dtype=float)
        self._K = np.asarray(seg_K, dtype=float)
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("node times must be strictly increasing")

    @property
    def dimension(self):
        return self.states.shape[1]

    @property
    def span(self):
        return (self.t_lo, self.t_hi)

    def _locate(self, t):
        slop = 1e-12 * (1.0 + abs(self.t_lo) + abs(self.t_hi))
        if t < self.t_lo - slop or t > self.t_hi + slop:
            raise OutOfSpan(f"t={t} outside [{self.t_lo}, {self.t_hi}]")
        if len(self._anchor) == 0:
            raise OutOfSpan(f"degenerate trajectory holds only t={self.t_lo}")
        return int(np.clip(np.searchsorted(self.times, t, side="right") - 1,
                           0, len(self._anchor) - 1))

    def evaluate_dense(self, t):
        t = float(t)
        k = np.searchsorted(self.times, t)
        if k < len(self.times) and self.times[k] == t:
            return self.states[k].copy()
        if len(self._anchor) == 0:
            slop = 1e-12 * (1.0 + abs(self.t_lo) + abs(self.t_hi))
            if abs(t - self.times[0]) <= slop:
                return self.states[0].copy()
        i = self._locate(t)
        theta = (t - self._anchor[i]) / self._h[i]
        return _kernels.dense_eval(self._x0[i], abs(self._h[i]), self._K[i], theta)

    def sample(self, ts):
        ts = np.asarray(ts, dtype=float)
        return np.vstack([self.evaluate_dense(t) for t in ts])

    def to_csv(self, path):
        n = self.dimension
        header = "t," + ",".join(f"x{i+1}" for i in range(n))
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for t, x in zip(self.times, self.states):
                cells = [format(t, ".17g")] + [format(v, ".17g") for v in x]
                fh.write(",".join(cells) + "\n")

    def restricted(self, t_lo, t_hi):
        """View of the trajectory clipped to [t_lo, t_hi] (node-aligned)."""
        if t_lo < self.t_lo - 1e-12 or t_hi > self.t_hi + 1e-12:
            raise OutOfSpan("restriction exceeds the stored span")
        i = int(np.searchsorted(self.times, t_lo, side="left"))
        j = int(np.searchsorted(self.times, t_hi, side="right"))
        i = max(0, i - 1)
        j = min(len(self.times), j + 1)
        return Trajectory(self.times[i:j], self.states[i:j], self.derivs[i:j],
                          self._anchor[i:j - 1], self._h[i:j - 1],
                          self._x0[i:j - 1], self._K[i:j - 1],
                          max(t_lo, self.t_lo), min(t_hi, self.t_hi))


def _select_initial_step(field, t0, x0, f0, direction, rtol, atol, h_max):
    scale = atol + rtol * np.abs(x0)
    d0 = np.sqrt(np.mean((x0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    x1 = x0 + direction * h0 * f0
    f1 = field(t0 + direction * h0, x1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, h_max)


def _bisect_event(spec, seg_eval, t_a, t_b, g_a, g_b, tol):
    # bisection on the dense output; 60 iterations cap
    a, b, ga = t_a, t_b, g_a
    t_mid = 0.5 * (a + b)
    for _ in range(60):
        t_mid = 0.5 * (a + b)
        gm = spec.value(t_mid, seg_eval(t_mid))
        if abs(gm) <= tol or (b - a) <= 1e-15 * max(1.0, abs(a), abs(b)):
            return t_mid
        if (ga < 0) == (gm < 0):
            a, ga = t_mid, gm
        else:
            b = t_mid
    return t_mid


def _crossings(direction, g_vals):
    """Mask over segments: sign change between consecutive g values.

    Left endpoints are open (a strict sign on the left) so a value landing
    exactly on zero fires once, in the segment that reaches it.
    """
    a, b = g_vals[:-1], g_vals[1:]
    if direction == "rising":
        return (a < 0) & (b >= 0)
    if direction == "falling":
        return (a > 0) & (b <= 0)
    return ((a < 0) & (b >= 0)) | ((a > 0) & (b <= 0))


class _Accumulator:
    """Collects chunk arrays and assembles the Trajectory at the end."""

    def __init__(self, field, t0, x0, f0_true, backward):
        self.field = field
        self.backward = backward
        self.t0 = t0
        self.x0 = x0
        self.f0 = f0_true
        self.ts = []        # real-time right endpoints, chunked
        self.xs = []
        self.fs = []
        self.anchor = []
        self.h = []
        self.x_left = []
        self.K = []
        self.t_last = t0
        self.x_last = x0
        self.truncated = None   # (t_hit, x_hit)

    def add_chunk(self, t_left_arr, t_right_arr, x_left_arr, xs_c, ks_c, Ks_c,
                  keep=None):
        if keep is not None:
            t_left_arr = t_left_arr[:keep]
            t_right_arr = t_right_arr[:keep]
            x_left_arr = x_left_arr[:keep]
            xs_c = xs_c[:keep]
            ks_c = ks_c[:keep]
            Ks_c = Ks_c[:keep]
        if len(t_right_arr) == 0:
            return
        self.ts.append(t_right_arr)
        self.xs.append(xs_c)
        self.fs.append(-ks_c if self.backward else ks_c)
        self.anchor.append(t_left_arr)
        self.h.append(t_right_arr - t_left_arr)
        self.x_left.append(x_left_arr)
        self.K.append(Ks_c)
        self.t_last = float(t_right_arr[-1])
        self.x_last = xs_c[-1]

    def truncate(self, t_hit, x_hit):
        self.truncated = (float(t_hit), np.asarray(x_hit, dtype=float))

    def build(self):
        n = self.field.dimension
        if self.ts:
            ts = np.concatenate(self.ts)
            xs = np.vstack(self.xs)
            fs = np.vstack(self.fs)
            anchor = np.concatenate(self.anchor)
            h = np.concatenate(self.h)
            x_left = np.vstack(self.x_left)
            K = np.vstack(self.K)
        else:
            ts = np.empty(0)
            xs = np.empty((0, n))
            fs = np.empty((0, n))
            anchor = np.empty(0)
            h = np.empty(0)
            x_left = np.empty((0, n))
            K = np.empty((0, 7, n))
        if self.truncated is not None:
            t_hit, x_hit = self.truncated
            ts = np.concatenate([ts[:-1], [t_hit]]) if len(ts) else np.array([t_hit])
            xs = np.vstack([xs[:-1], x_hit]) if len(xs) else x_hit[None, :]
            fs = np.vstack([fs[:-1], self.field(t_hit, x_hit)[None, :]])
        ts = np.concatenate([[self.t0], ts])
        xs = np.vstack([self.x0[None, :], xs])
        fs = np.vstack([self.f0[None, :], fs])
        if self.backward:
            ts, xs, fs = ts[::-1].copy(), xs[::-1].copy(), fs[::-1].copy()
            anchor, h = anchor[::-1].copy(), h[::-1].copy()
            x_left, K = x_left[::-1].copy(), K[::-1].copy()
        return Trajectory(ts, xs, fs, anchor, h, x_left, K, ts[0], ts[-1])


def integrate(field: VectorField, t0, x0, t_end, config: IntegratorConfig,
              events=()) -> tuple[Trajectory, list[EventHit]]:
    """Integrate the field from (t0, x0) to t_end (backward allowed).

    Halts at the first terminal event; every localized event satisfies
    |g| <= config.event_tol at the hit (measured on the dense output).
    StepSizeUnderflow / NonFiniteState / MaxStepsExceeded carry the partial
    trajectory in their ``partial`` attribute.
    """
    t0 = float(t0)
    t_end = float(t_end)
    x0 = np.asarray(x0, dtype=float)
    backward = t_end < t0
    work_field = field.reversed() if backward else field
    s0, s_end = (-t0, -t_end) if backward else (t0, t_end)
    if backward:
        base = field._eval

        def raw(s, y):
            return -np.asarray(base(-s, y), dtype=float)
    else:
        raw = field._eval

    f0_true = field(t0, x0)
    if not np.all(np.isfinite(f0_true)):
        raise NonFiniteState(t0)

    hits: list[EventHit] = []
    acc = _Accumulator(field, t0, x0, f0_true, backward)
    if t_end == t0:
        return acc.build(), hits

    sgn = -1.0 if backward else 1.0
    g_prev = np.empty(len(events))
    probe_eps = max(1e-8, config.event_tol)
    x_probe = x0 + sgn * probe_eps * f0_true
    for idx, spec in enumerate(events):
        g0 = spec.value(t0, x0)
        g_prev[idx] = g0
        if abs(g0) <= config.event_tol:
            gp = spec.value(t0 + sgn * probe_eps, x_probe)
            moving = gp - g0
            fire = ((spec.direction == "rising" and moving > 0 and gp > 0)
                    or (spec.direction == "falling" and moving < 0 and gp < 0)
                    or (spec.direction == "any" and gp != 0 and abs(gp) > abs(g0)))
            if fire:
                hits.append(EventHit(t0, x0.copy(), idx, spec.name))
                if spec.terminal:
                    return acc.build(), hits

    span = abs(t_end - t0)
    min_step = max(config.min_step, 1e-14 * max(1.0, abs(s0), abs(s_end)))
    f0_work = -f0_true if backward else f0_true
    h = _select_initial_step(work_field, s0, x0, f0_work, 1.0,
                             config.rtol, config.atol, min(config.max_step, span))
    facold = 1e-4
    s_cur, x_cur, k_cur = s0, x0.copy(), f0_work
    steps_used = 0
    failure = None
    chunk = _CHUNK0

    while True:
        budget = min(chunk, config.max_steps - steps_used)
        chunk = min(2 * chunk, _CHUNK_MAX)
        if budget <= 0:
            failure = MaxStepsExceeded(f"exceeded {config.max_steps} steps")
            break
        status, ts_c, xs_c, ks_c, hs_c, Ks_c, k_cur, h, facold = _kernels.run(
            raw, s_cur, x_cur, k_cur, s_end, config.rtol, config.atol,
            config.max_step, min_step, h, facold, budget)
        steps_used += len(ts_c)

        if len(ts_c):
            s_left = np.concatenate([[s_cur], ts_c[:-1]])
            x_left = np.vstack([x_cur[None, :], xs_c[:-1]])
            t_left = -s_left if backward else s_left
            t_right = -ts_c if backward else ts_c

            # event scan over the chunk
            terminal_idx = None     # (segment index, hit)
            if events:
                for idx, spec in enumerate(events):
                    g_vals = np.concatenate([[g_prev[idx]],
                                             spec.values(t_right, xs_c)])
                    g_prev[idx] = g_vals[-1]
                    mask = _crossings(spec.direction, g_vals)
                    if not mask.any():
                        continue
                    for seg_i in np.nonzero(mask)[0]:
                        if terminal_idx is not None and seg_i > terminal_idx[0]:
                            break
                        a_t, h_t = t_left[seg_i], t_right[seg_i] - t_left[seg_i]
                        xl, Kseg = x_left[seg_i], Ks_c[seg_i]

                        def seg_eval(t, a_t=a_t, h_t=h_t, xl=xl, Kseg=Kseg):
                            return _kernels.dense_eval(xl, abs(h_t), Kseg,
                                                       (t - a_t) / h_t)

                        lo_t, hi_t = ((t_right[seg_i], t_left[seg_i]) if backward
                                      else (t_left[seg_i], t_right[seg_i]))
                        g_lo = g_vals[seg_i] if not backward else g_vals[seg_i + 1]
                        g_hi = g_vals[seg_i + 1] if not backward else g_vals[seg_i]
                        t_hit = _bisect_event(spec, seg_eval, lo_t, hi_t,
                                              g_lo, g_hi, config.event_tol)
                        hit = EventHit(float(t_hit), seg_eval(t_hit), idx, spec.name)
                        hits.append(hit)
                        if spec.terminal and (terminal_idx is None
                                              or seg_i < terminal_idx[0]):
                            terminal_idx = (int(seg_i), hit)

            if terminal_idx is not None:
                seg_i, hit = terminal_idx
                at_left_node = (abs(hit.t - t_left[seg_i])
                                <= 1e-14 * (1.0 + abs(hit.t)))
                if at_left_node:
                    # the hit coincides with an already-stored node
                    acc.add_chunk(t_left, t_right, x_left, xs_c, ks_c, Ks_c,
                                  keep=seg_i)
                else:
                    acc.add_chunk(t_left, t_right, x_left, xs_c, ks_c, Ks_c,
                                  keep=seg_i + 1)
                    acc.truncate(hit.t, hit.x)
                cut = hit.t
                if backward:
                    hits = [h_ for h_ in hits if h_.t >= cut - 1e-15]
                else:
                    hits = [h_ for h_ in hits if h_.t <= cut + 1e-15]
                return acc.build(), hits

            acc.add_chunk(t_left, t_right, x_left, xs_c, ks_c, Ks_c)
            s_cur = float(ts_c[-1])
            x_cur = xs_c[-1]

        if status == _kernels.OK:
            return acc.build(), hits
        if status == _kernels.UNDERFLOW:
            failure = StepSizeUnderflow(-s_cur if backward else s_cur, x_cur.copy())
            break
        if status == _kernels.NONFINITE:
            failure = NonFiniteState(-s_cur if backward else s_cur)
            break
        # BUDGET: continue with the next chunk

    failure.partial = acc.build()
    failure.partial_hits = hits
    raise failure


def evaluate_dense(traj: Trajectory, t):
    return traj.evaluate_dense(t)
