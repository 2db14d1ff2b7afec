"""Almost-period scan: shift defects of a trajectory on a uniform grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpanTooShort


@dataclass
class APScan:
    epsilon: float
    taus: np.ndarray          # scanned shifts
    defects: np.ndarray       # sup-norm defect per shift
    accepted: np.ndarray      # shifts with defect <= epsilon
    max_gap: float            # largest gap between accepted shifts

    def profile(self):
        return list(zip(self.taus, self.defects))


def almost_period_scan(traj, epsilon, tau_grid, dt=None) -> APScan:
    """Defect profile sup_t ||x(t + tau) - x(t)|| over a shift grid.

    The trajectory is resampled uniformly; shifts snap to multiples of the
    resampling step so the comparison is an exact array overlap.  The span
    must exceed the largest shift by a factor of at least 3.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or len(tau_grid) == 0:
        raise ValueError("tau_grid must be a nonempty 1-D array")
    tau_max = float(np.max(tau_grid))
    lo, hi = traj.span
    span = hi - lo
    if tau_max <= 0:
        raise ValueError("largest shift must be positive")
    if span < 3.0 * tau_max - 1e-9:
        raise SpanTooShort(f"span {span} below 3 x max shift {tau_max}")

    if dt is None:
        dt = max(tau_max / 2048.0, span / 200_000.0)
    n = int(np.floor(span / dt)) + 1
    ts = lo + dt * np.arange(n)
    xs = traj.sample(ts)

    steps = np.unique(np.maximum(np.rint(tau_grid / dt).astype(int), 0))
    taus = steps * dt
    defects = np.empty(len(steps))
    for i, k in enumerate(steps):
        if k == 0:
            defects[i] = 0.0
            continue
        diff = xs[k:] - xs[:-k]
        defects[i] = float(np.max(np.linalg.norm(diff, axis=1)))
    accepted = taus[defects <= epsilon]
    if len(accepted) >= 2:
        max_gap = float(np.max(np.diff(accepted)))
    elif len(accepted) == 1:
        max_gap = float(taus[-1] - accepted[0]) if len(taus) > 1 else 0.0
    else:
        max_gap = float("inf")
    return APScan(epsilon=float(epsilon), taus=taus, defects=defects,
                  accepted=accepted, max_gap=max_gap)
