"""Deterministic sampling of phase-space regions."""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc


class RegionSampler:
    """Point generator over a (possibly time-dependent) bounding box.

    strategy 'grid' lays a regular lattice, 'quasi-random' uses a scrambled
    Sobol sequence seeded for reproducibility.  All samples lie in the
    declared box; region predicates are applied by the callers (rejection).
    """

    def __init__(self, box, count=2048, strategy="quasi-random", seed=0):
        if strategy not in ("grid", "quasi-random"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self._box = box
        self.count = int(count)
        self.strategy = strategy
        self.seed = int(seed)

    def box_at(self, t):
        box = self._box(t) if callable(self._box) else self._box
        lo = np.asarray(box[0], dtype=float)
        hi = np.asarray(box[1], dtype=float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("invalid bounding box")
        return lo, hi

    def points(self, t):
        lo, hi = self.box_at(t)
        d = lo.shape[0]
        if self.strategy == "grid":
            per_axis = max(2, int(round(self.count ** (1.0 / d))))
            axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(d)]
            mesh = np.meshgrid(*axes, indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=1)
        eng = qmc.Sobol(d, scramble=True, seed=self.seed)
        u = eng.random(self.count)
        return lo + u * (hi - lo)
