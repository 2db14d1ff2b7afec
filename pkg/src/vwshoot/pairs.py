"""V-W pairs: representation, sampled condition checks and bound formulas.

A pair couples a spatially coercive estimating function V with a guiding
function W whose derivative along the flow is positive wherever V > 0.  All
region-quantified conditions are verified on finite samples and reported as
certificates with recorded worst witnesses; they are evidence, not proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.optimize import minimize

from .errors import (EmptyRegion, LevelSetNotFound, TrajectoryLeftW,
                     WindowTooShort)
from .fields import ScalarField, VectorField, lie_derivative
from .reports import FAIL, INCONCLUSIVE, PASS, ConditionReport
from .sampling import RegionSampler


@dataclass
class VWPair:
    """Estimating function V, guiding function W and the window constants.

    c_star may be math.inf (disables the lower slope inequality).  The box
    is the default sampling region; in_domain optionally restricts it.
    m_family, when present, maps a time to the InitialSet used by shooting.
    """

    V: ScalarField
    W: ScalarField
    c_star: float
    c_upper: float
    w_lower: float
    w_upper: float
    V_cap: float
    box: object = None
    in_domain: object = None
    m_family: object = None
    meta: dict = dfield(default_factory=dict)

    def __post_init__(self):
        if not self.w_lower < self.w_upper:
            raise ValueError("w_lower must be below w_upper")
        if not self.c_upper > 0:
            raise ValueError("c_upper must be positive")
        if self.c_star < 0:
            raise ValueError("c_star must be nonnegative (inf allowed)")

    def contains(self, t, x):
        if self.in_domain is not None and not self.in_domain(t, x):
            return False
        return True

    def in_window(self, t, x):
        return self.w_lower < self.W(t, x) < self.w_upper


def _time_grid(t_window, n):
    a, b = float(t_window[0]), float(t_window[1])
    if not b > a:
        raise ValueError("empty time window")
    return np.linspace(a, b, n)


def check_condition_A(pair: VWPair, field: VectorField, sampler: RegionSampler,
                      t_window, n_times=9) -> ConditionReport:
    """Sampled check of the two-sided slope inequality and guiding positivity.

    On every sample with V >= 0 inside the window the check requires
    Wdot > 0 and -c_* Wdot <= Vdot <= c* Wdot.  Raises EmptyRegion when no
    sample qualifies (inconclusive, distinct from fail).
    """
    worst = math.inf
    witness = None
    n_used = 0
    ratio_hi = -math.inf
    ratio_lo = -math.inf
    wdot_min = math.inf
    for t in _time_grid(t_window, n_times):
        for x in sampler.points(t):
            if not pair.contains(t, x):
                continue
            if pair.V(t, x) < 0 or not pair.in_window(t, x):
                continue
            n_used += 1
            wdot = lie_derivative(pair.W, field, t, x)
            vdot = lie_derivative(pair.V, field, t, x)
            wdot_min = min(wdot_min, wdot)
            slack = 1e-9 * (1.0 + abs(vdot) + abs(wdot))
            margins = [wdot - 1e-12]
            margins.append(pair.c_upper * wdot - vdot + slack)
            if math.isfinite(pair.c_star):
                margins.append(vdot + pair.c_star * wdot + slack)
            m = min(margins)
            if wdot > 0:
                ratio_hi = max(ratio_hi, vdot / wdot)
                ratio_lo = max(ratio_lo, -vdot / wdot)
            if m < worst:
                worst = m
                witness = (t, x)
    if n_used == 0:
        raise EmptyRegion("no sample satisfied V >= 0 inside the window")
    status = PASS if worst >= 0 else FAIL
    return ConditionReport(
        condition="A", status=status, worst_value=worst,
        witness_t=witness[0], witness_x=list(witness[1]), samples=n_used,
        constants={"measured_c_upper": ratio_hi, "measured_c_star": ratio_lo,
                   "min_Wdot": wdot_min})


def estimate_alpha(pair: VWPair, field: VectorField, sampler: RegionSampler, t):
    """Sampled lower estimate of inf Wdot over {V > 0} inside the window."""
    best = math.inf
    used = 0
    for x in sampler.points(t):
        if not pair.contains(t, x):
            continue
        if pair.V(t, x) <= 0 or not pair.in_window(t, x):
            continue
        used += 1
        best = min(best, lie_derivative(pair.W, field, t, x))
    if used == 0:
        raise EmptyRegion(f"no sample with V > 0 inside the window at t={t}")
    return best


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 20
    lam0: float = 1e3
    lam_max: float = 1e12
    level_tol: float = 1e-8
    maxiter: int = 600
    seed: int = 0
    n_candidates: int = 512


def _penalty_optimum(w_fn, v_fn, x0, sense, cfg):
    # adapt the penalty weight until the level-set residual is resolved
    lam = cfg.lam0
    x = np.asarray(x0, dtype=float)
    while lam <= cfg.lam_max:
        def obj(y):
            return sense * w_fn(y) + lam * v_fn(y) ** 2
        res = minimize(obj, x, method="Nelder-Mead",
                       options={"maxiter": cfg.maxiter * len(x),
                                "xatol": 1e-12, "fatol": 1e-14})
        x = res.x
        if abs(v_fn(x)) <= cfg.level_tol:
            return x
        lam *= 10.0
    return None


def level_extrema(pair: VWPair, t, optimizer_config: OptimizerConfig | None = None):
    """Min / max of W over the zero level set of V_t (penalty multistart)."""
    cfg = optimizer_config or OptimizerConfig()
    if pair.box is None:
        raise LevelSetNotFound("pair declares no sampling box")
    sampler = RegionSampler(pair.box, count=cfg.n_candidates,
                            strategy="quasi-random", seed=cfg.seed)
    pts = sampler.points(t)
    vabs = np.array([abs(pair.V(t, x)) for x in pts])
    order = np.argsort(vabs)[:cfg.n_starts]

    def w_fn(x):
        return pair.W(t, x)

    def v_fn(x):
        return pair.V(t, x)

    lo = math.inf
    hi = -math.inf
    found = False
    for sense in (+1.0, -1.0):
        for i in order:
            x = _penalty_optimum(w_fn, v_fn, pts[i], sense, cfg)
            if x is None:
                continue
            found = True
            w = w_fn(x)
            if sense > 0:
                lo = min(lo, w)
            else:
                hi = max(hi, w)
    if not found or not (math.isfinite(lo) and math.isfinite(hi)):
        raise LevelSetNotFound(f"no point with |V| <= {cfg.level_tol} located at t={t}")
    return lo, hi


def theorem1_bound(pair: VWPair, omega0, omega_sup):
    """Right-hand side of the final estimate: c_* c^*/(c_* + c^*) (w-spread)."""
    spread = float(omega_sup) - float(omega0)
    if spread < 0:
        raise ValueError("omega_sup must dominate omega0")
    if math.isinf(pair.c_star):
        factor = pair.c_upper
    elif pair.c_star == 0.0:
        factor = 0.0
    else:
        factor = pair.c_star * pair.c_upper / (pair.c_star + pair.c_upper)
    return factor * spread


@dataclass
class HorizonQuantities:
    omega0: float
    omega_sup: float
    grid: np.ndarray
    alpha: np.ndarray
    w0: np.ndarray
    w_sup: np.ndarray
    cumulative: np.ndarray
    consistent: bool
    alpha_min: float

    @property
    def spread(self):
        return self.omega_sup - self.omega0

    def _tau(self, t, forward):
        t = float(t)
        g, A = self.grid, self.cumulative
        if t < g[0] or t > g[-1]:
            raise WindowTooShort(f"t={t} outside the analysed window")
        if self.spread <= 0:
            return t
        At = float(np.interp(t, g, A))
        target = At + self.spread if forward else At - self.spread
        if forward and target > A[-1] + 1e-15:
            raise WindowTooShort("integral of alpha never reaches the spread forward")
        if not forward and target < A[0] - 1e-15:
            raise WindowTooShort("integral of alpha never reaches the spread backward")
        return float(np.interp(target, A, g))

    def tau_plus(self, t):
        return self._tau(t, True)

    def tau_minus(self, t):
        return self._tau(t, False)


def horizon_quantities(pair: VWPair, field: VectorField, t_window, grid,
                       sampler: RegionSampler | None = None,
                       w_extrema_fn=None, alpha_fn=None,
                       optimizer_config=None) -> HorizonQuantities:
    """Window extrema of the level-set range and the alpha-clock roots.

    w_extrema_fn(t) -> (w0, w_sup) and alpha_fn(t) may be supplied when the
    pair construction provides them in closed form; otherwise they are
    computed by level_extrema / estimate_alpha on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing with at least two points")

    w0s = np.empty(len(grid))
    wss = np.empty(len(grid))
    alphas = np.empty(len(grid))
    for i, t in enumerate(grid):
        if w_extrema_fn is not None:
            w0s[i], wss[i] = w_extrema_fn(t)
        else:
            w0s[i], wss[i] = level_extrema(pair, t, optimizer_config)
        if alpha_fn is not None:
            alphas[i] = alpha_fn(t)
        else:
            if sampler is None:
                raise ValueError("a sampler is required when alpha_fn is absent")
            alphas[i] = estimate_alpha(pair, field, sampler, t)

    omega0 = float(np.min(w0s))
    omega_sup = float(np.max(wss))
    consistent = (pair.w_lower < omega0 + 1e-12
                  and omega0 <= omega_sup + 1e-12
                  and omega_sup < pair.w_upper + 1e-12)
    alpha_min = float(np.min(alphas))
    pos = np.maximum(alphas, 0.0)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (pos[1:] + pos[:-1]) * np.diff(grid))])
    hq = HorizonQuantities(omega0=omega0, omega_sup=omega_sup, grid=grid,
                           alpha=alphas, w0=w0s, w_sup=wss, cumulative=cum,
                           consistent=consistent, alpha_min=alpha_min)
    if hq.spread > 0 and hq.spread > cum[-1]:
        raise WindowTooShort("integral of alpha over the window is below the w-spread")
    return hq


def lemma1_check(pair: VWPair, traj, w_sup_fn=None, alpha_fn=None,
                 slack=1e-8, n_grid=800) -> ConditionReport:
    """Verify the along-trajectory estimates on a concrete trajectory.

    Splits v(t) = V(t, x(t)) into sign segments and asserts, per segment,
    the start-anchored bound (open segments) or the two-sided bound through
    the level-set maximum at the closing zero.  w_sup_fn(t) -> w^0(t) is
    required for closing segments; alpha_fn enables the zero-forcing clause.
    """
    lo, hi = traj.span
    ts = np.linspace(lo, hi, n_grid)
    xs = traj.sample(ts)
    vs = np.array([pair.V(t, x) for t, x in zip(ts, xs)])
    ws = np.array([pair.W(t, x) for t, x in zip(ts, xs)])

    inside = (ws > pair.w_lower - 1e-12) & (ws < pair.w_upper + 1e-12)
    if not np.all(inside):
        k = int(np.argmin(inside))
        raise TrajectoryLeftW(ts[k], ws[k])

    cs, cu = pair.c_star, pair.c_upper
    if math.isinf(cs):
        frac, factor = 1.0, cu
    else:
        frac = cs / (cs + cu)
        factor = cs * cu / (cs + cu)

    worst = math.inf
    witness = None
    notes = []
    checked = 0

    i = 0
    n = len(ts)
    while i < n:
        if vs[i] <= 0:
            i += 1
            continue
        j = i
        while j + 1 < n and vs[j + 1] > 0:
            j += 1
        a = max(i - 1, 0) if vs[max(i - 1, 0)] <= 0 else i
        t0, v0, w0 = ts[a], vs[a], ws[a]
        seg_max = float(np.max(vs[i:j + 1]))
        closes = j + 1 < n      # v returns to <= 0 inside the span
        checked += 1

        rhs1 = max(v0, 0.0) + cu * (pair.w_upper - w0)
        m1 = rhs1 + slack - seg_max
        if m1 < worst:
            worst = m1
            witness = (float(ts[i + int(np.argmax(vs[i:j + 1]))]), xs[i + int(np.argmax(vs[i:j + 1]))])
        if closes and w_sup_fn is not None:
            t1 = ts[j + 1]
            rhs2 = frac * max(v0, 0.0) + factor * (float(w_sup_fn(t1)) - w0)
            m2 = rhs2 + slack - seg_max
            if m2 < worst:
                worst = m2
                witness = (float(ts[i + int(np.argmax(vs[i:j + 1]))]), xs[i + int(np.argmax(vs[i:j + 1]))])
        if alpha_fn is not None:
            acc = 0.0
            for k in range(i, j):
                acc += 0.5 * (alpha_fn(ts[k]) + alpha_fn(ts[k + 1])) * (ts[k + 1] - ts[k])
            need = pair.w_upper - pair.w_lower
            if acc > need + slack and closes is False and a > 0:
                worst = min(worst, need - acc)
                witness = (float(ts[i]), xs[i])
                notes.append("alpha clock exceeded the window without a zero of V")
        i = j + 1

    if checked == 0:
        return ConditionReport(condition="lemma1", status=PASS, worst_value=math.inf,
                               samples=n, notes=["V <= 0 along the whole trajectory"])
    status = PASS if worst >= 0 else FAIL
    return ConditionReport(
        condition="lemma1", status=status, worst_value=worst,
        witness_t=None if witness is None else witness[0],
        witness_x=None if witness is None else list(witness[1]),
        samples=n, notes=notes)
