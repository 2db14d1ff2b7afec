"""Two-solution separation certificate on the doubled system.

Samples pairs (x, y) in the region where both components keep the
estimating function below a given level, checks the growth inequality for
the separation function U(t, x, y), and estimates the window ratio between
the separation clock and the integral of the rate beta.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .errors import EmptyRegion
from .fields import ScalarField, VectorField, lie_derivative, pair_field
from .reports import FAIL, PASS, ConditionReport
from .sampling import RegionSampler


def _h_of(eta, u):
    if u <= 1.0:
        val, _ = quad(lambda s: 1.0 / eta(s), u, 1.0, limit=200)
        return -val
    val, _ = quad(lambda s: 1.0 / eta(s), 1.0, u, limit=200)
    return val


def uniqueness_certificate(U: ScalarField, field: VectorField, eta, beta, b,
                           r, t_window, sampler: RegionSampler,
                           V: ScalarField = None, n_times=9,
                           in_region=None) -> ConditionReport:
    """Sampled check of the separation conditions.

    U lives on the doubled state (t, (x, y)); V (the estimating function on
    single states) carves the region max(V(x), V(y)) <= r.  eta(u) is the
    positive-definite comparison profile, beta(t, r) the rate, b(t, r) the
    separation ceiling.  Raises EmptyRegion when no sampled pair qualifies.
    """
    doubled = pair_field(field)
    n = field.dimension
    a, bnd = float(t_window[0]), float(t_window[1])
    times = np.linspace(a, bnd, n_times)

    worst = math.inf
    witness = None
    used = 0
    min_udot_on_zero = math.inf
    for t in times:
        for z in sampler.points(t):
            x, y = z[:n], z[n:]
            if V is not None and max(V(t, x), V(t, y)) > r:
                continue
            if in_region is not None and not in_region(t, x, y):
                continue
            if float(np.linalg.norm(x - y)) == 0.0:
                continue
            used += 1
            u_val = U(t, z)
            udot = lie_derivative(U, doubled, t, z)
            need = beta(t, r) * eta(abs(u_val))
            margin = udot - need
            if abs(u_val) <= 1e-8:
                min_udot_on_zero = min(min_udot_on_zero, udot)
            if margin < worst:
                worst = margin
                witness = (t, z)
    if used == 0:
        raise EmptyRegion("no sampled pair satisfied max(V(x), V(y)) <= r")

    # window surrogate of the rate-vs-ceiling ratio at both ends
    grid = np.linspace(a, bnd, 257)
    beta_vals = np.array([beta(t, r) for t in grid])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (beta_vals[1:] + beta_vals[:-1])
                                           * np.diff(grid))])
    zero_idx = int(np.argmin(np.abs(grid)))
    cum = cum - cum[zero_idx]
    I_plus = float(cum[-1])
    I_minus = float(cum[0])

    notes = []
    ratio_plus = ratio_minus = math.inf
    cond3_ok = I_plus > 0 and I_minus < 0
    if not cond3_ok:
        notes.append("integral of beta does not diverge with the right signs")
    else:
        ratio_plus = _h_of(eta, b(bnd, r)) / abs(I_plus)
        ratio_minus = _h_of(eta, b(a, r)) / abs(I_minus)
        if ratio_plus >= 1.0 or ratio_minus >= 1.0:
            cond3_ok = False
            notes.append("window ratio h(b)/|int beta| did not drop below 1")

    try:
        int0, _ = quad(lambda s: 1.0 / eta(s), 0.0, 1.0, limit=200)
        if math.isfinite(int0):
            notes.append("eta is integrable at 0; the alternative integral "
                         "criterion would also apply (not implemented)")
    except Exception:
        pass

    ok = worst >= -1e-12 and cond3_ok
    return ConditionReport(
        condition="uniqueness", status=PASS if ok else FAIL,
        worst_value=worst,
        witness_t=None if witness is None else witness[0],
        witness_x=None if witness is None else list(witness[1]),
        samples=used,
        constants={"ratio_plus": ratio_plus, "ratio_minus": ratio_minus,
                   "int_beta_plus": I_plus, "int_beta_minus": I_minus,
                   "min_Udot_on_zero_level": min_udot_on_zero},
        notes=notes)
