"""Pencil-based pipeline for essentially nonlinear systems.

Characteristic values of the pencil S - lambda B (B positive definite)
drive the window constants; the envelope functions Gamma, Delta and the
rate gamma supply the growth transform whose root caps the B-form level
along the bounded solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cholesky, eigh
from scipy.optimize import brentq

from .errors import BNotPositiveDefinite, ConditionGViolated
from .fields import ScalarField, VectorField
from .pairs import VWPair
from .quadforms import SymmetricFormPath, spectral_split
from .shooting import InitialSet


@dataclass
class PencilSlice:
    t: float
    lam_plus: float        # max characteristic value of S - lambda B
    lam_minus: float       # min characteristic value
    lam_plus_restricted: float   # min characteristic value on L_+(t)
    M: float               # max |char value| of Bdot - mu B
    mu_minus: float        # min char value of Sdot - mu B


def pencil_charvals(S: SymmetricFormPath, B: SymmetricFormPath, t) -> PencilSlice:
    """Generalized symmetric eigensolves at one time slice."""
    Bt = B(t)
    try:
        cholesky(Bt, lower=True)
    except np.linalg.LinAlgError as exc:
        raise BNotPositiveDefinite(f"B(t) not positive definite at t={t}") from exc
    St = S(t)
    vals = eigh(St, Bt, eigvals_only=True)
    split = spectral_split(S, t)
    E = split.basis_plus
    if E.shape[1] == 0:
        lam_pr = math.inf
    else:
        vals_r = eigh(E.T @ St @ E, E.T @ Bt @ E, eigvals_only=True)
        lam_pr = float(vals_r[0])
    Mvals = eigh(B.derivative(t), Bt, eigvals_only=True)
    muvals = eigh(S.derivative(t), Bt, eigvals_only=True)
    return PencilSlice(t=float(t), lam_plus=float(vals[-1]),
                       lam_minus=float(vals[0]), lam_plus_restricted=lam_pr,
                       M=float(np.max(np.abs(Mvals))), mu_minus=float(muvals[0]))


@dataclass
class PencilData:
    S: SymmetricFormPath
    B: SymmetricFormPath
    gamma: object           # t -> positive rate
    Gamma: object           # v -> lower envelope of <S f, x> / gamma
    Delta: object           # v -> upper envelope of |<B f, x>| / gamma
    v0: float
    grid: np.ndarray
    slices: list
    xi: float               # inf mu_- / gamma
    varsigma: float         # sup M / gamma

    @property
    def lam_plus_sup(self):
        return max(s.lam_plus for s in self.slices)

    @property
    def lam_minus_inf(self):
        return min(s.lam_minus for s in self.slices)


def build_pencil_data(S, B, gamma, Gamma, Delta, v0, t_grid) -> PencilData:
    """Assemble the slice table and the normalized rate constants.

    Validates the positivity condition at v0 (strictly) and the slope
    condition on a v-grid; both raise ConditionGViolated on failure.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    slices = [pencil_charvals(S, B, t) for t in t_grid]
    gs = np.array([gamma(t) for t in t_grid])
    if np.any(gs <= 0):
        raise ConditionGViolated("gamma must stay positive")
    xi = float(np.min([s.mu_minus for s in slices] / gs))
    varsigma = float(np.max([s.M for s in slices] / gs))
    if not 2.0 * Gamma(v0) + xi * v0 > 0:
        raise ConditionGViolated(
            f"2 Gamma(v0) + xi v0 = {2.0 * Gamma(v0) + xi * v0} is not positive")
    for v in np.geomspace(v0 * (1 + 1e-6), v0 * 1e3, 64):
        if (Gamma(v) - Gamma(v0)) / (v - v0) < -xi / 2.0 - 1e-12:
            raise ConditionGViolated(f"slope condition fails at v={v}")
    return PencilData(S=S, B=B, gamma=gamma, Gamma=Gamma, Delta=Delta,
                      v0=float(v0), grid=t_grid, slices=slices,
                      xi=xi, varsigma=varsigma)


def _growth_transform(pd: PencilData):
    v0, xi, vs = pd.v0, pd.xi, pd.varsigma
    Gamma, Delta = pd.Gamma, pd.Delta

    def integrand(u):
        return (2.0 * Gamma(u) + xi * u) / (2.0 * Delta(u) + vs * u)

    slope0 = integrand(v0)

    def F(v):
        if v >= v0:
            val, _ = quad(integrand, v0, v, limit=200)
            return val
        # linear extension below v0 keeps the transform strictly increasing
        return slope0 * (v - v0)

    return F, integrand, slope0


def pencil_bound(pd: PencilData, t_window=None, v_cap_factor=1e6):
    """Level cap v_* and the associated pair.

    v_* solves F(v) = (v0/2) [sup lam+ - inf lam-]; the divergence of the
    transform is probed by doubling the bracket up to v_cap_factor * v0.
    """
    F, integrand, slope0 = _growth_transform(pd)
    spread = pd.lam_plus_sup - pd.lam_minus_inf
    target = 0.5 * pd.v0 * spread
    if target <= 0:
        v_star = pd.v0
    else:
        hi = 2.0 * pd.v0
        while F(hi) < target:
            hi *= 2.0
            if hi > v_cap_factor * pd.v0:
                raise ConditionGViolated(
                    "growth transform failed to reach the target level; "
                    "its integral may not diverge")
        v_star = float(brentq(lambda v: F(v) - target, pd.v0, hi,
                              xtol=1e-300, rtol=1e-13))

    B, S = pd.B, pd.S

    def v_plus(t, x):
        return float(x @ B(t) @ x)

    def v_eval(t, x):
        return F(v_plus(t, x))

    def _slope_at(t, x):
        vp = v_plus(t, x)
        return integrand(vp) if vp >= pd.v0 else slope0

    def v_grad(t, x):
        return _slope_at(t, x) * 2.0 * (B(t) @ x)

    def v_dt(t, x):
        return _slope_at(t, x) * float(x @ B.derivative(t) @ x)

    def w_eval(t, x):
        return float(x @ S(t) @ x)

    def w_grad(t, x):
        return 2.0 * (S(t) @ x)

    def w_dt(t, x):
        return float(x @ S.derivative(t) @ x)

    V = ScalarField(v_eval, v_grad, v_dt, name="F(<Bx,x>)")
    W = ScalarField(w_eval, w_grad, w_dt, name="<Sx,x>")

    omega0 = pd.lam_minus_inf * pd.v0
    omega_sup = pd.lam_plus_sup * pd.v0
    margin = 0.01 * max(omega_sup - omega0, 1e-9)
    w_lo = min(omega0, 0.0) - margin
    w_hi = max(omega_sup, 0.0) + margin

    def m_family(t):
        split = spectral_split(S, t)
        E = split.basis_plus
        p = E.shape[1]
        St = S(t)

        def chart(u):
            y = 2.0 * np.asarray(u, dtype=float) - 1.0
            rinf = float(np.max(np.abs(y)))
            if rinf == 0.0:
                return np.zeros(St.shape[0])
            v = E @ (y / float(np.linalg.norm(y)))
            quadv = float(v @ St @ v)
            return rinf * math.sqrt(w_hi / quadv) * v

        def on_exit_boundary(u):
            return float(np.max(np.abs(2.0 * np.asarray(u, dtype=float) - 1.0))) >= 1.0 - 1e-12

        return InitialSet(p, chart, on_exit_boundary, t=t)

    lam_pr = [s.lam_plus_restricted for s in pd.slices]
    nu_proxy = F(max(w_hi / max(min(lam_pr), 1e-12), pd.v0))
    v_cap = max(F(v_star), 0.0) + max(nu_proxy, 0.0) + 1.0

    pair = VWPair(V=V, W=W, c_star=1.0, c_upper=1.0, w_lower=w_lo,
                  w_upper=w_hi, V_cap=v_cap, m_family=m_family,
                  meta={"v0": pd.v0, "v_star": v_star, "F": F,
                        "omega0": omega0, "omega_sup": omega_sup,
                        "alpha_fn": lambda t: pd.gamma(t) * (2.0 * pd.Gamma(pd.v0)
                                                             + pd.xi * pd.v0),
                        "w_extrema_fn": lambda t: (
                            pencil_charvals(pd.S, pd.B, t).lam_minus * pd.v0,
                            pencil_charvals(pd.S, pd.B, t).lam_plus * pd.v0)})
    return v_star, pair
