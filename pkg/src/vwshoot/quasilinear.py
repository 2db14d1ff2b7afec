"""Quasilinear systems with a dichotomic linear part: bound pipeline and pair.

The bound machinery: plateaued growth transform F, its root r_*, the pair
built from the dichotomy form C(t), and the reduction of the scalar
second-order boundary value problem to a 2-D first-order system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import HypothesisViolated, InvalidConstants
from .fields import ScalarField, VectorField
from .pairs import VWPair
from .quadforms import SymmetricFormPath, spectral_split
from .shooting import InitialSet


def _check_fdm_constants(c, d, m):
    if not (c > 0 and m > 0):
        raise InvalidConstants(f"need c > 0 and m > 0, got c={c}, m={m}")
    if d <= 0:
        raise InvalidConstants(f"d={d} <= 0: the smallness hypothesis fails")


def F_of_r(r, c, d, m):
    """Plateaued integral transform: constant below c/d, increasing above.

    Closed form of 2*int (d s^2 - c s)/(m s + 1) ds anchored so that the
    plateau value is attained at r = c/d.
    """
    _check_fdm_constants(c, d, m)
    if r < 0:
        raise ValueError("r must be nonnegative")
    r_eff = max(float(r), c / d)
    return ((d / m) * r_eff * r_eff
            + 2.0 * (c / m + d / m ** 2) * (math.log(m * r_eff + 1.0) / m - r_eff))


def dF_dr(r, c, d, m):
    _check_fdm_constants(c, d, m)
    if r <= c / d:
        return 0.0
    return 2.0 * (d * r * r - c * r) / (m * r + 1.0)


def F_of_r_vec(r, c, d, m):
    r_eff = np.maximum(np.asarray(r, dtype=float), c / d)
    return ((d / m) * r_eff * r_eff
            + 2.0 * (c / m + d / m ** 2) * (np.log(m * r_eff + 1.0) / m - r_eff))


def r_star(c, d, m, lambda_spread):
    """Root of F(r) = F(c/d) + (c^2 / 2 d^2) * spread, bracketed by the
    quadratic majorant root."""
    _check_fdm_constants(c, d, m)
    if lambda_spread < 0:
        raise InvalidConstants("lambda_spread must be nonnegative")
    cd = c / d
    if lambda_spread == 0.0:
        return cd
    target = F_of_r(cd, c, d, m) + (c * c) / (2.0 * d * d) * lambda_spread
    # largest root of (d/m) r^2 - 2 (c/m + d/m^2) r - target = 0
    qa = d / m
    qb = 2.0 * (c / m + d / m ** 2)
    r_quad = (qb + math.sqrt(qb * qb + 4.0 * qa * target)) / (2.0 * qa)
    root = brentq(lambda r: F_of_r(r, c, d, m) - target, cd, r_quad,
                  xtol=1e-300, rtol=1e-13, maxiter=200)
    return float(root)


def quadratic_root_bound(c, d, m, lambda_spread):
    """The majorant root that always dominates r_star."""
    _check_fdm_constants(c, d, m)
    target = F_of_r(c / d, c, d, m) + (c * c) / (2.0 * d * d) * lambda_spread
    qa = d / m
    qb = 2.0 * (c / m + d / m ** 2)
    return (qb + math.sqrt(qb * qb + 4.0 * qa * target)) / (2.0 * qa)


@dataclass
class QuasilinearSystem:
    """x' = A(t) x + g(t, x) with a dichotomic linear part.

    Constants: a = sup ||A||, k / phi from the growth bound
    ||g|| <= k ||x|| + phi(t), l = sup |phi'/phi|, c = sup ||C||,
    sigma = inf |det C|.
    """

    dimension: int
    A: object                    # t -> matrix
    g: object                    # (t, x) -> vector
    phi: object                  # t -> positive scale
    phi_dot: object
    a: float
    k: float
    l: float
    c: float
    sigma: float
    fused_eval: object = None    # optional hand-fused rhs for hot loops

    def __post_init__(self):
        if self.k <= 0:
            raise InvalidConstants("k must be positive")
        if self.c * (self.k + self.l) >= 0.5:
            raise InvalidConstants(
                f"c(k+l) = {self.c * (self.k + self.l)} >= 1/2")

    @property
    def d(self):
        return 0.5 - self.c * (self.k + self.l)

    @property
    def m(self):
        return self.a + self.k + self.l

    def field(self) -> VectorField:
        if self.fused_eval is not None:
            return VectorField(self.dimension, self.fused_eval, name="quasilinear")
        A, g = self.A, self.g

        def ev(t, x):
            return np.asarray(A(t), dtype=float) @ x + np.asarray(g(t, x), dtype=float)

        return VectorField(self.dimension, ev, name="quasilinear")

    def check_growth(self, box, t_grid, n_points=256, seed=0):
        rng = np.random.default_rng(seed)
        lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
        for t in t_grid:
            pts = lo + rng.random((n_points, self.dimension)) * (hi - lo)
            for x in pts:
                gn = float(np.linalg.norm(np.asarray(self.g(t, x), dtype=float)))
                bound = self.k * float(np.linalg.norm(x)) + float(self.phi(t))
                if gn > bound * (1 + 1e-9) + 1e-12:
                    raise HypothesisViolated(
                        f"growth bound fails at t={t}, x={x}: {gn} > {bound}")


def lambda_spread(C: SymmetricFormPath, t_grid):
    """sup_t [ sup_{s>=t} lam+(s) - inf_{s<=t} lam-(s) ] on the given grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    lam_hi = np.empty(len(t_grid))
    lam_lo = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        vals = np.linalg.eigvalsh(C(t))
        lam_lo[i], lam_hi[i] = vals[0], vals[-1]
    suffix_hi = np.maximum.accumulate(lam_hi[::-1])[::-1]
    prefix_lo = np.minimum.accumulate(lam_lo)
    return float(np.max(suffix_hi - prefix_lo)), lam_lo, lam_hi


def build_quasilinear_vw(sys: QuasilinearSystem, C: SymmetricFormPath, r0,
                         t_grid=None) -> VWPair:
    """Pair V = F(||x||/phi) - F(r0), W = <Cx,x>/phi^2 with its initial sets.

    The slope constants are exactly 1 on both sides and the guiding rate is
    bounded below by 2(d r0^2 - c r0).  The window chooses a 1% margin
    around the level-set range r0^2 [inf lam-, sup lam+].
    """
    c, d, m = sys.c, sys.d, sys.m
    if r0 <= c / d:
        raise InvalidConstants(f"r0 must exceed c/d = {c / d}")
    if t_grid is None:
        t_grid = np.linspace(-60.0, 60.0, 481)
    spread, lam_lo, lam_hi = lambda_spread(C, t_grid)
    lam_min = float(np.min(lam_lo))
    lam_max = float(np.max(lam_hi))

    F0 = F_of_r(r0, c, d, m)
    phi, phid = sys.phi, sys.phi_dot

    def v_eval(t, x):
        return F_of_r(float(np.linalg.norm(x)) / phi(t), c, d, m) - F0

    def v_grad(t, x):
        nx = float(np.linalg.norm(x))
        p = phi(t)
        fp = dF_dr(nx / p, c, d, m)
        if fp == 0.0 or nx == 0.0:
            return np.zeros_like(x)
        return (fp / (nx * p)) * x

    def v_dt(t, x):
        nx = float(np.linalg.norm(x))
        p = phi(t)
        fp = dF_dr(nx / p, c, d, m)
        return -fp * nx * phid(t) / p ** 2

    def w_eval(t, x):
        p = phi(t)
        return float(x @ C(t) @ x) / p ** 2

    def w_grad(t, x):
        return 2.0 * (C(t) @ x) / phi(t) ** 2

    def w_dt(t, x):
        p = phi(t)
        return (float(x @ C.derivative(t) @ x) / p ** 2
                - 2.0 * phid(t) * float(x @ C(t) @ x) / p ** 3)

    def phi_vec(ts):
        try:
            out = np.asarray(phi(ts), dtype=float)
            if out.shape == np.shape(ts):
                return out
        except Exception:
            pass
        return np.array([phi(t) for t in ts], dtype=float)

    def v_batch(ts, xs):
        r = np.linalg.norm(xs, axis=1) / phi_vec(ts)
        return F_of_r_vec(r, c, d, m) - F0

    Cm = getattr(C, "constant_matrix", None)
    w_batch = None
    if Cm is not None:
        def w_batch(ts, xs):
            return np.einsum("si,ij,sj->s", xs, Cm, xs) / phi_vec(ts) ** 2

    V = ScalarField(v_eval, v_grad, v_dt, name="F(|x|/phi)-F(r0)", batch=v_batch)
    W = ScalarField(w_eval, w_grad, w_dt, name="<Cx,x>/phi^2", batch=w_batch)

    core_hi = r0 * r0 * max(lam_max, 0.0)
    core_lo = r0 * r0 * min(lam_min, 0.0)
    margin = 0.01 * max(core_hi - core_lo,
                        0.5 * r0 * r0 * (abs(lam_max) + abs(lam_min)), 1e-9)
    w_up = core_hi + margin
    w_lo = core_lo - margin

    def m_family(t):
        split = spectral_split(C, t)
        E = split.basis_plus
        p = E.shape[1]
        Ct = C(t)
        pt = phi(t)

        def chart(u):
            y = 2.0 * np.asarray(u, dtype=float) - 1.0
            rinf = float(np.max(np.abs(y)))
            if rinf == 0.0:
                return np.zeros(sys.dimension)
            v = E @ (y / float(np.linalg.norm(y)))
            quad = float(v @ Ct @ v)
            return rinf * math.sqrt(w_up * pt * pt / quad) * v

        def on_exit_boundary(u):
            return float(np.max(np.abs(2.0 * np.asarray(u, dtype=float) - 1.0))) >= 1.0 - 1e-12

        return InitialSet(p, chart, on_exit_boundary, t=t)

    alpha_lower = 2.0 * (d * r0 * r0 - c * r0)
    # a loose diagnostic cap well above the certified level
    nu_proxy = max(0.0, w_up)
    v_cap = 1.0 * w_up + max(nu_proxy, abs(w_lo)) + 1.0

    box_r = 1.25 * r0 * math.sqrt(max(w_up, 1.0) / max(min(abs(lam_min), lam_max) if lam_min != 0 else lam_max, 1e-9))
    box = (np.full(sys.dimension, -box_r), np.full(sys.dimension, box_r))

    return VWPair(
        V=V, W=W, c_star=1.0, c_upper=1.0, w_lower=w_lo, w_upper=w_up,
        V_cap=v_cap, box=box, m_family=m_family,
        meta={"r0": r0, "c": c, "d": d, "m": m,
              "alpha_lower": alpha_lower, "lambda_spread": spread,
              "lam_min": lam_min, "lam_max": lam_max,
              "w_extrema_fn": lambda t: tuple(
                  r0 * r0 * v for v in
                  (np.linalg.eigvalsh(C(t))[0], np.linalg.eigvalsh(C(t))[-1])),
              "alpha_fn": lambda t: alpha_lower})


def build_bvp_system(rho, omega, Z, ell, phi, phi_dot=None,
                     t_grid=None):
    """Reduce z''-type scalar problem to the 2-D quasilinear system.

    Returns (system, C path).  Constants follow the construction:
    delta = min(inf rho, inf omega), k = ell * max(1, sup rho),
    c = 1/(2 delta), with the guiding form x1 x2 / delta.
    """
    if t_grid is None:
        t_grid = np.linspace(-60.0, 60.0, 2401)
    rho_v = np.array([rho(t) for t in t_grid], dtype=float)
    omg_v = np.array([omega(t) for t in t_grid], dtype=float)
    if np.any(rho_v <= 0) or np.any(omg_v <= 0):
        raise HypothesisViolated("rho and omega must stay positive")
    delta = float(min(rho_v.min(), omg_v.min()))
    k = float(ell) * float(max(1.0, rho_v.max()))
    if phi_dot is None:
        h = 1e-6
        phi_dot = lambda t: (phi(t + h) - phi(t - h)) / (2 * h)
    phi_v = np.array([phi(t) for t in t_grid], dtype=float)
    if np.any(phi_v <= 0):
        raise HypothesisViolated("phi must stay positive")
    l = float(np.max(np.abs([phi_dot(t) / phi(t) for t in t_grid])))
    if k + l >= delta:
        raise HypothesisViolated(f"k + l = {k + l} >= delta = {delta}")
    a = float(max(np.max(rho_v), np.max(omg_v)))
    c = 1.0 / (2.0 * delta)
    sigma = 1.0 / (4.0 * delta * delta)

    def A(t):
        return np.array([[0.0, rho(t)], [omega(t), 0.0]])

    def g(t, x):
        return np.array([0.0, Z(t, x[0], rho(t) * x[1])])

    C_mat = np.array([[0.0, 1.0 / (2.0 * delta)], [1.0 / (2.0 * delta), 0.0]])
    C = SymmetricFormPath.constant(C_mat)
    system = QuasilinearSystem(dimension=2, A=A, g=g, phi=phi, phi_dot=phi_dot,
                               a=a, k=k, l=l, c=c, sigma=sigma)
    return system, C
