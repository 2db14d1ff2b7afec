"""Mechanical Lagrangians L = kinetic + gyroscopic + potential.

Builds the phase-space vector field from the equations of motion, the
energy-based pair (guiding form <A qdot + a, q>, estimating transform of
the kinetic + comparison-potential level), the directional-quasiconvexity
and growth checkers, and the closed constant formulas feeding the energy
bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import (ConstantsInvalid, EmptyRegion, SingularKinetic,
                     UnboundedSublevel)
from .fields import ScalarField, VectorField
from .pairs import VWPair
from .reports import FAIL, PASS, ConditionReport
from .sampling import RegionSampler
from .shooting import InitialSet

_FD = 1e-6


def _fd_grad(fn, q):
    g = np.empty_like(q)
    for i in range(len(q)):
        h = max(_FD, _FD * abs(q[i]))
        qp = q.copy(); qp[i] += h
        qm = q.copy(); qm[i] -= h
        g[i] = (fn(qp) - fn(qm)) / (2 * h)
    return g


class LagrangianSystem:
    """Kinetic matrix A(t,q), gyroscopic term a(t,q), potential Phi(t,q)
    and the comparison potential Psi(t,q) >= 0, with their derivatives.

    Analytic derivative closures are expected for built-in systems; any
    missing one falls back to central differences (warned once, since the
    pair identities are derivative-sensitive).
    """

    def __init__(self, m, A, a, Phi, Psi, dA_dt=None, dA_dq=None,
                 da_dt=None, da_dq=None, dPhi_dq=None, dPsi_dq=None,
                 dPsi_dt=None, name=None):
        self.m = int(m)
        self._A, self._a = A, a
        self._Phi, self._Psi = Phi, Psi
        self._dA_dt, self._dA_dq = dA_dt, dA_dq
        self._da_dt, self._da_dq = da_dt, da_dq
        self._dPhi_dq = dPhi_dq
        self._dPsi_dq, self._dPsi_dt = dPsi_dq, dPsi_dt
        self.name = name
        if None in (dA_dt, dA_dq, dPhi_dq, dPsi_dq, dPsi_dt):
            warnings.warn("missing analytic derivatives; finite differences "
                          "will be used (pair identities are sensitive)",
                          stacklevel=2)

    # -- raw evaluators ---------------------------------------------------
    def A(self, t, q):
        return np.asarray(self._A(t, q), dtype=float)

    def a(self, t, q):
        if self._a is None:
            return np.zeros(self.m)
        return np.asarray(self._a(t, q), dtype=float)

    def Phi(self, t, q):
        return float(self._Phi(t, q))

    def Psi(self, t, q):
        return float(self._Psi(t, q))

    # -- derivatives with fallbacks ---------------------------------------
    def dA_dt(self, t, q):
        if self._dA_dt is not None:
            return np.asarray(self._dA_dt(t, q), dtype=float)
        h = max(_FD, _FD * abs(t))
        return (self.A(t + h, q) - self.A(t - h, q)) / (2 * h)

    def dA_dq(self, t, q):
        """Array of shape (m, m, m): [i] = dA/dq_i."""
        if self._dA_dq is not None:
            return np.asarray(self._dA_dq(t, q), dtype=float)
        out = np.empty((self.m, self.m, self.m))
        for i in range(self.m):
            h = max(_FD, _FD * abs(q[i]))
            qp = q.copy(); qp[i] += h
            qm = q.copy(); qm[i] -= h
            out[i] = (self.A(t, qp) - self.A(t, qm)) / (2 * h)
        return out

    def da_dt(self, t, q):
        if self._a is None:
            return np.zeros(self.m)
        if self._da_dt is not None:
            return np.asarray(self._da_dt(t, q), dtype=float)
        h = max(_FD, _FD * abs(t))
        return (self.a(t + h, q) - self.a(t - h, q)) / (2 * h)

    def da_dq(self, t, q):
        """Array of shape (m, m): [i] = da/dq_i."""
        if self._a is None:
            return np.zeros((self.m, self.m))
        if self._da_dq is not None:
            return np.asarray(self._da_dq(t, q), dtype=float)
        out = np.empty((self.m, self.m))
        for i in range(self.m):
            h = max(_FD, _FD * abs(q[i]))
            qp = q.copy(); qp[i] += h
            qm = q.copy(); qm[i] -= h
            out[i] = (self.a(t, qp) - self.a(t, qm)) / (2 * h)
        return out

    def dPhi_dq(self, t, q):
        if self._dPhi_dq is not None:
            return np.asarray(self._dPhi_dq(t, q), dtype=float)
        return _fd_grad(lambda qq: self.Phi(t, qq), q)

    def dPsi_dq(self, t, q):
        if self._dPsi_dq is not None:
            return np.asarray(self._dPsi_dq(t, q), dtype=float)
        return _fd_grad(lambda qq: self.Psi(t, qq), q)

    def dPsi_dt(self, t, q):
        if self._dPsi_dt is not None:
            return float(self._dPsi_dt(t, q))
        h = max(_FD, _FD * abs(t))
        return (self.Psi(t + h, q) - self.Psi(t - h, q)) / (2 * h)

    # -- composite quantities ----------------------------------------------
    def lagrangian(self, t, q, qd):
        return (0.5 * float(qd @ self.A(t, q) @ qd)
                + float(self.a(t, q) @ qd) + self.Phi(t, q))

    def energy_level(self, t, q, qd):
        """Kinetic part plus the comparison potential: the pair's radial variable."""
        return 0.5 * float(qd @ self.A(t, q) @ qd) + self.Psi(t, q)

    def dL_dq(self, t, q, qd):
        dA = self.dA_dq(t, q)
        da = self.da_dq(t, q)
        out = self.dPhi_dq(t, q).copy()
        for k in range(self.m):
            out[k] += 0.5 * float(qd @ dA[k] @ qd) + float(da[k] @ qd)
        return out

    def dL_dqd(self, t, q, qd):
        return self.A(t, q) @ qd + self.a(t, q)


def el_field(L: LagrangianSystem) -> VectorField:
    """Phase-space field (qdot, accel) of the equations of motion."""
    m = L.m

    def ev(t, z):
        q, qd = z[:m], z[m:]
        A = L.A(t, q)
        rhs = L.dL_dq(t, q, qd) - L.dA_dt(t, q) @ qd - L.da_dt(t, q)
        dA = L.dA_dq(t, q)
        da = L.da_dq(t, q)
        conv = np.zeros(m)
        for i in range(m):
            conv += qd[i] * (dA[i] @ qd) + qd[i] * da[i]
        rhs -= conv
        try:
            accel = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularKinetic(f"kinetic matrix singular at t={t}, q={q}") from exc
        return np.concatenate([qd, accel])

    return VectorField(2 * m, ev, name=L.name or "euler-lagrange")


def legendre_to_phase(L: LagrangianSystem, t, q, qd):
    return L.A(t, q) @ qd + L.a(t, q)


def legendre_from_phase(L: LagrangianSystem, t, q, p):
    try:
        return np.linalg.solve(L.A(t, q), p - L.a(t, q))
    except np.linalg.LinAlgError as exc:
        raise SingularKinetic(f"kinetic matrix singular at t={t}, q={q}") from exc


# --- constants -----------------------------------------------------------

@dataclass
class LagrangianConstants:
    """Numbers and envelopes entering the energy-bound pipeline.

    kappa, R from the directional quasiconvexity; theta, K from the growth
    bound on the time derivative of the energy level; Theta_lower /
    Theta_bar bracket <A q, q> through Psi; Xi dominates the gyroscopic
    magnitude.
    """
    kappa: float
    R: float
    theta: float
    K: float
    Theta_lower: object = None
    Theta_bar: object = None
    Xi: object = None

    def __post_init__(self):
        if self.kappa <= 0 or self.R <= 0 or self.K <= 0:
            raise ConstantsInvalid("kappa, R, K must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ConstantsInvalid("theta must lie in [0, 1]")


def vbar(r, theta, R):
    """Strictly increasing level transform vanishing at R."""
    if theta == 1.0:
        return math.log(max(r, 1e-300) / R)
    return (max(r, 0.0) ** (1.0 - theta) - R ** (1.0 - theta)) / (1.0 - theta)


def vbar_prime(r, theta, R):
    r = max(r, 1e-300)
    if theta == 1.0:
        return 1.0 / r
    return r ** (-theta)


def f_theta(z, theta, R):
    """Inverse of vbar on levels >= R."""
    if theta == 1.0:
        return R * math.exp(z)
    return ((1.0 - theta) * z + R ** (1.0 - theta)) ** (1.0 / (1.0 - theta))


def R_from_constants(kappa, R0, c1, c2, Xi_at_R0):
    """Radius above which the directional inequality holds (closed formula)."""
    if kappa <= 0:
        raise ConstantsInvalid("kappa must be positive")
    s = c2 + Xi_at_R0
    num = math.sqrt(2.0) * s + math.sqrt(2.0 * s * s + 4.0 * kappa * (c1 + kappa * R0))
    return R0 + (num / (2.0 * kappa)) ** 2


def K_from_constants(theta, c3, c4, c5, c6, c7, c8, R):
    """Growth constant assembled from the six coefficient bounds."""
    if R <= 0:
        raise ConstantsInvalid("R must be positive")
    return (c3 + math.sqrt(2.0) * c5 + c7
            + R ** (-theta) * (c4 + math.sqrt(2.0) * R ** (-0.5) * c6
                               + c8 / R))


@dataclass
class EnergyBound:
    local: float
    global_: float


def energy_bound(consts: LagrangianConstants, omega0, omega_sup, t=None,
                 window_sup_w=None, window_inf_w=None) -> EnergyBound:
    """Energy cap through the inverse transform of the scaled w-spread."""
    scale = consts.K / (2.0 * consts.kappa)
    glob = f_theta(scale * (omega_sup - omega0), consts.theta, consts.R)
    if window_sup_w is None or window_inf_w is None:
        loc = glob
    else:
        loc = f_theta(scale * (window_sup_w - window_inf_w), consts.theta, consts.R)
    return EnergyBound(local=loc, global_=glob)


def omega_hat_closed(consts: LagrangianConstants, n_grid=4001):
    """Closed window bound max over s in [0,R] of sqrt(Theta_bar)(sqrt(2(R-s)) + Xi)."""
    if consts.Theta_bar is None:
        raise ConstantsInvalid("Theta_bar envelope required")
    Xi = consts.Xi or (lambda s: 0.0)
    ss = np.linspace(0.0, consts.R, n_grid)
    vals = [math.sqrt(max(consts.Theta_bar(s), 0.0))
            * (math.sqrt(2.0 * (consts.R - s)) + Xi(s)) for s in ss]
    return float(np.max(vals))


# --- pair construction ----------------------------------------------------

def build_lagrangian_vw(L: LagrangianSystem, consts: LagrangianConstants,
                        omega_hat=None, margin_frac=0.01,
                        w_batch=None, v_batch=None) -> VWPair:
    """Energy pair W = <A qdot + a, q>, V = vbar(energy level).

    Slope constants are K/kappa on both sides and the guiding rate is at
    least kappa * R wherever V >= 0.  The window takes a 1% margin around
    the closed bound omega_hat; the initial sets are the graphs
    qdot = q - A^{-1} a over the sublevel <A q, q> <= w*.
    """
    m = L.m
    th, R = consts.theta, consts.R

    def split(z):
        return z[:m], z[m:]

    def w_eval(t, z):
        q, qd = split(z)
        return float((L.A(t, q) @ qd + L.a(t, q)) @ q)

    def w_grad(t, z):
        q, qd = split(z)
        A = L.A(t, q)
        dA = L.dA_dq(t, q)
        da = L.da_dq(t, q)
        gq = (A @ qd + L.a(t, q)).copy()
        for k in range(m):
            gq[k] += float((dA[k] @ qd + da[k]) @ q)
        gqd = A @ q
        return np.concatenate([gq, gqd])

    def w_dt(t, z):
        q, qd = split(z)
        return float((L.dA_dt(t, q) @ qd + L.da_dt(t, q)) @ q)

    def v_eval(t, z):
        q, qd = split(z)
        return vbar(L.energy_level(t, q, qd), th, R)

    def v_grad(t, z):
        q, qd = split(z)
        E = L.energy_level(t, q, qd)
        fp = vbar_prime(E, th, R)
        dA = L.dA_dq(t, q)
        gq = L.dPsi_dq(t, q).copy()
        for k in range(m):
            gq[k] += 0.5 * float(qd @ dA[k] @ qd)
        gqd = L.A(t, q) @ qd
        return fp * np.concatenate([gq, gqd])

    def v_dt(t, z):
        q, qd = split(z)
        E = L.energy_level(t, q, qd)
        fp = vbar_prime(E, th, R)
        return fp * (0.5 * float(qd @ L.dA_dt(t, q) @ qd) + L.dPsi_dt(t, q))

    V = ScalarField(v_eval, v_grad, v_dt, name="vbar(energy)", batch=v_batch)
    W = ScalarField(w_eval, w_grad, w_dt, name="<A qd + a, q>", batch=w_batch)

    if omega_hat is None:
        omega_hat = omega_hat_closed(consts)
    margin = margin_frac * max(2.0 * omega_hat, 1e-9)
    w_up = omega_hat + margin
    w_lo = -omega_hat - margin

    def m_family(t):
        def chart(u):
            y = 2.0 * np.asarray(u, dtype=float) - 1.0
            rinf = float(np.max(np.abs(y)))
            if rinf == 0.0:
                q = np.zeros(m)
            else:
                d = y / float(np.linalg.norm(y))

                def level(rho):
                    qq = rho * d
                    return float(qq @ L.A(t, qq) @ qq) - w_up

                hi = 1.0
                while level(hi) < 0:
                    hi *= 2.0
                    if hi > 1e8:
                        raise UnboundedSublevel("kinetic form fails to reach w*")
                rho = brentq(level, 0.0, hi, xtol=1e-14, rtol=1e-14)
                q = rinf * rho * d
            qd = q - np.linalg.solve(L.A(t, q), L.a(t, q))
            return np.concatenate([q, qd])

        def on_exit_boundary(u):
            return float(np.max(np.abs(2.0 * np.asarray(u, dtype=float) - 1.0))) >= 1.0 - 1e-12

        return InitialSet(m, chart, on_exit_boundary, t=t)

    c_slope = consts.K / consts.kappa
    v_cap = max(vbar(10.0 * R, th, R), 1.0) + c_slope * (w_up - w_lo)

    return VWPair(V=V, W=W, c_star=c_slope, c_upper=c_slope,
                  w_lower=w_lo, w_upper=w_up, V_cap=v_cap,
                  m_family=m_family,
                  meta={"omega_hat": omega_hat,
                        "alpha_fn": lambda t: consts.kappa * consts.R,
                        "w_extrema_fn": None,
                        "consts": consts})


# --- condition checkers ----------------------------------------------------

def check_quasiconvexity(L: LagrangianSystem, kappa, R,
                         sampler: RegionSampler, t_window,
                         n_times=7) -> ConditionReport:
    """Sampled directional inequality and the induced kinetic-matrix bound.

    Requires <dL/dq, q> + <dL/dqd, qd> >= kappa * (energy level) wherever
    the level is at least R, and the matrix inequality
    <(A + half sum dA/dq_i q_i) y, y> >= (kappa/4) <A y, y> everywhere
    sampled.
    """
    m = L.m
    worst = math.inf
    witness = None
    used = 0
    for t in np.linspace(t_window[0], t_window[1], n_times):
        for z in sampler.points(t):
            q, qd = z[:m], z[m:]
            E = L.energy_level(t, q, qd)
            A = L.A(t, q)
            dA = L.dA_dq(t, q)
            # matrix inequality is unconditional
            Aeff = A + 0.5 * sum(q[i] * dA[i] for i in range(m))
            lhs_m = float(qd @ Aeff @ qd)
            rhs_m = 0.25 * kappa * float(qd @ A @ qd)
            mm = lhs_m - rhs_m
            got = mm
            if E >= R:
                used += 1
                lhs = float(L.dL_dq(t, q, qd) @ q) + float(L.dL_dqd(t, q, qd) @ qd)
                got = min(mm, lhs - kappa * E)
            if got < worst:
                worst = got
                witness = (t, z)
    if used == 0:
        raise EmptyRegion("no sample reached the energy level R")
    status = PASS if worst >= -1e-9 else FAIL
    return ConditionReport(condition="quasiconvexity", status=status,
                           worst_value=worst, witness_t=witness[0],
                           witness_x=list(witness[1]), samples=used)


@dataclass
class TildeWBounds:
    lower: float
    upper: float
    closed_lower: float
    closed_upper: float


def tilde_w_bounds(L: LagrangianSystem, R, t, consts: LagrangianConstants = None,
                   n_starts=16, seed=0, box_radius=None) -> TildeWBounds:
    """Optimized level-set window at one time plus the closed envelope bound.

    Maximizes / minimizes <a, q> +/- sqrt(2 (R - Psi) <A q, q>) over the
    sublevel {Psi_t <= R}.  The sublevel must be bounded (checked by box
    growth); UnboundedSublevel otherwise.
    """
    m = L.m
    if box_radius is None:
        radius = 1.0
        for _ in range(40):
            ok = True
            rng = np.random.default_rng(seed)
            for _ in range(128):
                d = rng.normal(size=m)
                d /= np.linalg.norm(d)
                if L.Psi(t, radius * d) <= R:
                    ok = False
                    break
            if ok:
                break
            radius *= 2.0
        else:
            raise UnboundedSublevel("Psi sublevel not bounded within 2^40")
        box_radius = radius

    def value(q, sense):
        psi = L.Psi(t, q)
        pen = max(0.0, psi - R)
        core = float(L.a(t, q) @ q) + sense * math.sqrt(
            2.0 * max(R - psi, 0.0) * max(float(q @ L.A(t, q) @ q), 0.0))
        return core - 1e8 * pen * pen * sense

    rng = np.random.default_rng(seed)
    starts = rng.uniform(-box_radius, box_radius, size=(n_starts, m))
    starts[0] = 0.0
    hi = -math.inf
    lo = math.inf
    for s in starts:
        res = minimize(lambda q: -value(q, +1.0), s, method="Nelder-Mead",
                       options={"maxiter": 400 * m, "xatol": 1e-10, "fatol": 1e-12})
        if L.Psi(t, res.x) <= R * (1 + 1e-9):
            hi = max(hi, value(res.x, +1.0))
        res = minimize(lambda q: value(q, -1.0), s, method="Nelder-Mead",
                       options={"maxiter": 400 * m, "xatol": 1e-10, "fatol": 1e-12})
        if L.Psi(t, res.x) <= R * (1 + 1e-9):
            lo = min(lo, value(res.x, -1.0))

    if consts is not None and consts.Theta_bar is not None:
        hat = omega_hat_closed(consts)
        closed_lo, closed_hi = -hat, hat
    else:
        closed_lo, closed_hi = -math.inf, math.inf
    return TildeWBounds(lower=lo, upper=hi, closed_lower=closed_lo,
                        closed_upper=closed_hi)
