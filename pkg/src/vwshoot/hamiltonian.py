"""Hamiltonian side: Legendre transform, momentum-level function and the
pairwise monotonicity certificate used for uniqueness / almost periodicity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .errors import EmptyRegion
from .fields import VectorField
from .lagrangian import LagrangianSystem
from .reports import FAIL, PASS
from .sampling import RegionSampler

_FD = 1e-5


class HamiltonianSystem:
    """H(t, q, p) = half <A^{-1}(p - a), p - a> - Phi in z = (q, p)."""

    def __init__(self, L: LagrangianSystem):
        self.L = L
        self.m = L.m

    def _w(self, t, q, p):
        return np.linalg.solve(self.L.A(t, q), p - self.L.a(t, q))

    def H(self, t, z):
        q, p = z[:self.m], z[self.m:]
        w = self._w(t, q, p)
        return 0.5 * float((p - self.L.a(t, q)) @ w) - self.L.Phi(t, q)

    def Y(self, t, z):
        """Momentum-side analogue of the kinetic + comparison level."""
        q, p = z[:self.m], z[self.m:]
        w = self._w(t, q, p)
        return 0.5 * float((p - self.L.a(t, q)) @ w) + self.L.Psi(t, q)

    def grad(self, t, z):
        m = self.m
        q, p = z[:m], z[m:]
        w = self._w(t, q, p)
        dA = self.L.dA_dq(t, q)
        da = self.L.da_dq(t, q)
        gq = -self.L.dPhi_dq(t, q)
        for k in range(m):
            gq[k] += -0.5 * float(w @ dA[k] @ w) - float(da[k] @ w)
        return np.concatenate([gq, w])

    def field(self) -> VectorField:
        m = self.m

        def ev(t, z):
            g = self.grad(t, z)
            return np.concatenate([g[m:], -g[:m]])

        return VectorField(2 * m, ev, name="hamiltonian")


def legendre_roundtrip_defect(L: LagrangianSystem, t, q, qd):
    p = L.A(t, q) @ qd + L.a(t, q)
    back = np.linalg.solve(L.A(t, q), p - L.a(t, q))
    return float(np.linalg.norm(back - qd))


@dataclass
class ConvexityCertificate:
    r: float
    d: float
    rho_hat: float
    theta_ratio: float
    lemma_coeffs: dict
    status: str
    samples: int
    notes: list = dfield(default_factory=list)

    @property
    def passed(self):
        return self.status == PASS


def _hessian(fn, q):
    m = len(q)
    H = np.empty((m, m))
    for i in range(m):
        hi = max(_FD, _FD * abs(q[i]))
        for j in range(i, m):
            hj = max(_FD, _FD * abs(q[j]))
            qpp = q.copy(); qpp[i] += hi; qpp[j] += hj
            qpm = q.copy(); qpm[i] += hi; qpm[j] -= hj
            qmp = q.copy(); qmp[i] -= hi; qmp[j] += hj
            qmm = q.copy(); qmm[i] -= hi; qmm[j] -= hj
            H[i, j] = H[j, i] = (fn(qpp) - fn(qpm) - fn(qmp) + fn(qmm)) / (4 * hi * hj)
    return H


def convexity_certificate(Hsys: HamiltonianSystem, r, d,
                          sampler: RegionSampler, t_window,
                          n_times=5, n_dirs=16,
                          alpha2_fn=None, gamma2_fn=None) -> ConvexityCertificate:
    """Pairwise monotonicity of the reflected gradient on the level Y <= r.

    Samples (z', z'') pairs, records the lowest Rayleigh-type quotient
    <I (grad H(z') - grad H(z'')), z' - z''> / ||z' - z''||^{2d}, the
    kinetic eigenvalue ratio over the sublevel, and (for vanishing
    gyroscopic term) the quadratic coefficient implication on a u-grid.
    alpha2_fn / gamma2_fn may override the finite-difference coefficient
    scans with analytic values.
    """
    if r <= 0 or d < 1:
        raise ValueError("need r > 0 and d >= 1")
    m = Hsys.m
    L = Hsys.L
    I_sign = np.concatenate([-np.ones(m), np.ones(m)])

    rho_hat = math.inf
    used = 0
    lam_lo = math.inf
    lam_hi = -math.inf
    times = np.linspace(t_window[0], t_window[1], n_times)
    for t in times:
        pts = sampler.points(t)
        good = [z for z in pts if Hsys.Y(t, z) <= r]
        for i in range(0, len(good) - 1, 2):
            z1, z2 = good[i], good[i + 1]
            dz = z1 - z2
            nrm = float(np.linalg.norm(dz))
            if nrm == 0.0:
                continue
            used += 1
            num = float((I_sign * (Hsys.grad(t, z1) - Hsys.grad(t, z2))) @ dz)
            rho_hat = min(rho_hat, num / nrm ** (2 * d))
        for z in good:
            vals = np.linalg.eigvalsh(L.A(t, z[:m]))
            if L.Psi(t, z[:m]) <= r:
                lam_lo = min(lam_lo, vals[0])
                lam_hi = max(lam_hi, vals[-1])
    if used == 0:
        raise EmptyRegion("no sampled pair inside the Y-sublevel")
    theta_ratio = lam_hi / lam_lo if used else math.inf

    notes = []
    coeffs = {}
    lemma_ok = True
    gyro_free = all(
        float(np.linalg.norm(L.a(t, np.zeros(m)))) == 0.0 for t in times)
    if gyro_free:
        worst = math.inf
        dirs = np.array([[math.cos(2 * math.pi * k / n_dirs),
                          math.sin(2 * math.pi * k / n_dirs)]
                         for k in range(n_dirs)]) if m == 2 else None
        for t in times:
            for z in sampler.points(t)[:64]:
                q = z[:m]
                psi = L.Psi(t, q)
                if psi > r:
                    continue
                lam = np.linalg.eigvalsh(L.A(t, q))
                alpha1 = 1.0 / (2.0 * lam[-1])
                gamma1 = psi
                if alpha2_fn is not None:
                    alpha2 = alpha2_fn(t, q)
                else:
                    alpha2 = -math.inf
                    ds = dirs if dirs is not None else np.eye(m)
                    for y in ds:
                        Hq = _hessian(lambda qq: float(
                            y @ np.linalg.solve(L.A(t, qq), y)), q)
                        alpha2 = max(alpha2, float(np.linalg.eigvalsh(Hq)[-1]))
                if gamma2_fn is not None:
                    gamma2 = gamma2_fn(t, q)
                else:
                    gamma2 = 2.0 * float(np.linalg.eigvalsh(
                        _hessian(lambda qq: L.Phi(t, qq), q))[0])
                coeffs = {"alpha1": alpha1, "alpha2": alpha2,
                          "gamma1": gamma1, "gamma2": gamma2}
                u_max = math.sqrt(max(r - gamma1, 0.0) / alpha1) + 1.0
                for u in np.linspace(0.0, u_max, 64):
                    if alpha1 * u * u + gamma1 <= r:
                        margin = gamma2 - alpha2 * u * u
                        worst = min(worst, margin)
                        if margin <= 0:
                            lemma_ok = False
        coeffs["worst_margin"] = worst
    else:
        notes.append("gyroscopic term present: coefficient test skipped")

    ok = rho_hat > 0 and lemma_ok
    return ConvexityCertificate(r=float(r), d=float(d), rho_hat=rho_hat,
                                theta_ratio=theta_ratio, lemma_coeffs=coeffs,
                                status=PASS if ok else FAIL, samples=used,
                                notes=notes)
