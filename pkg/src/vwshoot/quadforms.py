"""Time-dependent symmetric forms: spectral splitting, retraction, dichotomy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearSingular, NonPositiveSPlus, NotOnLevelSet
from .reports import FAIL, PASS, ConditionReport

_SYM_TOL = 1e-12


class SymmetricFormPath:
    """t -> S(t), a C^1 path of symmetric matrices, with dS/dt on demand.

    The derivative falls back to central differences with step
    1e-5 * (1 + |t|) when no analytic path derivative is supplied.
    """

    def __init__(self, evaluator, derivative=None, dim=None, name=None):
        self._eval = evaluator
        self._deriv = derivative
        self.dim = dim
        self.name = name

    def __call__(self, t):
        S = np.asarray(self._eval(float(t)), dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("form evaluator must return a square matrix")
        asym = np.max(np.abs(S - S.T)) if S.size else 0.0
        if asym > _SYM_TOL * max(1.0, np.max(np.abs(S))):
            raise ValueError(f"form not symmetric at t={t} (defect {asym:g})")
        return 0.5 * (S + S.T)

    def derivative(self, t):
        if self._deriv is not None:
            D = np.asarray(self._deriv(float(t)), dtype=float)
            return 0.5 * (D + D.T)
        h = 1e-5 * (1.0 + abs(float(t)))
        return (self(t + h) - self(t - h)) / (2 * h)

    @staticmethod
    def constant(S):
        S = np.asarray(S, dtype=float)
        path = SymmetricFormPath(lambda t: S, lambda t: np.zeros_like(S),
                                 dim=S.shape[0])
        path.constant_matrix = S
        return path


def load_form_path_csv(path):
    """Matrix path from a CSV table `t,s11,s12,...,snn` (cubic interpolation)."""
    from scipy.interpolate import CubicSpline
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim == 1:
        data = data[None, :]
    ts = data[:, 0]
    flat = data[:, 1:]
    n = int(round(math.sqrt(flat.shape[1])))
    if n * n != flat.shape[1]:
        raise ValueError(f"{path}: entry count {flat.shape[1]} is not a square")
    spline = CubicSpline(ts, flat, axis=0)
    dspline = spline.derivative()
    return SymmetricFormPath(lambda t: spline(t).reshape(n, n),
                             lambda t: dspline(t).reshape(n, n), dim=n)


@dataclass
class SpectralSplit:
    eigenvalues: np.ndarray        # ascending
    eigenvectors: np.ndarray       # columns match eigenvalues
    P_plus: np.ndarray
    P_minus: np.ndarray
    n_plus: int
    n_minus: int
    indefinite: bool

    @property
    def basis_plus(self):
        return self.eigenvectors[:, self.eigenvalues > 0]

    @property
    def basis_minus(self):
        return self.eigenvectors[:, self.eigenvalues < 0]


def spectral_split(S: SymmetricFormPath, t) -> SpectralSplit:
    """Orthogonal splitting into the positive / negative invariant subspaces."""
    M = S(t)
    vals, vecs = np.linalg.eigh(M)
    big = np.max(np.abs(vals))
    if big == 0.0 or np.min(np.abs(vals)) < 1e-10 * big:
        raise NearSingular(f"form nearly singular at t={t}: eigenvalues {vals}")
    plus = vals > 0
    Vp = vecs[:, plus]
    Vm = vecs[:, ~plus]
    Pp = Vp @ Vp.T
    Pm = Vm @ Vm.T
    return SpectralSplit(eigenvalues=vals, eigenvectors=vecs, P_plus=Pp,
                         P_minus=Pm, n_plus=int(plus.sum()),
                         n_minus=int((~plus).sum()),
                         indefinite=bool(plus.any() and (~plus).any()))


def fixed_time_retraction(S: SymmetricFormPath, t, w, x):
    """Project a level-set point onto the positive subspace along the level set.

    x must satisfy <S(t)x, x> = w (> 0) within 1e-8; the image y lies in the
    positive subspace with <S(t)y, y> = w.
    """
    if w <= 0:
        raise ValueError("level value must be positive")
    x = np.asarray(x, dtype=float)
    M = S(t)
    val = float(x @ M @ x)
    if abs(val - w) > 1e-8 * max(1.0, abs(w)):
        raise NotOnLevelSet(f"<Sx,x>={val} != w={w}")
    split = spectral_split(S, t)
    S_plus = split.P_plus @ M @ split.P_plus
    s = float(x @ S_plus @ x)
    if s <= 0:
        raise NonPositiveSPlus("point has no positive component on the level set")
    scale = math.sqrt(w / s)
    return scale * (split.P_plus @ x)


def dichotomy_form_check(A_path, C_path: SymmetricFormPath, t_grid) -> ConditionReport:
    """Grid check of the dichotomy form inequality min eig(CA + A^T C + Cdot) >= 1."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("empty grid")
    worst = math.inf
    worst_t = None
    for t in t_grid:
        A = np.asarray(A_path(t), dtype=float)
        C = C_path(t)
        G = C @ A + A.T @ C + C_path.derivative(t)
        lam = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])
        if lam < worst:
            worst = lam
            worst_t = float(t)
    status = PASS if worst >= 1.0 - 1e-9 else FAIL
    return ConditionReport(
        condition="dichotomy-form", status=status, worst_value=worst - 1.0,
        witness_t=worst_t, witness_x=[] if status == FAIL else None,
        samples=len(t_grid), constants={"min_eig": worst})
