"""Topological shooting: exit classification, staying-parameter search,
limit extraction and the bound certificate.

The search realizes the topological argument numerically: initial sets whose
boundary exits strictly, an exit-time objective whose supremum is attained
at staying points, and bisection / simplex refinement down to machine
resolution.  Because any double-precision initial condition can shadow a
hyperbolic bounded solution only for a limited span, the certified window
trajectory is assembled from a chain of locally re-shot pieces; seam
defects are measured and reported in the certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield, replace

import numpy as np

from .errors import (AnchorsNotCauchy, MaxStepsExceeded, NoInteriorCandidate,
                     NonFiniteState, OutOfSpan, StepSizeUnderflow)
from .fields import VectorField
from .integrate import EventSpec, IntegratorConfig, Trajectory, integrate
from .pairs import VWPair


@dataclass
class InitialSet:
    """Chart of a candidate set M_t over the unit cube [0,1]^p.

    on_exit_boundary marks the parameters mapping onto the exit part of the
    boundary (the level W = w*).
    """
    p: int
    chart: object
    on_exit_boundary: object
    t: float


@dataclass
class ExitClassification:
    outcome: str                    # exited | stayed_to_horizon | blew_up
    t_exit: float | None
    x_exit: np.ndarray | None
    max_V: float
    W_end: float
    trajectory: Trajectory | None

    @property
    def exit_time(self):
        """Scalar search objective; staying maps to +inf."""
        if self.outcome == "stayed_to_horizon":
            return math.inf
        return self.t_exit


def _level_event(sf, level, name, terminal):
    if sf.batch is not None:
        return EventSpec(lambda ts, xs: sf.batch(ts, xs) - level,
                         "rising", terminal, name, batch=True)
    raw = sf._eval
    return EventSpec(lambda t, x: raw(t, x) - level, "rising", terminal, name)


def classify(field: VectorField, pair: VWPair, t_start, x0, t_horizon,
             config: IntegratorConfig) -> ExitClassification:
    """Forward run with the terminal exit event on the guiding level w*.

    Integrator failures (stiffness, finite-time escape) are folded into the
    'blew_up' outcome; an exit already localized before the failure wins.
    A start already at or beyond the exit level counts as an immediate exit.
    """
    x0 = np.asarray(x0, dtype=float)
    w0val = pair.W(t_start, x0)
    if w0val >= pair.w_upper + 1e-12 * (1.0 + abs(pair.w_upper)):
        v0 = pair.V(t_start, x0)
        return ExitClassification("exited", float(t_start), x0, v0, w0val, None)
    exit_event = _level_event(pair.W, pair.w_upper, "exit", True)
    cap_event = _level_event(pair.V, pair.V_cap, "vcap", False)
    try:
        traj, hits = integrate(field, t_start, x0, t_horizon, config,
                               [exit_event, cap_event])
        failed_at = None
    except (StepSizeUnderflow, NonFiniteState, MaxStepsExceeded) as exc:
        traj = getattr(exc, "partial", None)
        hits = getattr(exc, "partial_hits", [])
        failed_at = getattr(exc, "t", t_start)

    exit_hits = [h for h in hits if h.name == "exit"]
    if traj is not None and len(traj.times):
        if pair.V.batch is not None:
            vmax = float(np.max(pair.V.batch(traj.times, traj.states)))
        else:
            vmax = max(pair.V(t, x) for t, x in zip(traj.times, traj.states))
        t_last = traj.times[-1] if t_horizon >= t_start else traj.times[0]
        x_last = traj.states[-1] if t_horizon >= t_start else traj.states[0]
    else:
        vmax = pair.V(t_start, x0)
        t_last, x_last = t_start, x0
    w_end = pair.W(t_last, x_last)

    if exit_hits:
        h = exit_hits[0]
        return ExitClassification("exited", h.t, h.x, vmax, pair.W(h.t, h.x), traj)
    if failed_at is not None:
        return ExitClassification("blew_up", float(failed_at), x_last, vmax,
                                  w_end, traj)
    return ExitClassification("stayed_to_horizon", None, x_last, vmax, w_end, traj)


@dataclass(frozen=True)
class SearchConfig:
    integrator: IntegratorConfig = dfield(default_factory=IntegratorConfig)
    param_tol: float = 1e-12        # <= 0 means refine to machine resolution
    grid_per_axis: int = 9
    grid_cap: int = 100_000
    nm_max_iter: int = 400
    initial_guess: object = None
    warm_radius: float = 0.05
    immediate_frac: float = 1e-6


def _nm_simplex(objective, x0, radius, max_iter, tol):
    """Nelder-Mead maximization on the unit cube; stops on simplex diameter.

    objective(u) may short-circuit by returning +inf (a stayer was found);
    the loop returns immediately in that case.
    """
    p = len(x0)
    pts = [np.clip(np.asarray(x0, dtype=float), 0.0, 1.0)]
    for i in range(p):
        q = pts[0].copy()
        q[i] = np.clip(q[i] + radius if q[i] + radius <= 1.0 else q[i] - radius, 0.0, 1.0)
        pts.append(q)
    vals = []
    for q in pts:
        v = objective(q)
        if v == math.inf:
            return q, v
        vals.append(v)
    vals = np.array(vals)
    pts = np.array(pts)
    for _ in range(max_iter):
        order = np.argsort(-vals)   # descending: best first
        pts, vals = pts[order], vals[order]
        diam = float(np.max(np.abs(pts - pts[0])))
        if diam < max(tol, 4e-17):
            break
        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        cand = np.clip(centroid + (centroid - worst), 0.0, 1.0)
        v = objective(cand)
        if v == math.inf:
            return cand, v
        if v > vals[0]:
            expand = np.clip(centroid + 2.0 * (centroid - worst), 0.0, 1.0)
            ve = objective(expand)
            if ve == math.inf:
                return expand, ve
            if ve > v:
                pts[-1], vals[-1] = expand, ve
            else:
                pts[-1], vals[-1] = cand, v
        elif v > vals[-2]:
            pts[-1], vals[-1] = cand, v
        else:
            contract = np.clip(centroid + 0.5 * (worst - centroid), 0.0, 1.0)
            vc = objective(contract)
            if vc == math.inf:
                return contract, vc
            if vc > vals[-1]:
                pts[-1], vals[-1] = contract, vc
            else:
                for i in range(1, len(pts)):
                    pts[i] = np.clip(pts[0] + 0.5 * (pts[i] - pts[0]), 0.0, 1.0)
                    vi = objective(pts[i])
                    if vi == math.inf:
                        return pts[i], vi
                    vals[i] = vi
    order = np.argsort(-vals)
    return pts[order][0], vals[order][0]


def find_staying_parameter(field: VectorField, pair: VWPair,
                           init_set: InitialSet, t_start, t_horizon,
                           search_config: SearchConfig,
                           full_output=False):
    """Parameter in [0,1]^p whose trajectory stays in the window the longest.

    p = 1 bisects the exit-side dichotomy; p >= 2 sweeps a coarse grid and
    refines the exit-time objective with a simplex.  Refinement stops when
    a probe outlives the horizon or the parameter diameter hits param_tol
    (machine resolution when param_tol <= 0).
    """
    cache = {}

    def run(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        key = tuple(u)
        if key not in cache:
            x0 = init_set.chart(u)
            cache[key] = classify(field, pair, t_start, x0, t_horizon,
                                  search_config.integrator)
        return cache[key]

    def finish(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return (u, run(u)) if full_output else u

    span = t_horizon - t_start
    immediate = t_start + search_config.immediate_frac * span

    if init_set.p == 1:
        lo, hi = np.array([0.0]), np.array([1.0])
        c_lo, c_hi = run(lo), run(hi)
        for u, c in ((lo, c_lo), (hi, c_hi)):
            if c.outcome == "stayed_to_horizon":
                return finish(u)
        ref_a, ref_b = c_lo.x_exit, c_hi.x_exit
        d = ref_b - ref_a
        center = 0.5 * (ref_a + ref_b)
        if float(np.linalg.norm(d)) == 0.0:
            raise NoInteriorCandidate("boundary exits are indistinguishable")

        def side(c):
            return 1.0 if float((c.x_exit - center) @ d) >= 0 else -1.0

        s_lo, s_hi = side(c_lo), side(c_hi)
        if s_lo == s_hi:
            raise NoInteriorCandidate("exit side does not flip across the set")
        a, b = 0.0, 1.0
        best_u, best_T = 0.5, -math.inf
        tol = search_config.param_tol
        while True:
            m = 0.5 * (a + b)
            if m == a or m == b:
                break
            c = run(np.array([m]))
            if c.outcome == "stayed_to_horizon":
                return finish(np.array([m]))
            T = c.exit_time
            if T > best_T:
                best_u, best_T = m, T
            if side(c) == s_lo:
                a = m
            else:
                b = m
            if tol > 0 and (b - a) < tol:
                break
        return finish(np.array([0.5 * (a + b)]))

    # p >= 2: coarse grid then simplex refinement
    p = init_set.p
    guess = search_config.initial_guess
    if guess is None:
        per = search_config.grid_per_axis
        while per ** p > search_config.grid_cap and per > 2:
            per -= 1
        axes = [np.linspace(0.0, 1.0, per)] * p
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
        best_u, best_T = None, -math.inf
        any_late = False
        for u in grid:
            c = run(u)
            if c.outcome == "stayed_to_horizon":
                return finish(u)
            T = c.exit_time
            if T > immediate:
                any_late = True
            if T > best_T:
                best_u, best_T = u, T
        if not any_late:
            raise NoInteriorCandidate(
                "every grid trajectory exits immediately: check w* and the set")
        radius = 0.5 / (per - 1)
    else:
        best_u = np.asarray(guess, dtype=float)
        radius = search_config.warm_radius

    def objective(u):
        c = run(u)
        return c.exit_time

    u_opt, _ = _nm_simplex(objective, best_u, radius,
                           search_config.nm_max_iter,
                           search_config.param_tol)
    return finish(u_opt)


@dataclass(frozen=True)
class ChainConfig:
    """Windowed re-shooting: pieces of piece_span, shot lead ahead of the
    piece and kept alive pad beyond it."""
    piece_span: float
    lead: float
    pad: float


@dataclass(frozen=True)
class ShootingConfig:
    integrator: IntegratorConfig = dfield(default_factory=IntegratorConfig)
    search: SearchConfig = None
    anchor_time: float = 0.0
    anchor_tol: float = 1e-8
    stay_horizon: float | None = None
    chain: ChainConfig | None = None
    omega0: float = math.nan
    omega_sup: float = math.nan
    bound_V: float = math.nan

    def __post_init__(self):
        if self.search is None:
            object.__setattr__(self, "search",
                               SearchConfig(integrator=self.integrator))


def default_stay_horizon(hq, anchor_time, pair):
    """Horizon past which a trajectory that never zeroes V must have exited."""
    if hq.spread > 0:
        return hq.tau_plus(anchor_time) + hq.spread / max(hq.alpha_min, 1e-300)
    return anchor_time + (pair.w_upper - pair.w_lower) / max(hq.alpha_min, 1e-300)


class ChainedTrajectory:
    """Piecewise trajectory built from locally re-shot segments.

    Presents the same read interface as Trajectory; the sub-trajectories own
    the dense data and each covers [lo_i, hi_i) with hi_{i-1} == lo_i.
    """

    def __init__(self, pieces, boundaries, seam_defects):
        self._pieces = pieces
        self._bounds = np.asarray(boundaries, dtype=float)
        self.seam_defects = np.asarray(seam_defects, dtype=float)
        self.t_lo = float(self._bounds[0])
        self.t_hi = float(self._bounds[-1])
        times, states, derivs = [], [], []
        for k, piece in enumerate(pieces):
            lo, hi = self._bounds[k], self._bounds[k + 1]
            sel = (piece.times >= lo) & (piece.times < hi)
            if k == len(pieces) - 1:
                sel = (piece.times >= lo) & (piece.times <= hi)
            if not sel[0] and piece.times[0] < lo:
                times.append(lo)
                states.append(piece.evaluate_dense(lo))
                derivs.append(piece.derivs[int(np.searchsorted(piece.times, lo)) - 1])
            times.extend(piece.times[sel])
            states.extend(piece.states[sel])
            derivs.extend(piece.derivs[sel])
        self.times = np.array(times)
        self.states = np.vstack(states)
        self.derivs = np.vstack(derivs)

    @property
    def span(self):
        return (self.t_lo, self.t_hi)

    @property
    def dimension(self):
        return self._pieces[0].dimension

    def evaluate_dense(self, t):
        t = float(t)
        slop = 1e-12 * (1.0 + abs(self.t_lo) + abs(self.t_hi))
        if t < self.t_lo - slop or t > self.t_hi + slop:
            raise OutOfSpan(f"t={t} outside [{self.t_lo}, {self.t_hi}]")
        k = int(np.clip(np.searchsorted(self._bounds, t, side="right") - 1,
                        0, len(self._pieces) - 1))
        return self._pieces[k].evaluate_dense(min(max(t, self._pieces[k].t_lo),
                                                  self._pieces[k].t_hi))

    def sample(self, ts):
        return np.vstack([self.evaluate_dense(t) for t in ts])

    def to_csv(self, path):
        n = self.dimension
        header = "t," + ",".join(f"x{i+1}" for i in range(n))
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for t, x in zip(self.times, self.states):
                cells = [format(t, ".17g")] + [format(v, ".17g") for v in x]
                fh.write(",".join(cells) + "\n")


@dataclass
class ShootingCertificate:
    trajectory: object
    sup_V: float
    bound_V: float
    W_min: float
    W_max: float
    omega0: float
    omega_sup: float
    anchors: list
    anchor_residuals: list
    seam_defect: float
    status: str
    witness_t: float | None = None
    slack: float = 0.0

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {
            "sup_V": self.sup_V, "bound_V": self.bound_V,
            "W_min": self.W_min, "W_max": self.W_max,
            "omega0": self.omega0, "omega_sup": self.omega_sup,
            "anchors": [list(np.atleast_1d(a)) for a in self.anchors],
            "anchor_residuals": list(self.anchor_residuals),
            "seam_defect": self.seam_defect,
            "status": self.status,
            "witness_t": self.witness_t,
            "slack": self.slack,
        }


def certify(traj, pair: VWPair, omega0, omega_sup, bound,
            n_grid=1000) -> ShootingCertificate:
    """Dense-grid comparison of V and W against the theoretical window."""
    lo, hi = traj.span
    ts = np.linspace(lo, hi, max(int(n_grid), 1000))
    vs = np.empty(len(ts))
    ws = np.empty(len(ts))
    for i, t in enumerate(ts):
        x = traj.evaluate_dense(t)
        vs[i] = pair.V(t, x)
        ws[i] = pair.W(t, x)
    slack = 1e-6 * (1.0 + abs(bound))
    sup_v = float(np.max(vs))
    w_min, w_max = float(np.min(ws)), float(np.max(ws))
    ok = (sup_v <= bound + slack
          and w_min >= omega0 - slack and w_max <= omega_sup + slack)
    witness = None
    if not ok:
        bad = np.where((vs > bound + slack) | (ws < omega0 - slack)
                       | (ws > omega_sup + slack))[0]
        witness = float(ts[bad[0]]) if len(bad) else None
    return ShootingCertificate(
        trajectory=traj, sup_V=sup_v, bound_V=float(bound),
        W_min=w_min, W_max=w_max, omega0=float(omega0),
        omega_sup=float(omega_sup), anchors=[], anchor_residuals=[],
        seam_defect=0.0, status="pass" if ok else "fail",
        witness_t=witness, slack=slack)


def _merge_two(backward: Trajectory, forward: Trajectory) -> Trajectory:
    ts = np.concatenate([backward.times, forward.times[1:]])
    xs = np.vstack([backward.states, forward.states[1:]])
    fs = np.vstack([backward.derivs, forward.derivs[1:]])
    anchor = np.concatenate([backward._anchor, forward._anchor])
    h = np.concatenate([backward._h, forward._h])
    x0 = np.vstack([backward._x0, forward._x0])
    K = np.vstack([backward._K, forward._K])
    return Trajectory(ts, xs, fs, anchor, h, x0, K, backward.t_lo, forward.t_hi)


def extract_limit_solution(field: VectorField, pair: VWPair, init_set_family,
                           t_sequence, T_anchor, config: ShootingConfig
                           ) -> ShootingCertificate:
    """Anchor-sequence limit plus the window trajectory and its certificate.

    Stage 1 walks the decreasing start times, re-shooting from each set and
    recording the state at the anchor time until the sequence is Cauchy at
    anchor_tol.  Stage 2 assembles the certified window [anchor - T, anchor
    + T]: one two-sided integration of the converged anchor, or (for
    strongly hyperbolic flows) the re-shooting chain from config.chain.
    """
    t_sequence = [float(t) for t in t_sequence]
    if len(t_sequence) < 3:
        raise ValueError("t_sequence needs at least 3 entries")
    if any(b >= a for a, b in zip(t_sequence, t_sequence[1:])):
        raise ValueError("t_sequence must be strictly decreasing")
    if config.stay_horizon is None:
        raise ValueError("config.stay_horizon must be set (pipelines compute it)")

    anchor_t = config.anchor_time
    anchors = []
    residuals = []
    converged = None
    for t_j in t_sequence:
        init_set = init_set_family(t_j)
        u, cls = find_staying_parameter(field, pair, init_set, t_j,
                                        config.stay_horizon, config.search,
                                        full_output=True)
        traj = cls.trajectory
        if traj is None or anchor_t > traj.t_hi or anchor_t < traj.t_lo:
            residuals.append(math.inf)
            anchors.append(np.full(field.dimension, math.nan))
            continue
        xi = traj.evaluate_dense(anchor_t)
        anchors.append(xi)
        if len(anchors) >= 2:
            residuals.append(float(np.linalg.norm(anchors[-1] - anchors[-2])))
            if residuals[-1] <= config.anchor_tol:
                converged = xi
                break
    if converged is None:
        raise AnchorsNotCauchy(anchors, residuals)

    lo, hi = anchor_t - T_anchor, anchor_t + T_anchor
    seams = []
    if config.chain is None:
        back, _ = integrate(field, anchor_t, converged, lo, config.integrator)
        fwd, _ = integrate(field, anchor_t, converged, hi, config.integrator)
        window = _merge_two(back, fwd)
    else:
        cc = config.chain
        n_pieces = max(1, int(math.ceil((hi - lo) / cc.piece_span)))
        bounds = np.linspace(lo, hi, n_pieces + 1)
        pieces = []
        prev_u = None
        prev_end = None
        for i in range(n_pieces):
            s0, s1 = bounds[i], bounds[i + 1]
            t_start = s0 - cc.lead
            horizon = s1 + cc.pad
            sc = replace(config.search, initial_guess=prev_u)
            u, cls = find_staying_parameter(field, pair,
                                            init_set_family(t_start), t_start,
                                            horizon, sc, full_output=True)
            prev_u = np.atleast_1d(u)
            traj = cls.trajectory
            if traj is None or traj.t_hi < s1:
                reach = None if traj is None else traj.t_hi
                raise NoInteriorCandidate(
                    f"chain piece [{s0}, {s1}] only reached t={reach}; "
                    "shrink piece_span or enlarge the window")
            if prev_end is not None:
                seams.append(float(np.linalg.norm(
                    traj.evaluate_dense(s0) - prev_end)))
            prev_end = traj.evaluate_dense(s1)
            pieces.append(traj)
        window = ChainedTrajectory(pieces, bounds, seams)

    cert = certify(window, pair, config.omega0, config.omega_sup, config.bound_V)
    cert.anchors = [np.asarray(a) for a in anchors]
    cert.anchor_residuals = residuals
    cert.seam_defect = float(max(seams)) if seams else 0.0
    return cert
