"""Pure-Python Dormand-Prince 5(4) stepping kernel.

This is the fallback twin of the compiled kernel in ``_rk45_cy.pyx``.  Both
implement the same scheme: seven-stage DOPRI pair, FSAL, RMS error norm,
stabilized (PI) step-size control, and per-step stage storage for the quartic
dense-output interpolant.  The surrounding driver (``vwshoot.integrate``)
owns event handling, time reversal and error reporting.
"""

import numpy as np

# Butcher tableau (stage coefficients) of the Dormand-Prince 5(4) pair.
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])

A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
])

B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])

# B - B_hat: weights of the embedded 4th-order error estimate.
E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920,
              -17253 / 339200, 22 / 525, -1 / 40])

# Quartic dense-output polynomial weights (Shampine's interpolant):
# x(t0 + theta*h) = x0 + h * K^T P [theta, theta^2, theta^3, theta^4].
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
BETA = 0.04
EXPO = 0.2 - BETA * 0.75

# run() status codes
OK = 0
UNDERFLOW = 1
NONFINITE = 2
BUDGET = 3


def run(f, t0, x0, k1, t_end, rtol, atol, h_max, h_min, h_start, facold, max_steps):
    """Advance from (t0, x0) toward t_end (t_end > t0), at most max_steps accepted steps.

    Returns (status, ts, xs, ks, hs, Ks, k_next, h_next, facold) where
    ts/xs/ks hold the accepted nodes *after* t0 and Ks[i] is the (7, n) stage
    block of step i.  k1 must equal f(t0, x0); k_next is the FSAL derivative
    at the last accepted node, h_next / facold feed a resumed call.
    """
    n = x0.shape[0]
    ts, xs, ks, hs, Kss = [], [], [], [], []
    t = t0
    x = x0.copy()
    k1 = np.asarray(k1, dtype=float)
    h = min(h_start, h_max)
    status = BUDGET
    rejected = False
    while len(ts) < max_steps:
        if t >= t_end:
            status = OK
            break
        h = min(h, h_max, t_end - t)
        finishing = h >= t_end - t - 1e-15 * max(abs(t), abs(t_end))
        if h < h_min and not finishing:
            status = UNDERFLOW
            break

        K = np.empty((7, n))
        K[0] = k1
        bad = False
        for i in range(1, 6):
            xi = x + h * (A[i, :i] @ K[:i])
            K[i] = f(t + C[i] * h, xi)
            if not np.all(np.isfinite(K[i])):
                bad = True
                break
        if not bad:
            x_new = x + h * (B[:6] @ K[:6])
            K[6] = f(t + h, x_new)
            bad = not np.all(np.isfinite(K[6])) or not np.all(np.isfinite(x_new))
        if bad:
            if np.any(np.isnan(K)):
                status = NONFINITE
                break
            # overflow: treat as a rejected step and shrink
            h *= FAC_MIN
            rejected = True
            continue

        err_vec = h * (E @ K)
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))

        if np.isnan(err):
            status = NONFINITE
            break
        if err <= 1.0:
            ts.append(t + h)
            xs.append(x_new)
            ks.append(K[6].copy())
            hs.append(h)
            Kss.append(K)
            if err == 0.0:
                fac = FAC_MAX
            else:
                fac = min(FAC_MAX, max(FAC_MIN, SAFETY / (err ** EXPO / facold ** BETA)))
            if rejected:
                fac = min(1.0, fac)
            facold = max(err, 1e-4)
            t += h
            x = x_new
            k1 = K[6]
            h *= fac
            rejected = False
        else:
            h *= max(FAC_MIN, SAFETY / err ** EXPO)
            rejected = True
    else:
        status = BUDGET
    if t >= t_end:
        status = OK
    return (status, np.array(ts), np.array(xs).reshape(len(ts), n),
            np.array(ks).reshape(len(ts), n), np.array(hs),
            np.array(Kss).reshape(len(ts), 7, n), k1, h, facold)


def dense_eval(x_left, h, K, theta):
    """Interpolant value(s) at relative position(s) theta in [0, 1]."""
    th = np.atleast_1d(theta)
    powers = np.vstack([th, th ** 2, th ** 3, th ** 4])
    vals = x_left[None, :] + h * (powers.T @ (P.T @ K))
    return vals[0] if np.isscalar(theta) else vals
