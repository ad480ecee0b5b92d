"""Slow, independent dense-QP solver for the tube-regression dual.

Used only as a test oracle against the SMO solver. Works on the 2n-variable
form: minimize 1/2 a^T Q a + p^T a over the box [0, C]^{2n} intersected with
the hyperplane d^T a = 0 (d = +1 for the first n variables, -1 for the rest),
by accelerated projected-gradient descent with momentum restarts. The
projection onto box-and-hyperplane is computed by bisection on the hyperplane
multiplier. Deliberately shares no code with the package solver.
"""

from __future__ import annotations

import numpy as np


def project_box_hyperplane(z: np.ndarray, d: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection of z onto {0 <= a <= C, d @ a = 0} with d in {+-1}^m.

    g(nu) = d @ clip(z - nu*d, 0, C) is piecewise linear and nonincreasing in
    the multiplier nu, so its zero crossing is located exactly by scanning the
    sorted clip breakpoints and interpolating within the bracketing segment.
    """
    zd = z * d  # element i changes clip regime at nu = zd_i and nu = zd_i - C*d_i
    breakpoints = np.unique(np.concatenate([zd, zd - C * d]))
    values = np.clip(z[None, :] - np.outer(breakpoints, d), 0.0, C) @ d
    k = int(np.searchsorted(-values, 0.0, side="left"))  # first g <= 0
    if k == 0:
        nu_star = float(breakpoints[0])
    elif k >= len(breakpoints):
        nu_star = float(breakpoints[-1])
    else:
        g0, g1 = float(values[k - 1]), float(values[k])
        nu0, nu1 = float(breakpoints[k - 1]), float(breakpoints[k])
        nu_star = nu0 if g0 == g1 else nu0 + (nu1 - nu0) * g0 / (g0 - g1)
    return np.clip(z - nu_star * d, 0.0, C)


def solve_svr_dual_qp(K: np.ndarray, y: np.ndarray, C: float, epsilon: float,
                      max_iter: int = 20_000, residual_tol: float = 1e-12) -> dict:
    """Solve the tube-regression dual for a precomputed kernel matrix.

    Returns beta (= upper minus lower multipliers), the bias recovered from
    the KKT conditions, and the maximized dual objective.
    """
    n = len(y)
    d = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    Q = np.outer(d, d) * np.tile(K, (2, 2))
    L = float(np.linalg.eigvalsh(Q).max())
    step = 1.0 / max(L, 1e-12)

    def objective(a):
        return 0.5 * a @ Q @ a + p @ a

    a = np.zeros(2 * n)
    v = a.copy()
    t = 1.0
    best_a, best_f = a.copy(), objective(a)
    for it in range(1, max_iter + 1):
        a_next = project_box_hyperplane(v - step * (Q @ v + p), d, C)
        f_next = objective(a_next)
        if f_next < best_f:
            best_f, best_a = f_next, a_next.copy()
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        else:
            t_next = 1.0  # restart momentum when the objective stalls
        v = a_next + ((t - 1.0) / t_next) * (a_next - a)
        a, t = a_next, t_next
        if it % 50 == 0:
            fixed_point = project_box_hyperplane(a - step * (Q @ a + p), d, C)
            if np.abs(fixed_point - a).max() < residual_tol:
                break

    a = best_a
    beta = a[:n] - a[n:]
    raw = K @ beta
    # bias from KKT: free upper multipliers pin b = y - raw - eps, free lower
    # ones pin b = y - raw + eps; otherwise bracket b from the bound cases.
    tol = 1e-6 * max(C, 1.0)
    b_estimates = []
    for i in range(n):
        if tol < a[i] < C - tol:
            b_estimates.append(y[i] - raw[i] - epsilon)
        if tol < a[n + i] < C - tol:
            b_estimates.append(y[i] - raw[i] + epsilon)
    if b_estimates:
        bias = float(np.mean(b_estimates))
    else:
        lowers, uppers = [], []
        for i in range(n):
            lo_i = y[i] - raw[i] - epsilon
            hi_i = y[i] - raw[i] + epsilon
            if a[i] <= tol:          # inactive upper constraint: b >= lo_i
                lowers.append(lo_i)
            if a[i] >= C - tol:      # saturated upper constraint: b <= lo_i
                uppers.append(lo_i)
            if a[n + i] <= tol:      # inactive lower constraint: b <= hi_i
                uppers.append(hi_i)
            if a[n + i] >= C - tol:  # saturated lower constraint: b >= hi_i
                lowers.append(hi_i)
        lo = max(lowers) if lowers else -np.inf
        hi = min(uppers) if uppers else np.inf
        if np.isfinite(lo) and np.isfinite(hi):
            bias = float(0.5 * (lo + hi))
        else:
            bias = float(lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0))
    objective_value = float(-0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + y @ beta)
    return {"beta": beta, "bias": bias, "objective": objective_value, "alpha": a}
