"""Regression algorithms for porosity prediction.

Six fitters share one TrainedModel container: ordinary least squares with an
intercept, Gaussian process regression with a squared-exponential-plus-noise
covariance, and tube-regression (SVR) with linear / gaussian / rbf /
polynomial kernels. SVR is trained by solving its dual quadratic program with
SMO-style two-coordinate updates; GPR hyperparameters default to a small
log-grid search scored by marginal likelihood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .features import NormalizationState

KERNEL_KINDS = ("linear", "gaussian", "rbf", "polynomial")
ALGORITHMS = ("Linear", "GPR", "svrL", "svrG", "svrRBF", "svrP")

MODEL_SCHEMA_VERSION = 1


class RegressionError(ValueError):
    """Invalid regression inputs or hyperparameters."""


class ConvergenceError(RuntimeError):
    """Solver did not reach its tolerance within the iteration budget."""

    def __init__(self, message: str, kkt_gap: float):
        super().__init__(message)
        self.kkt_gap = kkt_gap


class FactorizationError(RuntimeError):
    """Covariance matrix could not be factorized for the given hyperparameters."""


# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice. ``sigma`` is the rbf bandwidth; ``degree`` applies to the
    polynomial kernel. The gaussian kernel is the rbf kernel with the
    bandwidth factor fixed to 1."""

    kind: str = "rbf"
    sigma: float = 1.0
    degree: int = 2

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise RegressionError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and self.sigma <= 0.0:
            raise RegressionError(f"rbf sigma must be > 0, got {self.sigma}")
        if self.kind == "polynomial" and self.degree < 1:
            raise RegressionError(f"polynomial degree must be >= 1, got {self.degree}")


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Kernel value for a single pair of equal-length vectors."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise RegressionError(f"kernel inputs differ in length: {x.shape} vs {x2.shape}")
    return float(kernel_matrix(spec, x[None, :], x2[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, X: np.ndarray, X2: np.ndarray | None = None) -> np.ndarray:
    """Gram matrix K[i, j] = k(X[i], X2[j])."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != X2.shape[1]:
        raise RegressionError(f"kernel inputs differ in width: {X.shape[1]} vs {X2.shape[1]}")
    dots = X @ X2.T
    if spec.kind == "linear":
        return dots
    if spec.kind == "polynomial":
        return (1.0 + dots) ** spec.degree
    sq = _sq_distances(X, X2, dots)
    if spec.kind == "gaussian":
        return np.exp(-sq)
    return np.exp(-sq / (2.0 * spec.sigma**2))


def _sq_distances(X: np.ndarray, X2: np.ndarray, dots: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)[:, None] + (X2 * X2).sum(axis=1)[None, :] - 2.0 * dots
    return np.maximum(sq, 0.0)


# --------------------------------------------------------------------------
# hyperparameters and the fitted-model container


@dataclass(frozen=True)
class SvrHyper:
    C: float = 10.0
    epsilon: float = 0.05
    kernel: KernelSpec = field(default_factory=KernelSpec)
    tol: float = 1e-3
    max_iter: int = 2_000_000

    def __post_init__(self) -> None:
        if self.C <= 0.0:
            raise RegressionError(f"C must be > 0, got {self.C}")
        if self.epsilon < 0.0:
            raise RegressionError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.tol <= 0.0:
            raise RegressionError(f"tolerance must be > 0, got {self.tol}")


@dataclass(frozen=True)
class GprHyper:
    signal_var: float = 1.0
    length_scale: float = 1.0
    noise_var: float = 0.1

    def __post_init__(self) -> None:
        if self.signal_var <= 0.0 or self.length_scale <= 0.0:
            raise RegressionError(
                f"signal variance and length scale must be > 0, got {self}"
            )
        if self.noise_var < 0.0:
            raise RegressionError(f"noise variance must be >= 0, got {self.noise_var}")


GPR_GRID = (0.1, 1.0, 10.0)


@dataclass
class TrainedModel:
    """A fitted regressor plus the normalization used to train it.

    ``params`` holds algorithm-specific arrays; ``metadata`` carries solver
    diagnostics (ridge fallback flag, KKT gap, selected GPR grid point).
    When ``normalization`` is set, ``predict`` maps raw features through the
    stored scaling and returns denormalized targets.
    """

    algorithm: str
    params: dict
    normalization: NormalizationState | None = None
    metadata: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        expected = self._n_features()
        if X.shape[1] != expected:
            raise RegressionError(
                f"model expects {expected} features, got {X.shape[1]}"
            )
        if self.normalization is not None:
            X = self.normalization.features.transform(X)
        yn = self._predict_normalized(X)
        if self.normalization is not None:
            yn = self.normalization.target.inverse(yn.reshape(-1, 1)).ravel()
        return yn

    def _n_features(self) -> int:
        if self.algorithm == "Linear":
            return len(self.params["weights"])
        if self.algorithm == "GPR":
            return self.params["X"].shape[1]
        return self.params["support_X"].shape[1]

    def _predict_normalized(self, X: np.ndarray) -> np.ndarray:
        if self.algorithm == "Linear":
            return X @ self.params["weights"] + self.params["intercept"]
        if self.algorithm == "GPR":
            mean, _ = gpr_posterior(self, X, normalized_input=True)
            return mean
        K = kernel_matrix(self.params["kernel"], self.params["support_X"], X)
        return self.params["beta"] @ K + self.params["bias"]


# --------------------------------------------------------------------------
# linear least squares


def fit_linear(X, y) -> TrainedModel:
    """Least-squares affine fit. Rank-deficient systems fall back to a tiny
    ridge (1e-10) and are flagged in the model metadata."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size or X.shape[0] == 0:
        raise RegressionError(f"bad shapes: X {X.shape}, y {y.shape}")
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    ridge_applied = np.linalg.matrix_rank(A) < A.shape[1]
    if ridge_applied:
        G = A.T @ A + 1e-10 * np.eye(A.shape[1])
        coef = np.linalg.solve(G, A.T @ y)
    else:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return TrainedModel(
        "Linear",
        {"weights": coef[:-1], "intercept": float(coef[-1])},
        metadata={"ridge_applied": bool(ridge_applied)},
    )


# --------------------------------------------------------------------------
# Gaussian process regression


def _gpr_kernel(X: np.ndarray, X2: np.ndarray, hyper: GprHyper) -> np.ndarray:
    dots = X @ X2.T
    sq = _sq_distances(X, X2, dots)
    return hyper.signal_var * np.exp(-sq / (2.0 * hyper.length_scale**2))


def _gpr_factorize(X: np.ndarray, y: np.ndarray, hyper: GprHyper):
    K = _gpr_kernel(X, X, hyper) + hyper.noise_var * np.eye(X.shape[0])
    try:
        factor = cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"covariance not positive definite for signal_var={hyper.signal_var}, "
            f"length_scale={hyper.length_scale}, noise_var={hyper.noise_var}: {exc}"
        ) from exc
    alpha = cho_solve(factor, y, check_finite=False)
    log_lik = (
        -0.5 * float(y @ alpha)
        - float(np.log(np.diag(factor[0])).sum())
        - 0.5 * X.shape[0] * math.log(2.0 * math.pi)
    )
    return factor, alpha, log_lik


def fit_gpr(X, y, hyper: GprHyper | None = None) -> TrainedModel:
    """Fit GPR. With ``hyper=None`` the (signal_var, length_scale, noise_var)
    triple is picked from a log grid {0.1, 1, 10}^3 by marginal likelihood."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size or X.shape[0] == 0:
        raise RegressionError(f"bad shapes: X {X.shape}, y {y.shape}")
    searched = hyper is None
    if searched:
        best = None
        for sv in GPR_GRID:
            for ls in GPR_GRID:
                for nv in GPR_GRID:
                    cand = GprHyper(sv, ls, nv)
                    try:
                        _, _, log_lik = _gpr_factorize(X, y, cand)
                    except FactorizationError:
                        continue
                    if best is None or log_lik > best[0]:
                        best = (log_lik, cand)
        if best is None:
            raise FactorizationError("no grid point yielded a positive definite covariance")
        hyper = best[1]
    factor, alpha, log_lik = _gpr_factorize(X, y, hyper)
    return TrainedModel(
        "GPR",
        {"X": X.copy(), "y": y.copy(), "hyper": hyper,
         "chol": factor[0], "alpha": alpha},
        metadata={"log_marginal_likelihood": log_lik, "grid_searched": searched},
    )


def gpr_posterior(
    model: TrainedModel, X_query, normalized_input: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points.

    Variance is clamped at zero; tiny negative values (numerical floor) are
    reported as 0. When the model carries normalization and
    ``normalized_input`` is false, queries are raw features and the mean is
    returned denormalized (the variance stays on the normalized scale).
    """
    if model.algorithm != "GPR":
        raise RegressionError(f"not a GPR model: {model.algorithm}")
    Xq = np.atleast_2d(np.asarray(X_query, dtype=float))
    if model.normalization is not None and not normalized_input:
        Xq = model.normalization.features.transform(Xq)
    p = model.params
    hyper: GprHyper = p["hyper"]
    k_star = _gpr_kernel(p["X"], Xq, hyper)
    mean = k_star.T @ p["alpha"]
    v = solve_triangular(p["chol"], k_star, lower=True, check_finite=False)
    var = hyper.signal_var - (v * v).sum(axis=0)
    var = np.where(var > 0.0, var, 0.0)
    if model.normalization is not None and not normalized_input:
        mean = model.normalization.target.inverse(mean.reshape(-1, 1)).ravel()
    return mean, var


# --------------------------------------------------------------------------
# SVR via SMO on the dual quadratic program


def fit_svr(X, y, hyper: SvrHyper | None = None) -> TrainedModel:
    """Train tube regression by solving the dual QP.

    The dual maximizes
        -1/2 sum_ij (a_i - a'_i)(a_j - a'_j) K_ij
        - epsilon sum_i (a_i + a'_i) + sum_i y_i (a_i - a'_i)
    subject to sum_i (a_i - a'_i) = 0 and 0 <= a_i, a'_i <= C. The solver
    runs SMO-style two-coordinate updates, picking the maximal-KKT-violating
    pair each step, until the violation gap falls below the tolerance.
    """
    hyper = hyper or SvrHyper()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size or X.shape[0] == 0:
        raise RegressionError(f"bad shapes: X {X.shape}, y {y.shape}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise RegressionError("SVR inputs must be finite")
    beta, bias, gap, iters = _smo(X, y, hyper)
    return TrainedModel(
        "svr",
        {"support_X": X.copy(), "beta": beta, "bias": bias, "kernel": hyper.kernel},
        metadata={
            "hyper": hyper,
            "kkt_gap": gap,
            "iterations": iters,
            "n_support": int(np.count_nonzero(beta)),
            "dual_objective": svr_dual_objective(
                kernel_matrix(hyper.kernel, X), y, beta, hyper.epsilon
            ),
        },
    )


def svr_dual_objective(K: np.ndarray, y: np.ndarray, beta: np.ndarray, epsilon: float) -> float:
    """Value of the maximized dual objective at coefficients beta = a - a'."""
    return float(-0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + y @ beta)


def _smo(X: np.ndarray, y: np.ndarray, hyper: SvrHyper):
    """Two-coordinate ascent on the 2n-variable dual.

    Variables t < n are the upper-tube multipliers (direction +1), t >= n the
    lower-tube ones (direction -1). Kernel rows are computed lazily so memory
    stays proportional to the rows actually touched.
    """
    n = X.shape[0]
    C, eps_tube = hyper.C, hyper.epsilon
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    grad = np.concatenate([eps_tube - y, eps_tube + y])

    rows: dict[int, np.ndarray] = {}

    def krow(t: int) -> np.ndarray:
        row = rows.get(t)
        if row is None:
            row = kernel_matrix(hyper.kernel, X[t : t + 1], X).ravel()
            rows[t] = row
        return row

    gap = math.inf
    iters = 0
    for iters in range(1, hyper.max_iter + 1):
        score = -sign * grad
        up = ((sign > 0.0) & (a < C)) | ((sign < 0.0) & (a > 0.0))
        low = ((sign > 0.0) & (a > 0.0)) | ((sign < 0.0) & (a < C))
        i = int(np.argmax(np.where(up, score, -math.inf)))
        j = int(np.argmin(np.where(low, score, math.inf)))
        m, mm = score[i], score[j]
        gap = m - mm
        if gap <= hyper.tol:
            break
        ib, jb = i % n, j % n
        row_i, row_j = krow(ib), krow(jb)
        quad = max(row_i[ib] + row_j[jb] - 2.0 * row_i[jb], 1e-12)
        head_i = (C - a[i]) if sign[i] > 0.0 else a[i]
        head_j = a[j] if sign[j] > 0.0 else (C - a[j])
        delta = min(gap / quad, head_i, head_j)
        a[i] = min(max(a[i] + sign[i] * delta, 0.0), C)
        a[j] = min(max(a[j] - sign[j] * delta, 0.0), C)
        kdiff = np.concatenate([row_i, row_i]) - np.concatenate([row_j, row_j])
        grad += sign * delta * kdiff
    else:
        raise ConvergenceError(
            f"SVR did not converge in {hyper.max_iter} iterations "
            f"(KKT gap {gap:.3e} > tol {hyper.tol:.3e})",
            kkt_gap=gap,
        )

    beta = a[:n] - a[n:]
    # Pin the equality constraint sum(beta) = 0 exactly: fold the rounding
    # residue into the largest-headroom coefficient.
    for _ in range(4):
        residue = math.fsum(beta)
        if residue == 0.0:
            break
        t = int(np.argmax(C - np.abs(beta - residue)))
        beta[t] -= residue
    bias = (m + mm) / 2.0
    return beta, float(bias), float(gap), iters


# --------------------------------------------------------------------------
# unified training / prediction / persistence


_SVR_KERNELS = {
    "svrL": KernelSpec("linear"),
    "svrG": KernelSpec("gaussian"),
    "svrRBF": KernelSpec("rbf", sigma=1.0),
    "svrP": KernelSpec("polynomial", degree=2),
}


def train(
    X,
    y,
    algorithm: str,
    svr: SvrHyper | None = None,
    gpr: GprHyper | None = None,
    normalize: bool = True,
) -> TrainedModel:
    """Fit one of the six algorithms on raw features/targets.

    With ``normalize=True`` a Max-Min state is fit on the training data, the
    algorithm trains on the normalized values, and the state is attached to
    the returned model so ``predict`` is raw-in / raw-out.
    """
    if algorithm not in ALGORITHMS:
        raise RegressionError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    norm = None
    Xf, yf = X, y
    if normalize:
        from .features import fit_normalizer

        norm = fit_normalizer(X, y)
        Xf = norm.features.transform(X)
        yf = norm.target.transform(y.reshape(-1, 1)).ravel()
    if algorithm == "Linear":
        model = fit_linear(Xf, yf)
    elif algorithm == "GPR":
        model = fit_gpr(Xf, yf, gpr)
    else:
        base = svr or SvrHyper()
        model = fit_svr(Xf, yf, replace(base, kernel=_SVR_KERNELS[algorithm]))
    return TrainedModel(algorithm, model.params, norm, model.metadata)


def predict(model: TrainedModel, X) -> np.ndarray:
    """Predict targets for raw feature rows (see TrainedModel.predict)."""
    return model.predict(X)


def _hyper_to_dict(h) -> dict:
    if isinstance(h, SvrHyper):
        return {"C": h.C, "epsilon": h.epsilon, "tol": h.tol, "max_iter": h.max_iter,
                "kernel": {"kind": h.kernel.kind, "sigma": h.kernel.sigma,
                           "degree": h.kernel.degree}}
    if isinstance(h, GprHyper):
        return {"signal_var": h.signal_var, "length_scale": h.length_scale,
                "noise_var": h.noise_var}
    return dict(h)


def save_model(model: TrainedModel, path) -> None:
    """Persist a model as JSON. GPR stores its training data and refactorizes
    on load instead of serializing the Cholesky factor."""
    doc: dict = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "algorithm": model.algorithm,
        "normalization": model.normalization.to_dict() if model.normalization else None,
    }
    p = model.params
    if model.algorithm == "Linear":
        doc["params"] = {"weights": p["weights"].tolist(), "intercept": p["intercept"]}
        doc["metadata"] = {"ridge_applied": model.metadata.get("ridge_applied", False)}
    elif model.algorithm == "GPR":
        doc["params"] = {
            "X": p["X"].tolist(), "y": p["y"].tolist(),
            "hyper": _hyper_to_dict(p["hyper"]),
            "recompute_factor": True,
        }
        doc["metadata"] = {
            "log_marginal_likelihood": model.metadata.get("log_marginal_likelihood"),
            "grid_searched": model.metadata.get("grid_searched", False),
        }
    else:
        kern = p["kernel"]
        doc["params"] = {
            "support_X": p["support_X"].tolist(),
            "beta": p["beta"].tolist(),
            "bias": p["bias"],
            "kernel": {"kind": kern.kind, "sigma": kern.sigma, "degree": kern.degree},
        }
        hyper = model.metadata.get("hyper")
        doc["metadata"] = {
            "kkt_gap": model.metadata.get("kkt_gap"),
            "dual_objective": model.metadata.get("dual_objective"),
            "hyper": _hyper_to_dict(hyper) if hyper else None,
        }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise RegressionError(f"unsupported model schema_version {version!r}")
    algorithm = doc["algorithm"]
    norm = (NormalizationState.from_dict(doc["normalization"])
            if doc.get("normalization") else None)
    p = doc["params"]
    if algorithm == "Linear":
        params = {"weights": np.asarray(p["weights"], dtype=float),
                  "intercept": float(p["intercept"])}
        return TrainedModel(algorithm, params, norm, dict(doc.get("metadata", {})))
    if algorithm == "GPR":
        hyper = GprHyper(**p["hyper"])
        refit = fit_gpr(np.asarray(p["X"], dtype=float),
                        np.asarray(p["y"], dtype=float), hyper)
        return TrainedModel(algorithm, refit.params, norm, dict(doc.get("metadata", {})))
    kern = KernelSpec(p["kernel"]["kind"], p["kernel"]["sigma"], p["kernel"]["degree"])
    params = {
        "support_X": np.asarray(p["support_X"], dtype=float),
        "beta": np.asarray(p["beta"], dtype=float),
        "bias": float(p["bias"]),
        "kernel": kern,
    }
    return TrainedModel(algorithm, params, norm, dict(doc.get("metadata", {})))
