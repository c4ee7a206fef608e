"""
Exact Gaussian-process regression with a zero prior mean.

The posterior is stored as the Cholesky factor ``L`` of ``K + sigma_e^2 I``
and the weight vector ``alpha = (K + sigma_e^2 I)^-1 y`` so that the mean at a
new input costs one kernel row and a dot product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .kernels import HyperParameters, KernelSpec, as_inputs, kernel_diag, kernel_grad_contract, kernel_matrix

__all__ = [
    "FactorizationError",
    "Dataset",
    "GPPosterior",
    "OptimizationReport",
    "OptimizerConfig",
    "noisy_cholesky",
    "fit_posterior",
    "predict_mean",
    "predict_variance",
    "nll",
    "nll_gradient",
    "nll_and_gradient",
    "optimize_hyperparameters",
]

LOG_2PI = np.log(2.0 * np.pi)


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky failed even after jitter escalation."""


@dataclass
class Dataset:
    """Training pairs: ``inputs`` is ``(N, 8)``, ``targets`` is ``(N,)`` in newtons."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = as_inputs(self.inputs)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def count(self) -> int:
        return len(self)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx], self.targets[idx])

    def subsample(self, n: int, seed) -> "Dataset":
        """Seeded uniform subsample without replacement."""
        if n > len(self):
            raise ValueError(f"cannot subsample {n} points from a dataset of {len(self)}")
        rng = np.random.default_rng(seed)
        return self.take(np.sort(rng.choice(len(self), size=n, replace=False)))

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = list(parts)
        return Dataset(
            np.concatenate([p.inputs for p in parts]), np.concatenate([p.targets for p in parts])
        )


def noisy_cholesky(K: np.ndarray, noise_var: float, max_escalations: int = 3):
    """Lower Cholesky factor of ``K + noise_var I`` with jitter escalation.

    On failure ``1e-10 * trace(K) / N`` is added to the diagonal and multiplied
    by ten on every further failure, at most ``max_escalations`` times.
    Returns ``(L, jitter)``.
    """
    n = K.shape[0]
    A = K + noise_var * np.eye(n)
    base = 1e-10 * max(np.trace(K) / n, np.finfo(float).tiny)
    jitter = 0.0
    for attempt in range(max_escalations + 1):
        try:
            L = linalg.cholesky(A + jitter * np.eye(n), lower=True, check_finite=True)
            return L, jitter
        except (linalg.LinAlgError, ValueError):
            jitter = base * 10.0**attempt
    raise FactorizationError(
        f"Cholesky of {n}x{n} Gram matrix failed after {max_escalations} jitter escalations"
    )


@dataclass
class GPPosterior:
    spec: KernelSpec
    hp: HyperParameters
    inputs: np.ndarray
    targets: np.ndarray
    L: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    def predict(self, W):
        return predict_mean(self, W)


def fit_posterior(data: Dataset, spec: KernelSpec, hp: HyperParameters) -> GPPosterior:
    """Factorise ``K + sigma_e^2 I`` and solve for the weights."""
    if len(data) < 1:
        raise ValueError("need at least one training point")
    K = kernel_matrix(spec, hp, data.inputs)
    L, jitter = noisy_cholesky(K, hp.sigma_e**2)
    alpha = linalg.cho_solve((L, True), data.targets)
    return GPPosterior(spec, hp, data.inputs, data.targets, L, alpha, jitter)


def predict_mean(post: GPPosterior, W):
    """Posterior mean ``k(W, W_N) alpha``; scalar for a single 8-vector."""
    single = np.ndim(W) == 1
    Ks = kernel_matrix(post.spec, post.hp, as_inputs(W), post.inputs)
    mu = Ks @ post.alpha
    return float(mu[0]) if single else mu


def predict_variance(post: GPPosterior, W):
    """Latent posterior variance ``k(w, w) - |L^-1 k(W_N, w)|^2``."""
    single = np.ndim(W) == 1
    W = as_inputs(W)
    Ks = kernel_matrix(post.spec, post.hp, post.inputs, W)
    V = linalg.solve_triangular(post.L, Ks, lower=True)
    var = kernel_diag(post.spec, post.hp, W) - np.einsum("ij,ij->j", V, V)
    return float(var[0]) if single else var


def nll_and_gradient(data: Dataset, spec: KernelSpec, hp: HyperParameters, grad: bool = True):
    """Negative log marginal likelihood and its gradient in the optimiser's coordinates."""
    K = kernel_matrix(spec, hp, data.inputs)
    L, _ = noisy_cholesky(K, hp.sigma_e**2)
    alpha = linalg.cho_solve((L, True), data.targets)
    n = len(data)
    value = 0.5 * data.targets @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * LOG_2PI
    if not grad:
        return float(value), None
    Kinv, info = linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        raise FactorizationError("inverse from Cholesky factor failed")
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    Q = Kinv - np.outer(alpha, alpha)
    return float(value), 0.5 * kernel_grad_contract(spec, hp, data.inputs, Q)


def nll(data: Dataset, spec: KernelSpec, hp: HyperParameters) -> float:
    return nll_and_gradient(data, spec, hp, grad=False)[0]


def nll_gradient(data: Dataset, spec: KernelSpec, hp: HyperParameters) -> np.ndarray:
    """Gradient of :func:`nll` over the active parameters (see ``HyperParameters.to_vector``)."""
    return nll_and_gradient(data, spec, hp, grad=True)[1]


@dataclass
class OptimizerConfig:
    max_iter: int = 200
    tol: float = 1e-6
    restarts: int = 8
    seed: int = 0
    perturbation: float = 1.0
    #: optional (lower, upper) arrays over the active parameter vector
    bounds: tuple | None = None


@dataclass
class OptimizationReport:
    initial_nll: float
    final_nll: float
    trace: list = field(default_factory=list)
    converged: bool = False
    grad_norm: float = float("nan")
    n_iter: int = 0
    restart_nll: list = field(default_factory=list)
    best_restart: int = 0


def _bfgs(fg, x0, max_iter, tol, bounds):
    """BFGS with Armijo backtracking; failed evaluations count as rejected steps."""
    lo, hi = (None, None) if bounds is None else bounds
    project = (lambda x: x) if bounds is None else (lambda x: np.clip(x, lo, hi))
    x = project(np.asarray(x0, dtype=float))
    f, g = fg(x)
    trace = [f]
    H = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            converged = True
            it -= 1
            break
        p = -g if H is None else -H @ g
        if g @ p >= 0:
            H, p = None, -g
        # cap the first trial step at 1 in log-space units per coordinate
        t = min(1.0, 1.0 / max(np.max(np.abs(p)), 1e-300))
        accepted = False
        for _ in range(40):
            x_new = project(x + t * p)
            step = x_new - x
            try:
                f_new, g_new = fg(x_new)
            except FactorizationError:
                f_new = np.inf
            if np.isfinite(f_new) and f_new <= f + 1e-4 * (g @ step):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no descent along p; a steepest-descent retry has already failed if H is None
            if H is None:
                break
            H = None
            continue
        y = g_new - g
        sy = step @ y
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            if H is None:
                H = np.eye(x.size) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(x.size) - rho * np.outer(step, y)
            H = V @ H @ V.T + rho * np.outer(step, step)
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if df <= tol * max(1.0, abs(f)):
            converged = True
            break
    return x, f, g, trace, converged, it


def optimize_hyperparameters(
    data: Dataset,
    spec: KernelSpec,
    init: HyperParameters,
    config: OptimizerConfig | None = None,
):
    """Minimise the NLL over the active (log-)parameters with seeded multi-start.

    Start 0 is ``init``; further starts perturb the log-scale entries by
    ``U(-perturbation, perturbation)``.  Returns ``(best_hp, report)``.
    """
    cfg = OptimizerConfig() if config is None else config
    spec = KernelSpec.parse(spec)
    theta0 = init.to_vector(spec)

    def fg(theta):
        return nll_and_gradient(data, spec, init.with_vector(spec, theta))

    try:
        f0, g0 = fg(theta0)
    except FactorizationError:
        f0, g0 = np.inf, np.full(theta0.size, np.nan)
    if cfg.max_iter <= 0:
        report = OptimizationReport(
            f0, f0, [f0], False, float(np.linalg.norm(g0)), 0, [f0], 0
        )
        return init, report

    rng = np.random.default_rng(cfg.seed)
    lm = spec.log_mask
    starts = [theta0]
    for _ in range(max(cfg.restarts, 1) - 1):
        th = theta0.copy()
        th[lm] += rng.uniform(-cfg.perturbation, cfg.perturbation, size=lm.sum())
        starts.append(th)

    best = None
    finals = []
    for k, th in enumerate(starts):
        try:
            res = _bfgs(fg, th, cfg.max_iter, cfg.tol, cfg.bounds)
        except FactorizationError:
            finals.append(np.inf)
            continue
        finals.append(res[1])
        if best is None or res[1] < best[1][1]:
            best = (k, res)
    if best is None:
        raise FactorizationError("every restart failed to factorise the Gram matrix")
    k, (x, f, g, trace, converged, n_iter) = best
    report = OptimizationReport(
        initial_nll=f0,
        final_nll=f,
        trace=trace,
        converged=converged,
        grad_norm=float(np.linalg.norm(g)),
        n_iter=n_iter,
        restart_nll=finals,
        best_restart=k,
    )
    return init.with_vector(spec, x), report
