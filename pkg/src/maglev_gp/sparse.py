"""
Subset-of-Regressors compression of an exact GP predictor.

For a subset of ``m`` training inputs the SR mean is

    mean(w) = k_m(w)^T (K_mn K_nm + sigma_e^2 K_mm)^-1 K_mn y

The weights are obtained as the least-squares solution of the stacked system
``[K_nm; sigma_e R^T] a = [y; 0]`` with ``K_mm = R R^T``, which avoids forming
the squared-conditioned normal matrix.  The subset itself is chosen by random
search: draw ``trials`` subsets, keep the one with the best BFR on a selection
set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gp import Dataset, noisy_cholesky
from .kernels import HyperParameters, KernelSpec, as_inputs, kernel_matrix
from .metrics import bfr

__all__ = ["SRPredictor", "sr_weights", "sr_compress", "sr_predict"]


@dataclass
class SRPredictor:
    spec: KernelSpec
    hp: HyperParameters
    inputs: np.ndarray
    weights: np.ndarray
    selection_bfr: float = float("nan")
    indices: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = as_inputs(self.inputs)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.size != self.inputs.shape[0]:
            raise ValueError("one weight per subset input required")

    @property
    def m(self) -> int:
        return self.weights.size

    def predict(self, W):
        return sr_predict(self, W)


def _weights_from_blocks(K_nm, K_mm, y, noise_std):
    R, _ = noisy_cholesky(K_mm, 0.0)
    A = np.vstack([K_nm, noise_std * R.T])
    b = np.concatenate([y, np.zeros(K_mm.shape[0])])
    # Q^T b without forming Q
    qtb, Rq = linalg.qr_multiply(A, b[None, :], mode="right")
    return linalg.solve_triangular(Rq, qtb.ravel(), check_finite=False)


def sr_weights(data: Dataset, spec: KernelSpec, hp: HyperParameters, idx) -> np.ndarray:
    """SR weight vector for the subset ``data.inputs[idx]``."""
    idx = np.asarray(idx)
    Wm = data.inputs[idx]
    K_nm = kernel_matrix(spec, hp, data.inputs, Wm)
    K_mm = kernel_matrix(spec, hp, Wm)
    return _weights_from_blocks(K_nm, K_mm, data.targets, hp.sigma_e)


def sr_predict(srp: SRPredictor, W):
    single = np.ndim(W) == 1
    mu = kernel_matrix(srp.spec, srp.hp, as_inputs(W), srp.inputs) @ srp.weights
    return float(mu[0]) if single else mu


def sr_compress(
    data: Dataset,
    spec: KernelSpec,
    hp: HyperParameters,
    m: int = 200,
    trials: int = 1000,
    selection_validation: Dataset | None = None,
    seed: int = 0,
) -> SRPredictor:
    """Best-of-``trials`` random subset of size ``m``, scored by BFR on ``selection_validation``.

    Trial ``k`` draws its subset from child ``k`` of ``SeedSequence(seed)``, so
    the first ``j`` trials of a longer search coincide with a ``j``-trial search.
    Ties keep the earliest trial.
    """
    n = len(data)
    if not 1 <= m <= n:
        raise ValueError(f"subset size must be in [1, {n}], got {m}")
    if trials < 1:
        raise ValueError("need at least one trial")
    spec = KernelSpec.parse(spec)
    sel = data if selection_validation is None else selection_validation
    K_full = kernel_matrix(spec, hp, data.inputs)
    K_sel = kernel_matrix(spec, hp, sel.inputs, data.inputs)
    children = np.random.SeedSequence(seed).spawn(trials)

    best = None
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        idx = np.sort(rng.choice(n, size=m, replace=False))
        w = _weights_from_blocks(K_full[:, idx], K_full[np.ix_(idx, idx)], data.targets, hp.sigma_e)
        score = bfr(sel.targets, K_sel[:, idx] @ w)
        if best is None or score > best[0]:
            best = (score, idx, w)
    score, idx, w = best
    return SRPredictor(spec, hp, data.inputs[idx], w, score, idx)
