"""
Composite covariance kernels for the z-axis disturbance model.

The full kernel multiplies a squared-exponential factor and a periodic factor
over all eight input coordinates and adds a linear kernel on the two
translator coordinates::

    k(a, b) = s1^2 exp(-sum_v (a_v - b_v)^2 / (2 l_v^2)
                      - sum_v sin^2(pi (a_v - b_v) / p) / (2 l_sin^2))
              + sum_{v<2} s2_v^2 (a_v - c_v)(b_v - c_v)

Two ablations drop terms: ``LINEAR_RBF`` removes the periodic factor and
``RBF`` keeps only the squared-exponential factor.

Positive hyperparameters live in log-space when packed into a vector; the
linear offsets ``c_lin`` are unconstrained.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "INPUT_DIM",
    "INPUT_NAMES",
    "PARAM_NAMES",
    "KernelSpec",
    "HyperParameters",
    "eval_kernel",
    "kernel_matrix",
    "kernel_diag",
    "kernel_matrix_grad",
    "kernel_grad_contract",
    "as_inputs",
]

INPUT_DIM = 8

#: Ordering of the input vector: translator x, y, then the six coil-to-metrology
#: frame offsets (three translations, three rotations).
INPUT_NAMES = (
    "x_T_m",
    "y_T_m",
    "x_MC_m",
    "y_MC_m",
    "z_MC_m",
    "chi_MC_rad",
    "psi_MC_rad",
    "zeta_MC_rad",
)

#: Canonical hyperparameter ordering used for vectors, gradients and files.
PARAM_NAMES = (
    ("sigma1",)
    + tuple(f"lambda_rbf_{i + 1}" for i in range(INPUT_DIM))
    + ("lambda_sin", "p_sin", "sigma2_1", "sigma2_2", "c_lin_1", "c_lin_2", "sigma_e")
)

# indices into PARAM_NAMES
_I_SIGMA1 = 0
_I_LRBF = slice(1, 9)
_I_LSIN = 9
_I_PSIN = 10
_I_SIGMA2 = slice(11, 13)
_I_CLIN = slice(13, 15)
_I_SIGMAE = 15
_LOG_PARAMS = np.ones(len(PARAM_NAMES), dtype=bool)
_LOG_PARAMS[_I_CLIN] = False


class KernelSpec(enum.Enum):
    """Kernel structure variant."""

    FULL = "full"
    LINEAR_RBF = "linear-rbf"
    RBF = "rbf"

    @property
    def has_periodic(self) -> bool:
        return self is KernelSpec.FULL

    @property
    def has_linear(self) -> bool:
        return self is not KernelSpec.RBF

    @property
    def active_mask(self) -> np.ndarray:
        """Boolean mask over ``PARAM_NAMES`` of the parameters this variant owns."""
        mask = np.ones(len(PARAM_NAMES), dtype=bool)
        if not self.has_periodic:
            mask[[_I_LSIN, _I_PSIN]] = False
        if not self.has_linear:
            mask[_I_SIGMA2] = False
            mask[_I_CLIN] = False
        return mask

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(n for n, m in zip(PARAM_NAMES, self.active_mask) if m)

    @property
    def n_params(self) -> int:
        return int(self.active_mask.sum())

    @property
    def log_mask(self) -> np.ndarray:
        """Which active parameters are stored as logarithms."""
        return _LOG_PARAMS[self.active_mask]

    @classmethod
    def parse(cls, value: "str | KernelSpec") -> "KernelSpec":
        if isinstance(value, KernelSpec):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown kernel variant {value!r} (expected one of {names})")


def _vec(x, n, name):
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ValueError(f"{name} needs {n} entries, got {arr.size}")
    return arr


@dataclass(frozen=True)
class HyperParameters:
    """Kernel hyperparameters in natural units.

    ``lambda_rbf`` and ``lambda_sin`` may be ``inf`` to switch the matching
    term off analytically; amplitudes may be zero.
    """

    sigma1: float = 1.0
    lambda_rbf: np.ndarray = field(default_factory=lambda: np.ones(INPUT_DIM))
    lambda_sin: float = 1.0
    p_sin: float = 0.028
    sigma2: np.ndarray = field(default_factory=lambda: np.ones(2))
    c_lin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    sigma_e: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "sigma1", float(self.sigma1))
        object.__setattr__(self, "lambda_rbf", _vec(self.lambda_rbf, INPUT_DIM, "lambda_rbf"))
        object.__setattr__(self, "lambda_sin", float(self.lambda_sin))
        object.__setattr__(self, "p_sin", float(self.p_sin))
        object.__setattr__(self, "sigma2", _vec(self.sigma2, 2, "sigma2"))
        object.__setattr__(self, "c_lin", _vec(self.c_lin, 2, "c_lin"))
        object.__setattr__(self, "sigma_e", float(self.sigma_e))
        for arr in (self.lambda_rbf, self.sigma2, self.c_lin):
            arr.setflags(write=False)

    def validate(self) -> None:
        """Raise ``ValueError`` on NaN, negative or non-finite-where-required values."""
        flat = self.natural_vector()
        if np.any(np.isnan(flat)):
            raise ValueError("hyperparameter is NaN")
        for name in ("sigma1", "sigma_e"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not np.all(np.isfinite(self.sigma2)) or np.any(self.sigma2 < 0):
            raise ValueError("sigma2 must be finite and >= 0")
        if not np.all(np.isfinite(self.c_lin)):
            raise ValueError("c_lin must be finite")
        if np.any(self.lambda_rbf <= 0) or not (self.lambda_sin > 0):
            raise ValueError("lengthscales must be > 0")
        if not (np.isfinite(self.p_sin) and self.p_sin > 0):
            raise ValueError("p_sin must be finite and > 0")

    def natural_vector(self) -> np.ndarray:
        """All 16 values in canonical order, natural units."""
        return np.concatenate(
            [
                [self.sigma1],
                self.lambda_rbf,
                [self.lambda_sin, self.p_sin],
                self.sigma2,
                self.c_lin,
                [self.sigma_e],
            ]
        )

    @classmethod
    def from_natural_vector(cls, v) -> "HyperParameters":
        v = np.asarray(v, dtype=float)
        if v.size != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} values, got {v.size}")
        return cls(
            sigma1=v[_I_SIGMA1],
            lambda_rbf=v[_I_LRBF],
            lambda_sin=v[_I_LSIN],
            p_sin=v[_I_PSIN],
            sigma2=v[_I_SIGMA2],
            c_lin=v[_I_CLIN],
            sigma_e=v[_I_SIGMAE],
        )

    def to_vector(self, spec: KernelSpec) -> np.ndarray:
        """Active parameters as an optimisation vector (logs for scale parameters)."""
        nat = self.natural_vector()[spec.active_mask]
        out = nat.copy()
        lm = spec.log_mask
        with np.errstate(divide="ignore"):
            out[lm] = np.log(nat[lm])
        return out

    def with_vector(self, spec: KernelSpec, theta) -> "HyperParameters":
        """Copy of ``self`` with the active parameters replaced from ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if theta.size != spec.n_params:
            raise ValueError(f"{spec.value} kernel has {spec.n_params} parameters, got {theta.size}")
        nat = self.natural_vector()
        vals = theta.copy()
        lm = spec.log_mask
        vals[lm] = np.exp(theta[lm])
        nat[spec.active_mask] = vals
        return HyperParameters.from_natural_vector(nat)

    def to_record(self, spec: KernelSpec | None = None) -> dict[str, float]:
        """Flat name -> value mapping; restricted to active entries when ``spec`` given."""
        nat = self.natural_vector()
        mask = np.ones(nat.size, bool) if spec is None else spec.active_mask
        return {n: float(v) for n, v, m in zip(PARAM_NAMES, nat, mask) if m}

    @classmethod
    def from_record(cls, record: dict, base: "HyperParameters | None" = None) -> "HyperParameters":
        base = cls() if base is None else base
        nat = base.natural_vector()
        for key, value in record.items():
            if key not in PARAM_NAMES:
                raise KeyError(f"unknown hyperparameter {key!r}")
            nat[PARAM_NAMES.index(key)] = float(value)
        return cls.from_natural_vector(nat)

    def replace(self, **changes) -> "HyperParameters":
        return replace(self, **changes)


def as_inputs(W) -> np.ndarray:
    """Coerce to an ``(n, 8)`` float array."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[None, :]
    if W.ndim != 2 or W.shape[1] != INPUT_DIM:
        raise ValueError(f"inputs must have {INPUT_DIM} columns, got shape {W.shape}")
    return W


def _check(hp: HyperParameters) -> None:
    hp.validate()


def _sqdist(A, B, lam):
    """``sum_v (a_v - b_v)^2 / (2 lam_v^2)`` over the finite lengthscales."""
    keep = np.isfinite(lam)
    if not keep.any():
        return np.zeros((A.shape[0], B.shape[0]))
    za = A[:, keep] / (np.sqrt(2.0) * lam[keep])
    zb = B[:, keep] / (np.sqrt(2.0) * lam[keep])
    R = (za * za).sum(1)[:, None] + (zb * zb).sum(1)[None, :] - 2.0 * (za @ zb.T)
    return np.maximum(R, 0.0)


def _periodic_sum(A, B, p):
    """``sum_v sin^2(pi (a_v - b_v) / p)`` via ``sin^2(u - w) = (1 - cos 2u cos 2w - sin 2u sin 2w) / 2``."""
    ua = 2.0 * np.pi * A / p
    ub = 2.0 * np.pi * B / p
    S = 0.5 * (A.shape[1] - np.cos(ua) @ np.cos(ub).T - np.sin(ua) @ np.sin(ub).T)
    return np.maximum(S, 0.0)


def _exp_exponent(spec, hp, A, B):
    """Return (sum of RBF terms, sum of periodic terms) as (n, m) arrays."""
    R = _sqdist(A, B, hp.lambda_rbf)
    if spec.has_periodic and np.isfinite(hp.lambda_sin):
        P = _periodic_sum(A, B, hp.p_sin) / (2.0 * hp.lambda_sin**2)
    else:
        P = np.zeros_like(R)
    return R, P


def _linear(hp, A, B):
    L = np.zeros((A.shape[0], B.shape[0]))
    for v in range(2):
        L += hp.sigma2[v] ** 2 * np.outer(A[:, v] - hp.c_lin[v], B[:, v] - hp.c_lin[v])
    return L


def kernel_matrix(spec: KernelSpec, hp: HyperParameters, A, B=None) -> np.ndarray:
    """Cross-covariance ``K[i, j] = k(A[i], B[j])`` (noise not included)."""
    _check(hp)
    A = as_inputs(A)
    B = A if B is None else as_inputs(B)
    R, P = _exp_exponent(spec, hp, A, B)
    K = hp.sigma1**2 * np.exp(-(R + P))
    if spec.has_linear:
        K += _linear(hp, A, B)
    return K


def kernel_diag(spec: KernelSpec, hp: HyperParameters, A) -> np.ndarray:
    """``k(a, a)`` for each row of ``A``."""
    _check(hp)
    A = as_inputs(A)
    d = np.full(A.shape[0], hp.sigma1**2)
    if spec.has_linear:
        d = d + ((A[:, :2] - hp.c_lin) ** 2 * hp.sigma2**2).sum(axis=1)
    return d


def eval_kernel(spec: KernelSpec, hp: HyperParameters, a, b) -> float:
    """Kernel value for a single pair of 8-vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (INPUT_DIM,) or b.shape != (INPUT_DIM,):
        raise ValueError(f"inputs must be {INPUT_DIM}-vectors, got {a.shape} and {b.shape}")
    return float(kernel_matrix(spec, hp, a[None], b[None])[0, 0])


def kernel_matrix_grad(spec: KernelSpec, hp: HyperParameters, A) -> list[np.ndarray]:
    """Derivatives of the noisy Gram matrix ``K(A, A) + sigma_e^2 I``.

    One matrix per active parameter in canonical order.  Scale parameters are
    differentiated with respect to their logarithm, ``c_lin`` directly.  The
    last entry (noise) is ``2 sigma_e^2 I``.
    """
    _check(hp)
    A = as_inputs(A)
    n = A.shape[0]
    R, P = _exp_exponent(spec, hp, A, A)
    E = hp.sigma1**2 * np.exp(-(R + P))
    grads = [2.0 * E]
    for v in range(INPUT_DIM):
        lam = hp.lambda_rbf[v]
        if np.isfinite(lam):
            d = A[:, v, None] - A[None, :, v]
            grads.append(E * (d * d) / (lam * lam))
        else:
            grads.append(np.zeros((n, n)))
    if spec.has_periodic:
        if np.isfinite(hp.lambda_sin):
            # sum_v sin(2 u_v) u_v with u_v = pi (a_v - b_v) / p, expanded into products
            u = np.pi * A / hp.p_sin
            s2, c2 = np.sin(2.0 * u), np.cos(2.0 * u)
            su, cu = s2 * u, c2 * u
            T = su @ c2.T - s2 @ cu.T - cu @ s2.T + c2 @ su.T
            dP_dlogp = -T / (2.0 * hp.lambda_sin**2)
            grads.append(E * 2.0 * P)
            grads.append(-E * dP_dlogp)
        else:
            grads.extend([np.zeros((n, n)), np.zeros((n, n))])
    if spec.has_linear:
        a_c = [A[:, v] - hp.c_lin[v] for v in range(2)]
        for v in range(2):
            grads.append(2.0 * hp.sigma2[v] ** 2 * np.outer(a_c[v], a_c[v]))
        for v in range(2):
            grads.append(-hp.sigma2[v] ** 2 * (a_c[v][:, None] + a_c[v][None, :]))
    grads.append(2.0 * hp.sigma_e**2 * np.eye(n))
    return grads


def kernel_grad_contract(spec: KernelSpec, hp: HyperParameters, A, M) -> np.ndarray:
    """``[sum(M * dK_k) for dK_k in kernel_matrix_grad(spec, hp, A)]`` without forming ``dK_k``.

    ``M`` must be symmetric.  Uses ``sum_ij M_ij (a_i - a_j)^2 = 2 (a^2 . M 1 - a^T M a)``
    and the product expansion of the periodic derivative.
    """
    _check(hp)
    A = as_inputs(A)
    R, P = _exp_exponent(spec, hp, A, A)
    E = hp.sigma1**2 * np.exp(-(R + P))
    ME = M * E
    out = [2.0 * ME.sum()]
    row = ME.sum(axis=1)
    MEA = ME @ A
    for v in range(INPUT_DIM):
        lam = hp.lambda_rbf[v]
        if np.isfinite(lam):
            a = A[:, v]
            out.append(2.0 * ((a * a) @ row - a @ MEA[:, v]) / (lam * lam))
        else:
            out.append(0.0)
    if spec.has_periodic:
        if np.isfinite(hp.lambda_sin):
            u = np.pi * A / hp.p_sin
            s2, c2 = np.sin(2.0 * u), np.cos(2.0 * u)
            su, cu = s2 * u, c2 * u
            # sum_ij ME_ij T_ij with T = su c2^T - s2 cu^T - cu s2^T + c2 su^T
            Tsum = 2.0 * (np.sum(su * (ME @ c2)) - np.sum(s2 * (ME @ cu)))
            out.append(2.0 * np.sum(ME * P))
            out.append(Tsum / (2.0 * hp.lambda_sin**2))
        else:
            out.extend([0.0, 0.0])
    if spec.has_linear:
        ac = A[:, :2] - hp.c_lin
        Mac = M @ ac
        ones = M.sum(axis=1)
        for v in range(2):
            out.append(2.0 * hp.sigma2[v] ** 2 * (ac[:, v] @ Mac[:, v]))
        for v in range(2):
            out.append(-2.0 * hp.sigma2[v] ** 2 * (ones @ ac[:, v]))
    out.append(2.0 * hp.sigma_e**2 * np.trace(M))
    return np.array(out, dtype=float)
