"""Empirical moments and the SVD-truncated, Tikhonov-shifted cross-covariance inverse."""
from dataclasses import dataclass

import numpy as np

from ._errors import IllConditioned, InvalidInput

MAX_CONDITION = 1e10


@dataclass(frozen=True, eq=False)
class MomentEstimates:
    """Means, covariances (divisor ``n``) and the inverses used by the weights.

    ``cross_inv`` is the transpose of the Moore-Penrose pseudo-inverse of
    ``sigma_xy``; it has the same m x q shape as ``sigma_xy`` so that
    ``(x_i - x_bar) @ cross_inv @ (y_i - y_bar)`` is a scalar.
    """

    n: int
    x_bar: np.ndarray
    y_bar: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    sigma_xy: np.ndarray
    cross_inv: np.ndarray
    condition_number: float


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be a 2-D array")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


def condition_number(sigma):
    """Spectral condition number of a symmetric PSD matrix (``inf`` if singular)."""
    vals = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))
    lo, hi = vals[0], vals[-1]
    if not hi > 0 or not lo > 0:
        return float("inf")
    return float(hi / lo)


def _spd_inverse(sigma):
    m = sigma.shape[0]
    eye = np.eye(m)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        jitter = 1e-8 * np.trace(sigma) / m
        L = np.linalg.cholesky(sigma + jitter * eye)
    Linv = np.linalg.solve(L, eye)
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def empirical_moments(X, Y, jitter=0.0):
    """Compute :class:`MomentEstimates` from paired predictor/response matrices.

    Parameters
    ----------
    X : array-like, shape (n, m)
    Y : array-like, shape (n, q)
        Vector representation of the responses.
    jitter : float, optional
        Added to the diagonal of the predictor covariance before the
        conditioning check; callers may retry with ``1e-8 * trace / m`` after
        an :class:`IllConditioned` error.

    Raises
    ------
    InvalidInput
        Fewer than two rows, mismatched row counts or non-finite entries.
    IllConditioned
        The predictor covariance has condition number above ``1e10``.
    """
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    n = X.shape[0]
    if n < 2:
        raise InvalidInput("need at least two observations")
    if Y.shape[0] != n:
        raise InvalidInput(f"X has {n} rows but Y has {Y.shape[0]}")
    # corrected two-pass means: the residual pass makes the centered columns
    # sum to zero far more accurately, which keeps the mean weight at 1
    x_bar = X.mean(axis=0)
    x_bar = x_bar + (X - x_bar).mean(axis=0)
    y_bar = Y.mean(axis=0)
    y_bar = y_bar + (Y - y_bar).mean(axis=0)
    Dx = X - x_bar
    Dy = Y - y_bar
    sigma = Dx.T @ Dx / n
    sigma = 0.5 * (sigma + sigma.T)
    if jitter:
        sigma = sigma + jitter * np.eye(sigma.shape[0])
    cond = condition_number(sigma)
    if not cond <= MAX_CONDITION:
        raise IllConditioned(f"predictor covariance condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}", cond)
    sigma_xy = Dx.T @ Dy / n
    return MomentEstimates(
        n=n,
        x_bar=x_bar,
        y_bar=y_bar,
        sigma=sigma,
        sigma_inv=_spd_inverse(sigma),
        sigma_xy=sigma_xy,
        cross_inv=np.linalg.pinv(sigma_xy).T,
        condition_number=cond,
    )


@dataclass(frozen=True)
class ThetaConfig:
    """Singular-value threshold ``tau`` and Tikhonov shift ``eps``.

    ``None`` selects the data-adaptive defaults ``tau = 0.1 * s_max`` and
    ``eps = 1e-6 * s_max`` where ``s_max`` is the largest singular value of
    the matrix being transformed.
    """

    tau: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.tau is not None and not (np.isfinite(self.tau) and self.tau >= 0):
            raise InvalidInput(f"tau must be >= 0, got {self.tau}")
        if self.eps is not None and not (np.isfinite(self.eps) and self.eps > 0):
            raise InvalidInput(f"eps must be > 0, got {self.eps}")

    def resolve(self, s_max):
        tau = 0.1 * s_max if self.tau is None else float(self.tau)
        eps = 1e-6 * s_max if self.eps is None else float(self.eps)
        if not eps > 0:
            # all-zero input: fall back to a unit-scale shift
            eps = 1e-6
        return tau, eps


@dataclass(frozen=True, eq=False)
class ThetaMatrix:
    theta: np.ndarray
    kept_rank: int
    truncated_values: np.ndarray
    middle: np.ndarray  # diagonal of the shifted middle factor
    tau: float
    eps: float


def svd_shrink(A, tau, eps):
    """Zero singular values below ``tau``, add ``eps`` to every diagonal entry, rebuild.

    ``eps = 0`` is allowed here (pure truncation); :func:`compute_theta`
    enforces ``eps > 0``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInput("expected a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")
    if tau < 0 or eps < 0:
        raise InvalidInput("tau and eps must be nonnegative")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    drop = s < tau
    middle = np.where(drop, 0.0, s) + eps
    theta = (U * middle) @ Vt
    return ThetaMatrix(
        theta=theta,
        kept_rank=int(np.count_nonzero(~drop)),
        truncated_values=s[drop].copy(),
        middle=middle,
        tau=float(tau),
        eps=float(eps),
    )


def compute_theta(cross_inv, cfg=None):
    """Denoised cross-covariance inverse: truncated SVD plus a Tikhonov shift.

    Examples
    --------
    >>> t = compute_theta(np.diag([3.0, 1.0, 0.1]), ThetaConfig(tau=0.5, eps=0.01))
    >>> np.round(np.diag(t.theta), 12).tolist(), t.kept_rank
    ([3.01, 1.01, 0.01], 2)
    """
    cfg = ThetaConfig() if cfg is None else cfg
    A = np.asarray(cross_inv, dtype=np.float64)
    if A.ndim != 2 or not np.all(np.isfinite(A)):
        raise InvalidInput("cross_inv must be a finite 2-D matrix")
    s_max = float(np.linalg.norm(A, 2)) if A.size else 0.0
    tau, eps = cfg.resolve(s_max)
    return svd_shrink(A, tau, eps)
