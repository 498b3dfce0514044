"""Global (GFR), multilabel (MGFR) and denoised multilabel (DMGFR) Frechet regression.

For a query ``x`` every estimator minimizes ``sum_i w_i d^2(Y_i, omega)`` over
the response space with

    GFR:    w_i = 1 + (x_i - x_bar)' Sigma^{-1} (x - x_bar)
    MGFR:   w_i = GFR_i + (x_i - x_bar)' C (y_i - y_bar),  C = pinv(Sigma_xy)'
    DMGFR:  as MGFR with C replaced by the truncated/shifted Theta.

The cross term depends only on the training pair ``(x_i, y_i)``, not on the
query.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._errors import FrechetError, InvalidConfiguration, InvalidInput
from .covariance import ThetaConfig, compute_theta, empirical_moments
from .metric_spaces import (
    GaussianPoint,
    GaussianSpace,
    ProbabilityGrid,
    QuantileFunction,
    QuantileSpace,
    SolverConfig,
    SpherePoint,
    SphereSpace,
    _check_weights,
    _sphere_descent,
)
from .kernels import pava_rows

__all__ = [
    "EstimatorKind",
    "SolverConfig",
    "FrechetFit",
    "TrainedModel",
    "train",
    "cross_terms",
    "gfr_weights",
    "mgfr_weights",
    "weights",
    "fit_at",
    "predict_batch",
    "in_sample_loss",
    "embed_responses",
]


class EstimatorKind(str, Enum):
    GFR = "GFR"
    MGFR = "MGFR"
    DMGFR = "DMGFR"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidConfiguration(f"unknown estimator {value!r}; expected GFR, MGFR or DMGFR",
                                       key="estimator") from None


@dataclass(frozen=True, eq=False)
class FrechetFit:
    omega: object
    weights: np.ndarray
    iterations: int
    converged: bool
    objective: float


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Immutable container for everything a prediction needs."""

    kind: EstimatorKind
    space: object
    X: np.ndarray
    Y: np.ndarray
    responses: tuple
    moments: object
    theta: object = None
    cross_term: np.ndarray = None
    stacked: np.ndarray = None

    @property
    def n(self):
        return self.X.shape[0]


def _infer_space(point):
    if isinstance(point, QuantileFunction):
        return QuantileSpace(point.grid)
    if isinstance(point, GaussianPoint):
        return GaussianSpace(point.dim)
    if isinstance(point, SpherePoint):
        return SphereSpace(point.p.shape[0])
    raise InvalidInput(f"unsupported response type {type(point).__name__}")


def embed_responses(responses, q=5):
    """Vector representation of metric-only responses.

    Quantile functions are read off at a coarse ``q``-point midpoint grid,
    Gaussians contribute their mean and marginal standard deviations, sphere
    points their coordinates.
    """
    rows = []
    coarse = ProbabilityGrid(q).u
    for r in responses:
        if isinstance(r, QuantileFunction):
            rows.append(np.interp(coarse, r.grid.u, r.q))
        elif isinstance(r, GaussianPoint):
            rows.append(np.concatenate([r.mu, np.sqrt(np.clip(np.diag(r.sigma), 0, None))]))
        elif isinstance(r, SpherePoint):
            rows.append(np.array(r.p))
        else:
            raise InvalidInput(f"cannot embed response of type {type(r).__name__}")
    return np.stack(rows)


def cross_terms(X, Y, C, x_bar, y_bar):
    """``(x_i - x_bar)' C (y_i - y_bar)`` for every row.

    With ``C`` the transposed pseudo-inverse of the empirical cross-covariance
    these terms average to ``rank(Sigma_xy)``, not zero.
    """
    return np.einsum("ij,jk,ik->i", X - x_bar, C, Y - y_bar)


def train(X, responses, Y=None, kind=EstimatorKind.MGFR, theta_cfg=None, space=None, jitter=0.0):
    """Estimate moments (and Theta for DMGFR) and freeze them in a :class:`TrainedModel`.

    ``Y`` is the raw response matrix used for the cross term; when omitted the
    responses are embedded with :func:`embed_responses`.
    """
    kind = EstimatorKind.parse(kind)
    responses = tuple(responses)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(responses) != X.shape[0]:
        raise InvalidInput(f"{X.shape[0]} predictor rows but {len(responses)} responses")
    if not responses:
        raise InvalidInput("no training data")
    space = _infer_space(responses[0]) if space is None else space
    for r in responses:
        space.check(r)
    Y = embed_responses(responses) if Y is None else np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    moments = empirical_moments(X, Y, jitter=jitter)
    theta = None
    C = moments.cross_inv
    if kind is EstimatorKind.DMGFR:
        theta = compute_theta(moments.cross_inv, ThetaConfig() if theta_cfg is None else theta_cfg)
        C = theta.theta
    cross = cross_terms(X, Y, C, moments.x_bar, moments.y_bar)
    stacked = space.stack(responses) if isinstance(space, QuantileSpace) else None
    return TrainedModel(kind=kind, space=space, X=X, Y=Y, responses=responses, moments=moments,
                        theta=theta, cross_term=cross, stacked=stacked)


def _query(model, x):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.X.shape[1]:
        raise InvalidInput(f"query has dimension {x.shape[0]}, model expects {model.X.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("query must be finite")
    return x


def gfr_weights(model, x):
    """``1 + (x_i - x_bar)' Sigma^{-1} (x - x_bar)`` for every training row."""
    x = _query(model, x)
    mom = model.moments
    v = mom.sigma_inv @ (x - mom.x_bar)
    return 1.0 + (model.X - mom.x_bar) @ v


def mgfr_weights(model, x):
    """GFR weights plus the query-independent cross term.

    Uses ``Theta`` for DMGFR models and the pseudo-inverse cross term otherwise.
    """
    if model.kind is EstimatorKind.DMGFR:
        if model.theta is None:
            raise InvalidConfiguration("DMGFR model has no Theta matrix", key="theta")
        cross = model.cross_term
    elif model.kind is EstimatorKind.MGFR:
        cross = model.cross_term
    else:
        mom = model.moments
        cross = cross_terms(model.X, model.Y, mom.cross_inv, mom.x_bar, mom.y_bar)
    return gfr_weights(model, x) + cross


def weights(model, x):
    if model.kind is EstimatorKind.GFR:
        return gfr_weights(model, x)
    return mgfr_weights(model, x)


def _objective(space, responses, stacked, w, omega):
    if stacked is not None:
        d = stacked - omega.q
        return float(w @ np.mean(d * d, axis=1))
    return float(sum(wi * space.dist2(r, omega) for wi, r in zip(w, responses)))


def fit_at(model, x, cfg=None):
    """Weighted Frechet mean of the training responses at query ``x``."""
    return predict_batch(model, np.asarray(x, dtype=np.float64).reshape(1, -1), cfg)[0]


def predict_batch(model, Xq, cfg=None):
    """:func:`fit_at` for every row of ``Xq``; output order follows the input rows.

    Each row is computed independently, so results do not depend on batch
    composition or order. The first failing row aborts the batch; the raised
    error carries a ``row`` attribute.
    """
    cfg = SolverConfig() if cfg is None else cfg
    Xq = np.asarray(Xq, dtype=np.float64)
    if Xq.ndim == 1:
        Xq = Xq.reshape(1, -1)
    space = model.space
    if isinstance(space, QuantileSpace):
        return _predict_quantile(model, Xq)
    sphere_rows = np.stack([r.p for r in model.responses]) if isinstance(space, SphereSpace) else None
    fits = []
    for i, x in enumerate(Xq):
        try:
            w = weights(model, x)
            if sphere_rows is not None:
                wv, total = _check_weights(w, model.n)
                omega, iters, conv = _sphere_descent(sphere_rows, wv, total, cfg)
            else:
                omega, iters, conv = space.frechet_mean(model.responses, w, cfg)
            obj = _objective(space, model.responses, None, w, omega)
        except FrechetError as exc:
            _tag_row(exc, i)
            raise
        fits.append(FrechetFit(omega, w, int(iters), bool(conv), obj))
    return fits


def _tag_row(exc, i):
    exc.row = i
    if exc.args:
        exc.args = (f"row {i}: {exc.args[0]}",) + tuple(exc.args[1:])


def _predict_quantile(model, Xq):
    Q = model.stacked
    W = []
    G = np.empty((Xq.shape[0], Q.shape[1]))
    for i, x in enumerate(Xq):
        try:
            w = weights(model, x)
            w, total = _check_weights(w, model.n)
        except FrechetError as exc:
            _tag_row(exc, i)
            raise
        G[i] = (w @ Q) / total
        W.append(w)
    omegas = pava_rows(G)
    grid = model.space.grid
    fits = []
    for w, row in zip(W, omegas):
        omega = QuantileFunction(grid, row)
        fits.append(FrechetFit(omega, w, 1, True, _objective(model.space, None, Q, w, omega)))
    return fits


def in_sample_loss(model, fits, truth):
    """Mean squared metric distance between fitted objects and ``truth``."""
    fits = list(fits)
    truth = list(truth)
    if len(fits) != len(truth):
        raise InvalidInput(f"{len(fits)} fits but {len(truth)} truth objects")
    if not fits:
        raise InvalidInput("no fits to score")
    space = model.space
    total = 0.0
    for f, t in zip(fits, truth):
        space.check(t)
        space.check(f.omega)
        total += space.dist2(t, f.omega)
    return total / len(fits)
