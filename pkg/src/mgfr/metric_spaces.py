"""Response metric spaces and their weighted Frechet mean solvers.

Three spaces are shipped:

* quantile functions on a midpoint probability grid with the L2 (Wasserstein-2)
  metric, whose weighted Frechet mean is a weighted average followed by an
  isotonic projection;
* Gaussian measures with the Bures-Wasserstein metric;
* the unit sphere with the geodesic metric, solved by Riemannian gradient descent.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._errors import DegenerateWeights, IncompatibleSpaces, InvalidInput
from .kernels import pava, pava_rows

DEFAULT_GRID_SIZE = 100

_SYM_TOL = 1e-10
_PSD_TOL = 1e-10
_UNIT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule for iterative Frechet mean solvers.

    ``init`` is ``"weighted-average"`` (normalized weighted Euclidean average)
    or ``"first-sample"``.
    """

    eps_tol: float = 1e-8
    k_max: int = 500
    init: str = "weighted-average"

    def __post_init__(self):
        if not self.eps_tol > 0:
            raise InvalidInput(f"eps_tol must be > 0, got {self.eps_tol}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise InvalidInput(f"k_max must be a positive integer, got {self.k_max}")
        if self.init not in ("weighted-average", "first-sample"):
            raise InvalidInput(f"unknown init strategy {self.init!r}")


@dataclass(frozen=True)
class ProbabilityGrid:
    """Midpoint grid ``u_j = (2j - 1) / (2M)`` on (0, 1)."""

    M: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InvalidInput(f"grid size M must be an integer >= 2, got {self.M}")

    @property
    def u(self):
        return _grid_points(self.M)


@lru_cache(maxsize=64)
def _grid_points(M):
    u = (2.0 * np.arange(1, M + 1) - 1.0) / (2.0 * M)
    u.flags.writeable = False
    return u


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class QuantileFunction:
    grid: ProbabilityGrid
    q: np.ndarray

    def __post_init__(self):
        q = _readonly(self.q)
        if q.ndim != 1 or q.shape[0] != self.grid.M:
            raise InvalidInput(f"quantile vector must have length {self.grid.M}, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise InvalidInput("quantile values must be finite")
        if np.any(np.diff(q) < 0):
            raise InvalidInput("quantile values must be nondecreasing")
        object.__setattr__(self, "q", q)

    def __eq__(self, other):
        if not isinstance(other, QuantileFunction):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.q, other.q)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GaussianPoint:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = _readonly(np.atleast_1d(self.mu))
        sigma = _readonly(np.atleast_2d(self.sigma))
        if mu.ndim != 1:
            raise InvalidInput("mu must be a vector")
        if sigma.shape != (mu.shape[0], mu.shape[0]):
            raise IncompatibleSpaces(f"sigma shape {sigma.shape} does not match mean dimension {mu.shape[0]}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise InvalidInput("Gaussian parameters must be finite")
        if np.max(np.abs(sigma - sigma.T)) > _SYM_TOL:
            raise InvalidInput("sigma is not symmetric")
        if np.linalg.eigvalsh(sigma).min() < -_PSD_TOL:
            raise InvalidInput("sigma is not positive semi-definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class SpherePoint:
    p: np.ndarray

    def __post_init__(self):
        p = _readonly(self.p)
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise InvalidInput("sphere point must be a finite vector")
        if abs(np.linalg.norm(p) - 1.0) > _UNIT_TOL:
            raise InvalidInput(f"sphere point must have unit norm, got {np.linalg.norm(p)!r}")
        object.__setattr__(self, "p", p)

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return np.array_equal(self.p, other.p)

    __hash__ = None

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64)
        nrm = np.linalg.norm(v)
        if not nrm > 0:
            raise InvalidInput("cannot normalize a zero vector onto the sphere")
        return cls(v / nrm)


# ---------------------------------------------------------------------------
# Quantile / Wasserstein space
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _interp_positions(n, M):
    u = _grid_points(M)
    if n == 1:
        lo = np.zeros(M, dtype=np.intp)
        return lo, lo, np.zeros(M)
    h = (n - 1) * u
    lo = np.minimum(np.floor(h).astype(np.intp), n - 2)
    return lo, lo + 1, h - lo


def quantiles_of_sorted(S, M):
    """Empirical quantiles of every row of an already row-sorted array ``S``.

    Order statistics are linearly interpolated at ``h = (n - 1) u_j``.
    """
    lo, hi, frac = _interp_positions(S.shape[-1], M)
    a = S[..., lo]
    q = a + frac * (S[..., hi] - a)
    # interpolation of sorted values is monotone up to rounding
    return np.maximum.accumulate(q, axis=-1)


def empirical_quantile(values, grid=None):
    """Empirical quantile function of ``values`` evaluated on ``grid``.

    >>> empirical_quantile([1, 2, 3, 4], ProbabilityGrid(2)).q
    array([1.75, 3.25])
    """
    grid = ProbabilityGrid() if grid is None else grid
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise InvalidInput("empirical_quantile needs at least one value")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("values must be finite")
    return QuantileFunction(grid, quantiles_of_sorted(np.sort(x), grid.M))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise IncompatibleSpaces(f"grid mismatch: M={a.grid.M} vs M={b.grid.M}")


def wasserstein_sq_quantile(a, b):
    """Squared Wasserstein-2 distance between two gridded quantile functions."""
    _check_same_grid(a, b)
    d = a.q - b.q
    return float(np.mean(d * d))


def isotonic_project(g):
    """Euclidean projection of ``g`` onto the nondecreasing cone (PAVA)."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] < 2:
        raise InvalidInput("isotonic_project expects a vector of length >= 2")
    if not np.all(np.isfinite(g)):
        raise InvalidInput("isotonic_project input must be finite")
    return QuantileFunction(ProbabilityGrid(g.shape[0]), pava(g))


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != n:
        raise InvalidInput(f"got {w.shape[0]} weights for {n} samples")
    if not np.all(np.isfinite(w)):
        raise InvalidInput("weights must be finite")
    total = float(w.sum())
    if not total > 0:
        raise DegenerateWeights(f"weights sum to {total!r}; the weighted Frechet objective is ill-posed",
                                weight_sum=total)
    return w, total


def frechet_mean_quantile(samples, weights):
    """Weighted Frechet mean in the quantile space.

    Weights may be individually negative as long as they sum to a positive
    value; the minimizer is then the isotonic projection of the normalized
    weighted average.
    """
    samples = list(samples)
    if not samples:
        raise InvalidInput("no samples")
    grid = samples[0].grid
    for s in samples[1:]:
        _check_same_grid(samples[0], s)
    w, total = _check_weights(weights, len(samples))
    Q = np.stack([s.q for s in samples])
    g = (w @ Q) / total
    return QuantileFunction(grid, pava(g))


# ---------------------------------------------------------------------------
# Gaussian / Bures-Wasserstein space
# ---------------------------------------------------------------------------

def _psd_sqrt(S):
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def bures_wasserstein_sq(P, Q):
    """Squared 2-Wasserstein distance between Gaussian measures.

    The covariance part is evaluated as ``||P^{1/2} - Q^{1/2} U||_F^2`` with
    ``U`` the orthogonal polar factor of ``Q^{1/2} P^{1/2}``. This equals
    ``tr P + tr Q - 2 tr (P^{1/2} Q P^{1/2})^{1/2}`` but avoids the
    cancellation of that trace formula, so ``d(P, P)`` is zero to rounding
    instead of to its square root.
    """
    if P.mu.shape != Q.mu.shape:
        raise IncompatibleSpaces(f"dimension mismatch: {P.dim} vs {Q.dim}")
    diff = P.mu - Q.mu
    root_p = _psd_sqrt(P.sigma)
    root_q = _psd_sqrt(Q.sigma)
    W, _, Vt = np.linalg.svd(root_q @ root_p)
    D = root_p - root_q @ (W @ Vt)
    return float(diff @ diff + np.sum(D * D))


def frechet_mean_gaussian(samples, weights, cfg=None):
    """Weighted Bures-Wasserstein barycenter.

    One-dimensional Gaussians have a closed form (weighted mean of means and of
    standard deviations, the latter clamped at zero) valid for any weights with
    a positive sum. Higher dimensions use the fixed-point iteration
    ``S <- S^{-1/2} (sum_i l_i (S^{1/2} S_i S^{1/2})^{1/2})^2 S^{-1/2}``, which
    requires nonnegative weights.

    Returns ``(GaussianPoint, iterations, converged)``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    samples = list(samples)
    if not samples:
        raise InvalidInput("no samples")
    dim = samples[0].dim
    if any(s.dim != dim for s in samples):
        raise IncompatibleSpaces("Gaussian samples have different dimensions")
    w, total = _check_weights(weights, len(samples))
    lam = w / total
    mu = lam @ np.stack([s.mu for s in samples])
    if dim == 1:
        sd = np.sqrt(np.array([s.sigma[0, 0] for s in samples]))
        s = max(float(lam @ sd), 0.0)
        return GaussianPoint(mu, np.array([[s * s]])), 1, True
    if np.any(w < 0):
        raise InvalidInput("multivariate Bures barycenter requires nonnegative weights")
    S = sum(l * s.sigma for l, s in zip(lam, samples))
    converged = False
    k = 0
    while k < cfg.k_max:
        root = _psd_sqrt(S)
        vals, vecs = np.linalg.eigh(root)
        inv_root = (vecs / np.clip(vals, 1e-300, None)) @ vecs.T
        T = sum(l * _psd_sqrt(root @ s.sigma @ root) for l, s in zip(lam, samples))
        S_new = inv_root @ T @ T @ inv_root
        S_new = 0.5 * (S_new + S_new.T)
        k += 1
        step = np.linalg.norm(S_new - S)
        S = S_new
        if step < cfg.eps_tol:
            converged = True
            break
    return GaussianPoint(mu, S), k, converged


# ---------------------------------------------------------------------------
# Sphere / geodesic space
# ---------------------------------------------------------------------------

def sphere_geodesic_sq(a, b):
    """Squared great-circle distance."""
    if a.p.shape != b.p.shape:
        raise IncompatibleSpaces("sphere dimension mismatch")
    c = float(np.clip(a.p @ b.p, -1.0, 1.0))
    return float(np.arccos(c)) ** 2


def _sphere_objective(p, Y, w):
    ang = np.arccos(np.clip(Y @ p, -1.0, 1.0))
    return float(w @ (ang * ang))


def _sphere_log(p, Y):
    c = np.clip(Y @ p, -1.0, 1.0)
    theta = np.arccos(c)
    V = Y - c[:, None] * p
    nv = np.linalg.norm(V, axis=1)
    # antipodal / coincident samples have no defined direction
    scale = np.divide(theta, nv, out=np.zeros_like(nv), where=nv > 1e-15)
    return V * scale[:, None]


def _sphere_exp(p, v):
    t = np.linalg.norm(v)
    if t == 0.0:
        return p.copy()
    out = np.cos(t) * p + np.sin(t) * (v / t)
    return out / np.linalg.norm(out)


def frechet_mean_sphere(samples, weights, cfg=None):
    """Weighted Frechet mean on the unit sphere by Riemannian gradient descent.

    Each iteration moves along the weighted mean of the log maps with unit
    step, halving the step while the objective increases. Stops once the
    ambient step norm drops below ``cfg.eps_tol`` or after ``cfg.k_max``
    iterations.

    Returns
    -------
    (SpherePoint, int, bool)
        The fitted point with the iteration count; the flag is True once the step fell below ``eps_tol``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    samples = list(samples)
    if not samples:
        raise InvalidInput("no samples")
    Y = np.stack([s.p for s in samples])
    w, total = _check_weights(weights, len(samples))
    return _sphere_descent(Y, w, total, cfg)


def _sphere_descent(Y, w, total, cfg):
    if cfg.init == "first-sample":
        p = Y[0].copy()
    else:
        avg = w @ Y
        nrm = np.linalg.norm(avg)
        p = avg / nrm if nrm > 1e-12 else Y[int(np.argmax(w))].copy()
    f = _sphere_objective(p, Y, w)
    k = 0
    converged = False
    while k < cfg.k_max:
        direction = (w @ _sphere_log(p, Y)) / total
        step = 1.0
        p_new = _sphere_exp(p, step * direction)
        f_new = _sphere_objective(p_new, Y, w)
        halvings = 0
        while f_new > f and halvings < 60:
            step *= 0.5
            halvings += 1
            p_new = _sphere_exp(p, step * direction)
            f_new = _sphere_objective(p_new, Y, w)
        k += 1
        if f_new > f:
            # no descent possible along this direction: stay put
            p_new, f_new = p, f
        moved = np.linalg.norm(p_new - p)
        p, f = p_new, f_new
        if moved < cfg.eps_tol:
            converged = True
            break
    return SpherePoint(p), k, converged


# ---------------------------------------------------------------------------
# Space objects used by the regression layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantileSpace:
    """Quantile functions on a fixed grid with the Wasserstein-2 metric."""

    grid: ProbabilityGrid = field(default_factory=ProbabilityGrid)
    name = "quantile"

    def dist2(self, a, b):
        return wasserstein_sq_quantile(a, b)

    def check(self, point):
        if not isinstance(point, QuantileFunction) or point.grid != self.grid:
            raise IncompatibleSpaces(f"expected a QuantileFunction on M={self.grid.M}")

    def stack(self, points):
        for p in points:
            self.check(p)
        return np.stack([p.q for p in points])

    def unstack(self, row):
        return QuantileFunction(self.grid, row)

    def dist2_rows(self, A, B):
        d = A - B
        return np.mean(d * d, axis=-1)

    def frechet_mean(self, points, weights, cfg=None):
        return frechet_mean_quantile(points, weights), 1, True

    def frechet_mean_batch(self, stacked, W):
        """Closed-form means for every row of a weight matrix ``W`` (k x n)."""
        totals = W.sum(axis=1)
        bad = np.flatnonzero(~(totals > 0))
        if bad.size:
            raise DegenerateWeights(f"weights for row {bad[0]} sum to {totals[bad[0]]!r}",
                                    weight_sum=float(totals[bad[0]]))
        G = (W @ stacked) / totals[:, None]
        return pava_rows(G)


@dataclass(frozen=True)
class GaussianSpace:
    """Gaussian measures of a fixed dimension with the Bures-Wasserstein metric."""

    dim: int = 1
    name = "bures"

    def dist2(self, a, b):
        return bures_wasserstein_sq(a, b)

    def check(self, point):
        if not isinstance(point, GaussianPoint) or point.dim != self.dim:
            raise IncompatibleSpaces(f"expected a GaussianPoint of dimension {self.dim}")

    def frechet_mean(self, points, weights, cfg=None):
        return frechet_mean_gaussian(points, weights, cfg)


@dataclass(frozen=True)
class SphereSpace:
    """Unit sphere in R^dim with the geodesic metric."""

    dim: int = 3
    name = "sphere"

    def dist2(self, a, b):
        return sphere_geodesic_sq(a, b)

    def check(self, point):
        if not isinstance(point, SpherePoint) or point.p.shape[0] != self.dim:
            raise IncompatibleSpaces(f"expected a SpherePoint in R^{self.dim}")

    def frechet_mean(self, points, weights, cfg=None):
        return frechet_mean_sphere(points, weights, cfg)
