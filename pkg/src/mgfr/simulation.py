"""Data-generating processes for the distributional and spherical-predictor experiments.

Predictors are ``N(mu_x, A A')`` with a seeded standard-normal ``A``; each
observation draws a latent mean ``beta_i ~ N(beta0 + delta * mean(x_i), v1)``
and a response row ``y_i ~ N(beta_i 1_q, Sigma_Y)`` with
``Sigma_Y = B B' + 0.1 I``. A response object is built from the ``q``
coordinates of its row.

Randomness is split into named substreams derived from ``(seed, key)`` so that
each piece (design matrices, predictor draws, latent means, response noise) is
reproducible on its own.
"""
import csv
import io
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from ._errors import InvalidConfiguration, InvalidInput
from .metric_spaces import (
    GaussianPoint,
    ProbabilityGrid,
    QuantileFunction,
    SolverConfig,
    SpherePoint,
    _sphere_descent,
    quantiles_of_sorted,
)

MU_X_PATTERN = (0.0, 1.0, -1.0, 2.0, 0.0)
METRICS = ("quantile", "bures", "sphere")

# substream keys
_DESIGN_A, _DRAW_X, _DESIGN_B, _DRAW_BETA, _DRAW_Y, _TRUTH_MC = range(6)
_TRUTH_DRAWS = 1 << 19
_SPHERE_TRUTH_DRAWS = 2048


def stream(seed, *key):
    """Independent generator that is a pure function of ``(seed, key)``."""
    ss = np.random.SeedSequence(int(seed) % (1 << 64), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed, *key):
    """64-bit child seed, a pure function of ``(seed, key)``."""
    ss = np.random.SeedSequence(int(seed) % (1 << 64), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    m: int = 5
    q: int = 5
    mu_x: tuple = None
    beta0: float = 1.0
    delta: float = 0.5
    v1: float = 0.1
    seed: int = 0
    M: int = 100
    spherical: bool = False
    # seeds A and Sigma_Y; defaults to ``seed`` so a single seed fixes everything
    design_seed: int = None

    def __post_init__(self):
        def bad(key, why):
            raise InvalidConfiguration(f"invalid value for {key}: {why}", key=key)

        if int(self.n) != self.n or self.n < 2:
            bad("n", f"must be an integer >= 2, got {self.n!r}")
        if int(self.m) != self.m or self.m < 1:
            bad("m", f"must be an integer >= 1, got {self.m!r}")
        if int(self.q) != self.q or self.q < 2:
            bad("q", f"must be an integer >= 2, got {self.q!r}")
        if not (np.isfinite(self.v1) and self.v1 > 0):
            bad("v1", f"must be > 0, got {self.v1!r}")
        if not (np.isfinite(self.beta0) and np.isfinite(self.delta)):
            bad("beta0" if not np.isfinite(self.beta0) else "delta", "must be finite")
        if int(self.M) != self.M or self.M < 2:
            bad("M", f"must be an integer >= 2, got {self.M!r}")
        if self.mu_x is not None:
            mu = tuple(float(v) for v in self.mu_x)
            if len(mu) != self.m:
                bad("mu_x", f"must have length m={self.m}, got {len(mu)}")
            object.__setattr__(self, "mu_x", mu)

    @property
    def mean_vector(self):
        if self.mu_x is not None:
            return np.array(self.mu_x, dtype=np.float64)
        return np.array([MU_X_PATTERN[j % len(MU_X_PATTERN)] for j in range(self.m)])

    @property
    def design(self):
        return self.seed if self.design_seed is None else self.design_seed

    def to_dict(self):
        d = asdict(self)
        d["mu_x"] = list(self.mean_vector)
        return d


@dataclass(frozen=True, eq=False)
class Truth:
    """Noiseless generating parameters and the true conditional Frechet means."""

    mu_x: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    beta_mean: np.ndarray  # beta0 + delta * mean(x_i), per row
    objects: tuple = ()


@dataclass(frozen=True, eq=False)
class SimDataset:
    config: SimConfig
    X: np.ndarray
    Y: np.ndarray
    beta: np.ndarray
    responses: tuple
    truth: Truth
    metric: str = "quantile"


def _design_A(cfg):
    return stream(cfg.design, _DESIGN_A).standard_normal((cfg.m, cfg.m))


def _design_sigma_y(cfg):
    B = stream(cfg.design, _DESIGN_B).standard_normal((cfg.q, cfg.q))
    return B @ B.T + 0.1 * np.eye(cfg.q)


def gen_predictors(cfg):
    """``n x m`` predictor matrix; rows normalized to unit length when ``cfg.spherical``."""
    A = _design_A(cfg)
    Z = stream(cfg.seed, _DRAW_X).standard_normal((cfg.n, cfg.m))
    X = cfg.mean_vector + Z @ A.T
    if cfg.spherical:
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return X


def beta_mean(cfg, X):
    return cfg.beta0 + cfg.delta * np.asarray(X).mean(axis=1)


def gen_responses(cfg, X):
    """Response matrix ``Y`` (n x q) and latent means ``beta`` (n,) for predictors ``X``."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    eta = stream(cfg.seed, _DRAW_BETA).standard_normal(n)
    beta = beta_mean(cfg, X) + np.sqrt(cfg.v1) * eta
    L = np.linalg.cholesky(_design_sigma_y(cfg))
    E = stream(cfg.seed, _DRAW_Y).standard_normal((n, cfg.q)) @ L.T
    return beta[:, None] + E, beta


def inject_noise(data, sigma_noise, seed):
    """Add i.i.d. ``N(0, sigma_noise^2)`` noise; ``sigma_noise = 0`` returns an exact copy."""
    data = np.asarray(data, dtype=np.float64)
    if not (np.isfinite(sigma_noise) and sigma_noise >= 0):
        raise InvalidInput(f"sigma_noise must be >= 0, got {sigma_noise!r}")
    if sigma_noise == 0:
        return data.copy()
    return data + sigma_noise * stream(seed).standard_normal(data.shape)


def inject_collinearity(X, pairs, jitter, seed):
    """Overwrite column ``dst`` with column ``src`` plus ``N(0, jitter^2)`` noise for each pair."""
    X = np.array(X, dtype=np.float64)
    m = X.shape[1]
    rng = stream(seed)
    for src, dst in pairs:
        src, dst = int(src), int(dst)
        if not (0 <= src < m and 0 <= dst < m):
            raise InvalidInput(f"column pair ({src}, {dst}) out of range for m={m}")
        if src == dst:
            raise InvalidInput(f"collinear pair must use two different columns, got ({src}, {dst})")
        noise = rng.standard_normal(X.shape[0]) * jitter if jitter else 0.0
        X[:, dst] = X[:, src] + noise
    return X


def rows_to_quantiles(Y, M=100):
    """One empirical quantile function per row of ``Y`` on an ``M``-point grid."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise InvalidInput("rows_to_quantiles needs an n x q matrix with q >= 2")
    if not np.all(np.isfinite(Y)):
        raise InvalidInput("values must be finite")
    grid = ProbabilityGrid(M)
    Qm = quantiles_of_sorted(np.sort(Y, axis=1), M)
    return tuple(QuantileFunction(grid, row) for row in Qm)


def rows_to_gaussians(Y):
    """1-D Gaussian summary (mean, variance over coordinates) of every row."""
    Y = np.asarray(Y, dtype=np.float64)
    return tuple(GaussianPoint(np.array([r.mean()]), np.array([[r.var()]])) for r in Y)


def rows_to_sphere(Y):
    Y = np.asarray(Y, dtype=np.float64)
    U = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    return tuple(SpherePoint(u) for u in U)


def build_responses(Y, metric, M=100):
    if metric == "quantile":
        return rows_to_quantiles(Y, M)
    if metric == "bures":
        return rows_to_gaussians(Y)
    if metric == "sphere":
        return rows_to_sphere(Y)
    raise InvalidConfiguration(f"unknown metric {metric!r}; expected one of {METRICS}", key="metric")


@lru_cache(maxsize=32)
def _noise_summaries(design, q):
    """Monte-Carlo expectations of the sorted noise vector and its coordinate SD."""
    L = np.linalg.cholesky(_design_sigma_y(SimConfig(q=q, seed=design)))
    E = stream(design, _TRUTH_MC).standard_normal((_TRUTH_DRAWS, q)) @ L.T
    sorted_mean = np.sort(E, axis=1).mean(axis=0)
    sd_mean = float(E.std(axis=1).mean())
    sorted_mean.flags.writeable = False
    return sorted_mean, sd_mean


def true_objects(cfg, X, metric="quantile"):
    """True conditional Frechet means of the response objects at the rows of ``X``.

    The response row is ``beta 1_q + eps`` so its empirical quantile function
    is ``beta + Q(eps)``; its conditional mean is ``E[beta | x] + E[Q(eps)]``.
    ``E[sorted(eps)]`` is computed once per design by Monte Carlo.
    """
    bm = beta_mean(cfg, X)
    if metric == "quantile":
        sorted_mean, _ = _noise_summaries(cfg.design, cfg.q)
        offset = quantiles_of_sorted(sorted_mean, cfg.M)
        grid = ProbabilityGrid(cfg.M)
        return tuple(QuantileFunction(grid, b + offset) for b in bm)
    if metric == "bures":
        _, sd = _noise_summaries(cfg.design, cfg.q)
        return tuple(GaussianPoint(np.array([b]), np.array([[sd * sd]])) for b in bm)
    if metric == "sphere":
        return _sphere_truth(cfg, bm)
    raise InvalidConfiguration(f"unknown metric {metric!r}", key="metric")


def _sphere_truth(cfg, bm):
    # conditional law of y given x is N(bm 1, v1 11' + Sigma_Y); common draws across rows
    cov = cfg.v1 * np.ones((cfg.q, cfg.q)) + _design_sigma_y(cfg)
    D = stream(cfg.design, _TRUTH_MC, 1).standard_normal((_SPHERE_TRUTH_DRAWS, cfg.q)) @ np.linalg.cholesky(cov).T
    w = np.ones(_SPHERE_TRUTH_DRAWS)
    solver = SolverConfig(eps_tol=1e-10, k_max=200)
    out = []
    for b in bm:
        V = D + b
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        p, _, _ = _sphere_descent(V, w, float(_SPHERE_TRUTH_DRAWS), solver)
        out.append(p)
    return tuple(out)


def simulate(cfg, metric="quantile", noise_sigma=0.0, collinear_pairs=(), collinear_jitter=1e-3,
             with_truth=True):
    """Generate a full dataset.

    Collinearity is injected into ``X`` before responses are drawn, so the
    truth follows the modified predictors; observation noise is added to ``Y``
    afterwards and does not enter the truth.
    """
    X = gen_predictors(cfg)
    if collinear_pairs:
        X = inject_collinearity(X, collinear_pairs, collinear_jitter, derive_seed(cfg.seed, 100))
    Y, beta = gen_responses(cfg, X)
    if noise_sigma:
        Y = inject_noise(Y, noise_sigma, derive_seed(cfg.seed, 101))
    responses = build_responses(Y, metric, cfg.M)
    objects = true_objects(cfg, X, metric) if with_truth else ()
    truth = Truth(
        mu_x=cfg.mean_vector,
        sigma_x=_design_A(cfg) @ _design_A(cfg).T,
        sigma_y=_design_sigma_y(cfg),
        beta_mean=beta_mean(cfg, X),
        objects=objects,
    )
    return SimDataset(cfg, X, Y, beta, responses, truth, metric)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def fmt(x):
    return format(float(x), ".17g")


def dataset_to_csv(X, Y, beta):
    """CSV text with columns ``x0..x{m-1}, y0..y{q-1}, beta`` (17 significant digits)."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(X.shape[1])] + [f"y{j}" for j in range(Y.shape[1])] + ["beta"])
    for xr, yr, b in zip(X, Y, beta):
        w.writerow([fmt(v) for v in xr] + [fmt(v) for v in yr] + [fmt(b)])
    return buf.getvalue()


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        return parse_dataset_csv(fh.read())


def parse_dataset_csv(text):
    """Parse dataset CSV text into ``(X, Y, beta)``; ``beta`` is None if the column is absent."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidInput("empty dataset CSV")
    header = rows[0]
    xs = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    ys = [i for i, h in enumerate(header) if h.startswith("y") and h[1:].isdigit()]
    if not xs:
        raise InvalidInput("dataset CSV has no x columns")
    if not ys:
        raise InvalidInput("dataset CSV has no y columns")
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    if body.size == 0:
        raise InvalidInput("dataset CSV has no data rows")
    beta = body[:, header.index("beta")] if "beta" in header else None
    return body[:, xs], body[:, ys], beta


__all__ = [
    "SimConfig", "SimDataset", "Truth", "gen_predictors", "gen_responses", "inject_noise",
    "inject_collinearity", "rows_to_quantiles", "rows_to_gaussians", "rows_to_sphere",
    "build_responses", "true_objects", "simulate", "stream", "derive_seed",
    "dataset_to_csv", "parse_dataset_csv", "read_dataset_csv",
]
