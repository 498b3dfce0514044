import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mgfr import (
    DegenerateWeights,
    GaussianPoint,
    IncompatibleSpaces,
    InvalidInput,
    ProbabilityGrid,
    QuantileFunction,
    SolverConfig,
    SpherePoint,
    bures_wasserstein_sq,
    empirical_quantile,
    frechet_mean_gaussian,
    frechet_mean_quantile,
    frechet_mean_sphere,
    isotonic_project,
    sphere_geodesic_sq,
    wasserstein_sq_quantile,
)
from mgfr.metric_spaces import GaussianSpace, QuantileSpace, SphereSpace, _psd_sqrt

from oracles import brute_isotonic, monotone_lattice_min, quantile_by_cdf_inversion, random_spd, sphere_grid_min

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def qf(values, M=None):
    values = np.asarray(values, dtype=float)
    return QuantileFunction(ProbabilityGrid(M or values.shape[0]), values)


# --- grid and quantile functions -------------------------------------------

def test_grid_midpoints():
    np.testing.assert_allclose(ProbabilityGrid(4).u, [0.125, 0.375, 0.625, 0.875])
    assert ProbabilityGrid().M == 100


def test_grid_rejects_tiny():
    with pytest.raises(InvalidInput):
        ProbabilityGrid(1)


def test_quantile_function_validation():
    g = ProbabilityGrid(3)
    with pytest.raises(InvalidInput):
        QuantileFunction(g, [0.0, 2.0, 1.0])
    with pytest.raises(InvalidInput):
        QuantileFunction(g, [0.0, 1.0])
    with pytest.raises(InvalidInput):
        QuantileFunction(g, [0.0, np.nan, 1.0])
    q = QuantileFunction(g, [0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        q.q[0] = 5.0


@pytest.mark.parametrize("M", [2, 7, 100])
def test_empirical_quantile_single_value(M):
    q = empirical_quantile([5.0], ProbabilityGrid(M))
    assert np.all(q.q == 5.0)


def test_empirical_quantile_hand_example():
    q = empirical_quantile([1, 2, 3, 4], ProbabilityGrid(2))
    np.testing.assert_allclose(q.q, [1.75, 3.25], atol=1e-15)
    np.testing.assert_allclose(q.q, quantile_by_cdf_inversion([1, 2, 3, 4], [0.25, 0.75]), atol=1e-15)


@given(st.floats(-1e6, 1e6), st.integers(1, 40), st.integers(2, 60))
def test_empirical_quantile_constant(c, n, M):
    q = empirical_quantile(np.full(n, c), ProbabilityGrid(M))
    assert np.all(q.q == c)


@given(arrays(np.float64, st.integers(1, 30), elements=finite), st.integers(2, 25))
def test_empirical_quantile_matches_oracle(values, M):
    grid = ProbabilityGrid(M)
    np.testing.assert_allclose(empirical_quantile(values, grid).q,
                               quantile_by_cdf_inversion(values, grid.u), atol=1e-9)


def test_empirical_quantile_rejects_empty():
    with pytest.raises(InvalidInput):
        empirical_quantile([])


# --- Wasserstein on quantile grids -----------------------------------------

def test_wasserstein_examples():
    a = qf([0.0, 1.0])
    assert wasserstein_sq_quantile(a, a) == 0.0
    assert wasserstein_sq_quantile(a, qf([1.0, 3.0])) == pytest.approx(2.5, abs=1e-15)


@given(arrays(np.float64, 6, elements=finite), st.floats(-10, 10))
def test_wasserstein_shift(v, c):
    a = qf(np.sort(v))
    b = qf(np.sort(v) + c)
    assert wasserstein_sq_quantile(a, b) == pytest.approx(c * c, rel=1e-9, abs=1e-9)


def test_wasserstein_grid_mismatch():
    with pytest.raises(IncompatibleSpaces):
        wasserstein_sq_quantile(qf([0.0, 1.0]), qf([0.0, 1.0, 2.0]))


# --- Bures-Wasserstein -----------------------------------------------------

def test_bures_examples():
    P = GaussianPoint(np.zeros(3), np.eye(3))
    assert bures_wasserstein_sq(P, P) == pytest.approx(0.0, abs=1e-12)
    v = np.array([1.0, -2.0, 0.5])
    assert bures_wasserstein_sq(P, GaussianPoint(v, np.eye(3))) == pytest.approx(v @ v, abs=1e-12)
    assert bures_wasserstein_sq(GaussianPoint([0.0], [[4.0]]), GaussianPoint([0.0], [[1.0]])) == \
        pytest.approx(1.0, abs=1e-12)


def test_bures_1d_analytic(rng):
    for _ in range(100):
        mp, mq = rng.normal(size=2) * 3
        sp, sq = rng.uniform(0.01, 5, size=2)
        got = bures_wasserstein_sq(GaussianPoint([mp], [[sp ** 2]]), GaussianPoint([mq], [[sq ** 2]]))
        assert abs(got - ((mp - mq) ** 2 + (sp - sq) ** 2)) < 1e-10


def test_bures_commuting_closed_form(rng):
    # diagonal covariances commute: distance is the sum over coordinates
    for _ in range(20):
        a, b = rng.uniform(0.1, 3, size=(2, 4))
        mu_a, mu_b = rng.normal(size=(2, 4))
        got = bures_wasserstein_sq(GaussianPoint(mu_a, np.diag(a)), GaussianPoint(mu_b, np.diag(b)))
        want = np.sum((mu_a - mu_b) ** 2) + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
        assert got == pytest.approx(want, abs=1e-10)


def test_psd_sqrt_clamps_negative_rounding():
    S = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-17 * np.eye(2)
    R = _psd_sqrt(S)
    assert np.all(np.isfinite(R))
    np.testing.assert_allclose(R @ R, S, atol=1e-12)


def test_gaussian_point_validation():
    with pytest.raises(InvalidInput):
        GaussianPoint([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidInput):
        GaussianPoint([0.0], [[-1.0]])
    with pytest.raises(IncompatibleSpaces):
        GaussianPoint([0.0, 0.0], [[1.0]])
    with pytest.raises(IncompatibleSpaces):
        bures_wasserstein_sq(GaussianPoint([0.0], [[1.0]]), GaussianPoint([0.0, 0.0], np.eye(2)))


# --- isotonic projection ----------------------------------------------------

@pytest.mark.parametrize("g, want", [
    ([1, 2, 3], [1, 2, 3]),
    ([2, 1], [1.5, 1.5]),
    ([3, 1, 2], [2, 2, 2]),
])
def test_isotonic_examples(g, want):
    np.testing.assert_allclose(isotonic_project(g).q, want, atol=1e-15)
    np.testing.assert_allclose(brute_isotonic(g), want, atol=1e-12)


@given(arrays(np.float64, st.integers(2, 40), elements=finite))
def test_isotonic_idempotent(g):
    once = isotonic_project(g).q
    assert np.array_equal(isotonic_project(once).q, once)


@given(arrays(np.float64, st.integers(2, 7), elements=finite))
def test_isotonic_matches_brute_force(g):
    np.testing.assert_allclose(isotonic_project(g).q, brute_isotonic(g), atol=1e-8)


@given(arrays(np.float64, st.integers(2, 30), elements=finite))
def test_isotonic_preserves_sum(g):
    # block means keep the total mass
    assert isotonic_project(g).q.sum() == pytest.approx(g.sum(), abs=1e-8)


def test_isotonic_rejects_bad_input():
    with pytest.raises(InvalidInput):
        isotonic_project([1.0])
    with pytest.raises(InvalidInput):
        isotonic_project([1.0, np.inf])


# --- quantile Frechet mean --------------------------------------------------

def test_frechet_quantile_single_and_identical():
    a = qf([0.0, 1.0, 4.0])
    assert frechet_mean_quantile([a], [1.0]) == a
    np.testing.assert_allclose(frechet_mean_quantile([a, a], [0.3, 2.0]).q, a.q, atol=1e-15)


def test_frechet_quantile_weighted_example():
    samples = [qf([0.0, 0.0]), qf([2.0, 2.0])]
    got = frechet_mean_quantile(samples, [1.0, 3.0]).q
    np.testing.assert_allclose(got, [1.5, 1.5], atol=1e-15)

    def objective(P):
        return sum(w * np.mean((P - s.q) ** 2, axis=1) for w, s in zip([1.0, 3.0], samples))
    best = monotone_lattice_min(objective, -1, 3, 0.01, dims=2)
    np.testing.assert_allclose(got, best, atol=1e-9)


@given(st.lists(arrays(np.float64, 5, elements=finite), min_size=1, max_size=6))
def test_frechet_quantile_equal_weights(rows):
    samples = [qf(np.sort(r)) for r in rows]
    got = frechet_mean_quantile(samples, np.full(len(samples), 0.7)).q
    want = isotonic_project(np.mean([s.q for s in samples], axis=0)).q
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_frechet_quantile_negative_weights_with_positive_sum():
    samples = [qf([0.0, 1.0]), qf([1.0, 3.0]), qf([2.0, 2.5])]
    got = frechet_mean_quantile(samples, [-0.5, 1.0, 1.0]).q
    g = (-0.5 * samples[0].q + samples[1].q + samples[2].q) / 1.5
    np.testing.assert_allclose(got, isotonic_project(g).q)


@pytest.mark.parametrize("w", [[1.0, -1.0], [0.0, 0.0], [-1.0, -2.0]])
def test_frechet_quantile_degenerate(w):
    with pytest.raises(DegenerateWeights) as info:
        frechet_mean_quantile([qf([0.0, 1.0]), qf([1.0, 2.0])], w)
    assert info.value.weight_sum == pytest.approx(sum(w))


# --- sphere -----------------------------------------------------------------

def test_geodesic_examples():
    a = SpherePoint([1.0, 0.0, 0.0])
    assert sphere_geodesic_sq(a, a) == 0.0
    assert sphere_geodesic_sq(a, SpherePoint([-1.0, 0.0, 0.0])) == pytest.approx(np.pi ** 2)
    assert sphere_geodesic_sq(a, SpherePoint([0.0, 1.0, 0.0])) == pytest.approx((np.pi / 2) ** 2)


def test_sphere_point_validation():
    with pytest.raises(InvalidInput):
        SpherePoint([1.0, 1.0, 0.0])
    with pytest.raises(InvalidInput):
        SpherePoint.from_vector([0.0, 0.0, 0.0])
    np.testing.assert_allclose(SpherePoint.from_vector([3.0, 4.0]).p, [0.6, 0.8])


def test_sphere_mean_of_identical_points():
    p = SpherePoint.from_vector([1.0, 2.0, 2.0])
    omega, iters, conv = frechet_mean_sphere([p, p, p], [1.0, 2.0, 0.5])
    np.testing.assert_allclose(omega.p, p.p, atol=1e-14)
    assert conv and iters <= 1


def test_sphere_mean_symmetric_pair():
    a = SpherePoint.from_vector([1.0, 0.3, 0.2])
    b = SpherePoint.from_vector([1.0, -0.3, 0.2])
    omega, _, conv = frechet_mean_sphere([a, b], [1.0, 1.0])
    assert conv
    mid = (a.p + b.p) / np.linalg.norm(a.p + b.p)
    np.testing.assert_allclose(omega.p, mid, atol=1e-8)
    Y = np.stack([a.p, b.p])

    def objective(P):
        return np.sum(np.arccos(np.clip(P @ Y.T, -1, 1)) ** 2, axis=1)
    np.testing.assert_allclose(omega.p, sphere_grid_min(objective), atol=1e-4)


def test_sphere_zero_weight_ignored():
    a = SpherePoint.from_vector([0.0, 1.0, 1.0])
    b = SpherePoint.from_vector([1.0, 0.0, 0.0])
    omega, _, _ = frechet_mean_sphere([a, b], [1.0, 0.0])
    np.testing.assert_allclose(omega.p, a.p, atol=1e-12)


def test_sphere_three_points_grid_oracle(rng):
    Y = rng.normal(size=(3, 3)) + np.array([2.0, 0.0, 0.0])
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    w = np.array([1.0, 2.0, 0.5])
    omega, _, conv = frechet_mean_sphere([SpherePoint(y) for y in Y], w)
    assert conv

    def objective(P):
        return np.arccos(np.clip(P @ Y.T, -1, 1)) ** 2 @ w
    np.testing.assert_allclose(omega.p, sphere_grid_min(objective), atol=1e-4)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8))
def test_sphere_mean_beats_samples(seed, n):
    r = np.random.default_rng(seed)
    Y = r.normal(size=(n, 3)) + np.array([1.5, 0.0, 0.0])
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    w = r.uniform(0.1, 2.0, size=n)
    omega, _, _ = frechet_mean_sphere([SpherePoint(y) for y in Y], w)

    def f(p):
        return float(np.arccos(np.clip(Y @ p, -1, 1)) ** 2 @ w)
    assert all(f(omega.p) <= f(y) + 1e-9 for y in Y)


def test_sphere_first_sample_init():
    pts = [SpherePoint.from_vector(v) for v in ([1, 0.1, 0], [1, -0.1, 0], [1, 0, 0.2])]
    a, _, _ = frechet_mean_sphere(pts, [1, 1, 1])
    b, _, _ = frechet_mean_sphere(pts, [1, 1, 1], SolverConfig(init="first-sample"))
    np.testing.assert_allclose(a.p, b.p, atol=1e-7)


def test_solver_config_validation():
    with pytest.raises(InvalidInput):
        SolverConfig(eps_tol=0)
    with pytest.raises(InvalidInput):
        SolverConfig(k_max=0)
    with pytest.raises(InvalidInput):
        SolverConfig(init="random")


# --- Gaussian Frechet mean --------------------------------------------------

def test_gaussian_mean_1d_closed_form():
    pts = [GaussianPoint([0.0], [[1.0]]), GaussianPoint([2.0], [[9.0]])]
    omega, _, conv = frechet_mean_gaussian(pts, [1.0, 1.0])
    assert conv
    np.testing.assert_allclose(omega.mu, [1.0])
    np.testing.assert_allclose(omega.sigma, [[4.0]])


def test_gaussian_mean_fixed_point(rng):
    pts = [GaussianPoint(rng.normal(size=3), random_spd(rng, 3)) for _ in range(4)]
    w = rng.uniform(0.5, 2.0, size=4)
    omega, _, conv = frechet_mean_gaussian(pts, w, SolverConfig(eps_tol=1e-12))
    assert conv
    lam = w / w.sum()
    R = _psd_sqrt(omega.sigma)
    T = sum(l * _psd_sqrt(R @ p.sigma @ R) for l, p in zip(lam, pts))
    np.testing.assert_allclose(T, omega.sigma, atol=1e-8)

    def f(S):
        q = GaussianPoint(omega.mu, S)
        return sum(l * bures_wasserstein_sq(p, q) for l, p in zip(lam, pts))
    base = f(omega.sigma)
    for _ in range(50):
        E = rng.normal(size=(3, 3)) * 0.05
        assert f(omega.sigma + E @ E.T) >= base - 1e-10


def test_gaussian_mean_multid_rejects_negative_weights(rng):
    pts = [GaussianPoint(np.zeros(2), random_spd(rng, 2)) for _ in range(3)]
    with pytest.raises(InvalidInput):
        frechet_mean_gaussian(pts, [2.0, -0.5, 1.0])


# --- space objects ------------------------------------------------------------

def test_space_check_rejects_foreign_points():
    with pytest.raises(IncompatibleSpaces):
        QuantileSpace(ProbabilityGrid(3)).check(qf([0.0, 1.0]))
    with pytest.raises(IncompatibleSpaces):
        GaussianSpace(2).check(GaussianPoint([0.0], [[1.0]]))
    with pytest.raises(IncompatibleSpaces):
        SphereSpace(3).check(SpherePoint([1.0, 0.0]))


def test_quantile_batch_means_match_single(rng):
    space = QuantileSpace(ProbabilityGrid(8))
    pts = [qf(np.sort(rng.normal(size=8))) for _ in range(5)]
    W = rng.uniform(0.1, 1.0, size=(4, 5))
    batch = space.frechet_mean_batch(space.stack(pts), W)
    for row, w in zip(batch, W):
        np.testing.assert_allclose(row, frechet_mean_quantile(pts, w).q, atol=1e-12)
    with pytest.raises(DegenerateWeights):
        space.frechet_mean_batch(space.stack(pts), -W)


def test_bures_matches_trace_formula(rng):
    for d in (1, 2, 3, 5):
        P = GaussianPoint(rng.normal(size=d), random_spd(rng, d))
        Q = GaussianPoint(rng.normal(size=d), random_spd(rng, d, 2.0))
        rp = _psd_sqrt(P.sigma)
        trace_form = (np.sum((P.mu - Q.mu) ** 2) + np.trace(P.sigma) + np.trace(Q.sigma)
                      - 2 * np.trace(_psd_sqrt(rp @ Q.sigma @ rp)))
        assert bures_wasserstein_sq(P, Q) == pytest.approx(trace_form, rel=1e-9, abs=1e-12)


def test_bures_self_distance_exact(rng):
    for d in (1, 2, 4):
        P = GaussianPoint(rng.normal(size=d), random_spd(rng, d, 3.0))
        assert np.sqrt(bures_wasserstein_sq(P, P)) < 1e-12
