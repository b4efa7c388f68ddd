import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wiprates.dynsys import ContractError, MapSystem, OrbitSampler, make_rng, step
from wiprates.pathspace import (
    EmpiricalPathMeasure,
    NotPSD,
    PiecewisePath,
    brownian_paths,
    build_Bn,
    build_Wn,
    h_reversal,
    read_paths_csv,
    sample_brownian,
    spectral_factor,
    sup_distance,
    write_paths_csv,
)
from wiprates.suspension import (
    FlowObservable,
    RoofFunction,
    SuspensionFlow,
    induced_observable,
)
from wiprates.suspension import testbed_flow as canonical_flow
from wiprates.suspension import testbed_observable as canonical_observable


def random_path(rng, dim=1, pinned=False, max_nodes=30):
    k = int(rng.integers(2, max_nodes))
    inner = np.unique(rng.random(k - 2)) if k > 2 else np.empty(0)
    inner = inner[(inner > 0) & (inner < 1)]
    nodes = np.concatenate([[0.0], inner, [1.0]])
    values = rng.standard_normal((nodes.size, dim))
    if pinned:
        values[0] = 0.0
    return PiecewisePath(nodes, values)


def test_path_contract():
    with pytest.raises(ContractError):
        PiecewisePath([0.0], [0.0])
    with pytest.raises(ContractError):
        PiecewisePath([0.0, 0.5], [0.0, 1.0])
    with pytest.raises(ContractError):
        PiecewisePath([0.0, 0.5, 0.5, 1.0], [0, 1, 2, 3])
    with pytest.raises(ContractError):
        PiecewisePath([0.0, 1.0], [0.0, 1.0, 2.0])


def test_interpolation_and_endpoints():
    p = PiecewisePath([0.0, 0.5, 1.0], [[0.0, 1.0], [2.0, 1.0], [0.0, 3.0]])
    assert np.allclose(p(0.25), [1.0, 1.0])
    assert np.allclose(p(1.0), [0.0, 3.0])
    assert np.allclose(p(0.0), [0.0, 1.0])


def test_bn_zero_observable():
    path = build_Bn(np.linspace(0, 1, 10), lambda x: np.zeros_like(x), 8)
    assert np.all(path.values == 0)


def test_bn_single_step():
    path = build_Bn([0.3], lambda x: x, 1)
    assert np.array_equal(path.nodes, [0.0, 1.0])
    assert np.allclose(path.values[:, 0], [0.0, 0.3])


def test_bn_hand_sum():
    # cumulative sums 0.1, 0.3, 1.0, 1.4 divided by sqrt(4) = 2
    path = build_Bn([0.1, 0.2, 0.7, 0.4], lambda x: x, 4)
    assert np.allclose(path.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(path.values[:, 0], [0.0, 0.05, 0.15, 0.5, 0.7], atol=1e-15)


def test_bn_needs_long_enough_orbit():
    with pytest.raises(ContractError):
        build_Bn([0.1, 0.2], lambda x: x, 3)


def test_wn_zero_observable():
    zero = FlowObservable(lambda x, u: np.zeros_like(x))
    path = build_Wn(canonical_flow(), zero, (0.3, 0.1), 20.0, 8)
    assert np.all(path.values == 0)


def test_wn_grid_refinement_is_consistent():
    flow = canonical_flow()
    orbit = OrbitSampler(MapSystem.doubling(), seed=3).orbits(1, 400)[0]
    coarse = build_Wn(flow, canonical_observable(), (orbit[0], 0.2), 256.0, 8, orbit=orbit)
    fine = build_Wn(flow, canonical_observable(), (orbit[0], 0.2), 256.0, 16, orbit=orbit)
    assert np.allclose(fine.values[::2], coarse.values, atol=1e-12)


def test_wn_unit_roof_matches_birkhoff_sum():
    flow = SuspensionFlow(MapSystem.lsv(0.2), RoofFunction.affine(1.0))
    v = FlowObservable(lambda x, u: np.sin(2 * np.pi * x) * (1 + u))
    n, x0 = 64, 0.71
    orbit = [x0]
    for _ in range(n + 2):
        orbit.append(step(flow.base, orbit[-1]))
    orbit = np.array(orbit)
    path = build_Wn(flow, v, (x0, 0.0), float(n), 4, orbit=orbit)
    vx = induced_observable(flow, v, orbit[:n])[:, 0]
    assert path.values[-1, 0] == pytest.approx(vx.sum() / np.sqrt(n), abs=1e-10)
    assert path.values[0, 0] == 0.0


def test_wn_grid_contract():
    with pytest.raises(ContractError):
        build_Wn(canonical_flow(), canonical_observable(), (0.3, 0.0), 4.0, 1)


def test_brownian_zero_covariance():
    path = sample_brownian(np.zeros((2, 2)), 16, 0)
    assert np.all(path.values == 0)


def test_brownian_unit_variance():
    paths = brownian_paths(np.array([[1.0]]), 16, 10_000, make_rng(1))
    assert paths[:, -1, 0].var() == pytest.approx(1.0, abs=0.05)
    assert np.all(paths[:, 0] == 0)


def test_brownian_exponential_moment_of_sup():
    paths = brownian_paths(np.array([[1.0]]), 64, 10_000, make_rng(2))
    sup = np.abs(paths[..., 0]).max(axis=1)
    assert np.exp(sup).mean() < 1e3


def test_brownian_covariance_matrix():
    sigma = np.array([[2.0, 0.6], [0.6, 0.5]])
    paths = brownian_paths(sigma, 4, 20_000, make_rng(3))
    est = np.cov(paths[:, -1].T)
    assert np.allclose(est, sigma, atol=0.06)


def test_singular_covariance_is_fine_and_indefinite_is_not():
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    f = spectral_factor(singular)
    assert np.allclose(f @ f.T, singular, atol=1e-12)
    with pytest.raises(NotPSD):
        sample_brownian(np.array([[1.0, 0.0], [0.0, -0.1]]), 4, 0)
    # rounding-level negativity is clamped
    sample_brownian(np.array([[1.0, 0.0], [0.0, -1e-9]]), 4, 0)


def test_brownian_seed_determinism():
    a = sample_brownian(np.eye(2), 16, 42)
    b = sample_brownian(np.eye(2), 16, 42)
    assert a.values.tobytes() == b.values.tobytes()


def test_brownian_rescaling_consistency():
    rng = make_rng(5)
    fine = brownian_paths(np.array([[1.0]]), 8, 20_000, rng)[:, ::2, 0]
    coarse = brownian_paths(np.array([[1.0]]), 4, 20_000, rng)[:, :, 0]
    cf, cc = np.cov(fine[:, 1:].T), np.cov(coarse[:, 1:].T)
    # entries are min(s, t); var of a sample covariance entry is at most 2/20000
    assert np.max(np.abs(cf - cc)) < 3 * np.sqrt(2 * 2 / 20_000)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_expected_max_of_sups_bounded_by_log(n):
    rng = make_rng(n)
    reps = 200
    xi = np.abs(brownian_paths(np.array([[1.0]]), 64, n * reps, rng)[..., 0]).max(axis=1)
    a_hat = np.exp(xi).mean()
    max_mean = xi.reshape(reps, n).max(axis=1).mean()
    assert max_mean <= np.log(n * a_hat)


def test_h_reversal_formula():
    rng = np.random.default_rng(0)
    p = random_path(rng, dim=2)
    h = h_reversal(p)
    t = rng.random(50)
    assert np.allclose(h(t), p(1.0) - p(1.0 - t), atol=1e-12)


def test_h_reversal_involution_on_pinned_paths():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = random_path(rng, dim=2, pinned=True)
        back = h_reversal(h_reversal(p))
        assert np.array_equal(back.nodes, p.nodes)
        assert np.max(np.abs(back.values - p.values)) <= 1e-15


def test_h_reversal_of_zero_path():
    z = PiecewisePath([0.0, 0.3, 1.0], np.zeros(3))
    assert np.all(h_reversal(z).values == 0)


def test_sup_distance_examples():
    a = PiecewisePath([0.0, 1.0], [0.0, 0.0])
    b = PiecewisePath([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    assert sup_distance(a, b) == 1.0
    assert sup_distance(b, b) == 0.0


def test_sup_distance_dense_sampling_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b = random_path(rng, dim=2), random_path(rng, dim=2)
        t = np.concatenate([np.linspace(0, 1, 1000), a.nodes, b.nodes])
        dense = np.max(np.linalg.norm(a(t) - b(t), axis=-1))
        got = sup_distance(a, b)
        assert got >= dense - 1e-12
        assert got == pytest.approx(dense, abs=1e-12)


def test_sup_distance_is_a_metric():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b, c = (random_path(rng) for _ in range(3))
        ab, ba = sup_distance(a, b), sup_distance(b, a)
        assert ab == pytest.approx(ba, abs=1e-12)
        assert sup_distance(a, c) <= ab + sup_distance(b, c) + 1e-12
        assert sup_distance(a, a) == 0.0


def test_sup_distance_dimension_mismatch():
    with pytest.raises(ContractError):
        sup_distance(PiecewisePath([0, 1], [0, 1]), PiecewisePath([0, 1], [[0, 1], [1, 1]]))


def test_csv_round_trip():
    rng = np.random.default_rng(4)
    paths = [random_path(rng, dim=3) for _ in range(5)]
    buf = io.StringIO()
    write_paths_csv(paths, buf)
    buf.seek(0)
    assert buf.readline().strip() == "path,t,v1,v2,v3"
    buf.seek(0)
    back = read_paths_csv(buf)
    for p, q in zip(paths, back):
        assert np.array_equal(p.nodes, q.nodes) and np.array_equal(p.values, q.values)


def test_empirical_measure():
    rng = np.random.default_rng(5)
    grid = np.linspace(0, 1, 5)
    vals = rng.standard_normal((4, 5, 2))
    mu = EmpiricalPathMeasure.from_array(grid, vals)
    assert mu.size == 4 and mu.dim == 2
    assert np.array_equal(mu.values(), vals)
    assert np.array_equal(mu.permuted([3, 2, 1, 0]).values(), vals[::-1])
    with pytest.raises(ContractError):
        EmpiricalPathMeasure([])
    with pytest.raises(ContractError):
        EmpiricalPathMeasure([PiecewisePath([0, 1], [0, 1]), PiecewisePath([0, 1], [[0, 1], [1, 1]])])
    mixed = EmpiricalPathMeasure([PiecewisePath([0, 1], [0, 1]), PiecewisePath([0, 0.5, 1], [0, 1, 1])])
    assert mixed.common_nodes is None
    with pytest.raises(ContractError):
        mixed.values()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=20))
def test_restriction_matches_evaluation(values):
    nodes = np.linspace(0, 1, len(values))
    p = PiecewisePath(nodes, values)
    r = p.restrict(7)
    assert np.allclose(r.values, p(np.linspace(0, 1, 8)))
