import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wiprates.decomp import (
    Decomposition,
    ExactDoubling,
    GridGibbsMarkov,
    NoDecay,
    TrigPoly,
    apply_transfer,
    flow_decomposition,
    green_kubo_sigma,
    induced_sigma,
    primary_decomposition,
    secondary_decomposition,
)
from wiprates.dynsys import ContractError, InducedMap, MapSystem, OrbitSampler
from wiprates.suspension import testbed_flow as canonical_flow
from wiprates.suspension import testbed_observable as canonical_observable

X = np.arange(2048) / 2048
OP = ExactDoubling()


def cos(k):
    return lambda x: np.cos(2 * np.pi * k * x)


def test_constant_is_fixed():
    assert np.allclose(apply_transfer(OP, TrigPoly.constant(1.0))(X), 1.0)
    assert np.max(np.abs(OP.row_sums() - 1.0)) < 1e-12


def test_cos_2pi_is_annihilated():
    assert np.max(np.abs(apply_transfer(OP, TrigPoly.cos(1))(X))) == 0.0
    # the callable path evaluates the two-branch formula at the preimages
    assert np.max(np.abs(apply_transfer(OP, cos(1))(X))) < 1e-15


def test_frequencies_halve():
    got = apply_transfer(OP, TrigPoly.cos(2))
    assert np.allclose(got(X)[:, 0], np.cos(2 * np.pi * X), atol=1e-15)
    grid = apply_transfer(OP, cos(2))
    assert np.allclose(grid(X)[:, 0], np.cos(2 * np.pi * X), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=8), st.lists(st.floats(-1, 1), min_size=2, max_size=8))
def test_transfer_preserves_mean(c, s):
    n = min(len(c), len(s))
    f = TrigPoly(np.array([c[:n]]), np.array([s[:n]]))
    assert abs(OP.integrate(OP.apply(f))[0] - OP.integrate(f)[0]) < 1e-10
    g = OP.tabulate(f)
    assert abs(OP.integrate(OP.apply(g))[0] - OP.integrate(g)[0]) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=6))
def test_exact_duality(c):
    # P(f o T) = f for trigonometric polynomials
    f = TrigPoly(np.array([c]), np.zeros((1, len(c))))
    back = OP.apply(OP.compose(f))
    assert np.allclose(back(X), f(X), atol=1e-13)


def test_decomposition_of_cos_2pi():
    dec = primary_decomposition(OP, TrigPoly.cos(1))
    assert np.allclose(dec.m(X)[:, 0], np.cos(2 * np.pi * X), atol=1e-15)
    assert np.max(np.abs(dec.chi(X))) == 0.0
    assert dec.sigma[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_decomposition_of_cos_4pi():
    v = TrigPoly.cos(2)
    dec = primary_decomposition(OP, v)
    assert np.allclose(dec.chi(X)[:, 0], np.cos(2 * np.pi * X), atol=1e-15)
    assert np.allclose(dec.m(X)[:, 0], np.cos(2 * np.pi * X), atol=1e-15)
    assert dec.residual < 1e-10
    assert dec.sigma[0, 0] == pytest.approx(0.5, abs=1e-6)
    assert dec.truncation_K == 1
    assert dec.identity_defect(OP, v) < 1e-8


def test_zero_observable():
    dec = primary_decomposition(OP, TrigPoly.zero())
    assert np.all(dec.m(X) == 0) and np.all(dec.chi(X) == 0) and np.all(dec.sigma == 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6), st.lists(st.floats(-1, 1), min_size=1, max_size=6))
def test_trig_decomposition_properties(c, s):
    n = min(len(c), len(s))
    v = TrigPoly(np.array([[0.0] + c[:n]]), np.array([[0.0] + s[:n]]))
    dec = primary_decomposition(OP, v)
    assert dec.identity_defect(OP, v) < 1e-8
    assert dec.residual < 1e-10
    assert np.all(np.linalg.eigvalsh(dec.sigma) >= -1e-10)
    # for a trigonometric polynomial of degree n the series stops after at most log2(n) + 1 terms
    assert dec.truncation_K <= int(np.log2(n)) + 1


def test_vector_observable_covariance():
    v = TrigPoly.stack([TrigPoly.cos(1), TrigPoly.cos(2), TrigPoly.cos(3)])
    dec = primary_decomposition(OP, v)
    # m = (cos 2pi x, cos 2pi x, cos 6pi x)
    expected = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 0.5]])
    assert np.allclose(dec.sigma, expected, atol=1e-12)


def test_mean_nonzero_is_rejected():
    with pytest.raises(ContractError):
        primary_decomposition(OP, TrigPoly.constant(0.1))


def test_no_decay_is_reported():
    class Stuck(ExactDoubling):
        def apply(self, f):
            return f

    with pytest.raises(NoDecay):
        primary_decomposition(Stuck(), TrigPoly.cos(1), patience=5)


def test_grid_decomposition_matches_trig_oracle():
    op = ExactDoubling(grid_size=4096)
    dec = primary_decomposition(op, cos(2))
    assert dec.sigma[0, 0] == pytest.approx(0.5, abs=1e-6)
    assert np.max(np.abs(dec.chi(op.points)[:, 0] - np.cos(2 * np.pi * op.points))) < 1e-6
    assert dec.residual < 1e-8


def test_discontinuous_observable_on_endpoint_grid():
    # v(x) = x - 1/2 jumps across the identification of 0 and 1.
    # P v = v / 2, so chi = v and m = 2x - Tx - 1/2, whose square integrates to 1/4.
    op = ExactDoubling(grid_size=4096, periodic=False)
    dec = primary_decomposition(op, lambda x: x - 0.5)
    assert np.max(np.abs(dec.chi(op.points)[:, 0] - (op.points - 0.5))) < 1e-8
    assert dec.sigma[0, 0] == pytest.approx(0.25, abs=1e-6)


def test_secondary_decomposition_closed_form():
    dec = primary_decomposition(OP, TrigPoly.cos(2))
    phi = secondary_decomposition(OP, dec)
    assert np.allclose(phi(X)[:, 0], 0.5 * np.cos(4 * np.pi * X), atol=1e-14)
    assert abs(OP.integrate(phi)[0]) < 1e-8


def test_secondary_of_constant_martingale_vanishes():
    c = 0.7
    dec = Decomposition(TrigPoly.constant(c), TrigPoly.zero(), np.array([[c * c]]), 0.0, 0)
    phi = secondary_decomposition(OP, dec)
    assert np.max(np.abs(phi(X))) < 1e-15


def test_secondary_on_grid_is_centred():
    op = ExactDoubling(grid_size=2048, periodic=False)
    dec = primary_decomposition(op, lambda x: x - 0.5)
    phi = secondary_decomposition(op, dec)
    assert abs(op.integrate(phi)[0]) < 1e-8


def test_variance_process_decay():
    # max_k |n^-1 sum_{j<k} phi o T^j| with phi = cos(4 pi x) / 2 from the closed form above
    phi = secondary_decomposition(OP, primary_decomposition(OP, TrigPoly.cos(2)))
    ns = [2**k for k in range(7, 14)]
    sampler = OrbitSampler(MapSystem.doubling(), seed=12)
    meds = []
    for n in ns:
        orbits = sampler.orbits(200, n)
        sums = np.cumsum(phi(orbits)[..., 0], axis=1) / n
        meds.append(np.median(np.abs(sums).max(axis=1)))
    slope = np.polyfit(np.log(ns), np.log(meds), 1)[0]
    assert -0.7 <= slope <= -0.3


@pytest.mark.parametrize("k", [1, 2])
def test_green_kubo_doubling(k):
    sampler = OrbitSampler(MapSystem.doubling(), seed=k)
    sigma = green_kubo_sigma(sampler, cos(k), 30, 1_000_000)
    assert sigma[0, 0] == pytest.approx(0.5, abs=0.01)


def test_green_kubo_zero():
    sampler = OrbitSampler(MapSystem.doubling(), seed=0)
    sigma = green_kubo_sigma(sampler, lambda x: np.zeros_like(x), 5, 1000)
    assert np.all(sigma == 0)


def test_green_kubo_contract():
    with pytest.raises(ContractError):
        green_kubo_sigma(OrbitSampler(MapSystem.doubling()), cos(1), 100, 500)


def test_decomposition_json_round_trip():
    dec = primary_decomposition(OP, TrigPoly.cos(2))
    rec = json.loads(dec.to_json())
    assert set(rec) >= {"grid", "m", "chi", "sigma", "residual", "truncation_K"}
    assert rec["sigma"] == [[0.5]]
    assert np.allclose(rec["chi"], np.cos(2 * np.pi * np.array(rec["grid"]))[:, None])


@pytest.fixture(scope="module")
def gm025():
    return GridGibbsMarkov(0.25, grid_size=4096)


def test_gibbs_markov_operator_invariants(gm025):
    assert np.max(np.abs(gm025.row_sums() - 1.0)) < 1e-12
    f = gm025.tabulate(lambda y: np.cos(7 * y) + y**2)
    assert abs(gm025.integrate(gm025.apply(f))[0] - gm025.integrate(f)[0]) < 1e-10
    info = gm025.describe()
    assert info["branches"] > 0 and info["tail_tol"] == 1e-10


def test_gibbs_markov_invariant_measure_against_orbits(gm025):
    mass = gm025.weights[gm025.points < 0.75].sum()
    starts = 0.5 + 0.5 * np.random.default_rng(0).random(2000)
    ys, _ = InducedMap(MapSystem.lsv(0.25)).orbit(starts, 600)
    freq = np.mean(ys[:, 100:] < 0.75)
    assert mass == pytest.approx(freq, abs=0.005)


def test_induced_sigma_matches_birkhoff_variance(gm025):
    sigma, mean_v, dec = induced_sigma(gm025, cos(2))
    assert dec.residual < 1e-8
    sampler = OrbitSampler(MapSystem.lsv(0.25), burn_in=10_000, seed=1)
    orbits = sampler.orbits(20_000, 2000)
    vals = np.cos(4 * np.pi * orbits)
    assert vals.mean() == pytest.approx(mean_v[0], abs=0.002)
    s = (vals - mean_v).sum(axis=1)
    mc = s.var() / 2000
    # the Monte Carlo standard error is about 1 percent
    assert sigma[0, 0] == pytest.approx(mc, rel=0.03)


def test_flow_decomposition_identity():
    flow = canonical_flow()
    fd = flow_decomposition(flow, canonical_observable())
    rng = np.random.default_rng(3)
    y = rng.random(2000)
    u = rng.random(2000) * flow.roof(y)
    fy, fu = fd.time_one_map(y, u)
    defect = fd.psi(y, u) - fd.m(y, u) - fd.chi(fy, fu) + fd.chi(y, u)
    assert np.max(np.abs(defect)) < 1e-10
    assert fd.base.residual < 1e-8
    low = u < flow.roof(y) - 1.0
    assert np.all(fd.m(y, u)[low] == 0.0)


def test_flow_sigma_against_time_integrals():
    from wiprates.pathspace import flow_paths
    from wiprates.suspension import sample_flow_starts

    flow = canonical_flow()
    fd = flow_decomposition(flow, canonical_observable())
    sampler = OrbitSampler(MapSystem.doubling(), seed=4)
    n = 400.0
    orbits, heights = sample_flow_starts(flow, sampler, 4000, 420)
    w = flow_paths(flow, canonical_observable(), orbits, heights, n, 2)
    mc = w[:, -1, 0].var()
    # relative standard error of a variance from 4000 samples is about 2.2 percent
    assert fd.sigma[0, 0] == pytest.approx(mc, rel=0.08)


def test_flow_decomposition_needs_doubling_base():
    from wiprates.suspension import RoofFunction, SuspensionFlow

    flow = SuspensionFlow(MapSystem.lsv(0.2), RoofFunction.affine(1.0))
    with pytest.raises(ContractError):
        flow_decomposition(flow, canonical_observable())
