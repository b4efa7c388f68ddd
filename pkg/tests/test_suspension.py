import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wiprates.dynsys import ContractError, InducedMap, MapSystem, OrbitSampler, step
from wiprates.suspension import (
    FlowObservable,
    RoofFunction,
    SuspensionFlow,
    cumulative_integrals,
    flow_integral,
    flow_point,
    induced_observable,
    induced_roof,
    lap_number,
    observable_mean,
    sample_flow_starts,
)
from wiprates.suspension import testbed_flow as canonical_flow
from wiprates.suspension import testbed_observable as canonical_observable

LSV_FLOW = SuspensionFlow(MapSystem.lsv(0.3), RoofFunction.affine(1.0, 0.7))


def naive_laps(flow, x, u, t):
    remaining, laps = t + u, 0
    while remaining >= flow.roof(x):
        remaining -= float(flow.roof(x))
        x = step(flow.base, x)
        laps += 1
    return laps


def test_before_first_crossing():
    flow = canonical_flow()
    assert lap_number(flow, (0.4, 0.2), 0.9) == 0  # t + u = 1.1 < r(0.4) = 1.2
    assert lap_number(flow, (0.4, 0.2), 1.0) == 1  # lands exactly on the roof


def test_constant_roof_laps():
    c = 1.7
    flow = SuspensionFlow(MapSystem.lsv(0.2), RoofFunction.affine(c))
    assert lap_number(flow, (0.3, 0.0), 3.5 * c) == 3


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0.0, 1.0),
    h=st.floats(0.0, 0.999),
    t=st.floats(0.0, 30.0),
)
def test_lap_number_matches_repeated_subtraction(x, h, t):
    flow = LSV_FLOW
    u = h * float(flow.roof(x))
    n = lap_number(flow, (x, u), t)
    assert n == naive_laps(flow, x, u, t)
    # defining inequality r_N <= t + u < r_{N+1}
    sums, y = [0.0], x
    for _ in range(n + 1):
        sums.append(sums[-1] + float(flow.roof(y)))
        y = step(flow.base, y)
    assert sums[n] <= t + u < sums[n + 1]


def test_flow_point_identity_and_identification():
    flow = canonical_flow()
    assert flow_point(flow, (0.3, 0.4), 0.0) == (0.3, 0.4)
    x = 0.3
    assert flow_point(flow, (x, 0.0), float(flow.roof(x))) == (step(flow.base, x), 0.0)


def test_flow_semigroup():
    flow = LSV_FLOW
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10_000):
        x = rng.random()
        u = rng.random() * float(flow.roof(x))
        t, s = 5 * rng.random(), 5 * rng.random()
        a = flow_point(flow, flow_point(flow, (x, u), t), s)
        b = flow_point(flow, (x, u), t + s)
        worst = max(worst, abs(a[0] - b[0]), abs(a[1] - b[1]))
    assert worst < 1e-10


@pytest.mark.parametrize("bad", [(0.5, -0.1), (0.5, 1.25), (1.5, 0.0)])
def test_start_contract(bad):
    with pytest.raises(ContractError):
        lap_number(canonical_flow(), bad, 1.0)


def test_roof_must_be_at_least_one():
    with pytest.raises(ContractError):
        RoofFunction.affine(0.9, 0.5)
    with pytest.raises(ContractError):
        RoofFunction.tabulated([1.0, 0.5, 2.0])
    r = RoofFunction.tabulated([1.0, 3.0])
    assert r(0.5) == 2.0 and r.r_min == 1.0 and r.r_max == 3.0


def test_constant_observable_integrates_to_time():
    ones = FlowObservable(lambda x, u: np.ones(x.shape + (2,)), dim=2)
    out = flow_integral(LSV_FLOW, ones, (0.37, 0.2), 12.345)
    assert np.allclose(out, 12.345, atol=1e-12, rtol=0)


def test_unit_roof_reduces_to_birkhoff_sum():
    flow = SuspensionFlow(MapSystem.lsv(0.25), RoofFunction.affine(1.0))
    v = FlowObservable(lambda x, u: np.cos(3 * x) * np.exp(u))
    x0, n = 0.61, 40
    orbit = [x0]
    for _ in range(n + 2):
        orbit.append(step(flow.base, orbit[-1]))
    orbit = np.array(orbit)
    vprime = np.cos(3 * orbit[:n]) * (np.e - 1.0)
    got = flow_integral(flow, v, (x0, 0.0), float(n), orbit=orbit)[0]
    assert got == pytest.approx(vprime.sum(), abs=1e-8)


def test_quadrature_converges_at_least_quadratically():
    v = FlowObservable(lambda x, u: np.sin(3 * u + x) * np.cos(2 * np.pi * x))
    flow = LSV_FLOW
    vals = [flow_integral(flow, v, (0.3, 0.1), 20.0, dt=dt)[0] for dt in (0.5, 0.25, 0.125)]
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    assert d2 < d1 / 3.5


def test_height_profile_with_zero_mean_gives_zero_lap_integral():
    flow = LSV_FLOW
    v = FlowObservable(lambda x, u: np.cos(2 * np.pi * u / flow.roof(x)))
    x = np.linspace(0, 1, 101)
    assert np.max(np.abs(induced_observable(flow, v, x))) < 1e-8


def test_testbed_lap_integral_closed_form():
    x = np.linspace(0, 1, 257)
    got = induced_observable(canonical_flow(), canonical_observable(), x)[:, 0]
    assert np.allclose(got, np.cos(2 * np.pi * x) * (1 + x / 2), atol=1e-12)


def test_testbed_mean_zero_certificate():
    mean = observable_mean(canonical_flow(), canonical_observable())
    assert abs(mean[0]) < 1e-8


def test_cumulative_integrals_agree_with_single_integrals():
    flow = canonical_flow()
    v = FlowObservable(lambda x, u: np.cos(2 * np.pi * x) + 0.3 * u)
    sampler = OrbitSampler(MapSystem.doubling(), seed=9)
    orbits, heights = sample_flow_starts(flow, sampler, 3, 80)
    times = np.array([0.0, 0.5, 7.25, 33.0, 60.0])
    batch = cumulative_integrals(flow, v, orbits, heights, times)
    for w in range(3):
        for i, t in enumerate(times):
            single = flow_integral(flow, v, (orbits[w, 0], heights[w]), t, orbit=orbits[w])
            assert batch[w, i] == pytest.approx(single, abs=1e-12)


def test_short_orbit_is_rejected():
    flow = canonical_flow()
    with pytest.raises(ContractError):
        cumulative_integrals(flow, canonical_observable(), np.full((1, 3), 0.2), np.zeros(1), np.array([10.0]))


def test_flow_starts_follow_roof_weighting():
    flow = canonical_flow()
    orbits, heights = sample_flow_starts(flow, OrbitSampler(MapSystem.doubling(), seed=1), 40_000, 2)
    x = orbits[:, 0]
    assert np.all((heights >= 0) & (heights < flow.roof(x)))
    # density (1 + x/2) / 1.25 has mean (1/2 + 1/6) / 1.25
    assert abs(x.mean() - (2 / 3) / 1.25) < 0.005
    assert abs((heights / flow.roof(x)).mean() - 0.5) < 0.005


def test_induced_roof_bounded_by_roof_times_return():
    induced = InducedMap(LSV_FLOW.base)
    y = 0.5 + 0.5 * np.random.default_rng(2).random(5000) + 1e-12
    phi = induced_roof(LSV_FLOW, induced, y)
    tau, _ = induced.first_return(y)
    assert np.all(phi <= LSV_FLOW.roof.r_max * tau + 1e-12)
    assert np.all(phi >= tau)


def test_integral_stays_close_to_lap_sum():
    flow = canonical_flow()
    v = canonical_observable()
    sampler = OrbitSampler(MapSystem.doubling(), seed=6)
    orbit = sampler.orbits(1, 12_000)[0]
    vx = induced_observable(flow, v, orbit)[:, 0]
    bound = 2 * 1.0 * flow.roof.r_max
    for n in (10.0, 100.0, 1000.0, 10_000.0):
        integral = flow_integral(flow, v, (orbit[0], 0.0), n, orbit=orbit)[0]
        roofs = np.cumsum(flow.roof(orbit))
        laps = int(np.searchsorted(roofs, n, side="right"))
        assert abs(integral - vx[:laps].sum()) <= bound
