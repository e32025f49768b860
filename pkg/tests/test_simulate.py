"""Tests for the two samplers and the rate-integral inverter.

The discrete sampler skips empty bins by geometric jumps; its law is
checked here against a literal bin-by-bin reference loop (same chain,
written naively) with a two-sample KS statistic at the 1% level, and
against the analytic interval distribution.
"""

import math

import numpy as np
import pytest

from burstfit.model import (
    ModelParams,
    RefractoryKernel,
    refractory_eval,
    refractory_integral,
)
from burstfit.simulate import (
    EventTrain,
    SimConfig,
    discrete_intervals,
    invert_R,
    simulate_continuous,
    simulate_discrete,
)
from burstfit.special import kummer_1f1

EULER_GAMMA = 0.5772156649015329

# mildly suppressive mid-range kernel used across the sampler tests
_TEST_GAMMA = (0.0, 0.0, -0.30, -0.40, -0.26, 0.0, 0.0, 0.0)


def _ks_two_sample(u: np.ndarray, v: np.ndarray) -> float:
    """Two-sample KS statistic, ties handled by right-continuous steps."""
    su, sv = np.sort(u), np.sort(v)
    grid = np.concatenate([su, sv])
    cu = np.searchsorted(su, grid, side="right") / su.size
    cv = np.searchsorted(sv, grid, side="right") / sv.size
    return float(np.max(np.abs(cu - cv)))


def _ks_crit_two_sample(n: int, m: int) -> float:
    """1% significance threshold for the two-sample statistic."""
    return 1.6276 * math.sqrt((n + m) / (n * m))


def _ks_to_cdf(sample: np.ndarray, cdf) -> float:
    """One-sample KS distance between an empirical sample and a CDF."""
    s = np.sort(sample)
    grid = np.unique(s)
    theo = cdf(grid)
    hi = np.searchsorted(s, grid, side="right") / s.size
    lo = np.searchsorted(s, grid, side="left") / s.size
    return float(max(np.max(np.abs(hi - theo)), np.max(np.abs(theo - lo))))


def _naive_chain_intervals(params: ModelParams, dt: float, n_events: int, seed) -> np.ndarray:
    """Reference sampler: the latent chain run bin by literal bin.

    Every bin tests fire = (x > y) and coin(rho r dt); firing redraws the
    pending priority x and keeps y, any other bin redraws y uniformly.
    Slow (one Python iteration per bin) but free of the geometric-jump
    machinery under test.  Events begin counting after the same 10/rho
    warm-up the production sampler uses.
    """
    rng = np.random.default_rng(seed)
    rho = params.rho
    kern = params.kernel
    if kern.n:
        total = sum(abs(g) for g in kern.gamma)
        support = max(1, math.ceil(math.log(total / 1e-15) / min(kern.alpha) / dt))
        r_lut = refractory_eval(kern, dt * np.arange(1, support + 1)).tolist()
    else:
        support, r_lut = 0, []
    warm = math.ceil(10.0 / rho / dt)
    x = rng.beta(params.a, params.b)
    y = rng.uniform()
    intervals: list[float] = []
    k = 0
    bins_done = 0
    collecting = False
    while len(intervals) < n_events:
        k += 1
        bins_done += 1
        r_k = r_lut[k - 1] if k <= support else 1.0
        if x > y and rng.uniform() < rho * r_k * dt:
            if collecting:
                intervals.append(k * dt)
            elif bins_done >= warm:
                collecting = True
            x = rng.beta(params.a, params.b)
            k = 0
        else:
            y = rng.uniform()
    return np.asarray(intervals)


# ----------------------------------------------------------------------
# EventTrain / SimConfig
# ----------------------------------------------------------------------


class TestEventTrain:
    def test_basic_properties(self):
        t = EventTrain(np.array([0, 250, 1250, 4250], dtype=np.int64))
        assert t.n_events == 4
        assert t.duration_seconds == pytest.approx(4.25)
        np.testing.assert_allclose(t.intervals_seconds(), [0.25, 1.0, 3.0])

    def test_short_trains(self):
        assert EventTrain(np.array([], dtype=np.int64)).n_events == 0
        single = EventTrain(np.array([123], dtype=np.int64))
        assert single.duration_seconds == 0.0
        assert single.intervals_seconds().size == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            EventTrain(np.array([[1, 2]]))
        with pytest.raises(ValueError):
            EventTrain(np.array([-5, 10]))
        with pytest.raises(ValueError):
            EventTrain(np.array([10, 10, 20]))
        with pytest.raises(ValueError):
            EventTrain(np.array([30, 20]))

    def test_timestamps_coerced_to_int64(self):
        t = EventTrain([1.0, 2.0, 7.0])
        assert t.timestamps_ms.dtype == np.int64


class TestSimConfig:
    def test_exactly_one_horizon(self):
        with pytest.raises(ValueError):
            SimConfig(seed=0)
        with pytest.raises(ValueError):
            SimConfig(seed=0, n_events=10, duration=5.0)
        assert SimConfig(seed=0, n_events=10).n_events == 10
        assert SimConfig(seed=0, duration=5.0).duration == 5.0

    def test_value_validation(self):
        with pytest.raises(ValueError):
            SimConfig(seed=0, dt=0.0, n_events=1)
        with pytest.raises(ValueError):
            SimConfig(seed=0, dt=-1e-3, n_events=1)
        with pytest.raises(ValueError):
            SimConfig(seed=0, n_events=0)
        with pytest.raises(ValueError):
            SimConfig(seed=0, duration=-2.0)


# ----------------------------------------------------------------------
# discrete sampler
# ----------------------------------------------------------------------


def test_bin_probability_bound_enforced():
    p = ModelParams(a=1.0, b=1.0, c=math.log(200.0))
    with pytest.raises(ValueError, match="dt too coarse"):
        simulate_discrete(p, SimConfig(seed=0, dt=1e-3, n_events=10))
    # r_max > 1 counts against the bound too
    p_excite = ModelParams(
        a=1.0, b=1.0, c=math.log(90.0), kernel=RefractoryKernel.log_spaced([1.5])
    )
    with pytest.raises(ValueError, match="dt too coarse"):
        simulate_discrete(p_excite, SimConfig(seed=0, dt=1e-3, n_events=10))


def test_discrete_rejects_infeasible_kernel():
    p = ModelParams(a=1.0, b=1.0, c=0.0, kernel=RefractoryKernel.log_spaced([-2.0]))
    with pytest.raises(ValueError, match="negative"):
        discrete_intervals(p, SimConfig(seed=0, dt=1e-3, n_events=10))


def test_discrete_determinism():
    p = ModelParams(a=0.7, b=1.0, c=math.log(5.0))
    cfg = SimConfig(seed=321, dt=1e-3, n_events=500)
    first = simulate_discrete(p, cfg)
    second = simulate_discrete(p, cfg)
    np.testing.assert_array_equal(first.timestamps_ms, second.timestamps_ms)
    other = simulate_discrete(p, SimConfig(seed=322, dt=1e-3, n_events=500))
    assert not np.array_equal(first.timestamps_ms, other.timestamps_ms)


def test_discrete_intervals_are_grid_multiples():
    p = ModelParams(a=0.7, b=1.0, c=math.log(5.0))
    iv = discrete_intervals(p, SimConfig(seed=8, dt=2e-3, n_events=800))
    assert iv.size == 799
    assert np.all(iv > 0.0)
    multiples = iv / 2e-3
    np.testing.assert_allclose(multiples, np.rint(multiples), atol=1e-9)


def test_event_count_and_duration_horizons():
    p = ModelParams(a=1.0, b=1.0, c=0.0)
    train = simulate_discrete(p, SimConfig(seed=3, dt=1e-3, n_events=50))
    assert train.n_events == 50
    by_time = simulate_discrete(p, SimConfig(seed=3, dt=1e-3, duration=300.0))
    assert 0 < by_time.n_events
    assert by_time.timestamps_ms[-1] <= 300_000


def test_tiny_duration_gives_empty_train():
    p = ModelParams(a=1.0, b=1.0, c=0.0)
    train = simulate_discrete(p, SimConfig(seed=12, dt=1e-3, duration=1e-3))
    assert train.n_events == 0
    assert train.intervals_seconds().size == 0


def test_millisecond_collisions_drop_with_warning():
    # sub-millisecond bins and a brisk rate force some same-ms pairs
    p = ModelParams(a=5.0, b=1.0, c=math.log(50.0))
    with pytest.warns(UserWarning, match="collided"):
        train = simulate_discrete(p, SimConfig(seed=7, dt=2.5e-4, n_events=2000))
    assert np.all(np.diff(train.timestamps_ms) > 0)
    assert train.n_events < 2000


def test_discrete_law_matches_naive_reference_with_kernel():
    """Geometric-jump sampler vs the literal per-bin loop, two-sample KS."""
    p = ModelParams(a=2.5, b=1.0, c=math.log(5.0), kernel=RefractoryKernel.log_spaced(_TEST_GAMMA))
    naive = _naive_chain_intervals(p, 2e-3, 3000, seed=10)
    fast = discrete_intervals(p, SimConfig(seed=11, dt=2e-3, n_events=3000))
    ks = _ks_two_sample(naive, fast)
    assert ks < _ks_crit_two_sample(3000, 3000), ks


def test_discrete_law_matches_naive_reference_no_kernel():
    p = ModelParams(a=2.5, b=1.0, c=math.log(5.0))
    naive = _naive_chain_intervals(p, 2e-3, 3000, seed=5)
    fast = discrete_intervals(p, SimConfig(seed=6, dt=2e-3, n_events=3000))
    ks = _ks_two_sample(naive, fast)
    assert ks < _ks_crit_two_sample(3000, 3000), ks


def test_discrete_long_run_matches_analytic_distribution():
    """A million-second run lands within KS 0.01 of the marginal density."""
    p = ModelParams(a=1.0, b=1.0, c=0.0)
    train = simulate_discrete(p, SimConfig(seed=42, dt=1e-3, duration=1e6))
    assert train.n_events > 50_000
    taus = train.intervals_seconds()
    ks = _ks_to_cdf(taus, lambda g: 1.0 - np.array([kummer_1f1(1.0, 2.0, -t) for t in g]))
    assert ks < 0.01, ks


# ----------------------------------------------------------------------
# continuous sampler
# ----------------------------------------------------------------------


def test_continuous_determinism_and_shape():
    p = ModelParams(a=0.61, b=1.0, c=math.log(9.3))
    first = simulate_continuous(p, 1000, seed=55)
    second = simulate_continuous(p, 1000, seed=55)
    np.testing.assert_array_equal(first, second)
    assert first.shape == (1000,)
    assert np.all(first > 0.0)
    with pytest.raises(ValueError):
        simulate_continuous(p, 0, seed=1)


def test_continuous_rejects_infeasible_kernel():
    p = ModelParams(a=1.0, b=1.0, c=0.0, kernel=RefractoryKernel.log_spaced([-2.0]))
    with pytest.raises(ValueError, match="infeasible"):
        simulate_continuous(p, 10, seed=0)


def test_continuous_matches_analytic_cdf():
    p = ModelParams(a=0.61, b=1.0, c=math.log(9.3))
    iv = simulate_continuous(p, 20_000, seed=909)
    ks = _ks_to_cdf(iv, lambda g: 1.0 - np.array([kummer_1f1(0.61, 1.61, -9.3 * t) for t in g]))
    assert ks < 1.6276 / math.sqrt(20_000), ks


def test_continuous_truncated_mean():
    """E[min(tau, 100)] for the uniform-priority unit-rate case equals
    EulerGamma + ln 100 (integral of the survival function); the sample
    must land within 3 standard errors."""
    iv = simulate_continuous(ModelParams(a=1.0, b=1.0, c=0.0), 10**6, seed=2024)
    clipped = np.minimum(iv, 100.0)
    want = EULER_GAMMA + math.log(100.0)
    se = clipped.std() / math.sqrt(clipped.size)
    assert abs(clipped.mean() - want) < 3.0 * se


def test_continuous_refractory_short_interval_deficit():
    """A -1 amplitude at 50 ms suppresses sub-10 ms intervals an order of
    magnitude below the kernel-free baseline, matching the analytic CDF."""
    kernel = RefractoryKernel.log_spaced([-1.0])
    p = ModelParams(a=1.0, b=1.0, c=0.0, kernel=kernel)
    iv = simulate_continuous(p, 50_000, seed=303)
    frac = float(np.mean(iv < 0.010))
    analytic = 1.0 - kummer_1f1(1.0, 2.0, -refractory_integral(kernel, 0.010))
    baseline = 1.0 - kummer_1f1(1.0, 2.0, -0.010)
    se = math.sqrt(analytic * (1.0 - analytic) / 50_000)
    assert frac < 0.2 * baseline
    assert abs(frac - analytic) < 3.0 * se


def test_discrete_and_continuous_samplers_agree():
    p = ModelParams(a=2.5, b=1.0, c=math.log(5.0), kernel=RefractoryKernel.log_spaced(_TEST_GAMMA))
    d = discrete_intervals(p, SimConfig(seed=100, dt=1e-3, n_events=10_000))
    c = simulate_continuous(p, 10_000, seed=101)
    ks = _ks_two_sample(d, c)
    assert ks < _ks_crit_two_sample(10_000, 10_000), ks


# ----------------------------------------------------------------------
# invert_R
# ----------------------------------------------------------------------


def test_invert_R_identity_without_kernel():
    assert invert_R(RefractoryKernel.none(), 3.7) == pytest.approx(3.7, rel=1e-12)


def test_invert_R_frozen_single_term_value():
    kernel = RefractoryKernel.log_spaced([-0.5], fastest_timescale=0.05)
    assert invert_R(kernel, 0.034196986029286058) == pytest.approx(0.05, rel=1e-9)


def test_invert_R_round_trip_and_monotonicity():
    kernel = RefractoryKernel.log_spaced(_TEST_GAMMA)
    targets = np.geomspace(1e-4, 1e5, 40)
    taus = invert_R(kernel, targets)
    np.testing.assert_allclose(
        refractory_integral(kernel, taus), targets, rtol=1e-9, atol=1e-10
    )
    assert np.all(np.diff(taus) > 0.0)


def test_invert_R_rejects_bad_targets():
    kernel = RefractoryKernel.none()
    for bad in (0.0, -1.0, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            invert_R(kernel, bad)
