import math

import numpy as np
import pytest

from cellfree.channel import Network, ScenarioConfig, TopologyConfig
from cellfree.clustering import ClusterConfig
from cellfree.combining import combiner_gains
from cellfree.montecarlo import (
    ExponentialPlant,
    MCConfig,
    NetworkSampler,
    Policy,
    estimate_outage,
    estimate_rate,
    sample_sinr,
    sinr_histogram,
)
from cellfree.sinr import dynamic_sinr, sic_order_users, sic_sinr
from cellfree.units import dbm_to_watt

P20 = float(dbm_to_watt(20.0))


def scenario(m, k, power_dbm=20.0):
    return ScenarioConfig(TopologyConfig(m, k), pilot_power=P20, user_power=float(dbm_to_watt(power_dbm)))


def test_threshold_limits():
    s = NetworkSampler(scenario(4, 2), 0, Policy())
    est = estimate_outage(s, [0.0, math.inf], MCConfig(runs=2000, batch_size=500))
    assert est[0].estimate == 0.0 and est[1].estimate == 1.0
    assert est[0].stderr == 0.0 and est[0].runs == 2000


def test_exponential_plant_unbiased():
    plant = ExponentialPlant(mean=2.0)
    for t in (0.5, 2.0, 5.0):
        est = estimate_outage(plant, t, MCConfig(runs=200_000, seed=3, batch_size=50_000))
        assert abs(est.estimate - (1 - math.exp(-t / 2.0))) < 3 * est.stderr
        assert est.half_width == 3 * est.stderr


def test_standard_error_scaling():
    plant = ExponentialPlant(mean=1.0)
    small = [estimate_outage(plant, 1.0, MCConfig(runs=10_000, seed=s, batch_size=2_500)) for s in range(10)]
    large = [estimate_outage(plant, 1.0, MCConfig(runs=40_000, seed=100 + s, batch_size=10_000)) for s in range(10)]
    ratio = np.mean([e.stderr for e in small]) / np.mean([e.stderr for e in large])
    assert ratio == pytest.approx(2.0, rel=0.2)
    # the empirical spread needs more repetitions to be resolved to 20%
    small = [estimate_outage(plant, 1.0, MCConfig(runs=1_000, seed=1000 + s)).estimate for s in range(200)]
    large = [estimate_outage(plant, 1.0, MCConfig(runs=4_000, seed=2000 + s)).estimate for s in range(200)]
    assert np.std(small, ddof=1) / np.std(large, ddof=1) == pytest.approx(2.0, rel=0.2)


def test_binomial_standard_error():
    est = estimate_outage(ExponentialPlant(), 1.0, MCConfig(runs=10_000, seed=1))
    assert est.stderr == math.sqrt(est.estimate * (1 - est.estimate) / 10_000)


@pytest.mark.parametrize("estimator", ["outage", "rate", "hist", "samples"])
def test_worker_count_invariance(estimator):
    policy = Policy(cluster=ClusterConfig((0, 0, 1, 1, 2, 2)), gain_method="wiener_hopf", sic=True)
    s = NetworkSampler(scenario(6, 3), 2, policy)

    def run(workers):
        mc = MCConfig(runs=20_000, seed=5, batch_size=4_000, workers=workers)
        if estimator == "outage":
            return [e.estimate for e in estimate_outage(s, [0.5, 2.0], mc)]
        if estimator == "rate":
            e = estimate_rate(s, mc)
            return [e.estimate, e.stderr]
        if estimator == "hist":
            return sinr_histogram(s, np.logspace(-3, 12, 40), mc).tolist()
        return sample_sinr(s, mc).tolist()

    assert run(1) == run(2)


@pytest.mark.xfail(strict=True, reason="moment-matched closed form is biased beyond 3 binomial SE under "
                                       "heterogeneous path loss; see decisions ledger")
def test_agrees_with_closed_form_large_network():
    from cellfree.analytics import outage_query_static, outage_static
    from cellfree.channel import draw_realization
    sc = scenario(32, 4)
    real = draw_realization(sc, 0)
    thresholds = [0.1, 1.0, 10.0]
    est = estimate_outage(NetworkSampler(sc, 0, Policy()), thresholds, MCConfig(runs=100_000, seed=2))
    for t, e in zip(thresholds, est):
        a = outage_static(outage_query_static(real, np.ones((4, 32)), 0, t))
        assert abs(a - e.estimate) <= 3 * math.sqrt(a * (1 - a) / e.runs)


def test_histogram_counts_all_runs():
    s = NetworkSampler(scenario(4, 2), 0, Policy())
    counts = sinr_histogram(s, [0.0, 1.0, math.inf], MCConfig(runs=3_000, batch_size=1_000))
    assert counts.sum() == 3_000


def test_zero_weights_zero_rate():
    s = NetworkSampler(scenario(4, 2), 0, Policy(weights=np.zeros((2, 4))))
    assert estimate_rate(s, MCConfig(runs=1_000)).estimate == 0.0


@pytest.mark.parametrize("method,sic", [("unit", False), ("mrc", False), ("wiener_hopf", False), ("wiener_hopf", True),
                                        ("unit", True)])
def test_batched_sampler_matches_scalar_path(method, sic):
    sc = scenario(5, 3)
    cluster = ClusterConfig((0, 1, 0, 2, 1))
    w = np.array([[1.0, 0.5, 0.2], [0.3, 0.9, 0.6], [0.7, 0.7, 0.1]])
    sampler = NetworkSampler(sc, 4, Policy(w, cluster, method, sic))
    batch = sampler.sample(np.random.default_rng(0), 20)
    net = Network(sc, 4)
    _, g, gh = net.draw_channels(np.random.default_rng(0), batch=20)
    for b in range(20):
        real = net.realization(None, g[b], gh[b])
        gains = combiner_gains(real, cluster, method)
        for k in range(3):
            if sic:
                v = sic_sinr(real, cluster, w, gains, sic_order_users(real, cluster, gains), k, with_terms=False).value
            else:
                v = dynamic_sinr(real, cluster, w, gains, k, with_terms=False).value
            assert batch[b, k] == pytest.approx(v, rel=1e-7)


def test_sic_improves_rate():
    cluster = ClusterConfig((0, 0, 0, 1, 1, 1, 2, 2))
    mc = MCConfig(runs=20_000, seed=9, batch_size=5_000)
    rates = {}
    for sic in (False, True):
        rates[sic] = estimate_rate(NetworkSampler(scenario(8, 3), 1, Policy(None, cluster, "wiener_hopf", sic)), mc)
    assert rates[True].estimate > rates[False].estimate


def test_rate_monotone_in_power():
    mc = MCConfig(runs=20_000, seed=2, batch_size=5_000)
    vals = [estimate_rate(NetworkSampler(scenario(6, 3, p), 3, Policy()), mc).estimate for p in (20.0, 37.0, 50.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_config_validation():
    with pytest.raises(ValueError):
        MCConfig(runs=0)
    with pytest.raises(ValueError):
        MCConfig(batch_size=0)
    with pytest.raises(ValueError):
        MCConfig(scenario="downlink")
    assert MCConfig(runs=25, batch_size=10).batches() == [(0, 10), (1, 10), (2, 5)]


def test_policy_shape_checked():
    with pytest.raises(ValueError):
        Policy(weights=np.ones((2, 3))).resolve(4, 2)
