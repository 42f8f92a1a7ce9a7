import math

import numpy as np
import pytest
from scipy import stats

from cellfree import rng as rngmod
from cellfree.channel import (
    ChannelError,
    FadingConfig,
    Network,
    PilotBook,
    ScenarioConfig,
    TopologyConfig,
    draw_realization,
    estimation_constants,
    export_realization,
    generate_topology,
    import_realization,
    mmse_estimate,
    orthonormal_pilots,
    random_pilots,
    sample_disc,
    sample_fading,
)
from cellfree.units import DISC_RADIUS_1KM2, dbm_to_watt, noise_variance


def test_fixed_coordinates_distance():
    cfg = TopologyConfig(1, 1, placement="fixed_coordinates", ap_coordinates=((0.0, 0.0),),
                         user_coordinates=((3.0, 4.0),))
    assert generate_topology(cfg, 0).distances[0, 0] == pytest.approx(5.0, abs=1e-15)


def test_topology_deterministic():
    cfg = TopologyConfig(6, 3)
    a = generate_topology(cfg, 42)
    b = generate_topology(cfg, 42)
    assert np.array_equal(a.ap_xy, b.ap_xy) and np.array_equal(a.user_xy, b.user_xy)
    assert not np.array_equal(a.user_xy, generate_topology(cfg, 43).user_xy)


def test_distances_positive():
    topo = generate_topology(TopologyConfig(40, 40, coverage_radius=5.0), 3)
    assert np.all(topo.distances >= 1.0)


def test_disc_mean_radius():
    pts = sample_disc(100_000, 18.0, np.random.default_rng(5))
    r = np.hypot(pts[:, 0], pts[:, 1])
    # mean 2R/3, sd R/sqrt(18)
    se = 18.0 / math.sqrt(18.0) / math.sqrt(len(r))
    assert abs(r.mean() - 12.0) < 4 * se
    assert r.max() <= 18.0


def test_default_radius_covers_one_km2():
    assert math.pi * DISC_RADIUS_1KM2 ** 2 == pytest.approx(1e6, rel=1e-3)
    assert TopologyConfig(1, 1).coverage_radius == pytest.approx(564.0)


@pytest.mark.parametrize("kwargs", [dict(num_aps=0, num_users=1), dict(num_aps=1, num_users=0),
                                    dict(num_aps=1, num_users=1, path_loss_exponent=1.5),
                                    dict(num_aps=1, num_users=1, coverage_radius=0.0)])
def test_topology_validation(kwargs):
    with pytest.raises(ChannelError):
        TopologyConfig(**kwargs)


def test_rayleigh_mean():
    h = sample_fading(FadingConfig(1.0, 1.0), 1, 1, np.random.default_rng(1), batch=1_000_000)
    p = np.abs(h[:, 0, 0]) ** 2
    assert abs(p.mean() - 1.0) < 3 * p.std() / math.sqrt(len(p))


def test_nakagami_variance():
    h = sample_fading(FadingConfig(2.0, 2.0), 1, 1, np.random.default_rng(2), batch=1_000_000)
    p = np.abs(h[:, 0, 0]) ** 2
    # var of the sample variance for Gamma(k, theta): (mu4 - sigma^4) / n
    k, theta = 2.0, 1.0
    mu4 = 3 * k * (k + 2) * theta ** 4
    se = math.sqrt((mu4 - (k * theta ** 2) ** 2) / len(p))
    assert abs(p.var() - 2.0) < 3 * se


def test_phase_uniform():
    h = sample_fading(FadingConfig(), 1, 1, np.random.default_rng(3), batch=100_000)
    ph = np.mod(np.angle(h[:, 0, 0]), 2 * np.pi) / (2 * np.pi)
    assert stats.kstest(ph, "uniform").pvalue > 1e-3


def test_channel_power_distribution():
    net = Network(ScenarioConfig(TopologyConfig(3, 2), fading=FadingConfig(1.7, 0.8)), 4)
    _, g, _ = net.draw_channels(rngmod.make_rng(4, rngmod.FADING, 0), batch=100_000)
    for m, k in [(0, 0), (2, 1)]:
        rate = 1.7 / 0.8 * net.distances[m, k] ** (2 * net.kappa)
        ks = stats.kstest(np.abs(g[:, m, k]) ** 2, "gamma", args=(1.7, 0, 1.0 / rate)).statistic
        assert ks < 0.01


def test_realization_bit_identical():
    sc = ScenarioConfig(TopologyConfig(4, 2))
    a = draw_realization(sc, 9, 3)
    b = draw_realization(sc, 9, 3)
    assert np.array_equal(a.true_channels, b.true_channels)
    assert np.array_equal(a.estimated_channels, b.estimated_channels)


def test_fading_validation():
    with pytest.raises(ChannelError):
        FadingConfig(0.0, 1.0)


def test_pilot_book_unit_norm():
    book = orthonormal_pilots(3, 4)
    assert np.allclose(np.sum(np.abs(book.pilots) ** 2, axis=-1), 1.0)
    ov = book.overlaps()
    assert np.allclose(ov[0], np.eye(4), atol=1e-12)
    with pytest.raises(ChannelError):
        PilotBook(book.pilots * 2.0, book.pilot_power)
    with pytest.raises(ChannelError):
        orthonormal_pilots(3, 4, pilot_length=3)


def _eq3_oracle(g, distances, kappa, pilots, rho_c, eta):
    """Literal evaluation of the estimate: E (sqrt(tau rho_k) g_k
    + sum_{l!=k} sqrt(tau rho_k) |phi_k^H phi_l| g_l + |phi_k^H eta|)."""
    m_aps, k_users = g.shape
    tau = pilots.pilot_length
    rho = pilots.pilot_power
    out = np.zeros_like(g)
    for m in range(m_aps):
        for k in range(k_users):
            den = 1.0
            for l in range(k_users):
                if l != k:
                    ov = abs(np.vdot(pilots.pilots[m, k], pilots.pilots[m, l]))
                    den += rho_c * rho[k] * distances[m, l] ** (-kappa) * ov ** 2
            e = math.sqrt(tau * rho[k]) * distances[m, k] ** (-kappa) / den
            val = math.sqrt(tau * rho[k]) * g[m, k]
            for l in range(k_users):
                if l != k:
                    val += math.sqrt(tau * rho[k]) * abs(np.vdot(pilots.pilots[m, k], pilots.pilots[m, l])) * g[m, l]
            val += abs(np.vdot(pilots.pilots[m, k], eta[m]))
            out[m, k] = e * val
    return out


def _complex_gaussian(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_orthonormal_noiseless_estimate_is_scaled_channel():
    rng = np.random.default_rng(7)
    d = rng.uniform(10, 100, (3, 2))
    book = orthonormal_pilots(3, 2, pilot_power=0.1)
    e = estimation_constants(d, 2.0, book)
    g = _complex_gaussian(rng, (3, 2)) * d ** -2.0
    est = mmse_estimate(g, e, book, np.zeros(3))
    assert np.allclose(est, e * math.sqrt(2 * 0.1) * g, rtol=1e-14, atol=0)


def test_shared_pilot_contamination_coefficient():
    rng = np.random.default_rng(8)
    d = rng.uniform(10, 100, (2, 2))
    row = np.exp(2j * np.pi * rng.random(3)) / math.sqrt(3)
    book = PilotBook(np.broadcast_to(row, (2, 2, 3)).copy(), np.array([0.1, 0.2]))
    e = estimation_constants(d, 2.0, book)
    g = _complex_gaussian(rng, (2, 2)) * d ** -2.0
    est = mmse_estimate(g, e, book, np.zeros(2))
    ref = _eq3_oracle(g, d, 2.0, book, 3.0, np.zeros((2, 3)))
    assert np.allclose(est, ref, rtol=1e-13, atol=0)
    # user 0's estimate carries g_1 with weight E_00 sqrt(tau rho_0)
    coef = e[0, 0] * math.sqrt(3 * 0.1)
    assert est[0, 0] - coef * g[0, 0] == pytest.approx(coef * g[0, 1], rel=1e-12)


def test_noisy_random_pilot_estimate_matches_oracle():
    d = np.random.default_rng(9).uniform(10, 100, (3, 3))
    book = random_pilots(3, 3, 2, np.random.default_rng(10))
    e = estimation_constants(d, 2.0, book)
    g = _complex_gaussian(np.random.default_rng(11), (3, 3)) * d ** -2.0
    var = np.full(3, 1e-6)
    est = mmse_estimate(g, e, book, var, np.random.default_rng(12))
    # replay the noise stream used inside the estimator
    r = np.random.default_rng(12)
    sd = np.sqrt(var / 4.0)[:, None]
    eta = sd * (r.standard_normal((3, 2)) + 1j * r.standard_normal((3, 2)))
    assert np.allclose(est, _eq3_oracle(g, d, 2.0, book, 2.0, eta), rtol=1e-12, atol=0)


def test_estimate_linear_in_channel():
    rng = np.random.default_rng(13)
    d = rng.uniform(10, 100, (4, 3))
    book = orthonormal_pilots(4, 3)
    e = estimation_constants(d, 2.0, book)
    for _ in range(20):
        g1, g2 = _complex_gaussian(rng, (4, 3)), _complex_gaussian(rng, (4, 3))
        a, b = rng.normal(size=2)
        lhs = mmse_estimate(a * g1 + b * g2, e, book, np.zeros(4))
        rhs = a * mmse_estimate(g1, e, book, np.zeros(4)) + b * mmse_estimate(g2, e, book, np.zeros(4))
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-15)


def test_ideal_csi_regime():
    real = draw_realization(ScenarioConfig(TopologyConfig(4, 2)), 1, 0)
    assert np.array_equal(real.estimated_channels, real.true_channels)
    assert np.allclose(real.est_amplitude, 1.0)


def test_ideal_csi_needs_orthonormal_noiseless():
    with pytest.raises(ChannelError):
        ScenarioConfig(TopologyConfig(2, 2), pilot_kind="random")
    with pytest.raises(ChannelError):
        ScenarioConfig(TopologyConfig(2, 2), pilot_noise=True)


def test_power_bounds():
    with pytest.raises(ChannelError):
        ScenarioConfig(TopologyConfig(2, 2), user_power=0.2, max_power=0.1)
    real = draw_realization(ScenarioConfig(TopologyConfig(2, 2)), 0)
    with pytest.raises(ChannelError):
        real.with_powers(1.0)
    assert np.all(real.user_powers == pytest.approx(float(dbm_to_watt(20.0))))


def test_noise_variance_one_hertz():
    assert noise_variance(-169.0) == pytest.approx(2 * 10 ** (-16.9) * 1e-3, rel=1e-12)


def test_export_import_round_trip(tmp_path):
    sc = ScenarioConfig(TopologyConfig(3, 2), pilot_kind="random", ideal_csi=False, pilot_noise=True)
    real = draw_realization(sc, 5, 1)
    path = tmp_path / "real.csv"
    export_realization(real, path)
    header = [line for line in path.read_text().splitlines() if not line.startswith("#")][0]
    assert header.split(",")[:7] == ["m", "k", "L", "re_g", "im_g", "re_ghat", "im_ghat"]
    back = import_realization(path)
    assert np.array_equal(back.true_channels, real.true_channels)
    assert np.array_equal(back.estimated_channels, real.estimated_channels)
    assert np.array_equal(back.distances, real.distances)
    assert np.array_equal(back.pilot_overlap, real.pilot_overlap)
