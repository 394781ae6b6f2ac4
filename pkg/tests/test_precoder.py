import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsma_uav import qcqp
from rsma_uav.precoder import (_Layout, InitStrategy, PrecoderOptParams, Scheme, awmse, build_p5,
                               initial_precoder, link_equalizers, link_mmse, mmse_equalizers, mse,
                               noma_links, noma_order, optimal_weights, optimize, rsma_links,
                               sdma_links, zeta_quadratic)
from rsma_uav.signal_model import common_rate_cap, common_rates, private_rates, sic_chain_rates

from conftest import random_channels, random_precoder

seeds = st.integers(0, 2 ** 32 - 1)
dims = st.tuples(st.integers(1, 4), st.integers(1, 4))


def zeta_at_mmse(H, P, sigma2, links):
    """AWMSE of every link evaluated through the plain MSE expression."""
    e = link_equalizers(H, P, sigma2, links)
    eps = np.array([
        mse(H[l.decoder], P[:, l.stream], e[i],
            np.abs(H[l.decoder].conj() @ P[:, [l.stream, *l.interferers]]) @
            np.abs(H[l.decoder].conj() @ P[:, [l.stream, *l.interferers]]) + sigma2)
        for i, l in enumerate(links)])
    return awmse(eps, 1.0 / eps)


@given(seeds, dims, st.floats(0.05, 5.0))
def test_rate_wmmse_identity(seed, kn, sigma2):
    k, n_t = kn
    rng = np.random.default_rng(seed)
    H, P = random_channels(rng, k, n_t), random_precoder(rng, n_t, k, 10.0)
    links = rsma_links(k)
    rates = np.concatenate([common_rates(H, P, sigma2), private_rates(H, P, sigma2)])
    np.testing.assert_allclose(zeta_at_mmse(H, P, sigma2, links), 1.0 - rates, rtol=0, atol=1e-9)


@given(seeds, dims)
def test_mmse_equalizer_is_optimal(seed, kn):
    k, n_t = kn
    rng = np.random.default_rng(seed)
    H, P = random_channels(rng, k, n_t), random_precoder(rng, n_t, k, 4.0)
    h = H[0]
    e_c, e_p = mmse_equalizers(h, P, 1.0, 1)
    g = np.abs(h.conj() @ P) ** 2
    t_c, t_p = g.sum() + 1.0, g[1:].sum() + 1.0
    best_c, best_p = mse(h, P[:, 0], e_c, t_c), mse(h, P[:, 1], e_p, t_p)
    for _ in range(100):
        d = 0.1 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        assert mse(h, P[:, 0], e_c + d[0], t_c) >= best_c
        assert mse(h, P[:, 1], e_p + d[1], t_p) >= best_p


@given(seeds, dims)
def test_block_bound_majorizes_one_minus_rate(seed, kn):
    # built at P0, the link bound is tight there and above 1 - R at any other P
    k, n_t = kn
    rng = np.random.default_rng(seed)
    H, P0 = random_channels(rng, k, n_t), random_precoder(rng, n_t, k, 5.0)
    links = rsma_links(k)
    u = optimal_weights(link_mmse(H, P0, 1.0, links))
    e = link_equalizers(H, P0, 1.0, links)
    layout = _Layout(n_t, range(k + 1), 0, 1.0)
    P1 = random_precoder(rng, n_t, k, rng.uniform(0.1, 10.0))
    r0 = np.concatenate([common_rates(H, P0, 1.0), private_rates(H, P0, 1.0)])
    r1 = np.concatenate([common_rates(H, P1, 1.0), private_rates(H, P1, 1.0)])
    for i, l in enumerate(links):
        z = zeta_quadratic(layout, H[l.decoder], l, u[i], e[i], 1.0)
        assert abs(z(layout.lower(P0)) - (1.0 - r0[i])) <= 1e-9
        assert z(layout.lower(P1)) >= 1.0 - r1[i] - 1e-9


def test_link_mmse_matches_sinr():
    rng = np.random.default_rng(3)
    H, P = random_channels(rng, 3, 2), random_precoder(rng, 2, 3, 5.0)
    eps = link_mmse(H, P, 0.5, sdma_links(3))
    np.testing.assert_allclose(np.log2(1.0 / eps), private_rates(H, P, 0.5), atol=1e-12)


def test_optimal_weights_reject_bad_mse():
    with pytest.raises(FloatingPointError):
        optimal_weights([0.5, 0.0])


def test_p5_is_convex_qcqp():
    rng = np.random.default_rng(4)
    H, P = random_channels(rng, 3, 3), random_precoder(rng, 3, 3, 10.0)
    links = rsma_links(3)
    u = optimal_weights(link_mmse(H, P, 1.0, links))
    e = link_equalizers(H, P, 1.0, links)
    problem, _ = build_p5(H, u, e, np.ones(3), 10.0, 1.0)
    assert qcqp.validate(problem) == []


def test_matched_filter_init_shares():
    rng = np.random.default_rng(5)
    H = random_channels(rng, 3, 2)
    P = initial_precoder(H, 10.0, Scheme.RSMA)
    powers = np.linalg.norm(P, axis=0) ** 2
    np.testing.assert_allclose(powers, [1.0, 3.0, 3.0, 3.0], atol=1e-12)
    for k in range(3):
        cos = abs(np.vdot(H[k], P[:, k + 1])) / (np.linalg.norm(H[k]) * np.linalg.norm(P[:, k + 1]))
        assert cos == pytest.approx(1.0, abs=1e-12)
    sdma = initial_precoder(H, 10.0, Scheme.SDMA)
    assert np.all(sdma[:, 0] == 0) and np.linalg.norm(sdma) ** 2 == pytest.approx(10.0)


def test_random_init_is_seeded():
    H = random_channels(np.random.default_rng(6), 2, 2)
    a = initial_precoder(H, 4.0, Scheme.RSMA, InitStrategy.RANDOM_SEEDED, np.random.default_rng(1))
    b = initial_precoder(H, 4.0, Scheme.RSMA, InitStrategy.RANDOM_SEEDED, np.random.default_rng(1))
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) ** 2 == pytest.approx(4.0)


def test_noma_order_weakest_first():
    H = np.array([[2.0, 0], [0.5, 0.5], [3.0, 1.0]])
    assert noma_order(H) == [1, 0, 2]
    links = noma_links([1, 0, 2])
    assert [(l.decoder, l.stream) for l in links][:3] == [(1, 2), (0, 2), (2, 2)]


def test_sdma_orthogonal_waterfilling_oracle():
    # parallel channels with gains 1 and 4: water level 5.625, rate log2(5.625 * 22.5)
    H = np.diag([1.0, 2.0]).astype(complex)
    res = optimize(H, Scheme.SDMA, 10.0, 1.0, np.ones(2), PrecoderOptParams(epsilon=1e-9))
    assert res.wsr == pytest.approx(6.9837061926593496, abs=1e-5)


def test_noma_degraded_weighted_oracle():
    # single antenna, gains 1 (weak) and 4 (strong), weights (2, 1), P = 10:
    # maximize 2 log2(11 / (p + 1)) + log2(1 + 4 p) -> p_strong = 0.5
    H = np.array([[1.0], [2.0]], dtype=complex)
    res = optimize(H, Scheme.NOMA, 10.0, 1.0, np.array([2.0, 1.0]), PrecoderOptParams(epsilon=1e-9))
    assert res.order == [0, 1]
    assert res.wsr == pytest.approx(7.3339007365534385, abs=1e-5)
    powers = np.abs(res.precoder[0]) ** 2
    assert powers[2] == pytest.approx(0.5, abs=1e-3)


def test_single_user_schemes_coincide():
    # K = 1: every scheme reduces to matched filtering, log2(1 + P ||h||^2 / sigma2)
    h = np.array([[1.0, 2.0j]])
    for scheme in Scheme:
        res = optimize(h, scheme, 10.0, 1.0, np.ones(1), PrecoderOptParams(epsilon=1e-9))
        assert res.wsr == pytest.approx(5.672425341971495, abs=1e-5), scheme


@pytest.mark.parametrize("scheme", list(Scheme))
def test_trace_monotone_and_power_feasible(scheme):
    rng = np.random.default_rng(11)
    for _ in range(5):
        H = random_channels(rng, 3, 2)
        res = optimize(H, scheme, 10.0, 1.0, rng.uniform(0.5, 2.0, 3))
        assert res.status == "converged"
        assert res.trace.is_monotone(1e-6)
        assert np.linalg.norm(res.precoder) ** 2 <= 10.0 + 1e-6


def test_common_rate_consistency():
    rng = np.random.default_rng(12)
    for _ in range(5):
        H = random_channels(rng, 3, 3)
        res = optimize(H, Scheme.RSMA, 10.0, 1.0, np.ones(3))
        assert res.split.sum() <= common_rate_cap(H, res.precoder, 1.0) + 1e-6
        assert np.all(res.split >= 0)


def test_noma_rates_match_sic_chain():
    rng = np.random.default_rng(13)
    H = random_channels(rng, 3, 2)
    res = optimize(H, Scheme.NOMA, 10.0, 1.0, np.ones(3))
    np.testing.assert_allclose(res.rates, sic_chain_rates(H, res.precoder, res.order, 1.0), atol=1e-12)


def test_rsma_from_sdma_solution_never_worse():
    # SDMA is RSMA with a silent common stream; a warm start there can only climb
    rng = np.random.default_rng(14)
    for _ in range(8):
        H = random_channels(rng, 2, 2)
        w = rng.uniform(0.5, 2.0, 2)
        sdma = optimize(H, Scheme.SDMA, 10.0, 1.0, w)
        rsma = optimize(H, Scheme.RSMA, 10.0, 1.0, w, P_init=sdma.precoder, split_init=np.zeros(2))
        assert rsma.wsr >= sdma.wsr - 1e-6


def test_rsma_from_two_user_noma_solution_never_worse():
    # two-user NOMA is RSMA whose common stream carries the first-decoded user's message
    rng = np.random.default_rng(15)
    for _ in range(8):
        H = random_channels(rng, 2, 2)
        w = rng.uniform(0.5, 2.0, 2)
        noma = optimize(H, Scheme.NOMA, 10.0, 1.0, w)
        first, last = noma.order
        P = np.zeros_like(noma.precoder)
        P[:, 0] = noma.precoder[:, first + 1]
        P[:, last + 1] = noma.precoder[:, last + 1]
        split = np.zeros(2)
        split[first] = noma.rates[first]
        start = float(w @ (split + private_rates(H, P, 1.0)))
        assert start >= noma.wsr - 1e-9
        rsma = optimize(H, Scheme.RSMA, 10.0, 1.0, w, P_init=P, split_init=split)
        assert rsma.wsr >= noma.wsr - 1e-6


@pytest.mark.parametrize("c", [0.1, 7.0])
def test_weight_scaling_invariance(c):
    rng = np.random.default_rng(15)
    H = random_channels(rng, 2, 2)
    w = np.array([1.0, 1.5])
    a = optimize(H, Scheme.RSMA, 10.0, 1.0, w)
    b = optimize(H, Scheme.RSMA, 10.0, 1.0, c * w)
    assert b.wsr / a.wsr == pytest.approx(c, abs=1e-4)
    assert np.linalg.norm(a.precoder - b.precoder) <= 1e-3
    assert np.linalg.norm(a.split - b.split) <= 1e-3


def test_qos_thresholds_respected():
    rng = np.random.default_rng(16)
    H = random_channels(rng, 2, 2)
    thr = np.array([0.5, 0.5])
    res = optimize(H, Scheme.RSMA, 10.0, 1.0, np.array([1.0, 0.1]), rate_thresholds=thr)
    assert np.all(res.rates >= thr - 1e-6)


def test_zero_power_short_circuits():
    res = optimize(np.ones((2, 2)), Scheme.RSMA, 0.0, 1.0, np.ones(2))
    assert res.wsr == 0.0 and res.status == "converged"
