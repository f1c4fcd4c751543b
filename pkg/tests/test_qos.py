import numpy as np
import pytest

from conftest import TINY_NETWORK, make_topology

from vrcorr.game import enumerate_actions
from vrcorr.network import NetworkConfig, ChannelRealization, generate_topology, sample_channel, sinr_downlink
from vrcorr.correlation import ContentParams, synthesize_overlap, max_correlations
from vrcorr.qos import (UtilityDomainError, TheoremDomainError, UserQos, downlink_delay, uplink_delay,
                        max_delay_dl, max_delay_ul, utility_dl, utility_ul, utility_total, utility_point,
                        gain_ul_rb, gain_dl_rb, gain_compute, build_period_context, evaluate_joint)

class TestDelays:
    def test_zero_load_has_no_delay(self):
        assert sum(downlink_delay(0.0, 1e6, 4e9)) == 0.0
        assert sum(uplink_delay(0.0, 1e6, 1e6)) == 0.0

    def test_downlink_delay(self):
        assert sum(downlink_delay(10e6, 10e6, 100e9 / 25)) == pytest.approx(1.0025)

    def test_uplink_delay(self):
        assert sum(uplink_delay(1e6, 2e6, 1e6)) == pytest.approx(1.5)

    def test_doubling_the_rate_halves_only_the_air_delay(self):
        air, backhaul = downlink_delay(1e6, 1e6, 4e9)
        faster_air, same_backhaul = downlink_delay(1e6, 2e6, 4e9)

        assert faster_air == pytest.approx(air / 2)
        assert same_backhaul == backhaul

    def test_zero_rate_gives_infinite_delay(self):
        assert downlink_delay(1e6, 0.0, 4e9)[0] == np.inf
        assert uplink_delay(1e4, 0.0, 1e6)[0] == np.inf

class TestUtilities:
    def test_linear_region(self):
        assert utility_dl(0.07, 0.12, 0.02) == pytest.approx(0.5)
        assert utility_ul(0.07, 0.12, 0.02) == pytest.approx(0.5)

    def test_boundaries(self):
        assert utility_dl(0.02, 0.12, 0.02) == pytest.approx(1.0)
        assert utility_dl(0.001, 0.12, 0.02) == 1.0
        assert utility_dl(0.12, 0.12, 0.02) == pytest.approx(0.0)

    def test_clamped_to_unit_interval(self):
        assert utility_dl(5.0, 0.12, 0.02) == 0.0
        assert utility_ul(np.inf, 0.12, 0.02) == 0.0

    def test_maximum_delay_must_exceed_tolerable_delay(self):
        with pytest.raises(UtilityDomainError):
            utility_dl(0.01, 0.02, 0.02)

    def test_total_is_the_product(self):
        assert utility_total(1.0, 1.0) == 1.0
        assert utility_total(0.3, 0.0) == 0.0
        assert utility_total(0.8, 0.5) == pytest.approx(0.4)

    def test_monotone_in_delay(self):
        delays = np.linspace(0.0, 0.2, 50)
        values = [utility_dl(delay, 0.12, 0.02) for delay in delays]

        assert all(a >= b for a, b in zip(values, values[1:]))

def _qos(**overrides) -> UserQos:
    defaults = dict(
        dl_load=1e6,
        ul_load=1e4,
        backhaul_share=4e9,
        d_max_dl=1.0,
        d_max_ul=1.0,
        gamma_dl=0.02,
        gamma_ul=0.015,
        bandwidth=1e6,
        dl_rate=1e7,
        ul_rate=1e6,
        compute=5e5,
    )
    defaults.update(overrides)

    return UserQos(**defaults)

class TestComputeGain:
    def test_no_extra_compute_gains_nothing(self):
        result = gain_compute(5e5, 0.0, _qos())

        assert result.approx == 0.0
        assert result.exact == pytest.approx(0.0, abs=1e-15)

    def test_closed_form_matches_exact_difference(self):
        rng = np.random.default_rng(0)
        qos = _qos()

        for compute, delta in zip(rng.uniform(2e5, 1e6, 10_000), rng.uniform(1e4, 2e5, 10_000)):
            result = gain_compute(compute, delta, qos)

            assert result.regime == 'closed-form'
            assert result.approx == pytest.approx(result.exact, rel=1e-9)

    def test_out_of_domain(self):
        # 1e4 bits over 1e6 bit/s plus 1e4 bits over 1e7 bit/s is below the tolerable delay.
        with pytest.raises(TheoremDomainError):
            gain_compute(1e7, 1e6, _qos())

def _rate_sinr(bits_per_hz: float) -> float:
    """Return the SINR whose spectral efficiency is `bits_per_hz`."""

    return 2.0 ** bits_per_hz - 1

class TestResourceBlockGain:
    def test_general_regime_is_exact(self):
        sinrs = np.array([_rate_sinr(1.0), _rate_sinr(0.5), 0.0])
        result = gain_ul_rb(np.array([1, 0, 0]), np.array([0, 1, 0]), sinrs, _qos(ul_load=2e4, compute=1e6))

        assert result.regime == 'general'
        assert result.approx == pytest.approx(result.exact, rel=1e-6)
        assert result.exact > 0

    def test_dominant_regime(self):
        sinrs = np.array([_rate_sinr(0.01), _rate_sinr(10.0)])
        qos = _qos(ul_load=100.0, compute=1e5, gamma_ul=0.001)

        result = gain_ul_rb(np.array([1, 0]), np.array([0, 1]), sinrs, qos)

        assert result.regime == 'dominant'
        assert result.approx == pytest.approx(result.exact, rel=0.05)

    def test_marginal_regime(self):
        sinrs = np.array([_rate_sinr(10.0), _rate_sinr(0.05)])
        qos = _qos(ul_load=1e5, compute=1e7, gamma_ul=0.005)

        result = gain_ul_rb(np.array([1, 0]), np.array([0, 1]), sinrs, qos)

        assert result.regime == 'marginal'
        assert result.approx == pytest.approx(result.exact, rel=0.05)

    def test_downlink_general_regime_is_exact(self):
        sinrs = np.array([_rate_sinr(1.0), _rate_sinr(2.0)])
        result = gain_dl_rb(np.array([1, 0]), np.array([0, 1]), sinrs, _qos(dl_load=1e5))

        assert result.regime == 'general'
        assert result.approx == pytest.approx(result.exact, rel=1e-6)

    def test_exact_gain_is_the_utility_difference(self):
        sinrs = np.array([_rate_sinr(1.0), _rate_sinr(0.5)])
        qos = _qos(ul_load=2e4, compute=1e6)

        result = gain_ul_rb(np.array([1, 0]), np.array([0, 1]), sinrs, qos)

        before = utility_point(qos, qos.dl_rate, 1e6, qos.compute).u_total
        after = utility_point(qos, qos.dl_rate, 1.5e6, qos.compute).u_total

        assert result.exact == pytest.approx(after - before, rel=1e-12)

    def test_overlapping_blocks_are_rejected(self):
        with pytest.raises(TheoremDomainError):
            gain_ul_rb(np.array([1, 1]), np.array([0, 1]), np.ones(2), _qos())

    def test_no_current_rate_is_out_of_domain(self):
        with pytest.raises(TheoremDomainError):
            gain_dl_rb(np.array([0, 0]), np.array([0, 1]), np.ones(2), _qos())

class TestMaximumDelay:
    def test_single_block_single_user(self):
        config = NetworkConfig(num_downlink_rb=1, num_uplink_rb=1, num_sbs=2)
        channel = ChannelRealization(
            dl_gain=np.array([[[1e-6], [1e-7]]]),
            ul_gain=np.array([[[1e-6], [1e-7]]]),
        )

        sinr = config.sbs_tx_power * 1e-6 / (config.noise_power + config.sbs_tx_power * 1e-7)
        rate = config.subcarrier_bandwidth * np.log2(1 + sinr)

        assert max_delay_dl(0, 0, config, channel, 2e6) == pytest.approx(sum(downlink_delay(2e6, rate, config.backhaul_share)))

    def test_proportional_to_base_load(self):
        topology = generate_topology(TINY_NETWORK, 3)
        channel = sample_channel(topology, TINY_NETWORK, 4)
        sbs = int(topology.association[0])

        assert max_delay_dl(0, sbs, TINY_NETWORK, channel, 4e6) == pytest.approx(2 * max_delay_dl(0, sbs, TINY_NETWORK, channel, 2e6))
        assert max_delay_ul(0, sbs, TINY_NETWORK, channel, topology, 4e4) == pytest.approx(2 * max_delay_ul(0, sbs, TINY_NETWORK, channel, topology, 2e4))

    def test_dominates_realised_delays(self):
        rng = np.random.default_rng(11)
        topology = generate_topology(TINY_NETWORK, 12)
        content = synthesize_overlap(topology, ContentParams(), 13)
        channel = sample_channel(topology, TINY_NETWORK, 14)
        context = build_period_context(TINY_NETWORK, topology, channel, content, max_correlations(topology, content, TINY_NETWORK))

        action_sets = [enumerate_actions(topology.users_of(sbs), TINY_NETWORK, 50, sbs) for sbs in range(topology.num_sbs)]

        for _ in range(1000):
            allocations = [actions[rng.integers(len(actions))] if actions else None for actions in action_sets]
            outcome = evaluate_joint(context, allocations)

            finite = np.isfinite(outcome.dl_delay)
            assert np.all(outcome.dl_delay[finite] <= context.d_max_dl[finite] * (1 + 1e-12))

            finite = np.isfinite(outcome.ul_delay)
            assert np.all(outcome.ul_delay[finite] <= context.d_max_ul[finite] * (1 + 1e-12))

class TestJointEvaluation:
    def test_matches_scalar_pipeline(self):
        config = NetworkConfig(num_users=2, num_sbs=2, num_downlink_rb=2, num_uplink_rb=2)
        topology = make_topology([[3, 0], [27, 0]], [[0, 0], [30, 0]], config, content_id=[0, 1])
        content = synthesize_overlap(topology, ContentParams(), 0)
        channel = sample_channel(topology, config, 1)
        context = build_period_context(config, topology, channel, content, max_correlations(topology, content, config))

        allocations = [enumerate_actions([0], config, 10)[0], enumerate_actions([1], config, 10)[0]]
        outcome = evaluate_joint(context, allocations)

        for user in range(2):
            sinrs = np.array([sinr_downlink(user, user, rb, allocations, channel, config) for rb in range(2)])
            rate = config.subcarrier_bandwidth * np.log2(1 + sinrs).sum()
            delay = sum(downlink_delay(context.dl_load[user], rate, config.backhaul_share))

            assert outcome.dl_delay[user] == pytest.approx(delay, rel=1e-12)

            u_dl = utility_dl(outcome.dl_delay[user], context.d_max_dl[user], config.tolerable_delay_dl)
            u_ul = utility_ul(outcome.ul_delay[user], context.d_max_ul[user], config.tolerable_delay_ul)

            assert outcome.utility[user] == pytest.approx(utility_total(u_dl, u_ul), abs=1e-12)

        # Each SBS serves one user, so its utility is that user's.
        np.testing.assert_allclose(outcome.sbs_utility, outcome.utility)

    def test_utilities_are_bounded(self):
        topology = generate_topology(TINY_NETWORK, 21)
        content = synthesize_overlap(topology, ContentParams(), 22)
        channel = sample_channel(topology, TINY_NETWORK, 23)
        context = build_period_context(TINY_NETWORK, topology, channel, content, max_correlations(topology, content, TINY_NETWORK))

        action_sets = [enumerate_actions(topology.users_of(sbs), TINY_NETWORK, 10, sbs) for sbs in range(topology.num_sbs)]
        outcome = evaluate_joint(context, [actions[0] if actions else None for actions in action_sets])

        assert np.all((outcome.utility >= 0) & (outcome.utility <= 1))

        for sbs in range(topology.num_sbs):
            assert 0 <= outcome.sbs_utility[sbs] <= len(topology.users_of(sbs))

    def test_users_without_blocks_get_zero_utility(self):
        config = NetworkConfig(num_users=3, num_sbs=1, num_downlink_rb=2, num_uplink_rb=2)
        topology = make_topology([[1, 0], [2, 0], [3, 0]], [[0, 0]], config)
        content = synthesize_overlap(topology, ContentParams(), 0)
        channel = sample_channel(topology, config, 1)
        context = build_period_context(config, topology, channel, content, max_correlations(topology, content, config))

        # The round-robin action leaves the third user without resource blocks.
        action = enumerate_actions([0, 1, 2], config, 1)[0]
        outcome = evaluate_joint(context, [action])

        assert outcome.dl_delay[2] == np.inf
        assert outcome.utility[2] == 0.0
