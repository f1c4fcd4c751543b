"""Delays, delay utilities and the utility gains of extra resources."""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np
import msgspec

from .network import (UNCOVERED, NetworkConfig, Topology, ChannelRealization, sinr_tables, rate_uplink,
                      rate_downlink)
from .correlation import ContentModel, CorrelationState, effective_dl_load, effective_ul_load

if TYPE_CHECKING:
    from .game import Action

class UtilityDomainError(ValueError):
    """The maximum delay does not exceed the tolerable delay, so utilities cannot be normalised."""

    def __init__(
        self,
        message: str = 'The maximum delay of a user does not exceed its tolerable delay. Lower the tolerable delay or increase the base loads.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class TheoremDomainError(ValueError):
    """A utility gain was requested outside the linear region of the delay utility."""

    def __init__(
        self,
        message: str = 'Theorem out of domain: the delays before and after the increase must lie between the tolerable delay and the maximum delay.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class DelayBreakdown(msgspec.Struct, frozen = True):
    """The components of a user's downlink and uplink delays in seconds."""

    dl_air: float
    dl_backhaul: float
    ul_air: float
    ul_compute: float

    @property
    def dl_total(self) -> float:
        return self.dl_air + self.dl_backhaul

    @property
    def ul_total(self) -> float:
        return self.ul_air + self.ul_compute

class UtilityPoint(msgspec.Struct, frozen = True):
    """A user's normalised delay utilities."""

    u_dl: float
    u_ul: float
    u_total: float
    d_max_dl: float
    d_max_ul: float

class UserQos(msgspec.Struct, frozen = True):
    """Everything about a user, other than its allocation, that its delay utility depends on."""

    dl_load: float
    ul_load: float
    backhaul_share: float
    d_max_dl: float
    d_max_ul: float
    gamma_dl: float
    gamma_ul: float
    bandwidth: float
    dl_rate: float = 0.0
    ul_rate: float = 0.0
    compute: float = 0.0

class GainResult(msgspec.Struct, frozen = True):
    """The utility gain of a resource increase: the exact difference and the closed form for its regime."""

    exact: float
    approx: float
    regime: str
    """`dominant` if the added rate dwarfs the current rate, `marginal` if it is dwarfed by it, `general` otherwise and `closed-form` for compute gains."""

def _transfer_time(bits: float, rate: float) -> float:
    if bits == 0:
        return 0.0

    return bits / rate if rate > 0 else np.inf

def downlink_delay(dl_load: float, rate: float, backhaul_share: float) -> tuple[float, float]:
    """Compute the air and backhaul parts of a user's downlink delay.

    A zero rate with a positive load gives an infinite air delay."""

    return _transfer_time(dl_load, rate), _transfer_time(dl_load, backhaul_share)

def uplink_delay(ul_load: float, rate: float, compute: float) -> tuple[float, float]:
    """Compute the air and computation parts of a user's uplink delay."""

    return _transfer_time(ul_load, rate), _transfer_time(ul_load, compute)

def max_delay_dl(user: int, sbs: int, config: NetworkConfig, channel: ChannelRealization, base_bits: float) -> float:
    """Compute a user's maximum downlink delay.

    This is the delay of its zero-correlation load over the single resource block with the worst SINR when every other SBS transmits on it."""

    others = [l for l in range(channel.dl_gain.shape[1]) if l != sbs]

    interference = config.sbs_tx_power * channel.dl_gain[user, others, :].sum(axis=0)
    sinr = config.sbs_tx_power * channel.dl_gain[user, sbs, :] / (config.noise_power + interference)

    rate = config.subcarrier_bandwidth * np.log2(1 + sinr.min())

    return sum(downlink_delay(base_bits, rate, config.backhaul_share))

def max_delay_ul(user: int, sbs: int, config: NetworkConfig, channel: ChannelRealization, topology: Topology, base_bits: float) -> float:
    """Compute a user's maximum uplink delay.

    This is the delay of its zero-correlation load over the single resource block with the worst SINR when every other SBS schedules its most interfering user on it, processed with the smallest compute share."""

    interference = np.zeros(config.num_uplink_rb)

    for l in range(topology.num_sbs):
        members = topology.users_of(l)

        if l == sbs or not len(members):
            continue

        interference += config.user_tx_power * channel.ul_gain[members, sbs, :].max(axis=0)

    sinr = config.user_tx_power * channel.ul_gain[user, sbs, :] / (config.noise_power + interference)
    rate = config.subcarrier_bandwidth * np.log2(1 + sinr.min())

    # NOTE Cells with more users than compute levels have their compute quanta refined so every user keeps a positive share.
    levels = max(config.compute_levels, len(topology.users_of(sbs)))

    return sum(uplink_delay(base_bits, rate, config.compute_capacity / levels))

def _normalised_utility(delay: float, d_max: float, gamma: float) -> float:
    if d_max <= gamma:
        raise UtilityDomainError()

    if delay < gamma:
        return 1.0

    if not np.isfinite(delay):
        return 0.0

    return float(np.clip((d_max - delay) / (d_max - gamma), 0.0, 1.0))

def utility_dl(delay: float, d_max: float, gamma: float) -> float:
    """Map a downlink delay to a utility in [0, 1]: 1 below the tolerable delay, falling linearly to 0 at the maximum delay."""

    return _normalised_utility(delay, d_max, gamma)

def utility_ul(delay: float, d_max: float, gamma: float) -> float:
    """Map an uplink delay to a utility in [0, 1]: 1 below the tolerable delay, falling linearly to 0 at the maximum delay."""

    return _normalised_utility(delay, d_max, gamma)

def utility_total(u_dl: float, u_ul: float) -> float:
    """Combine downlink and uplink utilities multiplicatively."""

    return u_dl * u_ul

def delay_breakdown(qos: UserQos, dl_rate: float, ul_rate: float, compute: float) -> DelayBreakdown:
    """Compute a user's delays for the given rates and compute share."""

    dl_air, dl_backhaul = downlink_delay(qos.dl_load, dl_rate, qos.backhaul_share)
    ul_air, ul_compute = uplink_delay(qos.ul_load, ul_rate, compute)

    return DelayBreakdown(dl_air=dl_air, dl_backhaul=dl_backhaul, ul_air=ul_air, ul_compute=ul_compute)

def utility_point(qos: UserQos, dl_rate: float, ul_rate: float, compute: float) -> UtilityPoint:
    """Compute a user's utilities for the given rates and compute share."""

    delays = delay_breakdown(qos, dl_rate, ul_rate, compute)

    u_dl = utility_dl(delays.dl_total, qos.d_max_dl, qos.gamma_dl)
    u_ul = utility_ul(delays.ul_total, qos.d_max_ul, qos.gamma_ul)

    return UtilityPoint(u_dl=u_dl, u_ul=u_ul, u_total=utility_total(u_dl, u_ul), d_max_dl=qos.d_max_dl, d_max_ul=qos.d_max_ul)

def _check_linear(delay: float, d_max: float, gamma: float) -> None:
    if not gamma <= delay <= d_max:
        raise TheoremDomainError()

def _rb_regime(current_rate: float, delta_rate: float, dominant_ratio: float, marginal_ratio: float) -> tuple[str, float]:
    """Select the closed form for a rate increase and return its argument."""

    ratio = delta_rate / current_rate

    if ratio >= dominant_ratio:
        return 'dominant', 1 / current_rate

    if ratio <= marginal_ratio:
        return 'marginal', delta_rate / current_rate ** 2

    return 'general', delta_rate / (current_rate ** 2 + current_rate * delta_rate)

def _check_disjoint(current: np.ndarray, delta: np.ndarray) -> None:
    if np.any(np.logical_and(current, delta)):
        raise TheoremDomainError('Theorem out of domain: the added resource blocks must not already be allocated to the user.')

def gain_ul_rb(current: np.ndarray, delta: np.ndarray, sinrs: np.ndarray, qos: UserQos,
               dominant_ratio: float = 100.0, marginal_ratio: float = 0.01) -> GainResult:
    """Compute the utility gain of allocating the uplink resource blocks `delta` on top of `current`."""

    _check_disjoint(current, delta)

    current_rate = rate_uplink(current, sinrs, qos.bandwidth)
    delta_rate = rate_uplink(delta, sinrs, qos.bandwidth)

    if current_rate <= 0:
        raise TheoremDomainError()

    before = delay_breakdown(qos, qos.dl_rate, current_rate, qos.compute)
    after = delay_breakdown(qos, qos.dl_rate, current_rate + delta_rate, qos.compute)

    _check_linear(before.ul_total, qos.d_max_ul, qos.gamma_ul)
    _check_linear(after.ul_total, qos.d_max_ul, qos.gamma_ul)

    u_before = utility_point(qos, qos.dl_rate, current_rate, qos.compute)
    u_after = utility_point(qos, qos.dl_rate, current_rate + delta_rate, qos.compute)

    regime, x = _rb_regime(current_rate, delta_rate, dominant_ratio, marginal_ratio)

    return GainResult(
        exact=u_after.u_total - u_before.u_total,
        approx=u_before.u_dl * qos.ul_load * x / (qos.d_max_ul - qos.gamma_ul),
        regime=regime,
    )

def gain_dl_rb(current: np.ndarray, delta: np.ndarray, sinrs: np.ndarray, qos: UserQos,
               dominant_ratio: float = 100.0, marginal_ratio: float = 0.01) -> GainResult:
    """Compute the utility gain of allocating the downlink resource blocks `delta` on top of `current`."""

    _check_disjoint(current, delta)

    current_rate = rate_downlink(current, sinrs, qos.bandwidth)
    delta_rate = rate_downlink(delta, sinrs, qos.bandwidth)

    if current_rate <= 0:
        raise TheoremDomainError()

    before = delay_breakdown(qos, current_rate, qos.ul_rate, qos.compute)
    after = delay_breakdown(qos, current_rate + delta_rate, qos.ul_rate, qos.compute)

    _check_linear(before.dl_total, qos.d_max_dl, qos.gamma_dl)
    _check_linear(after.dl_total, qos.d_max_dl, qos.gamma_dl)

    u_before = utility_point(qos, current_rate, qos.ul_rate, qos.compute)
    u_after = utility_point(qos, current_rate + delta_rate, qos.ul_rate, qos.compute)

    regime, x = _rb_regime(current_rate, delta_rate, dominant_ratio, marginal_ratio)

    return GainResult(
        exact=u_after.u_total - u_before.u_total,
        approx=u_before.u_ul * qos.dl_load * x / (qos.d_max_dl - qos.gamma_dl),
        regime=regime,
    )

def gain_compute(compute: float, delta: float, qos: UserQos) -> GainResult:
    """Compute the utility gain of raising a user's compute share from `compute` to `compute + delta`."""

    if compute <= 0 or delta < 0:
        raise TheoremDomainError()

    before = delay_breakdown(qos, qos.dl_rate, qos.ul_rate, compute)
    after = delay_breakdown(qos, qos.dl_rate, qos.ul_rate, compute + delta)

    _check_linear(before.ul_total, qos.d_max_ul, qos.gamma_ul)
    _check_linear(after.ul_total, qos.d_max_ul, qos.gamma_ul)

    u_before = utility_point(qos, qos.dl_rate, qos.ul_rate, compute)
    u_after = utility_point(qos, qos.dl_rate, qos.ul_rate, compute + delta)

    return GainResult(
        exact=u_after.u_total - u_before.u_total,
        approx=u_before.u_dl * qos.ul_load * delta / ((qos.d_max_ul - qos.gamma_ul) * compute * (compute + delta)),
        regime='closed-form',
    )

class PeriodContext(msgspec.Struct, frozen = True, eq = False):
    """The static state of one period: channel, effective loads and maximum delays."""

    config: NetworkConfig
    topology: Topology
    channel: ChannelRealization
    dl_load: np.ndarray
    ul_load: np.ndarray
    d_max_dl: np.ndarray
    """Maximum downlink delays per user; zero for uncovered users."""
    d_max_ul: np.ndarray

    def user_qos(self, user: int) -> UserQos:
        """Collect the allocation-independent context of a covered user."""

        return UserQos(
            dl_load=float(self.dl_load[user]),
            ul_load=float(self.ul_load[user]),
            backhaul_share=self.config.backhaul_share,
            d_max_dl=float(self.d_max_dl[user]),
            d_max_ul=float(self.d_max_ul[user]),
            gamma_dl=self.config.tolerable_delay_dl,
            gamma_ul=self.config.tolerable_delay_ul,
            bandwidth=self.config.subcarrier_bandwidth,
        )

class SlotOutcome(msgspec.Struct, frozen = True, eq = False):
    """The delays and utilities produced by one joint action. Entries of uncovered users are zero."""

    dl_delay: np.ndarray
    ul_delay: np.ndarray
    utility: np.ndarray
    sbs_utility: np.ndarray

def build_period_context(config: NetworkConfig, topology: Topology, channel: ChannelRealization,
                         content: ContentModel, correlation: CorrelationState) -> PeriodContext:
    """Compute the effective loads and maximum delays of a period."""

    d_max_dl = np.zeros(topology.num_users)
    d_max_ul = np.zeros(topology.num_users)

    for user in np.flatnonzero(topology.covered):
        sbs = int(topology.association[user])

        d_max_dl[user] = max_delay_dl(user, sbs, config, channel, content.base_dl_bits[user])
        d_max_ul[user] = max_delay_ul(user, sbs, config, channel, topology, content.base_ul_bits[user])

    covered = topology.covered

    if np.any(d_max_dl[covered] <= config.tolerable_delay_dl) or np.any(d_max_ul[covered] <= config.tolerable_delay_ul):
        raise UtilityDomainError()

    return PeriodContext(
        config=config,
        topology=topology,
        channel=channel,
        dl_load=effective_dl_load(content.base_dl_bits, correlation.phi_max),
        ul_load=effective_ul_load(content.base_ul_bits, correlation.rho_max),
        d_max_dl=d_max_dl,
        d_max_ul=d_max_ul,
    )

def _transfer_times(bits: np.ndarray, rates: np.ndarray) -> np.ndarray:
    safe = np.where(rates > 0, rates, 1.0)

    return np.where(bits > 0, np.where(rates > 0, bits / safe, np.inf), 0.0)

def _normalised_utilities(delays: np.ndarray, d_max: np.ndarray, gamma: float) -> np.ndarray:
    spread = np.where(d_max > gamma, d_max - gamma, 1.0)

    return np.where(delays < gamma, 1.0, np.clip((d_max - delays) / spread, 0.0, 1.0))

def evaluate_joint(context: PeriodContext, allocations: Sequence[Action | None]) -> SlotOutcome:
    """Evaluate the delays and utilities of every covered user under a joint action of all SBSs."""

    config, topology = context.config, context.topology
    num_users = topology.num_users

    dl_sinr, ul_sinr = sinr_tables(allocations, topology, context.channel, config)

    dl_rate = np.zeros(num_users)
    ul_rate = np.zeros(num_users)
    compute = np.zeros(num_users)

    for action in allocations:
        if action is None:
            continue

        # Sum the rate of each resource block into the user it is assigned to.
        dl_users = np.asarray(action.dl_assign)
        ul_users = np.asarray(action.ul_assign)

        dl_rb_rates = config.subcarrier_bandwidth * np.log2(1 + dl_sinr[dl_users, np.arange(len(dl_users))])
        ul_rb_rates = config.subcarrier_bandwidth * np.log2(1 + ul_sinr[ul_users, np.arange(len(ul_users))])

        dl_rate += np.bincount(dl_users, weights=dl_rb_rates, minlength=num_users)
        ul_rate += np.bincount(ul_users, weights=ul_rb_rates, minlength=num_users)

        for user, share in action.compute_share.items():
            compute[user] = share / action.levels * config.compute_capacity

    covered = topology.covered

    dl_delay = _transfer_times(context.dl_load, dl_rate) + _transfer_times(context.dl_load, np.full(num_users, config.backhaul_share))
    ul_delay = _transfer_times(context.ul_load, ul_rate) + _transfer_times(context.ul_load, compute)

    u_dl = _normalised_utilities(dl_delay, context.d_max_dl, config.tolerable_delay_dl)
    u_ul = _normalised_utilities(ul_delay, context.d_max_ul, config.tolerable_delay_ul)
    utility = np.where(covered, u_dl * u_ul, 0.0)

    sbs_utility = np.bincount(topology.association[covered], weights=utility[covered], minlength=topology.num_sbs)

    return SlotOutcome(
        dl_delay=np.where(covered, dl_delay, 0.0),
        ul_delay=np.where(covered, ul_delay, 0.0),
        utility=utility,
        sbs_utility=sbs_utility,
    )
