"""Network geometry, user association, fading channels, SINRs and achievable rates."""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np
import msgspec

from .helpers import warning

if TYPE_CHECKING:
    from .game import Action

UNCOVERED: int = -1
"""The association value of users that lie outside the coverage of every SBS."""

MIN_DISTANCE: float = 1.0
"""The distance, in metres, below which user-SBS distances are clamped to keep path loss finite."""

def dbm_to_watts(dbm: float) -> float:
    """Convert a power in dBm into Watts."""

    return 10 ** ((dbm - 30) / 10)

class NetworkConfig(msgspec.Struct, frozen = True):
    """The physical parameters of a small cell network. All quantities are in SI units."""

    area_radius: float = 100.0
    sbs_coverage_radius: float = 30.0
    num_users: int = 25
    num_sbs: int = 4
    subcarrier_bandwidth: float = 2e6
    num_downlink_rb: int = 5
    num_uplink_rb: int = 5
    sbs_tx_power: float = dbm_to_watts(20)
    user_tx_power: float = dbm_to_watts(20)
    noise_power: float = dbm_to_watts(-95)
    path_loss_exponent: float = 3.0
    backhaul_total: float = 100e9
    compute_capacity: float = 5e6
    """The computational capacity of each SBS in bits of tracking data processed per second."""
    compute_levels: int = 5
    corr_dist_exponent: float = 2.0
    corr_dist_scale: float = 900.0
    tolerable_delay_dl: float = 0.02
    tolerable_delay_ul: float = 0.01
    period_length: int = 100
    """The number of slots in a period."""
    num_contents: int = 3
    """The number of distinct VR contents users are drawn from."""
    tracking_std: float = 1.0

    @property
    def backhaul_share(self) -> float:
        """The backhaul rate available to each user, V_F / U."""

        return self.backhaul_total / self.num_users

class Topology(msgspec.Struct, frozen = True, eq = False):
    """The positions of users and SBSs along with the users' associations and content."""

    sbs_positions: np.ndarray
    user_positions: np.ndarray
    association: np.ndarray
    """The index of the SBS each user is associated with, or `UNCOVERED`."""
    content_id: np.ndarray
    tracking_std: np.ndarray
    distances: np.ndarray
    """User-SBS distances in metres, indexed by `[user, sbs]`."""

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    @property
    def num_sbs(self) -> int:
        return len(self.sbs_positions)

    def users_of(self, sbs: int) -> np.ndarray:
        """Return the indices of the users associated with an SBS in ascending order."""

        return np.flatnonzero(self.association == sbs)

    @property
    def covered(self) -> np.ndarray:
        return self.association != UNCOVERED

class ChannelRealization(msgspec.Struct, frozen = True, eq = False):
    """Fading power gains, including path loss, for one period."""

    dl_gain: np.ndarray
    """Downlink gains indexed by `[user, sbs, rb]`."""
    ul_gain: np.ndarray
    """Uplink gains indexed by `[user, sbs, rb]`."""

def _uniform_disk(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    """Draw points uniformly over the area of a disk centred on the origin."""

    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    theta = rng.uniform(0.0, 2 * np.pi, count)

    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))

def _distances(points: np.ndarray, others: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points[:, None, :] - others[None, :, :], axis=-1)

def associate_users(sbs_positions: np.ndarray, user_positions: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Associate each user with the nearest SBS whose coverage contains it.

    Ties are broken in favour of the lower SBS index. Users outside every coverage disk are marked `UNCOVERED`."""

    distances = _distances(np.asarray(user_positions, dtype=float), np.asarray(sbs_positions, dtype=float))

    # Hide SBSs whose coverage does not reach the user.
    in_range = np.where(distances <= config.sbs_coverage_radius, distances, np.inf)

    # NOTE `argmin` returns the first minimum, which implements the lower-index tie-break.
    nearest = np.argmin(in_range, axis=1)

    return np.where(np.isfinite(in_range.min(axis=1)), nearest, UNCOVERED)

def generate_topology(config: NetworkConfig, seed: int | Sequence[int], sbs_positions: np.ndarray | None = None) -> Topology:
    """Place users and SBSs uniformly at random over the deployment area and associate them."""

    rng = np.random.default_rng(seed)

    user_positions = _uniform_disk(rng, config.num_users, config.area_radius)

    if sbs_positions is None:
        sbs_positions = _uniform_disk(rng, config.num_sbs, config.area_radius)

    else:
        sbs_positions = np.asarray(sbs_positions, dtype=float).reshape(-1, 2)

    association = associate_users(sbs_positions, user_positions, config)

    # Warn when most users are outside coverage as results then describe only a small fraction of the network.
    uncovered = int(np.sum(association == UNCOVERED))

    if uncovered > config.num_users / 2:
        warning(f'{uncovered} of {config.num_users} users lie outside the coverage of all {len(sbs_positions)} SBSs and will be excluded from utilities and delay metrics.')

    return Topology(
        sbs_positions=sbs_positions,
        user_positions=user_positions,
        association=association,
        content_id=rng.integers(0, config.num_contents, config.num_users),
        tracking_std=np.full(config.num_users, config.tracking_std),
        distances=_distances(user_positions, sbs_positions),
    )

def sample_channel(topology: Topology, config: NetworkConfig, seed: int | Sequence[int]) -> ChannelRealization:
    """Draw block Rayleigh fading for a period: unit-mean exponential power times distance^-β."""

    rng = np.random.default_rng(seed)

    path_loss = np.maximum(topology.distances, MIN_DISTANCE) ** -config.path_loss_exponent
    shape = (topology.num_users, topology.num_sbs)

    dl_gain = rng.exponential(1.0, shape + (config.num_downlink_rb,)) * path_loss[:, :, None]
    ul_gain = rng.exponential(1.0, shape + (config.num_uplink_rb,)) * path_loss[:, :, None]

    return ChannelRealization(dl_gain=dl_gain, ul_gain=ul_gain)

def sinr_downlink(user: int, sbs: int, rb: int, allocations: Sequence[Action | None], channel: ChannelRealization, config: NetworkConfig) -> float:
    """Compute the downlink SINR of a user served by an SBS over a resource block.

    Interference comes from every other SBS that assigns the resource block to any of its users."""

    interference = sum(
        config.sbs_tx_power * channel.dl_gain[user, l, rb]

        for l, action in enumerate(allocations)
        if l != sbs and action is not None and action.dl_assign[rb] != UNCOVERED
    )

    return config.sbs_tx_power * channel.dl_gain[user, sbs, rb] / (config.noise_power + interference)

def sinr_uplink(user: int, sbs: int, rb: int, allocations: Sequence[Action | None], channel: ChannelRealization, config: NetworkConfig) -> float:
    """Compute the uplink SINR at an SBS of a user transmitting over a resource block.

    Interference comes from the users that other SBSs have assigned the same uplink resource block, over their channels towards this SBS."""

    interference = sum(
        config.user_tx_power * channel.ul_gain[action.ul_assign[rb], sbs, rb]

        for l, action in enumerate(allocations)
        if l != sbs and action is not None
    )

    return config.user_tx_power * channel.ul_gain[user, sbs, rb] / (config.noise_power + interference)

def sinr_tables(allocations: Sequence[Action | None], topology: Topology, channel: ChannelRealization, config: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Compute the downlink and uplink SINRs of every covered user towards its own SBS over every resource block.

    Returns arrays indexed by `[user, rb]`; rows of uncovered users are zero. Every active SBS assigns all of its resource blocks, so the downlink interferers on each resource block are exactly the other active SBSs."""

    active = np.array([action is not None for action in allocations])
    users = np.flatnonzero(topology.covered)
    own = topology.association[users]

    dl_sinr = np.zeros((topology.num_users, config.num_downlink_rb))
    ul_sinr = np.zeros((topology.num_users, config.num_uplink_rb))

    if not len(users):
        return dl_sinr, ul_sinr

    # Downlink: the received power from all active SBSs minus the serving SBS's contribution.
    received = config.sbs_tx_power * channel.dl_gain[users]
    signal = received[np.arange(len(users)), own]
    interference = received[:, active].sum(axis=1) - np.where(active[own, None], signal, 0.0)
    dl_sinr[users] = signal / (config.noise_power + interference)

    # Uplink: on each resource block, every active SBS hears the users scheduled by the others.
    for sbs, action in enumerate(allocations):
        if action is None:
            continue

        members = topology.users_of(sbs)

        for rb in range(config.num_uplink_rb):
            interferers = [other.ul_assign[rb] for l, other in enumerate(allocations) if l != sbs and other is not None]
            interference = config.user_tx_power * channel.ul_gain[interferers, sbs, rb].sum()
            ul_sinr[members, rb] = config.user_tx_power * channel.ul_gain[members, sbs, rb] / (config.noise_power + interference)

    return dl_sinr, ul_sinr

def rate_downlink(alloc: np.ndarray, sinrs: np.ndarray, bandwidth: float) -> float:
    """Compute the downlink rate, in bits/s, of a user given its binary resource block allocation and per-block SINRs."""

    return float(np.sum(np.asarray(alloc) * bandwidth * np.log2(1 + np.asarray(sinrs))))

def rate_uplink(alloc: np.ndarray, sinrs: np.ndarray, bandwidth: float) -> float:
    """Compute the uplink rate, in bits/s, of a user given its binary resource block allocation and per-block SINRs."""

    return rate_downlink(alloc, sinrs, bandwidth)
