"""Downlink pixel correlation, uplink spatial covariance and the effective transmit loads they imply."""

from typing import Sequence

import numpy as np
import msgspec

from .network import NetworkConfig, Topology

class DegenerateContentError(ValueError):
    """Two users' images together contain no pixels."""

    def __init__(
        self,
        message: str = 'Unable to compute a data correlation between two users whose images together contain no pixels.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class ContentParams(msgspec.Struct, frozen = True):
    """Parameters of the synthetic VR content model and the users' base loads."""

    rate_requirement: float = 25.32e6
    """The rate, in bits/s, that a VR user needs without correlation savings."""
    period_duration: float = 0.1
    """The duration of a period in seconds."""
    ul_load_ratio: float = 0.01
    """The size of a user's tracking payload relative to its image payload."""
    pixels_per_user: int = 1_000_000
    overlap_low: float = 0.2
    overlap_high: float = 0.8

    @property
    def base_dl_bits(self) -> float:
        """The downlink load L_i(0), in bits per period."""

        return self.rate_requirement * self.period_duration

    @property
    def base_ul_bits(self) -> float:
        """The uplink load K_i(0), in bits per period."""

        return self.base_dl_bits * self.ul_load_ratio

class ContentModel(msgspec.Struct, frozen = True, eq = False):
    """The users' base loads and pairwise shared pixels."""

    base_dl_bits: np.ndarray
    base_ul_bits: np.ndarray
    pixel_count: np.ndarray
    overlap: np.ndarray
    """The number of pixels shared by each pair of users, indexed by `[user, user]`."""

class CorrelationState(msgspec.Struct, frozen = True, eq = False):
    """The maximum correlation of each user with the other users of its SBS."""

    phi_max: np.ndarray
    rho_max: np.ndarray
    covariance: np.ndarray

def downlink_correlation(n_i: float, n_k: float, n_ik: float) -> float:
    """Compute the downlink data correlation N_ik / (N_i + N_k) of two users, where N_ik is the number of pixels they share."""

    if n_i + n_k == 0:
        raise DegenerateContentError()

    return n_ik / (n_i + n_k)

def synthesize_overlap(topology: Topology, params: ContentParams, seed: int | Sequence[int]) -> ContentModel:
    """Synthesise the pixels shared by users watching the same content.

    Same-content pairs share round(ω · min(N_i, N_k)) pixels with ω uniform on [overlap_low, overlap_high]; other pairs share none."""

    rng = np.random.default_rng(seed)
    num_users = topology.num_users

    pixel_count = np.full(num_users, params.pixels_per_user, dtype=np.int64)

    # Draw a fraction for every pair and keep the upper triangle so the overlap is symmetric.
    fractions = np.triu(rng.uniform(params.overlap_low, params.overlap_high, (num_users, num_users)), k=1)
    fractions = fractions + fractions.T

    same_content = topology.content_id[:, None] == topology.content_id[None, :]
    np.fill_diagonal(same_content, False)

    overlap = np.where(same_content, np.round(fractions * np.minimum.outer(pixel_count, pixel_count)), 0).astype(np.int64)

    return ContentModel(
        base_dl_bits=np.full(num_users, params.base_dl_bits),
        base_ul_bits=np.full(num_users, params.base_ul_bits),
        pixel_count=pixel_count,
        overlap=overlap,
    )

def redraw_content(topology: Topology, config: NetworkConfig, seed: int | Sequence[int]) -> Topology:
    """Redraw the users' content labels and tracking deviations while keeping positions and association.

    This models a change of the users' state information: the SBSs' action sets stay the same because no user moves."""

    rng = np.random.default_rng(seed)

    return msgspec.structs.replace(
        topology,
        content_id=rng.integers(0, config.num_contents, topology.num_users),
        tracking_std=config.tracking_std * rng.uniform(0.5, 1.5, topology.num_users),
    )

def uplink_covariance(sigma_i: float, sigma_j: float, d_ij: float, alpha: float, kappa: float) -> float:
    """Compute the covariance of two users' tracking data under the power exponential model."""

    return sigma_i * sigma_j * np.exp(-d_ij ** alpha / kappa)

def max_correlations(topology: Topology, content: ContentModel, config: NetworkConfig) -> CorrelationState:
    """Find each user's maximum downlink correlation and normalised uplink correlation with the other users of its SBS."""

    positions = topology.user_positions
    user_distances = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)

    # Tracking correlations depend only on distance; covariances scale them by the users' deviations.
    rho = np.exp(-user_distances ** config.corr_dist_exponent / config.corr_dist_scale)
    covariance = np.outer(topology.tracking_std, topology.tracking_std) * rho

    totals = content.pixel_count[:, None] + content.pixel_count[None, :]

    if np.any(totals == 0):
        raise DegenerateContentError()

    phi = content.overlap / totals

    # Only pairs of distinct users sharing an SBS count.
    peers = (topology.association[:, None] == topology.association[None, :]) & topology.covered[:, None]
    np.fill_diagonal(peers, False)

    phi_max = np.where(peers, phi, 0.0).max(axis=1, initial=0.0)
    rho_max = np.where(peers, rho, 0.0).max(axis=1, initial=0.0)

    return CorrelationState(phi_max=phi_max, rho_max=rho_max, covariance=covariance)

def uncorrelated(state: CorrelationState) -> CorrelationState:
    """Return a copy of a correlation state in which no user benefits from correlation."""

    return msgspec.structs.replace(state, phi_max=np.zeros_like(state.phi_max), rho_max=np.zeros_like(state.rho_max))

def effective_dl_load(base_bits: float | np.ndarray, phi_max: float | np.ndarray) -> float | np.ndarray:
    """Compute the downlink load L_i(φ) = L_i(0)(1 - φ)."""

    return base_bits * (1 - phi_max)

def effective_ul_load(base_bits: float | np.ndarray, rho_max: float | np.ndarray) -> float | np.ndarray:
    """Compute the uplink load K_i(ρ) = K_i(0)(1 - ρ)."""

    return base_bits * (1 - rho_max)
