import numpy as np
import pytest

from vrcorr.game import Action, GameSpec
from vrcorr.config import ExperimentConfig, LearnerSettings
from vrcorr.network import NetworkConfig, Topology, associate_users

TINY_NETWORK = NetworkConfig(
    area_radius=20.0,
    sbs_coverage_radius=100.0,
    num_users=6,
    num_sbs=2,
    num_downlink_rb=2,
    num_uplink_rb=2,
    compute_levels=3,
    period_length=20,
)

TINY_LEARNING = LearnerSettings(reservoir_size=20, washout=2)

TINY_CONFIG_TEXT = """
# A network small enough to simulate in a fraction of a second.
r = 20 m
r_B = 100 m
U = 6
B = 2
S = 2
V = 2
M = 3
T = 20
N_w = 20
washout = 2
periods = 3
replications = 2
action_cap = 10
change_schedule = 2
convergence_window = 10
smoothing_window = 5
sbs_values = 1, 2
workers = 1
"""

@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """A configuration small enough for every test to simulate quickly, in which every user is covered."""

    return ExperimentConfig(
        network=TINY_NETWORK,
        learning=TINY_LEARNING,
        periods=3,
        replications=2,
        action_cap=10,
        change_schedule=(2,),
        convergence_window=10,
        smoothing_window=5,
        sbs_values=(1, 2),
        workers=1,
    )

@pytest.fixture
def tiny_config_file(tmp_path) -> str:
    path = tmp_path / 'tiny.conf'
    path.write_text(TINY_CONFIG_TEXT, encoding='utf-8')

    return str(path)

def make_topology(user_positions, sbs_positions, config: NetworkConfig, content_id=None) -> Topology:
    """Build a topology with hand-placed users and SBSs."""

    user_positions = np.asarray(user_positions, dtype=float)
    sbs_positions = np.asarray(sbs_positions, dtype=float)

    return Topology(
        sbs_positions=sbs_positions,
        user_positions=user_positions,
        association=associate_users(sbs_positions, user_positions, config),
        content_id=np.zeros(len(user_positions), dtype=int) if content_id is None else np.asarray(content_id),
        tracking_std=np.ones(len(user_positions)),
        distances=np.linalg.norm(user_positions[:, None, :] - sbs_positions[None, :, :], axis=-1),
    )

def matrix_game(row_payoffs, col_payoffs) -> GameSpec:
    """Build a two player game from payoff matrices, with placeholder actions."""

    row_payoffs, col_payoffs = np.asarray(row_payoffs, dtype=float), np.asarray(col_payoffs, dtype=float)

    def actions(count):
        return tuple(Action(dl_assign=(k,), ul_assign=(k,)) for k in range(count))

    def oracle(joint):
        return np.array([row_payoffs[joint], col_payoffs[joint]])

    return GameSpec([0, 1], [actions(row_payoffs.shape[0]), actions(row_payoffs.shape[1])], oracle)
