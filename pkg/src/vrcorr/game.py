"""The resource allocation game played by SBSs: action sets, mixed strategies, expected utilities and Nash equilibria."""

import itertools

from math import comb, prod
from typing import Callable, Sequence

import numpy as np
import msgspec

from frozndict import frozendict

from .helpers import make_rng
from .network import NetworkConfig
from .qos import PeriodContext, evaluate_joint

EXACT_JOINT_LIMIT: int = 1_000_000
"""The largest number of joint actions over which expected utilities are summed exactly rather than estimated by Monte Carlo."""

NE_TOLERANCE: float = 1e-12
"""The slack allowed for floating point error when checking equilibrium conditions."""

class SolverError(RuntimeError):
    """No Nash equilibrium was found by support enumeration."""

    def __init__(
        self,
        message: str = 'Support enumeration found no Nash equilibrium. Every finite game has one, so this indicates a numerical problem with the solver.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class Action(msgspec.Struct, frozen = True):
    """An SBS's allocation of its downlink and uplink resource blocks and its compute capacity."""

    dl_assign: tuple[int, ...]
    """The user assigned each downlink resource block."""
    ul_assign: tuple[int, ...]
    """The user assigned each uplink resource block."""
    compute_share: dict = frozendict() # NOTE `frozendict` is used instead of `dict` so that actions are hashable and can be placed in sets.
    """A map of users to the number of compute quanta of size c / `levels` they receive."""
    levels: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.compute_share, frozendict):
            msgspec.structs.force_setattr(self, 'compute_share', frozendict(self.compute_share))

    def compute(self, user: int, capacity: float) -> float:
        """Return the compute rate, in bits/s, that a user receives."""

        return self.compute_share.get(user, 0) / self.levels * capacity

class MixedStrategy(msgspec.Struct, frozen = True, eq = False):
    """A probability distribution over an SBS's action set."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)

        if probs.ndim != 1 or not len(probs):
            raise ValueError('A mixed strategy must be a non-empty vector of probabilities.')

        if not np.all(np.isfinite(probs)) or np.any(probs < -1e-12) or np.any(probs > 1 + 1e-12):
            raise ValueError(f'The probabilities of a mixed strategy must lie in [0, 1], not {probs}.')

        if abs(probs.sum() - 1) > 1e-9:
            raise ValueError(f'The probabilities of a mixed strategy must sum to 1, not {probs.sum()}.')

        msgspec.structs.force_setattr(self, 'probs', np.clip(probs, 0.0, 1.0))

    @classmethod
    def uniform(cls, size: int) -> 'MixedStrategy':
        return cls(np.full(size, 1 / size))

    @classmethod
    def pure(cls, size: int, action: int) -> 'MixedStrategy':
        probs = np.zeros(size)
        probs[action] = 1.0

        return cls(probs)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __len__(self) -> int:
        return len(self.probs)

class ExpectedUtility(msgspec.Struct, frozen = True, eq = False):
    """The expected utility of every player, with standard errors when it was estimated by Monte Carlo."""

    values: np.ndarray
    std_errors: np.ndarray
    exact: bool

class NashCheck(msgspec.Struct, frozen = True):
    """The outcome of checking whether a strategy profile is an ε-Nash equilibrium."""

    is_equilibrium: bool
    max_gain: float
    """The largest utility any player gains by deviating to a pure action."""
    gains: tuple[float, ...]

class GameSpec:
    def __init__(self, players: Sequence[int], action_sets: Sequence[Sequence[Action]], utility_oracle: Callable[[tuple[int, ...]], np.ndarray]) -> None:
        """A normal form game between SBSs.

        Args:
            players (Sequence[int]): The SBSs playing the game.
            action_sets (Sequence[Sequence[Action]]): The action set of each player.
            utility_oracle (Callable[[tuple[int, ...]], np.ndarray]): A function mapping a joint action, given as one action index per player, to the utility of every player."""

        if len(players) != len(action_sets):
            raise ValueError(f'Expected one action set per player but received {len(action_sets)} action sets for {len(players)} players.')

        if any(not len(actions) for actions in action_sets):
            raise ValueError('Every player of a game must have at least one action.')

        self.players: tuple[int, ...] = tuple(players)
        self.action_sets: tuple[tuple[Action, ...], ...] = tuple(tuple(actions) for actions in action_sets)
        self.utility_oracle = utility_oracle

        self._cache: dict[tuple[int, ...], np.ndarray] = {}
        """Utilities of joint actions that have already been evaluated."""

    @classmethod
    def from_context(cls, context: PeriodContext, action_sets: Sequence[Sequence[Action]]) -> 'GameSpec':
        """Build the game of a period from the action sets of every SBS, including the empty action sets of idle SBSs, which do not play."""

        players = [sbs for sbs, actions in enumerate(action_sets) if len(actions)]

        def oracle(joint: tuple[int, ...]) -> np.ndarray:
            allocations = [None] * len(action_sets)

            for player, action in zip(players, joint):
                allocations[player] = action_sets[player][action]

            return evaluate_joint(context, allocations).sbs_utility[players]

        return cls(players, [action_sets[player] for player in players], oracle)

    @property
    def num_players(self) -> int:
        return len(self.players)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(actions) for actions in self.action_sets)

    def utility(self, joint: Sequence[int]) -> np.ndarray:
        """Return the utility of every player under a joint action, given as one action index per player."""

        joint = tuple(int(action) for action in joint)

        if joint not in self._cache:
            self._cache[joint] = np.asarray(self.utility_oracle(joint), dtype=float)

        return self._cache[joint]

    def payoffs(self) -> np.ndarray:
        """Tabulate the utilities of every joint action into an array indexed by `[action_1, ..., action_n, player]`."""

        table = np.empty(self.shape + (self.num_players,))

        for joint in itertools.product(*(range(size) for size in self.shape)):
            table[joint] = self.utility(joint)

        return table

    def deviation_values(self, player: int, strategies: Sequence[MixedStrategy]) -> np.ndarray:
        """Compute a player's expected utility from each of its pure actions when the other players follow `strategies`."""

        others = [p for p in range(self.num_players) if p != player]
        values = np.zeros(self.shape[player])

        for joint_others in itertools.product(*(strategies[p].support for p in others)):
            weight = prod(strategies[p].probs[a] for p, a in zip(others, joint_others))

            for action in range(self.shape[player]):
                joint = list(joint_others)
                joint.insert(player, action)

                values[action] += weight * self.utility(joint)[player]

        return values

def refined_levels(num_users: int, config: NetworkConfig) -> int:
    """Return the number of compute quanta an SBS splits its capacity into so that each of its users can receive at least one."""

    return max(config.compute_levels, num_users)

def count_actions(num_users: int, config: NetworkConfig) -> int:
    """Count the actions of an SBS with `num_users` users: n^S · n^V · the number of compositions of the compute quanta into n positive parts."""

    if num_users == 0:
        return 0

    levels = refined_levels(num_users, config)

    return num_users ** config.num_downlink_rb * num_users ** config.num_uplink_rb * comb(levels - 1, num_users - 1)

def _compositions(total: int, parts: int):
    """Yield the compositions of `total` into `parts` positive integers in lexicographic order of their cut points."""

    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)

        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))

def fair_action(users: Sequence[int], config: NetworkConfig) -> Action:
    """Build the action that assigns resource blocks round-robin and splits compute as evenly as the quanta allow."""

    users = [int(user) for user in users]
    n = len(users)
    levels = refined_levels(n, config)

    # Hand out the remainder of the quanta one each to the first users.
    shares = {user: levels // n + (1 if i < levels % n else 0) for i, user in enumerate(users)}

    return Action(
        dl_assign=tuple(users[k % n] for k in range(config.num_downlink_rb)),
        ul_assign=tuple(users[k % n] for k in range(config.num_uplink_rb)),
        compute_share=shares,
        levels=levels,
    )

def enumerate_actions(users: Sequence[int], config: NetworkConfig, cap: int, seed: int | Sequence[int] = 0) -> tuple[Action, ...]:
    """Build the action set of an SBS serving `users`.

    When the full action space has at most `cap` actions it is enumerated in canonical order: downlink assignments vary slowest, then uplink assignments, then compute splits, each in lexicographic order of user position. Otherwise `cap` distinct actions are sampled uniformly, the fair action first. An SBS without users has no actions."""

    users = [int(user) for user in users]
    n = len(users)

    if n == 0:
        return ()

    levels = refined_levels(n, config)

    if count_actions(n, config) <= cap:
        return tuple(
            Action(dl_assign=dl, ul_assign=ul, compute_share=dict(zip(users, split)), levels=levels)

            for dl, ul, split in itertools.product(
                itertools.product(users, repeat=config.num_downlink_rb),
                itertools.product(users, repeat=config.num_uplink_rb),
                _compositions(levels, n),
            )
        )

    rng = make_rng(*seed) if isinstance(seed, Sequence) else make_rng(seed)

    actions = {fair_action(users, config): None} # NOTE A dictionary is used as an insertion ordered set.

    # Sample assignments and compute splits uniformly, rejecting duplicates.
    while len(actions) < cap:
        cuts = np.sort(rng.choice(np.arange(1, levels), n - 1, replace=False))
        split = np.diff(np.concatenate(([0], cuts, [levels])))

        action = Action(
            dl_assign=tuple(int(u) for u in rng.choice(users, config.num_downlink_rb)),
            ul_assign=tuple(int(u) for u in rng.choice(users, config.num_uplink_rb)),
            compute_share={user: int(share) for user, share in zip(users, split)},
            levels=levels,
        )

        actions.setdefault(action, None)

    return tuple(actions)

def sbs_utility(allocations: Sequence[Action | None], context: PeriodContext) -> np.ndarray:
    """Compute the utility of every SBS, the sum of its users' utilities, under a joint action. Idle SBSs receive 0.

    The channel is static within a period so the time average over its slots equals the utility of a single slot."""

    return evaluate_joint(context, allocations).sbs_utility

def expected_utility(strategies: Sequence[MixedStrategy], game: GameSpec, samples: int = 10_000, seed: int = 0) -> ExpectedUtility:
    """Compute every player's expected utility under a mixed strategy profile.

    The sum over joint actions is exact when the supports span at most `EXACT_JOINT_LIMIT` joint actions and is otherwise estimated from `samples` Monte Carlo draws."""

    if len(strategies) != game.num_players:
        raise ValueError(f'Expected {game.num_players} strategies but received {len(strategies)}.')

    supports = [strategy.support for strategy in strategies]

    if prod(len(support) for support in supports) <= EXACT_JOINT_LIMIT:
        values = np.zeros(game.num_players)

        for joint in itertools.product(*supports):
            values += prod(strategy.probs[a] for strategy, a in zip(strategies, joint)) * game.utility(joint)

        return ExpectedUtility(values=values, std_errors=np.zeros(game.num_players), exact=True)

    rng = make_rng(seed)
    draws = np.column_stack([rng.choice(len(strategy), samples, p=strategy.probs) for strategy in strategies])
    utilities = np.array([game.utility(joint) for joint in draws])

    return ExpectedUtility(
        values=utilities.mean(axis=0),
        std_errors=utilities.std(axis=0, ddof=1) / np.sqrt(samples),
        exact=False,
    )

def is_epsilon_ne(strategies: Sequence[MixedStrategy], game: GameSpec, epsilon: float) -> NashCheck:
    """Check whether no player can gain more than `epsilon` by deviating unilaterally.

    Expected utility is linear in a player's own strategy, so checking pure deviations suffices."""

    current = expected_utility(strategies, game).values

    gains = tuple(
        float(game.deviation_values(player, strategies).max() - current[player])

        for player in range(game.num_players)
    )

    max_gain = max(gains, default=0.0)

    return NashCheck(is_equilibrium=max_gain <= epsilon + NE_TOLERANCE, max_gain=max_gain, gains=gains)

def _indifference_mixture(payoffs: np.ndarray, rows: tuple[int, ...], cols: tuple[int, ...]) -> np.ndarray | None:
    """Find a mixture over `cols` that makes the row player indifferent between the actions in `rows`.

    Returns `None` when no nonnegative solution exists."""

    # Solve payoffs[rows, cols] · y = v, Σ y = 1 for (y, v).
    block = payoffs[np.ix_(rows, cols)]
    a = np.vstack((
        np.hstack((block, -np.ones((len(rows), 1)))),
        np.hstack((np.ones((1, len(cols))), np.zeros((1, 1)))),
    ))
    b = np.zeros(len(rows) + 1)
    b[-1] = 1.0

    solution, *_ = np.linalg.lstsq(a, b, rcond=None)

    if not np.allclose(a @ solution, b, atol=1e-10):
        return None

    mixture = solution[:-1]

    if np.any(mixture < -1e-10):
        return None

    mixture = np.clip(mixture, 0.0, None)

    return mixture / mixture.sum()

def brute_force_ne(game: GameSpec) -> tuple[MixedStrategy, ...]:
    """Find a Nash equilibrium of a game with at most two players and four actions each by support enumeration.

    Support pairs are tried in order of total size, then lexicographically, so the equilibrium with the smallest supports is returned. A game with both pure and mixed equilibria, such as an anti-coordination game, therefore yields its lexicographically first pure equilibrium rather than its interior mixture."""

    if game.num_players > 2 or any(size > 4 for size in game.shape):
        raise ValueError(f'Support enumeration is limited to games with at most 2 players and 4 actions each, not a game of shape {game.shape}.')

    if game.num_players == 0:
        return ()

    table = game.payoffs()

    if game.num_players == 1:
        return (MixedStrategy.pure(game.shape[0], int(np.argmax(table[:, 0]))),)

    row_payoffs, col_payoffs = table[..., 0], table[..., 1]

    supports = [
        (rows, cols)

        for rows in itertools.chain.from_iterable(itertools.combinations(range(game.shape[0]), k) for k in range(1, game.shape[0] + 1))
        for cols in itertools.chain.from_iterable(itertools.combinations(range(game.shape[1]), k) for k in range(1, game.shape[1] + 1))
    ]
    supports.sort(key=lambda pair: (len(pair[0]) + len(pair[1]), pair[0], pair[1]))

    for rows, cols in supports:
        # The column player's mixture must make the row player indifferent over its support, and vice versa.
        y = _indifference_mixture(row_payoffs, rows, cols)
        x = _indifference_mixture(col_payoffs.T, cols, rows)

        if x is None or y is None:
            continue

        row_strategy, col_strategy = np.zeros(game.shape[0]), np.zeros(game.shape[1])
        row_strategy[list(rows)], col_strategy[list(cols)] = x, y

        # Neither player may have a better response outside its support.
        row_values = row_payoffs @ col_strategy
        col_values = row_strategy @ col_payoffs

        if row_values.max() > row_values @ row_strategy + 1e-9 or col_values.max() > col_values @ col_strategy + 1e-9:
            continue

        return MixedStrategy(row_strategy), MixedStrategy(col_strategy)

    raise SolverError()
