from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np
import msgspec

from .game import Action, MixedStrategy
from .config import LearnerSettings
from .helpers import make_rng

class TransferError(ValueError):
    """Learnt utilities cannot be transferred because the action set has changed."""

    def __init__(
        self,
        message: str = 'Unable to transfer learnt utilities as the number of actions has changed. Transfer requires an unchanged action set.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class ChangeEvent(msgspec.Struct, frozen = True):
    """A change of the users' content and correlations at the start of a period."""

    period: int
    action_count: int
    """The number of actions the SBS has after the change."""

class Learner(ABC):
    """A learning SBS."""

    correlation_aware: bool = True
    """Whether the SBS exploits data correlation when transmitting."""

    restarts_on_change: bool = True
    """Whether the exploration schedule starts over after an environment change."""

    def __init__(self,
                 name: str,
                 sbs: int,
                 actions: Sequence[Action],
                 num_players: int,
                 settings: LearnerSettings = None,
                 seed: Sequence[int] = (0,),
                 ) -> None:
        """Initialise a learner.

        Args:
            name (str): The name of the learning algorithm.
            sbs (int): The SBS the learner controls.
            actions (Sequence[Action]): The action set of the SBS.
            num_players (int): The number of SBSs taking part in the game, including this one.
            settings (LearnerSettings, optional): Learning rates, reservoir sizes and the exploration schedule. Defaults to `LearnerSettings()`.
            seed (Sequence[int], optional): The key of the learner's random number streams. Defaults to `(0,)`."""

        if not len(actions):
            raise ValueError(f'SBS {sbs} has no actions and so cannot learn.')

        self.name: str = name
        """The name of the learning algorithm."""

        self.sbs: int = sbs
        self.actions: tuple[Action, ...] = tuple(actions)
        self.num_players: int = num_players
        self.settings: LearnerSettings = settings or LearnerSettings()
        self.seed: tuple[int, ...] = tuple(seed)

        self.rng: np.random.Generator = make_rng(*self.seed, 0)
        """The random number generator used to sample actions."""

        self.t: int = 0
        """The number of slots learnt from since the start or, for learners that restart, the last environment change."""

        self.visits: np.ndarray = np.zeros(self.num_actions, dtype=int)
        """The number of times the estimate of each action has been trained since the start or the last environment change."""

        self.strategy_index: int = 0
        """The index of the current mixed strategy in the codebook: 0 is the uniform strategy and 1 + a is the ε-greedy strategy around action a."""

        self.codes: np.ndarray = np.zeros(num_players)
        """The strategy codes last broadcast by every SBS."""

        self.last_action: int | None = None

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def epsilon(self) -> float:
        """The current exploration rate, max(floor, start · decay^t)."""

        settings = self.settings

        return max(settings.epsilon_floor, settings.epsilon_start * settings.epsilon_decay ** self.t)

    @property
    def strategy(self) -> MixedStrategy:
        """The mixed strategy identified by the current strategy index."""

        if self.strategy_index == 0:
            return MixedStrategy.uniform(self.num_actions)

        # ε is spread over every action, so the greedy action receives 1 - ε + ε / |A|.
        probs = np.full(self.num_actions, self.epsilon / self.num_actions)
        probs[self.strategy_index - 1] += 1 - self.epsilon

        return MixedStrategy(probs)

    @property
    def strategy_code(self) -> float:
        """The current strategy index normalised to [0, 1]."""

        return self.strategy_index / self.num_actions

    def select_strategy(self) -> float:
        """Choose the mixed strategy for this slot and return its code for broadcasting to the other SBSs.

        The strategy is uniform in the first slot and ε-greedy around the action with the highest estimated utility afterwards."""

        self.strategy_index = 0 if self.t == 0 else 1 + int(np.argmax(self.estimates()))

        return self.strategy_code

    def select_action(self, codes: Sequence[float]) -> int:
        """Record the strategy codes broadcast by every SBS and sample an action from the current strategy."""

        self.codes = np.asarray(codes, dtype=float)
        self.last_action = int(self.rng.choice(self.num_actions, p=self.strategy.probs))

        return self.last_action

    def learn(self, utility: float) -> None:
        """Learn from the utility realised by the last action and advance the clock."""

        self.update_estimates(self.last_action, utility)
        self.t += 1

    def on_change(self, event: ChangeEvent) -> None:
        """React to a change of the users' content and correlations.

        Visit counts start over. Learners that restart also reset their clock, so their next strategy is uniform again."""

        self.visits[:] = 0

        if self.restarts_on_change:
            self.t = 0

    def visit(self, action: int) -> int:
        """Count a training step of an action's estimate and return how many it has had since the start or the last change."""

        self.visits[action] += 1

        return int(self.visits[action])

    @abstractmethod
    def estimates(self) -> np.ndarray:
        """Return the estimated utility of every action."""

    @abstractmethod
    def update_estimates(self, action: int, utility: float) -> None:
        """Update the utility estimates with the utility realised by an action."""

def agent_step(agents: Sequence[Learner], utility_oracle: Callable[[tuple[int, ...]], np.ndarray]) -> tuple[int, ...]:
    """Play one slot of the repeated game.

    Every SBS chooses its mixed strategy from its current estimates, the strategy codes are exchanged, every SBS samples an action and all of them learn from the utilities of the resulting joint action. Returns the joint action."""

    # Exchange strategy codes, which requires every SBS to have chosen its strategy.
    codes = np.array([agent.select_strategy() for agent in agents])

    joint = tuple(agent.select_action(codes) for agent in agents)
    utilities = utility_oracle(joint)

    for agent, utility in zip(agents, utilities):
        agent.learn(float(utility))

    return joint

def q_step(agent: Learner, utility_oracle: Callable[[int], float]) -> int:
    """Play one slot for a single learner against a fixed environment."""

    return agent_step([agent], lambda joint: [utility_oracle(joint[0])])[0]

def transfer_bootstrap(agent: Learner, event: ChangeEvent | None) -> np.ndarray | None:
    """Pass an environment change to a learner and return its utility estimates after the change.

    Learners that transfer knowledge seed their new estimates from their old ones; others start over."""

    if event is None:
        return None

    if event.action_count != agent.num_actions:
        raise TransferError()

    agent.on_change(event)

    return agent.estimates()
