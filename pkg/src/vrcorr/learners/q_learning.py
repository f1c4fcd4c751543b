from typing import Sequence

import numpy as np

from ..game import Action
from ..config import LearnerSettings
from ..learner import Learner, ChangeEvent


class QLearner(Learner):
    """A stateless Q-learner: the game has no state transitions, so Q(a) simply tracks the utility of action a."""

    def __init__(self,
                 name: str,
                 sbs: int,
                 actions: Sequence[Action],
                 num_players: int,
                 settings: LearnerSettings = None,
                 seed: Sequence[int] = (0,),
                 ) -> None:
        super().__init__(
            name=name,
            sbs=sbs,
            actions=actions,
            num_players=num_players,
            settings=settings,
            seed=seed,
        )

        self.q: np.ndarray = np.zeros(self.num_actions)

    def estimates(self) -> np.ndarray:
        return self.q

    def update_estimates(self, action: int, utility: float) -> None:
        # Q(a) ← Q(a) + α (u - Q(a)), where the first visit of an action takes its utility outright.
        step = 1.0 if self.visit(action) == 1 else self.settings.q_step_size
        self.q[action] += step * (utility - self.q[action])

    def on_change(self, event: ChangeEvent) -> None:
        super().on_change(event)

        self.q[:] = 0.0

class QCorrelated(QLearner):
    """A Q-learner whose SBS exploits data correlation."""

    def __init__(self,
                 sbs: int,
                 actions: Sequence[Action],
                 num_players: int,
                 settings: LearnerSettings = None,
                 seed: Sequence[int] = (0,),
                 ) -> None:
        super().__init__(
            name='q-corr',
            sbs=sbs,
            actions=actions,
            num_players=num_players,
            settings=settings,
            seed=seed,
        )

class QUncorrelated(QLearner):
    """A Q-learner whose SBS transmits every user's full load, ignoring data correlation."""

    correlation_aware = False

    def __init__(self,
                 sbs: int,
                 actions: Sequence[Action],
                 num_players: int,
                 settings: LearnerSettings = None,
                 seed: Sequence[int] = (0,),
                 ) -> None:
        super().__init__(
            name='q-nocorr',
            sbs=sbs,
            actions=actions,
            num_players=num_players,
            settings=settings,
            seed=seed,
        )
