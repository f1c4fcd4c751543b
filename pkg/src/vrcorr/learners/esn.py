from typing import Sequence

import numpy as np

from ..game import Action
from ..config import LearnerSettings
from ..learner import Learner, ChangeEvent
from ..reservoir import EsnNet


class EsnLearner(Learner):
    """A learner that estimates the utility of its actions with an echo state network fed the strategy codes of every SBS."""

    transfers: bool = False
    """Whether old utility estimates are carried over environment changes."""

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

        settings = self.settings

        self.base: EsnNet = EsnNet(
            reservoir_size=settings.reservoir_size,
            input_dim=num_players,
            output_dim=self.num_actions,
            seed=self.seed + (1,),
            spectral_radius=settings.spectral_radius,
            learning_rate=settings.learning_rate,
            normalised=True,
            input_scaling=settings.input_scaling,
            bias_scaling=settings.bias_scaling,
        )
        """The utility estimator, with one readout row per action."""

        self.transfer: EsnNet | None = EsnNet(
            reservoir_size=settings.reservoir_size,
            input_dim=num_players + 1,
            output_dim=1,
            seed=self.seed + (2,),
            spectral_radius=settings.spectral_radius,
            learning_rate=settings.transfer_learning_rate,
            normalised=True,
            input_scaling=settings.input_scaling,
            bias_scaling=settings.bias_scaling,
        ) if self.transfers else None
        """The estimator of the change in an action's utility caused by an environment change."""

        self.stored: np.ndarray | None = None
        """The utility estimates held just before the last environment change."""

    def estimates(self) -> np.ndarray:
        return self.base.predict()

    def _transfer_inputs(self, actions: np.ndarray) -> np.ndarray:
        """Append normalised action indices to the current strategy codes."""

        return np.column_stack((np.tile(self.codes, (len(actions), 1)), actions / self.num_actions))

    def update_estimates(self, action: int, utility: float) -> None:
        self.base.update(self.codes)

        if self.transfer is not None:
            self.transfer.update(self._transfer_inputs(np.array([action]))[0])

        # Leave the readouts alone until the reservoirs have forgotten their zero initial states.
        if self.base.updates <= self.settings.washout:
            return

        # The first samples of an action are averaged before the step settles at λ.
        self.base.train(utility, output=action, rate=max(1 / self.visit(action), self.settings.learning_rate))

        if self.transfer is not None and self.stored is not None:
            self.transfer.train(utility - self.stored[action])

class EsnTransfer(EsnLearner):
    """An echo state network learner that transfers its utility estimates across environment changes.

    After a change, the estimate of each action blends what the utility estimator has relearnt with the stored estimate shifted by the deviation the transfer network predicts. The stored estimate carries less weight the more often the action has been tried since the change, and the exploration schedule carries on where it was."""

    transfers = True
    restarts_on_change = False

    def __init__(self,
                 sbs: int,
                 actions: Sequence[Action],
                 num_players: int,
                 settings: LearnerSettings = None,
                 seed: Sequence[int] = (0,),
                 ) -> None:
        super().__init__(
            name='esn-transfer',
            sbs=sbs,
            actions=actions,
            num_players=num_players,
            settings=settings,
            seed=seed,
        )

    def transferred(self) -> np.ndarray:
        """Return the stored estimates shifted by the predicted utility deviation of every action."""

        return self.stored + self.transfer.probe(self._transfer_inputs(np.arange(self.num_actions)))

    def estimates(self) -> np.ndarray:
        relearnt = self.base.predict()

        if self.stored is None:
            return relearnt

        weight = self.visits / (self.visits + 1)

        return weight * relearnt + (1 - weight) * self.transferred()

    def on_change(self, event: ChangeEvent) -> None:
        # Store the estimates before visit counts are reset.
        self.stored = self.estimates().copy()

        # The stored estimates already include the last deviation, so deviations are learnt afresh.
        self.transfer.reset_readout()

        super().on_change(event)

class EsnPlain(EsnLearner):
    """An echo state network learner that starts learning over after every environment change."""

    def __init__(self,
                 sbs: int,
                 actions: Sequence[Action],
                 num_players: int,
                 settings: LearnerSettings = None,
                 seed: Sequence[int] = (0,),
                 ) -> None:
        super().__init__(
            name='esn-plain',
            sbs=sbs,
            actions=actions,
            num_players=num_players,
            settings=settings,
            seed=seed,
        )

    def on_change(self, event: ChangeEvent) -> None:
        super().on_change(event)

        self.base.reset_readout()
