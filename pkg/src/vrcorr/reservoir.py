"""Echo state networks with linear readouts trained online by least mean squares."""

from typing import Sequence

import numpy as np

class DimensionError(ValueError):
    """An input vector does not match the input dimension of a network."""

    def __init__(
        self,
        message: str = 'The length of the input vector does not match the input dimension of the echo state network.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class EsnNet:
    def __init__(self,
                 reservoir_size: int,
                 input_dim: int,
                 output_dim: int = 1,
                 seed: int | Sequence[int] = 0,
                 spectral_radius: float = 0.9,
                 learning_rate: float = 0.03,
                 normalised: bool = False,
                 input_scaling: float = 1.0,
                 bias_scaling: float = 0.0,
                 ) -> None:
        """An echo state network with a fixed random reservoir and a trainable linear readout.

        Args:
            reservoir_size (int): The number of reservoir units, N_w.
            input_dim (int): The length of the input vectors.
            output_dim (int, optional): The number of outputs, each with its own readout row. Defaults to 1.
            seed (int | Sequence[int], optional): The seed of the input and reservoir weights. Defaults to 0.
            spectral_radius (float, optional): The spectral radius the reservoir weights are scaled to. Defaults to 0.9.
            input_scaling (float, optional): The factor the input weights are multiplied by. Defaults to 1.0.
            bias_scaling (float, optional): The scale of a random bias added to every unit, drawn uniformly from [-1, 1]. Defaults to 0.0, which disables the bias.
            learning_rate (float, optional): The step size of readout training. Defaults to 0.03.
            normalised (bool, optional): Whether to divide readout training steps by the squared norm of the state, which keeps training stable for large reservoirs. Defaults to False."""

        if reservoir_size < 1:
            raise ValueError(f'An echo state network needs at least one reservoir unit, not {reservoir_size}.')

        self.reservoir_size = reservoir_size
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.spectral_radius = spectral_radius
        self.learning_rate = learning_rate
        self.normalised = normalised

        rng = np.random.default_rng(seed)

        self.input_weights: np.ndarray = input_scaling * rng.uniform(-1.0, 1.0, (reservoir_size, input_dim))
        """W^in, indexed by `[unit, input]`."""

        reservoir_weights = rng.uniform(-1.0, 1.0, (reservoir_size, reservoir_size))
        radius = np.max(np.abs(np.linalg.eigvals(reservoir_weights)))

        if radius > 0:
            reservoir_weights *= spectral_radius / radius

        self.reservoir_weights: np.ndarray = reservoir_weights
        """W, indexed by `[unit, unit]`."""

        # Drawn last so that the weights do not depend on whether there is a bias.
        self.bias: np.ndarray = bias_scaling * rng.uniform(-1.0, 1.0, reservoir_size)

        self.readout: np.ndarray = np.zeros((output_dim, reservoir_size))
        """W^out, indexed by `[output, unit]`."""

        self.state: np.ndarray = np.zeros(reservoir_size)
        """The reservoir state μ."""

        self.updates: int = 0
        """The number of reservoir updates made so far."""

    def _activate(self, state: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return np.tanh(self.reservoir_weights @ state + self.input_weights @ inputs + self.bias)

    def update(self, inputs: Sequence[float]) -> np.ndarray:
        """Advance the reservoir by one step: μ_t = tanh(W μ_{t-1} + W^in x_t + b)."""

        inputs = np.asarray(inputs, dtype=float)

        if inputs.shape != (self.input_dim,):
            raise DimensionError(f'Expected an input vector of length {self.input_dim} but received one of shape {inputs.shape}.')

        self.state = self._activate(self.state, inputs)
        self.updates += 1

        return self.state

    def predict(self, output: int | None = None) -> float | np.ndarray:
        """Compute the readout of the current state, y = W^out μ, for a single output or for all of them."""

        if output is None:
            return self.readout @ self.state

        return float(self.readout[output] @ self.state)

    def train(self, target: float, output: int = 0, rate: float | None = None) -> float:
        """Move one readout row towards a target by a least mean squares step, W^out ← W^out + λ (target - y) μ^T.

        `rate` overrides the learning rate for this step. With a normalised step, a rate of 1 makes the row reproduce the target exactly for the current state.

        Returns the error before the step."""

        error = target - self.predict(output)
        step = self.learning_rate if rate is None else rate

        if self.normalised:
            energy = float(self.state @ self.state)

            # A zero state carries no information about the target.
            if energy == 0:
                return error

            step /= energy

        self.readout[output] += step * error * self.state

        return error

    def probe(self, inputs: np.ndarray, output: int = 0) -> np.ndarray:
        """Predict the readout that each row of `inputs` would produce if it were the next input, without changing the state."""

        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))

        if inputs.shape[1] != self.input_dim:
            raise DimensionError(f'Expected input vectors of length {self.input_dim} but received ones of length {inputs.shape[1]}.')

        states = np.tanh(self.reservoir_weights @ self.state + inputs @ self.input_weights.T + self.bias)

        return states @ self.readout[output]

    def reset_readout(self) -> None:
        """Forget everything the readout has learnt."""

        self.readout[:] = 0.0
