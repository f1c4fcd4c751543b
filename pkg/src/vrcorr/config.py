"""Experiment configuration and the flat `key = value` configuration file format."""

import os

import numpy as np
import regex
import msgspec

from .network import NetworkConfig, dbm_to_watts
from .correlation import ContentParams

LEARNER_NAMES: tuple[str, ...] = ('esn-transfer', 'esn-plain', 'q-corr', 'q-nocorr')
"""The names of the learning algorithms the simulator can run."""

class ConfigError(ValueError):
    """A configuration is malformed or violates a parameter constraint."""

    def __init__(
        self,
        message: str = 'The configuration is invalid.',
    ) -> None:
        self.message = message

        super().__init__(self.message)

class LearnerSettings(msgspec.Struct, frozen = True):
    """Hyperparameters of the learning algorithms."""

    reservoir_size: int = 1000
    spectral_radius: float = 0.9
    input_scaling: float = 0.1
    """The factor the input weights of the learners' reservoirs are multiplied by."""
    bias_scaling: float = 1.0
    """The scale of the random bias fed to every unit of the learners' reservoirs."""
    learning_rate: float = 0.03
    """λ, the readout learning rate of the utility estimator."""
    transfer_learning_rate: float = 0.3
    """λ′, the readout learning rate of the utility deviation estimator."""
    washout: int = 10
    """The number of reservoir updates made before readouts are first trained."""
    q_step_size: float = 0.03
    epsilon_start: float = 0.5
    epsilon_decay: float = 0.995
    epsilon_floor: float = 0.01

class ExperimentConfig(msgspec.Struct, frozen = True):
    """The complete configuration of an experiment."""

    network: NetworkConfig = msgspec.field(default_factory=NetworkConfig)
    content: ContentParams = msgspec.field(default_factory=ContentParams)
    learning: LearnerSettings = msgspec.field(default_factory=LearnerSettings)
    learners: tuple[str, ...] = LEARNER_NAMES
    periods: int = 10
    replications: int = 20
    seed: int = 0
    action_cap: int = 200
    """The largest number of actions an SBS may have; larger action spaces are sampled down to this size."""
    change_schedule: tuple[int, ...] = (6,)
    """The periods at the start of which users' content and correlations change."""
    output_dir: str = 'results'
    sbs_values: tuple[int, ...] = (2, 3, 4, 5, 6, 7)
    """The SBS counts swept over by the delay experiment."""
    convergence_tolerance: float = 0.05
    convergence_window: int = 100
    smoothing_window: int = 20
    dominant_ratio: float = 100.0
    marginal_ratio: float = 0.01
    workers: int = 0
    """The number of replications run concurrently, or 0 to use every logical CPU but one."""

    @property
    def slots_per_period(self) -> int:
        return self.network.period_length

    def validate(self) -> 'ExperimentConfig':
        """Check every parameter constraint, raising a `ConfigError` on the first violation, and return the config."""

        network, content, learning = self.network, self.content, self.learning

        positive = {
            'area_radius' : network.area_radius,
            'sbs_coverage_radius' : network.sbs_coverage_radius,
            'num_users' : network.num_users,
            'num_sbs' : network.num_sbs,
            'subcarrier_bandwidth' : network.subcarrier_bandwidth,
            'num_downlink_rb' : network.num_downlink_rb,
            'num_uplink_rb' : network.num_uplink_rb,
            'sbs_tx_power' : network.sbs_tx_power,
            'user_tx_power' : network.user_tx_power,
            'noise_power' : network.noise_power,
            'path_loss_exponent' : network.path_loss_exponent,
            'backhaul_total' : network.backhaul_total,
            'compute_capacity' : network.compute_capacity,
            'compute_levels' : network.compute_levels,
            'corr_dist_exponent' : network.corr_dist_exponent,
            'corr_dist_scale' : network.corr_dist_scale,
            'tolerable_delay_dl' : network.tolerable_delay_dl,
            'tolerable_delay_ul' : network.tolerable_delay_ul,
            'period_length' : network.period_length,
            'num_contents' : network.num_contents,
            'tracking_std' : network.tracking_std,
            'rate_requirement' : content.rate_requirement,
            'period_duration' : content.period_duration,
            'ul_load_ratio' : content.ul_load_ratio,
            'pixels_per_user' : content.pixels_per_user,
            'reservoir_size' : learning.reservoir_size,
            'input_scaling' : learning.input_scaling,
            'learning_rate' : learning.learning_rate,
            'transfer_learning_rate' : learning.transfer_learning_rate,
            'q_step_size' : learning.q_step_size,
            'epsilon_decay' : learning.epsilon_decay,
            'periods' : self.periods,
            'replications' : self.replications,
            'action_cap' : self.action_cap,
            'convergence_tolerance' : self.convergence_tolerance,
            'convergence_window' : self.convergence_window,
            'smoothing_window' : self.smoothing_window,
            'marginal_ratio' : self.marginal_ratio,
        }

        for key, value in positive.items():
            if not value > 0:
                raise ConfigError(f'`{key}` must be positive, not {value}.')

        if not 0 <= content.overlap_low <= content.overlap_high <= 1:
            raise ConfigError(f'The overlap fractions must satisfy 0 <= overlap_low <= overlap_high <= 1, not {content.overlap_low} and {content.overlap_high}.')

        if not 0 < learning.spectral_radius < 1:
            raise ConfigError(f'`spectral_radius` must lie strictly between 0 and 1 for the reservoir to have echo states, not {learning.spectral_radius}.')

        if not 0 <= learning.epsilon_floor <= learning.epsilon_start <= 1:
            raise ConfigError(f'The exploration rates must satisfy 0 <= epsilon_floor <= epsilon_start <= 1, not {learning.epsilon_floor} and {learning.epsilon_start}.')

        if learning.epsilon_decay > 1 or learning.q_step_size > 1:
            raise ConfigError('`epsilon_decay` and `q_step_size` must not exceed 1.')

        if learning.washout < 0 or learning.bias_scaling < 0 or self.workers < 0 or self.seed < 0:
            raise ConfigError('`washout`, `bias_scaling`, `workers` and `seed` must not be negative.')

        if not self.learners or (unknown := set(self.learners) - set(LEARNER_NAMES)):
            raise ConfigError(f'`learners` must name at least one of {", ".join(LEARNER_NAMES)}; unknown learners: {", ".join(sorted(unknown)) if self.learners else "none given"}.')

        if any(not 1 <= period < self.periods for period in self.change_schedule):
            raise ConfigError(f'Every entry of `change_schedule` must be a period between 1 and {self.periods - 1}, not {list(self.change_schedule)}.')

        if not self.sbs_values or any(value < 1 for value in self.sbs_values):
            raise ConfigError(f'`sbs_values` must contain positive SBS counts, not {list(self.sbs_values)}.')

        if self.dominant_ratio <= 1 or self.marginal_ratio >= 1:
            raise ConfigError('`dominant_ratio` must exceed 1 and `marginal_ratio` must be below 1.')

        # The maximum delay is never below the delay of a lone user 1 m from its SBS with unit fading and no interference, so that delay must already exceed the tolerable delay.
        snr_dl = network.sbs_tx_power / network.noise_power
        snr_ul = network.user_tx_power / network.noise_power

        nominal_dl = content.base_dl_bits / (network.subcarrier_bandwidth * np.log2(1 + snr_dl)) + content.base_dl_bits / network.backhaul_share
        nominal_ul = content.base_ul_bits / (network.subcarrier_bandwidth * np.log2(1 + snr_ul)) + content.base_ul_bits * network.compute_levels / network.compute_capacity

        if nominal_dl <= network.tolerable_delay_dl:
            raise ConfigError(f'The maximum downlink delay ({nominal_dl:.4g} s at best) does not exceed the tolerable downlink delay ({network.tolerable_delay_dl} s), so downlink utilities cannot be normalised.')

        if nominal_ul <= network.tolerable_delay_ul:
            raise ConfigError(f'The maximum uplink delay ({nominal_ul:.4g} s at best) does not exceed the tolerable uplink delay ({network.tolerable_delay_ul} s), so uplink utilities cannot be normalised.')

        return self

SECTIONS: dict[str, type[msgspec.Struct]] = {
    'network' : NetworkConfig,
    'content' : ContentParams,
    'learning' : LearnerSettings,
}
"""The nested sections of an `ExperimentConfig`, whose fields share one flat key namespace."""

ALIASES: dict[str, str] = {
    'P_B' : 'sbs_tx_power',
    'P_U' : 'user_tx_power',
    'N_0' : 'noise_power',
    'sigma2' : 'noise_power',
    'V_F' : 'backhaul_total',
    'r' : 'area_radius',
    'r_B' : 'sbs_coverage_radius',
    'U' : 'num_users',
    'B' : 'num_sbs',
    'S' : 'num_downlink_rb',
    'V' : 'num_uplink_rb',
    'M' : 'compute_levels',
    'c' : 'compute_capacity',
    'alpha' : 'corr_dist_exponent',
    'kappa' : 'corr_dist_scale',
    'beta' : 'path_loss_exponent',
    'T' : 'period_length',
    'N_w' : 'reservoir_size',
    'lambda' : 'learning_rate',
    "lambda'" : 'transfer_learning_rate',
    'gamma_D' : 'tolerable_delay_dl',
    'gamma_D_u' : 'tolerable_delay_ul',
}
"""Short parameter symbols accepted in place of field names."""

UNITS: dict[str, tuple[str, float]] = {
    'W' : ('power', 1.0),
    'mW' : ('power', 1e-3),
    'dBm' : ('power', 1.0), # NOTE dBm is logarithmic and is converted separately.
    'Hz' : ('frequency', 1.0),
    'kHz' : ('frequency', 1e3),
    'MHz' : ('frequency', 1e6),
    'GHz' : ('frequency', 1e9),
    'bit' : ('bits', 1.0),
    'kbit' : ('bits', 1e3),
    'Mbit' : ('bits', 1e6),
    'Gbit' : ('bits', 1e9),
    'bit/s' : ('rate', 1.0),
    'kbit/s' : ('rate', 1e3),
    'Mbit/s' : ('rate', 1e6),
    'Gbit/s' : ('rate', 1e9),
    'm' : ('length', 1.0),
    'km' : ('length', 1e3),
    'm^2' : ('area', 1.0),
    's' : ('time', 1.0),
    'ms' : ('time', 1e-3),
}
"""A map of unit suffixes to their dimensions and SI scale factors."""

DIMENSIONS: dict[str, str] = {
    'sbs_tx_power' : 'power',
    'user_tx_power' : 'power',
    'noise_power' : 'power',
    'subcarrier_bandwidth' : 'frequency',
    'backhaul_total' : 'rate',
    'compute_capacity' : 'rate',
    'rate_requirement' : 'rate',
    'area_radius' : 'length',
    'sbs_coverage_radius' : 'length',
    'corr_dist_scale' : 'area',
    'tolerable_delay_dl' : 'time',
    'tolerable_delay_ul' : 'time',
    'period_duration' : 'time',
}
"""The dimensions of the keys that accept unit suffixes."""

LIST_KEYS: frozenset[str] = frozenset({'learners', 'change_schedule', 'sbs_values'})

LINE_PATTERN = regex.compile(r"^(?P<key>[A-Za-z_][\w']*)\s*=\s*(?P<value>.+?)$")
NUMBER_PATTERN = regex.compile(r'^(?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(?P<unit>[A-Za-z][\w^/]*)?$')
CAMEL_PATTERN = regex.compile(r'(?<=[a-z0-9])([A-Z])')

def _field_sections() -> dict[str, str | None]:
    """Map every flat key to the section holding it, or `None` for top-level keys."""

    sections = {field.name: section for section, struct in SECTIONS.items() for field in msgspec.structs.fields(struct)}

    for field in msgspec.structs.fields(ExperimentConfig):
        if field.name not in SECTIONS:
            sections[field.name] = None

    return sections

FIELD_SECTIONS: dict[str, str | None] = _field_sections()

def canonical_key(key: str) -> str | None:
    """Resolve a configuration key, alias or camelCase name to a field name, or `None` if it is unknown."""

    if key in ALIASES:
        return ALIASES[key]

    if key in FIELD_SECTIONS:
        return key

    snake = CAMEL_PATTERN.sub(r'_\1', key).lower()

    return snake if snake in FIELD_SECTIONS else None

def parse_value(key: str, raw: str) -> int | float | str:
    """Parse a scalar value, converting any unit suffix into SI units."""

    match = NUMBER_PATTERN.match(raw)

    if not match:
        return raw

    number, unit = match['number'], match['unit']
    value = float(number) if regex.search(r'[.eE]', number) else int(number)

    if unit is None:
        return value

    if unit not in UNITS:
        raise ConfigError(f'`{key}` has an unknown unit, `{unit}`.')

    dimension, scale = UNITS[unit]
    expected = DIMENSIONS.get(key)

    # Totals of bits may be given for rates, with per second implied.
    if expected is None or not (dimension == expected or (dimension, expected) == ('bits', 'rate')):
        raise ConfigError(f'`{key}` does not accept values in {unit}.')

    if unit == 'dBm':
        return dbm_to_watts(float(value))

    return value * scale

def parse_config(text: str) -> ExperimentConfig:
    """Parse the text of a configuration file into a validated `ExperimentConfig`."""

    data: dict[str, dict] = {section: {} for section in SECTIONS}
    seen: set[str] = set()

    for number, line in enumerate(text.splitlines(), start=1):
        # Strip comments and surrounding whitespace.
        line = line.split('#', 1)[0].strip()

        if not line:
            continue

        match = LINE_PATTERN.match(line)

        if not match:
            raise ConfigError(f'Line {number} is not of the form `key = value`: {line!r}.')

        key = canonical_key(match['key'])

        if key is None:
            raise ConfigError(f'Line {number} sets an unknown key, `{match["key"]}`.')

        if key in seen:
            raise ConfigError(f'Line {number} sets `{key}` a second time.')

        seen.add(key)

        raw = match['value'].strip()

        if key in LIST_KEYS:
            value = [parse_value(key, item.strip()) for item in raw.split(',') if item.strip()]

        else:
            value = parse_value(key, raw)

        section = FIELD_SECTIONS[key]

        if section is None:
            data[key] = value

        else:
            data[section][key] = value

    try:
        config = msgspec.convert(data, ExperimentConfig)

    except msgspec.ValidationError as e:
        raise ConfigError(f'The configuration has a value of the wrong type: {e}.') from e

    return config.validate()

def load_config(path: str | os.PathLike | None = None) -> ExperimentConfig:
    """Load and validate a configuration file. Keys that are not set keep their defaults; without a path every key does."""

    if path is None:
        return ExperimentConfig().validate()

    try:
        with open(path, 'r', encoding='utf-8') as reader:
            text = reader.read()

    except OSError as e:
        raise ConfigError(f'Unable to read the configuration file {path}: {e}.') from e

    return parse_config(text)
