import os
import functools

import rich
import click
import msgspec

from rich.table import Table
from rich.markdown import Markdown
from rich.traceback import install

from .config import LEARNER_NAMES, ConfigError, ExperimentConfig, load_config
from .export import export_metrics
from .helpers import console
from .metadata import TOOL_VERSION
from .simulator import Simulator, SweepRow, RunSummary, SlotMetrics, CurvePoint, ConvergenceSummary, NeRow

# Setup traceback pretty printing with `rich` (suppressing full traceback for exceptions raised by `rich` and `click`).
install(suppress=[rich, click])

def _split(value: str | None) -> list[str]:
    return [item.strip() for item in value.split(',') if item.strip()] if value else []

def _learners(ctx, param, value: str | None) -> list[str] | None:
    learners = _split(value)

    if unknown := [learner for learner in learners if learner not in LEARNER_NAMES]:
        raise click.BadParameter(f'Unknown learners: {", ".join(unknown)}. Possible learners are {", ".join(LEARNER_NAMES)}.')

    return learners or None

def _sbs_values(ctx, param, value: str | None) -> list[int] | None:
    try:
        values = [int(item) for item in _split(value)]

    except ValueError:
        raise click.BadParameter(f'Expected a comma separated list of SBS counts, not {value!r}.')

    return values or None

def experiment_options(func):
    """Attach the options shared by every experiment command."""

    @click.option('-c', '--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None, help='The path to a `key = value` configuration file. Defaults to the built-in parameters.')
    @click.option('--seed', type=click.IntRange(min=0), default=None, help='Overrides the configured random seed.')
    @click.option('-r', '--replications', type=click.IntRange(min=1), default=None, help='Overrides the configured number of replications.')
    @click.option('-o', '--out', 'output_dir', default=None, help='The directory to write results to. Defaults to the configured output directory.')
    @click.option('-w', '--workers', type=click.IntRange(min=1), default=None, help='The number of replications run concurrently. Defaults to the number of logical CPUs minus one.')
    @click.option('-q', '--quiet', is_flag=True, default=False, help='Hide progress bars.')
    @functools.wraps(func)
    def wrapper(config_path, seed, replications, output_dir, workers, quiet, **kwargs):
        config = _load(config_path, seed=seed, replications=replications, output_dir=output_dir, workers=workers)

        return func(config=config, show_progress=not quiet, **kwargs)

    return wrapper

def _load(config_path: str | None, **overrides) -> ExperimentConfig:
    """Load a configuration, apply command line overrides and turn configuration errors into usage errors."""

    try:
        config = load_config(config_path)
        config = msgspec.structs.replace(config, **{key: value for key, value in overrides.items() if value is not None})

        return config.validate()

    except ConfigError as e:
        raise click.ClickException(e.message) from e

def _table(title: str, records: list[msgspec.Struct], record_type: type[msgspec.Struct]) -> Table:
    """Render records as a `rich` table."""

    table = Table(title=title)
    columns = [field.name for field in msgspec.structs.fields(record_type)]

    for column in columns:
        table.add_column(column)

    for record in records:
        table.add_row(*(f'{value:.6g}' if isinstance(value, float) else str(value) for value in msgspec.structs.astuple(record)))

    return table

@click.group('vrcorr', context_settings={'help_option_names': ['-h', '--help']})
@click.version_option(version=TOOL_VERSION)
def main():
    """Simulate SBSs learning to allocate spectrum and compute to VR users whose data are correlated."""

@main.command()
@experiment_options
@click.option('-l', '--learner', 'learners', callback=_learners, default=None, help='The learners to compare, delimited by commas. Defaults to the configured learners.')
@click.option('-b', '--sbs', 'sbs_values', callback=_sbs_values, default=None, help='The numbers of SBSs to sweep over, delimited by commas. Defaults to the configured values.')
@click.option('--per-slot', is_flag=True, default=False, help='Also write the metrics of every slot and SBS.')
def sweep(config: ExperimentConfig, show_progress, learners, sbs_values, per_slot):
    """Measure the average delay of each user against the number of SBSs."""

    console.print(Markdown('# Average user delay against the number of SBSs'))

    with Simulator(config, show_progress=show_progress) as simulator:
        result = simulator.sweep_sbs_count(sbs_values, learners, keep_slots=per_slot)

    outputs = {
        'sweep.csv' : (SweepRow, result.rows),
        'runs.csv' : (RunSummary, result.runs),
    }

    if per_slot:
        outputs['slots.csv'] = (SlotMetrics, result.slots)

    export_metrics(config.output_dir, config, outputs)

    console.print(_table('Average user delay', result.rows, SweepRow))
    console.print(f'Results written to {os.path.abspath(config.output_dir)}.')

@main.command()
@experiment_options
@click.option('-l', '--learner', 'learners', callback=_learners, default=None, help='The learners to compare, delimited by commas. Defaults to the configured learners.')
@click.option('--per-slot', is_flag=True, default=False, help='Also write the metrics of every slot and SBS.')
def converge(config: ExperimentConfig, show_progress, learners, per_slot):
    """Record how quickly each learner converges after the users' content changes."""

    console.print(Markdown('# Convergence after an environment change'))

    with Simulator(config, show_progress=show_progress) as simulator:
        result = simulator.convergence_experiment(learners, keep_slots=per_slot)

    outputs = {
        'convergence_curves.csv' : (CurvePoint, result.curves),
        'convergence_summary.csv' : (ConvergenceSummary, result.summary),
        'runs.csv' : (RunSummary, result.runs),
    }

    if per_slot:
        outputs['slots.csv'] = (SlotMetrics, result.slots)

    export_metrics(config.output_dir, config, outputs)

    console.print(_table('Iterations to converge', result.summary, ConvergenceSummary))
    console.print(f'Results written to {os.path.abspath(config.output_dir)}.')

@main.command('ne-check')
@experiment_options
@click.option('-l', '--learner', 'learners', callback=_learners, default='esn-transfer', show_default=True, help='The learner to play the game.')
def ne_check(config: ExperimentConfig, show_progress, learners):
    """Compare strategies learnt in self-play on a two SBS game with a Nash equilibrium."""

    if len(learners) != 1:
        raise click.BadParameter('The equilibrium check runs exactly one learner.', param_hint='--learner')

    console.print(Markdown('# Nash equilibrium check'))

    with Simulator(config, show_progress=show_progress) as simulator:
        report = simulator.ne_check(learners[0])

    export_metrics(config.output_dir, config, {'ne_check.csv' : (NeRow, report.rows)})

    console.print(_table(f'Strategies of {report.learner} on a game of shape {report.shape}', report.rows, NeRow))
    console.print(f'Maximum deviation gain against the learnt strategies: {report.learnt.max_gain:.6g} ({"an" if report.learnt.is_equilibrium else "not an"} ε-equilibrium).')
    console.print(f'Maximum deviation gain against the support enumeration equilibrium: {report.oracle.max_gain:.3g}.')

@main.command('validate-config')
@click.option('-c', '--config', 'config_path', type=click.Path(exists=True, dir_okay=False), required=True, help='The path to the configuration file to check.')
def validate_config(config_path):
    """Check a configuration file and print the parameters it resolves to."""

    config = _load(config_path)

    table = Table(title=f'Configuration {config_path}')
    table.add_column('key')
    table.add_column('value')

    for section in (config.network, config.content, config.learning, config):
        for field in msgspec.structs.fields(section):
            value = getattr(section, field.name)

            if not isinstance(value, msgspec.Struct):
                table.add_row(field.name, str(value))

    console.print(table)
    console.print('The configuration is valid.')

if __name__ == '__main__':
    main()
