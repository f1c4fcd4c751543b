import pytest

from click.testing import CliRunner

from vrcorr.cli import main

@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()

class TestValidateConfig:
    def test_valid_file(self, runner, tiny_config_file):
        result = runner.invoke(main, ['validate-config', '-c', tiny_config_file])

        assert result.exit_code == 0, result.output
        assert 'The configuration is valid.' in result.output

    def test_invalid_file(self, runner, tmp_path):
        path = tmp_path / 'broken.conf'
        path.write_text('U = -3\n', encoding='utf-8')

        result = runner.invoke(main, ['validate-config', '-c', str(path)])

        assert result.exit_code == 1
        assert 'num_users' in result.output

class TestExperiments:
    def test_sweep_is_reproducible(self, runner, tiny_config_file, tmp_path):
        outputs = []

        for name in ('first', 'second'):
            output_dir = tmp_path / name
            result = runner.invoke(main, ['sweep', '-c', tiny_config_file, '-o', str(output_dir), '-l', 'q-corr,esn-transfer', '-b', '2', '-q', '--per-slot'])

            assert result.exit_code == 0, result.output

            outputs.append({file: (output_dir / file).read_bytes() for file in ('sweep.csv', 'runs.csv', 'slots.csv')})

        assert outputs[0] == outputs[1]
        assert outputs[0]['sweep.csv'].splitlines()[0] == b'num_sbs,learner,mean_delay_s,std_delay_s,replications'
        assert len(outputs[0]['sweep.csv'].splitlines()) == 3

    def test_seed_override_changes_results(self, runner, tiny_config_file, tmp_path):
        runs = []

        for seed in ('1', '2'):
            output_dir = tmp_path / seed
            result = runner.invoke(main, ['converge', '-c', tiny_config_file, '-o', str(output_dir), '-l', 'q-corr', '--seed', seed, '-q'])

            assert result.exit_code == 0, result.output

            runs.append((output_dir / 'convergence_curves.csv').read_bytes())

        assert runs[0] != runs[1]

    def test_ne_check(self, runner, tiny_config_file, tmp_path):
        result = runner.invoke(main, ['ne-check', '-c', tiny_config_file, '-o', str(tmp_path), '-l', 'q-corr', '-q'])

        assert result.exit_code == 0, result.output
        assert (tmp_path / 'ne_check.csv').exists()
        assert (tmp_path / 'manifest.json').exists()

    @pytest.mark.parametrize('args', [
        ['ne-check', '-l', 'q-corr,esn-plain'],
        ['sweep', '-l', 'sarsa'],
        ['sweep', '-b', 'two'],
        ['converge', '-r', '0'],
    ])
    def test_usage_errors(self, runner, tiny_config_file, tmp_path, args):
        result = runner.invoke(main, args + ['-c', tiny_config_file, '-o', str(tmp_path), '-q'])

        assert result.exit_code == 2
