import numpy as np
import pytest
import msgspec

from conftest import make_topology, matrix_game

from vrcorr.qos import evaluate_joint
from vrcorr.game import enumerate_actions, is_epsilon_ne
from vrcorr.config import ConfigError, LearnerSettings
from vrcorr.network import NetworkConfig
from vrcorr.learners import QCorrelated, QUncorrelated
from vrcorr.simulator import LEARNERS, Simulator, iterations_to_converge, self_play
from vrcorr.correlation import synthesize_overlap

SELF_PLAY = LearnerSettings(reservoir_size=20, washout=2, epsilon_decay=0.99)

class TestIterationsToConverge:
    def test_constant_curve_has_converged_from_the_start(self):
        assert iterations_to_converge(np.full(50, 3.0), 0.05, 10, 5) == 0

    def test_step(self):
        curve = np.concatenate((np.zeros(10), np.ones(20)))

        assert iterations_to_converge(curve, 0.05, 10, 1) == 10

    def test_smoothing_delays_convergence(self):
        curve = np.concatenate((np.zeros(10), np.ones(20)))

        # The trailing mean of five values first reaches 1 five iterations after the step.
        assert iterations_to_converge(curve, 0.05, 10, 5) == 14

    def test_empty_curve(self):
        assert iterations_to_converge([], 0.05, 10, 5) == 0

def _simulator(config, **kwargs) -> Simulator:
    return Simulator(config, show_progress=False, **kwargs)

class TestReplication:
    def test_learner_registry(self):
        assert set(LEARNERS) == {'esn-transfer', 'esn-plain', 'q-corr', 'q-nocorr'}

    @pytest.mark.parametrize('learner', sorted(LEARNERS))
    def test_deterministic_given_seed(self, tiny_config, learner):
        with _simulator(tiny_config) as first, _simulator(tiny_config) as second:
            a = first.run_replication(learner, 1, keep_slots=True)
            b = second.run_replication(learner, 1, keep_slots=True)

        assert a.run == b.run
        assert a.slots == b.slots
        np.testing.assert_array_equal(a.curve, b.curve)

    def test_replications_differ(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            a = simulator.run_replication('q-corr', 0)
            b = simulator.run_replication('q-corr', 1)

        assert not np.array_equal(a.curve, b.curve)

    def test_coverage_counts(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            run = simulator.run_replication('esn-plain', 0).run

        assert (run.covered_users, run.uncovered_users) == (6, 0)
        assert run.num_sbs == 2

    def test_slot_metrics_are_consistent(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            result = simulator.run_replication('esn-transfer', 0, keep_slots=True)

        slots_per_period = tiny_config.slots_per_period

        assert len(result.slots) == tiny_config.periods * slots_per_period * 2

        # The curve covers every slot from the start of the last change period.
        last_change = max(tiny_config.change_schedule)
        assert len(result.curve) == (tiny_config.periods - last_change) * slots_per_period

        by_slot = {}

        for metrics in result.slots:
            by_slot.setdefault((metrics.period, metrics.slot), []).append(metrics)

            assert 0 <= metrics.utility <= metrics.feasible_users + metrics.infeasible
            assert metrics.avg_delay_dl_s >= 0 and metrics.avg_delay_ul_s >= 0

        for (period, slot), metrics in by_slot.items():
            # Every covered user is either served in both directions or counted as infeasible.
            assert sum(m.feasible_users + m.infeasible for m in metrics) == 6

            if period >= last_change:
                iteration = (period - last_change) * slots_per_period + slot
                assert result.curve[iteration] == pytest.approx(sum(m.utility for m in metrics))

    def test_single_user_trace_is_constant(self, tiny_config):
        network = msgspec.structs.replace(tiny_config.network, num_users=1, num_sbs=1)
        config = msgspec.structs.replace(tiny_config, network=network, periods=1, change_schedule=())

        with _simulator(config) as simulator:
            result = simulator.run_replication('q-corr', 0)

        # A single user has a single action, whose utility never changes within a period.
        np.testing.assert_allclose(result.curve, result.curve[0])
        assert result.run.iterations_to_converge == 0
        assert result.run.final_utility == pytest.approx(result.curve[0])

    def test_held_channel_keeps_a_single_user_trace_constant(self, tiny_config):
        network = msgspec.structs.replace(tiny_config.network, num_users=1, num_sbs=1)
        config = msgspec.structs.replace(tiny_config, network=network, change_schedule=())

        with _simulator(config) as simulator:
            result = simulator.run_replication('q-corr', 0, hold_channel=True)

        # Nothing changes over the periods once the channel is held.
        assert len(result.curve) == config.periods * config.slots_per_period
        np.testing.assert_allclose(result.curve, result.curve[0])

    def test_unaware_learners_transmit_full_loads(self, tiny_config):
        network = NetworkConfig(num_users=3, num_sbs=1, num_downlink_rb=2, num_uplink_rb=2)
        topology = make_topology([[3, 0], [0, 4], [-2, -3]], [[0, 0]], network)
        content = synthesize_overlap(topology, tiny_config.content, 0)

        with _simulator(tiny_config) as simulator:
            aware = simulator._context(QCorrelated, network, topology, content, 0, 0)
            unaware = simulator._context(QUncorrelated, network, topology, content, 0, 0)

        # The users watch the same content from a few metres apart, so each is correlated with the others.
        assert np.all(unaware.dl_load > aware.dl_load)
        assert np.all(unaware.ul_load > aware.ul_load)
        np.testing.assert_array_equal(unaware.dl_load, content.base_dl_bits)
        np.testing.assert_array_equal(unaware.ul_load, content.base_ul_bits)

        action = enumerate_actions([0, 1, 2], network, 10)[0]
        correlated, uncorrelated = evaluate_joint(aware, [action]), evaluate_joint(unaware, [action])

        assert np.all(uncorrelated.dl_delay >= correlated.dl_delay)
        assert np.all(uncorrelated.ul_delay >= correlated.ul_delay)
        assert uncorrelated.sbs_utility[0] <= correlated.sbs_utility[0]

    def test_invalid_config_is_rejected(self, tiny_config):
        with pytest.raises(ConfigError):
            Simulator(msgspec.structs.replace(tiny_config, change_schedule=(3,)))

class TestExperiments:
    def test_sweep(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            result = simulator.sweep_sbs_count()

        assert len(result.runs) == 2 * 4 * 2
        assert [(row.num_sbs, row.learner) for row in result.rows] == [(b, l) for b in (1, 2) for l in tiny_config.learners]

        for row in result.rows:
            assert row.replications == 2
            assert row.mean_delay_s > 0 and row.std_delay_s >= 0

        assert result.slots == []

    def test_sweep_overrides(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            result = simulator.sweep_sbs_count(sbs_values=[2], learners=['q-nocorr'], keep_slots=True)

        assert [(row.num_sbs, row.learner) for row in result.rows] == [(2, 'q-nocorr')]
        assert len(result.slots) == 2 * tiny_config.periods * tiny_config.slots_per_period * 2

    def test_convergence(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            result = simulator.convergence_experiment(['esn-transfer', 'q-corr'])

        curve_length = (tiny_config.periods - 2) * tiny_config.slots_per_period

        assert len(result.curves) == 2 * curve_length
        assert [summary.learner for summary in result.summary] == ['esn-transfer', 'q-corr']

        for summary in result.summary:
            assert 0 <= summary.iterations_to_converge <= curve_length
            assert summary.replications == 2

    def test_transfer_converges_before_restarting_learners(self, tiny_config):
        learning = LearnerSettings(reservoir_size=20, washout=2, epsilon_decay=0.95, epsilon_floor=0.0)
        config = msgspec.structs.replace(tiny_config, learning=learning, periods=10, change_schedule=(5,), replications=4)

        with _simulator(config) as simulator:
            summary = {row.learner: row for row in simulator.convergence_experiment(['esn-transfer', 'esn-plain', 'q-corr']).summary}

        # Learners that restart explore again after the change while the transfer learner keeps exploiting.
        assert summary['esn-transfer'].mean_iterations < summary['esn-plain'].mean_iterations
        assert summary['esn-transfer'].mean_iterations < summary['q-corr'].mean_iterations

    def test_results_do_not_depend_on_workers(self, tiny_config):
        with _simulator(tiny_config, workers=1) as serial, _simulator(tiny_config, workers=3) as parallel:
            first = serial.convergence_experiment()
            second = parallel.convergence_experiment()

        assert first.runs == second.runs
        assert first.curves == second.curves
        assert first.summary == second.summary

class TestEquilibriumCheck:
    def test_reproducible(self, tiny_config):
        with _simulator(tiny_config) as first, _simulator(tiny_config) as second:
            assert first.ne_check('q-corr') == second.ne_check('q-corr')

    @pytest.mark.parametrize('learner', sorted(LEARNERS))
    def test_self_play_learns_the_equilibrium_of_a_dominance_solvable_game(self, learner):
        # The column player's second action dominates, and the row player's best reply to it is its own second action.
        game = matrix_game([[0.9, 0.2], [0.3, 0.6]], [[0.1, 0.8], [0.2, 0.9]])
        agents = [LEARNERS[learner](player, game.action_sets[player], 2, settings=SELF_PLAY, seed=(player,)) for player in range(2)]

        learnt = self_play(agents, game, 1000)

        assert learnt[0].probs[1] > 0.95 and learnt[1].probs[1] > 0.95
        assert is_epsilon_ne(learnt, game, 0.05).max_gain <= 0.05

    def test_learnt_strategies_are_an_equilibrium(self, tiny_config):
        config = msgspec.structs.replace(tiny_config, periods=50, learning=SELF_PLAY)

        with _simulator(config) as simulator:
            report = simulator.ne_check()

        assert report.learnt.max_gain <= 0.05
        assert report.learnt.is_equilibrium

    def test_report(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            report = simulator.ne_check()

        assert report.learner == 'esn-transfer'
        assert len(report.shape) == 2 and all(1 <= size <= 4 for size in report.shape)
        assert report.oracle.is_equilibrium
        assert report.learnt.max_gain == max(report.learnt.gains)

        for player, sbs in enumerate(sorted({row.sbs for row in report.rows})):
            rows = [row for row in report.rows if row.sbs == sbs]

            assert len(rows) == report.shape[player]
            assert sum(row.empirical_prob for row in rows) == pytest.approx(1.0)
            assert sum(row.ne_prob for row in rows) == pytest.approx(1.0)

            # The largest gain of a pure deviation is the player's gain in the equilibrium check.
            assert max(row.deviation_gain for row in rows) == pytest.approx(report.learnt.gains[player], abs=1e-9)

class TestMetricsConservation:
    def test_average_delay_is_recomputable_from_slot_rows(self, tiny_config):
        with _simulator(tiny_config) as simulator:
            result = simulator.run_replication('q-nocorr', 1, keep_slots=True)

        total = sum(m.feasible_users * (m.avg_delay_dl_s + m.avg_delay_ul_s) for m in result.slots)
        users = sum(m.feasible_users for m in result.slots)

        assert result.run.avg_user_delay_s == pytest.approx(total / users, rel=1e-9)

    def test_transfer_is_inert_without_changes(self, tiny_config):
        config = msgspec.structs.replace(tiny_config, change_schedule=())

        with _simulator(config) as simulator:
            transfer = simulator.run_replication('esn-transfer', 0)
            plain = simulator.run_replication('esn-plain', 0)

        np.testing.assert_array_equal(transfer.curve, plain.curve)
