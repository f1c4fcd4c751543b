import itertools
import threading
import multiprocessing

from typing import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import msgspec

from .game import GameSpec, MixedStrategy, NashCheck, enumerate_actions, is_epsilon_ne, brute_force_ne, refined_levels
from .qos import PeriodContext, build_period_context, evaluate_joint
from .config import ConfigError, ExperimentConfig
from .helpers import log, warning, alive_map, trailing_mean
from .learner import Learner, ChangeEvent, agent_step, transfer_bootstrap
from .network import NetworkConfig, Topology, generate_topology, sample_channel
from .learners import EsnTransfer, EsnPlain, QCorrelated, QUncorrelated
from .correlation import ContentModel, synthesize_overlap, redraw_content, max_correlations, uncorrelated

# Initialise a map of the names of learning algorithms to their learners.
LEARNERS: dict[str, type[Learner]] = {
    'esn-transfer' : EsnTransfer,
    'esn-plain' : EsnPlain,
    'q-corr' : QCorrelated,
    'q-nocorr' : QUncorrelated,
}

# Random number streams. Every draw of a replication is keyed by `(seed, replication, stream, ...)`, so learners compared under the same seed face identical networks, contents and channels.
TOPOLOGY_STREAM = 0
CONTENT_STREAM = 1
CHANNEL_STREAM = 2
ACTIONS_STREAM = 3
AGENTS_STREAM = 4
REDRAW_STREAM = 5
NE_STREAM = 6

NE_PLACEMENT_ATTEMPTS = 100
"""The number of topologies drawn when searching for one in which both SBSs of the equilibrium check serve users."""

NE_EPSILON = 0.05
"""The largest deviation gain tolerated when checking learnt strategies for equilibrium."""

class SlotMetrics(msgspec.Struct, frozen = True):
    """The performance of one SBS in one slot. Delays are averaged over the SBS's users with finite delays."""

    replication: int
    period: int
    slot: int
    sbs: int
    utility: float
    avg_delay_dl_s: float
    avg_delay_ul_s: float
    feasible_users: int
    infeasible: int
    """The number of the SBS's users left without a resource block in some direction, whose delays are infinite."""

class RunSummary(msgspec.Struct, frozen = True):
    """The performance of a learner over one replication."""

    learner: str
    num_sbs: int
    replication: int
    covered_users: int
    uncovered_users: int
    iterations_to_converge: int
    final_utility: float
    avg_user_delay_s: float

class ReplicationResult(msgspec.Struct, frozen = True, eq = False):
    slots: list[SlotMetrics]
    run: RunSummary
    curve: np.ndarray
    """The network utility of every slot after the last environment change."""

class SweepRow(msgspec.Struct, frozen = True):
    num_sbs: int
    learner: str
    mean_delay_s: float
    std_delay_s: float
    replications: int

class SweepResult(msgspec.Struct, frozen = True):
    rows: list[SweepRow]
    runs: list[RunSummary]
    slots: list[SlotMetrics]

class CurvePoint(msgspec.Struct, frozen = True):
    learner: str
    iteration: int
    utility: float

class ConvergenceSummary(msgspec.Struct, frozen = True):
    learner: str
    iterations_to_converge: float
    """The median number of iterations to converge over replications."""
    mean_iterations: float
    final_utility: float
    replications: int

class ConvergenceResult(msgspec.Struct, frozen = True):
    curves: list[CurvePoint]
    summary: list[ConvergenceSummary]
    runs: list[RunSummary]
    slots: list[SlotMetrics]

class NeRow(msgspec.Struct, frozen = True):
    learner: str
    sbs: int
    action: int
    empirical_prob: float
    ne_prob: float
    deviation_gain: float

class NeReport(msgspec.Struct, frozen = True):
    """A comparison of the strategies learnt in self-play with a Nash equilibrium of the same game."""

    learner: str
    shape: tuple[int, ...]
    learnt: NashCheck
    oracle: NashCheck
    rows: list[NeRow]

def iterations_to_converge(curve: Sequence[float], tolerance: float, window: int, smoothing: int) -> int:
    """Count the iterations after which the smoothed curve stays within `tolerance` of the mean of its final `window` iterations.

    A curve that ends outside the tolerance has not converged and counts as its full length."""

    curve = np.asarray(curve, dtype=float)

    if not len(curve):
        return 0

    smoothed = trailing_mean(curve, smoothing)
    target = curve[-window:].mean()

    outside = np.flatnonzero(np.abs(smoothed - target) > tolerance * abs(target))

    return int(outside[-1] + 1) if len(outside) else 0

def self_play(agents: Sequence[Learner], game: GameSpec, iterations: int) -> list[MixedStrategy]:
    """Let learners play a game against each other repeatedly and return the empirical strategies of the second half of play."""

    counts = [np.zeros(size) for size in game.shape]

    for iteration in range(iterations):
        joint = agent_step(agents, game.utility)

        if iteration >= iterations // 2:
            for player, action in enumerate(joint):
                counts[player][action] += 1

    return [MixedStrategy(count / count.sum()) for count in counts]

class Simulator:
    """A simulator of SBSs learning to allocate resources to VR users."""

    def __init__(self,
                 config: ExperimentConfig = None,
                 workers: int = None,
                 show_progress: bool = True,
                 ) -> None:
        """Initialise the simulator.

        Args:
            config (ExperimentConfig, optional): The experiment configuration. Defaults to `ExperimentConfig()`.
            workers (int, optional): The number of replications run concurrently. Defaults to the configured number of workers or, failing that, the number of logical CPUs on the system minus one, or one if there is only one logical CPU.
            show_progress (bool, optional): Whether to display progress bars. Defaults to `True`."""

        self.config: ExperimentConfig = (config or ExperimentConfig()).validate()

        self.workers: int = workers or self.config.workers or multiprocessing.cpu_count() - 1 or 1
        """The number of replications run concurrently."""

        # NOTE Replications are independent and each one draws from its own random number streams, so results do not depend on the number of workers.
        self.executor: ThreadPoolExecutor | None = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

        self.show_progress: bool = show_progress

        self._warned: set[int] = set()
        self._lock = threading.Lock()

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()

    def __enter__(self) -> 'Simulator':
        return self

    def __exit__(self, *args) -> None:
        self.close()

    def _key(self, replication: int, stream: int, *rest: int) -> tuple[int, ...]:
        return (self.config.seed, replication, stream) + tuple(rest)

    def _warn_refined(self, num_users: int, network: NetworkConfig) -> None:
        """Warn, once per cell size, that compute quanta have been refined."""

        with self._lock:
            if num_users in self._warned:
                return

            self._warned.add(num_users)

        warning(f'An SBS serves {num_users} users but compute is split into {network.compute_levels} levels, so its compute is split into {num_users} levels instead.')

    def _action_sets(self, topology: Topology, network: NetworkConfig, replication: int, cap: int) -> list[tuple]:
        action_sets = []

        for sbs in range(topology.num_sbs):
            users = topology.users_of(sbs)

            if refined_levels(len(users), network) > network.compute_levels:
                self._warn_refined(len(users), network)

            action_sets.append(enumerate_actions(users, network, cap, self._key(replication, ACTIONS_STREAM, sbs)))

        return action_sets

    def _context(self, learner: type[Learner], network: NetworkConfig, topology: Topology, content: ContentModel, replication: int, period: int) -> PeriodContext:
        """Build the context of a period as seen by a learner, with the channel realisation drawn for `period`."""

        correlation = max_correlations(topology, content, network)

        # SBSs that ignore correlation transmit every user's full load.
        if not learner.correlation_aware:
            correlation = uncorrelated(correlation)

        channel = sample_channel(topology, network, self._key(replication, CHANNEL_STREAM, period))

        return build_period_context(network, topology, channel, content, correlation)

    @log
    def run_replication(self, learner: str, replication: int, num_sbs: int | None = None, keep_slots: bool = False, hold_channel: bool = False) -> ReplicationResult:
        """Simulate one replication of a learner.

        Args:
            learner (str): The name of the learning algorithm.
            replication (int): The index of the replication, which selects its random number streams.
            num_sbs (int | None, optional): Overrides the configured number of SBSs. Defaults to `None`.
            keep_slots (bool, optional): Whether to return the metrics of every slot and SBS. Defaults to `False`.
            hold_channel (bool, optional): Whether to keep the channel realisation of the first period for the whole run instead of redrawing it every period. Defaults to `False`.

        Returns:
            ReplicationResult: The per-slot metrics, the run summary and the network utility curve after the last change."""

        config = self.config
        network = config.network if num_sbs is None else msgspec.structs.replace(config.network, num_sbs=num_sbs)
        learner_type = LEARNERS[learner]
        slots_per_period = config.slots_per_period

        topology = generate_topology(network, self._key(replication, TOPOLOGY_STREAM))
        content = synthesize_overlap(topology, config.content, self._key(replication, CONTENT_STREAM))

        # Action sets depend only on who each SBS serves, which never changes.
        action_sets = self._action_sets(topology, network, replication, config.action_cap)
        players = [sbs for sbs, actions in enumerate(action_sets) if actions]

        agents = [
            learner_type(
                sbs=sbs,
                actions=action_sets[sbs],
                num_players=len(players),
                settings=config.learning,
                seed=self._key(replication, AGENTS_STREAM, sbs),
            )

            for sbs in players
        ]

        association = topology.association
        covered = topology.covered
        sbs_count = topology.num_sbs

        network_utility = np.zeros(config.periods * slots_per_period)
        delay_sum, feasible_count = 0.0, 0
        last_change = 0
        slots: list[SlotMetrics] = []

        for period in range(config.periods):
            if period in config.change_schedule:
                topology = redraw_content(topology, network, self._key(replication, REDRAW_STREAM, period))
                content = synthesize_overlap(topology, config.content, self._key(replication, CONTENT_STREAM, period))

                for agent in agents:
                    transfer_bootstrap(agent, ChangeEvent(period=period, action_count=agent.num_actions))

                last_change = period * slots_per_period

            context = self._context(learner_type, network, topology, content, replication, 0 if hold_channel else period)

            # The context is fixed within a period so each joint action only needs evaluating once.
            outcomes: dict[tuple[int, ...], tuple] = {}

            def outcome(joint: tuple[int, ...]) -> tuple:
                if joint not in outcomes:
                    allocations = [None] * sbs_count

                    for sbs, action in zip(players, joint):
                        allocations[sbs] = action_sets[sbs][action]

                    result = evaluate_joint(context, allocations)

                    # Aggregate delays over the users of each SBS whose delays are finite.
                    feasible = covered & np.isfinite(result.dl_delay) & np.isfinite(result.ul_delay)
                    counts = np.bincount(association[feasible], minlength=sbs_count)
                    dl_sums = np.bincount(association[feasible], weights=result.dl_delay[feasible], minlength=sbs_count)
                    ul_sums = np.bincount(association[feasible], weights=result.ul_delay[feasible], minlength=sbs_count)
                    infeasible = np.bincount(association[covered & ~feasible], minlength=sbs_count)

                    outcomes[joint] = (result.sbs_utility, counts, dl_sums, ul_sums, infeasible)

                return outcomes[joint]

            for slot in range(slots_per_period):
                joint = agent_step(agents, lambda joint: outcome(joint)[0][players]) if agents else ()
                sbs_utility, counts, dl_sums, ul_sums, infeasible = outcome(joint)

                iteration = period * slots_per_period + slot
                network_utility[iteration] = sbs_utility.sum()
                delay_sum += float(dl_sums.sum() + ul_sums.sum())
                feasible_count += int(counts.sum())

                if keep_slots:
                    safe = np.maximum(counts, 1)

                    slots.extend(
                        SlotMetrics(
                            replication=replication,
                            period=period,
                            slot=slot,
                            sbs=sbs,
                            utility=float(sbs_utility[sbs]),
                            avg_delay_dl_s=float(dl_sums[sbs] / safe[sbs]),
                            avg_delay_ul_s=float(ul_sums[sbs] / safe[sbs]),
                            feasible_users=int(counts[sbs]),
                            infeasible=int(infeasible[sbs]),
                        )

                        for sbs in range(sbs_count)
                    )

        curve = network_utility[last_change:]

        run = RunSummary(
            learner=learner,
            num_sbs=sbs_count,
            replication=replication,
            covered_users=int(covered.sum()),
            uncovered_users=int((~covered).sum()),
            iterations_to_converge=iterations_to_converge(curve, config.convergence_tolerance, config.convergence_window, config.smoothing_window),
            final_utility=float(curve[-config.convergence_window:].mean()),
            avg_user_delay_s=delay_sum / feasible_count if feasible_count else 0.0,
        )

        return ReplicationResult(slots=slots, run=run, curve=curve)

    def _run_all(self, tasks: Sequence[tuple], keep_slots: bool, hold_channel: bool = False) -> list[ReplicationResult]:
        """Run `(learner, replication, num_sbs)` tasks over the worker pool, returning results in task order."""

        return alive_map(
            lambda task: self.run_replication(*task, keep_slots=keep_slots, hold_channel=hold_channel),
            tasks,
            executor=self.executor,
            show_progress=self.show_progress,
        )

    def sweep_sbs_count(self, sbs_values: Iterable[int] = None, learners: Iterable[str] = None, keep_slots: bool = False) -> SweepResult:
        """Measure the average user delay of each learner for each number of SBSs.

        Replications in which no user is covered have no delays and are left out of the averages."""

        sbs_values = list(sbs_values or self.config.sbs_values)
        learners = list(learners or self.config.learners)

        tasks = [
            (learner, replication, num_sbs)

            for num_sbs, learner, replication in itertools.product(sbs_values, learners, range(self.config.replications))
        ]

        results = self._run_all(tasks, keep_slots)

        rows = []

        for num_sbs, learner in itertools.product(sbs_values, learners):
            delays = [
                result.run.avg_user_delay_s

                for (name, _, count), result in zip(tasks, results)
                if name == learner and count == num_sbs and result.run.covered_users
            ]

            if not delays:
                warning(f'No replication of {learner} with {num_sbs} SBSs covered any users, so it has no average delay.')
                continue

            rows.append(SweepRow(
                num_sbs=num_sbs,
                learner=learner,
                mean_delay_s=float(np.mean(delays)),
                std_delay_s=float(np.std(delays, ddof=1)) if len(delays) > 1 else 0.0,
                replications=len(delays),
            ))

        return SweepResult(
            rows=rows,
            runs=[result.run for result in results],
            slots=[metrics for result in results for metrics in result.slots],
        )

    def convergence_experiment(self, learners: Iterable[str] = None, keep_slots: bool = False) -> ConvergenceResult:
        """Record each learner's network utility after the last scheduled environment change, averaged over replications, and how long it takes to converge.

        The channel is held fixed for the whole run, so a change only alters the users' content and correlations and the curves follow learning rather than fading."""

        learners = list(learners or self.config.learners)
        tasks = [(learner, replication) for learner in learners for replication in range(self.config.replications)]

        results = self._run_all(tasks, keep_slots, hold_channel=True)

        curves, summary = [], []

        for learner in learners:
            runs = [result for (name, _), result in zip(tasks, results) if name == learner]

            mean_curve = np.mean([result.curve for result in runs], axis=0)
            iterations = [result.run.iterations_to_converge for result in runs]

            curves.extend(CurvePoint(learner=learner, iteration=i, utility=float(u)) for i, u in enumerate(mean_curve))

            summary.append(ConvergenceSummary(
                learner=learner,
                iterations_to_converge=float(np.median(iterations)),
                mean_iterations=float(np.mean(iterations)),
                final_utility=float(np.mean([result.run.final_utility for result in runs])),
                replications=len(runs),
            ))

            if any(count >= len(runs[0].curve) for count in iterations):
                warning(f'{learner} did not converge in every replication; unconverged replications count as the full length of the curve.')

        return ConvergenceResult(
            curves=curves,
            summary=summary,
            runs=[result.run for result in results],
            slots=[metrics for result in results for metrics in result.slots],
        )

    def _ne_topology(self, network: NetworkConfig) -> Topology:
        """Draw topologies until both SBSs serve at least one user."""

        for attempt in range(NE_PLACEMENT_ATTEMPTS):
            topology = generate_topology(network, (self.config.seed, NE_STREAM, attempt))

            if all(len(topology.users_of(sbs)) for sbs in range(2)):
                return topology

        raise ConfigError(f'Unable to place users so that both SBSs serve someone after {NE_PLACEMENT_ATTEMPTS} attempts. Increase `sbs_coverage_radius` or `num_users`.')

    @log
    def ne_check(self, learner: str = 'esn-transfer', epsilon: float = NE_EPSILON) -> NeReport:
        """Let two SBSs with at most four actions each learn in self-play over a fixed period and compare the strategies they settle on with a Nash equilibrium found by support enumeration."""

        config = self.config
        network = msgspec.structs.replace(config.network, num_sbs=2)
        learner_type = LEARNERS[learner]

        topology = self._ne_topology(network)
        content = synthesize_overlap(topology, config.content, (config.seed, NE_STREAM, CONTENT_STREAM))

        action_sets = [
            enumerate_actions(topology.users_of(sbs), network, min(4, config.action_cap), (config.seed, NE_STREAM, ACTIONS_STREAM, sbs))

            for sbs in range(2)
        ]

        correlation = max_correlations(topology, content, network)

        if not learner_type.correlation_aware:
            correlation = uncorrelated(correlation)

        channel = sample_channel(topology, network, (config.seed, NE_STREAM, CHANNEL_STREAM))
        context = build_period_context(network, topology, channel, content, correlation)
        game = GameSpec.from_context(context, action_sets)

        agents = [
            learner_type(
                sbs=sbs,
                actions=action_sets[sbs],
                num_players=2,
                settings=config.learning,
                seed=(config.seed, NE_STREAM, AGENTS_STREAM, sbs),
            )

            for sbs in range(2)
        ]

        learnt = self_play(agents, game, config.periods * config.slots_per_period)
        oracle = brute_force_ne(game)

        learnt_check = is_epsilon_ne(learnt, game, epsilon)
        oracle_check = is_epsilon_ne(oracle, game, 1e-6)

        # Report what each pure deviation would gain against the learnt strategies.
        current = [float(game.deviation_values(player, learnt) @ learnt[player].probs) for player in range(2)]

        rows = [
            NeRow(
                learner=learner,
                sbs=game.players[player],
                action=action,
                empirical_prob=float(learnt[player].probs[action]),
                ne_prob=float(oracle[player].probs[action]),
                deviation_gain=float(value - current[player]),
            )

            for player in range(2)
            for action, value in enumerate(game.deviation_values(player, learnt))
        ]

        return NeReport(learner=learner, shape=game.shape, learnt=learnt_check, oracle=oracle_check, rows=rows)
