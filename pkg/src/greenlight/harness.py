"""Training loop, evaluation protocol, seeding, and report emission.

Everything here is deterministic in (scenario, seed, config): per-episode
generators are split off the master seed with a counter scheme, evaluation
seeds are used verbatim, and no output embeds wall-clock state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import dqn, metrics, qnet
from .controllers import GREEN, RED, FixedTimeController, FixedTimePlan, SignalAssignment, apply_interlock
from .dqn import ACTIONS, JunctionView, ReplayBuffer, Transition
from .netmodel import Junction, Scenario, load_scenario
from .simcore import DT, Simulation


class TrainingDivergedError(RuntimeError):
    """A gradient step produced a non-finite loss."""


class WeightsMismatchError(ValueError):
    """Loaded weights do not fit the scenario's junctions or state dimension."""


# seed-derivation namespaces (SeedSequence entropy tuples)
_NS_EPISODE = 1
_NS_NET = 2
_NS_ACTION = 3
_NS_SAMPLE = 4


def _generator(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.95
    buffer_capacity: int = 10_000
    batch_size: int = 32
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_fraction: float = 0.7
    target_sync: int = 500
    warmup: int = 500
    decision_interval: float = 5.0
    hidden: tuple[int, ...] = (64, 64)

    def with_overrides(self, overrides: dict) -> "Hyperparams":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        coerced = dict(overrides)
        if "hidden" in coerced:
            coerced["hidden"] = tuple(int(h) for h in coerced["hidden"])
        return replace(self, **coerced)


def resolve_hyperparams(scenario: Scenario, overrides: dict | None = None) -> Hyperparams:
    """Defaults, overlaid by the scenario's train block, then CLI overrides."""
    hp = Hyperparams().with_overrides(scenario.train)
    if overrides:
        hp = hp.with_overrides(overrides)
    return hp


@dataclass
class TrainConfig:
    scenario_path: str
    episodes: int
    seed: int
    weights_out: str
    reward_mode: str = "balanced"
    hp_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be ≥ 1")
        if not self.scenario_path or not self.weights_out:
            raise ValueError("scenario and weights paths must be non-empty")
        if self.reward_mode not in dqn.REWARD_MODES:
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")


@dataclass
class EvalConfig:
    scenario_path: str
    controller: str  # "fixed" | "dqn"
    seeds: list[int]
    weights: str | None = None  # weights document text for the dqn controller

    def __post_init__(self):
        if self.controller not in ("fixed", "dqn"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if not self.seeds:
            raise ValueError("at least one evaluation seed is required")
        if self.controller == "dqn" and self.weights is None:
            raise ValueError("the dqn controller needs a weights document")


@dataclass
class _JunctionInfo:
    """Per-junction constants shared by featurization and reward."""

    junction: Junction
    lane_edges: list  # Edge objects, axis A then axis B
    n_axis_a: int
    capacities: list[int]


def _junction_infos(scenario: Scenario) -> list[_JunctionInfo]:
    infos = []
    for j in scenario.network.signalized_junctions():
        edges = [scenario.network.edge(eid) for eid in j.axis_a + j.axis_b]
        caps = [e.capacity(scenario.vehicle.length, scenario.vehicle.min_gap) for e in edges]
        infos.append(_JunctionInfo(j, edges, len(j.axis_a), caps))
    return infos


def junction_view(sim: Simulation, info: _JunctionInfo, state: SignalAssignment) -> JunctionView:
    counts, halted, waits, colors = [], [], [], []
    color_a, color_b = state.colors()
    for i, edge in enumerate(info.lane_edges):
        lane = sim.vehicles_on[edge.id]
        counts.append(len(lane))
        halted.append(sum(1 for v in lane if v.speed < metrics.HALT_SPEED))
        waits.append(sum(v.waiting_time for v in lane))
        colors.append(color_a if i < info.n_axis_a else color_b)
    return JunctionView(
        lane_counts=tuple(counts),
        lane_capacities=tuple(info.capacities),
        lane_halted=tuple(halted),
        lane_waits=tuple(waits),
        lane_colors=tuple(colors),
        phase_onehot=state.phase_onehot(),
        time_in_phase=state.time_in_phase,
    )


def _step_reward(sim: Simulation, info: _JunctionInfo, state: SignalAssignment, mode: str) -> float:
    color_a, color_b = state.colors()
    n_a, n_b = info.n_axis_a, len(info.lane_edges) - info.n_axis_a
    greens = (n_a if color_a == GREEN else 0) + (n_b if color_b == GREEN else 0)
    reds = (n_a if color_a == RED else 0) + (n_b if color_b == RED else 0)
    total_wait = 0.0
    for edge in info.lane_edges:
        for v in sim.vehicles_on[edge.id]:
            total_wait += v.waiting_time
    return dqn.reward_from_counts(greens, reds, total_wait / len(info.lane_edges), mode)


@dataclass
class _Agent:
    info: _JunctionInfo
    net: qnet.QNetwork
    target: qnet.QNetwork
    buffer: ReplayBuffer
    opt: qnet.Adam
    updates: int = 0


@dataclass
class TrainResult:
    weights_doc: str
    curve: list[dict]  # per episode: episode, return, epsilon, mean_loss


def train(config: TrainConfig) -> TrainResult:
    """Run the DQN training loop and export final weights plus curve rows.

    Per decision: featurize, pick an epsilon-greedy action, drive the
    interlocked signals for one decision interval, average the per-step reward
    over the interval, store the transition, then take one gradient step per
    junction agent once the warmup is filled.
    """
    with open(config.scenario_path, encoding="utf-8") as fh:
        scenario = load_scenario(fh.read())
    hp = resolve_hyperparams(scenario, config.hp_overrides)
    infos = _junction_infos(scenario)
    if not infos:
        raise ValueError("scenario has no signalized junction to control")

    agents: list[_Agent] = []
    for idx, info in enumerate(infos):
        d_in = dqn.state_dim(len(info.lane_edges))
        net = qnet.init_network((d_in, *hp.hidden, len(ACTIONS)), _generator(config.seed, _NS_NET, idx))
        agents.append(
            _Agent(
                info=info,
                net=net,
                target=dqn.sync_target(net),
                buffer=ReplayBuffer(hp.buffer_capacity),
                opt=qnet.Adam(net),
            )
        )
    action_rng = _generator(config.seed, _NS_ACTION)
    sample_rng = _generator(config.seed, _NS_SAMPLE)

    total_steps = int(round(scenario.duration / DT))
    interval_steps = max(1, int(round(hp.decision_interval / DT)))
    decisions_per_ep = math.ceil(total_steps / interval_steps)
    schedule = dqn.EpsilonSchedule(
        hp.eps_start, hp.eps_final, config.episodes * decisions_per_ep, hp.eps_fraction
    )

    curve: list[dict] = []
    global_k = 0
    for episode in range(config.episodes):
        sim = Simulation(scenario, _generator(config.seed, _NS_EPISODE, episode))
        states = {a.info.junction.id: SignalAssignment() for a in agents}
        obs = {a.info.junction.id: dqn.featurize(junction_view(sim, a.info, states[a.info.junction.id])) for a in agents}
        episode_return = 0.0
        episode_losses: list[float] = []
        eps_at_start = schedule.value(global_k)

        steps_done = 0
        while steps_done < total_steps:
            epsilon = schedule.value(global_k)
            actions = {}
            requests = {}
            for agent in agents:
                jid = agent.info.junction.id
                q = qnet.forward(agent.net, obs[jid])
                actions[jid] = dqn.select_action(q, epsilon, action_rng)
                requests[jid] = ACTIONS[actions[jid]]

            interval = min(interval_steps, total_steps - steps_done)
            reward_sums = {a.info.junction.id: 0.0 for a in agents}
            for _ in range(interval):
                assignment = {}
                for agent in agents:
                    jid = agent.info.junction.id
                    states[jid] = apply_interlock(requests[jid], states[jid], agent.info.junction)
                    assignment[jid] = states[jid].colors()
                sim.step(assignment)
                for agent in agents:
                    jid = agent.info.junction.id
                    reward_sums[jid] += _step_reward(sim, agent.info, states[jid], config.reward_mode)
            steps_done += interval
            terminal = steps_done >= total_steps

            decision_rewards = []
            for agent in agents:
                jid = agent.info.junction.id
                next_ob = dqn.featurize(junction_view(sim, agent.info, states[jid]))
                r = reward_sums[jid] / interval
                agent.buffer.push(Transition(obs[jid], actions[jid], r, next_ob, terminal))
                obs[jid] = next_ob
                decision_rewards.append(r)
            episode_return += sum(decision_rewards) / len(decision_rewards)
            global_k += 1

            for agent in agents:
                if len(agent.buffer) < max(hp.warmup, hp.batch_size):
                    continue
                batch = agent.buffer.sample(hp.batch_size, sample_rng)
                targets = dqn.td_targets_batch(batch, agent.target, hp.gamma)
                xs = np.stack([t.state for t in batch])
                acts = [t.action for t in batch]
                loss, grads = qnet.backward_batch(agent.net, xs, targets, acts)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at episode {episode}, decision {global_k}: {loss}"
                    )
                agent.opt.step(agent.net, grads, hp.lr)
                agent.updates += 1
                episode_losses.append(loss)
                if agent.updates % hp.target_sync == 0:
                    agent.target = dqn.sync_target(agent.net)

        curve.append(
            {
                "episode": episode,
                "return": episode_return,
                "epsilon": eps_at_start,
                "mean_loss": (sum(episode_losses) / len(episode_losses)) if episode_losses else float("nan"),
            }
        )

    return TrainResult(weights_doc=_weights_doc(agents), curve=curve)


def _weights_doc(agents: list[_Agent]) -> str:
    if len(agents) == 1:
        return qnet.serialize(agents[0].net)
    doc = {
        "format_version": qnet.FORMAT_VERSION,
        "multi": {a.info.junction.id: json.loads(qnet.serialize(a.net)) for a in agents},
    }
    return json.dumps(doc, sort_keys=True)


def load_weights(text: str, infos: list[_JunctionInfo]) -> dict[str, qnet.QNetwork]:
    """Map a weights document onto the scenario's junctions, checking shapes."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise qnet.WeightsFormatError(f"weights document is not valid JSON: {exc}") from exc
    nets: dict[str, qnet.QNetwork] = {}
    if isinstance(doc, dict) and "multi" in doc:
        per_junction = doc["multi"]
        for info in infos:
            jid = info.junction.id
            if jid not in per_junction:
                raise WeightsMismatchError(f"weights document has no entry for junction {jid}")
            nets[jid] = qnet.deserialize(json.dumps(per_junction[jid]))
    else:
        if len(infos) != 1:
            raise WeightsMismatchError(
                f"single-network weights document but scenario has {len(infos)} signalized junctions"
            )
        nets[infos[0].junction.id] = qnet.deserialize(text)
    for info in infos:
        expected = dqn.state_dim(len(info.lane_edges))
        got = nets[info.junction.id].d_in
        if got != expected:
            raise WeightsMismatchError(
                f"junction {info.junction.id}: weights expect input dimension {got}, scenario produces {expected}"
            )
    return nets


def _run_episode(scenario: Scenario, infos: list[_JunctionInfo], controller, seed: int) -> Simulation:
    sim = Simulation(scenario, _generator(seed))
    states = {info.junction.id: SignalAssignment() for info in infos}

    def make_views() -> dict[str, JunctionView]:
        return {info.junction.id: junction_view(sim, info, states[info.junction.id]) for info in infos}

    total_steps = int(round(scenario.duration / DT))
    for _ in range(total_steps):
        requests = controller.decide(sim.clock, make_views)
        assignment = {}
        for info in infos:
            jid = info.junction.id
            states[jid] = apply_interlock(requests[jid], states[jid], info.junction)
            assignment[jid] = states[jid].colors()
        sim.step(assignment)
    return sim


def evaluate(config: EvalConfig) -> metrics.RunReport:
    """Run one full simulation per seed and pool the results, Table-1 shaped."""
    with open(config.scenario_path, encoding="utf-8") as fh:
        scenario = load_scenario(fh.read())
    infos = _junction_infos(scenario)
    hp = resolve_hyperparams(scenario)

    if config.controller == "fixed":
        plans = {info.junction.id: FixedTimePlan.for_junction(info.junction) for info in infos}
        make_controller = lambda: FixedTimeController(plans)  # noqa: E731
    else:
        nets = load_weights(config.weights, infos)
        make_controller = lambda: dqn.GreedyPolicy(nets, hp.decision_interval)  # noqa: E731

    episodes: list[metrics.EpisodeTotals] = []
    vehicles: list[metrics.VehicleMetrics] = []
    for episode_idx, seed in enumerate(config.seeds):
        # fresh controller per seed so no decision state leaks across episodes
        sim = _run_episode(scenario, infos, make_controller(), seed)
        finalized = [metrics.finalize(v, scenario.duration) for v in sim.vehicles]
        vehicles.extend(finalized)
        episodes.append(
            metrics.EpisodeTotals(
                seed=seed,
                episode=episode_idx,
                spawned=len(sim.vehicles),
                departed=sim.inserted_count,
                arrived=sim.arrived_count,
                never_departed=len(sim.vehicles) - sim.inserted_count,
                emergency_stops=sum(v.emergency_stops for v in sim.vehicles),
            )
        )

    return metrics.build_report(
        controller=config.controller,
        scenario_id=scenario.content_id(),
        seeds=config.seeds,
        episodes=episodes,
        vehicles=vehicles,
    )


def compare(baseline: metrics.RunReport, candidate: metrics.RunReport) -> dict:
    """Side-by-side means with the signed percent change per metric.

    Negative change means the candidate reduced the metric.
    """
    if baseline.scenario_id != candidate.scenario_id:
        raise ValueError(
            f"reports cover different scenarios ({baseline.scenario_id} vs {candidate.scenario_id})"
        )
    if baseline.seeds != candidate.seeds:
        raise ValueError("reports cover different evaluation seeds")

    def change_entry(before: float, after: float) -> dict:
        entry = {"baseline_mean": before, "candidate_mean": after}
        entry["change_pct"] = None if before == 0 else -metrics.percent_change(before, after)
        return entry

    doc = {
        "scenario_id": baseline.scenario_id,
        "seeds": baseline.seeds,
        "baseline": baseline.controller,
        "candidate": candidate.controller,
        "metrics": {
            key: change_entry(baseline.summaries[key].mean, candidate.summaries[key].mean)
            for key in metrics.METRIC_KEYS
        },
        "es_per_episode": change_entry(baseline.es_per_episode.mean, candidate.es_per_episode.mean),
    }
    return doc


def curve_csv(curve: list[dict]) -> str:
    lines = ["episode,return,epsilon,mean_loss"]
    for row in curve:
        lines.append(f"{row['episode']},{row['return']!r},{row['epsilon']!r},{row['mean_loss']!r}")
    return "\n".join(lines) + "\n"
