"""Per-round execution of the five routing strategies.

Every clustered round follows the same arc: build a hierarchy, move one
aggregated packet per node up through it, charge the radio costs, score the
round, and (for learning strategies) update each agent. The baseline skips
clustering entirely and relays raw packets toward the sink over shortest
hop-count paths.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .clustering import (Cluster, ClusterHierarchy, NoAliveNodes,
                         build_hierarchy, form_clusters, select_head_by_energy)
from .game import (BestResponseResult, UtilityWeights, best_response_dynamics,
                   profile_to_clusters, select_head_by_utility)
from .learning import (ALL_ACTIONS, AgentState, Experience, LearningParams,
                       QTable, ReplayBuffer, RlAction, compute_round_reward,
                       decay_epsilon, observe_state, prune, q_update,
                       replay_step, select_action)
from .network import (EnergyModel, NetworkConfig, aggregation_cost, drain,
                      generate_network, rx_cost, tx_cost)

# Offset separating the round-loop random stream from network generation.
_ROUND_STREAM_OFFSET = 1_000_003


class StrategyKind(str, Enum):
    FULL_RL = "full-rl"
    FULL_GT = "full-gt"
    GT_RL = "gt-rl"
    RL_GT = "rl-gt"
    BASELINE = "baseline"


RL_BEARING = (StrategyKind.FULL_RL, StrategyKind.GT_RL, StrategyKind.RL_GT)

# Sub-space each learning strategy draws actions from.
FULL_RL_ACTIONS = ALL_ACTIONS
GT_RL_ACTIONS = (RlAction.ELECT_SELF, RlAction.JOIN_HEAD)
RL_GT_ACTIONS = (RlAction.CLUSTERING, RlAction.JOIN_HEAD)


@dataclass
class RoundOutcome:
    round_index: int
    hierarchy: Optional[ClusterHierarchy]
    reward: Optional[object]              # RewardBreakdown for clustered runs
    delivered: dict                       # node id -> bool
    hop_counts: dict                      # node id -> hops for delivered packets
    energy_spent: dict                    # node id -> actual energy decrease
    deaths: set
    long_links: int = 0
    max_q_delta: float = 0.0
    epsilon: float = 0.0


class SimWorld:
    """Bundles the static network with its mutable energy state."""

    def __init__(self, config: NetworkConfig, energy_model: EnergyModel):
        self.config = config
        self.energy_model = energy_model
        self.nodes, self.topology = generate_network(config)
        self.sink = config.sink
        xs = np.array([nd.x for nd in self.nodes])
        ys = np.array([nd.y for nd in self.nodes])
        self.dist_to_sink = np.hypot(xs - self.sink[0], ys - self.sink[1])

    def alive_ids(self) -> list:
        return [nd.id for nd in self.nodes if nd.alive]

    def alive_count(self) -> int:
        return sum(1 for nd in self.nodes if nd.alive)

    def max_alive_energy(self) -> float:
        top = 0.0
        for nd in self.nodes:
            if nd.energy > top:
                top = nd.energy
        return top

    def energy_snapshot(self) -> dict:
        return {nd.id: nd.energy for nd in self.nodes if nd.alive}

    def alive_neighbor_counts(self) -> np.ndarray:
        mask = np.array([nd.alive for nd in self.nodes], dtype=np.int32)
        return self.topology.adjacency_matrix @ mask


class _Agent:
    __slots__ = ("table", "buffer")

    def __init__(self, table: QTable, capacity: int):
        self.table = table
        self.buffer = ReplayBuffer(capacity)


class LearnerPool:
    """One Q-learner per node, or one shared table when configured."""

    def __init__(self, node_ids, params: LearningParams):
        self.params = params
        shared = QTable() if params.shared_table else None
        self.agents = {
            i: _Agent(shared if shared is not None else QTable(),
                      params.replay_capacity)
            for i in node_ids
        }
        self.last_roles = {}

    def table_for(self, node_id: int) -> QTable:
        return self.agents[node_id].table


def make_world(config: NetworkConfig, energy_model: EnergyModel) -> SimWorld:
    return SimWorld(config, energy_model)


def _require_alive(world: SimWorld) -> list:
    alive = world.alive_ids()
    if not alive:
        raise NoAliveNodes("round started with no alive nodes")
    return alive


def _observe_all(world: SimWorld, pool: LearnerPool) -> dict:
    counts = world.alive_neighbor_counts()
    cfg = world.config
    e_max = cfg.initial_energy
    states = {}
    for i in world.alive_ids():
        states[i] = observe_state(
            world.nodes[i], world.topology, pool.last_roles.get(i, 0),
            world.nodes, initial_energy=cfg.initial_energy,
            network_max_energy=e_max, stage_cap=cfg.stage_count,
            neighbor_count=int(counts[i]))
    return states


def _select_actions(pool: LearnerPool, states: dict, epsilon: float, rng,
                    legal) -> dict:
    actions = {}
    for i in sorted(states):
        actions[i] = select_action(pool.table_for(i), states[i], epsilon, rng,
                                   legal)
    return actions


def _rl_head_selector(pool: LearnerPool, states: dict, actions: dict,
                      nodes: list):
    """Learned policies decide who volunteers; the cluster protocol then
    seats the best-charged volunteer. With no volunteers the energy argmax
    serves, which no declared choice can contradict."""
    def pick(cluster: Cluster) -> int:
        electors = [m for m in cluster.member_ids
                    if actions.get(m) == RlAction.ELECT_SELF]
        if not electors:
            return select_head_by_energy(cluster, nodes)
        return max(electors, key=lambda m: (nodes[m].energy, -m))
    return pick


def _utility_head_selector(world: SimWorld, weights: UtilityWeights):
    def pick(cluster: Cluster) -> int:
        return select_head_by_utility(
            cluster, world.nodes, world.topology, weights,
            initial_energy=world.config.initial_energy)
    return pick


def _account_hierarchy(world: SimWorld, hierarchy: ClusterHierarchy):
    """Charge one aggregated packet per alive node up the hierarchy.

    Members transmit to their head even when it sits beyond nominal range;
    the amplifier term is always charged at true distance and such stretched
    links are counted. Returns (costs, delivered, hops, long_links).
    """
    cfg = world.config
    model = world.energy_model
    bits = cfg.packet_size_bits
    dist = world.topology.distance
    parents = {}
    for stage in hierarchy.stages:
        for c in stage:
            for m in c.member_ids:
                if m != c.head_id:
                    parents[m] = c.head_id
    roles = {}
    for k, stage in enumerate(hierarchy.stages):
        for c in stage:
            roles[c.head_id] = k + 1

    stage_total = len(hierarchy.stages)
    costs = {}
    delivered = {}
    hops = {}
    long_links = 0
    alive = world.alive_ids()
    rx_one = rx_cost(bits, model)
    agg_one = aggregation_cost(bits, model)
    for i in alive:
        parent = parents.get(i)
        if parent is None:
            d = float(world.dist_to_sink[i])
        else:
            d = float(dist[i, parent])
            if d > world.nodes[i].comm_range:
                long_links += 1
        costs[i] = costs.get(i, 0.0) + tx_cost(bits, d, model)
        if parent is not None:
            costs[parent] = costs.get(parent, 0.0) + rx_one + agg_one
        delivered[i] = True
        hops[i] = stage_total - roles.get(i, 0) + 1
    for i in alive:
        costs[i] = costs.get(i, 0.0) + model.e_idle
    return costs, delivered, hops, long_links


def _apply_drain(world: SimWorld, costs: dict):
    spent = {}
    deaths = set()
    for i in sorted(costs):
        node = world.nodes[i]
        before = node.energy
        drain(node, costs[i])
        spent[i] = before - node.energy
        if not node.alive:
            deaths.add(i)
    return spent, deaths


def _learn(world: SimWorld, pool: LearnerPool, hierarchy: ClusterHierarchy,
           reward_total: float, states: dict, actions: dict, rng,
           round_index: int) -> float:
    """Feed the shared round reward back to every surviving participant."""
    params = pool.params
    cfg = world.config
    new_roles = hierarchy.role_map()
    e_max = cfg.initial_energy
    counts = world.alive_neighbor_counts()
    worst = 0.0
    for i in sorted(states):
        node = world.nodes[i]
        if not node.alive:
            continue
        next_state = observe_state(
            node, world.topology, new_roles.get(i, 0), world.nodes,
            initial_energy=cfg.initial_energy, network_max_energy=e_max,
            stage_cap=cfg.stage_count, neighbor_count=int(counts[i]))
        exp = Experience(states[i], actions[i], reward_total, next_state)
        agent = pool.agents[i]
        delta = q_update(agent.table, exp, params)
        if delta > worst:
            worst = delta
        agent.buffer.add(exp)
        delta = replay_step(agent.table, agent.buffer, params, rng)
        if delta > worst:
            worst = delta
        prune(agent.table, params, round_index)
    pool.last_roles = new_roles
    return worst


def run_round_full_rl(world: SimWorld, pool: LearnerPool,
                      params: LearningParams, round_index: int,
                      rng) -> RoundOutcome:
    """Learned elect-or-defer head selection over the geometric partition."""
    _require_alive(world)
    cfg = world.config
    states = _observe_all(world, pool)
    epsilon = decay_epsilon(params, round_index - 1)
    actions = _select_actions(pool, states, epsilon, rng, FULL_RL_ACTIONS)

    selector = _rl_head_selector(pool, states, actions, world.nodes)
    hierarchy = build_hierarchy(
        world.nodes, world.topology, selector,
        stage_count=cfg.stage_count, stage_target_sizes=cfg.stage_target_sizes)

    snapshot = world.energy_snapshot()
    costs, delivered, hops, long_links = _account_hierarchy(world, hierarchy)
    reward = compute_round_reward(hierarchy, snapshot, forwarding_ok=True)
    spent, deaths = _apply_drain(world, costs)
    max_delta = _learn(world, pool, hierarchy, float(reward.total), states,
                       actions, rng, round_index)
    return RoundOutcome(round_index=round_index, hierarchy=hierarchy,
                        reward=reward, delivered=delivered, hop_counts=hops,
                        energy_spent=spent, deaths=deaths,
                        long_links=long_links, max_q_delta=max_delta,
                        epsilon=epsilon)


def run_round_full_gt(world: SimWorld, weights: UtilityWeights,
                      round_index: int) -> RoundOutcome:
    """Equilibrium head competition, then utility heads up the hierarchy."""
    _require_alive(world)
    cfg = world.config
    result = best_response_dynamics(
        world.nodes, world.topology, weights,
        initial_energy=cfg.initial_energy)
    stage1 = [Cluster(id=k, member_ids=members, head_id=head)
              for k, (members, head) in enumerate(profile_to_clusters(result))]
    hierarchy = build_hierarchy(
        world.nodes, world.topology, _utility_head_selector(world, weights),
        stage_count=cfg.stage_count, stage_target_sizes=cfg.stage_target_sizes,
        stage1_clusters=stage1)

    snapshot = world.energy_snapshot()
    costs, delivered, hops, long_links = _account_hierarchy(world, hierarchy)
    reward = compute_round_reward(hierarchy, snapshot, forwarding_ok=True)
    spent, deaths = _apply_drain(world, costs)
    return RoundOutcome(round_index=round_index, hierarchy=hierarchy,
                        reward=reward, delivered=delivered, hop_counts=hops,
                        energy_spent=spent, deaths=deaths,
                        long_links=long_links)


def run_round_gt_rl(world: SimWorld, pool: LearnerPool,
                    weights: UtilityWeights, params: LearningParams,
                    round_index: int, rng) -> RoundOutcome:
    """Equilibrium memberships; agents learn who stands for election."""
    _require_alive(world)
    cfg = world.config
    states = _observe_all(world, pool)
    epsilon = decay_epsilon(params, round_index - 1)
    actions = _select_actions(pool, states, epsilon, rng, GT_RL_ACTIONS)

    result = best_response_dynamics(
        world.nodes, world.topology, weights,
        initial_energy=cfg.initial_energy)
    stage1 = [Cluster(id=k, member_ids=members)
              for k, (members, _head) in enumerate(profile_to_clusters(result))]
    selector = _rl_head_selector(pool, states, actions, world.nodes)
    hierarchy = build_hierarchy(
        world.nodes, world.topology, selector,
        stage_count=cfg.stage_count, stage_target_sizes=cfg.stage_target_sizes,
        stage1_clusters=stage1)

    snapshot = world.energy_snapshot()
    costs, delivered, hops, long_links = _account_hierarchy(world, hierarchy)
    reward = compute_round_reward(hierarchy, snapshot, forwarding_ok=True)
    spent, deaths = _apply_drain(world, costs)
    max_delta = _learn(world, pool, hierarchy, float(reward.total), states,
                       actions, rng, round_index)
    return RoundOutcome(round_index=round_index, hierarchy=hierarchy,
                        reward=reward, delivered=delivered, hop_counts=hops,
                        energy_spent=spent, deaths=deaths,
                        long_links=long_links, max_q_delta=max_delta,
                        epsilon=epsilon)


def _founder_partition(world: SimWorld, alive: list, actions: dict) -> list:
    """Clusters seeded by agents that chose to form one; everyone else joins
    the nearest founder in range or stands alone. With no founders at all the
    geometric partition steps in."""
    cfg = world.config
    founders = [i for i in alive if actions.get(i) == RlAction.CLUSTERING]
    if not founders:
        return form_clusters(alive, world.topology,
                             cfg.stage_target_sizes[0], None)
    dist = world.topology.distance
    members = {f: [f] for f in founders}
    singles = []
    for i in alive:
        if i in members:
            continue
        best = None
        for f in founders:
            if world.topology.adjacency_matrix[i, f]:
                key = (float(dist[i, f]), f)
                if best is None or key < best:
                    best = key
        if best is None:
            singles.append(i)
        else:
            members[best[1]].append(i)
    clusters = []
    for f in founders:
        clusters.append(Cluster(id=len(clusters), member_ids=members[f]))
    for s in singles:
        clusters.append(Cluster(id=len(clusters), member_ids=[s]))
    return clusters


def run_round_rl_gt(world: SimWorld, pool: LearnerPool,
                    weights: UtilityWeights, params: LearningParams,
                    round_index: int, rng) -> RoundOutcome:
    """Learned memberships; utility picks every head."""
    _require_alive(world)
    cfg = world.config
    states = _observe_all(world, pool)
    epsilon = decay_epsilon(params, round_index - 1)
    actions = _select_actions(pool, states, epsilon, rng, RL_GT_ACTIONS)

    alive = world.alive_ids()
    stage1 = _founder_partition(world, alive, actions)
    hierarchy = build_hierarchy(
        world.nodes, world.topology, _utility_head_selector(world, weights),
        stage_count=cfg.stage_count, stage_target_sizes=cfg.stage_target_sizes,
        stage1_clusters=stage1)

    snapshot = world.energy_snapshot()
    costs, delivered, hops, long_links = _account_hierarchy(world, hierarchy)
    reward = compute_round_reward(hierarchy, snapshot, forwarding_ok=True)
    spent, deaths = _apply_drain(world, costs)
    max_delta = _learn(world, pool, hierarchy, float(reward.total), states,
                       actions, rng, round_index)
    return RoundOutcome(round_index=round_index, hierarchy=hierarchy,
                        reward=reward, delivered=delivered, hop_counts=hops,
                        energy_spent=spent, deaths=deaths,
                        long_links=long_links, max_q_delta=max_delta,
                        epsilon=epsilon)


def run_round_baseline(world: SimWorld, round_index: int) -> RoundOutcome:
    """Min-hop relay toward the sink, no clustering, no aggregation."""
    alive = _require_alive(world)
    cfg = world.config
    model = world.energy_model
    bits = cfg.packet_size_bits
    alive_set = set(alive)
    dist = world.topology.distance

    depth = {}
    parent = {}
    frontier = []
    for i in alive:
        if world.dist_to_sink[i] <= world.nodes[i].comm_range:
            depth[i] = 1
            parent[i] = None
            frontier.append(i)
    while frontier:
        nxt = []
        for u in sorted(frontier):
            for v in world.topology.neighbors[u]:
                if v in alive_set and v not in depth:
                    depth[v] = depth[u] + 1
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt

    packets = {i: 1 for i in depth}
    for u in sorted(depth, key=lambda i: -depth[i]):
        p = parent[u]
        if p is not None:
            packets[p] += packets[u]

    costs = {}
    delivered = {}
    hops = {}
    for i in alive:
        costs[i] = model.e_idle
        if i not in depth:
            delivered[i] = False
            continue
        p = parent[i]
        d = float(world.dist_to_sink[i]) if p is None else float(dist[i, p])
        costs[i] += packets[i] * tx_cost(bits, d, model)
        if packets[i] > 1:
            costs[i] += (packets[i] - 1) * rx_cost(bits, model)
        delivered[i] = True
        hops[i] = depth[i]

    spent, deaths = _apply_drain(world, costs)
    return RoundOutcome(round_index=round_index, hierarchy=None, reward=None,
                        delivered=delivered, hop_counts=hops,
                        energy_spent=spent, deaths=deaths)


def measure_delay(outcome: RoundOutcome,
                  processing_per_hop: float = 1.0) -> float:
    """Mean delay over delivered packets: travel plus per-hop processing."""
    total = 0.0
    count = 0
    for i, ok in outcome.delivered.items():
        if ok:
            total += outcome.hop_counts[i] * (1.0 + processing_per_hop)
            count += 1
    return total / count if count else 0.0


@dataclass
class RunResult:
    strategy: StrategyKind
    seed: int
    series: list
    summary: object
    world: SimWorld
    pool: Optional[LearnerPool]


def simulate(strategy: StrategyKind, config: NetworkConfig,
             energy_model: EnergyModel, params: LearningParams,
             weights: UtilityWeights) -> RunResult:
    """Run one strategy for the configured horizon or until network death."""
    from . import metrics as m

    world = make_world(config, energy_model)
    rng = random.Random(config.rng_seed + _ROUND_STREAM_OFFSET)
    pool = (LearnerPool([nd.id for nd in world.nodes], params)
            if strategy in RL_BEARING else None)

    series = []
    cumulative = 0.0
    for t in range(1, config.round_count + 1):
        if world.alive_count() == 0:
            break
        if strategy is StrategyKind.FULL_RL:
            outcome = run_round_full_rl(world, pool, params, t, rng)
        elif strategy is StrategyKind.FULL_GT:
            outcome = run_round_full_gt(world, weights, t)
        elif strategy is StrategyKind.GT_RL:
            outcome = run_round_gt_rl(world, pool, weights, params, t, rng)
        elif strategy is StrategyKind.RL_GT:
            outcome = run_round_rl_gt(world, pool, weights, params, t, rng)
        else:
            outcome = run_round_baseline(world, t)
        rm = m.record_round(world, outcome, strategy.value, cumulative,
                            measure_delay(outcome))
        cumulative = rm.cumulative_reward
        series.append(rm)

    summary = m.summarize(series, config, strategy.value)
    return RunResult(strategy=strategy, seed=config.rng_seed, series=series,
                     summary=summary, world=world, pool=pool)
