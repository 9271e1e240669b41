"""Tabular Q-learning: state observation, action selection, updates, replay,
epsilon decay, table pruning, and the five-part round reward."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Optional

from .network import DEFAULT_NEIGHBOR_CAP, SensorNode, Topology


class RlAction(IntEnum):
    """Enum order is the deterministic tie-break order everywhere."""
    CLUSTERING = 0        # membership posture: form / re-evaluate a cluster
    ELECT_SELF = 1        # head-selection sub-choice: stand for election
    JOIN_HEAD = 2         # head-selection sub-choice: defer to a neighbor head
    SINGLE_HOP = 3        # transmission posture


ALL_ACTIONS = tuple(RlAction)


class AgentState(NamedTuple):
    energy_level: int          # 0..9, floor(10 * energy / initial)
    is_head: bool              # headed any cluster in the previous hierarchy
    neighbor_count: int        # alive in-range neighbors, clamped at the cap
    energy_ratio_bucket: int   # 0..9 against the network's peak endowment
    stage_level: int           # deepest stage led last round; 0 for members


@dataclass
class LearningParams:
    learning_rate: float = 0.7
    discount_factor: float = 0.9
    epsilon_start: float = 1.0
    epsilon_decay_rate: float = 0.05
    adaptive_learning_rate: bool = True
    replay_capacity: int = 50
    replay_batch: int = 64
    prune_min_visits: int = 0          # 0 disables pruning
    prune_window_rounds: int = 50
    shared_table: bool = True

    def __post_init__(self):
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if not (0.0 <= self.discount_factor < 1.0):
            raise ValueError("discount_factor must be in [0, 1)")
        if not (0.0 <= self.epsilon_start <= 1.0):
            raise ValueError("epsilon_start must be in [0, 1]")
        if self.epsilon_decay_rate < 0:
            raise ValueError("epsilon_decay_rate must be non-negative")
        if self.replay_capacity < 1:
            raise ValueError("replay_capacity must be >= 1")
        if self.replay_batch < 0:
            raise ValueError("replay_batch must be >= 0")
        if self.prune_min_visits < 0:
            raise ValueError("prune_min_visits must be >= 0")
        if self.prune_window_rounds < 1:
            raise ValueError("prune_window_rounds must be >= 1")


class Experience(NamedTuple):
    state: AgentState
    action: RlAction
    reward: float
    next_state: AgentState


@dataclass(frozen=True)
class RewardBreakdown:
    valid_clustering: int     # 2 or 0
    ch_selection: int         # 3 or 1
    hierarchy_purity: int     # 2 or 0
    final_transmitter: int    # 3 or 1
    data_forwarding: int      # 2 or 0

    @property
    def total(self) -> int:
        return (self.valid_clustering + self.ch_selection
                + self.hierarchy_purity + self.final_transmitter
                + self.data_forwarding)


class QTable:
    """Sparse (state, action) -> (q, visits) map; absent entries read 0."""

    __slots__ = ("_rows",)

    def __init__(self):
        # state -> [q values per action, visit counts per action]
        self._rows = {}

    def q(self, state, action) -> float:
        row = self._rows.get(state)
        return row[0][action] if row is not None else 0.0

    def visits(self, state, action) -> int:
        row = self._rows.get(state)
        return row[1][action] if row is not None else 0

    def max_q(self, state) -> float:
        row = self._rows.get(state)
        if row is None:
            return 0.0
        return max(row[0])

    def row(self, state):
        row = self._rows.get(state)
        if row is None:
            row = [[0.0, 0.0, 0.0, 0.0], [0, 0, 0, 0]]
            self._rows[state] = row
        return row

    def entry_count(self) -> int:
        n = 0
        for qs, vs in self._rows.values():
            n += sum(1 for a in range(len(qs)) if qs[a] != 0.0 or vs[a] != 0)
        return n

    def states(self):
        return self._rows.keys()

    def items(self):
        for state, (qs, vs) in self._rows.items():
            for a in range(len(qs)):
                if qs[a] != 0.0 or vs[a] != 0:
                    yield state, RlAction(a), qs[a], vs[a]

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["energy_level", "is_head", "neighbor_count",
                             "energy_ratio_bucket", "stage_level",
                             "action", "q", "visits"])
            for state, action, qv, visits in sorted(
                    self.items(), key=lambda it: (it[0], int(it[1]))):
                writer.writerow([state.energy_level, int(state.is_head),
                                 state.neighbor_count, state.energy_ratio_bucket,
                                 state.stage_level, action.name, repr(qv), visits])


def state_space_bound(neighbor_cap: int = DEFAULT_NEIGHBOR_CAP,
                      stage_cap: int = 3) -> int:
    """Upper bound on distinct (state, action) entries per table."""
    states = 10 * 2 * (neighbor_cap + 1) * 10 * (stage_cap + 1)
    return states * len(ALL_ACTIONS)


def observe_state(node: SensorNode, topology: Topology, stage_level: int,
                  nodes: list, *, initial_energy: float,
                  network_max_energy: float,
                  neighbor_cap: int = DEFAULT_NEIGHBOR_CAP,
                  stage_cap: int = 3,
                  neighbor_count: Optional[int] = None) -> AgentState:
    """Discretize a node's situation. Pass neighbor_count to skip the scan."""
    level = min(9, int(10.0 * node.energy / initial_energy))
    if neighbor_count is None:
        neighbor_count = sum(1 for j in topology.neighbors[node.id]
                             if nodes[j].alive)
    if network_max_energy > 0:
        bucket = min(9, int(10.0 * node.energy / network_max_energy))
    else:
        bucket = 0
    return AgentState(energy_level=level,
                      is_head=stage_level > 0,
                      neighbor_count=min(neighbor_count, neighbor_cap),
                      energy_ratio_bucket=bucket,
                      stage_level=min(stage_level, stage_cap))


def select_action(table: QTable, state: AgentState, epsilon: float, rng,
                  legal=None) -> RlAction:
    """Epsilon-greedy over the legal set; greedy ties break in enum order."""
    actions = ALL_ACTIONS if legal is None else legal
    if rng.random() < epsilon:
        return actions[rng.randrange(len(actions))]
    best = actions[0]
    best_q = table.q(state, actions[0])
    for a in actions[1:]:
        qv = table.q(state, a)
        if qv > best_q:
            best, best_q = a, qv
    return best


def q_update(table: QTable, exp: Experience, params: LearningParams) -> float:
    """One Bellman backup; returns |delta Q| for convergence telemetry.

    The adaptive learning rate uses the pre-increment visit count, so the
    first update of a pair applies rate 1, the second 1/2, and so on.
    """
    row = table.row(exp.state)
    a = int(exp.action)
    if params.adaptive_learning_rate:
        alpha = 1.0 / (1.0 + row[1][a])
    else:
        alpha = params.learning_rate
    target = exp.reward + params.discount_factor * table.max_q(exp.next_state)
    old = row[0][a]
    new = (1.0 - alpha) * old + alpha * target
    row[0][a] = new
    row[1][a] += 1
    return abs(new - old)


class ReplayBuffer:
    """Fixed-capacity ring of experiences with O(1) uniform sampling."""

    __slots__ = ("capacity", "_items", "_cursor")

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items = []
        self._cursor = 0

    def add(self, exp: Experience):
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._cursor] = exp
            self._cursor = (self._cursor + 1) % self.capacity

    def __len__(self):
        return len(self._items)

    def sample(self, batch: int, rng):
        n = len(self._items)
        if n == 0 or batch == 0:
            return []
        if n <= batch:
            return list(self._items)
        return [self._items[i] for i in rng.sample(range(n), batch)]


def replay_step(table: QTable, buffer: ReplayBuffer, params: LearningParams,
                rng) -> float:
    """Re-apply the Bellman update to a uniform sample; returns max |delta Q|."""
    worst = 0.0
    for exp in buffer.sample(params.replay_batch, rng):
        delta = q_update(table, exp, params)
        if delta > worst:
            worst = delta
    return worst


def decay_epsilon(params: LearningParams, round_index: int) -> float:
    """Exponentially decayed exploration rate for the given round."""
    return params.epsilon_start * math.exp(
        -params.epsilon_decay_rate * round_index)


def prune(table: QTable, params: LearningParams, round_index: int) -> int:
    """Drop rarely-visited entries on the pruning schedule; returns #removed."""
    if params.prune_min_visits <= 0:
        return 0
    if round_index <= 0 or round_index % params.prune_window_rounds != 0:
        return 0
    removed = 0
    empty_states = []
    for state, (qs, vs) in table._rows.items():
        for a in range(len(qs)):
            if (qs[a] != 0.0 or vs[a] != 0) and vs[a] < params.prune_min_visits:
                qs[a] = 0.0
                vs[a] = 0
                removed += 1
        if all(q == 0.0 for q in qs) and all(v == 0 for v in vs):
            empty_states.append(state)
    for state in empty_states:
        del table._rows[state]
    return removed


def compute_round_reward(hierarchy, energies: dict,
                         forwarding_ok: bool) -> RewardBreakdown:
    """Score one round's hierarchy against the five structural criteria.

    `energies` is the id -> residual-energy snapshot taken when the hierarchy
    was formed, covering every node alive at that moment. Each criterion pays
    its full value only if satisfied everywhere, else its fallback value.
    """
    disjoint = True
    argmax_heads = True
    for stage in hierarchy.stages:
        seen = set()
        for cluster in stage:
            for m in cluster.member_ids:
                if m in seen:
                    disjoint = False
                seen.add(m)
            top = max(energies[m] for m in cluster.member_ids)
            if energies[cluster.head_id] < top:
                argmax_heads = False

    purity = True
    for k in range(len(hierarchy.stages) - 1):
        heads = set(c.head_id for c in hierarchy.stages[k])
        participants = set()
        for c in hierarchy.stages[k + 1]:
            participants.update(c.member_ids)
        if heads != participants:
            purity = False

    network_top = max(energies.values())
    final_ok = energies[hierarchy.final_transmitter] >= network_top

    return RewardBreakdown(
        valid_clustering=2 if disjoint else 0,
        ch_selection=3 if argmax_heads else 1,
        hierarchy_purity=2 if purity else 0,
        final_transmitter=3 if final_ok else 1,
        data_forwarding=2 if forwarding_ok else 0,
    )
