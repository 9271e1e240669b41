"""Utility-driven cluster-head competition and best-response dynamics.

Each alive node either stands as a head or follows a reachable head. A head's
fitness blends residual energy, mean neighbor distance, and prospective load;
a follower weighs the head's energy against its own link distance to that
head and the head's congestion, so nodes gravitate toward strong leaders
nearby and stand themselves when nothing reachable beats them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import DEFAULT_NEIGHBOR_CAP, Topology


@dataclass(frozen=True)
class UtilityWeights:
    energy_weight: float = 1.0
    distance_weight: float = 0.8
    load_weight: float = 0.1

    def __post_init__(self):
        if self.energy_weight < 0 or self.distance_weight < 0 or self.load_weight < 0:
            raise ValueError("utility weights must be non-negative")
        if self.energy_weight == 0 and self.distance_weight == 0 and self.load_weight == 0:
            raise ValueError("at least one utility weight must be positive")


@dataclass
class BestResponseResult:
    # node id -> None when standing as a head, else the id of the head followed
    profile: dict
    converged: bool
    passes: int

    def head_ids(self) -> list:
        return sorted(i for i, tgt in self.profile.items() if tgt is None)

    def followers_of(self, head_id: int) -> list:
        return sorted(i for i, tgt in self.profile.items() if tgt == head_id)


def _normalized_energy(node, initial_energy: float) -> float:
    return node.energy / initial_energy


def mean_neighbor_distance(node_id: int, nodes: list, topology: Topology) -> float:
    """Mean distance to alive in-range neighbors, normalized by range; 0 if none."""
    node = nodes[node_id]
    total = 0.0
    count = 0
    for j in topology.neighbors[node_id]:
        if nodes[j].alive:
            total += topology.dist(node_id, j)
            count += 1
    if count == 0:
        return 0.0
    return (total / count) / node.comm_range


def head_fitness_base(nodes: list, topology: Topology, weights: UtilityWeights,
                      *, initial_energy: float) -> dict:
    """Load-free fitness (energy minus distance term) for every alive node."""
    alive = [nd.id for nd in nodes if nd.alive]
    mask = np.zeros(topology.node_count, dtype=bool)
    mask[alive] = True
    in_range_alive = topology.adjacency_matrix & mask[None, :]
    counts = in_range_alive.sum(axis=1)
    sums = (topology.distance * in_range_alive).sum(axis=1)
    base = {}
    for i in alive:
        if counts[i] > 0:
            d_hat = (sums[i] / counts[i]) / nodes[i].comm_range
        else:
            d_hat = 0.0
        e_hat = nodes[i].energy / initial_energy
        base[i] = weights.energy_weight * e_hat - weights.distance_weight * d_hat
    return base


def utility(node_id: int, nodes: list, topology: Topology,
            weights: UtilityWeights, *, initial_energy: float,
            prospective_members: int = 0,
            neighbor_cap: int = DEFAULT_NEIGHBOR_CAP) -> float:
    """Head-fitness of a node: energy minus distance and load penalties."""
    e_term = _normalized_energy(nodes[node_id], initial_energy)
    d_term = mean_neighbor_distance(node_id, nodes, topology)
    n_term = prospective_members / neighbor_cap
    return (weights.energy_weight * e_term
            - weights.distance_weight * d_term
            - weights.load_weight * n_term)


def join_utility(follower_id: int, head_id: int, nodes: list,
                 topology: Topology, weights: UtilityWeights, *,
                 initial_energy: float, head_load: int = 1,
                 neighbor_cap: int = DEFAULT_NEIGHBOR_CAP) -> float:
    """Payoff of following a head: its energy, discounted by the follower's
    own link distance and by the head's load counting this follower."""
    e_term = _normalized_energy(nodes[head_id], initial_energy)
    d_term = (topology.dist(follower_id, head_id)
              / nodes[follower_id].comm_range)
    n_term = head_load / neighbor_cap
    return (weights.energy_weight * e_term
            - weights.distance_weight * d_term
            - weights.load_weight * n_term)


def best_response_dynamics(nodes: list, topology: Topology,
                           weights: UtilityWeights, *, initial_energy: float,
                           max_iters: int = 50, rng=None,
                           neighbor_cap: int = DEFAULT_NEIGHBOR_CAP) -> BestResponseResult:
    """Iterate best responses in ascending id order from an all-heads start.

    Deterministic for a given set of ids, energies, positions, and weights;
    the rng argument is accepted for interface symmetry but never consulted.
    A node with no reachable head must stand, and a head keeps standing
    while anyone follows it. Standing is judged by own fitness alone while
    joining pays a congestion term that grows with the head's follower
    count, so every voluntary switch climbs a shared potential and no
    choice is ever invalidated under a follower; the loop therefore reaches
    a fixed point. If max_iters passes somehow elapse anyway, falls back to
    per-neighborhood fitness argmaxes and reports converged=False.
    """
    alive = sorted(nd.id for nd in nodes if nd.alive)
    alive_set = set(alive)
    base = head_fitness_base(nodes, topology, weights,
                             initial_energy=initial_energy)
    e_hat = {i: weights.energy_weight * nodes[i].energy / initial_energy
             for i in alive}
    reach = {i: [j for j in topology.neighbors[i] if j in alive_set]
             for i in alive}
    load_unit = weights.load_weight / neighbor_cap
    dist_unit = {i: weights.distance_weight / nodes[i].comm_range
                 for i in alive}

    profile = {i: None for i in alive}
    loads = {i: 0 for i in alive}

    converged = False
    passes = 0
    for _ in range(max_iters):
        passes += 1
        changed = False
        for i in alive:
            current = profile[i]
            if current is None and loads[i] > 0:
                # A head with followers is committed for the round; it can
                # reconsider once every follower has left on its own.
                continue
            drow = topology.distance[i]
            du = dist_unit[i]
            # Standing costs nothing up front; serving followers is paid in
            # energy and only feeds back through next round's fitness.
            best_choice = None
            best_key = (base[i], -i)
            for c in reach[i]:
                if profile[c] is not None:
                    continue
                extra = 0 if current == c else 1
                value = (e_hat[c] - du * drow[c]
                         - load_unit * (loads[c] + extra))
                key = (value, -c)
                if key > best_key:
                    best_key = key
                    best_choice = c
            if best_choice != current:
                if current is not None:
                    loads[current] -= 1
                if best_choice is not None:
                    loads[best_choice] += 1
                profile[i] = best_choice
                changed = True
        if not changed:
            converged = True
            break

    if not converged:
        profile = _neighborhood_argmax_profile(alive, reach, base, e_hat,
                                               dist_unit, topology)

    return BestResponseResult(profile=profile, converged=converged, passes=passes)


def _neighborhood_argmax_profile(alive, reach, base, e_hat, dist_unit,
                                 topology):
    """Fallback assignment: local fitness maxima stand, everyone else follows
    the best reachable head by load-free join value, the stranded stand too."""
    heads = set()
    for i in alive:
        key = (base[i], -i)
        if all(key >= (base[j], -j) for j in reach[i]):
            heads.add(i)
    profile = {}
    for i in alive:
        if i in heads:
            profile[i] = None
            continue
        options = [h for h in reach[i] if h in heads]
        if not options:
            profile[i] = None
        else:
            du = dist_unit[i]
            drow = topology.distance[i]
            profile[i] = max(options,
                             key=lambda h: (e_hat[h] - du * drow[h], -h))
    return profile


def profile_to_clusters(result: BestResponseResult):
    """Materialize the equilibrium as (member_ids, head_id) groupings."""
    groups = []
    for h in result.head_ids():
        groups.append((sorted([h] + result.followers_of(h)), h))
    return groups


def select_head_by_utility(cluster, nodes: list, topology: Topology,
                           weights: UtilityWeights, *, initial_energy: float,
                           neighbor_cap: int = DEFAULT_NEIGHBOR_CAP) -> int:
    """The member with the highest head-fitness for this cluster.

    The distance term here is the candidate's mean distance to the members
    it would serve, so the trade-off is between residual charge and actual
    serving cost rather than generic neighborhood position.
    """
    members = cluster.member_ids
    prospective = len(members) - 1

    def fitness(i: int) -> float:
        if prospective > 0:
            mean_d = (sum(topology.dist(i, m) for m in members if m != i)
                      / prospective)
            d_term = mean_d / nodes[i].comm_range
        else:
            d_term = 0.0
        e_term = _normalized_energy(nodes[i], initial_energy)
        n_term = prospective / neighbor_cap
        return (weights.energy_weight * e_term
                - weights.distance_weight * d_term
                - weights.load_weight * n_term)

    return max(members, key=lambda i: (fitness(i), -i))
