"""Utility arithmetic and equilibrium properties of head competition."""

import itertools
import math
import random

import pytest

from wsn_lab import (UtilityWeights, best_response_dynamics, join_utility,
                     profile_to_clusters, select_head_by_energy,
                     select_head_by_utility, utility)
from wsn_lab.clustering import Cluster
from wsn_lab.game import head_fitness_base, mean_neighbor_distance
from wsn_lab.network import DEFAULT_NEIGHBOR_CAP

from conftest import make_nodes


def random_instance(seed, n=None, side=60.0):
    rng = random.Random(seed)
    if n is None:
        n = rng.randint(2, 6)
    positions = [(rng.uniform(0, side), rng.uniform(0, side)) for _ in range(n)]
    energies = [rng.uniform(0.05, 1.0) for _ in range(n)]
    return make_nodes(positions, energies, comm_range=side * 0.7)


def test_utility_hand_value():
    nodes, topo = make_nodes([(0, 0), (30, 0)], [1.0, 0.5], comm_range=30.0)
    w = UtilityWeights(energy_weight=1.0, distance_weight=0.8, load_weight=0.1)
    # node 0: energy term 1.0, lone neighbor at exactly one range unit
    got = utility(0, nodes, topo, w, initial_energy=1.0)
    assert math.isclose(got, 1.0 - 0.8 * 1.0, rel_tol=1e-12)
    # three prospective members add 0.1 * 3/10
    got = utility(0, nodes, topo, w, initial_energy=1.0, prospective_members=3)
    assert math.isclose(got, 0.2 - 0.03, rel_tol=1e-12)


def test_utility_weight_linearity():
    nodes, topo = make_nodes([(0, 0), (12, 0), (0, 9)], [0.8, 0.6, 0.4],
                             comm_range=20.0)
    w = UtilityWeights(energy_weight=2.0, distance_weight=1.0, load_weight=0.5)
    e = nodes[0].energy
    d = (12.0 + 9.0) / 2 / 20.0
    n = 2 / DEFAULT_NEIGHBOR_CAP
    expected = 2.0 * e - 1.0 * d - 0.5 * n
    got = utility(0, nodes, topo, w, initial_energy=1.0, prospective_members=2)
    assert math.isclose(got, expected, rel_tol=1e-12)


def test_join_utility_hand_value():
    nodes, topo = make_nodes([(0, 0), (10, 0)], [0.9, 0.3], comm_range=25.0)
    w = UtilityWeights(energy_weight=1.0, distance_weight=0.5, load_weight=0.2)
    got = join_utility(1, 0, nodes, topo, w, initial_energy=1.0, head_load=4)
    expected = 0.9 - 0.5 * (10.0 / 25.0) - 0.2 * (4 / DEFAULT_NEIGHBOR_CAP)
    assert math.isclose(got, expected, rel_tol=1e-12)


def test_mean_neighbor_distance_ignores_dead_and_isolated():
    nodes, topo = make_nodes([(0, 0), (10, 0), (20, 0)], comm_range=25.0)
    assert math.isclose(mean_neighbor_distance(0, nodes, topo), 15.0 / 25.0,
                        rel_tol=1e-12)
    nodes[1].energy = 0.0
    assert math.isclose(mean_neighbor_distance(0, nodes, topo), 20.0 / 25.0,
                        rel_tol=1e-12)
    lonely, lonely_topo = make_nodes([(0, 0)])
    assert mean_neighbor_distance(0, lonely, lonely_topo) == 0.0


def test_head_fitness_base_matches_utility():
    nodes, topo = random_instance(99, n=6)
    w = UtilityWeights()
    base = head_fitness_base(nodes, topo, w, initial_energy=1.0)
    for i in base:
        assert math.isclose(base[i], utility(i, nodes, topo, w,
                                             initial_energy=1.0),
                            rel_tol=1e-9)


@pytest.mark.parametrize("scale", [0.25, 3.7, 1000.0])
def test_positive_rescaling_preserves_choices(scale):
    w = UtilityWeights(energy_weight=1.0, distance_weight=0.8, load_weight=0.1)
    scaled = UtilityWeights(energy_weight=scale * w.energy_weight,
                            distance_weight=scale * w.distance_weight,
                            load_weight=scale * w.load_weight)
    for seed in range(40):
        nodes, topo = random_instance(seed)
        a = best_response_dynamics(nodes, topo, w, initial_energy=1.0)
        b = best_response_dynamics(nodes, topo, scaled, initial_energy=1.0)
        assert a.profile == b.profile
        cluster = Cluster(id=0, member_ids=[nd.id for nd in nodes])
        assert (select_head_by_utility(cluster, nodes, topo, w,
                                       initial_energy=1.0)
                == select_head_by_utility(cluster, nodes, topo, scaled,
                                          initial_energy=1.0))


class _ExplodingRng:
    def __getattr__(self, name):
        raise AssertionError("dynamics consulted the rng")


def test_dynamics_deterministic_and_rng_free():
    for seed in (0, 1, 2):
        nodes, topo = random_instance(seed, n=6)
        a = best_response_dynamics(nodes, topo, UtilityWeights(),
                                   initial_energy=1.0, rng=_ExplodingRng())
        b = best_response_dynamics(nodes, topo, UtilityWeights(),
                                   initial_energy=1.0)
        assert a.profile == b.profile
        assert a.converged and b.converged


def _deviation_values(i, profile, nodes, topo, weights, base):
    """Payoff of every choice open to node i given the others' profile.

    Mirrors the published payoff model: standing is scored by load-free
    fitness, joining head c by c's energy minus the link-distance and
    congestion terms, with an incumbent follower not re-counted.
    """
    loads = {}
    for j, tgt in profile.items():
        if tgt is not None:
            loads[tgt] = loads.get(tgt, 0) + 1
    e_hat = {j: weights.energy_weight * nodes[j].energy for j in profile}
    load_unit = weights.load_weight / DEFAULT_NEIGHBOR_CAP
    du = weights.distance_weight / nodes[i].comm_range
    options = {None: (base[i], -i)}
    for c in topo.neighbors[i]:
        if c not in profile or profile[c] is not None:
            continue
        extra = 0 if profile[i] == c else 1
        value = (e_hat[c] - du * topo.dist(i, c)
                 - load_unit * (loads.get(c, 0) + extra))
        options[c] = (value, -c)
    return options


def _is_stable(profile, nodes, topo, weights, base):
    loads = {}
    for j, tgt in profile.items():
        if tgt is not None:
            loads[tgt] = loads.get(tgt, 0) + 1
    for i in profile:
        if profile[i] is None and loads.get(i, 0) > 0:
            continue          # serving heads are committed for the round
        options = _deviation_values(i, profile, nodes, topo, weights, base)
        current = options.get(profile[i])
        if current is None:
            return False      # following a non-head is not an outcome
        if any(v > current for v in options.values()):
            return False
    return True


def test_equilibrium_has_no_profitable_deviation():
    w = UtilityWeights()
    for seed in range(120):
        nodes, topo = random_instance(seed)
        base = head_fitness_base(nodes, topo, w, initial_energy=1.0)
        result = best_response_dynamics(nodes, topo, w, initial_energy=1.0)
        assert result.converged
        assert _is_stable(result.profile, nodes, topo, w, base), seed


def test_equilibrium_in_enumerated_stable_set():
    """On tiny instances, compare against every profile there is."""
    w = UtilityWeights()
    for seed in range(30):
        nodes, topo = random_instance(seed * 7 + 1, n=4)
        base = head_fitness_base(nodes, topo, w, initial_energy=1.0)
        ids = [nd.id for nd in nodes]
        choice_sets = [[None] + list(topo.neighbors[i]) for i in ids]
        stable = []
        for combo in itertools.product(*choice_sets):
            profile = dict(zip(ids, combo))
            if _is_stable(profile, nodes, topo, w, base):
                stable.append(profile)
        assert stable, seed
        result = best_response_dynamics(nodes, topo, w, initial_energy=1.0)
        assert result.profile in stable, seed


def test_unreachable_nodes_stand_alone():
    nodes, topo = make_nodes([(0, 0), (500, 500)], comm_range=30.0)
    result = best_response_dynamics(nodes, topo, UtilityWeights(),
                                    initial_energy=1.0)
    assert result.profile == {0: None, 1: None}


def test_zero_distance_and_load_weights_reduce_to_energy_chase():
    w = UtilityWeights(energy_weight=1.0, distance_weight=0.0, load_weight=0.0)
    for seed in range(40):
        nodes, topo = random_instance(seed, n=6)
        result = best_response_dynamics(nodes, topo, w, initial_energy=1.0)
        for i, tgt in result.profile.items():
            standing = [j for j in topo.neighbors[i]
                        if result.profile.get(j) is None]
            if tgt is None:
                if result.followers_of(i):
                    continue   # serving heads are committed where they stand
                assert all(nodes[j].energy <= nodes[i].energy
                           for j in standing)
            else:
                assert nodes[tgt].energy >= nodes[i].energy
                assert nodes[tgt].energy == max(nodes[j].energy
                                                for j in standing)
        cluster = Cluster(id=0, member_ids=[nd.id for nd in nodes])
        assert (select_head_by_utility(cluster, nodes, topo, w,
                                       initial_energy=1.0)
                == select_head_by_energy(cluster, nodes))


def test_select_head_by_utility_uses_serving_distance():
    # equal energies: the central member serves the shortest mean link
    nodes, topo = make_nodes([(0, 0), (10, 0), (20, 0)], comm_range=40.0)
    cluster = Cluster(id=0, member_ids=[0, 1, 2])
    head = select_head_by_utility(cluster, nodes, topo, UtilityWeights(),
                                  initial_energy=1.0)
    assert head == 1


def test_profile_to_clusters_partitions_alive_set():
    for seed in range(20):
        nodes, topo = random_instance(seed)
        result = best_response_dynamics(nodes, topo, UtilityWeights(),
                                        initial_energy=1.0)
        groups = profile_to_clusters(result)
        seen = []
        for members, head in groups:
            assert head in members
            assert result.profile[head] is None
            seen.extend(members)
        assert sorted(seen) == [nd.id for nd in nodes]


def test_weights_validation():
    with pytest.raises(ValueError):
        UtilityWeights(energy_weight=-1.0)
    with pytest.raises(ValueError):
        UtilityWeights(energy_weight=0.0, distance_weight=0.0, load_weight=0.0)
