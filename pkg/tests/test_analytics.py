import random
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from traitsim.analytics import (
    Chain,
    action_probability_vector,
    chain_length_table,
    cluster_agents,
    content_mix,
    mann_whitney_u,
    order_dynamics,
    per_topic_chain_stats,
    project_onto_centroids,
    silhouette_score,
    trace_chains,
)
from traitsim.core import (
    Action,
    ActionDistribution,
    ActionKind,
    ActionRecord,
    ContentItem,
    Order,
)


def rec(agent, kind, iteration=1, target=None, payload=None, order=Order.NA):
    return ActionRecord(iteration, agent, Action(kind, target, payload), order)


class TestActionProbabilityVector:
    def test_all_inactive(self):
        log = [rec("a", ActionKind.INACTIVE, it) for it in range(1, 26)]
        assert action_probability_vector("a", log).as_tuple() == (0, 0, 0, 1)

    def test_mixed_counts(self):
        log = ([rec("a", ActionKind.POST, payload="x")] * 13
               + [rec("a", ActionKind.RESHARE, target=1, order=Order.FIRST)] * 12)
        v = action_probability_vector("a", log)
        assert v.as_tuple() == pytest.approx((0.52, 0.48, 0.0, 0.0))

    def test_follow_is_excluded(self):
        log = [rec("a", ActionKind.POST, payload="x"),
               rec("a", ActionKind.FOLLOW, target="b")]
        assert action_probability_vector("a", log).p_post == 1.0

    def test_reactions_pool_into_interact(self):
        log = [rec("a", k, target=1, order=Order.FIRST)
               for k in (ActionKind.LIKE, ActionKind.DISLIKE, ActionKind.COMMENT)]
        log[-1].action.payload = "c"
        assert action_probability_vector("a", log).p_interact == 1.0

    def test_absent_agent_rejected(self):
        with pytest.raises(ValueError, match="absent"):
            action_probability_vector("ghost", [])


def corner_vectors(per_corner=5, jitter=0.02, seed=0):
    rng = np.random.default_rng(seed)
    corners = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)]
    vectors = {}
    for ci, corner in enumerate(corners):
        for j in range(per_corner):
            noise = rng.uniform(0, jitter, 4)
            raw = np.clip(np.array(corner, dtype=float) + noise, 0, 1)
            raw /= raw.sum()
            vectors[f"c{ci}-{j}"] = ActionDistribution(*raw)
    return vectors


class TestClustering:
    def test_recovers_four_corners(self):
        vectors = corner_vectors()
        clustering = cluster_agents(vectors, 2, 6, seed=0)
        assert clustering.k == 4
        groups = {}
        for agent_id, label in clustering.assignments.items():
            groups.setdefault(agent_id.split("-")[0], set()).add(label)
        assert all(len(labels) == 1 for labels in groups.values())
        assert len(set().union(*groups.values())) == 4

    def test_inertia_curve_covers_the_range(self):
        clustering = cluster_agents(corner_vectors(), 2, 6, seed=0)
        assert sorted(clustering.inertia_curve) == [2, 3, 4, 5, 6]
        # inertia is non-increasing in k for the best restart
        curve = [clustering.inertia_curve[k] for k in (2, 3, 4, 5, 6)]
        assert all(a >= b - 1e-9 for a, b in zip(curve, curve[1:]))

    def test_identical_vectors_force_k1_with_warning(self):
        vectors = {f"a{i}": ActionDistribution(1, 0, 0, 0) for i in range(10)}
        with pytest.warns(UserWarning, match="identical"):
            clustering = cluster_agents(vectors, 2, 4, seed=0)
        assert clustering.k == 1
        assert clustering.inertia == 0.0

    def test_needs_enough_vectors(self):
        with pytest.raises(ValueError):
            cluster_agents(corner_vectors(per_corner=1), 2, 8, seed=0)

    def test_seeded_and_repeatable(self):
        vectors = corner_vectors(jitter=0.3, seed=5)
        a = cluster_agents(vectors, 2, 5, seed=3)
        b = cluster_agents(vectors, 2, 5, seed=3)
        assert a.assignments == b.assignments
        assert a.k == b.k

    def test_centroids_are_distributions(self):
        clustering = cluster_agents(corner_vectors(), 2, 6, seed=0)
        for c in clustering.centroids:
            assert abs(sum(c.as_tuple()) - 1.0) < 1e-9


class TestSilhouette:
    def test_well_separated_near_one(self):
        X = np.array([[0, 0, 0, 0.0], [0, 0, 0, 0.01],
                      [1, 1, 1, 1.0], [1, 1, 1, 0.99]])
        labels = np.array([0, 0, 1, 1])
        assert silhouette_score(X, labels) > 0.95

    def test_single_cluster_scores_zero(self):
        X = np.random.default_rng(0).random((6, 4))
        assert silhouette_score(X, np.zeros(6, dtype=int)) == 0.0


class TestProjection:
    def test_nearest_centroid(self):
        centroids = [ActionDistribution(1, 0, 0, 0), ActionDistribution(0, 0, 0, 1)]
        vectors = {"a": ActionDistribution(0.9, 0.0, 0.0, 0.1),
                   "b": ActionDistribution(0.1, 0.0, 0.0, 0.9)}
        assert project_onto_centroids(vectors, centroids) == {"a": 0, "b": 1}

    def test_tie_goes_to_lowest_index(self):
        centroids = [ActionDistribution(1, 0, 0, 0), ActionDistribution(0, 0, 0, 1)]
        vectors = {"mid": ActionDistribution(0.5, 0.0, 0.0, 0.5)}
        assert project_onto_centroids(vectors, centroids) == {"mid": 0}

    def test_empty_centroids_rejected(self):
        with pytest.raises(ValueError):
            project_onto_centroids({}, [])


def original(cid, author, it=1, topic="Music"):
    return ContentItem(cid, author, it, "t", topic)


def reshare(cid, author, parent_item, it=2):
    return ContentItem(cid, author, it, parent_item.text, parent_item.topic,
                       parent=parent_item.content_id, root=parent_item.root)


def store(*items):
    return {item.content_id: item for item in items}


def brute_force_chains(content_store):
    """Independent oracle: enumerate every root-to-leaf re-share path by
    explicit recursion over the child adjacency."""
    children = {}
    for item in content_store.values():
        if item.parent is not None:
            children.setdefault(item.parent, []).append(item.content_id)

    paths = []

    def walk(cid, path):
        kids = children.get(cid, [])
        if not kids and len(path) > 1:
            paths.append(tuple(path))
        for kid in kids:
            walk(kid, path + [kid])

    for item in content_store.values():
        if item.parent is None:
            walk(item.content_id, [item.content_id])
    return sorted(paths)


def random_forest(rng, max_items=100):
    """Random content store: each item is an original or a re-share of a
    uniformly chosen earlier item."""
    n = rng.randint(1, max_items)
    items = {}
    for cid in range(1, n + 1):
        if cid > 1 and rng.random() < 0.6:
            parent = items[rng.randint(1, cid - 1)]
            items[cid] = reshare(cid, f"u{cid}", parent, it=cid)
        else:
            items[cid] = original(cid, f"u{cid}", it=cid)
    return items


class TestTraceChains:
    def test_single_hop(self):
        a = original(1, "A")
        chains = trace_chains(store(a, reshare(2, "B", a)))
        assert len(chains) == 1
        assert chains[0].length == 2
        assert [n[1] for n in chains[0].nodes] == ["A", "B"]

    def test_two_hop_path(self):
        a = original(1, "A")
        b = reshare(2, "B", a)
        chains = trace_chains(store(a, b, reshare(3, "C", b, it=3)))
        assert len(chains) == 1
        assert chains[0].length == 3
        assert [n[1] for n in chains[0].nodes] == ["A", "B", "C"]
        assert chains[0].nodes[0][0] == 0  # positions start at the root

    def test_branching_yields_one_chain_per_leaf(self):
        a = original(1, "A")
        b = reshare(2, "B", a)
        chains = trace_chains(store(a, b, reshare(3, "C", b, it=3),
                                    reshare(4, "D", a, it=3)))
        assert sorted(c.length for c in chains) == [2, 3]
        assert len(chains) == 2

    def test_unreshared_original_emits_nothing(self):
        assert trace_chains(store(original(1, "A"))) == []

    def test_trait_labels_attached(self):
        a = original(1, "A")
        chains = trace_chains(store(a, reshare(2, "B", a)),
                              traits={"A": "PC", "B": "CA"})
        assert [n[2] for n in chains[0].nodes] == ["PC", "CA"]

    def test_cycle_detected(self):
        a = ContentItem(1, "A", 1, "t", "Music", parent=2, root=1)
        b = ContentItem(2, "B", 1, "t", "Music", parent=1, root=1)
        leaf = ContentItem(3, "C", 2, "t", "Music", parent=2, root=1)
        with pytest.raises(RuntimeError, match="cycle"):
            trace_chains({1: a, 2: b, 3: leaf})

    def test_matches_brute_force_oracle(self):
        # authors in random_forest are u<content_id>, so the author path is
        # the content-id path
        rng = random.Random(7)
        for _ in range(50):
            content = random_forest(rng)
            got = sorted(tuple(int(author[1:]) for _, author, _ in c.nodes)
                         for c in trace_chains(content))
            assert got == brute_force_chains(content)


class TestTemporalDynamics:
    def test_order_dynamics_percentages(self):
        log = [
            rec("a", ActionKind.LIKE, 2, target=1, order=Order.FIRST),
            rec("b", ActionKind.LIKE, 2, target=1, order=Order.FIRST),
            rec("c", ActionKind.RESHARE, 2, target=2, order=Order.SECOND),
            rec("a", ActionKind.POST, 3, payload="x"),
            rec("b", ActionKind.COMMENT, 4, target=2, payload="y",
                order=Order.SECOND),
        ]
        dynamics = order_dynamics(log)
        assert dynamics[2] == pytest.approx((200 / 3, 100 / 3))
        assert dynamics[3] is None
        assert dynamics[4] == (0.0, 100.0)

    def test_content_mix_is_cumulative(self):
        log = [
            rec("a", ActionKind.POST, 1, payload="x"),
            rec("b", ActionKind.POST, 1, payload="y"),
            rec("c", ActionKind.RESHARE, 2, target=1, order=Order.FIRST),
            rec("d", ActionKind.INACTIVE, 3),
        ]
        mix = content_mix(log)
        assert mix[1] == (100.0, 0.0)
        assert mix[2] == pytest.approx((200 / 3, 100 / 3))
        assert mix[3] == mix[2]  # nothing new created

    def test_empty_log(self):
        assert order_dynamics([]) == {}
        assert content_mix([]) == {}


class TestChainTables:
    def chains(self, lengths, topic="Music"):
        return [Chain(root=i, topic=topic, nodes=[], length=l)
                for i, l in enumerate(lengths)]

    def test_counts_percentages_mean_max(self):
        table = chain_length_table(self.chains([2, 2, 3]))
        assert table.counts == {2: 2, 3: 1}
        assert table.percentages[2] == pytest.approx(200 / 3)
        assert table.mean == pytest.approx(7 / 3)
        assert table.max == 3
        assert table.total == 3

    def test_empty(self):
        table = chain_length_table([])
        assert (table.total, table.mean, table.max) == (0, 0.0, 0)

    def test_per_topic_stats(self):
        chains = (self.chains([2, 4], topic="Music")
                  + self.chains([3], topic="Religion"))
        stats = per_topic_chain_stats(chains)
        assert stats["Music"] == (3.0, pytest.approx(200 / 3))
        assert stats["Religion"] == (3.0, pytest.approx(100 / 3))

    @given(st.lists(st.integers(2, 12), min_size=1, max_size=50))
    @settings(max_examples=50, deadline=None)
    def test_percentages_sum_to_100(self, lengths):
        table = chain_length_table(self.chains(lengths))
        assert sum(table.percentages.values()) == pytest.approx(100.0)


def mw_oracle(sample_a, sample_b):
    """Independent Mann-Whitney oracle: U by direct pair counting, p by
    enumerating all assignments of the combined values to group A."""
    u_of = lambda a, b: sum(
        1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)
    u_a = u_of(sample_a, sample_b)
    combined = list(sample_a) + list(sample_b)
    n_a = len(sample_a)
    us = []
    for idx in combinations(range(len(combined)), n_a):
        group_a = [combined[i] for i in idx]
        group_b = [combined[i] for i in range(len(combined)) if i not in idx]
        us.append(u_of(group_a, group_b))
    le = sum(u <= u_a + 1e-12 for u in us) / len(us)
    ge = sum(u >= u_a - 1e-12 for u in us) / len(us)
    return u_a, min(1.0, 2.0 * min(le, ge))


class TestMannWhitney:
    def test_textbook_example(self):
        u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0.0
        assert p == pytest.approx(0.1)

    def test_symmetric_in_sample_order(self):
        a, b = [1.0, 5.0, 7.0], [2.0, 2.0, 9.0, 4.0]
        u_ab, p_ab = mann_whitney_u(a, b)
        u_ba, p_ba = mann_whitney_u(b, a)
        assert u_ab + u_ba == pytest.approx(len(a) * len(b))
        assert p_ab == pytest.approx(p_ba)

    def test_identical_samples(self):
        u, p = mann_whitney_u([3, 3, 3], [3, 3, 3])
        assert p == 1.0

    def test_matches_pair_counting_oracle(self):
        rng = random.Random(3)
        for _ in range(25):
            n_a = rng.randint(1, 5)
            n_b = rng.randint(1, 5)
            a = [rng.randint(0, 6) for _ in range(n_a)]
            b = [rng.randint(0, 6) for _ in range(n_b)]
            u, p = mann_whitney_u(a, b)
            u_expect, p_expect = mw_oracle(a, b)
            assert u == pytest.approx(u_expect)
            assert p == pytest.approx(p_expect)

    def test_large_sample_normal_approximation(self):
        rng = random.Random(4)
        a = [rng.gauss(0, 1) for _ in range(30)]
        b = [rng.gauss(2, 1) for _ in range(30)]
        u, p = mann_whitney_u(a, b)
        assert p < 0.001
        same = [1.0] * 15 + [2.0] * 15
        _, p_same = mann_whitney_u(same, list(same))
        assert p_same > 0.9

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1])
