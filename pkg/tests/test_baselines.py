import itertools
import math

import numpy as np
import pytest

from gridswarm.baselines import (BaselinePolicy, dbscan, dbscan_assign,
                                 greedy_policy, pso_assign, random_policy,
                                 serpentine_order, step_toward, sweep_action,
                                 SweepState, PSO_INERTIA, PSO_COGNITIVE,
                                 PSO_SOCIAL, PSO_PARTICLES, PSO_ITERATIONS)
from gridswarm.grid_world import Action, collection_fraction, new_env, step, EnvConfig

from conftest import make_env


class TestGreedy:
    def test_axis_move_right(self):
        env = make_env(10, [(0, 0)], [(3, 0)], discovered=[0])
        assert greedy_policy(env, 0, SweepState()) == Action.RIGHT

    def test_axis_move_down(self):
        env = make_env(10, [(2, 2)], [(2, 5)], discovered=[0])
        assert greedy_policy(env, 0, SweepState()) == Action.DOWN

    def test_prefers_x_axis(self):
        env = make_env(10, [(0, 0)], [(3, 3)], discovered=[0])
        assert greedy_policy(env, 0, SweepState()) == Action.RIGHT

    def test_sweep_fallback_follows_serpentine(self):
        # no discovered goals: agent mid-sweep heads to the next serpentine cell
        env = make_env(5, [(4, 0)], [(2, 2)], vision_radius=0.5,
                       vision_pass=False)
        order = serpentine_order(5)
        state = SweepState(index=order.index((4, 0)))
        action = greedy_policy(env, 0, state)
        # next serpentine cell after (4,0) is (4,1)
        assert order[order.index((4, 0)) + 1] == (4, 1)
        assert action == Action.DOWN

    def test_never_uses_undiscovered_goals(self):
        env = make_env(20, [(0, 0)], [(10, 0)], vision_radius=1.0,
                       vision_pass=False)
        state = SweepState()
        a = greedy_policy(env, 0, state)
        # sweep starts toward (0,0) -> next cell (1,0); same as goal chase here,
        # so check with the omniscient flag for contrast instead
        assert greedy_policy(env, 0, SweepState(), omniscient=True) == Action.RIGHT
        env2 = make_env(20, [(0, 5)], [(10, 5)], vision_radius=1.0,
                        vision_pass=False)
        # blind agent heads back to the serpentine origin, not toward the goal
        assert greedy_policy(env2, 0, SweepState()) == Action.UP


class TestRandom:
    def test_uniform_frequencies(self):
        rng = np.random.default_rng(0)
        counts = np.zeros(4)
        n = 100_000
        for _ in range(n):
            counts[random_policy(rng)] += 1
        assert np.allclose(counts / n, 0.25, atol=0.01)

    def test_seeded_reproducible(self):
        a = [random_policy(np.random.default_rng(5)) for _ in range(1)]
        seq1 = [int(random_policy(np.random.default_rng(9))) for _ in range(0, 20)]
        seq2 = [int(random_policy(np.random.default_rng(9))) for _ in range(0, 20)]
        assert seq1 == seq2


class TestPso:
    def test_singleton_assignment(self):
        env = make_env(10, [(0, 0)], [(4, 4)], discovered=[0])
        wp = pso_assign(env, np.random.default_rng(0))
        assert wp == [(4, 4)]

    def test_crossed_configuration_beats_nearest(self):
        # nearest-goal choice sends both agents to the same goal; the
        # brute-force optimal assignment splits them
        env = make_env(20, [(0, 10), (19, 10)], [(9, 10), (12, 10)],
                       discovered=[0, 1])
        agents = [(0, 10), (19, 10)]
        goals = [(9, 10), (12, 10)]
        costs = []
        for perm in itertools.product(range(2), repeat=2):
            costs.append(sum(math.dist(agents[i], goals[perm[i]])
                             for i in range(2)))
        best = min(costs)
        wp = pso_assign(env, np.random.default_rng(1))
        pso_cost = sum(math.dist(agents[i], wp[i]) for i in range(2))
        assert pso_cost == pytest.approx(best)

    def test_seeded_reproducible(self):
        env = make_env(15, [(0, 0), (14, 14)], [(3, 3), (10, 10), (7, 2)],
                       discovered=[0, 1, 2])
        wp1 = pso_assign(env, np.random.default_rng(3))
        wp2 = pso_assign(env, np.random.default_rng(3))
        assert wp1 == wp2

    def test_no_goals_returns_none(self):
        env = make_env(10, [(0, 0)], [(5, 5)], vision_radius=0.5,
                       vision_pass=False)
        assert pso_assign(env, np.random.default_rng(0)) == [None]

    def test_best_cost_non_increasing(self, monkeypatch):
        # instrument the gbest trajectory through a local PSO replica
        rng = np.random.default_rng(4)
        agents = np.array([[0.0, 0.0], [9.0, 9.0]])
        goals = np.array([[2.0, 2.0], [8.0, 1.0], [4.0, 7.0]])

        def cost(vec):
            idx = np.clip(np.rint(vec), 0, len(goals) - 1).astype(int)
            return float(np.linalg.norm(agents - goals[idx], axis=1).sum())

        pos = rng.uniform(0, len(goals) - 1, size=(PSO_PARTICLES, 2))
        vel = rng.uniform(-1, 1, size=pos.shape)
        pbest, pbest_cost = pos.copy(), np.array([cost(p) for p in pos])
        g = int(np.argmin(pbest_cost))
        gbest, gbest_cost = pbest[g].copy(), pbest_cost[g]
        history = [gbest_cost]
        for _ in range(PSO_ITERATIONS):
            r1, r2 = rng.uniform(size=pos.shape), rng.uniform(size=pos.shape)
            vel = (PSO_INERTIA * vel + PSO_COGNITIVE * r1 * (pbest - pos)
                   + PSO_SOCIAL * r2 * (gbest - pos))
            pos = np.clip(pos + vel, 0, len(goals) - 1)
            for i in range(PSO_PARTICLES):
                c = cost(pos[i])
                if c < pbest_cost[i]:
                    pbest[i], pbest_cost[i] = pos[i].copy(), c
                    if c < gbest_cost:
                        gbest, gbest_cost = pos[i].copy(), c
            history.append(gbest_cost)
        assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


class TestDbscan:
    def test_two_close_goals_one_cluster(self):
        labels = dbscan(np.array([[1.0, 1.0], [1.0, 2.0]]), eps=5.0, min_pts=2)
        assert labels[0] == labels[1]

    def test_two_far_groups_two_clusters(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [20.0, 0.0], [21.0, 0.0]])
        labels = dbscan(pts, eps=5.0, min_pts=2)
        assert labels[0] == labels[1]
        assert labels[2] == labels[3]
        assert labels[0] != labels[2]

    def test_single_point_singleton(self):
        assert dbscan(np.array([[3.0, 3.0]]), eps=5.0, min_pts=2) == [0]

    def test_pairwise_distance_oracle(self):
        # every pair within one cluster is connected through <= eps hops
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 30, size=(20, 2))
        labels = dbscan(pts, eps=5.0, min_pts=2)
        for lab in set(labels):
            members = [i for i, l in enumerate(labels) if l == lab]
            if len(members) == 1:
                continue
            # connectivity via BFS over the eps-graph restricted to members
            seen = {members[0]}
            frontier = [members[0]]
            while frontier:
                i = frontier.pop()
                for j in members:
                    if j not in seen and math.dist(pts[i], pts[j]) <= 5.0:
                        seen.add(j)
                        frontier.append(j)
            assert seen == set(members)

    def test_order_invariance(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(0, 25, size=(12, 2))
        base = dbscan(pts, eps=5.0, min_pts=2)

        def partition(labels):
            groups = {}
            for i, lab in enumerate(labels):
                groups.setdefault(lab, set()).add(i)
            return {frozenset(g) for g in groups.values()}

        for _ in range(5):
            perm = rng.permutation(12)
            labels = dbscan(pts[perm], eps=5.0, min_pts=2)
            sets = {frozenset(int(perm[i]) for i in g)
                    for g in ({frozenset(j for j, l in enumerate(labels) if l == lab)
                               for lab in set(labels)})}
            assert sets == partition(base)

    def test_assign_targets_cluster_goal(self):
        env = make_env(20, [(0, 0), (19, 19)], [(2, 2), (3, 2), (16, 17)],
                       discovered=[0, 1, 2])
        wp = dbscan_assign(env)
        assert wp[0] in [(2, 2), (3, 2)]
        assert wp[1] == (16, 17)


class TestPolicyWrapper:
    @pytest.mark.parametrize("kind", BaselinePolicy.KINDS)
    def test_emits_legal_actions_and_runs(self, kind):
        env = new_env(EnvConfig(8, 2, 4, rng_seed=3, max_steps=30))
        policy = BaselinePolicy(kind, seed=3)
        while not env.done:
            actions = policy.actions(env)
            assert all(0 <= int(a) <= 3 for a in actions)
            step(env, actions)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            BaselinePolicy("tsp")

    def test_greedy_beats_random_on_small_grid(self):
        def run(kind):
            scores = []
            for e in range(20):
                env = new_env(EnvConfig(10, 2, 10, rng_seed=100 + e,
                                        max_steps=150))
                policy = BaselinePolicy(kind, seed=e)
                while not env.done:
                    step(env, policy.actions(env))
                scores.append(collection_fraction(env))
            return np.mean(scores)
        assert run("greedy") >= run("random")
