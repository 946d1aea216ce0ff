import numpy as np
import pytest

from gridswarm.replay import ReplayBuffer, SampleBatch, SumTree, Transition


def dummy(i=0):
    return Transition(obs=np.zeros(2), action=0, reward=0.0,
                      next_obs=np.zeros(2), terminal=False, agent_id=i)


def full_batch(buf):
    """A batch addressing every occupied slot exactly once."""
    idx = np.arange(len(buf))
    return SampleBatch(transitions=[buf.storage[i] for i in idx], indices=idx,
                       insert_ids=buf.insert_ids[idx].copy(),
                       weights=np.ones(len(idx)))


class TestSumTree:
    def test_total_matches_brute_force(self):
        rng = np.random.default_rng(0)
        tree = SumTree(16)
        leaves = np.zeros(16)
        for _ in range(200):
            i = int(rng.integers(16))
            p = float(rng.uniform(0, 5))
            tree.update(i, p)
            leaves[i] = p
            assert tree.total() == pytest.approx(leaves.sum(), abs=1e-9)

    def test_find_interval(self):
        tree = SumTree(4)
        for i, p in enumerate([1.0, 2.0, 3.0, 4.0]):
            tree.update(i, p)
        assert tree.find(0.5) == 0
        assert tree.find(1.5) == 1
        assert tree.find(9.9) == 3


class TestPush:
    def test_empty_buffer_priority_one(self):
        buf = ReplayBuffer(capacity=8)
        buf.push(dummy())
        assert len(buf) == 1
        assert buf.tree.get(0) == 1.0

    def test_ring_eviction(self):
        buf = ReplayBuffer(capacity=2)
        for i in range(3):
            buf.push(dummy(i))
        assert len(buf) == 2
        stored = {t.agent_id for t in buf.storage}
        assert stored == {1, 2}

    def test_prefix_sum_conservation(self):
        rng = np.random.default_rng(1)
        buf = ReplayBuffer(capacity=16, seed=1)
        for i in range(40):
            buf.push(dummy(i))
            if len(buf) >= 4 and i % 3 == 0:
                batch = buf.sample(4, beta=0.5)
                buf.update_priorities(batch, rng.uniform(0, 3, size=4))
            expected = sum(buf.tree.get(j) for j in range(buf.capacity))
            assert buf.tree.total() == pytest.approx(expected, abs=1e-9)

    def test_new_push_uses_max_priority(self):
        buf = ReplayBuffer(capacity=8, seed=0)
        for i in range(4):
            buf.push(dummy(i))
        batch = buf.sample(4, beta=0.4)
        buf.update_priorities(batch, np.array([5.0, 0.0, 0.0, 0.0]))
        buf.push(dummy(9))
        assert buf.tree.get(4) == pytest.approx((5.0 + 0.01) ** 0.6)


class TestSample:
    def test_uniform_priorities_unit_weights(self):
        buf = ReplayBuffer(capacity=128, seed=2)
        for i in range(100):
            buf.push(dummy(i))
        batch = buf.sample(64, beta=0.7)
        assert np.all(batch.weights == 1.0)

    def test_beta_zero_unit_weights(self):
        buf = ReplayBuffer(capacity=16, seed=3)
        for i in range(16):
            buf.push(dummy(i))
        batch = buf.sample(8, beta=1.0)
        buf.update_priorities(batch, np.linspace(0, 4, 8))
        batch2 = buf.sample(8, beta=0.0)
        assert np.all(batch2.weights == 1.0)

    def test_draw_ratio_three_to_one(self):
        buf = ReplayBuffer(capacity=2, seed=4)
        buf.push(dummy(0))
        buf.push(dummy(1))
        buf.tree.update(0, 3.0)
        buf.tree.update(1, 1.0)
        counts = np.zeros(2)
        for _ in range(50_000):
            for i in buf.sample(2, beta=0.0).indices:
                counts[i] += 1
        ratio = counts[0] / counts.sum()
        assert abs(ratio - 0.75) < 0.02

    def test_underfilled_rejected(self):
        buf = ReplayBuffer(capacity=16)
        buf.push(dummy())
        with pytest.raises(ValueError):
            buf.sample(8)

    def test_weights_bounded(self):
        buf = ReplayBuffer(capacity=32, seed=5)
        for i in range(32):
            buf.push(dummy(i))
        batch = buf.sample(16, beta=0.4)
        buf.update_priorities(batch, np.random.default_rng(5).uniform(0, 10, 16))
        batch2 = buf.sample(16, beta=0.8)
        assert np.all(batch2.weights > 0) and np.all(batch2.weights <= 1.0)
        assert batch2.weights.max() == 1.0

    def test_deterministic_under_seed(self):
        seqs = []
        for _ in range(2):
            buf = ReplayBuffer(capacity=16, seed=9)
            for i in range(16):
                buf.push(dummy(i))
            seqs.append([tuple(buf.sample(4, 0.4).indices) for _ in range(5)])
        assert seqs[0] == seqs[1]

    def test_literal_weight_mode(self):
        buf = ReplayBuffer(capacity=4, seed=6, weight_mode="literal")
        for i in range(4):
            buf.push(dummy(i))
        buf.tree.update(0, 4.0)
        batch = buf.sample(4, beta=1.0)
        # literal form (1/N * 1/p_i)^beta, max-normalized
        p = np.array([buf.tree.get(i) for i in batch.indices])
        raw = (1.0 / 4 / p) ** 1.0
        assert np.allclose(batch.weights, raw / raw.max())


class TestUpdatePriorities:
    def test_epsilon_floor(self):
        buf = ReplayBuffer(capacity=4, seed=7)
        for i in range(4):
            buf.push(dummy(i))
        buf.update_priorities(full_batch(buf), np.zeros(4))
        for i in range(4):
            assert buf.tree.get(i) == pytest.approx(0.01 ** 0.6)
            assert buf.tree.get(i) > 0

    def test_priority_arithmetic(self):
        buf = ReplayBuffer(capacity=1, seed=8)
        buf.push(dummy())
        batch = buf.sample(1, 0.4)
        buf.update_priorities(batch, np.array([1.0]))
        assert buf.tree.get(0) == pytest.approx(1.01 ** 0.6)
        assert buf.tree.get(0) == pytest.approx(1.00599, abs=1e-5)

    def test_stale_index_ignored(self):
        buf = ReplayBuffer(capacity=2, seed=9)
        buf.push(dummy(0))
        buf.push(dummy(1))
        batch = full_batch(buf)
        buf.push(dummy(2))  # evicts slot 0
        before = buf.tree.get(0)
        buf.update_priorities(batch, np.array([7.0, 7.0]))
        assert buf.stale_updates == 1
        assert buf.tree.get(0) == before  # slot 0 untouched

    def test_equal_updates_give_uniform_sampling(self):
        buf = ReplayBuffer(capacity=8, seed=10)
        for i in range(8):
            buf.push(dummy(i))
        buf.update_priorities(full_batch(buf), np.full(8, 2.0))
        counts = np.zeros(8)
        n = 40_000
        for _ in range(n // 8):
            for i in buf.sample(8, 0.0).indices:
                counts[i] += 1
        freq = counts / counts.sum()
        # chi-squared sanity against uniform
        chi2 = ((counts - n / 8) ** 2 / (n / 8)).sum()
        assert chi2 < 30  # 7 dof, generous bound
        assert np.allclose(freq, 1 / 8, atol=0.01)
