import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.data import (
    CountDistribution,
    Population,
    SamplingPolicy,
    generate_population,
    load_population,
    make_iid_shards,
    pooled_batch,
    sample_client_batchstream,
    save_population,
    select_clients,
    split_eval,
)


def fixed_pop(num_clients=10, n_per=5, feature_dim=2, num_classes=2, seed=3, spread=0.5):
    return generate_population(
        num_clients=num_clients,
        feature_dim=feature_dim,
        num_classes=num_classes,
        counts=CountDistribution.fixed(n_per),
        cluster_spread=spread,
        seed=seed,
    )


class TestCountDistribution:
    def test_fixed(self):
        d = CountDistribution.fixed(5)
        np.testing.assert_array_equal(d.draw(3, np.random.default_rng(0)), [5, 5, 5])

    def test_lognormal_floor_is_one(self):
        d = CountDistribution.lognormal(-10.0, 0.1)
        counts = d.draw(20, np.random.default_rng(1))
        assert np.all(counts == 1)

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            CountDistribution.fixed(0)
        with pytest.raises(ValueError):
            CountDistribution.lognormal(3.0, -1.0)
        with pytest.raises(ValueError):
            CountDistribution("uniform")


class TestGeneratePopulation:
    def test_fixed_counts_and_ids(self):
        pop = fixed_pop(num_clients=4, n_per=5)
        assert [c.client_id for c in pop.clients] == [0, 1, 2, 3]
        assert [c.n_k for c in pop.clients] == [5, 5, 5, 5]
        assert pop.total_n == 20
        assert pop.feature_dim == 2

    def test_lognormal_counts_frozen(self):
        pop = generate_population(
            num_clients=8,
            feature_dim=4,
            num_classes=2,
            counts=CountDistribution.lognormal(3.0, 0.8),
            cluster_spread=0.5,
            seed=7,
        )
        assert [c.n_k for c in pop.clients] == [26, 13, 60, 14, 29, 29, 16, 74]
        assert pop.total_n == 261

    def test_lognormal_counts_are_skewed(self):
        pop = generate_population(
            num_clients=400,
            feature_dim=2,
            num_classes=2,
            counts=CountDistribution.lognormal(3.0, 0.8),
            cluster_spread=0.5,
            seed=11,
        )
        ns = np.array([c.n_k for c in pop.clients])
        # mean of lognormal(3.0, 0.8) is exp(3.32) ~ 27.7; heavy right tail
        assert abs(ns.mean() - np.exp(3.0 + 0.8**2 / 2)) < 4.0
        assert ns.mean() > np.median(ns)
        assert ns.max() > 4 * np.median(ns)

    def test_zero_spread_collapses_client_features(self):
        pop = fixed_pop(spread=0.0)
        for c in pop.clients:
            assert np.ptp(c.features, axis=0).max() == 0.0

    def test_labels_follow_global_rule(self):
        # the label rule is shared across clients, so two clients whose
        # features coincide must agree on labels
        pop = fixed_pop(num_clients=30, n_per=50, spread=2.0, num_classes=3)
        feats = np.concatenate([c.features for c in pop.clients])
        labels = np.concatenate([c.labels for c in pop.clients])
        assert set(np.unique(labels)) <= {0, 1, 2}
        # every class should actually occur in a big sample
        assert len(np.unique(labels)) == 3

    def test_deterministic_in_seed(self):
        a = fixed_pop(seed=5)
        b = fixed_pop(seed=5)
        c = fixed_pop(seed=6)
        for ca, cb in zip(a.clients, b.clients):
            np.testing.assert_array_equal(ca.features, cb.features)
            np.testing.assert_array_equal(ca.labels, cb.labels)
        assert not np.array_equal(a.clients[0].features, c.clients[0].features)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            fixed_pop(num_clients=0)
        with pytest.raises(ValueError):
            generate_population(2, 0, 2, CountDistribution.fixed(3), 0.5, 0)


class TestSelectClients:
    def test_k_equals_m_selects_all(self):
        pop = fixed_pop(num_clients=6)
        assert sorted(select_clients(pop, 6, 0, 0)) == [0, 1, 2, 3, 4, 5]

    def test_frozen_replay(self):
        pop = fixed_pop(num_clients=10)
        assert select_clients(pop, 4, 5, 3) == [8, 0, 5, 9]

    def test_distinct_and_in_range(self):
        pop = fixed_pop(num_clients=9)
        for r in range(10):
            sel = select_clients(pop, 4, r, 1)
            assert len(set(sel)) == 4
            assert all(0 <= i < 9 for i in sel)

    def test_uniform_over_many_rounds(self):
        pop = fixed_pop(num_clients=4, n_per=2)
        counts = np.zeros(4, dtype=int)
        for r in range(10_000):
            for i in select_clients(pop, 2, r, 123):
                counts[i] += 1
        # each client expects 5000 hits; binomial sd ~43, allow wide margin
        assert np.all(np.abs(counts - 5000) < 200)

    def test_rejects_bad_k(self):
        pop = fixed_pop(num_clients=3)
        with pytest.raises(ValueError):
            select_clients(pop, 0, 0, 0)
        with pytest.raises(ValueError):
            select_clients(pop, 4, 0, 0)


class TestBatchstream:
    def test_limit_caps_round_subset(self):
        pop = fixed_pop(num_clients=1, n_per=200)
        policy = SamplingPolicy("non_iid", data_limit=32, clients_per_round=1)
        batches = sample_client_batchstream(pop.clients[0], policy, 1, 8, 0, 0)
        assert [b.features.shape[0] for b in batches] == [8, 8, 8, 8]
        rows = np.concatenate([b.features for b in batches])
        assert len(np.unique(rows, axis=0)) == 32

    def test_no_limit_uses_everything(self):
        pop = fixed_pop(num_clients=1, n_per=10)
        policy = SamplingPolicy("non_iid", data_limit=None, clients_per_round=1)
        batches = sample_client_batchstream(pop.clients[0], policy, 1, 10, 0, 0)
        assert len(batches) == 1
        assert batches[0].features.shape == (10, 2)

    def test_limit_one_single_example(self):
        pop = fixed_pop(num_clients=1, n_per=5)
        policy = SamplingPolicy("non_iid", data_limit=1, clients_per_round=1)
        batches = sample_client_batchstream(pop.clients[0], policy, 1, 1, 0, 0)
        assert len(batches) == 1
        assert batches[0].features.shape == (1, 2)

    def test_epochs_multiply_batches(self):
        pop = fixed_pop(num_clients=1, n_per=16)
        policy = SamplingPolicy("non_iid", data_limit=None, clients_per_round=1)
        batches = sample_client_batchstream(pop.clients[0], policy, 3, 4, 0, 0)
        assert len(batches) == 12
        # every epoch covers the same 16 examples
        for e in range(3):
            rows = np.concatenate([b.features for b in batches[4 * e : 4 * e + 4]])
            assert len(np.unique(rows, axis=0)) == 16

    def test_subset_redrawn_across_rounds(self):
        pop = fixed_pop(num_clients=1, n_per=64)
        policy = SamplingPolicy("non_iid", data_limit=4, clients_per_round=1)
        seen = set()
        for r in range(100):
            for b in sample_client_batchstream(pop.clients[0], policy, 1, 4, r, 0):
                for row in b.features:
                    seen.add(tuple(row))
        # 100 rounds x 4 draws out of 64 distinct rows covers nearly all of them
        assert len(seen) > 55

    def test_deterministic_per_round(self):
        pop = fixed_pop(num_clients=1, n_per=30)
        policy = SamplingPolicy("non_iid", data_limit=8, clients_per_round=1)
        a = sample_client_batchstream(pop.clients[0], policy, 2, 4, 3, 9)
        b = sample_client_batchstream(pop.clients[0], policy, 2, 4, 3, 9)
        for ba, bb in zip(a, b):
            np.testing.assert_array_equal(ba.features, bb.features)
            np.testing.assert_array_equal(ba.labels, bb.labels)


class TestIidShards:
    def test_shards_disjoint_and_sized(self):
        pop = fixed_pop(num_clients=40, n_per=5)
        shards = make_iid_shards(pop, 4, 20, 0, 0)
        assert len(shards) == 4
        rows = []
        for s in shards:
            assert s.n_k == 20
            rows.extend(tuple(r) for r in s.features)
        assert len(rows) == len(set(rows)) == 80

    def test_single_shard_of_full_pool(self):
        pop = fixed_pop(num_clients=4, n_per=5)
        shards = make_iid_shards(pop, 1, 20, 0, 0)
        assert shards[0].n_k == 20
        pool = pooled_batch(pop)
        np.testing.assert_array_equal(
            np.sort(shards[0].features, axis=0), np.sort(pool.features, axis=0)
        )

    def test_shard_means_look_pooled(self):
        # iid shards inherit the pooled mean; per-client data does not
        pop = fixed_pop(num_clients=40, n_per=20, spread=0.2, seed=8)
        pool = pooled_batch(pop)
        mu = pool.features.mean(axis=0)
        sd = pool.features.std(axis=0)
        shards = make_iid_shards(pop, 5, 50, 0, 0)
        for s in shards:
            err = np.abs(s.features.mean(axis=0) - mu)
            assert np.all(err < 3.0 * sd / np.sqrt(50))

    def test_rejects_oversized_request(self):
        pop = fixed_pop(num_clients=2, n_per=5)
        with pytest.raises(ValueError):
            make_iid_shards(pop, 3, 5, 0, 0)


class TestSplitEval:
    def test_sizes(self):
        pop = fixed_pop(num_clients=6, n_per=10)
        train, evb = split_eval(pop, 0.1, 0)
        assert [c.n_k for c in train.clients] == [9] * 6
        assert evb.features.shape == (6, 2)

    def test_tiny_clients_keep_one_train_example(self):
        pop = fixed_pop(num_clients=5, n_per=2)
        train, evb = split_eval(pop, 0.5, 0)
        assert all(c.n_k == 1 for c in train.clients)
        assert evb.features.shape[0] == 5

    def test_singleton_clients_never_donate(self):
        # a mixed population: singletons keep their example, larger clients give
        from fedsim.data import ClientDataset

        rng = np.random.default_rng(0)
        clients = [
            ClientDataset(0, rng.standard_normal((1, 2)), np.array([0])),
            ClientDataset(1, rng.standard_normal((4, 2)), np.array([0, 1, 0, 1])),
        ]
        train, evb = split_eval(Population(clients), 0.5, 0)
        assert train.clients[0].n_k == 1
        assert train.clients[1].n_k == 2
        assert evb.features.shape[0] == 2

    def test_all_singletons_is_an_error(self):
        pop = fixed_pop(num_clients=3, n_per=1)
        with pytest.raises(ValueError):
            split_eval(pop, 0.5, 0)

    def test_partition_is_exact(self):
        pop = fixed_pop(num_clients=4, n_per=25)
        train, evb = split_eval(pop, 0.2, 1)
        train_rows = {tuple(r) for c in train.clients for r in c.features}
        eval_rows = {tuple(r) for r in evb.features}
        all_rows = {tuple(r) for c in pop.clients for r in c.features}
        assert train_rows | eval_rows == all_rows
        assert not (train_rows & eval_rows)


class TestSaveLoad:
    def test_round_trip_exact(self, tmp_path):
        pop = generate_population(
            num_clients=5,
            feature_dim=3,
            num_classes=4,
            counts=CountDistribution.lognormal(2.0, 0.5),
            cluster_spread=0.7,
            seed=13,
        )
        path = tmp_path / "pop.txt"
        save_population(pop, path)
        back = load_population(path)
        assert back.num_clients == pop.num_clients
        assert back.feature_dim == pop.feature_dim
        for a, b in zip(pop.clients, back.clients):
            assert a.client_id == b.client_id
            np.testing.assert_array_equal(a.features, b.features)
            np.testing.assert_array_equal(a.labels, b.labels)
            assert b.labels.dtype == a.labels.dtype

    def test_regression_labels_round_trip(self, tmp_path):
        feats = np.array([[0.5], [1.5]])
        labels = np.array([0.25, -3.5])
        from fedsim.data import ClientDataset

        pop = Population([ClientDataset(0, feats, labels)])
        path = tmp_path / "pop.txt"
        save_population(pop, path)
        back = load_population(path)
        assert back.clients[0].labels.dtype == np.float64
        np.testing.assert_array_equal(back.clients[0].labels, labels)

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a header\n")
        with pytest.raises(ValueError):
            load_population(path)


@settings(max_examples=40, deadline=None)
@given(
    num_clients=st.integers(1, 12),
    k=st.integers(1, 12),
    round_index=st.integers(0, 50),
    seed=st.integers(0, 2**31 - 1),
)
def test_selection_always_valid(num_clients, k, round_index, seed):
    pop = fixed_pop(num_clients=num_clients, n_per=2, seed=1)
    if k > num_clients:
        with pytest.raises(ValueError):
            select_clients(pop, k, round_index, seed)
        return
    sel = select_clients(pop, k, round_index, seed)
    assert len(sel) == len(set(sel)) == k
    assert all(0 <= i < num_clients for i in sel)


@settings(max_examples=30, deadline=None)
@given(
    n_per=st.integers(1, 40),
    limit=st.one_of(st.none(), st.integers(1, 50)),
    epochs=st.integers(1, 3),
    batch_size=st.integers(1, 10),
    seed=st.integers(0, 2**31 - 1),
)
def test_batchstream_accounting(n_per, limit, epochs, batch_size, seed):
    pop = fixed_pop(num_clients=1, n_per=n_per, seed=2)
    policy = SamplingPolicy("non_iid", data_limit=limit, clients_per_round=1)
    batches = sample_client_batchstream(pop.clients[0], policy, epochs, batch_size, 0, seed)
    subset = n_per if limit is None else min(limit, n_per)
    per_epoch = -(-subset // batch_size)
    assert len(batches) == epochs * per_epoch
    assert sum(b.features.shape[0] for b in batches) == epochs * subset
    assert all(b.features.shape[0] <= batch_size for b in batches)
