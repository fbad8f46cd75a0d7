import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_bundle, zero_head
from gdsrec.datasets import RatingRecord, split_dataset
from gdsrec.graph import build_graph
from gdsrec.model import (
    ModelParams,
    VariantFlags,
    apply_attention,
    attention_item,
    attention_user,
    encode_item_interaction,
    encode_user_interaction,
    forward_ratings,
    item_offset,
    predict,
    predict_batch,
    predict_ranking_score,
    preference_rating,
    ranking_scores,
    social_lambda,
    user_offset,
)


def tiny_params(num_users=6, num_items=9, embed_dim=6, seed=11):
    return ModelParams.initialize(num_users, num_items, embed_dim, seed=seed)


def all_train_bundle(triples, trust, num_users, num_items):
    records = [RatingRecord(u, v, r) for u, v, r in triples]
    return split_dataset(records, 0.999, seed=0, trust=trust,
                         num_users=num_users, num_items=num_items)


class TestEncoders:
    def test_zero_weights_give_zero_vector(self):
        params = tiny_params()
        for name in ("enc_user_w1", "enc_user_b1", "enc_user_w2", "enc_user_b2"):
            params[name].data = np.zeros_like(params[name].data)
        out = encode_user_interaction(2, 1, params)
        assert np.all(out.data == 0.0)

    def test_deterministic_for_same_inputs(self):
        params = tiny_params()
        a = encode_user_interaction(3, 2, params).data
        b = encode_user_interaction(3, 2, params).data
        np.testing.assert_array_equal(a, b)

    def test_item_encoder_uses_user_embedding(self):
        params = tiny_params()
        a = encode_item_interaction(0, 1, params).data
        params["user_embed"].data = params["user_embed"].data + 0.1
        b = encode_item_interaction(0, 1, params).data
        assert not np.allclose(a, b)

    def test_jacobian_wrt_item_embedding_matches_fd(self):
        params = tiny_params()
        item, level = 4, 3
        dim = params.embed_dim
        analytic = np.zeros((dim, dim))
        for k in range(dim):
            params.zero_grad()
            out = encode_user_interaction(item, level, params)
            seed = np.zeros(dim)
            seed[k] = 1.0
            out.backward(seed)
            analytic[k] = params["item_embed"].grad[item]
        h = 1e-5
        numeric = np.zeros((dim, dim))
        row = params["item_embed"].data[item]
        for j in range(dim):
            orig = row[j]
            row[j] = orig + h
            up = encode_user_interaction(item, level, params).data.copy()
            row[j] = orig - h
            down = encode_user_interaction(item, level, params).data.copy()
            row[j] = orig
            numeric[:, j] = (up - down) / (2 * h)
        rel = np.abs(analytic - numeric) / np.maximum.reduce(
            [np.abs(analytic), np.abs(numeric), np.full_like(analytic, 1e-4)]
        )
        assert rel.max() < 1e-4


class TestAttention:
    def test_equal_scores_split_evenly(self):
        weights = apply_attention(np.array([[0.7, 0.7]])).data
        np.testing.assert_allclose(weights, [[0.5, 0.5]], atol=1e-12)

    def test_uniform_mode_quarters(self):
        weights = apply_attention(np.zeros((1, 4)), mode="uniform_avg").data
        np.testing.assert_array_equal(weights, [[0.25, 0.25, 0.25, 0.25]])

    def test_softmax_hand_computed(self):
        weights = apply_attention(np.array([[math.log(2.0), 0.0]])).data
        np.testing.assert_allclose(weights, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-12)

    def test_shift_invariance(self):
        scores = np.random.default_rng(0).normal(size=(5, 7))
        base = apply_attention(scores).data
        shifted = apply_attention(scores + 123.456).data
        np.testing.assert_allclose(base, shifted, atol=1e-12)

    def test_max_mode_assigns_common_maximum(self):
        scores = np.array([[0.1, 2.0, -1.0]])
        softmax = apply_attention(scores).data
        weights = apply_attention(scores, mode="max").data
        np.testing.assert_allclose(weights, softmax.max() * np.ones((1, 3)), atol=1e-15)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            apply_attention(np.zeros((1, 2)), mode="median")

    @given(seed=st.integers(min_value=0, max_value=10_000),
           n=st.integers(min_value=1, max_value=30))
    @settings(max_examples=100, deadline=None)
    def test_softmax_simplex_property(self, seed, n):
        scores = np.random.default_rng(seed).normal(scale=3.0, size=(1, n))
        weights = apply_attention(scores).data
        assert abs(weights.sum() - 1.0) <= 1e-9
        assert np.all(weights > 0)

    def test_attention_networks_on_real_params(self):
        params = tiny_params()
        interactions = np.random.default_rng(3).normal(size=(4, params.embed_dim))
        for fn, table in ((attention_user, "user_embed"), (attention_item, "item_embed")):
            weights = fn(interactions, params[table].data[0], params).data
            assert weights.shape == (1, 4)
            np.testing.assert_allclose(weights.sum(), 1.0, atol=1e-12)

    def test_singleton_neighborhood_gets_full_weight(self):
        params = tiny_params()
        interactions = np.random.default_rng(3).normal(size=(1, params.embed_dim))
        weights = attention_user(interactions, params["user_embed"].data[1], params).data
        np.testing.assert_allclose(weights, [[1.0]])


class TestOffsets:
    def test_empty_user_neighborhood_gives_tanh_bias(self):
        triples = [(0, 0, 4), (1, 0, 2)]
        bundle = all_train_bundle(triples, [], 3, 1)  # user 2 rated nothing
        graph = build_graph(bundle, delta=1)
        params = tiny_params(3, 1)
        out = user_offset(2, graph, params).data
        np.testing.assert_array_equal(out, np.tanh(params["agg_user_b"].data))

    def test_empty_item_neighborhood_gives_tanh_bias(self):
        triples = [(0, 0, 4)]
        bundle = all_train_bundle(triples, [], 1, 2)
        graph = build_graph(bundle, delta=1)
        params = tiny_params(1, 2)
        out = item_offset(1, graph, params).data
        np.testing.assert_array_equal(out, np.tanh(params["agg_item_b"].data))

    def test_single_neighbor_weight_one_manual_formula(self):
        triples = [(0, 0, 5), (1, 0, 5)]
        bundle = all_train_bundle(triples, [], 2, 1)
        graph = build_graph(bundle, delta=1)
        params = tiny_params(2, 1)
        level = graph.user_levels[0][0]
        x = encode_user_interaction(0, int(level), params).data
        manual = np.tanh(x @ params["agg_user_w"].data + params["agg_user_b"].data)
        got = user_offset(0, graph, params).data
        np.testing.assert_allclose(got, manual, atol=1e-12)

    @given(seed=st.integers(min_value=0, max_value=500))
    @settings(max_examples=25, deadline=None)
    def test_offsets_strictly_inside_unit_interval(self, seed):
        bundle = make_bundle(seed=seed % 7, num_users=5, num_items=6, n_ratings=18, n_trust=4)
        graph = build_graph(bundle, delta=1)
        params = tiny_params(5, 6, seed=seed)
        for u in range(5):
            out = user_offset(u, graph, params).data
            assert np.all(np.abs(out) < 1.0)
        for v in range(6):
            out = item_offset(v, graph, params).data
            assert np.all(np.abs(out) < 1.0)

    def test_raw_rating_variant_indexes_table_by_rating(self):
        # single rater with rating 5 and matching average: level 0, raw row 4
        triples = [(0, 0, 5)]
        bundle = all_train_bundle(triples, [], 1, 1)
        graph = build_graph(bundle, delta=1)
        assert graph.user_levels[0][0] == 0
        params = tiny_params(1, 1)
        base = user_offset(0, graph, params, VariantFlags()).data
        raw = user_offset(0, graph, params, VariantFlags(rd_raw=True)).data
        x0 = encode_user_interaction(0, 0, params).data
        x4 = encode_user_interaction(0, 4, params).data
        np.testing.assert_allclose(
            base, np.tanh(x0 @ params["agg_user_w"].data + params["agg_user_b"].data))
        np.testing.assert_allclose(
            raw, np.tanh(x4 @ params["agg_user_w"].data + params["agg_user_b"].data))
        assert not np.allclose(base, raw)


class TestPreferenceHead:
    def test_zero_output_weight_gives_zero(self):
        params = tiny_params()
        params["head_w_out"].data = np.zeros_like(params["head_w_out"].data)
        rng = np.random.default_rng(0)
        out = preference_rating(rng.normal(size=6), rng.normal(size=6), params)
        assert out.data == 0.0

    @given(seed=st.integers(min_value=0, max_value=2000))
    @settings(max_examples=50, deadline=None)
    def test_bounded_by_l1_norm_of_output_weight(self, seed):
        params = tiny_params(seed=seed)
        rng = np.random.default_rng(seed)
        h_u = np.tanh(rng.normal(size=6))
        h_v = np.tanh(rng.normal(size=6))
        score = preference_rating(h_u, h_v, params).item()
        assert abs(score) <= np.abs(params["head_w_out"].data).sum() + 1e-12

    def test_gradient_matches_fd(self):
        params = tiny_params()
        rng = np.random.default_rng(1)
        h_u, h_v = rng.normal(size=6), rng.normal(size=6)
        params.zero_grad()
        preference_rating(h_u, h_v, params).backward()
        grads = params.gradients()
        h = 1e-5
        for name in ("head_w1", "head_b1", "head_w2", "head_b2", "head_w_out"):
            flat = params[name].data.ravel()
            gflat = grads[name].ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = preference_rating(h_u, h_v, params).item()
                flat[i] = orig - h
                down = preference_rating(h_u, h_v, params).item()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                assert abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-4) < 1e-4


class TestPrediction:
    def _setup(self, trust=((0, 1), (1, 2), (2, 0))):
        bundle = make_bundle(seed=4, num_users=5, num_items=7, n_ratings=22, n_trust=0)
        if trust:
            bundle = split_dataset(
                [RatingRecord(*t) for t in bundle.train.tolist()
                 + bundle.validation.tolist() + bundle.test.tolist()],
                0.7, seed=4, trust=list(trust), num_users=5, num_items=7,
            )
        graph = build_graph(bundle, delta=1)
        params = tiny_params(5, 7)
        return bundle, graph, params

    def test_zero_head_alpha_one_equals_benchmark(self):
        bundle, graph, params = self._setup()
        zero_head(params)
        flags = VariantFlags(alpha=1.0)
        for u in range(5):
            for v in range(7):
                expected = 0.5 * (bundle.user_average(u) + bundle.item_average(v))
                assert predict(u, v, graph, bundle, params, flags) == expected

    def test_zero_head_alpha_zero_gives_zero(self):
        bundle, graph, params = self._setup()
        zero_head(params)
        flags = VariantFlags(alpha=0.0)
        for u in range(5):
            for v in range(7):
                assert predict(u, v, graph, bundle, params, flags) == 0.0

    def test_decomposition_invariant(self):
        bundle, graph, params = self._setup()
        flags = VariantFlags(alpha=1.0)
        for u in range(5):
            for v in range(3):
                predicted = predict(u, v, graph, bundle, params, flags)
                base = 0.5 * (bundle.user_average(u) + bundle.item_average(v))
                h_v = item_offset(v, graph, params, flags).data
                own = preference_rating(user_offset(u, graph, params, flags).data,
                                        h_v, params).item()
                neighbors, coeffs = graph.social_of_user(u)
                if len(neighbors) == 0:
                    expected = own
                else:
                    lam = social_lambda(coeffs)
                    social = sum(
                        w * preference_rating(
                            user_offset(int(k), graph, params, flags).data, h_v, params
                        ).item()
                        for k, w in zip(neighbors, lam)
                    )
                    expected = 0.5 * (own + social)
                assert abs((predicted - base) - expected) < 1e-12

    def test_no_social_flag_keeps_own_score_only(self):
        bundle, graph, params = self._setup()
        base_flags = VariantFlags()
        sn_flags = VariantFlags(sn_off=True)
        for u in range(5):
            h_v = item_offset(0, graph, params).data
            own = preference_rating(user_offset(u, graph, params).data, h_v, params).item()
            benchmark = 0.5 * (bundle.user_average(u) + bundle.item_average(0))
            got = predict(u, 0, graph, bundle, params, sn_flags)
            assert abs(got - (benchmark + own)) < 1e-12
            if len(graph.social_neighbors[u]) == 0:
                assert got == predict(u, 0, graph, bundle, params, base_flags)

    def test_uniform_coefficients_make_rc_variant_identical(self):
        # disjoint item sets force every coefficient to the floor value 1
        triples = [(u, 2 * u, (u % 5) + 1) for u in range(4)]
        triples += [(u, 2 * u + 1, ((u + 2) % 5) + 1) for u in range(4)]
        trust = [(0, 1), (0, 2), (1, 3), (2, 3), (3, 0)]
        bundle = all_train_bundle(triples, trust, 4, 8)
        graph = build_graph(bundle, delta=1)
        assert all(np.all(c == 1) for c in graph.social_coefficients if len(c))
        params = tiny_params(4, 8)
        base = VariantFlags(rc_off=False)
        rc = VariantFlags(rc_off=True)
        for u in range(4):
            for v in range(8):
                assert predict(u, v, graph, bundle, params, base) == \
                    predict(u, v, graph, bundle, params, rc)

    def test_cold_pair_uses_global_mean_benchmark(self):
        bundle, graph, params = self._setup()
        flags = VariantFlags(alpha=1.0)
        predicted = forward_ratings([-1], [-1], graph, bundle, params, flags).data[0]
        h_u = np.tanh(params["agg_user_b"].data)
        h_v = np.tanh(params["agg_item_b"].data)
        own = preference_rating(h_u, h_v, params).item()
        assert abs(predicted - (bundle.global_mean + own)) < 1e-12

    def test_batch_matches_single(self):
        bundle, graph, params = self._setup()
        flags = VariantFlags()
        pairs = [(u, v) for u in range(5) for v in range(7)]
        users = np.array([p[0] for p in pairs])
        items = np.array([p[1] for p in pairs])
        batch = predict_batch(users, items, graph, bundle, params, flags)
        for (u, v), got in zip(pairs, batch):
            assert abs(got - predict(u, v, graph, bundle, params, flags)) < 1e-12


class TestAgainstScalarReference:
    """Batched padded/masked forward vs. a straight-loop reimplementation."""

    @pytest.mark.parametrize("variant_kwargs", [
        {},
        {"rc_off": True},
        {"sn_off": True},
        {"rd_raw": True},
        {"attention_mode": "uniform_avg"},
        {"attention_mode": "max"},
        {"alpha": 0.4},
    ])
    def test_full_graph_predictions_match(self, variant_kwargs):
        from _oracles import reference_forward

        bundle = make_bundle(seed=13, num_users=6, num_items=8, n_ratings=28, n_trust=7)
        graph = build_graph(bundle, delta=1)
        params = tiny_params(6, 8, seed=21)
        flags = VariantFlags(**variant_kwargs)
        arrays = params.arrays()
        for u in range(6):
            for v in range(8):
                got = predict(u, v, graph, bundle, params, flags)
                want = reference_forward(u, v, graph, bundle, arrays,
                                         **{**flags.to_dict(),
                                            "attention_mode": flags.attention_mode})
                assert abs(got - want) < 1e-9, (u, v, variant_kwargs)

    def test_sampled_neighborhoods_match(self):
        from _oracles import reference_forward
        from gdsrec.graph import sample_epoch

        bundle = make_bundle(seed=17, num_users=7, num_items=9, n_ratings=40, n_trust=9)
        graph = build_graph(bundle, delta=1)
        sample = sample_epoch(graph, cap=2, seed=3, epoch=4)
        params = tiny_params(7, 9, seed=5)
        flags = VariantFlags()
        arrays = params.arrays()
        users = np.array([u for u in range(7) for _ in range(2)])
        items = np.array([(u + k) % 9 for u in range(7) for k in range(2)])
        batch = forward_ratings(users, items, sample, bundle, params, flags).data
        for u, v, got in zip(users, items, batch):
            want = reference_forward(int(u), int(v), sample, bundle, arrays)
            assert abs(got - want) < 1e-9


class TestRankingScore:
    def test_zero_rating_scores_half(self):
        bundle, graph = self._trivial()
        params = zero_head(tiny_params(1, 1))
        flags = VariantFlags(alpha=0.0)
        assert predict_ranking_score(0, 0, graph, bundle, params, flags) == 0.5

    def test_monotone_in_rating(self):
        values = np.array([-3.0, -1.0, 0.0, 0.5, 4.0])
        scores = ranking_scores(values)
        assert np.all(np.diff(scores) > 0)

    def test_strictly_inside_unit_interval(self):
        scores = ranking_scores(np.array([-1000.0, -40.0, 0.0, 40.0, 1000.0]))
        assert np.all(scores > 0.0) and np.all(scores < 1.0)

    @staticmethod
    def _trivial():
        bundle = all_train_bundle([(0, 0, 3)], [], 1, 1)
        return bundle, build_graph(bundle, delta=1)


class TestVariantFlags:
    def test_from_variant_mapping(self):
        assert VariantFlags.from_variant("rc").rc_off
        assert VariantFlags.from_variant("sn").sn_off
        assert VariantFlags.from_variant("rd").rd_raw
        base = VariantFlags.from_variant("base")
        assert not (base.rc_off or base.sn_off or base.rd_raw)

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            VariantFlags(attention_mode="nope")
        with pytest.raises(ValueError):
            VariantFlags(alpha=-0.5)
        with pytest.raises(ValueError):
            VariantFlags.from_variant("funk")

    def test_social_lambda_uniform_when_rc_off(self):
        lam = social_lambda(np.array([1, 3, 4]), rc_off=True)
        np.testing.assert_allclose(lam, [1 / 3] * 3)
        lam = social_lambda(np.array([1, 3]), rc_off=False)
        np.testing.assert_allclose(lam, [0.25, 0.75])
