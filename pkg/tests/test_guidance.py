"""Unit and property tests for the noise-combination algebra."""

from __future__ import annotations

import numpy as np
import pytest

from specedit import (
    GuidanceWeights,
    Latent,
    SelectionMask,
    ShapeMismatchError,
    ValidationError,
    aggregate_by_mask,
    average_aggregate,
    build_selection_mask,
    cfg_combine,
    channel_salience,
    composable_combine,
    sane_combine,
    specific_delta,
    specific_guidance_term,
)

from oracles import (
    oracle_aggregate,
    oracle_argmax_mask,
    oracle_average,
    oracle_cfg,
    oracle_composable,
    oracle_sane,
    random_case,
)


def lat(values, dtype=np.float32) -> Latent:
    return Latent(np.array(values, dtype=dtype))


def scalar(value: float) -> Latent:
    return lat([[[value]]])


class TestLatent:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Latent(np.array([[[np.nan]]], dtype=np.float32))
        with pytest.raises(ValidationError):
            Latent(np.array([[[np.inf]]], dtype=np.float32))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValidationError):
            Latent(np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(ValidationError):
            Latent(np.zeros((1, 1, 1, 1), dtype=np.float32))

    def test_rejects_empty_dims(self):
        with pytest.raises(ValidationError):
            Latent(np.zeros((0, 2, 2), dtype=np.float32))

    def test_promotes_small_and_integer_dtypes(self):
        assert Latent(np.zeros((1, 1, 1), dtype=np.float16)).data.dtype == np.float32
        assert Latent(np.zeros((1, 1, 1), dtype=np.int64)).data.dtype == np.float32
        assert Latent(np.zeros((1, 1, 1), dtype=np.float64)).data.dtype == np.float64


class TestWeights:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            GuidanceWeights(np.nan, 1.0)
        with pytest.raises(ValidationError):
            GuidanceWeights(1.0, np.inf, 0.0)

    def test_negative_allowed(self):
        weights = GuidanceWeights(-1.0, -2.0, -3.0)
        assert weights.w_specific == -3.0

    def test_with_text_weight(self):
        weights = GuidanceWeights(1.5, 7.0, 5.0).with_text_weight(0.0)
        assert weights.w_text == 0.0
        assert weights.w_image == 1.5
        assert weights.w_specific == 5.0


class TestSelectionMaskType:
    def test_rejects_float_indices(self):
        with pytest.raises(ValidationError):
            SelectionMask(np.zeros((2, 2), dtype=np.float32))

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            SelectionMask(np.array([[0, -1]], dtype=np.int64))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValidationError):
            SelectionMask(np.zeros((2, 2, 2), dtype=np.int64))

    def test_histogram(self):
        mask = SelectionMask(np.array([[0, 1], [1, 1]], dtype=np.int64))
        assert mask.histogram(3) == [1, 3, 0]


class TestCfgCombine:
    def test_identical_inputs_pass_through(self):
        rng = np.random.default_rng(0)
        e = Latent(rng.standard_normal((2, 3, 3)).astype(np.float32))
        out = cfg_combine(e, e, e, GuidanceWeights(1.5, 7.0))
        assert np.allclose(out.data, e.data, rtol=1e-6)

    def test_scalar_hand_value(self):
        out = cfg_combine(scalar(0.0), scalar(1.0), scalar(2.0), GuidanceWeights(1.5, 7.0))
        assert out.data[0, 0, 0] == pytest.approx(8.5, abs=0.0)

    def test_zero_weights_return_uncond_bitwise(self):
        rng = np.random.default_rng(1)
        u = Latent(rng.standard_normal((2, 2, 2)).astype(np.float32))
        i = Latent(rng.standard_normal((2, 2, 2)).astype(np.float32))
        f = Latent(rng.standard_normal((2, 2, 2)).astype(np.float32))
        out = cfg_combine(u, i, f, GuidanceWeights(0.0, 0.0, 123.0))
        assert out.data.tobytes() == u.data.tobytes()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            cfg_combine(scalar(0.0), scalar(1.0), lat([[[1.0, 2.0]]]), GuidanceWeights(1.0, 1.0))


class TestSpecificDelta:
    def test_identical_inputs_zero(self):
        e = scalar(3.25)
        assert np.all(specific_delta(e, e).data == 0.0)

    def test_hand_value(self):
        assert specific_delta(scalar(-3.0), scalar(1.0)).data[0, 0, 0] == 4.0

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((2, 2, 2)).astype(np.float32)
        b = rng.standard_normal((2, 2, 2)).astype(np.float32)
        out = specific_delta(Latent(a), Latent(b))
        expected = np.empty_like(a)
        for c in range(2):
            for y in range(2):
                for x in range(2):
                    expected[c, y, x] = abs(a[c, y, x] - b[c, y, x])
        assert np.array_equal(out.data, expected)

    def test_homogeneity_exact_on_eighth_multiples(self):
        # Values that are multiples of 1/8 stay exactly representable
        # through addition, so shifting both inputs by the same constant
        # must leave the delta bit-identical.
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = (rng.integers(-32, 33, (2, 3, 3)) * 0.125).astype(np.float32)
            b = (rng.integers(-32, 33, (2, 3, 3)) * 0.125).astype(np.float32)
            k = float(rng.integers(-16, 17) * 0.125)
            plain = specific_delta(Latent(a), Latent(b))
            shifted = specific_delta(Latent(a + k), Latent(b + k))
            assert np.array_equal(plain.data, shifted.data)


class TestChannelSalience:
    def test_single_channel_identity(self):
        delta = lat([[[1.0, 2.0], [3.0, 4.0]]])
        assert np.array_equal(channel_salience(delta), delta.data[0])

    def test_two_channel_mean(self):
        delta = Latent(np.array([[[1.0]], [[3.0]]], dtype=np.float32))
        assert channel_salience(delta)[0, 0] == 2.0

    def test_zero_delta(self):
        assert np.all(channel_salience(Latent(np.zeros((3, 2, 2), dtype=np.float32))) == 0.0)


class TestBuildSelectionMask:
    def test_single_candidate_all_zero(self):
        mask = build_selection_mask([np.random.default_rng(0).random((3, 3))])
        assert np.all(mask.indices == 0)

    def test_hand_case_with_tie(self):
        a = np.array([[1.0, 5.0], [0.0, 0.0]])
        b = np.array([[2.0, 1.0], [0.0, 7.0]])
        mask = build_selection_mask([a, b])
        # The (1, 0) location ties at 0.0 and must go to the lowest index.
        assert mask.indices.tolist() == [[1, 0], [0, 1]]

    def test_empty_list_rejected(self):
        with pytest.raises(ValidationError):
            build_selection_mask([])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            build_selection_mask([np.zeros((2, 2)), np.zeros((2, 3))])

    def test_all_ties_resolve_to_zero(self):
        same = np.ones((4, 4))
        mask = build_selection_mask([same.copy(), same.copy(), same.copy()])
        assert np.all(mask.indices == 0)


class TestAggregateByMask:
    def test_single_noise_identity_bitwise(self):
        rng = np.random.default_rng(4)
        noise = Latent(rng.standard_normal((3, 2, 2)).astype(np.float32))
        mask = SelectionMask(np.zeros((2, 2), dtype=np.int64))
        out = aggregate_by_mask([noise], mask)
        assert out.data.tobytes() == noise.data.tobytes()

    def test_checkerboard_interleaves(self):
        a = Latent(np.full((2, 2, 2), 1.0, dtype=np.float32))
        b = Latent(np.full((2, 2, 2), 2.0, dtype=np.float32))
        mask = SelectionMask(np.array([[0, 1], [1, 0]], dtype=np.int64))
        out = aggregate_by_mask([a, b], mask)
        for y in range(2):
            for x in range(2):
                expected = 1.0 if mask.indices[y, x] == 0 else 2.0
                assert np.all(out.data[:, y, x] == expected)

    def test_identical_noises_any_mask(self):
        rng = np.random.default_rng(5)
        noise = rng.standard_normal((2, 3, 3)).astype(np.float32)
        mask = SelectionMask(rng.integers(0, 3, (3, 3)).astype(np.int64))
        out = aggregate_by_mask([Latent(noise.copy()) for _ in range(3)], mask)
        assert np.array_equal(out.data, noise)

    def test_out_of_range_index_rejected(self):
        noise = Latent(np.zeros((1, 2, 2), dtype=np.float32))
        mask = SelectionMask(np.full((2, 2), 5, dtype=np.int64))
        with pytest.raises(ValidationError):
            aggregate_by_mask([noise], mask)

    def test_empty_list_rejected(self):
        with pytest.raises(ValidationError):
            aggregate_by_mask([], SelectionMask(np.zeros((1, 1), dtype=np.int64)))


class TestSpecificGuidanceTerm:
    def test_zero_weight(self):
        rng = np.random.default_rng(6)
        a = Latent(rng.standard_normal((2, 2, 2)).astype(np.float32))
        b = Latent(rng.standard_normal((2, 2, 2)).astype(np.float32))
        assert np.all(specific_guidance_term(a, b, 0.0).data == 0.0)

    def test_equal_inputs(self):
        e = scalar(2.5)
        assert np.all(specific_guidance_term(e, e, 7.0).data == 0.0)

    def test_scalar_hand_value(self):
        out = specific_guidance_term(scalar(3.0), scalar(1.0), 7.0)
        assert out.data[0, 0, 0] == 14.0

    def test_non_finite_weight_rejected(self):
        with pytest.raises(ValidationError):
            specific_guidance_term(scalar(1.0), scalar(0.0), np.inf)


class TestSaneCombine:
    def test_zero_specific_weight_is_cfg_bitwise(self):
        rng = np.random.default_rng(7)

        def t():
            return Latent(rng.standard_normal((3, 4, 4)).astype(np.float32))

        u, i, f = t(), t(), t()
        specifics = [t(), t()]
        weights = GuidanceWeights(1.5, 7.0, 0.0)
        combined, _ = sane_combine(u, i, f, specifics, weights)
        base = cfg_combine(u, i, f, weights)
        assert combined.data.tobytes() == base.data.tobytes()

    def test_single_instruction_equals_unmasked_form(self):
        rng = np.random.default_rng(8)

        def t():
            return Latent(rng.standard_normal((2, 3, 3)).astype(np.float32))

        u, i, f, s = t(), t(), t(), t()
        weights = GuidanceWeights(1.5, 7.0, 5.0)
        combined, mask = sane_combine(u, i, f, [s], weights)
        assert np.all(mask.indices == 0)
        expected = cfg_combine(u, i, f, weights).data + 5.0 * (s.data - i.data)
        assert np.array_equal(combined.data, expected)
        alt = composable_combine(u, i, f, [s], weights)
        assert np.array_equal(combined.data, alt.data)

    def test_empty_specifics_rejected(self):
        e = scalar(0.0)
        with pytest.raises(ValidationError):
            sane_combine(e, e, e, [], GuidanceWeights(1.0, 1.0, 1.0))

    def test_returns_mask_matching_oracle(self):
        rng = np.random.default_rng(9)
        u, i, f, specifics, wi, wt, ws = random_case(rng)
        combined, mask = sane_combine(
            Latent(u), Latent(i), Latent(f), [Latent(s) for s in specifics],
            GuidanceWeights(wi, wt, ws),
        )
        _, expected_mask = oracle_sane(u, i, f, specifics, wi, wt, ws)
        assert np.array_equal(mask.indices, expected_mask)
        assert combined.shape == u.shape


class TestAverageAggregate:
    def test_single_identity(self):
        noise = scalar(4.0)
        assert np.array_equal(average_aggregate([noise]).data, noise.data)

    def test_midpoint(self):
        out = average_aggregate([scalar(0.0), scalar(2.0)])
        assert out.data[0, 0, 0] == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            average_aggregate([])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(10)
        noises = [rng.standard_normal((2, 3, 3)).astype(np.float32) for _ in range(3)]
        out = average_aggregate([Latent(n) for n in noises])
        assert np.allclose(out.data, oracle_average(noises), rtol=1e-6)


class TestComposableCombine:
    def test_zero_specific_weight_is_cfg(self):
        rng = np.random.default_rng(11)

        def t():
            return Latent(rng.standard_normal((2, 2, 2)).astype(np.float32))

        u, i, f = t(), t(), t()
        weights = GuidanceWeights(1.5, 7.0, 0.0)
        out = composable_combine(u, i, f, [t(), t()], weights)
        assert np.allclose(out.data, cfg_combine(u, i, f, weights).data, rtol=1e-7)

    def test_disjoint_supports_match_masked_form(self):
        # Two specific noises that deviate from the image estimate on
        # disjoint spatial halves: summing equals mask-selecting exactly
        # where the non-winning delta is zero.
        base = np.zeros((1, 2, 2), dtype=np.float32)
        i = Latent(base.copy())
        u = Latent(base.copy())
        f = Latent(base.copy())
        s1 = base.copy()
        s1[:, 0, :] = 2.0
        s2 = base.copy()
        s2[:, 1, :] = 3.0
        weights = GuidanceWeights(0.0, 0.0, 1.0)
        summed = composable_combine(u, i, f, [Latent(s1), Latent(s2)], weights)
        masked, _ = sane_combine(u, i, f, [Latent(s1), Latent(s2)], weights)
        assert np.allclose(summed.data, masked.data)

    def test_empty_specifics_rejected(self):
        e = scalar(0.0)
        with pytest.raises(ValidationError):
            composable_combine(e, e, e, [], GuidanceWeights(1.0, 1.0, 1.0))


class TestProperties:
    def test_brute_force_equivalence(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            u, i, f, specifics, wi, wt, ws = random_case(rng)
            weights = GuidanceWeights(wi, wt, ws)
            lat_u, lat_i, lat_f = Latent(u), Latent(i), Latent(f)
            lat_specs = [Latent(s) for s in specifics]

            got = cfg_combine(lat_u, lat_i, lat_f, weights)
            assert np.allclose(got.data, oracle_cfg(u, i, f, wi, wt), rtol=1e-6, atol=1e-6)

            got_sane, got_mask = sane_combine(lat_u, lat_i, lat_f, lat_specs, weights)
            want_sane, want_mask = oracle_sane(u, i, f, specifics, wi, wt, ws)
            assert np.array_equal(got_mask.indices, want_mask)
            assert np.allclose(got_sane.data, want_sane, rtol=1e-5, atol=1e-5)

            got_comp = composable_combine(lat_u, lat_i, lat_f, lat_specs, weights)
            assert np.allclose(
                got_comp.data, oracle_composable(u, i, f, specifics, wi, wt, ws),
                rtol=1e-5, atol=1e-5,
            )

    def test_mask_partition(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            n = int(rng.integers(1, 5))
            shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
            # Quantized saliences force frequent exact ties.
            saliences = [
                (rng.integers(0, 3, shape)).astype(np.float64) for _ in range(n)
            ]
            mask = build_selection_mask(saliences)
            one_hot_sum = np.zeros(shape, dtype=np.int64)
            for idx in range(n):
                one_hot_sum += (mask.indices == idx).astype(np.int64)
            assert np.all(one_hot_sum == 1)
            assert np.array_equal(mask.indices, oracle_argmax_mask(saliences))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            u, i, f, specifics, wi, wt, ws = random_case(rng)
            weights = GuidanceWeights(wi, wt, ws)
            base_out, base_mask = sane_combine(
                Latent(u), Latent(i), Latent(f), [Latent(s) for s in specifics], weights
            )
            perm = list(rng.permutation(len(specifics)))
            permuted = [Latent(specifics[p]) for p in perm]
            perm_out, perm_mask = sane_combine(Latent(u), Latent(i), Latent(f), permuted, weights)
            # Continuous random values make ties measure-zero, so maxima
            # are strict and the selected values cannot change.
            assert np.max(np.abs(perm_out.data.astype(np.float64) - base_out.data)) <= 1e-12
            inverse = np.zeros(len(perm), dtype=np.int64)
            for new_idx, old_idx in enumerate(perm):
                inverse[old_idx] = new_idx
            assert np.array_equal(perm_mask.indices, inverse[base_mask.indices])

    def test_shape_preservation(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            u, i, f, specifics, wi, wt, ws = random_case(rng)
            weights = GuidanceWeights(wi, wt, ws)
            outputs = [
                cfg_combine(Latent(u), Latent(i), Latent(f), weights),
                specific_delta(Latent(specifics[0]), Latent(i)),
                average_aggregate([Latent(s) for s in specifics]),
                composable_combine(Latent(u), Latent(i), Latent(f), [Latent(s) for s in specifics], weights),
                sane_combine(Latent(u), Latent(i), Latent(f), [Latent(s) for s in specifics], weights)[0],
            ]
            for out in outputs:
                assert out.shape == u.shape
