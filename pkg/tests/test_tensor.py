import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrtc.tensor import (
    ObservationMask,
    fold,
    frobenius_norm,
    inner_product,
    numerical_ranks,
    project,
    project_complement,
    random_mask,
    synth_lowrank,
    unfold,
)
from oracles import inner_product_loop, unfold_loop


def cube_1_to_8():
    return np.arange(1, 9, dtype=float).reshape((2, 2, 2), order="F")


shapes = st.lists(st.integers(1, 6), min_size=1, max_size=4).map(tuple)


class TestInnerProductAndNorm:
    def test_ones(self):
        ones = np.ones((2, 2, 2))
        assert inner_product(ones, ones) == 8.0

    def test_zero_annihilates(self):
        a = np.random.default_rng(0).standard_normal((2, 3, 2))
        assert inner_product(a, np.zeros_like(a)) == 0.0

    def test_matches_loop(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((3, 4, 2)), rng.standard_normal((3, 4, 2))
        assert inner_product(a, b) == pytest.approx(inner_product_loop(a, b), rel=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(np.ones((2, 2)), np.ones((2, 3)))

    def test_norm_cases(self):
        assert frobenius_norm(np.zeros((2, 2, 2))) == 0.0
        assert frobenius_norm(np.ones((2, 2, 2))) == pytest.approx(math.sqrt(8), rel=1e-15)
        a = np.random.default_rng(2).standard_normal((3, 4, 5))
        assert frobenius_norm(a) == pytest.approx(math.sqrt(inner_product_loop(a, a)), rel=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(shapes, st.integers(0, 2**31))
    def test_norm_squared_is_self_inner_product(self, dims, seed):
        a = np.random.default_rng(seed).standard_normal(dims)
        assert frobenius_norm(a) ** 2 == pytest.approx(inner_product(a, a), rel=1e-14)


class TestUnfoldFold:
    def test_mode0_example(self):
        assert unfold(cube_1_to_8(), 0).tolist() == [[1, 3, 5, 7], [2, 4, 6, 8]]

    def test_mode2_example(self):
        assert unfold(cube_1_to_8(), 2).tolist() == [[1, 2, 3, 4], [5, 6, 7, 8]]

    @pytest.mark.parametrize("mode", [0, 1, 2])
    def test_matches_loop_oracle(self, mode):
        a = np.random.default_rng(3).standard_normal((3, 4, 5))
        np.testing.assert_array_equal(unfold(a, mode), unfold_loop(a, mode))

    def test_four_way_matches_loop_oracle(self):
        a = np.random.default_rng(4).standard_normal((2, 3, 4, 2))
        for mode in range(4):
            np.testing.assert_array_equal(unfold(a, mode), unfold_loop(a, mode))

    @settings(max_examples=100, deadline=None)
    @given(shapes, st.integers(0, 2**31))
    def test_round_trip_bit_exact(self, dims, seed):
        a = np.random.default_rng(seed).standard_normal(dims)
        for mode in range(a.ndim):
            m = unfold(a, mode)
            assert m.shape == (dims[mode], a.size // dims[mode])
            back = fold(m, mode, dims)
            assert back.tobytes() == a.tobytes()

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            unfold(np.ones((2, 2, 2)), 3)
        with pytest.raises(ValueError):
            unfold(np.ones((2, 2, 2)), -1)

    def test_fold_shape_mismatch(self):
        with pytest.raises(ValueError):
            fold(np.ones((2, 3)), 0, (2, 2, 2))


class TestProjection:
    def test_single_index(self):
        out = project(np.ones((2, 2, 2)), ObservationMask((2, 2, 2), [0]))
        expect = np.zeros(8)
        expect[0] = 1
        np.testing.assert_array_equal(out.ravel(order="F"), expect)

    def test_full_and_empty(self):
        a = np.random.default_rng(5).standard_normal((3, 2, 4))
        full, empty = ObservationMask.full(a.shape), ObservationMask.empty(a.shape)
        np.testing.assert_array_equal(project(a, full), a)
        np.testing.assert_array_equal(project_complement(a, empty), a)
        np.testing.assert_array_equal(project_complement(a, full), np.zeros_like(a))

    @settings(max_examples=50, deadline=None)
    @given(shapes, st.floats(0.05, 1.0), st.integers(0, 2**31))
    def test_identities(self, dims, sr, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal(dims), rng.standard_normal(dims)
        m = random_mask(dims, sr, seed)
        p = project(a, m)
        np.testing.assert_array_equal(project(p, m), p)
        np.testing.assert_array_equal(p + project_complement(a, m), a)
        np.testing.assert_allclose(project(2.0 * a - b, m), 2.0 * p - project(b, m), atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(np.ones((2, 2)), ObservationMask.full((2, 3)))

    def test_mask_validation(self):
        with pytest.raises(ValueError):
            ObservationMask((2, 2), [1, 1])
        with pytest.raises(ValueError):
            ObservationMask((2, 2), [2, 1])
        with pytest.raises(ValueError):
            ObservationMask((2, 2), [4])

    def test_bool_round_trip(self):
        obs = np.random.default_rng(6).random((3, 4, 2)) < 0.5
        assert np.array_equal(ObservationMask.from_bool(obs).to_bool(), obs)


class TestRandomMask:
    def test_video_sized_count(self):
        assert random_mask((144, 176, 150), 0.05, seed=0).count == 190080

    def test_full_ratio(self):
        m = random_mask((3, 4, 5), 1.0, seed=1)
        np.testing.assert_array_equal(m.indices, np.arange(60))

    def test_deterministic(self):
        assert random_mask((10, 10, 10), 0.3, seed=9) == random_mask((10, 10, 10), 0.3, seed=9)

    @settings(max_examples=50, deadline=None)
    @given(shapes, st.floats(1e-3, 1.0), st.integers(0, 2**31))
    def test_count_and_validity(self, dims, sr, seed):
        m = random_mask(dims, sr, seed)
        total = math.prod(dims)
        assert m.count == math.floor(sr * total)
        assert np.all(np.diff(m.indices) > 0)
        assert m.count == 0 or (m.indices[0] >= 0 and m.indices[-1] < total)
        assert 0.0 <= m.ratio <= 1.0

    @pytest.mark.parametrize("sr", [0.0, -0.1, 1.5])
    def test_ratio_out_of_range(self, sr):
        with pytest.raises(ValueError):
            random_mask((4, 4), sr, seed=0)


class TestSynth:
    def test_rank_one_is_outer_product(self):
        t = synth_lowrank((4, 5, 6), (1, 1, 1), seed=0)
        assert numerical_ranks(t) == (1, 1, 1)

    def test_ranks_by_singular_values(self):
        t = synth_lowrank((20, 20, 20), (3, 3, 3), seed=1)
        for n in range(3):
            s = np.linalg.svd(unfold_loop(t, n), compute_uv=False)
            assert int(np.sum(s > 1e-8 * s[0])) == 3

    def test_deterministic(self):
        a = synth_lowrank((6, 7, 8), (2, 3, 4), seed=5)
        b = synth_lowrank((6, 7, 8), (2, 3, 4), seed=5)
        assert a.tobytes() == b.tobytes()

    def test_smooth_variant_ranks_and_smoothness(self):
        t = synth_lowrank((32, 32, 16), (4, 4, 4), seed=2, smooth=True)
        assert numerical_ranks(t) == (4, 4, 4)
        rough = synth_lowrank((32, 32, 16), (4, 4, 4), seed=2)
        step = lambda x: np.mean(np.abs(np.diff(x, axis=0)))
        assert step(t) < 0.5 * step(rough)

    def test_unit_rms(self):
        t = synth_lowrank((5, 6, 7), (2, 2, 2), seed=3)
        assert np.sqrt(np.mean(t**2)) == pytest.approx(1.0, rel=1e-12)

    def test_rank_exceeding_dimension(self):
        with pytest.raises(ValueError):
            synth_lowrank((3, 3, 3), (4, 1, 1), seed=0)
