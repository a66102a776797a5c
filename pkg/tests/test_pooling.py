import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oclbench.errors import ContractError
from oclbench.pooling import KINDS, PoolingSpec, moment_drift, pool, pool_moments
from oclbench.rng import RngStream
from oclbench.tensors import FeatureMap


def two_pass_moments(g, R, sigma_floor=1e-12):
    """Per-channel loops: mean, then std, then standardized powers."""
    h, w, d = g.shape
    n = h * w
    out = np.zeros(R * d)
    for c in range(d):
        vals = [float(g[i, j, c]) for i in range(h) for j in range(w)]
        mu = sum(vals) / n
        out[c] = mu
        if R >= 2:
            sigma = math.sqrt(sum((v - mu) ** 2 for v in vals) / n)
            out[d + c] = sigma
            for r in range(3, R + 1):
                out[(r - 1) * d + c] = 0.0 if sigma <= sigma_floor else sum(((v - mu) / sigma) ** r for v in vals) / n
    return out


def fmap(values, shape):
    return FeatureMap(np.asarray(values, dtype=np.float32).reshape(shape))


feature_maps = hnp.arrays(np.float32, hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=6),
                          elements=st.floats(-100, 100, width=32))


class TestPoolMoments:
    def test_symmetric_values(self):
        out = pool_moments(fmap([1, 2, 3, 4], (2, 2, 1)), R=3)
        np.testing.assert_allclose(out, [2.5, math.sqrt(1.25), 0.0], atol=1e-12)

    def test_constant_map(self):
        np.testing.assert_array_equal(pool_moments(fmap([5] * 9, (3, 3, 1)), R=3), [5, 0, 0])

    def test_matches_two_pass_oracle(self):
        g = RngStream(0, "pm").uniforms(32).reshape(4, 4, 2)
        np.testing.assert_allclose(pool_moments(FeatureMap(g), R=4), two_pass_moments(FeatureMap(g).data, 4),
                                   atol=1e-6)

    def test_layout_is_blockwise(self):
        g = np.zeros((1, 2, 2), dtype=np.float32)
        g[0, :, 0] = [0, 2]
        g[0, :, 1] = [10, 10]
        np.testing.assert_allclose(pool_moments(FeatureMap(g), R=2), [1, 10, 1, 0])

    def test_r1_equals_avg_exactly(self):
        g = FeatureMap(RngStream(1).normals(5 * 4 * 3).reshape(5, 4, 3))
        assert pool_moments(g, R=1).tobytes() == pool(g, PoolingSpec("avg")).tobytes()

    def test_bad_order(self):
        with pytest.raises(ContractError):
            pool_moments(fmap([1], (1, 1, 1)), R=0)

    def test_stack_matches_single(self):
        stack = RngStream(2).normals(3 * 4 * 4 * 2).reshape(3, 4, 4, 2).astype(np.float32)
        spec = PoolingSpec.moments(3)
        batched = pool(stack, spec)
        for i in range(3):
            np.testing.assert_array_equal(batched[i], pool(FeatureMap(stack[i]), spec))

    @given(feature_maps, st.integers(1, 5))
    def test_property_matches_oracle(self, arr, R):
        g = FeatureMap(arr)
        np.testing.assert_allclose(pool_moments(g, R), two_pass_moments(g.data, R), atol=1e-6)

    @given(feature_maps, st.floats(0.01, 100), st.floats(-100, 100))
    def test_affine_invariance(self, arr, a, b):
        g = arr.astype(np.float64)
        spread = (g.max(axis=(0, 1)) - g.min(axis=(0, 1))).min()
        if g.shape[0] * g.shape[1] < 2 or spread < 1e-2:
            return  # near-constant channels sit at the sigma floor
        base = pool_moments(g[None], R=4)[0]
        moved = pool_moments((a * g + b)[None], R=4)[0]
        d = g.shape[2]
        np.testing.assert_allclose(moved[:d], a * base[:d] + b, atol=1e-6 * (1 + abs(b) + a * 100))
        np.testing.assert_allclose(moved[d : 2 * d], a * base[d : 2 * d], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(moved[2 * d :], base[2 * d :], atol=1e-5)


class TestPool:
    g = fmap([1, 2, 3, 4], (2, 2, 1))

    @pytest.mark.parametrize("spec, want", [
        (PoolingSpec("avg"), [2.5]),
        (PoolingSpec("max"), [4.0]),
        (PoolingSpec("avgmax"), [2.5, 4.0]),
        (PoolingSpec("mix", alpha=0.5), [3.25]),
        (PoolingSpec("lp", p=2), [math.sqrt(30 / 4)]),
        (PoolingSpec("rap", k_percent=0.5), [4.0, 3.0]),
    ])
    def test_closed_forms(self, spec, want):
        np.testing.assert_allclose(pool(self.g, spec), want, rtol=1e-12)

    def test_rap_is_channel_major(self):
        g = np.zeros((2, 2, 2), dtype=np.float32)
        g[..., 0] = [[1, 2], [3, 4]]
        g[..., 1] = [[40, 30], [20, 10]]
        np.testing.assert_array_equal(pool(FeatureMap(g), PoolingSpec("rap", k_percent=0.5)), [4, 3, 40, 30])

    def test_stochastic_needs_rng(self):
        with pytest.raises(ContractError):
            pool(self.g, PoolingSpec("stochastic"))
        with pytest.raises(ContractError):
            pool(self.g, PoolingSpec("avg"), RngStream(0))

    def test_stochastic_reproducible_and_in_support(self):
        g = FeatureMap(RngStream(3).uniforms(4 * 4 * 8).reshape(4, 4, 8))
        a = pool(g, PoolingSpec("stochastic"), RngStream(9, "s"))
        b = pool(g, PoolingSpec("stochastic"), RngStream(9, "s"))
        assert a.tobytes() == b.tobytes()
        for c in range(8):
            assert a[c] in g.data[..., c]

    def test_stochastic_constant_channel(self):
        out = pool(fmap([2.0] * 4, (2, 2, 1)), PoolingSpec("stochastic"), RngStream(0))
        assert out[0] == 2.0

    def test_param_on_wrong_kind(self):
        with pytest.raises(ContractError):
            PoolingSpec("avg", R=3)
        with pytest.raises(ContractError):
            PoolingSpec("nope")

    @given(st.sampled_from(KINDS), st.integers(1, 5), st.integers(1, 5), st.integers(1, 4), st.integers(0, 99))
    def test_output_dim(self, kind, h, w, d, seed):
        spec = PoolingSpec(kind)
        g = FeatureMap(RngStream(seed).uniforms(h * w * d).reshape(h, w, d))
        rng = RngStream(seed, "p") if kind == "stochastic" else None
        assert pool(g, spec, rng).shape == (spec.output_dim(h, w, d),)


class TestMomentDrift:
    def test_identical(self):
        assert moment_drift([1, 2, 3], [1, 2, 3]) == 0.0

    def test_translation(self):
        assert moment_drift([0, 0], [1, 1]) == 1.0

    def test_shifted_normals(self):
        a = RngStream(0, "w").normals(1000)
        assert moment_drift(a, a + 0.3) == pytest.approx(0.3, abs=0.02)

    def test_empty(self):
        with pytest.raises(ContractError):
            moment_drift([], [1.0])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40),
           st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
    def test_matches_scipy_and_is_symmetric(self, a, b):
        d = moment_drift(a, b)
        assert d == moment_drift(b, a)
        assert d == pytest.approx(scipy.stats.wasserstein_distance(a, b), rel=1e-9, abs=1e-9)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=20),
           st.lists(st.floats(-100, 100), min_size=1, max_size=20),
           st.lists(st.floats(-100, 100), min_size=1, max_size=20))
    def test_triangle_inequality(self, a, b, c):
        assert moment_drift(a, c) <= moment_drift(a, b) + moment_drift(b, c) + 1e-9
