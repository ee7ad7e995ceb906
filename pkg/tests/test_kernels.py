"""Numerical parity and reproducibility of the two kernel backends."""

import numpy as np
import pytest

from nnmf._kernels import HAVE_COMPILED, backend_name, build_inputs, get_backend
from nnmf.model import InitSpec, init_model

from conftest import random_observations

needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled kernel not built"
)


def make_case(seed, N=25, M=18, D=4, Dp=6, K=2, layers=(14, 9, 5, 1), n_obs=300):
    net, state = init_model((N, M, D, Dp, K), list(layers), InitSpec(seed=seed))
    obs = random_observations(seed, N, M, n_obs)
    return net, state, obs


class TestBackendSelection:
    def test_active_backend_reports_name(self):
        assert backend_name() in ("numpy", "compiled")

    def test_get_backend_by_name(self):
        assert get_backend("numpy").NAME == "numpy"
        with pytest.raises(ValueError):
            get_backend("cuda")

    @needs_compiled
    def test_compiled_backend_available(self):
        assert get_backend("compiled").NAME == "compiled"


class TestParity:
    @needs_compiled
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_forward_matches(self, seed):
        net, state, obs = make_case(seed)
        X = build_inputs(state.U, state.V, state.Uprime, state.Vprime,
                         obs.rows, obs.cols)
        a = get_backend("numpy").forward(net.weights, net.biases, X)
        b = get_backend("compiled").forward(net.weights, net.biases, X)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    @needs_compiled
    @pytest.mark.parametrize("seed", [3, 4])
    def test_fused_gradient_matches(self, seed):
        net, state, obs = make_case(seed)
        args = (state.U, state.V, state.Uprime, state.Vprime,
                obs.rows, obs.cols, obs.values, net.weights, net.biases)
        out_np = get_backend("numpy").fused_gradient(*args)
        out_cy = get_backend("compiled").fused_gradient(*args)
        assert out_np[0] == pytest.approx(out_cy[0], rel=1e-12)
        for a, b in zip(out_np[1:6], out_cy[1:6]):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)
        for a, b in zip(out_np[6], out_cy[6]):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)
        for a, b in zip(out_np[7], out_cy[7]):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)

    @needs_compiled
    def test_single_affine_layer(self):
        net, state, obs = make_case(5, layers=(14, 1))
        args = (state.U, state.V, state.Uprime, state.Vprime,
                obs.rows, obs.cols, obs.values, net.weights, net.biases)
        out_np = get_backend("numpy").fused_gradient(*args)
        out_cy = get_backend("compiled").fused_gradient(*args)
        np.testing.assert_allclose(out_np[2], out_cy[2], rtol=1e-11, atol=1e-14)


class TestReproducibility:
    @pytest.mark.parametrize("name", ["numpy", "compiled"])
    def test_repeated_calls_bit_identical(self, name):
        if name == "compiled" and not HAVE_COMPILED:
            pytest.skip("compiled kernel not built")
        net, state, obs = make_case(6)
        backend = get_backend(name)
        args = (state.U, state.V, state.Uprime, state.Vprime,
                obs.rows, obs.cols, obs.values, net.weights, net.biases)
        first = backend.fused_gradient(*args)
        second = backend.fused_gradient(*args)
        assert first[0] == second[0]
        for a, b in zip(first[1:6], second[1:6]):
            assert np.array_equal(a, b)
        for a, b in zip(first[6] + first[7], second[6] + second[7]):
            assert np.array_equal(a, b)
