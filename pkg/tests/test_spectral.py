import numpy as np
import pytest

from farm import numerics as nm
from farm import spectral as sp
from farm.numerics import ParamStore, Tensor


def fft_low_pass(x, c):
    """Independent oracle: numpy FFT with the mirror-closed kept-bin rule."""
    n = x.shape[0]
    keep = sp.kept_bins(n, c)
    spec = np.fft.fft(x, axis=0)
    spec[~keep] = 0.0
    out = np.fft.ifft(spec, axis=0)
    assert np.abs(out.imag).max() < 1e-10
    return out.real


class TestDftBasis:
    def test_n1(self):
        b = sp.build_dft_basis(1)
        np.testing.assert_array_equal(b.real_part, [[1.0]])
        np.testing.assert_array_equal(b.imag_part, [[0.0]])

    def test_n2_roots_of_unity(self):
        b = sp.build_dft_basis(2)
        s = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(b.real_part, [[s, s], [s, -s]], atol=1e-15)
        np.testing.assert_allclose(b.imag_part, np.zeros((2, 2)), atol=1e-15)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            sp.build_dft_basis(0)

    def test_unitarity_up_to_64(self):
        for n in range(1, 65):
            f = sp.build_dft_basis(n).complex_matrix
            np.testing.assert_allclose(f @ f.conj().T, np.eye(n), atol=1e-10)


class TestLowPass:
    def test_constant_column_unchanged(self):
        x = np.full((8, 3), 2.5)
        for c in (1, 3, 8):
            out = sp.low_pass(Tensor(x), c).data
            np.testing.assert_allclose(out, x, atol=1e-12)

    def test_full_cutoff_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, size=(10, 4))
        np.testing.assert_allclose(sp.low_pass(Tensor(x), 10).data, x, atol=1e-12)

    def test_nyquist_column_killed(self):
        x = np.array([1.0, -1.0, 1.0, -1.0]).reshape(4, 1)
        np.testing.assert_allclose(sp.low_pass(Tensor(x), 1).data, np.zeros((4, 1)), atol=1e-12)

    def test_matches_fft_oracle(self):
        rng = np.random.default_rng(1)
        for length in (1, 2, 3, 5, 8, 13, 50):
            x = rng.uniform(-2, 2, size=(length, 3))
            for c in range(1, length + 1):
                ours = sp.low_pass(Tensor(x), c).data
                np.testing.assert_allclose(ours, fft_low_pass(x, c), atol=1e-10)

    def test_cutoff_beyond_length_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            sp.low_pass(Tensor(np.zeros((4, 2))), 5)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-2, 2, size=(12, 2))
        y = rng.uniform(-2, 2, size=(12, 2))
        lhs = sp.low_pass(Tensor(1.7 * x - 0.3 * y), 4).data
        rhs = 1.7 * sp.low_pass(Tensor(x), 4).data - 0.3 * sp.low_pass(Tensor(y), 4).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_idempotence(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-2, 2, size=(16, 3))
        once = sp.low_pass(Tensor(x), 5)
        twice = sp.low_pass(once, 5)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-9)

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(-2, 2, size=(3, 9, 4))
        batched = sp.low_pass(Tensor(x), 3).data
        for i in range(3):
            single = sp.low_pass(Tensor(x[i]), 3).data
            np.testing.assert_allclose(batched[i], single, atol=1e-12)


class TestHighPass:
    def test_constant_column_zero(self):
        x = np.full((6, 2), -1.25)
        np.testing.assert_allclose(sp.high_pass(Tensor(x), 2).data, np.zeros((6, 2)), atol=1e-12)

    def test_full_cutoff_zero(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-2, 2, size=(7, 3))
        np.testing.assert_allclose(sp.high_pass(Tensor(x), 7).data, np.zeros((7, 3)), atol=1e-12)

    def test_reconstruction(self):
        rng = np.random.default_rng(6)
        for length in (1, 4, 11, 50):
            x = rng.uniform(-2, 2, size=(length, 5))
            for c in range(1, length + 1):
                total = sp.low_pass(Tensor(x), c).data + sp.high_pass(Tensor(x), c).data
                np.testing.assert_allclose(total, x, atol=1e-10)


class TestFrequencyMix:
    def test_unit_gates_identity(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-2, 2, size=(10, 3))
        out = sp.frequency_mix(Tensor(x), 1.0, 1.0, 4).data
        np.testing.assert_allclose(out, x, atol=1e-12)

    def test_low_only(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-2, 2, size=(10, 3))
        out = sp.frequency_mix(Tensor(x), 1.0, 0.0, 4).data
        np.testing.assert_allclose(out, sp.low_pass(Tensor(x), 4).data, atol=1e-12)

    def test_zero_gates(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(-2, 2, size=(10, 3))
        out = sp.frequency_mix(Tensor(x), 0.0, 0.0, 4).data
        np.testing.assert_allclose(out, np.zeros((10, 3)), atol=1e-12)

    def test_gradients_to_input_and_gates(self):
        ps = ParamStore()
        rng = np.random.default_rng(10)
        ps.add("x", rng.uniform(-2, 2, size=(6, 3)))
        ps.add("gates", np.array([0.7, 0.4]))
        w = Tensor(rng.uniform(-1, 1, size=(6, 3)))

        def f(p):
            g = p.get("gates")
            mixed = sp.frequency_mix(
                p.get("x"), nm.narrow(g, 0, 0, 1), nm.narrow(g, 0, 1, 1), 2
            )
            return nm.tsum(nm.mul(mixed, w))

        assert nm.grad_check(f, ps) < 1e-6


class TestComputeGates:
    def _params(self, d_video=6, d_live=4, seed=0):
        ps = ParamStore()
        sp.add_gate_params(ps, d_video, d_live, np.random.default_rng(seed), hidden=(5,))
        return ps

    def test_outputs_in_unit_interval(self):
        ps = self._params()
        rng = np.random.default_rng(11)
        gates = sp.compute_gates(
            ps, Tensor(rng.uniform(-2, 2, size=(8, 6))), Tensor(rng.uniform(-2, 2, size=(8, 4)))
        )
        for g in (gates.alpha, gates.beta, gates.gamma, gates.delta):
            assert g.shape == (1, 1, 1)
            assert 0.0 < g.data.item() < 1.0

    def test_zero_weights_give_half(self):
        ps = self._params()
        for name in ps.names():
            ps.get(name).data[:] = 0.0
        gates = sp.compute_gates(ps, Tensor(np.ones((5, 6))), Tensor(np.ones((5, 4))))
        for g in (gates.alpha, gates.beta, gates.gamma, gates.delta):
            assert g.data.item() == 0.5

    def test_batched_shapes_and_domain_wiring(self):
        ps = self._params()
        rng = np.random.default_rng(12)
        v_video = rng.uniform(-2, 2, size=(3, 5, 6))
        v_live = rng.uniform(-2, 2, size=(3, 5, 4))
        gates = sp.compute_gates(ps, Tensor(v_video), Tensor(v_live))
        assert gates.alpha.shape == (3, 1, 1)
        # alpha/beta depend only on the video domain
        other = sp.compute_gates(ps, Tensor(v_video), Tensor(v_live + 1.0))
        np.testing.assert_array_equal(gates.alpha.data, other.alpha.data)
        np.testing.assert_array_equal(gates.beta.data, other.beta.data)
        assert not np.array_equal(gates.gamma.data, other.gamma.data)

    def test_masked_pooling_ignores_padded_rows(self):
        ps = self._params()
        rng = np.random.default_rng(13)
        v_video = rng.uniform(-2, 2, size=(1, 4, 6))
        v_live = rng.uniform(-2, 2, size=(1, 4, 4))
        mask = np.array([[1.0, 1.0, 0.0, 0.0]])
        garbled = v_video.copy()
        garbled[0, 2:] = 99.0
        a = sp.compute_gates(ps, Tensor(v_video), Tensor(v_live), mask, mask)
        b = sp.compute_gates(ps, Tensor(garbled), Tensor(v_live), mask, mask)
        np.testing.assert_array_equal(a.alpha.data, b.alpha.data)
