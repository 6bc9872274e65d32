import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jcesd.channel import (
    ChannelParams,
    PathComponent,
    gen_channel,
    raised_cosine,
    steering_vector,
    taps_from_paths,
    to_frequency,
    transmit,
)
from jcesd.errors import DimensionMismatchError, InvalidArgumentError
from jcesd.precoding import PrecoderSet


def _identity_chain(N, K=1):
    """Precoders whose user precoder is the identity (N_t = N_s = N)."""
    F_BB = np.stack([np.eye(N, dtype=complex)] * K)
    return PrecoderSet(np.eye(N, dtype=complex), np.eye(N, dtype=complex),
                       np.eye(N, dtype=complex), F_BB, 1.0)


class TestSteeringVector:
    def test_single_element(self):
        assert np.allclose(steering_vector((1, 1), 0.3, 1.2), [1.0])

    def test_broadside_pair(self):
        assert np.allclose(steering_vector((2, 1), 0.0, 0.0), [2 ** -0.5, 2 ** -0.5])

    def test_hand_computed_2x2(self):
        el, az, d = np.pi / 4, np.pi / 3, 0.5
        u = np.sin(el) * np.cos(az)
        v = np.sin(el) * np.sin(az)
        expected = [np.exp(2j * np.pi * d * (m * u + n * v)) / 2 for m in range(2) for n in range(2)]
        assert np.allclose(steering_vector((2, 2), el, az, d), expected, atol=1e-15)

    def test_zero_size_rejected(self):
        with pytest.raises(InvalidArgumentError):
            steering_vector((0, 3), 0.1, 0.1)

    @given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
    def test_unit_norm_equal_magnitudes(self, r, c, el, az):
        a = steering_vector((r, c), el, az)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(np.abs(a), 1 / np.sqrt(r * c))


class TestRaisedCosine:
    def test_peak(self):
        assert raised_cosine(0.0, 1.0, 0.3) == 1.0

    @pytest.mark.parametrize("k", [1, 2, -3])
    def test_nyquist_zeros(self, k):
        assert raised_cosine(k * 1.0, 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_half_period_closed_form(self):
        t, T, b = 0.5, 1.0, 0.3
        oracle = (np.sin(np.pi * t / T) / (np.pi * t / T)) * np.cos(np.pi * b * t / T) \
            / (1 - (2 * b * t / T) ** 2)
        assert raised_cosine(t, T, b) == pytest.approx(oracle, rel=1e-14)

    def test_singularity_uses_limit(self):
        b = 0.3
        ts = 1 / (2 * b)
        near = raised_cosine(ts * (1 + 1e-7), 1.0, b)
        assert raised_cosine(ts, 1.0, b) == pytest.approx(near, rel=1e-5)

    @given(st.floats(-5, 5), st.floats(0, 1))
    def test_even(self, t, b):
        assert raised_cosine(t, 1.0, b) == pytest.approx(raised_cosine(-t, 1.0, b), abs=1e-12)


class TestGenChannel:
    def test_nyquist_zero_second_tap(self):
        p = ChannelParams(num_paths=1, num_taps=2, rolloff=0.0, max_delay=0.0)
        taps = gen_channel(p, 3)
        assert np.allclose(taps[1], 0.0, atol=1e-15)

    def test_scalar_reduction(self):
        p = ChannelParams(num_taps=1, tx_array=(1, 1), rx_array=(1, 1))
        path = PathComponent(0.6 - 0.8j, 0.2, 0.1, 0.2, 0.3, 0.4)
        taps = taps_from_paths(p, [path])
        assert taps[0, 0, 0] == pytest.approx(raised_cosine(-0.2, 1.0, 0.3) * (0.6 - 0.8j))

    def test_triple_sum_oracle(self):
        p = ChannelParams(num_paths=3, num_taps=4, tx_array=(2, 2), rx_array=(1, 2), max_delay=3.0)
        from jcesd.channel import draw_paths
        paths = draw_paths(p, 11)
        taps = gen_channel(p, 11)
        scale = np.sqrt(4 * 2 / 3)
        for d in range(4):
            ref = np.zeros((2, 4), dtype=complex)
            for path in paths:
                ar = steering_vector((1, 2), path.aoa_elevation, path.aoa_azimuth)
                at = steering_vector((2, 2), path.aod_elevation, path.aod_azimuth)
                ref += path.gain * raised_cosine(d - path.delay, 1.0, 0.3) * np.outer(ar, at.conj())
            assert np.allclose(taps[d], scale * ref, atol=1e-12)

    def test_deterministic(self):
        p = ChannelParams()
        assert np.array_equal(gen_channel(p, 5), gen_channel(p, 5))
        assert not np.array_equal(gen_channel(p, 5), gen_channel(p, 6))

    def test_delays_within_bound(self):
        from jcesd.channel import draw_paths
        p = ChannelParams(num_paths=50, max_delay=0.5)
        assert all(0 <= q.delay <= 0.5 for q in draw_paths(p, 1))

    @pytest.mark.slow
    def test_energy_doubles_with_tx_antennas(self):
        def mean_energy(arr):
            p = ChannelParams(tx_array=arr, rx_array=(1, 2))
            return np.mean([np.sum(np.abs(gen_channel(p, s)) ** 2) for s in range(400)])
        ratio = mean_energy((4, 8)) / mean_energy((4, 4))
        assert ratio == pytest.approx(2.0, rel=0.1)


class TestToFrequency:
    def test_flat(self):
        taps = gen_channel(ChannelParams(num_taps=1, tx_array=(1, 2), rx_array=(1, 2)), 0)
        H = to_frequency(taps, 8)
        assert np.allclose(H, H[0])

    def test_two_point(self):
        H = to_frequency(np.stack([np.eye(2), np.eye(2)]), 2)
        assert np.allclose(H[0], 2 * np.eye(2)) and np.allclose(H[1], 0, atol=1e-15)

    def test_direct_dft(self):
        g = np.random.default_rng(0)
        taps = g.standard_normal((2, 2, 3)) + 1j * g.standard_normal((2, 2, 3))
        ref = taps[0] + taps[1] * np.exp(-2j * np.pi * 3 / 8)
        assert np.allclose(to_frequency(taps, 8)[3], ref, atol=1e-14)

    @given(st.integers(1, 4), st.integers(4, 16), st.integers(0, 1000))
    @settings(max_examples=25)
    def test_inverse_dft_recovers_taps(self, n_c, J, seed):
        taps = gen_channel(ChannelParams(num_taps=n_c, tx_array=(1, 2), rx_array=(1, 1)), seed)
        back = np.fft.ifft(to_frequency(taps, J), axis=0)
        assert np.allclose(back[:n_c], taps, atol=1e-10)
        assert np.allclose(back[n_c:], 0, atol=1e-10)


class TestTransmit:
    def test_noiseless_single_user(self):
        g = np.random.default_rng(1)
        H = g.standard_normal((1, 3, 2, 2)) + 1j * g.standard_normal((1, 3, 2, 2))
        X = g.standard_normal((1, 3, 2, 5)) + 0j
        out = transmit(H, _identity_chain(2), X, 0.0, 0)
        assert np.allclose(out[0], H[0] @ X[0])

    def test_linear_in_x(self):
        g = np.random.default_rng(2)
        H = g.standard_normal((1, 2, 2, 2)) + 0j
        X1, X2 = g.standard_normal((2, 1, 2, 2, 4)) + 0j
        pre = _identity_chain(2)
        lhs = transmit(H, pre, 2 * X1 - 3 * X2, 0.0, 0)
        assert np.allclose(lhs, 2 * transmit(H, pre, X1, 0.0, 0) - 3 * transmit(H, pre, X2, 0.0, 0))

    def test_noise_variance(self):
        H = np.zeros((1, 4, 2, 2), dtype=complex)
        X = np.zeros((1, 4, 2, 5000), dtype=complex)
        out = transmit(H, _identity_chain(2), X, 0.3, 9)
        assert np.mean(np.abs(out) ** 2) == pytest.approx(0.3, rel=0.03)

    def test_three_term_decomposition(self):
        g = np.random.default_rng(3)
        K, J, N = 2, 3, 2
        H = g.standard_normal((K, J, N, N)) + 1j * g.standard_normal((K, J, N, N))
        F_BB = g.standard_normal((K, N, N)) + 1j * g.standard_normal((K, N, N))
        pre = PrecoderSet(np.eye(N, dtype=complex), np.eye(N, dtype=complex),
                          np.eye(N, dtype=complex), F_BB, 0.7)
        X = g.standard_normal((K, J, N, 4)) + 0j
        out = transmit(H, pre, X, 0.1, 4)
        noise = transmit(H, pre, np.zeros_like(X), 0.1, 4)
        for k in range(K):
            for j in range(J):
                desired = H[k, j] @ (0.7 * F_BB[k]) @ X[k, j]
                iui = sum(H[k, j] @ (0.7 * F_BB[m]) @ X[m, j] for m in range(K) if m != k)
                assert np.allclose(out[k, j], desired + iui + noise[k, j])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            transmit(np.zeros((1, 2, 2, 2)), _identity_chain(2), np.zeros((1, 3, 2, 4)), 0.0, 0)
