import io

import numpy as np
import pytest

from ceqmimo.channel import (
    ChannelConfig,
    Direction,
    generate,
    load_realization,
    power_delay_profile,
    read_tensor,
    save_realization,
    time_frequency_transform,
    write_tensor,
)


def test_frequency_response_is_dft_of_taps():
    ch = generate(ChannelConfig(n_bs=4, k_users=2, n_sc=16, l_taps=5, seed=1))
    phase = np.exp(-2j * np.pi * np.outer(np.arange(16), np.arange(5)) / 16)
    ref = np.einsum("nl,lmk->nmk", phase, ch.taps)
    np.testing.assert_allclose(ch.freq, ref, atol=1e-10)
    assert ch.taps.shape == (5, 4, 2)
    assert ch.n_sc == 16 and ch.n_bs == 4 and ch.k_users == 2


def test_single_tap_is_flat():
    ch = generate(ChannelConfig(n_bs=3, k_users=2, n_sc=8, l_taps=1, seed=2))
    np.testing.assert_allclose(ch.freq, np.broadcast_to(ch.freq[0], ch.freq.shape), atol=1e-14)


def test_uniform_profile_tap_powers():
    rng = np.random.default_rng(3)
    power = np.zeros(4)
    draws = 10_000
    cfg = ChannelConfig(n_bs=1, k_users=1, n_sc=4, l_taps=4, pdp_decay=0.0)
    for _ in range(draws):
        power += np.abs(generate(cfg, rng).taps[:, 0, 0]) ** 2
    np.testing.assert_allclose(power / draws, 0.25, rtol=0.05)


def test_unit_average_subcarrier_power():
    # 10^4 independent entries per subcarrier
    ch = generate(ChannelConfig(n_bs=100, k_users=100, n_sc=8, l_taps=8, seed=4))
    np.testing.assert_allclose(np.mean(np.abs(ch.freq) ** 2, axis=(1, 2)), 1.0, rtol=0.03)


def test_estimation_error_limits():
    ch0 = generate(ChannelConfig(n_bs=4, k_users=2, n_sc=8, seed=5, est_error=0.0))
    np.testing.assert_array_equal(ch0.freq_est, ch0.freq)
    ch1 = generate(ChannelConfig(n_bs=50, k_users=5, n_sc=40, seed=6, est_error=1.0))
    a, b = ch1.freq.ravel(), ch1.freq_est.ravel()
    assert a.size >= 10_000
    corr = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    assert corr < 0.02


def test_estimate_keeps_power():
    ch = generate(ChannelConfig(n_bs=64, k_users=4, n_sc=64, seed=7, est_error=0.6))
    assert np.mean(np.abs(ch.freq_est) ** 2) == pytest.approx(np.mean(np.abs(ch.freq) ** 2), rel=0.05)


def test_seed_reproducible():
    cfg = ChannelConfig(n_bs=4, k_users=2, n_sc=8, seed=11, est_error=0.3)
    a, b = generate(cfg), generate(cfg)
    np.testing.assert_array_equal(a.freq, b.freq)
    np.testing.assert_array_equal(a.freq_est, b.freq_est)


def test_user_correlation():
    cfg = ChannelConfig(n_bs=200, k_users=2, n_sc=8, l_taps=1, seed=12, user_correlation=0.8)
    h = generate(cfg).freq[0]
    c = np.vdot(h[:, 0], h[:, 1]) / (np.linalg.norm(h[:, 0]) * np.linalg.norm(h[:, 1]))
    assert abs(c) == pytest.approx(0.8, abs=0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_bs": 4, "k_users": 0, "n_sc": 8},
        {"n_bs": 4, "k_users": 2, "n_sc": 4, "l_taps": 8},
        {"n_bs": 1, "k_users": 2, "n_sc": 8},
        {"n_bs": 4, "k_users": 2, "n_sc": 8, "est_error": 1.5},
        {"n_bs": 4, "k_users": 3, "n_sc": 8, "user_correlation": -0.9},
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        ChannelConfig(**kwargs)


def test_pdp_normalised():
    assert power_delay_profile(8, 0.5).sum() == pytest.approx(1.0)


def test_transform_roundtrip_and_examples(rng):
    x = rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))
    back = time_frequency_transform(time_frequency_transform(x, Direction.IFFT), Direction.FFT)
    assert np.max(np.abs(back - x)) < 1e-12
    y = time_frequency_transform(np.ones(8), "fft")
    np.testing.assert_allclose(y, np.sqrt(8) * np.eye(8)[0], atol=1e-12)
    assert np.linalg.norm(time_frequency_transform(x, "fft")) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    with pytest.raises(ValueError):
        time_frequency_transform(x, "fft", n_sc=8)


def test_tensor_format_layout():
    arr = np.arange(6).reshape(2, 3) * (1 + 2j)
    buf = io.BytesIO()
    write_tensor(buf, arr)
    raw = buf.getvalue()
    assert raw[:4] == b"CQT1"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert np.frombuffer(raw[8:24], "<i8").tolist() == [2, 3]
    assert np.frombuffer(raw[24:], "<c16")[4] == arr[1, 1]
    buf.seek(0)
    np.testing.assert_array_equal(read_tensor(buf), arr)


def test_tensor_truncated():
    buf = io.BytesIO()
    write_tensor(buf, np.ones((4, 4)))
    with pytest.raises(ValueError):
        read_tensor(io.BytesIO(buf.getvalue()[:-8]))
    with pytest.raises(ValueError):
        read_tensor(io.BytesIO(b"XXXX"))


def test_realization_roundtrip(tmp_path):
    ch = generate(ChannelConfig(n_bs=4, k_users=2, n_sc=8, seed=13, est_error=0.2))
    path = tmp_path / "ch.bin"
    save_realization(path, ch)
    back = load_realization(path)
    np.testing.assert_array_equal(back.taps, ch.taps)
    np.testing.assert_array_equal(back.freq, ch.freq)
    np.testing.assert_array_equal(back.freq_est, ch.freq_est)
    assert back.config == ch.config
    (tmp_path / "bad.bin").write_bytes(b"nope\n")
    with pytest.raises(ValueError):
        load_realization(tmp_path / "bad.bin")
