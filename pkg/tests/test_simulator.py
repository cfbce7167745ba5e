import numpy as np
import pytest

from iffsm.model import snr_db
from iffsm.simulator import (
    ChannelFileError,
    ScenarioConfig,
    export_channel_file,
    gen_activity_bursts,
    gen_channel_rayleigh,
    gen_observations,
    import_channel_file,
    simulate,
)


def test_bursts_have_exact_length(rng):
    cfg = ScenarioConfig(T=200, n_tx=6, burst_len=50)
    idx, starts = gen_activity_bursts(cfg, rng)
    assert idx.shape == (200, 6)
    np.testing.assert_array_equal((idx > 0).sum(axis=0), 50)
    for m, s0 in enumerate(starts):
        assert 0 <= s0 <= 100 - 1
        assert np.all(idx[s0:s0 + 50, m] > 0)


def test_full_length_burst(rng):
    cfg = ScenarioConfig(T=30, n_tx=2, burst_len=30)
    idx, starts = gen_activity_bursts(cfg, rng)
    assert np.all(idx > 0) and np.all(starts == 0)


def test_symbols_uniform(rng):
    cfg = ScenarioConfig(T=4000, n_tx=3, burst_len=4000)
    idx, _ = gen_activity_bursts(cfg, rng)
    freq = np.bincount(idx.ravel(), minlength=5)[1:] / idx.size
    np.testing.assert_allclose(freq, 0.25, atol=0.01)


def test_invalid_scenarios():
    for bad in (dict(burst_len=0), dict(burst_len=2000), dict(n_tx=0), dict(noise_var=-1.0),
                dict(L=2, tap_var=(1.0,))):
        with pytest.raises(ValueError):
            ScenarioConfig(**bad).validate()


def test_rayleigh_tap_power(rng):
    h = gen_channel_rayleigh(2000, 20, 2, [1.0, 0.25], rng)
    np.testing.assert_allclose(np.mean(np.abs(h) ** 2, axis=(0, 2)), [1.0, 0.25], rtol=0.02)


def test_noiseless_observations_are_exact(rng):
    X = np.array([[1, 0], [1j, -1]], dtype=complex)
    taps = np.ones((2, 1, 3), complex)
    np.testing.assert_array_equal(gen_observations(X, taps, 0.0, rng),
                                  np.array([[1, 1, 1], [-1 + 1j] * 3]))


def test_noise_power_matches_snr(rng):
    cfg = ScenarioConfig(T=2000, D=20, n_tx=1, burst_len=2000, noise_var=2.0)
    Y, truth = simulate(cfg, rng)
    from iffsm.model import mean_sequence

    noise = Y - mean_sequence(truth.X, truth.taps)
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(2.0, rel=0.02)
    assert cfg.snr_db == snr_db(20, 1, 2.0)


def test_simulate_deterministic():
    cfg = ScenarioConfig(T=50, D=4, n_tx=2, burst_len=20)
    y1, t1 = simulate(cfg, np.random.default_rng(5))
    y2, t2 = simulate(cfg, np.random.default_rng(5))
    np.testing.assert_array_equal(y1, y2)
    np.testing.assert_array_equal(t1.idx, t2.idx)
    assert t1.S.dtype == np.int8 and t1.n_tx == 2


def test_channel_file_round_trip(tmp_path, rng):
    taps = gen_channel_rayleigh(3, 4, 5, np.exp(-0.5 * np.arange(5)), rng)
    f = tmp_path / "chan.txt"
    export_channel_file(f, taps)
    np.testing.assert_array_equal(import_channel_file(f), taps)
    np.testing.assert_array_equal(import_channel_file(f, scale=2.0), 2.0 * taps)


def test_channel_file_drives_simulation(tmp_path, rng):
    taps = gen_channel_rayleigh(4, 6, 3, 0.01, rng)
    f = tmp_path / "chan.txt"
    export_channel_file(f, taps)
    cfg = ScenarioConfig(T=40, D=6, L=3, n_tx=3, burst_len=20, channel_file=str(f))
    _, truth = simulate(cfg, rng)
    np.testing.assert_array_equal(truth.taps, taps[:3])
    with pytest.raises(ChannelFileError):
        simulate(ScenarioConfig(T=40, D=5, L=3, n_tx=3, burst_len=20, channel_file=str(f)), rng)


@pytest.mark.parametrize("text", [
    "2 1 1\n",                               # short header
    "1 1 1 1.0\n1 1 1 0.5\n",                # short row
    "1 1 1 1.0\n2 1 1 0.5 0.1\n",            # index outside header
    "1 1 2 1.0\n1 1 1 0.5 0.1\n",            # missing coefficient
    "1 1 1 1.0\n1 1 1 0.5 0.1\n1 1 1 0.5 0.1\n",  # duplicate
    "a b c d\n",
])
def test_channel_file_errors(tmp_path, text):
    f = tmp_path / "bad.txt"
    f.write_text(text)
    with pytest.raises(ChannelFileError):
        import_channel_file(f)
