import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tlsfluct.dynamics import (
    PumpSchedule,
    TimeGrid,
    _chunk_partials,
    qtls_frequency_series,
    read_series_csv,
    rts_switch_times,
    simulate_rts,
    synthesize_resonator_series,
)
from tlsfluct.ensemble import Distribution, EnsembleConfig, generate_ensemble
from tlsfluct.errors import InvalidInputError
from tlsfluct.physics import DriveContext, PumpSetting, QTls, TTls

SHORT = TimeGrid(dt=520.0, period_s=24 * 3600.0, n_periods=1)


def _small_ensemble(r1, seed=1, **kw):
    cfg = EnsembleConfig(seed=seed, gamma0_target=88.2e3, **kw)
    return generate_ensemble(cfg, r1)


def test_default_grid():
    g = TimeGrid()
    assert g.n_samples == 3323
    assert list(g.samples_per_period) == [831, 831, 831, 830]
    assert g.t[1] == 520.0
    assert TimeGrid(separate_periods=False).period_id.max() == 0
    with pytest.raises(InvalidInputError):
        TimeGrid(dt=-1.0)


def test_rts_frozen():
    tt = TTls(1e3, 1e-12)
    s = simulate_rts(tt, np.arange(1000) * 520.0, np.random.default_rng(0))
    assert np.all(s == s[0])


@pytest.mark.parametrize("gamma", [1e-4, 1e-2])
def test_rts_switch_count_and_occupancy(gamma):
    span = 2e6
    rng = np.random.default_rng(1)
    tt = TTls(1e3, gamma)
    counts = [rts_switch_times(tt, 0.0, span, rng)[1].size for _ in range(40)]
    mu = gamma * span
    assert abs(np.mean(counts) - mu) <= 3 * np.sqrt(mu / len(counts))
    s0s = np.array([rts_switch_times(tt, 0.0, 1.0, rng)[0] for _ in range(4000)])
    p = np.mean(s0s == -1)
    assert abs(p - 0.5) <= 3 * np.sqrt(0.25 / s0s.size)


def test_rts_biased_stationary():
    tt = TTls(1e3, 1e-1, occupancy_bias=0.8)
    rng = np.random.default_rng(2)
    times = np.arange(0, 2e5, 50.0)
    s = simulate_rts(tt, times, rng)
    # samples are close to independent at gamma*dt = 5
    p = np.mean(s == -1)
    assert abs(p - 0.8) <= 4 * np.sqrt(0.16 / times.size)


def test_rts_values_and_determinism():
    tt = TTls(1e3, 1e-3)
    times = np.arange(500) * 520.0
    a = simulate_rts(tt, times, np.random.default_rng(5))
    b = simulate_rts(tt, times, np.random.default_rng(5))
    assert a.dtype == np.int8 and set(np.unique(a)) <= {-1, 1}
    assert np.array_equal(a, b)


def test_qtls_series_examples():
    q0 = QTls(5e9, 1e4, 1e6)
    with pytest.raises(InvalidInputError):
        qtls_frequency_series(q0, [])
    q1 = QTls(5e9, 1e4, 1e6, (TTls(1e3, 1e-2),))
    tr = simulate_rts(q1.ttls[0], np.arange(2000) * 520.0, np.random.default_rng(0))
    vals = set(qtls_frequency_series(q1, [tr]))
    assert vals <= {5e9 - 1e3, 5e9 + 1e3}
    q2 = QTls(5e9, 1e4, 1e6, (TTls(1e3, 1e-2), TTls(2e3, 1e-2)))
    states = np.array(list(itertools.product([-1, 1], repeat=2)), dtype=np.int8)
    got = set(qtls_frequency_series(q2, [states[:, 0], states[:, 1]]))
    assert got == {5e9 - 3e3, 5e9 - 1e3, 5e9 + 1e3, 5e9 + 3e3}
    with pytest.raises(InvalidInputError):
        qtls_frequency_series(q2, [np.ones(3), np.ones(4)])
    with pytest.raises(InvalidInputError):
        qtls_frequency_series(q2, [np.ones(3)])


def test_no_ttls_constant_series(r1):
    ens = _small_ensemble(r1, g_min=1e4, ttls_per_qtls_dist=Distribution("fixed", 0.0))
    res = synthesize_resonator_series(ens, grid=SHORT)
    assert np.all(res.gamma_int == res.gamma_int[:, :1])
    assert np.all(res.f_r == res.f_r[:, :1])


def test_loss_above_background_everywhere(r1):
    ens = _small_ensemble(r1, seed=4)
    res = synthesize_resonator_series(ens, grid=SHORT)
    assert res.gamma_int.shape == (5, SHORT.n_samples)
    assert np.all(res.gamma_int >= r1.gamma_int_bg)


def test_very_high_power_suppresses(r1):
    ens = _small_ensemble(r1, seed=2)
    sched = PumpSchedule((PumpSetting("off"), PumpSetting("on", 80.0, -2e6)))
    res = synthesize_resonator_series(ens, sched, SHORT)
    off, on = res.gamma_int
    assert np.all(on - r1.gamma_int_bg < 1e-3 * (off.mean() - r1.gamma_int_bg))
    assert np.std(on) < 1e-3 * np.std(off)
    assert np.max(np.abs(res.f_r[1] - r1.f_r_tilde)) < 1e-3 * np.max(np.abs(res.f_r[0] - r1.f_r_tilde))


def test_monotone_saturation(r1):
    ens = _small_ensemble(r1, seed=3)
    sched = PumpSchedule((PumpSetting("off"), PumpSetting("on", -3.0, -2e6),
                          PumpSetting("on", 10.0, -2e6), PumpSetting("on", 22.0, -2e6)))
    res = synthesize_resonator_series(ens, sched, SHORT)
    n_p = [tones[-1].mean_n for tones in res.tones]
    assert n_p[1] < n_p[2] < n_p[3]
    means = (res.gamma_int - r1.gamma_int_bg).mean(axis=1)
    assert np.all(np.diff(means) <= 0)


def test_setting_reuse_bitwise(r1):
    ens = _small_ensemble(r1, seed=5, g_min=5e3)
    a = PumpSetting("on", 10.0, 2e6)
    r_abab = synthesize_resonator_series(ens, PumpSchedule((PumpSetting("off"), a,
                                                            PumpSetting("off"))), SHORT)
    r_a = synthesize_resonator_series(ens, PumpSchedule((a,)), SHORT)
    assert np.array_equal(r_abab.gamma_int[0], r_abab.gamma_int[2])
    assert np.array_equal(r_abab.f_r[0], r_abab.f_r[2])
    assert np.array_equal(r_abab.gamma_int[1], r_a.gamma_int[0])


def test_thread_count_does_not_change_output(r1):
    ens = _small_ensemble(r1, seed=6)
    one = synthesize_resonator_series(ens, grid=SHORT, threads=1, chunk_size=500)
    many = synthesize_resonator_series(ens, grid=SHORT, threads=3, chunk_size=500)
    assert np.array_equal(one.gamma_int, many.gamma_int)
    assert np.array_equal(one.f_r, many.f_r)


def test_mirror_symmetry(r1_cold):
    f0 = r1_cold.f_r_tilde
    rng = np.random.default_rng(9)
    n = 60
    det = rng.uniform(-5e6, 5e6, n)
    arr = {
        "f_tilde": f0 - det, "g": rng.uniform(2e3, 3e4, n), "gamma1": rng.uniform(3e5, 3e6, n),
        "ttls_owner": np.repeat(np.arange(n), 2),
        "ttls_delta_f": rng.uniform(1e2, 1e5, 2 * n),
        "ttls_gamma": rng.uniform(1e-5, 1e-2, 2 * n), "ttls_bias": np.full(2 * n, 0.5),
    }
    mirrored = dict(arr, f_tilde=f0 + det, ttls_delta_f=-arr["ttls_delta_f"])
    cand = np.arange(n)
    times = np.arange(200) * 520.0
    tones = [(DriveContext(0.07, f0), DriveContext(6e3, f0 - 2e6))]
    tones_m = [(DriveContext(0.07, f0), DriveContext(6e3, f0 + 2e6))]
    k, s = _chunk_partials(arr, 0, n, cand, times, r1_cold, tones, 3, False, 1)
    km, sm = _chunk_partials(mirrored, 0, n, cand, times, r1_cold, tones_m, 3, False, 1)
    assert np.any(s != 0)
    np.testing.assert_allclose(sm, -s, rtol=1e-6, atol=1e-9 * np.abs(s).max())
    np.testing.assert_allclose(km, k, rtol=1e-6)


PULL_SCHEDULE = PumpSchedule((PumpSetting("off"), PumpSetting("on", 10.0, 2e6),
                              PumpSetting("on", 10.0, -2e6)))
PULL_GRID = TimeGrid(dt=520.0, period_s=12 * 520.0, n_periods=1)


@pytest.fixture(scope="module")
def pull_shifts(r1):
    """Per-seed mean f_r change (pump on minus off) under the printed sign, 40 seeds.

    Single realizations are dominated by a common-mode shift from the few
    Q-TLSs nearest resonance, so the trend is read from the seed median.
    """
    out = []
    for seed in range(1, 41):
        res = synthesize_resonator_series(_small_ensemble(r1, seed=seed), PULL_SCHEDULE,
                                          PULL_GRID, shift_sign=1)
        m = res.f_r.mean(axis=1)
        out.append(m[1:] - m[0])
    return np.array(out)


def _toward(r1, shifts):
    toward = np.array([np.sign(s.f_p(r1.f_r_tilde) - r1.f_r_tilde)
                       for s in PULL_SCHEDULE.settings[1:]])
    return np.sign(np.median(shifts, axis=0)) == toward


def test_flipped_sign_negates_shift_exactly(r1):
    for seed in (1, 2, 3):
        ens = _small_ensemble(r1, seed=seed, g_min=5e3)
        a = synthesize_resonator_series(ens, PULL_SCHEDULE, PULL_GRID, shift_sign=1)
        b = synthesize_resonator_series(ens, PULL_SCHEDULE, PULL_GRID, shift_sign=-1)
        assert np.array_equal(a.gamma_int, b.gamma_int)
        # equal up to one ulp of f_r from the final addition
        np.testing.assert_allclose(a.f_r - r1.f_r_tilde, -(b.f_r - r1.f_r_tilde), rtol=0, atol=2e-6)


def test_frequency_pulls_toward_pump_flipped_sign(r1, pull_shifts):
    assert np.all(_toward(r1, -pull_shifts))


@pytest.mark.xfail(strict=True, reason="the printed shift sign pushes f_r away from the pump")
def test_frequency_pulls_toward_pump_printed_sign(r1, pull_shifts):
    assert np.all(_toward(r1, pull_shifts))


def test_pumpoff_mean_loss_over_seeds(r1_pumpoff_runs):
    means = [r.gamma_int[0].mean() for r in r1_pumpoff_runs]
    assert 70e3 <= np.mean(means) <= 110e3


def test_csv_roundtrip(tmp_path, r1):
    ens = _small_ensemble(r1, seed=1, g_min=1e4)
    res = synthesize_resonator_series(ens, grid=SHORT)
    p = tmp_path / "ts.csv"
    res.write_csv(p)
    t, pid, data = read_series_csv(p)
    assert np.array_equal(t, res.t) and np.array_equal(pid, res.period_id)
    for i in range(5):
        assert np.array_equal(data[i][0], res.gamma_int[i])
        assert np.array_equal(data[i][1], res.f_r[i])


@given(st.floats(1e-6, 1e-1), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_rts_states_valid(gamma, bias, seed):
    s = simulate_rts(TTls(1.0, gamma, bias), np.arange(50) * 520.0, np.random.default_rng(seed))
    assert s.shape == (50,) and np.all(np.abs(s) == 1)
