import numpy as np
import pytest
from scipy import stats

from tlsfluct.ensemble import (
    Distribution,
    EnsembleConfig,
    calibrate_dipole_scale,
    expected_loss,
    generate_ensemble,
    load_ensemble,
    sample_qtls_ensemble,
    sample_ttls_for,
    save_ensemble,
)
from tlsfluct.errors import InvalidInputError
from tlsfluct.fieldmap import FieldMap
from tlsfluct.physics import QTls


def test_candidate_count():
    assert EnsembleConfig().candidate_count == 18840


def test_retained_ensemble_invariants(r1_ensemble):
    ens = r1_ensemble
    a = ens.arrays()
    f0, b = ens.resonator.f_r_tilde, ens.config.bandwidth_qtls
    assert ens.candidate_count == 18840
    assert 6000 <= len(ens) <= 9000
    assert np.all(a["g"] >= ens.config.g_min)
    assert np.all(np.abs(a["f_tilde"] - f0) <= b / 2)
    assert np.all(a["gamma1"] > 0)
    assert ens.meta["expected_gamma0_per_s"] == pytest.approx(88.2e3, rel=1e-9)


def test_frequency_histogram_uniform(r1_ensemble):
    ens = r1_ensemble
    cfg = ens.config
    counts, _ = np.histogram(ens.arrays()["f_tilde"], bins=20,
                             range=(ens.resonator.f_r_tilde - cfg.bandwidth_qtls / 2,
                                    ens.resonator.f_r_tilde + cfg.bandwidth_qtls / 2))
    assert stats.chisquare(counts).pvalue > 0.01


def test_candidate_frequencies_uniform(r1):
    cfg = EnsembleConfig(seed=3, g_min=0.0)
    ens = sample_qtls_ensemble(cfg, r1)
    assert len(ens) == 18840
    counts, _ = np.histogram(ens.arrays()["f_tilde"], bins=30,
                             range=(r1.f_r_tilde - 150e6, r1.f_r_tilde + 150e6))
    assert stats.chisquare(counts).pvalue > 0.01


def test_determinism(r1):
    cfg = EnsembleConfig(seed=7, gamma0_target=88.2e3)
    a, b = generate_ensemble(cfg, r1), generate_ensemble(cfg, r1)
    assert a.qtls == b.qtls
    assert np.array_equal(a.candidate_index, b.candidate_index)
    c = generate_ensemble(EnsembleConfig(seed=8, gamma0_target=88.2e3), r1)
    assert c.qtls != a.qtls


def test_gmin_monotone_and_infinite(r1):
    counts = [len(sample_qtls_ensemble(EnsembleConfig(seed=2, g_min=g), r1))
              for g in (0.0, 1e3, 2e3, 5e3, 2e4)]
    assert all(x >= y for x, y in zip(counts, counts[1:]))
    assert len(sample_qtls_ensemble(EnsembleConfig(seed=2, g_min=np.inf), r1)) == 0


def test_gmin_change_keeps_shared_draws(r1):
    lo = sample_qtls_ensemble(EnsembleConfig(seed=2, g_min=2e3), r1)
    hi = sample_qtls_ensemble(EnsembleConfig(seed=2, g_min=5e3), r1)
    assert set(hi.candidate_index) <= set(lo.candidate_index)
    pos = {c: i for i, c in enumerate(lo.candidate_index)}
    for q, c in zip(hi.qtls, hi.candidate_index):
        assert lo.qtls[pos[c]] == q


def test_calibration_hits_target():
    rng = np.random.default_rng(0)
    g_unit = rng.uniform(0, 1e4, 500)
    g1 = rng.uniform(1e5, 1e6, 500)
    c = calibrate_dipole_scale(g_unit, g1, 2e3, 300e6, 5e4)
    kept = c * g_unit >= 2e3
    assert expected_loss(c * g_unit[kept], g1[kept], 300e6).sum() == pytest.approx(5e4, rel=1e-9)


def test_expected_loss_matches_quadrature():
    from scipy.integrate import quad

    g, g1, b = 5e3, 1e6, 300e6
    kap = lambda d: 16 * np.pi**2 * g**2 * g1 / (16 * np.pi**2 * d**2 + g1**2)  # noqa: E731
    ref = quad(kap, -b / 2, b / 2, points=[0.0], limit=200)[0] / b
    assert expected_loss(g, g1, b) == pytest.approx(ref, rel=1e-8)


def test_empty_field_rejected(r1):
    fm = FieldMap([0.0, 1.0], [0.0, 1.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        sample_qtls_ensemble(EnsembleConfig(), r1, fm)


def test_ttls_moments():
    cfg = EnsembleConfig()
    rng = np.random.default_rng(4)
    q = QTls(5.58e9, 1e4, 1e6)
    counts, rates, dfs = [], [], []
    for _ in range(20000):
        tt = sample_ttls_for(q, cfg, rng)
        counts.append(len(tt))
        rates.extend(t.gamma_switch for t in tt)
        dfs.extend(t.delta_f_shift for t in tt)
    counts = np.array(counts)
    assert abs(counts.mean() - 4.0) < 4 * np.sqrt(4.0 / counts.size)
    lr = np.log(rates)
    lo, hi = np.log(1e-6), np.log(1e-2)
    assert abs(lr.mean() - (lo + hi) / 2) < 4 * (hi - lo) / np.sqrt(12 * lr.size)
    assert lr.min() >= lo and lr.max() <= hi
    assert stats.kstest((lr - lo) / (hi - lo), "uniform").pvalue > 0.001
    ld = np.log(dfs)
    assert ld.min() >= np.log(1e2) and ld.max() <= np.log(1e5)


def test_ttls_degenerate_zero():
    cfg = EnsembleConfig(ttls_per_qtls_dist=Distribution("fixed", 0.0))
    assert sample_ttls_for(QTls(5e9, 1e4, 1e6), cfg, np.random.default_rng(0)) == []


def test_save_load_roundtrip(tmp_path, r1):
    ens = generate_ensemble(EnsembleConfig(seed=5, gamma0_target=88.2e3, g_min=1e4), r1)
    p = tmp_path / "ens.json"
    save_ensemble(ens, p)
    back = load_ensemble(p)
    assert back.qtls == ens.qtls
    assert np.array_equal(back.candidate_index, ens.candidate_index)
    assert back.config == ens.config


def test_config_validation():
    with pytest.raises(InvalidInputError):
        EnsembleConfig(density=-1.0)
    with pytest.raises(InvalidInputError):
        EnsembleConfig(gamma_switch_range=(1e-2, 1e-6))
    with pytest.raises(InvalidInputError):
        Distribution("loguniform", 0.0, 1.0)
