import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tlsfluct.physics import ResonatorModel
from tlsfluct.presets import R1

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def r1():
    return ResonatorModel(R1["f_r_tilde_hz"], R1["gamma_ext_per_s"], R1["gamma_int_bg_per_s"],
                          R1["temperature_k"])


@pytest.fixture(scope="session")
def r1_cold():
    return ResonatorModel(R1["f_r_tilde_hz"], R1["gamma_ext_per_s"], R1["gamma_int_bg_per_s"], 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def r1_ensemble():
    from tlsfluct.ensemble import EnsembleConfig, generate_ensemble

    res = ResonatorModel(R1["f_r_tilde_hz"], R1["gamma_ext_per_s"], R1["gamma_int_bg_per_s"],
                         R1["temperature_k"])
    cfg = EnsembleConfig(seed=1, gamma0_target=R1["gamma0_qtls_per_s"])
    return generate_ensemble(cfg, res)


@pytest.fixture(scope="session")
def r1_pumpoff_runs():
    """Full-grid pump-off series of the default R1 ensemble for seeds 1-5."""
    from tlsfluct.dynamics import PumpSchedule, TimeGrid, synthesize_resonator_series
    from tlsfluct.ensemble import EnsembleConfig, generate_ensemble
    from tlsfluct.physics import PumpSetting

    res = ResonatorModel(R1["f_r_tilde_hz"], R1["gamma_ext_per_s"], R1["gamma_int_bg_per_s"],
                         R1["temperature_k"])
    out = []
    for seed in range(1, 6):
        ens = generate_ensemble(EnsembleConfig(seed=seed, gamma0_target=R1["gamma0_qtls_per_s"]),
                                res)
        out.append(synthesize_resonator_series(ens, PumpSchedule((PumpSetting("off"),)),
                                               TimeGrid()))
    return out
