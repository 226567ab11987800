"""
Stochastic generation of the Q-TLS ensemble and its thermal-TLS dressing.

Randomness is keyed per entity: every random quantity is drawn from a
generator seeded by ``SeedSequence(seed, spawn_key=(stream, ...))``, so the
ensemble is bit-reproducible and independent of evaluation order or thread
count. Changing ``g_min`` only changes which candidates are kept.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError
from .fieldmap import (
    FILLING_FACTOR,
    MODE_VOLUME_M3,
    SILICON_REL_PERMITTIVITY,
    FieldMap,
    effective_permittivity,
    interdigital_field_map,
    zero_point_scale,
)
from .physics import (
    EPS0,
    ELEMENTARY_CHARGE,
    PLANCK,
    QTls,
    ResonatorModel,
    TTls,
    freq_shift_array,
    kappa_array,
)

# spawn-key stream identifiers
STREAM_FREQ = 11
STREAM_POS_X = 12
STREAM_POS_Z = 13
STREAM_ORIENT = 14
STREAM_DIPOLE = 15
STREAM_GAMMA1 = 16
STREAM_TTLS = 2
STREAM_RTS = 3

E_ANGSTROM = ELEMENTARY_CHARGE * 1e-10


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the entity identified by ``key``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class Distribution:
    """Small serialisable description of a scalar distribution.

    ``kind`` is one of ``fixed``, ``uniform``, ``loguniform``, ``poisson``,
    ``normal`` or ``lognormal``; the meaning of ``a`` and ``b`` depends on it
    (value; low/high; low/high; mean; mean/sigma; median/sigma of ln).
    """

    kind: str
    a: float
    b: float | None = None

    KINDS = ("fixed", "uniform", "loguniform", "poisson", "normal", "lognormal")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown distribution kind {self.kind!r}")
        if self.kind in ("uniform", "loguniform", "normal", "lognormal") and self.b is None:
            raise InvalidInputError(f"{self.kind} distribution needs two parameters")
        if self.kind in ("uniform", "loguniform") and not self.a <= self.b:
            raise InvalidInputError("distribution bounds must be ordered")
        if self.kind == "loguniform" and not self.a > 0:
            raise InvalidInputError("loguniform bounds must be positive")
        if self.kind == "poisson" and not self.a >= 0:
            raise InvalidInputError("poisson mean must be >= 0")

    def sample(self, rng: np.random.Generator, size=None):
        k = self.kind
        if k == "fixed":
            return np.full(size, self.a) if size is not None else self.a
        if k == "uniform":
            return rng.uniform(self.a, self.b, size)
        if k == "loguniform":
            return np.exp(rng.uniform(np.log(self.a), np.log(self.b), size))
        if k == "poisson":
            return rng.poisson(self.a, size)
        if k == "normal":
            return rng.normal(self.a, self.b, size)
        return self.a * np.exp(rng.normal(0.0, self.b, size))

    def mean(self) -> float:
        k = self.kind
        if k in ("fixed", "poisson"):
            return float(self.a)
        if k == "uniform":
            return 0.5 * (self.a + self.b)
        if k == "loguniform":
            if self.a == self.b:
                return float(self.a)
            return (self.b - self.a) / np.log(self.b / self.a)
        if k == "normal":
            return float(self.a)
        return float(self.a * np.exp(self.b**2 / 2))

    def scaled(self, c: float) -> "Distribution":
        """Distribution of ``c * X`` (continuous kinds only)."""
        if self.kind == "poisson":
            raise InvalidInputError("cannot rescale a count distribution")
        if self.kind in ("normal",):
            return Distribution(self.kind, self.a * c, self.b * abs(c))
        if self.kind == "lognormal":
            return Distribution(self.kind, self.a * c, self.b)
        b = None if self.b is None else self.b * c
        return Distribution(self.kind, self.a * c, b)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "a": self.a}
        if self.b is not None:
            d["b"] = self.b
        return d

    @classmethod
    def from_dict(cls, d) -> "Distribution":
        if isinstance(d, Distribution):
            return d
        return cls(d["kind"], float(d["a"]), None if d.get("b") is None else float(d["b"]))


@dataclass(frozen=True)
class EnsembleConfig:
    """Parameters of steps (I) and (II).

    Units: ``bandwidth_qtls`` Hz, ``density`` per GHz per um^3,
    ``volume_int`` um^3, ``g_min`` Hz, dipole magnitudes C m, rates s^-1,
    frequency kicks Hz.

    ``gamma0_target`` (s^-1), when set, rescales the dipole magnitudes so that
    the expected zero-power, zero-temperature Q-TLS loss of the retained
    ensemble equals it.
    """

    bandwidth_qtls: float = 300e6
    density: float = 400.0
    volume_int: float = 157.0
    g_min: float = 2e3
    seed: int = 0
    dipole_magnitude_dist: Distribution = Distribution("fixed", E_ANGSTROM)
    gamma1_dist: Distribution = Distribution("loguniform", 3e5, 3e6)
    ttls_per_qtls_dist: Distribution = Distribution("poisson", 4.0)
    delta_f_dist: Distribution = Distribution("loguniform", 1e2, 1e5)
    gamma_switch_range: tuple[float, float] = (1e-6, 1e-2)
    occupancy_bias: float = 0.5
    gamma0_target: float | None = None
    eps_substrate_rel: float = SILICON_REL_PERMITTIVITY
    filling_factor: float = FILLING_FACTOR
    mode_volume: float = MODE_VOLUME_M3

    def __post_init__(self):
        for name in ("bandwidth_qtls", "density", "volume_int", "mode_volume"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be > 0")
        if not self.g_min >= 0:
            raise InvalidInputError("g_min must be >= 0")
        lo, hi = self.gamma_switch_range
        if not (0 < lo <= hi):
            raise InvalidInputError("gamma_switch_range must be positive and ordered")
        if not 0.0 <= self.occupancy_bias <= 1.0:
            raise InvalidInputError("occupancy_bias must lie in [0, 1]")
        if self.gamma0_target is not None and not self.gamma0_target > 0:
            raise InvalidInputError("gamma0_target must be > 0")
        for name in ("dipole_magnitude_dist", "gamma1_dist", "ttls_per_qtls_dist",
                     "delta_f_dist"):
            object.__setattr__(self, name, Distribution.from_dict(getattr(self, name)))
        object.__setattr__(self, "gamma_switch_range", (float(lo), float(hi)))

    @property
    def candidate_count(self) -> int:
        """``round(D * B * V)`` with ``B`` converted to GHz."""
        return int(round(self.density * (self.bandwidth_qtls / 1e9) * self.volume_int))

    @property
    def eps_eff(self) -> float:
        """Absolute effective permittivity (F/m)."""
        return effective_permittivity(self.filling_factor, self.eps_substrate_rel) * EPS0

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("dipole_magnitude_dist", "gamma1_dist", "ttls_per_qtls_dist",
                     "delta_f_dist"):
            d[name] = getattr(self, name).to_dict()
        d["gamma_switch_range"] = list(self.gamma_switch_range)
        return d

    @classmethod
    def from_dict(cls, d) -> "EnsembleConfig":
        d = dict(d)
        if "gamma_switch_range" in d:
            d["gamma_switch_range"] = tuple(d["gamma_switch_range"])
        return cls(**d)


@dataclass
class Ensemble:
    """Retained Q-TLSs plus the bookkeeping needed to reproduce them."""

    qtls: list[QTls]
    resonator: ResonatorModel
    config: EnsembleConfig
    candidate_count: int
    candidate_index: np.ndarray
    dipole_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.qtls)

    def __iter__(self):
        return iter(self.qtls)

    def __getitem__(self, i):
        return self.qtls[i]

    @property
    def retained_count(self) -> int:
        return len(self.qtls)

    def arrays(self) -> dict:
        """Column view: Q-TLS parameters and a flat T-TLS table."""
        n = len(self.qtls)
        owner, dfs, rates, bias = [], [], [], []
        for k, q in enumerate(self.qtls):
            for t in q.ttls:
                owner.append(k)
                dfs.append(t.delta_f_shift)
                rates.append(t.gamma_switch)
                bias.append(t.occupancy_bias)
        return {
            "f_tilde": np.array([q.f_tilde for q in self.qtls], dtype=float).reshape(n),
            "g": np.array([q.g for q in self.qtls], dtype=float).reshape(n),
            "gamma1": np.array([q.gamma1 for q in self.qtls], dtype=float).reshape(n),
            "ttls_owner": np.array(owner, dtype=np.int64),
            "ttls_delta_f": np.array(dfs, dtype=float),
            "ttls_gamma": np.array(rates, dtype=float),
            "ttls_bias": np.array(bias, dtype=float),
        }

    def static_loss(self, sigma=-1.0) -> float:
        """Sum of partial loss rates at fixed population (default: ground state)."""
        a = self.arrays()
        return float(np.sum(kappa_array(a["f_tilde"], a["g"], a["gamma1"], sigma,
                                        self.resonator.f_r_tilde)))

    def static_shift(self, sigma=-1.0) -> float:
        a = self.arrays()
        return float(np.sum(freq_shift_array(a["f_tilde"], a["g"], a["gamma1"], sigma,
                                             self.resonator.f_r_tilde)))

    def summary(self) -> dict:
        a = self.arrays()
        counts = np.bincount(a["ttls_owner"], minlength=len(self)) if len(self) else np.zeros(0)
        return {
            "candidate_count": self.candidate_count,
            "retained_count": self.retained_count,
            "dipole_scale": self.dipole_scale,
            "dipole_magnitude_mean_c_m": self.config.dipole_magnitude_dist.mean() * self.dipole_scale,
            "g_median_hz": float(np.median(a["g"])) if len(self) else 0.0,
            "g_max_hz": float(np.max(a["g"])) if len(self) else 0.0,
            "ttls_total": int(a["ttls_owner"].size),
            "ttls_per_qtls_mean": float(counts.mean()) if len(self) else 0.0,
            "expected_gamma0_per_s": float(self.meta.get("expected_gamma0_per_s", np.nan)),
            "static_gamma0_per_s": self.static_loss() if len(self) else 0.0,
        }


def expected_loss(g, gamma1, bandwidth):
    """Band-averaged ground-state loss of TLSs uniform over ``bandwidth``.

    ``E[kappa] = 8 pi g^2 atan(2 pi B / gamma1) / B`` for a TLS whose
    frequency is uniform in a band of width ``B`` centred on the resonator.
    """
    g = np.asarray(g, dtype=float)
    gamma1 = np.asarray(gamma1, dtype=float)
    return 8.0 * np.pi * g**2 * np.arctan(2.0 * np.pi * bandwidth / gamma1) / bandwidth


def _candidates(cfg: EnsembleConfig, resonator: ResonatorModel, fmap: FieldMap):
    """Draw every step-(I) candidate; couplings are per unit dipole scale."""
    n = cfg.candidate_count
    seed = cfg.seed
    f0 = resonator.f_r_tilde
    half = cfg.bandwidth_qtls / 2
    freqs = stream_rng(seed, STREAM_FREQ).uniform(f0 - half, f0 + half, n)
    (x0, x1), (z0, z1) = fmap.bounds
    xs = stream_rng(seed, STREAM_POS_X).uniform(x0, x1, n)
    zs = stream_rng(seed, STREAM_POS_Z).uniform(z0, z1, n)
    shape = fmap.sample_normalized(xs, zs)
    # isotropic orientation: cos(theta) uniform on [-1, 1]
    cos_t = stream_rng(seed, STREAM_ORIENT).uniform(-1.0, 1.0, n)
    p_mag = np.asarray(cfg.dipole_magnitude_dist.sample(stream_rng(seed, STREAM_DIPOLE), n),
                       dtype=float)
    e0 = zero_point_scale(f0, cfg.eps_eff, cfg.mode_volume)
    g_unit = np.abs(p_mag * e0 * shape * cos_t) / PLANCK
    gamma1 = np.asarray(cfg.gamma1_dist.sample(stream_rng(seed, STREAM_GAMMA1), n), dtype=float)
    if np.any(gamma1 <= 0):
        raise InvalidInputError("gamma1 distribution produced non-positive rates")
    return freqs, g_unit, gamma1


def calibrate_dipole_scale(g_unit, gamma1, g_min, bandwidth, target) -> float:
    """Scale ``c`` such that ``sum_{c g >= g_min} E[kappa](c g) = target``."""
    g_unit = np.asarray(g_unit, dtype=float)
    gamma1 = np.asarray(gamma1, dtype=float)
    unit_loss = expected_loss(g_unit, gamma1, bandwidth)

    def excess(c):
        kept = c * g_unit >= g_min
        return c * c * unit_loss[kept].sum() - target

    if not np.any(g_unit > 0):
        raise InvalidInputError("all candidate couplings vanish; cannot calibrate")
    lo, hi = 1e-6, 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise InvalidInputError("cannot reach the calibration target")
    while excess(lo) > 0:
        lo /= 2.0
    return float(brentq(excess, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=500))


def sample_qtls_ensemble(cfg: EnsembleConfig, resonator: ResonatorModel,
                         fmap: FieldMap | None = None) -> Ensemble:
    """Step (I): candidate Q-TLSs, coupling cutoff, optional loss calibration.

    The T-TLS lists of the returned Q-TLSs are empty; see :func:`attach_ttls`.
    """
    if fmap is None:
        fmap = interdigital_field_map()
    if fmap.e_mag.size == 0 or fmap.e_mag.max() <= 0:
        raise InvalidInputError("empty or zero field map")
    freqs, g_unit, gamma1 = _candidates(cfg, resonator, fmap)
    scale = 1.0
    if cfg.gamma0_target is not None and np.isfinite(cfg.g_min):
        scale = calibrate_dipole_scale(g_unit, gamma1, cfg.g_min, cfg.bandwidth_qtls,
                                       cfg.gamma0_target)
    g = scale * g_unit
    keep = np.flatnonzero(g >= cfg.g_min)
    qtls = [QTls(float(freqs[i]), float(g[i]), float(gamma1[i])) for i in keep]
    expected = float(expected_loss(g[keep], gamma1[keep], cfg.bandwidth_qtls).sum())
    return Ensemble(qtls=qtls, resonator=resonator, config=cfg,
                    candidate_count=cfg.candidate_count, candidate_index=keep,
                    dipole_scale=scale,
                    meta={"expected_gamma0_per_s": expected,
                          "field": dict(fmap.metadata)})


def sample_ttls_for(q: QTls, cfg: EnsembleConfig, rng: np.random.Generator) -> list[TTls]:
    """Step (II) for one Q-TLS: count, kicks and switching rates."""
    count = int(cfg.ttls_per_qtls_dist.sample(rng))
    if count <= 0:
        return []
    lo, hi = cfg.gamma_switch_range
    dfs = np.abs(np.asarray(cfg.delta_f_dist.sample(rng, count), dtype=float))
    rates = np.exp(rng.uniform(np.log(lo), np.log(hi), count))
    return [TTls(float(d), float(r), cfg.occupancy_bias) for d, r in zip(dfs, rates)]


def attach_ttls(ens: Ensemble) -> Ensemble:
    """Return a copy of ``ens`` whose Q-TLSs carry their thermal TLSs."""
    cfg = ens.config
    new = []
    for q, cand in zip(ens.qtls, ens.candidate_index):
        rng = stream_rng(cfg.seed, STREAM_TTLS, cand)
        new.append(replace(q, ttls=tuple(sample_ttls_for(q, cfg, rng))))
    return replace(ens, qtls=new)


def generate_ensemble(cfg: EnsembleConfig, resonator: ResonatorModel,
                      fmap: FieldMap | None = None) -> Ensemble:
    """Steps (I) and (II)."""
    return attach_ttls(sample_qtls_ensemble(cfg, resonator, fmap))


# -- serialisation -----------------------------------------------------------

def ensemble_to_dict(ens: Ensemble) -> dict:
    r = ens.resonator
    return {
        "format": "tlsfluct-ensemble/1",
        "resonator": {
            "f_r_tilde_hz": r.f_r_tilde,
            "gamma_ext_per_s": r.gamma_ext,
            "gamma_int_bg_per_s": r.gamma_int_bg,
            "temperature_k": r.temperature,
        },
        "config": ens.config.to_dict(),
        "candidate_count": ens.candidate_count,
        "dipole_scale": ens.dipole_scale,
        "meta": ens.meta,
        "qtls": [
            {
                "candidate_index": int(ci),
                "f_tilde_hz": q.f_tilde,
                "g_hz": q.g,
                "gamma1_per_s": q.gamma1,
                "ttls": [
                    {"delta_f_hz": t.delta_f_shift, "gamma_switch_per_s": t.gamma_switch,
                     "occupancy_bias": t.occupancy_bias}
                    for t in q.ttls
                ],
            }
            for q, ci in zip(ens.qtls, ens.candidate_index)
        ],
    }


def ensemble_from_dict(d: dict) -> Ensemble:
    if d.get("format") != "tlsfluct-ensemble/1":
        raise InvalidInputError("not a tlsfluct ensemble document")
    r = d["resonator"]
    res = ResonatorModel(r["f_r_tilde_hz"], r["gamma_ext_per_s"], r["gamma_int_bg_per_s"],
                         r["temperature_k"])
    qtls = [
        QTls(e["f_tilde_hz"], e["g_hz"], e["gamma1_per_s"],
             tuple(TTls(t["delta_f_hz"], t["gamma_switch_per_s"], t["occupancy_bias"])
                   for t in e["ttls"]))
        for e in d["qtls"]
    ]
    idx = np.array([e["candidate_index"] for e in d["qtls"]], dtype=np.int64)
    return Ensemble(qtls=qtls, resonator=res, config=EnsembleConfig.from_dict(d["config"]),
                    candidate_count=int(d["candidate_count"]), candidate_index=idx,
                    dipole_scale=float(d["dipole_scale"]), meta=dict(d.get("meta", {})))


def save_ensemble(ens: Ensemble, path) -> None:
    Path(path).write_text(json.dumps(ensemble_to_dict(ens), indent=1, sort_keys=True) + "\n")


def load_ensemble(path) -> Ensemble:
    return ensemble_from_dict(json.loads(Path(path).read_text()))
