"""
Telegraph dynamics of thermal TLSs and synthesis of resonator time series.

The frequency trajectory of every Q-TLS is generated once and reused for all
pump settings, so the settings differ only through the drive.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensemble import STREAM_RTS, Ensemble, stream_rng
from .errors import InvalidInputError
from .physics import (
    PumpSetting,
    QTls,
    ResonatorModel,
    TTls,
    dbm_to_watts,
    drive_tones,
    freq_shift_array,
    kappa_array,
    sigma_z0_array,
)

HOUR = 3600.0
SERIES_CSV_COLUMNS = ("t_s", "setting_id", "gamma_int_hz", "f_r_hz", "period_id")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid, split into measurement periods.

    Samples sit at ``t = i * dt`` for ``i < floor(n_periods * period_s / dt)``;
    the period index of a sample is ``floor(t / period_s)``. With
    ``separate_periods=False`` the whole record is a single period.
    """

    dt: float = 520.0
    period_s: float = 120 * HOUR
    n_periods: int = 4
    separate_periods: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be > 0")
        if self.n_periods < 1:
            raise InvalidInputError("n_periods must be >= 1")
        if self.n_samples < 2:
            raise InvalidInputError("grid must hold at least 2 samples")

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.n_periods * self.period_s / self.dt + 1e-9))

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    @property
    def period_id(self) -> np.ndarray:
        if not self.separate_periods:
            return np.zeros(self.n_samples, dtype=np.int64)
        return np.floor(self.t / self.period_s + 1e-12).astype(np.int64)

    @property
    def samples_per_period(self) -> np.ndarray:
        return np.bincount(self.period_id)


DEFAULT_SETTINGS = (
    PumpSetting("off"),
    PumpSetting("on", -3.0, 2e6),
    PumpSetting("on", -3.0, -2e6),
    PumpSetting("on", 10.0, 2e6),
    PumpSetting("on", 10.0, -2e6),
)


@dataclass(frozen=True)
class PumpSchedule:
    """Pump settings cycled once per grid step.

    The probe (power referred to the sample) is always applied on resonance;
    with ``probe_with_pump`` it also contributes saturation while the pump is
    on.
    """

    settings: tuple[PumpSetting, ...] = DEFAULT_SETTINGS
    probe_power_dbm: float = -160.0
    probe_with_pump: bool = True

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        if not self.settings:
            raise InvalidInputError("pump schedule needs at least one setting")

    @property
    def probe_power_w(self) -> float:
        return float(dbm_to_watts(self.probe_power_dbm))

    def tones(self, resonator: ResonatorModel, gamma_int=None):
        return [drive_tones(resonator, s, self.probe_power_w, gamma_int, self.probe_with_pump)
                for s in self.settings]


@dataclass
class SimulationResult:
    """Per-setting series of internal loss rate (s^-1) and resonance frequency (Hz)."""

    t: np.ndarray
    period_id: np.ndarray
    settings: tuple[PumpSetting, ...]
    gamma_int: np.ndarray
    f_r: np.ndarray
    seed: int
    tones: list = field(default_factory=list)
    ensemble_summary: dict = field(default_factory=dict)

    def setting_index(self, label: str) -> int:
        labels = [s.label for s in self.settings]
        return labels.index(label)

    def summary(self) -> dict:
        out = []
        for i, s in enumerate(self.settings):
            out.append({
                "setting_id": i,
                "label": s.label,
                "mean_n": [tone.mean_n for tone in self.tones[i]] if self.tones else [],
                "gamma_int_mean_per_s": float(self.gamma_int[i].mean()),
                "gamma_int_std_per_s": float(self.gamma_int[i].std()),
                "f_r_mean_hz": float(self.f_r[i].mean()),
                "f_r_std_hz": float(self.f_r[i].std()),
            })
        return {"seed": self.seed, "n_samples": int(self.t.size), "settings": out}

    def write_csv(self, path) -> None:
        """One row per (sample, setting); rows ordered by time then setting."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SERIES_CSV_COLUMNS)
            for j in range(self.t.size):
                tj = repr(float(self.t[j]))
                pj = str(int(self.period_id[j]))
                for i in range(len(self.settings)):
                    w.writerow([tj, i, repr(float(self.gamma_int[i, j])),
                                repr(float(self.f_r[i, j])), pj])


def _rates_out(ttls: TTls):
    """Leave rates of the -1 and +1 states for switching rate ``gamma``."""
    b = ttls.occupancy_bias
    return 2.0 * ttls.gamma_switch * (1.0 - b), 2.0 * ttls.gamma_switch * b


def rts_switch_times(ttls: TTls, t0: float, t1: float, rng: np.random.Generator):
    """Continuous-time telegraph process on ``[t0, t1]``.

    Returns ``(initial_state, switch_times)``; the initial state is drawn
    from the stationary distribution and dwell times are exponential.
    """
    r_minus, r_plus = _rates_out(ttls)
    s0 = -1 if rng.random() < ttls.occupancy_bias else 1
    span = t1 - t0
    rate_first, rate_second = (r_minus, r_plus) if s0 == -1 else (r_plus, r_minus)
    times = []
    now = 0.0
    mean_rate = 2.0 * ttls.gamma_switch * 2.0 * ttls.occupancy_bias * (1 - ttls.occupancy_bias)
    chunk = int(mean_rate * span * 1.1) + 32
    parity = 0
    while now <= span:
        draws = rng.standard_exponential(chunk)
        rates = np.where((np.arange(chunk) + parity) % 2 == 0, rate_first, rate_second)
        with np.errstate(divide="ignore"):
            dwell = draws / rates
        cum = now + np.cumsum(dwell)
        times.append(cum)
        now = cum[-1]
        parity = (parity + chunk) % 2
    switch = np.concatenate(times) if times else np.zeros(0)
    switch = switch[switch <= span]
    return s0, t0 + switch


def simulate_rts(ttls: TTls, times, rng: np.random.Generator, return_switches: bool = False):
    """Sample a telegraph signal (values -1/+1) at ``times``.

    The underlying process is generated from exact exponential dwell times,
    so fast switchers are decimated correctly. With ``return_switches`` the
    number of switches over the record is returned too.
    """
    times = np.asarray(times, dtype=float)
    s0, sw = rts_switch_times(ttls, times[0], times[-1], rng)
    count = np.searchsorted(sw, times, side="right")
    states = np.where(count % 2 == 0, s0, -s0).astype(np.int8)
    if return_switches:
        return states, int(sw.size)
    return states


def qtls_frequency_series(q: QTls, rts_traces: Sequence[np.ndarray]) -> np.ndarray:
    """``f_k(t) = f_tilde + sum_l state_l(t) |df_l|``."""
    if len(rts_traces) != len(q.ttls):
        raise InvalidInputError(f"expected {len(q.ttls)} traces, got {len(rts_traces)}")
    if not rts_traces:
        raise InvalidInputError("no traces given; length of the series is undefined")
    n = len(rts_traces[0])
    if any(len(tr) != n for tr in rts_traces):
        raise InvalidInputError("telegraph traces have mismatched lengths")
    out = np.full(n, q.f_tilde)
    for t, tr in zip(q.ttls, rts_traces):
        out = out + t.delta_f_shift * np.asarray(tr, dtype=float)
    return out


def _chunk_partials(arr, lo, hi, cand, times, resonator, tones_per_setting, dyn_seed,
                    thermal, shift_sign):
    """Loss and shift sums of Q-TLSs ``lo:hi`` for every setting."""
    n_t = times.size
    fk = np.repeat(arr["f_tilde"][lo:hi, None], n_t, axis=1)
    owner = arr["ttls_owner"]
    sel = np.flatnonzero((owner >= lo) & (owner < hi))
    ell = {}
    for j in sel:
        k = owner[j]
        idx = ell.get(k, 0)
        ell[k] = idx + 1
        tt = TTls(arr["ttls_delta_f"][j], arr["ttls_gamma"][j], arr["ttls_bias"][j])
        rng = stream_rng(dyn_seed, STREAM_RTS, cand[k], idx)
        fk[k - lo] += tt.delta_f_shift * simulate_rts(tt, times, rng)
    g = arr["g"][lo:hi, None]
    gamma1 = arr["gamma1"][lo:hi, None]
    kap = np.empty((len(tones_per_setting), n_t))
    sh = np.empty((len(tones_per_setting), n_t))
    for i, tones in enumerate(tones_per_setting):
        sig = sigma_z0_array(fk, g, gamma1, tones, resonator.temperature, thermal)
        kap[i] = kappa_array(fk, g, gamma1, sig, resonator.f_r_tilde).sum(axis=0)
        sh[i] = freq_shift_array(fk, g, gamma1, sig, resonator.f_r_tilde).sum(axis=0)
    return kap, shift_sign * sh


def synthesize_resonator_series(ensemble: Ensemble, schedule: PumpSchedule | None = None,
                                grid: TimeGrid | None = None, seed: int | None = None,
                                resonator: ResonatorModel | None = None, threads: int = 1,
                                chunk_size: int = 256, thermal: bool = True,
                                shift_sign: int = 1, gamma_int_for_drive=None
                                ) -> SimulationResult:
    """Step (III): propagate T-TLS switching to ``gamma_int(t)`` and ``f_r(t)``.

    Parameters
    ----------
    ensemble : Ensemble
        Q-TLSs with attached T-TLSs.
    schedule, grid : optional
        Pump settings and time grid (defaults: five-setting cycle, 4 x 120 h).
    seed : int, optional
        Seed of the telegraph trajectories; defaults to the ensemble seed.
    resonator : ResonatorModel, optional
        Defaults to the ensemble's resonator.
    threads : int
        Worker threads. Results do not depend on it.
    chunk_size : int
        Q-TLSs per work unit. Partial sums are combined in chunk order.
    thermal : bool
        Apply the ``tanh(h f / 2 k T)`` population factor.
    shift_sign : {1, -1}
        ``1`` uses the frequency-shift expression as printed; ``-1`` flips it.
    gamma_int_for_drive : float, optional
        Internal loss used in the photon-number linewidth (default: background).
    """
    schedule = schedule or PumpSchedule()
    grid = grid or TimeGrid()
    resonator = resonator or ensemble.resonator
    seed = ensemble.config.seed if seed is None else int(seed)
    if shift_sign not in (1, -1):
        raise InvalidInputError("shift_sign must be +1 or -1")
    times = grid.t
    tones = schedule.tones(resonator, gamma_int_for_drive)
    arr = ensemble.arrays()
    cand = np.asarray(ensemble.candidate_index, dtype=np.int64)
    n_q = len(ensemble)
    bounds = [(lo, min(lo + chunk_size, n_q)) for lo in range(0, n_q, chunk_size)]

    def work(b):
        return _chunk_partials(arr, b[0], b[1], cand, times, resonator, tones, seed,
                               thermal, shift_sign)

    n_set = len(schedule.settings)
    total_k = np.zeros((n_set, times.size))
    total_s = np.zeros((n_set, times.size))
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    for kap, sh in parts:
        total_k += kap
        total_s += sh
    return SimulationResult(
        t=times,
        period_id=grid.period_id,
        settings=schedule.settings,
        gamma_int=resonator.gamma_int_bg + total_k,
        f_r=resonator.f_r_tilde + total_s,
        seed=seed,
        tones=tones,
        ensemble_summary=ensemble.summary(),
    )


def read_series_csv(path):
    """Read a time-series CSV into ``(t, period_id, {setting_id: (gamma, f_r)})``.

    ``period_id`` is optional; without it the whole record is one period.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in SERIES_CSV_COLUMNS[:4] if c not in header]
        if missing:
            raise InvalidInputError(f"{path}: missing column(s) {', '.join(missing)}")
        has_period = "period_id" in header
        rows = {}
        for r in reader:
            sid = int(r["setting_id"])
            rows.setdefault(sid, []).append((float(r["t_s"]), float(r["gamma_int_hz"]),
                                             float(r["f_r_hz"]),
                                             int(r["period_id"]) if has_period else 0))
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    out = {}
    t_ref = p_ref = None
    for sid in sorted(rows):
        a = np.array(rows[sid])
        order = np.argsort(a[:, 0], kind="stable")
        a = a[order]
        out[sid] = (a[:, 1], a[:, 2])
        if t_ref is None:
            t_ref, p_ref = a[:, 0], a[:, 3].astype(np.int64)
    return t_ref, p_ref, out
