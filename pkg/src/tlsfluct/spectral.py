"""
Fractional-fluctuation spectra and the three-term noise model.

A series is normalised to its relative deviation from the record mean, its
one-sided PSD is estimated by averaging rectangular-window periodograms over
half-overlapping segments that never cross a period boundary, and the result
is fitted with ``S(f) = h0 + h_-1 / f + h_-2 / f**2`` in the log domain.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError, InvalidInputError
from .lm import covariance, levenberg_marquardt

PSD_CSV_COLUMNS = ("f_hz", "s_per_hz", "n_segments")


@dataclass
class TimeSeries:
    """Uniformly sampled series; ``period_id`` labels contiguous blocks."""

    t: np.ndarray
    values: np.ndarray
    period_id: np.ndarray | None = None
    unit: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise InvalidInputError("timestamps and values must be 1-D of equal length")
        if self.period_id is None:
            self.period_id = np.zeros(self.t.size, dtype=np.int64)
        self.period_id = np.asarray(self.period_id, dtype=np.int64)
        if self.period_id.shape != self.t.shape:
            raise InvalidInputError("period_id must match the timestamps")
        for p in np.unique(self.period_id):
            tp = self.t[self.period_id == p]
            if tp.size > 1 and np.any(np.diff(tp) <= 0):
                raise InvalidInputError(f"timestamps not increasing within period {p}")

    @property
    def dt(self) -> float:
        for p in np.unique(self.period_id):
            tp = self.t[self.period_id == p]
            if tp.size > 1:
                d = np.diff(tp)
                if not np.allclose(d, d[0], rtol=1e-9, atol=0):
                    raise InvalidInputError(f"non-uniform sampling within period {p}")
                return float(d[0])
        raise InvalidInputError("cannot infer the sampling interval from single-sample periods")

    def periods(self):
        """Value blocks in order of first appearance."""
        ids = list(dict.fromkeys(self.period_id.tolist()))
        return [self.values[self.period_id == p] for p in ids]


@dataclass
class Psd:
    f: np.ndarray
    power: np.ndarray
    n_segments: int
    segment_length: int = 0
    dt: float = 0.0

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PSD_CSV_COLUMNS)
            for fv, pv in zip(self.f, self.power):
                w.writerow([repr(float(fv)), repr(float(pv)), self.n_segments])


@dataclass
class NoiseFit:
    """Fitted ``h0`` (1/Hz), ``h_minus1`` (dimensionless), ``h_minus2`` (Hz)."""

    h0: float
    h_minus1: float
    h_minus2: float
    stderr: tuple
    bound_active: tuple
    residual_norm: float
    scale: float
    n_points: int
    nfev: int = 0
    status: int = 0
    cov: np.ndarray | None = field(default=None, repr=False)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.h0, self.h_minus1, self.h_minus2])

    def to_dict(self) -> dict:
        names = ("h0_per_hz", "h_minus1", "h_minus2_hz")
        return {
            "parameters": dict(zip(names, map(float, self.params))),
            "standard_errors": dict(zip(names, map(float, self.stderr))),
            "bound_active": dict(zip(names, map(bool, self.bound_active))),
            "residual_norm": float(self.residual_norm),
            "log10_scale": float(np.log10(self.scale)),
            "n_points": int(self.n_points),
            "nfev": int(self.nfev),
            "solver_status": int(self.status),
        }


def normalize_series(s: TimeSeries) -> TimeSeries:
    """Relative deviation ``(x - mean) / mean`` over the full record."""
    if s.values.size == 0:
        raise InvalidInputError("empty series")
    m = float(np.mean(s.values))
    if m == 0 or not np.isfinite(m):
        raise InvalidInputError("series mean is zero; relative deviation undefined")
    return TimeSeries(s.t, (s.values - m) / m, s.period_id, unit="")


def default_segment_length(s: TimeSeries) -> int:
    """Four half-overlapping segments in the shortest period."""
    shortest = min(p.size for p in s.periods())
    return max(2, (2 * shortest) // 5)


def segment_count(period_lengths, nperseg: int, overlap: float = 0.5) -> int:
    step = nperseg - int(round(overlap * nperseg))
    if step < 1:
        raise InvalidInputError("overlap leaves no step between segments")
    return int(sum((n - nperseg) // step + 1 for n in period_lengths if n >= nperseg))


def welch_psd(s: TimeSeries, nperseg: int | None = None, overlap: float = 0.5,
              window: str = "boxcar", detrend: str | None = None) -> Psd:
    """One-sided averaged periodogram.

    Parameters
    ----------
    s : TimeSeries
        Input (normally already normalised).
    nperseg : int, optional
        Segment length in samples (default: ``floor(2 N_min / 5)``).
    overlap : float
        Fractional overlap between consecutive segments in a period.
    window : {"boxcar", "hann"}
        Taper; the default rectangular window is what the rest of the
        pipeline assumes.
    detrend : {None, "constant", "linear"}
        Per-segment detrending (off by default).

    Returns
    -------
    Psd
        Positive frequencies ``k / (L dt)`` for ``k = 1 .. L//2``. The DC bin
        is dropped; with ``P = 2 |X|^2 / (fs U)`` (Nyquist not doubled) the sum
        over all bins including DC times ``df`` equals the mean-square value.
    """
    if nperseg is None:
        nperseg = default_segment_length(s)
    nperseg = int(nperseg)
    if nperseg < 2:
        raise InvalidInputError("segment length must be >= 2")
    blocks = s.periods()
    if all(b.size < nperseg for b in blocks):
        raise InvalidInputError(
            f"segment length {nperseg} exceeds every period (longest {max(b.size for b in blocks)})"
        )
    if any(b.size < nperseg for b in blocks):
        raise InvalidInputError(f"segment length {nperseg} exceeds a period length")
    dt = s.dt
    step = nperseg - int(round(overlap * nperseg))
    if step < 1:
        raise InvalidInputError("overlap leaves no step between segments")
    if window == "boxcar":
        w = np.ones(nperseg)
    elif window == "hann":
        w = np.hanning(nperseg + 1)[:-1]
    else:
        raise InvalidInputError(f"unknown window {window!r}")
    u = float(np.sum(w**2))
    acc = np.zeros(nperseg // 2 + 1)
    count = 0
    for b in blocks:
        for start in range(0, b.size - nperseg + 1, step):
            seg = b[start:start + nperseg]
            if detrend == "constant":
                seg = seg - seg.mean()
            elif detrend == "linear":
                k = np.arange(nperseg)
                seg = seg - np.polyval(np.polyfit(k, seg, 1), k)
            elif detrend is not None:
                raise InvalidInputError(f"unknown detrend {detrend!r}")
            acc += np.abs(np.fft.rfft(seg * w)) ** 2
            count += 1
    p = acc / count * dt / u
    p[1:] *= 2.0
    if nperseg % 2 == 0:
        p[-1] /= 2.0
    f = np.fft.rfftfreq(nperseg, dt)
    return Psd(f=f[1:], power=p[1:], n_segments=count, segment_length=nperseg, dt=dt)


def noise_model(f, h0, h_minus1, h_minus2):
    f = np.asarray(f, dtype=float)
    return h0 + h_minus1 / f + h_minus2 / f**2


def noise_level_at(fit: NoiseFit, f: float) -> float:
    """Fitted spectrum at ``f`` (Hz)."""
    if not f > 0:
        raise InvalidInputError("frequency must be > 0")
    return float(noise_model(f, fit.h0, fit.h_minus1, fit.h_minus2))


def _initial_guess(f, s):
    """h0 from the top band, h_-1 from the middle, h_-2 from the bottom."""
    n = f.size
    third = max(1, n // 3)
    lo, mid, hi = slice(0, third), slice(third, n - third), slice(n - third, n)
    h0 = float(np.median(s[hi]))
    mid_f, mid_s = f[mid], s[mid]
    if mid_f.size == 0:
        mid_f, mid_s = f, s
    h1 = float(max(np.median((mid_s - h0) * mid_f), 0.0))
    excess = s[lo] - h0 - h1 / f[lo]
    h2 = float(max(np.median(excess * f[lo] ** 2), 0.0))
    return h0, h1, h2


def fit_noise_model(p: Psd, exclude_nyquist: bool = True, max_nfev: int = 2000,
                    f_ref: float | None = None) -> NoiseFit:
    """Least-squares fit of ``log10(S / s0)`` with all parameters >= 0.

    ``s0 = 10**round(log10(h0_guess))`` keeps the residuals of order one.
    Standard errors are linearised from the Jacobian at the solution;
    parameters stuck at zero are reported with ``bound_active`` set.

    Raises
    ------
    FitError
        If the solver exhausts its budget or hits non-finite values.
    """
    f = np.asarray(p.f, dtype=float)
    s = np.asarray(p.power, dtype=float)
    keep = f > 0
    if exclude_nyquist and p.segment_length and p.segment_length % 2 == 0 and f.size:
        keep[-1] = False
    f, s = f[keep], s[keep]
    if f.size < 3:
        raise InvalidInputError("need at least 3 frequency bins")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise InvalidInputError("PSD values must be positive and finite for a log-domain fit")
    g0, g1, g2 = _initial_guess(f, s)
    s0 = 10.0 ** round(math.log10(g0 if g0 > 0 else float(np.median(s))))
    fr = float(np.sqrt(f[0] * f[-1])) if f_ref is None else float(f_ref)
    unit = np.array([s0, s0 * fr, s0 * fr**2])
    a0 = np.array([g0, g1, g2]) / unit
    a0 = np.where(a0 > 0, a0, 1e-6 * max(a0.max(), 1e-12))
    target = np.log10(s / s0)
    fn = f / fr

    def model(a):
        return a[0] + a[1] / fn + a[2] / fn**2

    def resid(a):
        m = model(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log10(np.where(m > 0, m, np.nan)) - target
        return np.where(np.isfinite(out), out, 1e6)

    def jac(a):
        m = model(a)
        basis = np.stack([np.ones_like(fn), 1 / fn, 1 / fn**2], axis=1)
        return basis / (m[:, None] * np.log(10.0))

    res = levenberg_marquardt(resid, a0, jac=jac, bounds=(0.0, np.inf), max_nfev=max_nfev,
                              ftol=1e-14, xtol=1e-14, gtol=1e-14)
    diag = {"nfev": res.nfev, "status": res.status, "cost": res.cost, "x": res.x.tolist()}
    if res.status <= 0:
        raise FitError(f"noise-model fit failed: {res.message}", diag)
    active = res.active_mask | (res.x <= 0)
    cov = covariance(res.jac, res.fun, active=active)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * unit
    x = np.where(active, 0.0, res.x) * unit
    return NoiseFit(h0=float(x[0]), h_minus1=float(x[1]), h_minus2=float(x[2]),
                    stderr=tuple(map(float, se)), bound_active=tuple(map(bool, active)),
                    residual_norm=float(np.linalg.norm(res.fun)), scale=s0, n_points=int(f.size),
                    nfev=res.nfev, status=res.status, cov=cov * np.outer(unit, unit))


def write_fit_json(fit: NoiseFit, path, extra: dict | None = None) -> None:
    d = fit.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def read_psd_csv(path) -> Psd:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PSD_CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise InvalidInputError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [(float(r["f_hz"]), float(r["s_per_hz"]), int(r["n_segments"])) for r in reader]
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    a = np.array(rows)
    # written spectra run up to the Nyquist bin
    return Psd(f=a[:, 0], power=a[:, 1], n_segments=int(a[0, 2]), segment_length=2 * len(rows))


__all__ = [
    "TimeSeries", "Psd", "NoiseFit", "normalize_series", "welch_psd", "fit_noise_model",
    "noise_level_at", "noise_model", "segment_count", "default_segment_length",
]
