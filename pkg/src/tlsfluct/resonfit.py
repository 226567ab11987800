"""
Hanger resonator transmission, quality factors and power-dependent loss.

``s21_model`` is the normalised hanger response

    S21 = 1 / (1 + (Qi / Qe) exp(i phi) f / (f - 2 i Qi (f_r - f)))

and ``scurve_model`` the saturable loss ``1/Qi = F tan_d0 (1 + n/n_c)**-alpha
+ 1/Qi_bg``. Both are fitted with the bounded Levenberg-Marquardt solver in
:mod:`tlsfluct.lm`; standard errors are linearised at the optimum and 95 %
intervals are reported as ``1.96 * stderr``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FitError, IllConditionedFitError, InvalidInputError
from .lm import covariance, levenberg_marquardt

TRACE_CSV_COLUMNS = ("f_hz", "re_s21", "im_s21")
SCURVE_CSV_COLUMNS = ("mean_n", "q_int", "q_int_err")
CI95 = 1.96


@dataclass
class ResonanceFit:
    f_r: float
    q_int: float
    q_ext: float
    phi: float
    stderr: tuple = (0.0, 0.0, 0.0, 0.0)
    residual_norm: float = 0.0
    nfev: int = 0

    def __post_init__(self):
        if not (self.q_int > 0 and self.q_ext > 0):
            raise InvalidInputError("quality factors must be > 0")
        if not self.f_r > 0:
            raise InvalidInputError("resonance frequency must be > 0")
        # wrap into (-pi, pi]
        self.phi = float(np.pi - np.mod(np.pi - self.phi, 2 * np.pi))

    def to_dict(self) -> dict:
        names = ("f_r_hz", "q_int", "q_ext", "phi_rad")
        vals = (self.f_r, self.q_int, self.q_ext, self.phi)
        return {
            "parameters": dict(zip(names, map(float, vals))),
            "standard_errors": dict(zip(names, map(float, self.stderr))),
            "ci95_halfwidth_linearized": {k: CI95 * float(e) for k, e in zip(names, self.stderr)},
            "residual_norm": float(self.residual_norm),
            "nfev": int(self.nfev),
        }


@dataclass
class S21Trace:
    f: np.ndarray
    s21: np.ndarray
    sigma: np.ndarray | float | None = None
    is_normalization: np.ndarray | None = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        if self.f.shape != self.s21.shape or self.f.ndim != 1:
            raise InvalidInputError("frequencies and S21 must be 1-D of equal length")
        if self.f.size < 8:
            raise InvalidInputError("a trace needs at least 8 points")
        if np.any(np.diff(self.f) <= 0):
            raise InvalidInputError("frequencies must be strictly ascending")
        if self.is_normalization is None:
            self.is_normalization = np.zeros(self.f.size, dtype=bool)
        self.is_normalization = np.asarray(self.is_normalization, dtype=bool)

    @property
    def sweep(self):
        m = ~self.is_normalization
        return self.f[m], self.s21[m]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_CSV_COLUMNS)
            for fv, sv in zip(self.f, self.s21):
                w.writerow([repr(float(fv)), repr(float(sv.real)), repr(float(sv.imag))])


@dataclass
class SCurveFit:
    f_tan_delta0: float
    n_c: float
    alpha: float
    q_int_bg: float
    stderr: tuple = (0.0, 0.0, 0.0, 0.0)
    residual_norm: float = 0.0
    nfev: int = 0

    def __post_init__(self):
        if min(self.f_tan_delta0, self.n_c, self.alpha, self.q_int_bg) <= 0:
            raise InvalidInputError("S-curve parameters must all be > 0")

    def to_dict(self) -> dict:
        names = ("f_tan_delta0", "n_c", "alpha", "q_int_bg")
        vals = (self.f_tan_delta0, self.n_c, self.alpha, self.q_int_bg)
        return {
            "parameters": dict(zip(names, map(float, vals))),
            "standard_errors": dict(zip(names, map(float, self.stderr))),
            "ci95_halfwidth_linearized": {k: CI95 * float(e) for k, e in zip(names, self.stderr)},
            "residual_norm": float(self.residual_norm),
            "nfev": int(self.nfev),
        }


def rates_from_q(f_r, q_int, q_ext, angular: bool = True):
    """``(2 pi f_r / Q_int, 2 pi f_r / Q_ext)``; ``angular=False`` drops the 2 pi."""
    f_r, q_int, q_ext = (np.asarray(v, dtype=float) for v in (f_r, q_int, q_ext))
    if np.any(f_r <= 0) or np.any(q_int <= 0) or np.any(q_ext <= 0):
        raise InvalidInputError("frequency and quality factors must be > 0")
    c = 2 * np.pi if angular else 1.0
    gi, ge = c * f_r / q_int, c * f_r / q_ext
    return (float(gi), float(ge)) if gi.ndim == 0 else (gi, ge)


def q_from_rates(f_r, gamma_int, gamma_ext, angular: bool = True):
    """Inverse of :func:`rates_from_q`."""
    f_r, gi, ge = (np.asarray(v, dtype=float) for v in (f_r, gamma_int, gamma_ext))
    if np.any(f_r <= 0) or np.any(gi <= 0) or np.any(ge <= 0):
        raise InvalidInputError("frequency and rates must be > 0")
    c = 2 * np.pi if angular else 1.0
    qi, qe = c * f_r / gi, c * f_r / ge
    return (float(qi), float(qe)) if qi.ndim == 0 else (qi, qe)


def s21_model(params: ResonanceFit, f_pr):
    f = np.asarray(f_pr, dtype=float)
    return _s21(f, params.f_r, params.q_int, params.q_ext, params.phi)


def _s21(f, f_r, qi, qe, phi):
    delta = f_r - f
    return 1.0 / (1.0 + (qi / qe) * np.exp(1j * phi) * f / (f - 2j * qi * delta))


def sweep_frequencies(f_center: float, span: float, n_sweep: int = 112):
    """Sweep with twice the point density in the middle third of ``span``.

    Side thirds get ``n_sweep // 4`` points each and the middle third the
    rest; no frequency is repeated.
    """
    if n_sweep < 8:
        raise InvalidInputError("need at least 8 sweep points")
    n_side = n_sweep // 4
    n_mid = n_sweep - 2 * n_side
    lo, hi = f_center - span / 2, f_center + span / 2
    a, b = lo + span / 3, lo + 2 * span / 3
    left = np.linspace(lo, a, n_side, endpoint=False)
    mid = np.linspace(a, b, n_mid, endpoint=False)
    right = np.linspace(b, hi, n_side + 1)[1:]
    return np.concatenate([left, mid, right])


def synthesize_s21_trace(params: ResonanceFit, n_points: int = 116, noise: float = 0.0,
                         span: float = 0.7e6, n_norm: int = 4, norm_offset: float | None = None,
                         rng: np.random.Generator | None = None, center: float | None = None
                         ) -> S21Trace:
    """Synthetic normalised trace.

    Parameters
    ----------
    params : ResonanceFit
        Generating parameters.
    n_points : int
        Total points including the ``n_norm`` normalisation points.
    noise : float
        Standard deviation of each quadrature of the complex Gaussian noise.
    span : float
        Sweep width (Hz) centred on ``center`` (default ``params.f_r``).
    n_norm : int
        Off-resonant points, half below and half above the sweep, placed
        ``norm_offset`` (default ``span``) beyond its edges.
    """
    if n_norm % 2:
        raise InvalidInputError("normalisation points come in pairs")
    center = params.f_r if center is None else center
    fs = sweep_frequencies(center, span, n_points - n_norm)
    off = span if norm_offset is None else norm_offset
    k = n_norm // 2
    step = span / max(n_points, 1)
    f_lo = center - span / 2 - off - step * np.arange(k)[::-1]
    f_hi = center + span / 2 + off + step * np.arange(k)
    f = np.concatenate([f_lo, fs, f_hi])
    is_norm = np.zeros(f.size, dtype=bool)
    is_norm[:k] = True
    is_norm[-k:] = True
    s = s21_model(params, f)
    if noise > 0:
        rng = rng or np.random.default_rng()
        s = s + noise * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
    return S21Trace(f=f, s21=s, sigma=noise if noise > 0 else None, is_normalization=is_norm)


def normalize_trace(trace: S21Trace) -> S21Trace:
    """Divide by the mean of the normalisation points."""
    if not trace.is_normalization.any():
        raise InvalidInputError("trace has no normalisation points")
    base = trace.s21[trace.is_normalization].mean()
    if base == 0:
        raise InvalidInputError("normalisation baseline is zero")
    return S21Trace(trace.f, trace.s21 / base, trace.sigma, trace.is_normalization)


def _s21_guess(f, s):
    mag = np.abs(s)
    i0 = int(np.argmin(mag))
    f_r = f[i0]
    dmin = mag[i0]
    # half-depth width of the dip in |S21|^2
    p = mag**2
    half = 0.5 * (1 + dmin**2)
    below = np.flatnonzero(p <= half)
    if below.size >= 2:
        fwhm = max(f[below[-1]] - f[below[0]], np.median(np.diff(f)))
    else:
        fwhm = 2 * np.median(np.diff(f))
    q_tot = f_r / fwhm
    dmin = float(np.clip(dmin, 1e-3, 0.999))
    # at phi = 0, |S21(f_r)| = Qe / (Qi + Qe) = Q_tot / Qi
    qi = q_tot / dmin
    qe = q_tot / (1 - dmin)
    return np.array([f_r, qi, qe, 0.0])


def fit_s21(trace: S21Trace, guess=None, use_normalization_points: bool = False,
            max_nfev: int = 2000) -> ResonanceFit:
    """Complex least-squares fit of the hanger model.

    The sweep points (and optionally the normalisation points) enter with
    real and imaginary residuals. Internally the unknowns are rescaled to
    order one: ``(f_r - f0) / w0``, ``Qi / Qi0``, ``Qe / Qe0``, ``phi``.

    Raises
    ------
    FitError
        If the solver does not converge.
    """
    if use_normalization_points:
        f, s = trace.f, trace.s21
    else:
        f, s = trace.sweep
    if f.size < 8:
        raise InvalidInputError("fewer than 8 sweep points")
    g = _s21_guess(f, s) if guess is None else np.asarray(guess, dtype=float)
    f0, qi0, qe0 = g[0], g[1], g[2]
    w0 = f0 / (2 * g[1] * g[2] / (g[1] + g[2]))

    def unpack(a):
        return f0 + a[0] * w0, a[1] * qi0, a[2] * qe0, a[3]

    def resid(a):
        return _s21(f, *unpack(a)) - s

    def jac(a):
        f_r, qi, qe, phi = unpack(a)
        e = np.exp(1j * phi)
        den = f - 2j * qi * (f_r - f)
        u = (qi / qe) * e * f / den
        s_val = 1.0 / (1.0 + u)
        ds_du = -s_val**2
        du_dfr = (qi / qe) * e * f * (2j * qi) / den**2
        du_dqi = e * f / qe / den + (qi / qe) * e * f * (2j * (f_r - f)) / den**2
        du_dqe = -u / qe
        du_dphi = 1j * u
        return np.stack([ds_du * du_dfr * w0, ds_du * du_dqi * qi0, ds_du * du_dqe * qe0,
                         ds_du * du_dphi], axis=1)

    a0 = np.array([(g[0] - f0) / w0, 1.0, 1.0, g[3]])
    lo = np.array([-np.inf, 1e-9, 1e-9, -np.inf])
    res = levenberg_marquardt(resid, a0, jac=jac, bounds=(lo, np.inf), max_nfev=max_nfev,
                              ftol=1e-15, xtol=1e-15, gtol=1e-15)
    if res.status <= 0:
        raise FitError(f"S21 fit failed: {res.message}",
                       {"nfev": res.nfev, "cost": res.cost, "x": unpack(res.x)})
    cov = covariance(res.jac, res.fun)
    unit = np.array([w0, qi0, qe0, 1.0])
    se = np.sqrt(np.clip(np.diag(cov), 0, None)) * unit
    f_r, qi, qe, phi = unpack(res.x)
    return ResonanceFit(float(f_r), float(qi), float(qe), float(phi), tuple(map(float, se)),
                        float(np.linalg.norm(res.fun)), res.nfev)


def scurve_model(fit: SCurveFit, mean_n):
    """``1/Q_int`` at mean photon number ``mean_n``."""
    n = np.asarray(mean_n, dtype=float)
    if np.any(n < 0):
        raise InvalidInputError("mean photon number must be >= 0")
    out = fit.f_tan_delta0 * (1.0 + n / fit.n_c) ** (-fit.alpha) + 1.0 / fit.q_int_bg
    return float(out) if out.ndim == 0 else out


def fit_scurve(mean_n, q_int, q_err=None, guess=None, cond_max: float = 1e6,
               max_nfev: int = 5000) -> SCurveFit:
    """Fit the saturable-loss model to ``(mean_n, q_int)`` points.

    Residuals are relative, ``(model(n) * Q_int - 1)`` (divided by the
    relative error when ``q_err`` is given), so every decade of power weighs
    the same. ``n_c`` is fitted through its logarithm.

    Raises
    ------
    IllConditionedFitError
        When the points cannot separate the parameters (for instance all of
        them deep in saturation).
    FitError
        On solver failure.
    """
    n = np.asarray(mean_n, dtype=float)
    q = np.asarray(q_int, dtype=float)
    if n.shape != q.shape or n.ndim != 1:
        raise InvalidInputError("mean_n and q_int must be 1-D of equal length")
    if n.size < 5:
        raise InvalidInputError("need at least 5 points")
    if np.any(n < 0) or np.any(q <= 0):
        raise InvalidInputError("mean_n must be >= 0 and q_int > 0")
    w = np.ones_like(q) if q_err is None else q / np.asarray(q_err, dtype=float)
    inv = 1.0 / q
    order = np.argsort(n)
    if guess is None:
        bg = inv[order[-1]]
        top = inv[order[0]]
        ftd = max(top - bg, 1e-3 * top)
        bg = max(bg * 0.9, 1e-3 * top)
        positive = n[n > 0]
        nc = float(np.exp(np.median(np.log(positive)))) if positive.size else 1.0
        guess = (ftd, nc, 0.5, 1.0 / bg)
    ftd0, nc0, al0, qbg0 = (float(v) for v in guess)
    ibg0 = 1.0 / qbg0

    def unpack(a):
        return a[0] * ftd0, nc0 * np.exp(a[1]), a[2], a[3] * ibg0

    def resid(a):
        ftd, nc, al, ibg = unpack(a)
        return (ftd * (1 + n / nc) ** (-al) + ibg) * q * w - w

    def jac(a):
        ftd, nc, al, ibg = unpack(a)
        x = 1 + n / nc
        p = x ** (-al)
        d_ftd = p * ftd0
        d_lognc = ftd * al * x ** (-al - 1) * n / nc
        d_al = -ftd * p * np.log(x)
        d_ibg = np.full_like(n, ibg0)
        return np.stack([d_ftd, d_lognc, d_al, d_ibg], axis=1) * (q * w)[:, None]

    a0 = np.array([1.0, 0.0, al0, 1.0])
    j0 = jac(a0)
    res = levenberg_marquardt(resid, a0, jac=jac, bounds=([1e-12, -50, 1e-6, 1e-12], np.inf),
                              max_nfev=max_nfev, ftol=1e-15, xtol=1e-15, gtol=1e-15)
    jf = res.jac
    sv = np.linalg.svd(jf, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > cond_max:
        sv0 = np.linalg.svd(j0, compute_uv=False)
        raise IllConditionedFitError(
            "S-curve points do not constrain all parameters",
            {"condition_number": cond, "initial_condition_number": float(sv0[0] / max(sv0[-1], 1e-300)),
             "n_range": (float(n.min()), float(n.max()))},
        )
    if res.status <= 0:
        raise FitError(f"S-curve fit failed: {res.message}",
                       {"nfev": res.nfev, "cost": res.cost, "x": list(unpack(res.x))})
    ftd, nc, al, ibg = unpack(res.x)
    cov = covariance(res.jac, res.fun)
    se_a = np.sqrt(np.clip(np.diag(cov), 0, None))
    se = (se_a[0] * ftd0, se_a[1] * nc, se_a[2], se_a[3] * ibg0 / ibg**2)
    return SCurveFit(float(ftd), float(nc), float(al), float(1.0 / ibg),
                     tuple(map(float, se)), float(np.linalg.norm(res.fun)), res.nfev)


def read_trace_csv(path) -> S21Trace:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TRACE_CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise InvalidInputError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [(float(r["f_hz"]), float(r["re_s21"]), float(r["im_s21"])) for r in reader]
    a = np.array(rows) if rows else np.zeros((0, 3))
    return S21Trace(a[:, 0], a[:, 1] + 1j * a[:, 2])


def read_scurve_csv(path):
    """Return ``(mean_n, q_int, q_int_err)``; the error column may be empty."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in SCURVE_CSV_COLUMNS[:2] if c not in header]
        if missing:
            raise InvalidInputError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    n = np.array([float(r["mean_n"]) for r in rows])
    q = np.array([float(r["q_int"]) for r in rows])
    err = None
    if "q_int_err" in header and all(r.get("q_int_err") not in (None, "") for r in rows):
        err = np.array([float(r["q_int_err"]) for r in rows])
    return n, q, err


def write_scurve_csv(path, mean_n, q_int, q_err=None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCURVE_CSV_COLUMNS)
        for i, (nv, qv) in enumerate(zip(mean_n, q_int)):
            w.writerow([repr(float(nv)), repr(float(qv)), "" if q_err is None else repr(float(q_err[i]))])
