"""
Closed-form driven-dissipative resonator / Q-TLS relations.

Rate convention
---------------
Every energy relaxation rate (``gamma_ext``, ``gamma_int_bg``, ``gamma1``,
partial loss rates) is the angular quantity ``2*pi*f/Q`` expressed in s^-1.
Frequencies, detunings and couplings ``g`` are ordinary frequencies in Hz.
With that convention the expressions below are used exactly as written in the
literature for the two-tone hanger experiment: e.g. a resonator at 5.58 GHz
with ``Q_ext = 6.0e4`` has ``gamma_ext = 5.84e5``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import constants

from .errors import InvalidInputError

PLANCK = constants.h
BOLTZMANN = constants.k
EPS0 = constants.epsilon_0
ELEMENTARY_CHARGE = constants.e

#: minimum |pump detuning| that keeps the pump outside the S21 sweep
MIN_PUMP_DETUNING_HZ = 1e6


def dbm_to_watts(p_dbm):
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


@dataclass(frozen=True)
class ResonatorModel:
    """Unperturbed resonator.

    Attributes
    ----------
    f_r_tilde : float
        Unperturbed resonance frequency (Hz).
    gamma_ext : float
        External (coupling) energy relaxation rate, s^-1.
    gamma_int_bg : float
        Internal loss rate from everything except Q-TLSs, s^-1.
    temperature : float
        Sample temperature (K); 0 disables thermal de-weighting.
    """

    f_r_tilde: float
    gamma_ext: float
    gamma_int_bg: float
    temperature: float = 0.0

    def __post_init__(self):
        if not self.f_r_tilde > 0:
            raise InvalidInputError("f_r_tilde must be > 0")
        if not self.gamma_ext > 0:
            raise InvalidInputError("gamma_ext must be > 0")
        if not self.gamma_int_bg >= 0:
            raise InvalidInputError("gamma_int_bg must be >= 0")
        if not self.temperature >= 0:
            raise InvalidInputError("temperature must be >= 0")


@dataclass(frozen=True)
class TTls:
    """Thermal TLS that dresses one Q-TLS.

    ``delta_f_shift`` is the magnitude of the frequency kick (Hz); the sign
    follows the telegraph state. ``occupancy_bias`` is the stationary
    probability of the ``-1`` state.
    """

    delta_f_shift: float
    gamma_switch: float
    occupancy_bias: float = 0.5

    def __post_init__(self):
        if not self.gamma_switch > 0:
            raise InvalidInputError("gamma_switch must be > 0")
        if not 0.0 <= self.occupancy_bias <= 1.0:
            raise InvalidInputError("occupancy_bias must lie in [0, 1]")


@dataclass(frozen=True)
class QTls:
    """Quantum TLS coupled to the resonator."""

    f_tilde: float
    g: float
    gamma1: float
    ttls: tuple[TTls, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.f_tilde > 0:
            raise InvalidInputError("f_tilde must be > 0")
        if not self.g >= 0:
            raise InvalidInputError("g must be >= 0")
        if not self.gamma1 > 0:
            raise InvalidInputError("gamma1 must be > 0")
        object.__setattr__(self, "ttls", tuple(self.ttls))

    @property
    def n_s(self) -> float:
        return saturation_photon_number(self.g, self.gamma1)


@dataclass(frozen=True)
class DriveContext:
    """One coherent tone populating the resonator."""

    mean_n: float
    f_p: float

    def __post_init__(self):
        if not self.mean_n >= 0:
            raise InvalidInputError("mean_n must be >= 0")
        if not self.f_p > 0:
            raise InvalidInputError("f_p must be > 0")


@dataclass(frozen=True)
class PumpSetting:
    """Pump state for one slot of the cycled measurement.

    ``detuning`` is ``f_r_tilde - f_p`` in Hz. Power is specified at the
    microwave source and referred to the sample through ``attenuation_db``.
    """

    state: str = "off"
    source_dbm: float | None = None
    detuning: float = 0.0
    attenuation_db: float = 89.0

    def __post_init__(self):
        if self.state not in ("on", "off"):
            raise InvalidInputError(f"state must be 'on' or 'off', got {self.state!r}")
        if self.state == "on":
            if self.source_dbm is None:
                raise InvalidInputError("an 'on' pump needs source_dbm")
            if abs(self.detuning) < MIN_PUMP_DETUNING_HZ:
                raise InvalidInputError(
                    f"|detuning| must be >= {MIN_PUMP_DETUNING_HZ:g} Hz when the pump is on"
                )

    @property
    def power_at_sample(self) -> float:
        """Pump power at the sample in watts (0 when off)."""
        if self.state == "off":
            return 0.0
        return float(dbm_to_watts(self.source_dbm - self.attenuation_db))

    def f_p(self, f_r_tilde: float) -> float:
        return f_r_tilde - self.detuning

    @property
    def label(self) -> str:
        if self.state == "off":
            return "off"
        return f"{self.source_dbm:g}dBm_{self.detuning / 1e6:+g}MHz"


def photon_flux(power_at_sample, f_p):
    """Transmission-line photon flux ``P / (h f)`` in photons per second."""
    f_p = np.asarray(f_p, dtype=float)
    power = np.asarray(power_at_sample, dtype=float)
    if np.any(f_p <= 0):
        raise InvalidInputError("frequency must be > 0")
    if np.any(power < 0):
        raise InvalidInputError("power must be >= 0")
    out = power / (PLANCK * f_p)
    return float(out) if out.ndim == 0 else out


def mean_photon_number(flux, gamma_ext, gamma_tot, detuning):
    """Steady-state intraresonator photon number of a hanger resonator.

    ``<n> = 2 flux gamma_ext / (16 pi^2 detuning^2 + gamma_tot^2)``
    """
    gamma_tot = np.asarray(gamma_tot, dtype=float)
    if np.any(gamma_tot <= 0):
        raise InvalidInputError("gamma_tot must be > 0")
    if np.any(np.asarray(flux) < 0) or np.any(np.asarray(gamma_ext) < 0):
        raise InvalidInputError("flux and gamma_ext must be >= 0")
    detuning = np.asarray(detuning, dtype=float)
    out = 2.0 * flux * gamma_ext / (16.0 * np.pi**2 * detuning**2 + gamma_tot**2)
    return float(out) if np.ndim(out) == 0 else out


def saturation_photon_number(g, gamma1):
    """``n_s = gamma1^2 / (32 pi^2 g^2)``; infinite for an uncoupled TLS."""
    g = np.asarray(g, dtype=float)
    gamma1 = np.asarray(gamma1, dtype=float)
    with np.errstate(divide="ignore"):
        out = gamma1**2 / (32.0 * np.pi**2 * g**2)
    return float(out) if out.ndim == 0 else out


def thermal_factor(f, temperature):
    """Equilibrium population difference ``tanh(h f / 2 k_B T)`` (1 at T = 0)."""
    f = np.asarray(f, dtype=float)
    if temperature <= 0:
        return np.ones_like(f) if f.ndim else 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out = np.tanh(PLANCK * f / (2.0 * BOLTZMANN * temperature))
    return float(out) if out.ndim == 0 else out


def _as_tones(ctx) -> tuple[DriveContext, ...]:
    if isinstance(ctx, DriveContext):
        return (ctx,)
    return tuple(ctx)


def sigma_z0_array(f_k, g, gamma1, tones: Sequence[DriveContext], temperature=0.0,
                   thermal=True):
    """Vectorised stationary Q-TLS population.

    For a single tone this is the standard saturation law

        sigma = gamma1^2 (n/n_s) / (16 pi^2 D^2 + gamma1^2 (1 + n/n_s)) - 1,

    with ``D = f_k - f_p``, rewritten as ``-1 / (1 + s)`` where
    ``s = gamma1^2 (n/n_s) / (16 pi^2 D^2 + gamma1^2)``. Several well separated
    tones add their saturation parameters ``s``.
    """
    f_k = np.asarray(f_k, dtype=float)
    g2 = np.asarray(g, dtype=float) ** 2
    gamma1 = np.asarray(gamma1, dtype=float)
    g1sq = gamma1**2
    n_s = saturation_photon_number(g, gamma1)
    s = 0.0
    for tone in _as_tones(tones):
        if tone.mean_n == 0:
            continue
        d = f_k - tone.f_p
        # ratio form keeps sigma(D = 0, n = n_s) = -1/2 exact in floating point
        s = s + (tone.mean_n / n_s) * (g1sq / (16.0 * np.pi**2 * d * d + g1sq))
    sigma = -1.0 / (1.0 + s)
    if thermal and temperature > 0:
        sigma = sigma * thermal_factor(f_k, temperature)
    shape = np.broadcast_shapes(f_k.shape, g2.shape, g1sq.shape)
    if shape == ():
        return float(sigma)
    return np.broadcast_to(sigma, shape)


def kappa_array(f_k, g, gamma1, sigma, f_r_tilde):
    """Partial internal loss rate of each Q-TLS (s^-1), always >= 0."""
    d = f_r_tilde - np.asarray(f_k, dtype=float)
    gamma1 = np.asarray(gamma1, dtype=float)
    return -np.asarray(sigma) * (16.0 * np.pi**2 * np.asarray(g, dtype=float) ** 2 * gamma1) / (
        16.0 * np.pi**2 * d * d + gamma1**2
    )


def freq_shift_array(f_k, g, gamma1, sigma, f_r_tilde):
    """Partial resonance-frequency shift of each Q-TLS (Hz).

    ``2 pi df = sigma 16 pi^2 g^2 D / (16 pi^2 D^2 + gamma1^2)`` with
    ``D = f_r_tilde - f_k``.
    """
    d = f_r_tilde - np.asarray(f_k, dtype=float)
    gamma1 = np.asarray(gamma1, dtype=float)
    return np.asarray(sigma) * (8.0 * np.pi * np.asarray(g, dtype=float) ** 2 * d) / (
        16.0 * np.pi**2 * d * d + gamma1**2
    )


def sigma_z0(q: QTls, ctx, temperature: float = 0.0, thermal: bool = True,
             f_k: float | None = None) -> float:
    """Stationary population of one Q-TLS under the drive ``ctx``.

    ``ctx`` is a :class:`DriveContext` or a sequence of them. ``f_k`` is the
    instantaneous Q-TLS frequency; it defaults to ``q.f_tilde``.
    """
    f = q.f_tilde if f_k is None else f_k
    return float(sigma_z0_array(f, q.g, q.gamma1, _as_tones(ctx), temperature, thermal))


def _check_sigma(sigma):
    if not -1.0 - 1e-12 <= sigma <= 0.0:
        raise InvalidInputError(f"sigma must lie in [-1, 0], got {sigma!r}")


def kappa_partial(q: QTls, sigma: float, f_r_tilde: float, f_k: float | None = None) -> float:
    _check_sigma(sigma)
    f = q.f_tilde if f_k is None else f_k
    return float(kappa_array(f, q.g, q.gamma1, sigma, f_r_tilde))


def freq_shift_partial(q: QTls, sigma: float, f_r_tilde: float,
                       f_k: float | None = None) -> float:
    _check_sigma(sigma)
    f = q.f_tilde if f_k is None else f_k
    return float(freq_shift_array(f, q.g, q.gamma1, sigma, f_r_tilde))


def aggregate(resonator: ResonatorModel, partials: Iterable[tuple[float, float]]):
    """Sum partial contributions in index order.

    Returns ``(gamma_int, f_r)``.
    """
    kappas = []
    shifts = []
    for kappa, shift in partials:
        if kappa < 0:
            raise InvalidInputError("partial loss rates must be >= 0")
        kappas.append(kappa)
        shifts.append(shift)
    total_kappa = 0.0
    total_shift = 0.0
    for kappa, shift in zip(kappas, shifts):
        total_kappa += kappa
        total_shift += shift
    return resonator.gamma_int_bg + total_kappa, resonator.f_r_tilde + total_shift


def drive_tones(resonator: ResonatorModel, setting: PumpSetting, probe_power_w: float,
                gamma_int: float | None = None, include_probe: bool = True):
    """Tones populating the resonator for one pump setting.

    The probe always sits on resonance. ``gamma_int`` enters the total
    linewidth; by default the background ``gamma_int_bg`` is used because the
    Q-TLS loss is not known before the simulation runs.
    """
    g_int = resonator.gamma_int_bg if gamma_int is None else gamma_int
    gamma_tot = resonator.gamma_ext + g_int
    tones = []
    if include_probe or setting.state == "off":
        f_pr = resonator.f_r_tilde
        n_pr = mean_photon_number(photon_flux(probe_power_w, f_pr), resonator.gamma_ext,
                                  gamma_tot, 0.0)
        tones.append(DriveContext(n_pr, f_pr))
    if setting.state == "on":
        f_p = setting.f_p(resonator.f_r_tilde)
        n_p = mean_photon_number(photon_flux(setting.power_at_sample, f_p),
                                 resonator.gamma_ext, gamma_tot, setting.detuning)
        tones.append(DriveContext(n_p, f_p))
    return tuple(tones)
