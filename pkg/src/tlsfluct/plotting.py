"""Static SVG figures: PSDs with fitted curves, time-series strips, fits."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectral import noise_model  # noqa: E402

plt.rcParams["svg.hashsalt"] = "tlsfluct"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_psd(path, psd, fit=None, title=""):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(psd.f, psd.power, ".", ms=4, label="PSD")
    if fit is not None:
        ff = np.geomspace(psd.f[0], psd.f[-1], 200)
        ax.loglog(ff, noise_model(ff, fit.h0, fit.h_minus1, fit.h_minus2), "-", label="fit")
    ax.set_xlabel("f (Hz)")
    ax.set_ylabel("S (1/Hz)")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_series(path, t, series, labels, ylabel):
    fig, axes = plt.subplots(len(series), 1, figsize=(7, 1.6 * len(series) + 0.6), sharex=True,
                             squeeze=False)
    for ax, y, lab in zip(axes[:, 0], series, labels):
        ax.plot(np.asarray(t) / 3600.0, y, lw=0.6)
        ax.set_ylabel(lab, fontsize=7)
    axes[-1, 0].set_xlabel("t (h)")
    fig.suptitle(ylabel)
    fig.tight_layout()
    _save(fig, path)


def plot_s21(path, trace, model_values):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    a1.plot(trace.f, np.abs(trace.s21), ".", ms=3)
    a1.plot(trace.f, np.abs(model_values), "-")
    a1.set_xlabel("f (Hz)")
    a1.set_ylabel("|S21|")
    a2.plot(trace.s21.real, trace.s21.imag, ".", ms=3)
    a2.plot(model_values.real, model_values.imag, "-")
    a2.set_xlabel("Re S21")
    a2.set_ylabel("Im S21")
    a2.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    _save(fig, path)


def plot_scurve(path, n, q, n_model, q_model):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(np.where(n > 0, n, np.nan), q, "o", ms=4)
    ax.semilogx(n_model, q_model, "-")
    ax.set_xlabel("<n>")
    ax.set_ylabel("Q_int")
    fig.tight_layout()
    _save(fig, path)
