"""Echo-decay fitting ``M(tau) = M0 exp(-2 tau / T2)``."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares


class DecayFitError(ValueError):
    """Data cannot determine both parameters of the decay."""


@dataclass(frozen=True)
class DecayFit:
    M0: float
    T2_us: float
    residual: float  # root-mean-square residual, same units as the amplitude
    n_points: int

    def to_dict(self) -> dict:
        return {"M0": self.M0, "T2_us": self.T2_us, "residual": self.residual, "n_points": self.n_points}


def fit_decay(tau_us, amplitude) -> DecayFit:
    """Least-squares fit of a two-parameter echo decay.

    Parameters
    ----------
    tau_us : array_like
        Inter-pulse delays in microseconds, non-negative; the echo is
        collected at ``2 tau``.
    amplitude : array_like
        Echo amplitudes (any units).

    Raises
    ------
    DecayFitError
        Fewer than three points, negative or all-equal delays, or data with
        no resolvable decay (``T2`` unbounded).
    """
    tau = np.asarray(tau_us, dtype=float).ravel()
    y = np.asarray(amplitude, dtype=float).ravel()
    if tau.shape != y.shape:
        raise DecayFitError("tau and amplitude must have the same length")
    if tau.size < 3:
        raise DecayFitError(f"need at least 3 points, got {tau.size}")
    if np.any(tau < 0) or not np.all(np.isfinite(tau)) or not np.all(np.isfinite(y)):
        raise DecayFitError("delays must be finite and non-negative; amplitudes finite")
    span = np.ptp(tau)
    if span == 0:
        raise DecayFitError("all delays are equal; the decay rate is undetermined")

    # log-linear start on the positive points, rate k = 2 / T2
    pos = y > 0
    if pos.sum() >= 2 and np.ptp(tau[pos]) > 0:
        slope, icpt = np.polyfit(tau[pos], np.log(y[pos]), 1)
        k0, m0 = max(-slope, 1e-3 / span), float(np.exp(icpt))
    else:
        k0, m0 = 1.0 / span, float(np.max(np.abs(y)) or 1.0)

    def resid(p):
        return p[0] * np.exp(-p[1] * tau) - y

    sol = least_squares(resid, [m0, k0], bounds=([-np.inf, 0.0], [np.inf, np.inf]), x_scale=[abs(m0) or 1.0, k0], method="trf")
    M0, k = sol.x
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    # the fitted drop over the delay range must stand out from the residuals
    drop = abs(M0) * -np.expm1(-k * span) if np.isfinite(k) else 0.0
    if not np.isfinite(k) or drop <= max(3 * rms, 1e-9 * abs(M0)):
        raise DecayFitError(
            f"no decay resolved over {span:g} us (fitted rate {k:.3g}/us): T2 is unbounded; "
            "extend the delay range or check the data"
        )
    return DecayFit(float(M0), float(2.0 / k), rms, int(tau.size))


def read_decay_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Columns ``tau_us`` and ``amplitude`` (header required)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(row for row in fh if not row.startswith("#")))
    if not rows or "tau_us" not in rows[0] or "amplitude" not in rows[0]:
        raise DecayFitError(f"{path}: need columns tau_us and amplitude")
    return np.array([float(r["tau_us"]) for r in rows]), np.array([float(r["amplitude"]) for r in rows])
