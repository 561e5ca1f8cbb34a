"""Gradient ascent pulse engineering on piecewise-constant controls.

Control amplitudes are in gauss; control operators are passed in rad/ns per
tesla (the drive operators of :mod:`quditbell.model`) and scaled internally.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .model import GAUSS, HamiltonianModel
from .pulses import ControlBlock, PulseSequence

__all__ = [
    "GrapeConfig",
    "GrapeProblem",
    "GrapeResult",
    "grape_fidelity",
    "grape_forward",
    "grape_gradient",
    "grape_optimize",
    "problem_from_model",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GrapeProblem:
    """Piecewise-constant control problem.

    Parameters
    ----------
    H0 : (d, d) drift in rad/ns.
    controls : sequence of (d, d) Hermitian operators in rad/ns per tesla.
    N : number of segments.
    T : total time in ns.
    amp_bounds : per-control ``(min, max)`` in gauss.
    target : (d_sub, d_sub) unitary on the computational subspace.
    subspace : indices of the computational subspace (default: all levels).
    drift_frame : compare against ``exp(-i H0 T) target`` instead of
        ``target``, so the target is understood in the drift interaction
        picture. Requires the subspace to be invariant under ``H0``.
    """

    H0: np.ndarray
    controls: tuple
    N: int
    T: float
    amp_bounds: tuple
    target: np.ndarray
    subspace: np.ndarray | None = None
    drift_frame: bool = True
    _W: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        H0 = np.asarray(self.H0, dtype=complex)
        d = H0.shape[0]
        if np.max(np.abs(H0 - H0.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(H0))):
            raise ValueError("drift is not Hermitian")
        ctrls = tuple(np.asarray(c, dtype=complex) for c in self.controls)
        if not ctrls:
            raise ValueError("need at least one control operator")
        for c in ctrls:
            if c.shape != (d, d) or np.max(np.abs(c - c.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(c))):
                raise ValueError("control operators must be Hermitian and match the drift")
        if int(self.N) < 1 or not self.T > 0:
            raise ValueError("need N >= 1 and T > 0")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.amp_bounds)
        if len(bounds) != len(ctrls) or any(not (np.isfinite(lo) and np.isfinite(hi) and lo < hi) for lo, hi in bounds):
            raise ValueError("need one finite (min, max) bound per control")
        sub = np.arange(d) if self.subspace is None else np.asarray(self.subspace, dtype=int)
        tgt = np.asarray(self.target, dtype=complex)
        n = len(sub)
        if tgt.shape != (n, n) or np.max(np.abs(tgt.conj().T @ tgt - np.eye(n))) > 1e-10:
            raise ValueError("target must be unitary on the subspace")
        W = np.zeros((d, d), dtype=complex)
        if self.drift_frame:
            w, v = np.linalg.eigh(H0)
            drift = (v * np.exp(-1j * w * self.T)) @ v.conj().T
            block = drift[np.ix_(sub, sub)]
            if np.max(np.abs(block.conj().T @ block - np.eye(n))) > 1e-8:
                raise ValueError("subspace is not invariant under the drift; use drift_frame=False")
            W[np.ix_(sub, sub)] = block @ tgt
        else:
            W[np.ix_(sub, sub)] = tgt
        object.__setattr__(self, "H0", H0)
        object.__setattr__(self, "controls", ctrls)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "amp_bounds", bounds)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "subspace", sub)
        object.__setattr__(self, "_W", W)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nyquist_mhz(self) -> float:
        """Bandwidth limit of the piecewise-constant grid."""
        return 0.5 / self.dt * 1e3

    def hamiltonians(self, amplitudes: np.ndarray) -> np.ndarray:
        amps = self._check(amplitudes)
        C = np.stack(self.controls) * GAUSS
        return self.H0[None] + np.einsum("nk,kij->nij", amps, C)

    def _check(self, amplitudes) -> np.ndarray:
        a = np.asarray(amplitudes, dtype=float)
        if a.shape != (self.N, self.n_controls):
            raise ValueError(f"amplitudes have shape {a.shape}, expected {(self.N, self.n_controls)}")
        return a


def problem_from_model(
    model: HamiltonianModel,
    target: np.ndarray,
    subspace: Sequence[int],
    N: int = 1600,
    T: float = 1000.0,
    max_amp: float = 75.0,
    axes: Sequence[str] = ("y",),
) -> GrapeProblem:
    """GRAPE problem in the dressed eigenbasis of a model (diagonal drift)."""
    return GrapeProblem(
        H0=np.diag(model.energies).astype(complex),
        controls=tuple(model.drive_eigen(a) for a in axes),
        N=N,
        T=T,
        amp_bounds=tuple((-max_amp, max_amp) for _ in axes),
        target=target,
        subspace=np.asarray(subspace),
    )


def _segments(problem: GrapeProblem, amplitudes):
    H = problem.hamiltonians(amplitudes)
    w, v = np.linalg.eigh(H)
    ph = np.exp(-1j * w * problem.dt)
    U = (v * ph[:, None, :]) @ v.conj().transpose(0, 2, 1)
    return U, w, v, ph


def grape_forward(problem: GrapeProblem, amplitudes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total propagator ``U(T)`` and the per-segment propagators (time order)."""
    U, *_ = _segments(problem, amplitudes)
    total = np.eye(problem.dim, dtype=complex)
    for Uj in U:
        total = Uj @ total
    return total, U


def _overlap(problem: GrapeProblem, U_T: np.ndarray) -> complex:
    return complex(np.vdot(problem._W, U_T))  # Tr(W^dag U)


def grape_fidelity(U_T: np.ndarray, problem: GrapeProblem) -> float:
    """``|Tr(P W^dag U P)|^2 / d_sub^2`` (phase insensitive)."""
    n = len(problem.subspace)
    return abs(_overlap(problem, np.asarray(U_T))) ** 2 / n**2


def _fid_and_grad(problem: GrapeProblem, amplitudes) -> tuple[float, np.ndarray]:
    U, w, v, ph = _segments(problem, amplitudes)
    N, d = problem.N, problem.dim
    fwd = np.empty((N + 1, d, d), dtype=complex)  # fwd[j] = U_{j-1} ... U_0
    fwd[0] = np.eye(d)
    for j in range(N):
        fwd[j + 1] = U[j] @ fwd[j]
    bwd = np.empty((N + 1, d, d), dtype=complex)  # bwd[j] = W^dag U_{N-1} ... U_j
    bwd[N] = problem._W.conj().T
    for j in range(N - 1, -1, -1):
        bwd[j] = bwd[j + 1] @ U[j]
    g = np.trace(bwd[0])
    n = len(problem.subspace)
    # Frechet derivative of exp(-i H dt) in the eigenbasis of H
    dw = w[:, :, None] - w[:, None, :]
    dph = ph[:, :, None] - ph[:, None, :]
    same = np.abs(dw) < 1e-10
    phi = np.where(same, -1j * problem.dt * ph[:, :, None], dph / np.where(same, 1.0, dw))
    # dg/dc = Tr(bwd[j+1] dU_j fwd[j]) = sum_ab (V^dag M V)_ba phi_ab (V^dag X V)_ab
    M = fwd[:N] @ bwd[1:]
    vh = v.conj().transpose(0, 2, 1)
    Mt = vh @ M @ v
    grad = np.empty((N, problem.n_controls))
    for k, C in enumerate(problem.controls):
        X = vh @ (C * GAUSS) @ v
        dg = np.sum(Mt.transpose(0, 2, 1) * phi * X, axis=(1, 2))
        grad[:, k] = 2 * np.real(np.conj(g) * dg) / n**2
    return abs(g) ** 2 / n**2, grad


def grape_gradient(problem: GrapeProblem, amplitudes: np.ndarray) -> np.ndarray:
    """Exact gradient of the fidelity with respect to every amplitude (per gauss)."""
    return _fid_and_grad(problem, amplitudes)[1]


@dataclass(frozen=True)
class GrapeConfig:
    """Optimizer settings.

    ``restarts`` extra seeded runs are tried when a run ends below
    ``accept_fidelity``; ``init_amplitude`` is the half-width (gauss) of the
    uniform random start.
    """

    max_iter: int = 2000
    fidelity_target: float = 0.9999
    gtol: float = 1e-10
    seed: int = 0
    init_amplitude: float = 1.0
    restarts: int = 5
    accept_fidelity: float = 0.99


@dataclass
class GrapeResult:
    amplitudes: np.ndarray
    fidelity: float
    trace: list = field(default_factory=list)
    seed: int | None = None
    converged: bool = False
    message: str = ""
    dt: float = 0.0
    attempts: int = 1

    def to_block(self, axes: Sequence[str] = ("y",), t_start: float = 0.0) -> ControlBlock:
        return ControlBlock(self.amplitudes, self.dt, t_start, tuple(axes), note=f"grape F={self.fidelity:.6f}")

    def to_sequence(self, axes: Sequence[str] = ("y",)) -> PulseSequence:
        return PulseSequence((self.to_block(axes),))

    def to_csv(self, path: str | Path) -> None:
        """Segment index, start time (ns) and amplitude per control (gauss)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["segment", "t_ns"] + [f"c{k}_G" for k in range(self.amplitudes.shape[1])])
            for j, row in enumerate(self.amplitudes):
                w.writerow([j, repr(j * self.dt)] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "GrapeResult":
        rows = list(csv.reader(open(path)))[1:]
        amps = np.array([[float(x) for x in r[2:]] for r in rows])
        dt = float(rows[1][1]) if len(rows) > 1 else 0.0
        return cls(amps, float("nan"), dt=dt)


def _single_run(problem: GrapeProblem, init: np.ndarray, config: GrapeConfig) -> GrapeResult:
    lo = np.array([b[0] for b in problem.amp_bounds])
    hi = np.array([b[1] for b in problem.amp_bounds])
    x0 = np.clip(problem._check(init), lo, hi)
    shape = x0.shape
    bounds = list(zip(np.broadcast_to(lo, shape).ravel(), np.broadcast_to(hi, shape).ravel()))
    trace: list[float] = []
    best = {"f": -1.0, "x": x0.ravel().copy()}

    def fun(x):
        f, g = _fid_and_grad(problem, x.reshape(shape))
        if f > best["f"]:
            best["f"], best["x"] = f, x.copy()
        return 1.0 - f, -g.ravel()

    def callback(intermediate_result):
        f = 1.0 - float(intermediate_result.fun)
        trace.append(f)
        if f >= config.fidelity_target:
            raise StopIteration

    f0 = 1.0 - fun(x0.ravel())[0]
    trace.append(f0)
    if f0 >= config.fidelity_target:
        return GrapeResult(x0, f0, trace, converged=True, message="initial point meets target", dt=problem.dt)
    res = minimize(
        fun,
        x0.ravel(),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxiter": config.max_iter, "gtol": config.gtol, "ftol": 1e-15, "maxcor": 20},
    )
    x = np.clip(best["x"].reshape(shape), lo, hi)
    f = 1.0 - fun(x.ravel())[0]
    return GrapeResult(x, f, trace, converged=f >= config.fidelity_target, message=str(res.message), dt=problem.dt)


def grape_optimize(problem: GrapeProblem, init: np.ndarray | None = None, config: GrapeConfig = GrapeConfig()) -> GrapeResult:
    """Maximize the process fidelity within the amplitude bounds.

    With ``init=None`` the start is uniform in ``+-init_amplitude`` gauss from
    ``config.seed``; if the run ends below ``accept_fidelity`` up to
    ``config.restarts`` further seeds are tried and the best run is returned.
    Non-convergence is reported in the result, never raised.
    """
    if init is not None:
        res = _single_run(problem, init, config)
        res.seed = None
        return res
    best = None
    for attempt in range(config.restarts + 1):
        seed = config.seed + attempt
        rng = np.random.default_rng(seed)
        x0 = rng.uniform(-config.init_amplitude, config.init_amplitude, (problem.N, problem.n_controls))
        res = _single_run(problem, x0, config)
        res.seed = seed
        res.attempts = attempt + 1
        log.info("grape seed %d: F=%.6f (%s)", seed, res.fidelity, res.message)
        if best is None or res.fidelity > best.fidelity:
            best = res
        if res.fidelity >= config.accept_fidelity:
            break
    best.attempts = attempt + 1
    return best
