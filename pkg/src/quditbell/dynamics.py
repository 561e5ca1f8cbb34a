"""Unitary and Lindblad time evolution for pulse sequences.

States passed to and returned by :func:`lindblad_propagate` are density
matrices in the dressed eigenbasis of the drift Hamiltonian, in the
interaction picture (``rho_I(t) = e^{iH0 t} rho(t) e^{-iH0 t}``) with the
clock of the sequence starting at zero. Ideal gates are therefore plain
matrices on these states and free evolution is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .model import GAUSS, HamiltonianModel
from .pulses import ControlBlock, PulseSegment, PulseSequence

__all__ = [
    "LindbladModel",
    "PropagationConfig",
    "RotatingFrameGenerator",
    "SubstepTooCoarseError",
    "dephasing_jumps",
    "eigen_to_lab",
    "expm_hermitian",
    "lab_to_eigen",
    "lindblad_propagate",
    "propagate_unitary",
    "rotating_frame_segment",
]


class SubstepTooCoarseError(ValueError):
    """Lab-frame substep exceeds 1/(20 f_max)."""


def expm_hermitian(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H`` via eigendecomposition."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def propagate_unitary(H_segments: Sequence[tuple[np.ndarray, float]]) -> np.ndarray:
    """Time-ordered product ``prod_j exp(-i H_j dt_j)`` (first segment rightmost)."""
    U = None
    for H, dt in H_segments:
        H = np.asarray(H, dtype=complex)
        if dt <= 0:
            raise ValueError("segment durations must be positive")
        if np.max(np.abs(H - H.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(H))):
            raise ValueError("segment Hamiltonian is not Hermitian")
        step = expm_hermitian((H + H.conj().T) / 2, dt)
        U = step if U is None else step @ U
    if U is None:
        raise ValueError("no segments given")
    return U


def dephasing_jumps(system, T2: Sequence[float | None]) -> list[tuple[np.ndarray, float]]:
    """Pure-dephasing jump operators ``sqrt(2/T2) S_z`` per site.

    Parameters
    ----------
    system : SpinSystem
    T2 : sequence
        Coherence time per site in ns; ``None`` or ``inf`` disables the site.

    Returns
    -------
    list of (operator, rate)
        ``rate * D[operator]`` with ``rate = 2/T2``, so a spin-1/2 coherence
        decays as ``exp(-t/T2)`` and ``Delta m`` coherences as
        ``exp(-Delta m^2 t / T2)``.
    """
    if len(T2) != system.n_sites:
        raise ValueError("need one T2 per site")
    out = []
    for site, t2 in enumerate(T2):
        if t2 is None or math.isinf(t2):
            continue
        if t2 <= 0:
            raise ValueError("T2 must be positive")
        out.append((system.operators(site)[2], 2.0 / t2))
    return out


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Drift, drives and Hermitian jump operators.

    ``jumps`` holds ``(L, rate)`` pairs in the product basis; the dissipator
    is ``rate (L rho L - {L^2, rho}/2)``.
    """

    model: HamiltonianModel
    jumps: tuple = ()

    def __post_init__(self):
        jumps = []
        for op, rate in self.jumps:
            op = np.asarray(op, dtype=complex)
            if rate < 0:
                raise ValueError("dephasing rates must be non-negative")
            if np.max(np.abs(op - op.conj().T)) > 1e-12:
                raise ValueError("jump operators must be Hermitian (pure dephasing)")
            jumps.append((op, float(rate)))
        object.__setattr__(self, "jumps", tuple(jumps))

    @classmethod
    def with_t2(cls, model: HamiltonianModel, T2_ns: Sequence[float | None]) -> "LindbladModel":
        return cls(model, tuple(dephasing_jumps(model.system, T2_ns)))

    @property
    def has_dissipation(self) -> bool:
        return any(r > 0 for _, r in self.jumps)

    def _rates(self, diag_values: list[np.ndarray]) -> np.ndarray:
        d = self.model.dim
        g = np.zeros((d, d))
        for (_, rate), l in zip(self.jumps, diag_values):
            g += 0.5 * rate * (l[:, None] - l[None, :]) ** 2
        return g

    def secular_rates(self) -> np.ndarray:
        """Coherence decay rates ``gamma_ab`` in the dressed eigenbasis (secular part)."""
        V = self.model.vectors
        vals = [np.real(np.einsum("ia,ij,ja->a", V.conj(), op, V)) for op, _ in self.jumps]
        return self._rates(vals)

    def product_rates(self) -> np.ndarray:
        """Coherence decay rates in the product basis (jump operators must be diagonal there)."""
        for op, _ in self.jumps:
            if np.max(np.abs(op - np.diag(np.diag(op)))) > 1e-12:
                raise NotImplementedError("lab-frame propagation supports jump operators diagonal in the product basis")
        return self._rates([np.real(np.diag(op)) for op, _ in self.jumps])


@dataclass(frozen=True)
class PropagationConfig:
    """Propagation engine settings.

    Attributes
    ----------
    mode : "rotating-wave" or "lab".
    substep : lab-frame step in ns; ``None`` picks ``1/(20 f_max)``.
    detuning_cutoff : rotating-wave couplings with ``|omega_ab - omega_drive|``
        above this (rad/ns) are dropped; ``None`` keeps every pair closer to
        the carrier than half the carrier frequency.
    integrator_order : splitting order of the lab-frame dephasing step (2 = Strang).
    second_order_shifts : add AC Stark and Bloch-Siegert shifts from the
        couplings the rotating-wave generator leaves out.
    phase_reference : "pulse" (default) restarts the clock whenever a pulse
        begins, as if every transition were phase tracked at each pulse
        onset; "sequence" keeps one clock, so couplings detuned by ``delta``
        pick up ``delta * t_start``.
    max_superop_dim : largest superoperator block exponentiated directly;
        larger blocks use symmetric splitting (see ``RotatingFrameGenerator``).
    """

    mode: str = "rotating-wave"
    substep: float | None = None
    detuning_cutoff: float | None = None
    integrator_order: int = 2
    second_order_shifts: bool = False
    phase_reference: str = "pulse"
    max_superop_dim: int = 256

    def __post_init__(self):
        if self.mode not in ("rotating-wave", "lab"):
            raise ValueError(f"unknown propagation mode {self.mode!r}")
        if self.substep is not None and self.substep <= 0:
            raise ValueError("substep must be positive")
        if self.phase_reference not in ("sequence", "pulse"):
            raise ValueError(f"unknown phase reference {self.phase_reference!r}")
        if self.integrator_order != 2:
            raise ValueError("only the second-order (Strang) integrator is implemented")


def eigen_to_lab(model: HamiltonianModel, rho_I: np.ndarray, t: float) -> np.ndarray:
    """Interaction-picture eigenbasis state to the lab-frame product basis at time t."""
    ph = np.exp(-1j * model.energies * t)
    rho = ph[:, None] * rho_I * ph.conj()[None, :]
    return model.vectors @ rho @ model.vectors.conj().T


def lab_to_eigen(model: HamiltonianModel, rho: np.ndarray, t: float) -> np.ndarray:
    rho_e = model.vectors.conj().T @ rho @ model.vectors
    ph = np.exp(1j * model.energies * t)
    return ph[:, None] * rho_e * ph.conj()[None, :]


# ---------------------------------------------------------------------------
# rotating-wave generator


@dataclass(frozen=True, eq=False)
class RotatingFrameGenerator:
    """Static rotating-frame generator for an interval with fixed carriers.

    ``H = diag(eps) + G`` in the eigenbasis, valid in the frame
    ``rho_I = F_t(rho_R)`` with ``F_t(X)_ab = X_ab e^{i (eps_a - eps_b) t}``.
    ``components`` lists the level sets that the couplings connect.
    """

    eps: np.ndarray
    G: np.ndarray
    components: tuple
    dropped_edges: int = 0
    shift: np.ndarray | None = None

    @property
    def H(self) -> np.ndarray:
        diag = self.eps if self.shift is None else self.eps + self.shift
        return np.diag(diag) + self.G

    def frame(self, t: float) -> np.ndarray:
        """Elementwise phase factors ``e^{i (eps_a - eps_b) t}``."""
        p = np.exp(1j * self.eps * t)
        return p[:, None] * p.conj()[None, :]

    def superoperator(
        self, rates: np.ndarray, tau: float, max_block: int = 256, split_tol: float = 0.02
    ) -> Callable[[np.ndarray], np.ndarray]:
        """Map ``rho_R(t0) -> rho_R(t0 + tau)`` including secular dephasing.

        The Lindbladian is block diagonal over pairs of coupled components; each
        block is exponentiated once (scaling and squaring). When a block would
        exceed ``max_block`` (superoperator dimension) the map is built by
        symmetric splitting instead: dephasing commutes with ``diag(eps)``, so
        steps with ``dt * ||G|| <= split_tol`` leave an error of order
        ``tau * gamma * split_tol**2``.
        """
        H = self.H
        big = max(len(c) for c in self.components) ** 2 > max_block
        if big and np.any(rates > 0):
            gnorm = np.linalg.norm(self.G, 2)
            n = max(1, math.ceil(tau * gnorm / split_tol))
            dt = tau / n
            U = expm_hermitian(H, dt)
            Ud = U.conj().T
            h = np.exp(-rates * dt / 2)

            def split(rho: np.ndarray) -> np.ndarray:
                for _ in range(n):
                    rho = h * (U @ (h * rho) @ Ud)
                return rho

            return split
        blocks = []
        comps = [np.asarray(c) for c in self.components]
        unitary = {}
        if not np.any(rates > 0):
            for c in comps:
                unitary[id(c)] = expm_hermitian(H[np.ix_(c, c)], tau)
            pairs = [(ci, cj, None) for ci in comps for cj in comps]
            for ci, cj, _ in pairs:
                blocks.append((ci, cj, ("u", unitary[id(ci)], unitary[id(cj)])))
        else:
            for ci in comps:
                Hi = H[np.ix_(ci, ci)]
                for cj in comps:
                    Hj = H[np.ix_(cj, cj)]
                    ni, nj = len(ci), len(cj)
                    g = rates[np.ix_(ci, cj)]
                    if ni == 1 and nj == 1:
                        f = np.exp((-1j * (Hi[0, 0] - Hj[0, 0]) - g[0, 0]) * tau)
                        blocks.append((ci, cj, ("s", f)))
                        continue
                    L = -1j * (np.kron(np.eye(nj), Hi) - np.kron(Hj.T, np.eye(ni)))
                    L -= np.diag(g.reshape(-1, order="F"))
                    blocks.append((ci, cj, ("m", expm(L * tau))))

        def apply(rho: np.ndarray) -> np.ndarray:
            out = np.zeros_like(rho)
            for ci, cj, op in blocks:
                sub = rho[np.ix_(ci, cj)]
                if op[0] == "u":
                    new = op[1] @ sub @ op[2].conj().T
                elif op[0] == "s":
                    new = sub * op[1]
                else:
                    new = (op[1] @ sub.reshape(-1, order="F")).reshape(sub.shape, order="F")
                out[np.ix_(ci, cj)] = new
            return out

        return apply


def rotating_frame_segment(
    model: HamiltonianModel,
    pulses: Sequence[PulseSegment] | PulseSegment,
    detuning_cutoff: float | None = None,
    second_order: bool = True,
) -> RotatingFrameGenerator:
    """Rotating-wave generator for one or more simultaneous square pulses.

    For every level pair within the cutoff of a carrier the co-rotating part
    ``(B1/2) <a|M|b> e^{-i phase}`` is kept (``a`` the upper level). Level
    frames ``eps_a = E_a - n_a . omega`` are assigned by merging levels along
    the couplings, most resonant first; a coupling inconsistent with
    frames already fixed is dropped and counted.

    With ``second_order`` the couplings left out of the generator (far
    detuned co-rotating parts and all counter-rotating parts) enter as
    second-order level shifts ``|g|^2 / Delta`` (AC Stark and Bloch-Siegert).
    """
    if isinstance(pulses, PulseSegment):
        pulses = [pulses]
    E = model.energies
    d = len(E)
    K = len(pulses)
    omegas = np.array([p.omega for p in pulses])
    edges = []
    for k, p in enumerate(pulses):
        M = model.drive_eigen(p.axis)
        tol = 1e-9 * max(np.max(np.abs(M)), 1e-300)
        cut = detuning_cutoff if detuning_cutoff is not None else 0.5 * p.omega
        w = E[:, None] - E[None, :]  # w[a, b] = E_a - E_b
        for a, b in zip(*np.nonzero((w > 0) & (np.abs(w - p.omega) <= cut) & (np.abs(M) > tol))):
            g = 0.5 * p.B1 * GAUSS * M[a, b] * np.exp(-1j * p.phase)
            edges.append((abs(w[a, b] - p.omega), int(a), int(b), k, g))
    edges.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    # assign integer photon vectors n_a with n_a - n_b = e_k on every kept edge
    kept = []
    dropped = 0
    # Kruskal-like union-find pass: keep edges consistent with the frames of already connected levels
    parent = list(range(d))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    offs = [np.zeros(K, dtype=int) for _ in range(d)]  # n_a relative to its root
    for _, a, b, k, g in edges:
        ek = np.zeros(K, dtype=int)
        ek[k] = 1
        ra, rb = find(a), find(b)
        if ra == rb:
            if np.array_equal(offs[a] - offs[b], ek):
                kept.append((a, b, g))
            else:
                dropped += 1
            continue
        # merge rb into ra so that offs[a] - offs[b] = ek
        shift = offs[a] - offs[b] - ek
        for i in range(d):
            if find(i) == rb:
                offs[i] = offs[i] + shift
        parent[rb] = ra
        kept.append((a, b, g))
    shift = np.zeros(d)
    if second_order:
        kept_set = {(a, b) for a, b, _ in kept}
        for k, p in enumerate(pulses):
            M = model.drive_eigen(p.axis)
            w = E[:, None] - E[None, :]
            amp = 0.5 * p.B1 * GAUSS * np.abs(M)
            for a, b in zip(*np.nonzero((w > 0) & (amp > 1e-12 * max(amp.max(), 1e-300)))):
                g2 = amp[a, b] ** 2
                for delta in (w[a, b] - p.omega, w[a, b] + p.omega):
                    if delta == w[a, b] - p.omega and (a, b) in kept_set:
                        continue
                    if abs(delta) < 10 * amp[a, b]:
                        continue  # near-resonant but dropped: no perturbative shift
                    shift[a] += g2 / delta
                    shift[b] -= g2 / delta
    roots = [find(i) for i in range(d)]
    eps = np.array([E[i] - offs[i] @ omegas for i in range(d)])
    G = np.zeros((d, d), dtype=complex)
    for a, b, g in kept:
        G[a, b] += g
        G[b, a] += np.conj(g)
    comps = {}
    for i, r in enumerate(roots):
        comps.setdefault(r, []).append(i)
    components = tuple(tuple(v) for _, v in sorted(comps.items(), key=lambda kv: kv[1][0]))
    return RotatingFrameGenerator(eps, G, components, dropped, shift)


# ---------------------------------------------------------------------------
# propagation


def _breakpoints(sequence: PulseSequence) -> list[float]:
    pts = {0.0, sequence.duration}
    for s in sequence.segments:
        pts.add(float(s.t_start))
        pts.add(float(s.t_end))
    return sorted(p for p in pts if 0.0 <= p <= sequence.duration)


def _active(sequence: PulseSequence, t0: float, t1: float) -> list:
    mid = 0.5 * (t0 + t1)
    return [s for s in sequence.segments if s.t_start <= mid < s.t_end]


def _check_rho(rho0: np.ndarray, d: int) -> np.ndarray:
    rho = np.asarray(rho0, dtype=complex)
    if rho.ndim == 1:
        if abs(np.linalg.norm(rho) - 1) > 1e-10:
            raise ValueError("initial ket is not normalized")
        rho = np.outer(rho, rho.conj())
    if rho.shape != (d, d):
        raise ValueError(f"initial state has shape {rho.shape}, expected {(d, d)}")
    if abs(np.trace(rho) - 1) > 1e-10 or np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError("initial state is not a valid density matrix")
    return rho


def lindblad_propagate(
    lmodel: LindbladModel,
    rho0: np.ndarray,
    sequence: PulseSequence,
    config: PropagationConfig = PropagationConfig(),
    record: bool = False,
):
    """Propagate a state through a pulse sequence under pure dephasing.

    Parameters
    ----------
    lmodel : LindbladModel
    rho0 : ndarray
        Ket or density matrix in the interaction-picture eigenbasis at t = 0.
    sequence : PulseSequence
    config : PropagationConfig
    record : bool
        Also return ``[(t, rho_I(t))]`` at every segment boundary.

    Returns
    -------
    rho : ndarray
        Interaction-picture density matrix at ``t = sequence.duration``.
    """
    model = lmodel.model
    rho = _check_rho(rho0, model.dim)
    sequence.check_overlaps()
    if config.mode == "lab":
        out, traj = _propagate_lab(lmodel, rho, sequence, config, record)
    else:
        out, traj = _propagate_rwa(lmodel, rho, sequence, config, record)
    out = (out + out.conj().T) / 2
    return (out, traj) if record else out


def _propagate_rwa(lmodel, rho, sequence, config, record):
    if any(isinstance(s, ControlBlock) for s in sequence.segments):
        raise ValueError("baseband control blocks need lab-frame propagation")
    rates = lmodel.secular_rates()
    pts = _breakpoints(sequence)
    traj = [(0.0, rho.copy())] if record else []
    for t0, t1 in zip(pts, pts[1:]):
        tau = t1 - t0
        if tau <= 0:
            continue
        active = _active(sequence, t0, t1)
        if not active:
            rho = rho * np.exp(-rates * tau)
        else:
            origin = 0.0
            if config.phase_reference == "pulse":
                origin = max(float(x.t_start) for x in active)
            gen = rotating_frame_segment(lmodel.model, active, config.detuning_cutoff, config.second_order_shifts)
            step = gen.superoperator(rates, tau, config.max_superop_dim)
            rho_R = rho * gen.frame(t0 - origin).conj()
            rho = step(rho_R) * gen.frame(t1 - origin)
        if record:
            traj.append((t1, rho.copy()))
    return rho, traj


def _f_max(model: HamiltonianModel, sequence: PulseSequence) -> float:
    fmax = (model.energies.max() - model.energies.min()) / (2 * math.pi)
    for s in sequence.segments:
        if isinstance(s, PulseSegment):
            fmax = max(fmax, s.omega / (2 * math.pi))
    return fmax


def _lab_superop(H: np.ndarray, rates: np.ndarray, dt: float) -> np.ndarray:
    d = H.shape[0]
    L = -1j * (np.kron(np.eye(d), H) - np.kron(H.T, np.eye(d)))
    L -= np.diag(rates.reshape(-1, order="F"))
    return expm(L * dt)


def _apply_super(S: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return (S @ rho.reshape(-1, order="F")).reshape(rho.shape, order="F")


def _propagate_lab(lmodel, rho_I, sequence, config, record):
    model = lmodel.model
    H0 = model.H0
    fmax = _f_max(model, sequence)
    limit = 1.0 / (20 * fmax)
    dt_max = config.substep if config.substep is not None else limit
    if dt_max > limit * (1 + 1e-12):
        raise SubstepTooCoarseError(f"substep {dt_max:.4g} ns exceeds 1/(20 f_max) = {limit:.4g} ns")
    rates = lmodel.product_rates()
    dissip = bool(np.any(rates > 0))
    rho_I = rho_I.copy()
    traj = [(0.0, rho_I.copy())] if record else []
    pts = _breakpoints(sequence)
    for t0, t1 in zip(pts, pts[1:]):
        tau = t1 - t0
        if tau <= 0:
            continue
        active = _active(sequence, t0, t1)
        squares = [s for s in active if isinstance(s, PulseSegment)]
        blocks = [s for s in active if isinstance(s, ControlBlock)]
        origin = 0.0
        if config.phase_reference == "pulse":
            origin = max(float(x.t_start) for x in active) if active else t0
        a, b = t0 - origin, t1 - origin  # local clock of this window
        rho = eigen_to_lab(model, rho_I, a)
        if not active:
            if dissip:
                rho = _apply_super(_lab_superop(H0, rates, tau), rho)
            else:
                U = expm_hermitian(H0, tau)
                rho = U @ rho @ U.conj().T
        elif blocks and not squares and len(blocks) == 1:
            rho = _lab_control_block(model, rates, dissip, rho, blocks[0], t0, t1)
        elif blocks:
            raise ValueError("mixing control blocks with square pulses is not supported")
        else:
            rho = _lab_square(model, rates, dissip, rho, squares, a, b, dt_max)
        rho_I = lab_to_eigen(model, rho, b)
        if record:
            traj.append((t1, rho_I.copy()))
    return rho_I, traj


def _lab_control_block(model, rates, dissip, rho, block: ControlBlock, t0, t1, split_tol: float = 0.1):
    """Piecewise-constant segments; dephasing by symmetric splitting.

    Product-basis dephasing commutes with the diagonal of ``H``, so each
    segment is cut into substeps with ``dt * ||H - diag(H)|| <= split_tol``.
    At 0.1 the state differs from a 0.02 split by under 1e-6 on a 1 us
    control block.
    """
    H0 = model.H0
    ops = [block.amplitudes[:, k] for k in range(len(block.axes))]
    drives = [model.drives[a] * GAUSS for a in block.axes]
    j0 = int(round((t0 - block.t_start) / block.dt))
    j1 = int(round((t1 - block.t_start) / block.dt))
    for j in range(j0, j1):
        H = H0 + sum(c[j] * M for c, M in zip(ops, drives))
        if dissip:
            off = np.linalg.norm(H - np.diag(np.diag(H)), 2)
            n = max(1, math.ceil(block.dt * off / split_tol))
            U = expm_hermitian(H, block.dt / n)
            Ud = U.conj().T
            h = np.exp(-rates * block.dt / (2 * n))
            for _ in range(n):
                rho = h * (U @ (h * rho) @ Ud)
        else:
            U = expm_hermitian(H, block.dt)
            rho = U @ rho @ U.conj().T
    return rho


def _lab_square(model, rates, dissip, rho, pulses, t0, t1, dt_max):
    """Piecewise-constant sampling of cosine drives with exact substep exponentials.

    With a single carrier the substep grid is aligned to the drive period and
    the one-period map is reused. Dephasing enters by Strang splitting
    around each substep.
    """
    H0 = model.H0
    d = model.dim
    drives = [model.drives[p.axis] * p.B1 * GAUSS for p in pulses]
    tau = t1 - t0

    def H_at(t):
        return H0 + sum(np.cos(p.omega * t + p.phase) * M for p, M in zip(pulses, drives))

    def step_super(t, dt):
        U = expm_hermitian(H_at(t + dt / 2), dt)
        S = np.kron(U.conj(), U)
        if dissip:
            h = np.exp(-rates.reshape(-1, order="F") * dt / 2)
            S = h[:, None] * S * h[None, :]
        return S

    def run(t, n, dt, rho):
        for k in range(n):
            S = step_super(t + k * dt, dt)
            rho = _apply_super(S, rho)
        return rho

    if len(pulses) == 1:
        period = 2 * math.pi / pulses[0].omega
        n_sub = max(1, math.ceil(period / dt_max))
        dt = period / n_sub
        n_periods = int(tau // period)
        if n_periods >= 2:
            S = np.eye(d * d, dtype=complex)
            for k in range(n_sub):
                S = step_super(t0 + k * dt, dt) @ S
            vec = rho.reshape(-1, order="F")
            # repeated squaring keeps the cost logarithmic in the number of periods
            P = S
            m = n_periods
            while m:
                if m & 1:
                    vec = P @ vec
                m >>= 1
                if m:
                    P = P @ P
            rho = vec.reshape(d, d, order="F")
            t = t0 + n_periods * period
        else:
            t = t0
        rem = t1 - t
        if rem > 1e-12:
            n = max(1, math.ceil(rem / dt_max))
            rho = run(t, n, rem / n, rho)
        return rho
    n = max(1, math.ceil(tau / dt_max))
    return run(t0, n, tau / n, rho)
