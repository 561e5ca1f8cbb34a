"""Gate compilation into resonant square pulses.

Abstract gates (planar rotations, phase gates, ancilla-mediated controlled-Z)
are compiled into :class:`PulseSegment` objects whose carrier frequency,
duration and phase realize the gate in the interaction picture of the drift
Hamiltonian. A square pulse ``B1 cos(omega t + phase)`` along the drive axis
resonant with levels ``x`` and ``y`` rotates them by ``theta`` after
``theta / (B1 |<y|M|x>|)`` nanoseconds.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .model import GAUSS, HamiltonianModel
from .qspace import SpinSystem

__all__ = [
    "ControlBlock",
    "ControlledZSpec",
    "ForbiddenTransitionError",
    "PhaseGate",
    "PlanarRotation",
    "PulseSegment",
    "PulseSequence",
    "SU4Decomposition",
    "apply_gates",
    "cglmp_measurement_gates",
    "cglmp_measurement_sequences",
    "chsh_prep_gates",
    "cglmp_prep_gates",
    "compile_gates",
    "compile_rotation",
    "decompose_su4",
    "gate_unitary",
    "phase_matrix",
    "planar_matrix",
    "prep_cglmp_state",
    "prep_chsh_state",
    "qudit_level_m",
]

SCHEMA_VERSION = 1


class ForbiddenTransitionError(ValueError):
    """The drive operator has no matrix element between the two levels."""


# ---------------------------------------------------------------------------
# gate types


@dataclass(frozen=True)
class PlanarRotation:
    """``U_{x,y}(theta, phi)`` on a pair of eigenstates.

    ``cos(theta/2) (|x><x| + |y><y|) + sin(theta/2) (e^{i phi} |y><x| - e^{-i phi} |x><y|)``
    plus identity elsewhere. ``x`` and ``y`` are full product-state labels.
    When ``site`` is set the two labels differ only on that site and the
    ideal gate acts on every configuration of the other sites (the pulse is
    tuned to the given reference configuration).
    """

    x: tuple
    y: tuple
    theta: float
    phi: float
    site: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if self.x == self.y:
            raise ValueError("planar rotation needs two distinct levels")
        if self.site is not None:
            diff = [k for k, (a, b) in enumerate(zip(self.x, self.y)) if a != b]
            if diff != [self.site]:
                raise ValueError(f"labels {self.x} and {self.y} must differ only on site {self.site}")


@dataclass(frozen=True)
class PhaseGate:
    """``P_{x,y}(alpha) = e^{i alpha}|x><x| + e^{-i alpha}|y><y| + rest``."""

    x: tuple
    y: tuple
    alpha: float
    site: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if self.x == self.y:
            raise ValueError("phase gate needs two distinct levels")

    def as_rotations(self) -> tuple[PlanarRotation, PlanarRotation]:
        """Two pi rotations whose product is this phase gate."""
        first = PlanarRotation(self.x, self.y, math.pi, 0.0, self.site)
        second = PlanarRotation(self.x, self.y, math.pi, math.pi - self.alpha, self.site)
        return first, second


@dataclass(frozen=True)
class ControlledZSpec:
    """Controlled-Z ``W_{mu,nu}`` via a 2pi excursion of the ancilla.

    ``mu`` and ``nu`` are the magnetic quantum numbers of the two qudits.
    The ancilla (``ancilla_site``) is driven from ``ancilla_ground`` to the
    opposite level and back only when the qudits are in ``|mu nu>``.
    """

    mu: float
    nu: float
    ancilla_site: int = 1
    ancilla_ground: float = -0.5

    def labels(self) -> tuple[tuple, tuple]:
        g = self.ancilla_ground
        lo = [self.mu, self.nu]
        lo.insert(self.ancilla_site, g)
        hi = [self.mu, self.nu]
        hi.insert(self.ancilla_site, -g)
        return tuple(lo), tuple(hi)

    def as_rotation(self) -> PlanarRotation:
        lo, hi = self.labels()
        return PlanarRotation(lo, hi, 2 * math.pi, 0.0)


Gate = Union[PlanarRotation, PhaseGate, ControlledZSpec]


def planar_matrix(dim: int, x: int, y: int, theta: float, phi: float) -> np.ndarray:
    """Dense ``U_{x,y}(theta, phi)`` on basis indices ``x``, ``y``."""
    u = np.eye(dim, dtype=complex)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    u[x, x] = u[y, y] = c
    u[y, x] = s * np.exp(1j * phi)
    u[x, y] = -s * np.exp(-1j * phi)
    return u


def phase_matrix(dim: int, x: int, y: int, alpha: float) -> np.ndarray:
    p = np.eye(dim, dtype=complex)
    p[x, x] = np.exp(1j * alpha)
    p[y, y] = np.exp(-1j * alpha)
    return p


def _pairs(system: SpinSystem, x: tuple, y: tuple, site: int | None) -> list[tuple[int, int]]:
    if site is None:
        return [(system.index(x), system.index(y))]
    out = []
    for lab in system.basis_labels():
        if lab[site] != x[site]:
            continue
        other = list(lab)
        other[site] = y[site]
        out.append((system.index(lab), system.index(tuple(other))))
    return out


def gate_unitary(system: SpinSystem, gate: Gate) -> np.ndarray:
    """Ideal matrix of a gate in the (dressed) computational basis."""
    d = system.total_dim
    if isinstance(gate, ControlledZSpec):
        gate = gate.as_rotation()
    u = np.eye(d, dtype=complex)
    if isinstance(gate, PlanarRotation):
        for a, b in _pairs(system, gate.x, gate.y, gate.site):
            u = planar_matrix(d, a, b, gate.theta, gate.phi) @ u
    elif isinstance(gate, PhaseGate):
        for a, b in _pairs(system, gate.x, gate.y, gate.site):
            u = phase_matrix(d, a, b, gate.alpha) @ u
    else:
        raise TypeError(f"unsupported gate {gate!r}")
    return u


def apply_gates(system: SpinSystem, gates: Iterable, state: np.ndarray) -> np.ndarray:
    """Apply gates (in time order) to a ket; parallel tuples are applied in turn."""
    psi = np.asarray(state, dtype=complex)
    for item in gates:
        for g in _flatten(item):
            psi = gate_unitary(system, g) @ psi
    return psi


def _flatten(item) -> list:
    if isinstance(item, (PlanarRotation, PhaseGate, ControlledZSpec)):
        return [item]
    return [g for sub in item for g in _flatten(sub)]


# ---------------------------------------------------------------------------
# pulses


@dataclass(frozen=True)
class PulseSegment:
    """Square pulse ``B1 cos(omega t + phase)`` along ``axis``.

    Attributes
    ----------
    B1 : amplitude in gauss.
    omega : carrier angular frequency in rad/ns.
    phase : carrier phase in radians, referenced to sequence time zero.
    t_start, t_end : ns.
    axis : drive operator label.
    parallel_group : pulses sharing a group overlap in time on purpose.
    note : free-form description (the gate it realizes).
    """

    B1: float
    omega: float
    phase: float
    t_start: float
    t_end: float
    axis: str = "y"
    parallel_group: str | None = None
    note: str = ""

    def __post_init__(self):
        if self.B1 < 0:
            raise ValueError("B1 must be non-negative")
        if not self.t_end >= self.t_start:
            raise ValueError("t_end must not precede t_start")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def shifted(self, dt: float) -> "PulseSegment":
        return replace(self, t_start=self.t_start + dt, t_end=self.t_end + dt)


@dataclass(frozen=True)
class ControlBlock:
    """Piecewise-constant baseband control (GRAPE output).

    ``amplitudes[j, k]`` (gauss) drives axis ``axes[k]`` during
    ``[t_start + j*dt, t_start + (j+1)*dt)``.
    """

    amplitudes: np.ndarray
    dt: float
    t_start: float = 0.0
    axes: tuple[str, ...] = ("y",)
    note: str = ""

    def __post_init__(self):
        amps = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        if amps.shape[0] == 1 and len(self.axes) != 1:
            amps = amps.T
        if amps.ndim != 2 or amps.shape[1] != len(self.axes):
            raise ValueError("amplitudes must have shape (N, number of axes)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def t_end(self) -> float:
        return self.t_start + self.amplitudes.shape[0] * self.dt

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def shifted(self, dt: float) -> "ControlBlock":
        return replace(self, t_start=self.t_start + dt)


@dataclass(frozen=True)
class PulseSequence:
    """Time-ordered list of square pulses and control blocks."""

    segments: tuple = ()
    t_end_override: float | None = None

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda s: (s.t_start, s.t_end)))
        object.__setattr__(self, "segments", segs)
        self.check_overlaps()

    @property
    def duration(self) -> float:
        end = max((s.t_end for s in self.segments), default=0.0)
        return float(self.t_end_override) if self.t_end_override is not None else float(end)

    def check_overlaps(self) -> None:
        for a, b in zip(self.segments, self.segments[1:]):
            if b.t_start < a.t_end - 1e-9:
                ga = getattr(a, "parallel_group", None)
                gb = getattr(b, "parallel_group", None)
                if ga is None or ga != gb:
                    raise ValueError(f"overlapping pulses without a shared parallel group: {a.note!r}, {b.note!r}")

    def __len__(self) -> int:
        return len(self.segments)

    def then(self, other: "PulseSequence") -> "PulseSequence":
        """Concatenate ``other`` after this sequence."""
        t0 = self.duration
        return PulseSequence(self.segments + tuple(s.shifted(t0) for s in other.segments))

    def scaled(self, factor: float) -> "PulseSequence":
        """Multiply every square-pulse amplitude by ``factor``."""
        return PulseSequence(tuple(replace(s, B1=s.B1 * factor) if isinstance(s, PulseSegment) else s for s in self.segments))

    def to_dict(self) -> dict:
        items = []
        for s in self.segments:
            if isinstance(s, PulseSegment):
                d = asdict(s)
                d["kind"] = "square"
                items.append(d)
            else:
                items.append(
                    {
                        "kind": "control",
                        "dt": s.dt,
                        "t_start": s.t_start,
                        "axes": list(s.axes),
                        "amplitudes": s.amplitudes.tolist(),
                        "note": s.note,
                    }
                )
        return {
            "schema_version": SCHEMA_VERSION,
            "units": {"B1": "gauss", "omega": "rad/ns", "phase": "rad", "time": "ns", "amplitudes": "gauss"},
            "segments": items,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported pulse schema version {data.get('schema_version')!r}")
        segs = []
        for d in data["segments"]:
            d = dict(d)
            kind = d.pop("kind")
            if kind == "square":
                segs.append(PulseSegment(**d))
            elif kind == "control":
                segs.append(ControlBlock(np.array(d["amplitudes"]), d["dt"], d["t_start"], tuple(d["axes"]), d.get("note", "")))
            else:
                raise ValueError(f"unknown segment kind {kind!r}")
        return cls(tuple(segs))

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "PulseSequence":
        text = Path(source).read_text() if isinstance(source, Path) or not str(source).lstrip().startswith("{") else source
        return cls.from_dict(json.loads(text))


def compile_rotation(
    model: HamiltonianModel,
    rot: PlanarRotation,
    B1: float,
    t_start: float = 0.0,
    axis: str = "y",
    parallel_group: str | None = None,
    average_over: Sequence[int] = (),
) -> PulseSegment:
    """Resonant square pulse realizing a planar rotation.

    Parameters
    ----------
    model : HamiltonianModel
    rot : PlanarRotation
    B1 : float
        Amplitude in gauss.
    t_start : float
        Start time (ns); the carrier phase is referenced to time zero.
    average_over : sequence of int
        Spectator sites. The carrier frequency and Rabi rate are averaged
        over every level of these sites instead of taken from the labels
        in ``rot``, which centres an unconditional local rotation on the
        spread of spectator-dependent transition frequencies.
    """
    if B1 <= 0:
        raise ValueError("B1 must be positive")
    theta, phi = rot.theta, rot.phi
    if theta < 0:
        theta, phi = -theta, phi + math.pi
    a, b = model.index(rot.x), model.index(rot.y)
    M = model.drive_eigen(axis)
    Ea, Eb = model.energies[a], model.energies[b]
    scale = np.max(np.abs(M))
    if abs(M[b, a]) <= 1e-12 * scale:
        raise ForbiddenTransitionError(f"no drive matrix element between {rot.x} and {rot.y}")
    rate = B1 * GAUSS * abs(M[b, a])
    omega = abs(Eb - Ea)
    if average_over:
        sysm = model.system
        grids = [sysm.m_values(k) for k in average_over]
        omegas, rates = [], []
        for ms in itertools.product(*grids):
            lx, ly = list(rot.x), list(rot.y)
            for k, mk in zip(average_over, ms):
                lx[k] = ly[k] = float(mk)
            i, j = model.index(tuple(lx)), model.index(tuple(ly))
            omegas.append(abs(model.energies[j] - model.energies[i]))
            rates.append(B1 * GAUSS * abs(M[j, i]))
        omega, rate = float(np.mean(omegas)), float(np.mean(rates))
    if Eb > Ea:
        phase = np.angle(M[b, a]) - phi - math.pi / 2
    else:
        phase = np.angle(M[a, b]) + phi + math.pi / 2
    return PulseSegment(
        B1=float(B1),
        omega=float(omega),
        phase=float(np.mod(phase, 2 * math.pi)),
        t_start=float(t_start),
        t_end=float(t_start + theta / rate),
        axis=axis,
        parallel_group=parallel_group,
        note=f"U{rot.x}->{rot.y}(theta={rot.theta:.6g}, phi={rot.phi:.6g})",
    )


def _as_rotations(gate: Gate) -> list[PlanarRotation]:
    if isinstance(gate, PlanarRotation):
        return [gate]
    if isinstance(gate, PhaseGate):
        return list(gate.as_rotations()) if abs(np.angle(np.exp(1j * gate.alpha))) > 1e-12 else []
    if isinstance(gate, ControlledZSpec):
        return [gate.as_rotation()]
    raise TypeError(f"unsupported gate {gate!r}")


def _spect(rot: PlanarRotation, average_over) -> tuple:
    if not average_over or rot.site is None:
        return ()
    return tuple(average_over.get(rot.site, ()))


def _compile_track(model, items, B1s, t0: float, tag: str, average_over=None) -> tuple[list[PulseSegment], float]:
    """Back-to-back compilation; tuple items run in parallel."""
    t = t0
    out = []
    for n, (item, amp) in enumerate(zip(items, B1s)):
        if isinstance(item, tuple):
            group = f"{tag}p{n}"
            end = t
            for g in item:
                tt = t
                for r in _as_rotations(g):
                    if abs(r.theta) < 1e-15:
                        continue
                    seg = compile_rotation(model, r, amp, tt, parallel_group=group, average_over=_spect(r, average_over))
                    out.append(seg)
                    tt = seg.t_end
                end = max(end, tt)
            t = end
        else:
            for r in _as_rotations(item):
                if abs(r.theta) < 1e-15:
                    continue
                seg = compile_rotation(model, r, amp, t, average_over=_spect(r, average_over))
                out.append(seg)
                t = seg.t_end
    return out, t


def compile_gates(
    model: HamiltonianModel,
    tracks: Sequence[Sequence],
    B1: Sequence[Sequence[float]] | float,
    average_over: Mapping[int, Sequence[int]] | None = None,
) -> PulseSequence:
    """Compile one or more gate tracks that run concurrently from t = 0.

    Each track is a list of gates (or tuples of gates to run in parallel),
    compiled back to back. ``B1`` is a scalar or a per-item amplitude list
    for every track. Segments of different tracks share a parallel group
    wherever they overlap. ``average_over`` maps a gate's site to the
    spectator sites its carrier is averaged over (see ``compile_rotation``).
    """
    segs: list[PulseSegment] = []
    for k, track in enumerate(tracks):
        amps = [B1] * len(track) if np.isscalar(B1) else B1[k]
        out, _ = _compile_track(model, track, amps, 0.0, f"t{k}", average_over)
        if len(tracks) > 1:
            out = [replace(s, parallel_group="concurrent") for s in out]
        segs.extend(out)
    return PulseSequence(tuple(segs))


# ---------------------------------------------------------------------------
# preparation sequences


def chsh_prep_gates() -> list[PlanarRotation]:
    """Five rotations taking ``|down,-5/2>`` to the CHSH target state.

    Each step is listed as (initial level, final level, theta, phi); the
    planar rotation acts with ``x`` = final and ``y`` = initial so that the
    amplitude moved into the final level is ``-e^{-i phi} sin(theta/2)``.
    """
    up, dn = 0.5, -0.5
    steps = [
        ((dn, -2.5), (dn, -1.5), math.pi, math.pi),
        ((dn, -1.5), (dn, -0.5), 2 * math.pi / 3, math.pi),
        ((dn, -0.5), (up, -0.5), 2 * math.asin(math.sqrt(2 / 3)), math.pi),
        ((up, -0.5), (up, 0.5), math.pi / 2, 0.0),
        ((up, 0.5), (up, 1.5), math.pi, 0.0),
    ]
    return [PlanarRotation(final, initial, th, ph) for initial, final, th, ph in steps]


def prep_chsh_state(model: HamiltonianModel, B1: float | Sequence[float]) -> PulseSequence:
    """Compile the five-pulse CHSH preparation (one amplitude or five)."""
    gates = chsh_prep_gates()
    amps = [float(B1)] * 5 if np.isscalar(B1) else [float(b) for b in B1]
    if len(amps) != 5:
        raise ValueError("need one amplitude or five")
    return compile_gates(model, [gates], [amps])


def _site_rot(site: int, mi: float, mf: float, theta: float, phi: float, ref: tuple) -> PlanarRotation:
    x, y = list(ref), list(ref)
    x[site], y[site] = mf, mi
    return PlanarRotation(tuple(x), tuple(y), theta, phi, site=site)


def cglmp_prep_gates() -> tuple[list[Gate], list[int]]:
    """Fifteen gates preparing the maximally entangled two-qudit state.

    Returns the gates in time order and their amplitude group (1 for the
    pi/2 rotations of the second qudit, 2 for all others). The final CNOT
    block uses phases (0, pi) for its two pi/2 rotations; with the opposite
    order the sequence ends with a -1 on ``|-1/2, -1/2>``.
    """
    a = -0.5
    h = math.pi / 2
    ref1 = (-1.5, a, -1.5)
    gates: list[Gate] = [
        _site_rot(0, -1.5, -0.5, 2 * math.pi / 3, math.pi, ref1),
        _site_rot(0, -0.5, 0.5, 2 * math.asin(math.sqrt(2 / 3)), math.pi, ref1),
        _site_rot(0, 0.5, 1.5, h, math.pi, ref1),
    ]
    groups = [2, 2, 2]

    def q2(mi, mf, th, ph, m1):
        return _site_rot(2, mi, mf, th, ph, (m1, a, mi))

    blocks = [
        (1.5, [(-0.5, 0.5, math.pi, 0.0), (0.5, 1.5, math.pi, math.pi)], (math.pi, 0.0)),
        (0.5, [(-0.5, 0.5, math.pi, 0.0)], (math.pi, 0.0)),
        (-0.5, [], (0.0, math.pi)),
    ]
    for m1, tail, (ph_in, ph_out) in blocks:
        gates.append(q2(-1.5, -0.5, h, ph_in, m1))
        gates.append(ControlledZSpec(m1, -0.5))
        gates.append(q2(-1.5, -0.5, h, ph_out, m1))
        groups += [1, 2, 1]
        for mi, mf, th, ph in tail:
            gates.append(q2(mi, mf, th, ph, m1))
            groups.append(2)
    return gates, groups


def prep_cglmp_state(model: HamiltonianModel, B1_group1: float, B1_group2: float) -> PulseSequence:
    """Compile the fifteen-pulse trimer preparation.

    ``B1_group1`` drives the pi/2 rotations of the second qudit and
    ``B1_group2`` every other pulse (gauss).
    """
    gates, groups = cglmp_prep_gates()
    amps = [B1_group1 if g == 1 else B1_group2 for g in groups]
    return compile_gates(model, [gates], [amps])


# ---------------------------------------------------------------------------
# SU(4) decomposition

_GIVENS_ORDER = ((3, 4), (2, 4), (1, 4), (2, 3), (1, 3), (1, 2))


@dataclass(frozen=True)
class SU4Decomposition:
    """Planar-rotation factorization ``W U34 U24 U14 U23 U13 U12 = e^{i lam} P12 P23 P34``.

    ``givens[(x, y)] = (theta/2, beta)`` with levels numbered 1..4 and
    ``alphas[(x, y)]`` the phase-gate angles. Angles follow the gauge
    ``theta/2 in (-pi/2, pi/2]``, ``beta in (-pi, pi]``.
    """

    givens: dict
    alphas: dict
    lam: float

    def rotation(self, pair) -> np.ndarray:
        x, y = pair
        half, beta = self.givens[pair]
        return planar_matrix(4, x - 1, y - 1, 2 * half, beta)

    def phase_part(self) -> np.ndarray:
        out = np.exp(1j * self.lam) * np.eye(4)
        for (x, y), al in self.alphas.items():
            out = out @ phase_matrix(4, x - 1, y - 1, al)
        return out

    def recompose(self) -> np.ndarray:
        """``e^{i lam} P12 P23 P34 U12^-1 U13^-1 U23^-1 U14^-1 U24^-1 U34^-1``."""
        out = self.phase_part()
        for pair in reversed(_GIVENS_ORDER):
            out = out @ self.rotation(pair).conj().T
        return out

    def physical_gates(self) -> list[tuple]:
        """Adjacent-level gates in time order.

        Non-adjacent rotations are conjugated by pi swaps
        (``pi^+`` has phase pi, ``pi^-`` phase 0). Items are
        ``("rot", x, y, theta, phi)`` or ``("phase", x, y, alpha)``.
        """
        inv = {p: self.rotation(p).conj().T for p in _GIVENS_ORDER}
        sw = {
            (p, s): planar_matrix(4, p[0] - 1, p[1] - 1, math.pi, math.pi if s > 0 else 0.0)
            for p in ((1, 2), (2, 3), (3, 4))
            for s in (1, -1)
        }
        # operator form (right to left = time order) of the physical sequence:
        # U12^-1 pi12+ X13 pi12- U23^-1 pi34+ pi23+ X14 pi23- X24 pi34- U34^-1
        x24 = sw[(3, 4), -1] @ inv[(2, 4)] @ sw[(3, 4), 1]
        x14 = sw[(2, 3), -1] @ sw[(3, 4), -1] @ inv[(1, 4)] @ sw[(3, 4), 1] @ sw[(2, 3), 1]
        x13 = sw[(1, 2), -1] @ inv[(1, 3)] @ sw[(1, 2), 1]
        seq = [
            ((3, 4), inv[(3, 4)]),
            ("swap", (3, 4), -1),
            ((2, 3), x24),
            ("swap", (2, 3), -1),
            ((1, 2), x14),
            ("swap", (2, 3), 1),
            ("swap", (3, 4), 1),
            ((2, 3), inv[(2, 3)]),
            ("swap", (1, 2), -1),
            ((2, 3), x13),
            ("swap", (1, 2), 1),
            ((1, 2), inv[(1, 2)]),
        ]
        out = []
        for item in seq:
            if item[0] == "swap":
                (x, y), s = item[1], item[2]
                out.append(("rot", x, y, math.pi, math.pi if s > 0 else 0.0))
            else:
                (x, y), m = item
                out.append(("rot", x, y) + _read_planar(m, x - 1, y - 1))
        for pair in ((3, 4), (2, 3), (1, 2)):
            out.append(("phase",) + pair + (self.alphas[pair],))
        return out


def _read_planar(m: np.ndarray, x: int, y: int) -> tuple[float, float]:
    """(theta, phi) of a planar rotation matrix on levels x < y."""
    c = m[x, x]
    s = m[y, x]
    rest = m.copy()
    rest[np.ix_([x, y], [x, y])] = np.eye(2)
    if np.max(np.abs(rest - np.eye(4))) > 1e-9 or abs(c.imag) > 1e-9:
        raise ArithmeticError("conjugated rotation is not a planar rotation on adjacent levels")
    theta = 2 * math.atan2(abs(s), c.real)
    phi = float(np.angle(s)) if abs(s) > 1e-14 else 0.0
    return theta, phi


def _gauge(half: float, beta: float) -> tuple[float, float]:
    # (theta/2, beta) ~ (-theta/2, beta + pi) ~ (theta/2 + pi, beta + pi) up to sign conventions
    half = math.remainder(half, 2 * math.pi)
    if half > math.pi / 2 + 1e-15:
        half, beta = half - math.pi, beta + math.pi
    elif half <= -math.pi / 2 + 1e-15:
        half, beta = half + math.pi, beta + math.pi
    beta = math.remainder(beta, 2 * math.pi)
    if beta <= -math.pi + 1e-15:
        beta += 2 * math.pi
    return half, beta


def decompose_su4(W: np.ndarray) -> SU4Decomposition:
    """Givens-style planar-rotation decomposition of a 4x4 unitary."""
    W = np.asarray(W, dtype=complex)
    if W.shape != (4, 4) or np.max(np.abs(W.conj().T @ W - np.eye(4))) > 1e-10:
        raise ValueError("input must be a 4x4 unitary")
    cur = W.copy()
    givens = {}
    for x, y in _GIVENS_ORDER:
        # zero element (row y, column x) by right-multiplying U_{x,y}
        r, i, j = y - 1, x - 1, y - 1
        wx, wy = cur[r, i], cur[r, j]
        if abs(wx) < 1e-15:
            half, beta = 0.0, 0.0
        elif abs(wy) < 1e-15:
            half, beta = math.pi / 2, float(np.angle(-wx))
        else:
            half = math.atan(abs(wx) / abs(wy))
            beta = float(np.angle(-wx / wy))
        half, beta = _gauge(half, beta)
        givens[(x, y)] = (half, beta)
        cur = cur @ planar_matrix(4, i, j, 2 * half, beta)
    diag = np.diag(cur)
    best = None
    for k in range(4):
        lam = float(np.angle(np.linalg.det(W))) / 4 + k * math.pi / 2
        a12 = float(np.angle(diag[0] * np.exp(-1j * lam)))
        a34 = float(np.angle(np.exp(1j * lam) / diag[3]))
        a23 = float(np.angle(diag[1] * np.exp(-1j * lam) * np.exp(1j * a12)))
        alphas = {(1, 2): a12, (2, 3): a23, (3, 4): a34}
        n_nonzero = sum(abs(a) > 1e-9 for a in alphas.values())
        key = (n_nonzero, k)
        if best is None or key < best[0]:
            best = (key, SU4Decomposition(givens, alphas, math.remainder(lam, 2 * math.pi)))
    dec = best[1]
    if np.max(np.abs(dec.recompose() - W)) > 1e-9:
        raise ArithmeticError("decomposition failed to reproduce the input")
    return dec


def qudit_level_m(n: int, s: float = 1.5) -> float:
    """Magnetic quantum number of level ``n`` (1-based, ``|1> = |+s>``)."""
    return s - (n - 1)


def _qudit_gates(dec: SU4Decomposition, site: int, ref: tuple, parallel: str) -> list:
    """Physical gates of one qudit unitary, with the documented parallel placement."""
    out = []
    for item in dec.physical_gates():
        x, y = item[1], item[2]
        lx, ly = list(ref), list(ref)
        lx[site], ly[site] = qudit_level_m(x), qudit_level_m(y)
        if item[0] == "rot":
            if abs(item[3]) < 1e-12:
                continue
            out.append(PlanarRotation(tuple(lx), tuple(ly), item[3], item[4], site=site))
        else:
            if abs(item[3]) < 1e-12:
                continue
            out.append(PhaseGate(tuple(lx), tuple(ly), item[3], site=site))
    # merge the documented parallel pair
    if parallel == "P12|P34":
        idx = [k for k, g in enumerate(out) if isinstance(g, PhaseGate) and {g.x[site], g.y[site]} in ({1.5, 0.5}, {-0.5, -1.5})]
        if len(idx) == 2 and idx[1] == idx[0] + 1:
            out[idx[0]: idx[1] + 1] = [(out[idx[0]], out[idx[1]])]
    elif parallel == "P34|U12":
        k34 = [k for k, g in enumerate(out) if isinstance(g, PhaseGate) and {g.x[site], g.y[site]} == {-0.5, -1.5}]
        if k34:
            k = k34[0]
            prev = out[k - 1]
            if isinstance(prev, PlanarRotation) and {prev.x[site], prev.y[site]} == {1.5, 0.5}:
                out[k - 1: k + 1] = [(prev, out[k])]
    return out


def cglmp_measurement_gates(settings=None) -> dict:
    """Gate tracks for the four rotations ``U_i^(A) x U_j^(B)``.

    Returns ``{(i, j): (track_A, track_B)}``; the two tracks act on sites
    0 and 2 of the trimer and run concurrently.
    """
    from .bell import CGLMPSettings, cglmp_unitaries

    ua1, ua2, ub1, ub2 = cglmp_unitaries(settings or CGLMPSettings())
    ref = (-1.5, -0.5, -1.5)
    tracks_a = {
        1: _qudit_gates(decompose_su4(ua1), 0, ref, "P12|P34"),
        2: _qudit_gates(decompose_su4(ua2), 0, ref, "P34|U12"),
    }
    tracks_b = {
        1: _qudit_gates(decompose_su4(ub1), 2, ref, "P34|U12"),
        2: _qudit_gates(decompose_su4(ub2), 2, ref, "P34|U12"),
    }
    return {(i, j): (tracks_a[i], tracks_b[j]) for i in (1, 2) for j in (1, 2)}


def cglmp_measurement_sequences(model: HamiltonianModel, B1: float | dict, settings=None) -> dict:
    """Compiled pulse sequences for the four CGLMP measurement rotations.

    ``B1`` is one amplitude (gauss) or a mapping ``{(i, j): amplitude}``.
    The rotations are local, so each carrier is centred on the transition
    frequencies of all states of the other qudit.
    """
    out = {}
    for key, (ta, tb) in cglmp_measurement_gates(settings).items():
        amp = B1[key] if isinstance(B1, dict) else B1
        out[key] = compile_gates(model, [ta, tb], amp, average_over={0: (2,), 2: (0,)})
    return out
