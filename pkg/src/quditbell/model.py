"""Spin Hamiltonians of the Yb(trensal) electro-nuclear dimer and the qudit trimer.

Energies are angular frequencies in rad/ns. Drive operators are magnetic
moment operators in rad/ns per tesla, so a field ``B`` (tesla) along the
drive axis contributes ``B * drives[axis]`` to the Hamiltonian.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .qspace import SpinSystem

__all__ = [
    "AmbiguousLabelError",
    "DimerParams",
    "HamiltonianModel",
    "LevelDiagram",
    "MEV_GHZ",
    "MU_B_GHZ_PER_T",
    "MU_N_MHZ_PER_T",
    "TrimerParams",
    "build_dimer",
    "dimer_subspace",
    "embed_subspace",
    "trimer_subspace",
    "build_trimer",
    "ghz_to_rad_ns",
    "level_diagram",
    "mev_to_rad_ns",
    "mhz_to_rad_ns",
    "rad_ns_to_mhz",
    "transition",
]

MU_B_GHZ_PER_T = 13.9962449  # Bohr magneton / h
MU_N_MHZ_PER_T = 7.6225932  # nuclear magneton / h
MEV_GHZ = 241.799050  # 1 meV / h
TWO_PI = 2 * math.pi
GAUSS = 1e-4  # tesla


def ghz_to_rad_ns(f: float) -> float:
    return TWO_PI * f


def mhz_to_rad_ns(f: float) -> float:
    return TWO_PI * f * 1e-3


def rad_ns_to_mhz(w: float) -> float:
    return w / TWO_PI * 1e3


def mev_to_rad_ns(e: float) -> float:
    return TWO_PI * MEV_GHZ * e


MU_B = ghz_to_rad_ns(MU_B_GHZ_PER_T)  # rad/ns per tesla
MU_N = mhz_to_rad_ns(MU_N_MHZ_PER_T)


class AmbiguousLabelError(LookupError):
    """No eigenstate has dominant (> 0.5) weight on the requested product state."""


@dataclass(frozen=True)
class _Params:
    @classmethod
    def from_mapping(cls, data: Mapping[str, object]):
        """Build from a mapping of field names; unknown keys are rejected."""
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        kwargs = {}
        for k, v in data.items():
            kwargs[k] = tuple(float(x) for x in v) if isinstance(v, (list, tuple)) else float(v)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DimerParams(_Params):
    """Parameters of the Yb(trensal) electro-nuclear spin Hamiltonian.

    Attributes
    ----------
    gS : (gx, gy, gz) electronic g tensor (principal values).
    gI : nuclear g factor.
    A_par, A_perp : hyperfine couplings in MHz (plain frequency).
    p : quadrupole coupling in MHz.
    Bz : static field in tesla.
    """

    gS: tuple[float, float, float] = (2.9, 2.9, 4.3)
    gI: float = -0.2592
    A_par: float = -883.0
    A_perp: float = -628.0
    p: float = -66.0
    Bz: float = 0.3

    def __post_init__(self):
        if len(self.gS) != 3:
            raise ValueError("gS needs three components")
        if self.Bz < 0:
            raise ValueError("Bz must be non-negative")


@dataclass(frozen=True)
class TrimerParams(_Params):
    """Parameters of the two-qudit trimer with an ancilla switch.

    Exchange and zero-field splittings are in meV, the field in tesla.
    ``g2y`` is the transverse ancilla g factor that enters only the drive.
    """

    g1z: float = 2.0
    g2z: float = 4.3
    g3z: float = 1.95
    g2y: float = 2.9
    J12: float = 5e-3
    J23: float = 3e-3
    D1: float = -3e-2
    D3: float = -2e-2
    Bz: float = 1.3

    def __post_init__(self):
        if self.Bz < 0:
            raise ValueError("Bz must be non-negative")


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Drift Hamiltonian, drive operators and cached eigenstructure.

    Eigenstates are stored in *dressed order*: when every eigenvector has a
    dominant (> 0.5 weight) product component and these are all distinct,
    column ``k`` of ``vectors`` is the eigenstate adiabatically connected to
    product state ``k``, with its phase fixed so that component is real
    positive. Otherwise the columns are in ascending energy order and
    ``dressed`` is False.
    """

    system: SpinSystem
    H0: np.ndarray
    drives: Mapping[str, np.ndarray]
    energies: np.ndarray = field(init=False)
    vectors: np.ndarray = field(init=False)
    dominant: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    dressed: bool = field(init=False)

    def __post_init__(self):
        H0 = np.asarray(self.H0, dtype=complex)
        scale = max(np.max(np.abs(H0)), 1.0)
        if np.max(np.abs(H0 - H0.conj().T)) > 1e-12 * scale:
            raise ValueError("drift Hamiltonian is not Hermitian")
        H0 = (H0 + H0.conj().T) / 2
        E, V = np.linalg.eigh(H0)
        w = np.abs(V) ** 2
        dom = np.argmax(w, axis=0)
        dom_w = w[dom, np.arange(len(E))]
        dressed = bool(np.all(dom_w > 0.5) and len(set(dom.tolist())) == len(E))
        if dressed:
            order = np.argsort(dom)
            E, V, dom, dom_w = E[order], V[:, order], dom[order], dom_w[order]
            ph = V[dom, np.arange(len(E))]
            V = V * (np.abs(ph) / ph)[None, :]
        object.__setattr__(self, "H0", H0)
        object.__setattr__(self, "drives", {k: np.asarray(v, dtype=complex) for k, v in self.drives.items()})
        object.__setattr__(self, "energies", E)
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "dominant", dom)
        object.__setattr__(self, "weights", dom_w)
        object.__setattr__(self, "dressed", dressed)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    def index(self, label: Sequence[float] | int) -> int:
        """Dressed index of an eigenstate given its product-state label."""
        if isinstance(label, (int, np.integer)):
            return int(label)
        target = self.system.index(label)
        hits = np.flatnonzero((self.dominant == target) & (self.weights > 0.5))
        if hits.size != 1:
            raise AmbiguousLabelError(f"no eigenstate with dominant character {tuple(label)}")
        return int(hits[0])

    def label(self, k: int) -> tuple[float, ...]:
        return self.system.basis_labels()[int(self.dominant[k])]

    def to_eigen(self, op: np.ndarray) -> np.ndarray:
        """Express a product-basis operator in the dressed eigenbasis."""
        return self.vectors.conj().T @ op @ self.vectors

    def from_eigen(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.conj().T

    def drive_eigen(self, axis: str = "y") -> np.ndarray:
        try:
            return self.to_eigen(self.drives[axis])
        except KeyError:
            raise KeyError(f"model has no drive axis {axis!r}; available: {sorted(self.drives)}") from None

    def with_drives(self, drives: Mapping[str, np.ndarray]) -> "HamiltonianModel":
        return HamiltonianModel(self.system, self.H0, drives)


def transition(model: HamiltonianModel, i, j, axis: str = "y") -> tuple[float, complex]:
    """Transition frequency ``E_j - E_i`` (rad/ns) and drive element ``<j|M|i>``.

    The matrix element is in rad/ns per tesla.
    """
    a, b = model.index(i), model.index(j)
    M = model.drive_eigen(axis)
    return float(model.energies[b] - model.energies[a]), complex(M[b, a])


def build_dimer(params: DimerParams = DimerParams()) -> HamiltonianModel:
    """Electronic spin 1/2 coupled to a nuclear spin 5/2 (12 levels, qubit first)."""
    system = SpinSystem((0.5, 2.5), ("S", "I"))
    Sx, Sy, Sz = system.operators(0)
    Ix, Iy, Iz = system.operators(1)
    gx, gy, gz = params.gS
    H = (
        gz * MU_B * params.Bz * Sz
        + params.gI * MU_N * params.Bz * Iz
        + mhz_to_rad_ns(params.A_perp) * (Sx @ Ix + Sy @ Iy)
        + mhz_to_rad_ns(params.A_par) * (Sz @ Iz)
        + mhz_to_rad_ns(params.p) * (Iz @ Iz)
    )
    drives = {
        "y": gy * MU_B * Sy + params.gI * MU_N * Iy,
        "x": gx * MU_B * Sx + params.gI * MU_N * Ix,
    }
    return HamiltonianModel(system, H, drives)


def dimer_subspace(model: HamiltonianModel) -> np.ndarray:
    """Dressed indices of the qubit x spin-3/2 register inside the dimer.

    The qudit uses the nuclear levels ``m_I = 3/2 ... -3/2``; the order is
    qubit-major, matching an 8-dim ``(2, 4)`` state.
    """
    return np.array([model.index((ms, mi)) for ms in (0.5, -0.5) for mi in (1.5, 0.5, -0.5, -1.5)])


def trimer_subspace(model: HamiltonianModel, ancilla: float = -0.5) -> np.ndarray:
    """Dressed indices of the two-qudit register with the ancilla parked in ``ancilla``.

    Order is ``(m1, m3)`` row-major with ``m = 3/2 ... -3/2``, matching a
    ``(4, 4)`` state.
    """
    ms = (1.5, 0.5, -0.5, -1.5)
    return np.array([model.index((m1, ancilla, m3)) for m1 in ms for m3 in ms])


def embed_subspace(vec: np.ndarray, indices: Sequence[int], dim: int) -> np.ndarray:
    """Place a ket (or square matrix) given on ``indices`` into a ``dim``-dim space."""
    vec = np.asarray(vec, dtype=complex)
    idx = np.asarray(indices)
    if vec.ndim == 1:
        out = np.zeros(dim, dtype=complex)
        out[idx] = vec
    else:
        out = np.zeros((dim, dim), dtype=complex)
        out[np.ix_(idx, idx)] = vec
    return out


def build_trimer(params: TrimerParams = TrimerParams()) -> HamiltonianModel:
    """Two spin-3/2 qudits bridged by a spin-1/2 ancilla (32 levels)."""
    system = SpinSystem((1.5, 0.5, 1.5), ("S1", "s2", "S3"))
    S1, s2, S3 = (system.operators(k) for k in range(3))
    dot = lambda a, b: sum(x @ y for x, y in zip(a, b))  # noqa: E731
    H = (
        MU_B * params.Bz * (params.g1z * S1[2] + params.g2z * s2[2] + params.g3z * S3[2])
        + mev_to_rad_ns(params.J12) * dot(S1, s2)
        + mev_to_rad_ns(params.J23) * dot(s2, S3)
        + mev_to_rad_ns(params.D1) * S1[2] @ S1[2]
        + mev_to_rad_ns(params.D3) * S3[2] @ S3[2]
    )
    drives = {"y": MU_B * (params.g1z * S1[1] + params.g2y * s2[1] + params.g3z * S3[1])}
    return HamiltonianModel(system, H, drives)


@dataclass(frozen=True)
class LevelDiagram:
    """Eigenvalues (rad/ns, ascending per row) on a field grid (tesla)."""

    fields: np.ndarray
    energies: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        n = self.energies.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Bz_T"] + [f"E{k + 1}_rad_per_ns" for k in range(n)])
            for b, row in zip(self.fields, self.energies):
                w.writerow([repr(float(b))] + [repr(float(x)) for x in row])


def level_diagram(
    builder: Callable[..., HamiltonianModel],
    params,
    field_range: tuple[float, float],
    n: int,
) -> LevelDiagram:
    """Sweep the static field and collect the sorted spectrum.

    Parameters
    ----------
    builder : callable
        ``build_dimer`` or ``build_trimer``.
    params : DimerParams or TrimerParams
        Base parameters; ``Bz`` is replaced along the sweep.
    field_range : (float, float)
        First and last field value in tesla.
    n : int
        Number of grid points, at least 2.
    """
    lo, hi = map(float, field_range)
    if n < 2:
        raise ValueError("a level diagram needs at least 2 field points")
    if not hi > lo:
        raise ValueError("empty field range")
    grid = np.linspace(lo, hi, n)
    rows = []
    for b in grid:
        H = builder(replace(params, Bz=abs(b))).H0
        if b < 0:  # field reversal flips every Zeeman term
            H = builder(replace(params, Bz=0.0)).H0 + (H - builder(replace(params, Bz=0.0)).H0) * -1
        rows.append(np.linalg.eigvalsh(H))
    return LevelDiagram(grid, np.array(rows))
