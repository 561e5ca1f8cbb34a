"""Operator algebra for composite spin systems.

Every spin uses the basis ordered by descending magnetic quantum number
(s, s-1, ..., -s) and composite spaces follow the site order of the
:class:`SpinSystem`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PAULI",
    "PauliDecomposition",
    "SpinSystem",
    "as_density",
    "embed",
    "fidelity",
    "kron_all",
    "partial_trace",
    "pauli_decompose",
    "spin_operators",
    "validate_density",
    "validate_ket",
]

PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _twice_spin(s: float) -> int:
    two_s = Fraction(s).limit_denominator(1000) * 2
    if two_s.denominator != 1 or abs(float(two_s) - 2 * float(s)) > 1e-12 or two_s < 0:
        raise ValueError(f"spin must be a non-negative half-integer, got {s!r}")
    return int(two_s)


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular momentum matrices for spin ``s``.

    Parameters
    ----------
    s : float
        Spin magnitude; ``2*s`` must be a non-negative integer.

    Returns
    -------
    Sx, Sy, Sz : ndarray
        Hermitian ``(2s+1, 2s+1)`` matrices in the descending-m basis.
    """
    two_s = _twice_spin(s)
    spin = two_s / 2
    m = spin - np.arange(two_s + 1)
    # <m+1|S+|m> sits on the first superdiagonal in descending order
    sp = np.diag(np.sqrt(spin * (spin + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def kron_all(ops: Iterable[np.ndarray]) -> np.ndarray:
    """Kronecker product of a sequence of matrices, left to right."""
    return reduce(np.kron, ops)


@dataclass(frozen=True)
class SpinSystem:
    """Ordered collection of spins defining a composite Hilbert space.

    Parameters
    ----------
    spins : sequence of float
        Half-integer spin magnitudes in site order.
    names : sequence of str, optional
        Human-readable site names used in labels and error messages.
    """

    spins: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        spins = tuple(float(s) for s in self.spins)
        if not spins:
            raise ValueError("a spin system needs at least one site")
        for s in spins:
            if _twice_spin(s) < 1:
                raise ValueError("every site must have dimension >= 2")
        object.__setattr__(self, "spins", spins)
        names = tuple(self.names) or tuple(f"site{k}" for k in range(len(spins)))
        if len(names) != len(spins):
            raise ValueError("names must match the number of sites")
        object.__setattr__(self, "names", names)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(_twice_spin(s) + 1 for s in self.spins)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.spins)

    def m_values(self, site: int) -> np.ndarray:
        """Magnetic quantum numbers of ``site`` in basis order."""
        s = self.spins[site]
        return s - np.arange(self.dims[site])

    def operators(self, site: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Embedded (Sx, Sy, Sz) of one site."""
        return tuple(embed(self, site, op) for op in spin_operators(self.spins[site]))

    def basis_labels(self) -> list[tuple[float, ...]]:
        """Magnetic quantum numbers of every product basis state."""
        grids = np.meshgrid(*[self.m_values(k) for k in range(self.n_sites)], indexing="ij")
        return [tuple(float(g.flat[i]) for g in grids) for i in range(self.total_dim)]

    def index(self, label: Sequence[float]) -> int:
        """Product-basis index of a tuple of magnetic quantum numbers."""
        if len(label) != self.n_sites:
            raise ValueError(f"label {label!r} needs {self.n_sites} entries")
        idx = []
        for site, m in enumerate(label):
            pos = self.spins[site] - float(m)
            k = int(round(pos))
            if abs(pos - k) > 1e-9 or not 0 <= k < self.dims[site]:
                raise ValueError(f"m={m} is not a level of site {self.names[site]}")
            idx.append(k)
        return int(np.ravel_multi_index(idx, self.dims))


def embed(system: SpinSystem, site: int, op: np.ndarray) -> np.ndarray:
    """Place a single-site operator into the composite space.

    Parameters
    ----------
    system : SpinSystem
    site : int
        Site index the operator acts on.
    op : ndarray
        Square matrix of size ``system.dims[site]``.
    """
    if not 0 <= site < system.n_sites:
        raise IndexError(f"site {site} out of range")
    op = np.asarray(op, dtype=complex)
    if op.shape != (system.dims[site],) * 2:
        raise ValueError(f"operator shape {op.shape} does not match site dimension {system.dims[site]}")
    factors = [np.eye(d, dtype=complex) for d in system.dims]
    factors[site] = op
    return kron_all(factors)


def validate_ket(psi: np.ndarray, dim: int | None = None, atol: float = 1e-12) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if dim is not None and psi.size != dim:
        raise ValueError(f"ket has length {psi.size}, expected {dim}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > atol:
        raise ValueError(f"ket is not normalized (norm {norm:.3e})")
    return psi


def validate_density(rho: np.ndarray, dim: int | None = None, atol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"density matrix has dimension {rho.shape[0]}, expected {dim}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > atol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.12f}")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -atol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def as_density(state: np.ndarray) -> np.ndarray:
    """Return a density matrix for a ket or pass a matrix through."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def partial_trace(rho: np.ndarray, system: SpinSystem, keep: Iterable[int]) -> np.ndarray:
    """Reduced density matrix on the sites in ``keep`` (kept in site order)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep or any(k < 0 or k >= system.n_sites for k in keep):
        raise ValueError(f"invalid keep set {keep}")
    rho = np.asarray(rho, dtype=complex)
    n = system.n_sites
    dims = system.dims
    t = rho.reshape(dims + dims)
    # contract traced sites one at a time, highest first so axis numbers stay valid
    traced = [k for k in range(n) if k not in keep]
    cur = n
    for k in reversed(traced):
        t = np.trace(t, axis1=k, axis2=k + cur)
        cur -= 1
    d = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d, d)


def fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """State fidelity ``<psi|rho|psi>`` with a pure target."""
    rho = as_density(rho)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if rho.shape != (psi.size, psi.size):
        raise ValueError(f"dimension mismatch: rho {rho.shape}, psi {psi.size}")
    return float(np.real(psi.conj() @ rho @ psi))


@dataclass(frozen=True)
class PauliDecomposition:
    """Qubit Pauli components of a qubit-qudit density matrix.

    ``sigma_tilde[a] = Tr_qubit[(sigma_a x 1) rho]`` so that
    ``rho = (1 x st0 + sum_i sigma_i x st_i) / 2``.
    """

    sigma_tilde: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def reconstruct(self) -> np.ndarray:
        return 0.5 * sum(np.kron(p, s) for p, s in zip(PAULI, self.sigma_tilde))


def pauli_decompose(rho: np.ndarray) -> PauliDecomposition:
    """Decompose an 8x8 (qubit first, spin-3/2 second) density matrix."""
    rho = as_density(rho)
    if rho.shape != (8, 8):
        raise ValueError(f"expected an 8x8 qubit-qudit density matrix, got {rho.shape}")
    blocks = rho.reshape(2, 4, 2, 4).transpose(0, 2, 1, 3)  # blocks[s, s'] = <s|rho|s'>
    st = tuple(np.einsum("ts,st...->...", p, blocks) for p in PAULI)
    return PauliDecomposition(st)
