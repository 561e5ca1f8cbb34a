"""CHSH and CGLMP inequality mathematics for qubit-qudit and qudit-qudit states."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .qspace import PAULI, as_density, pauli_decompose, validate_ket

__all__ = [
    "BellObservables",
    "CGLMPSettings",
    "CHSHResult",
    "DegenerateObservablesError",
    "ProbabilityTable",
    "ReducibilityResult",
    "bell_operator",
    "cglmp_classical_max",
    "cglmp_functional",
    "cglmp_probabilities",
    "cglmp_unitaries",
    "chsh_classical_max",
    "chsh_diagonal_terms",
    "chsh_max_value",
    "chsh_maximize",
    "chsh_objective",
    "chsh_term_measurement",
    "euler_zyz",
    "maximally_entangled_qudits",
    "psi_chsh_target",
    "reducibility_check",
]

SZ2 = np.diag([1.0, -1.0]).astype(complex)  # 2*Sz of the qubit, up first
D1_DEFAULT = np.diag([-1.0, 1.0, 1.0, 1.0])
D2_DEFAULT = np.diag([1.0, -1.0, 1.0, 1.0])


class DegenerateObservablesError(ArithmeticError):
    """``r_B + r_B'`` or ``r_B - r_B'`` vanishes, leaving A or A' undefined.

    The maximal value and angles found before the failure are attached.
    """

    def __init__(self, message: str, value: float, angles: tuple[float, float, float]):
        super().__init__(message)
        self.value = value
        self.angles = angles


def psi_chsh_target() -> np.ndarray:
    """The non-reducible qubit-qudit target state used for the CHSH test.

    ``(|up,3/2> + |up,-1/2> + |down,-1/2> + |down,-3/2>) / 2`` in the
    8-dim (qubit first, descending m) basis.
    """
    psi = np.zeros(8, dtype=complex)
    psi[[0, 2, 6, 7]] = 0.5
    return psi


def maximally_entangled_qudits(d: int = 4) -> np.ndarray:
    """``sum_m |m>|m> / sqrt(d)`` on two qudits."""
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def _is_dichotomic(op: np.ndarray, tol: float = 1e-9) -> bool:
    if np.max(np.abs(op - op.conj().T)) > tol:
        return False
    ev = np.linalg.eigvalsh(op)
    return bool(np.all(np.minimum(np.abs(ev - 1), np.abs(ev + 1)) < tol))


@dataclass(frozen=True)
class BellObservables:
    """Dichotomic observables A, A' (qubit) and B, B' (qudit)."""

    A: np.ndarray
    A_prime: np.ndarray
    B: np.ndarray
    B_prime: np.ndarray

    def __post_init__(self):
        for name in ("A", "A_prime", "B", "B_prime"):
            op = np.asarray(getattr(self, name), dtype=complex)
            if not _is_dichotomic(op):
                raise ValueError(f"{name} is not a Hermitian observable with spectrum in {{+1, -1}}")
            object.__setattr__(self, name, op)


def bell_operator(obs: BellObservables) -> np.ndarray:
    """``A x (B + B') + A' x (B - B')``."""
    return np.kron(obs.A, obs.B + obs.B_prime) + np.kron(obs.A_prime, obs.B - obs.B_prime)


def euler_zyz(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation ``Rz(alpha) Ry(beta) Rz(gamma)`` as a 3x3 real matrix."""

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])

    c, s = np.cos(beta), np.sin(beta)
    ry = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return rz(alpha) @ ry @ rz(gamma)


def _rotated(st: np.ndarray, R: np.ndarray) -> np.ndarray:
    # st has shape (3, 4, 4); returns (R st)_k = sum_l R_kl st_l
    return np.einsum("...kl,lij->...kij", R, st)


def chsh_objective(st: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """``2 [(sum|lambda1|)^2 + (sum|lambda2|)^2]^(1/2)`` for a batch of angle triples."""
    angles = np.atleast_2d(angles)
    R = np.stack([euler_zyz(*a) for a in angles])
    rot = _rotated(st, R[:, :2, :])
    lam = np.linalg.eigvalsh(rot)
    s = np.abs(lam).sum(axis=-1)
    return 2 * np.sqrt((s**2).sum(axis=-1))


def _canonical_angles(a: np.ndarray) -> tuple[float, float, float]:
    # map onto alpha, gamma in [0, 2pi), beta in [0, pi]
    al, be, ga = (float(x) for x in a)
    be = np.mod(be, 2 * np.pi)
    if be > np.pi:
        be = 2 * np.pi - be
        al += np.pi
        ga += np.pi
    tidy = lambda x: 0.0 if abs(x) < 1e-12 or abs(x - 2 * np.pi) < 1e-12 else x  # noqa: E731
    return tidy(np.mod(al, 2 * np.pi)), float(be), tidy(np.mod(ga, 2 * np.pi))


def chsh_max_value(psi: np.ndarray, n_grid: int = 24, n_refine: int = 10) -> tuple[float, tuple[float, float, float]]:
    """Maximize the rotated-eigenvalue CHSH formula over z-y-z Euler angles.

    Returns the maximal value and the maximizing angles. Ties within 1e-9
    are resolved in favour of the lexicographically smallest angle tuple.
    """
    psi = validate_ket(psi, 8, atol=1e-10)
    st = np.stack(pauli_decompose(psi).sigma_tilde[1:])
    al = np.linspace(0, 2 * np.pi, n_grid, endpoint=False)
    be = np.linspace(0, np.pi, n_grid)
    grid = np.array(list(itertools.product(al, be, al)))
    vals = chsh_objective(st, grid)
    best = np.argsort(-vals, kind="stable")[:n_refine]
    candidates = [(float(vals[k]), _canonical_angles(grid[k])) for k in best]
    for k in best:
        res = minimize(
            lambda a: -chsh_objective(st, a)[0],
            grid[k],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000},
        )
        candidates.append((float(-res.fun), _canonical_angles(res.x)))
    top = max(v for v, _ in candidates)
    ties = sorted(a for v, a in candidates if v >= top - 1e-9)
    angles = ties[0]
    return float(chsh_objective(st, np.array(angles))[0]), angles


def _sign_matrix(op: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrix sign with sign(0) = +1; returns (sign(op), eigenvalues, eigenvectors)."""
    lam, vec = np.linalg.eigh(op)
    lam = np.where(np.abs(lam) < 1e-12, 0.0, lam)
    sgn = np.where(lam >= 0, 1.0, -1.0)
    return (vec * sgn) @ vec.conj().T, lam, vec


def _diagonalizer(vec: np.ndarray, lam: np.ndarray, pattern: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation U with ``U^dag D U = sign`` observable, D following ``pattern`` when possible."""
    sgn = np.where(lam >= 0, 1.0, -1.0)
    want = np.diag(pattern)
    if np.sum(sgn < 0) == np.sum(want < 0):
        neg = list(np.flatnonzero(sgn < 0))
        pos = list(np.flatnonzero(sgn >= 0))
        order = [neg.pop(0) if w < 0 else pos.pop(0) for w in want]
        D = pattern
    else:
        order = list(np.argsort(sgn, kind="stable"))
        D = np.diag(sgn[order])
    return vec[:, order].conj().T, D


def _qubit_diagonalizer(A: np.ndarray) -> np.ndarray:
    """U with ``U^dag (-sigma_z) U = A`` for a dichotomic 2x2 observable A."""
    lam, vec = np.linalg.eigh(A)  # ascending: -1 then +1
    return vec.conj().T


@dataclass(frozen=True)
class CHSHResult:
    """Maximal CHSH value for a qubit-qudit pure state and its observables.

    ``U_A[i]`` and ``U_B[j]`` rotate the state so that each product term
    becomes the diagonal operator ``(-sigma_z) x D_j``:
    ``A_i = U_A[i]^dag (-sigma_z) U_A[i]`` and ``B_j = U_B[j]^dag D_j U_B[j]``.
    """

    value: float
    angles: tuple[float, float, float]
    observables: BellObservables
    r_B: np.ndarray
    r_B_prime: np.ndarray
    D: tuple[np.ndarray, np.ndarray]
    U_A: tuple[np.ndarray, np.ndarray]
    U_B: tuple[np.ndarray, np.ndarray]

    def expectation(self, psi: np.ndarray) -> float:
        rho = as_density(psi)
        return float(np.real(np.trace(bell_operator(self.observables) @ rho)))

    def to_dict(self) -> dict:
        mat = lambda m: {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}  # noqa: E731
        o = self.observables
        return {
            "value": self.value,
            "angles_rad": list(self.angles),
            "observables": {k: mat(getattr(o, k)) for k in ("A", "A_prime", "B", "B_prime")},
            "r_B": self.r_B.tolist(),
            "r_B_prime": self.r_B_prime.tolist(),
            "D": [np.diag(d).real.tolist() for d in self.D],
        }


def chsh_maximize(psi: np.ndarray, n_grid: int = 24, n_refine: int = 10) -> CHSHResult:
    """Maximal CHSH violation and the observables that reach it.

    Raises
    ------
    DegenerateObservablesError
        When ``|r_B + r_B'|`` or ``|r_B - r_B'|`` vanishes.
    """
    psi = validate_ket(psi, 8, atol=1e-10)
    value, angles = chsh_max_value(psi, n_grid, n_refine)
    st_all = pauli_decompose(psi).sigma_tilde
    st = np.stack(st_all[1:])
    rot = _rotated(st, euler_zyz(*angles))
    B, lam1, vec1 = _sign_matrix(rot[0])
    Bp, lam2, vec2 = _sign_matrix(rot[1])
    r_B = np.real([np.trace(s @ B) for s in st])
    r_Bp = np.real([np.trace(s @ Bp) for s in st])
    plus, minus = r_B + r_Bp, r_B - r_Bp
    for vec, name in ((plus, "r_B + r_B'"), (minus, "r_B - r_B'")):
        if np.linalg.norm(vec) < 1e-9:
            raise DegenerateObservablesError(f"{name} vanishes; qubit observable undefined", value, angles)
    r_A = plus / np.linalg.norm(plus)
    r_Ap = minus / np.linalg.norm(minus)
    A = sum(c * p for c, p in zip(r_A, PAULI[1:]))
    Ap = sum(c * p for c, p in zip(r_Ap, PAULI[1:]))
    obs = BellObservables(A, Ap, B, Bp)
    UB1, D1 = _diagonalizer(vec1, lam1, D1_DEFAULT)
    UB2, D2 = _diagonalizer(vec2, lam2, D2_DEFAULT)
    result = CHSHResult(
        value=value,
        angles=angles,
        observables=obs,
        r_B=r_B,
        r_B_prime=r_Bp,
        D=(D1, D2),
        U_A=(_qubit_diagonalizer(A), _qubit_diagonalizer(Ap)),
        U_B=(UB1, UB2),
    )
    check = result.expectation(psi)
    if abs(check - value) > 1e-6:
        raise RuntimeError(f"constructed observables give {check:.9f}, formula gives {value:.9f}")
    return result


@dataclass(frozen=True)
class ReducibilityResult:
    reducible: bool
    witness: complex
    reason: str


def reducibility_check(psi: np.ndarray, tol: float = 1e-10) -> ReducibilityResult:
    """Whether a local qudit unitary maps the state to a qubit-qubit form.

    The witness is the Hermitian inner product of the qudit blocks attached
    to qubit up and qubit down. Zero witness means the blocks are orthogonal
    and the state is reducible; parallel blocks (a product state) are also
    reducible.
    """
    psi = validate_ket(psi, 8, atol=1e-10)
    a, b = psi[:4], psi[4:]
    w = complex(np.vdot(a, b))
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if abs(w) <= tol:
        return ReducibilityResult(True, w, "orthogonal qudit blocks")
    if abs(abs(w) - na * nb) <= tol:
        return ReducibilityResult(True, w, "parallel qudit blocks (product state)")
    return ReducibilityResult(False, w, "qudit blocks neither orthogonal nor parallel")


def chsh_diagonal_terms(
    rho_set: Sequence[np.ndarray],
    D: tuple[np.ndarray, np.ndarray] = (D1_DEFAULT, D2_DEFAULT),
) -> tuple[dict[str, float], float]:
    """Diagonal-measurement CHSH terms on the four rotated states.

    ``rho_set`` is ordered (A1B1, A1B2, A2B1, A2B2). Returns the terms
    ``O_ij = Tr[(-2Sz x D_j) rho_ij]`` and ``O11 + O12 + O21 - O22``.
    """
    if len(rho_set) != 4:
        raise ValueError("need four rotated density matrices (A1B1, A1B2, A2B1, A2B2)")
    terms = {}
    for (i, j), rho in zip(itertools.product((1, 2), (1, 2)), rho_set):
        rho = as_density(rho)
        if rho.shape != (8, 8):
            raise ValueError("rotated states must be 8x8")
        if abs(np.trace(rho).real - 1) > 1e-6 or np.max(np.abs(rho - rho.conj().T)) > 1e-8:
            raise ValueError(f"rho_A{i}B{j} is not a valid density matrix")
        op = np.kron(-SZ2, D[j - 1])
        terms[f"O{i}{j}"] = float(np.real(np.trace(op @ rho)))
    combo = terms["O11"] + terms["O12"] + terms["O21"] - terms["O22"]
    return terms, combo


def chsh_term_measurement(psi: np.ndarray, result: CHSHResult, term: tuple[int, int], permuted: bool = False) -> float:
    """``<A_i x B_j>`` measured as a diagonal observable on the rotated state.

    With ``permuted`` the qudit levels are first reordered so the -1 entry of
    ``D_j`` comes first, and the two-qubit-like operator ``sigma_z x D`` is
    evaluated in that order (same expectation, since the permutation is
    unitary and diagonal-permuting).
    """
    i, j = term
    U = np.kron(result.U_A[i - 1], result.U_B[j - 1])
    rotated = U @ np.asarray(psi, dtype=complex)
    D = result.D[j - 1]
    if permuted:
        order = np.argsort(np.diag(D).real, kind="stable")
        P = np.eye(4)[order]
        rotated = np.kron(np.eye(2), P) @ rotated
        D = P @ D @ P.T
    op = np.kron(-SZ2, D)
    return float(np.real(np.vdot(rotated, op @ rotated)))


def chsh_classical_max() -> float:
    """Largest |<O>| over deterministic diagonal +-1 assignments (exact integers)."""
    best = 0
    for a, ap, b, bp in itertools.product((1, -1), repeat=4):
        best = max(best, abs(a * (b + bp) + ap * (b - bp)))
    return float(best)


@dataclass(frozen=True)
class CGLMPSettings:
    """Measurement settings of the d = 4 CGLMP test.

    ``labels`` maps qudit basis index (descending m) to outcome value.
    """

    d: int = 4
    alphas: tuple[float, float] = (0.0, 0.5)
    betas: tuple[float, float] = (0.25, -0.25)
    labels: tuple[int, ...] = (0, 1, 2, 3)


def cglmp_unitaries(settings: CGLMPSettings = CGLMPSettings()):
    """``(U1A, U2A, U1B, U2B)`` with ``[U]_kl = exp(2 pi i l (a +- k)/d)/sqrt(d)``, 0-based k, l."""
    d = settings.d
    k, l = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    ua = [np.exp(2j * np.pi * l * (a + k) / d) / np.sqrt(d) for a in settings.alphas]
    ub = [np.exp(2j * np.pi * l * (b - k) / d) / np.sqrt(d) for b in settings.betas]
    return ua[0], ua[1], ub[0], ub[1]


@dataclass(frozen=True)
class ProbabilityTable:
    """Joint outcome probabilities ``P[(a, b)][k, l] = P(A_a = k, B_b = l)``."""

    tables: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, t in self.tables.items():
            t = np.asarray(t, dtype=float)
            if t.min() < -1e-9 or abs(t.sum() - 1) > 1e-9:
                raise ValueError(f"table {key} is not a probability distribution")

    def __getitem__(self, key) -> np.ndarray:
        return np.asarray(self.tables[key])

    def to_dict(self) -> dict:
        return {f"A{a}B{b}": np.asarray(t).tolist() for (a, b), t in self.tables.items()}


def cglmp_probabilities(rho_set: Sequence[np.ndarray], settings: CGLMPSettings = CGLMPSettings()) -> ProbabilityTable:
    """Joint outcome tables from the diagonals of four rotated two-qudit states.

    ``rho_set`` is ordered (A1B1, A1B2, A2B1, A2B2); each state lives on the
    ``d*d`` two-qudit space.
    """
    d = settings.d
    if len(rho_set) != 4:
        raise ValueError("need four rotated density matrices (A1B1, A1B2, A2B1, A2B2)")
    lab = np.asarray(settings.labels)
    out = {}
    for key, rho in zip(itertools.product((1, 2), (1, 2)), rho_set):
        diag = np.real(np.diag(as_density(rho)))
        if diag.size != d * d:
            raise ValueError(f"expected {d * d}-dim two-qudit states")
        if diag.min() < -1e-7:
            raise ValueError(f"negative probability {diag.min():.2e} in rho_A{key[0]}B{key[1]}")
        p = np.clip(diag, 0, None).reshape(d, d)
        p /= p.sum()
        t = np.zeros((d, d))
        t[np.ix_(lab, lab)] = p
        out[key] = t
    return ProbabilityTable(out)


def _p_diff(t: np.ndarray, shift: int, d: int) -> float:
    """P(X - Y = shift mod d) for a table with X on rows."""
    k = np.arange(d)
    return float(sum(t[k, (k - shift) % d]))


def cglmp_functional(table: ProbabilityTable, d: int = 4) -> float:
    """CGLMP value ``I_d`` from the four joint tables.

    ``I = sum_k (1 - 2k/(d-1)) {[P(A1=B1+k) + P(B1=A2+k+1) + P(A2=B2+k) + P(B2=A1+k)]
    - [P(A1=B1-k-1) + P(B1=A2-k) + P(A2=B2-k-1) + P(B2=A1-k-1)]}``
    with k = 0 .. d/2 - 1 and equalities mod d.
    """
    t11, t12, t21, t22 = (table[(a, b)] for a, b in itertools.product((1, 2), (1, 2)))
    total = 0.0
    for k in range(d // 2):
        c = 1 - 2 * k / (d - 1)
        # rows are always A, columns B: B1 = A2 + s  <=>  A2 - B1 = -s
        pos = _p_diff(t11, k, d) + _p_diff(t21, -(k + 1), d) + _p_diff(t22, k, d) + _p_diff(t12, -k, d)
        neg = _p_diff(t11, -(k + 1), d) + _p_diff(t21, k, d) + _p_diff(t22, -(k + 1), d) + _p_diff(t12, k + 1, d)
        total += c * (pos - neg)
    return total


def cglmp_classical_max(d: int = 4) -> float:
    """Maximum of the functional over all deterministic local strategies."""
    best = -np.inf
    for a1, a2, b1, b2 in itertools.product(range(d), repeat=4):
        tabs = {}
        for (i, ai), (j, bj) in itertools.product(((1, a1), (2, a2)), ((1, b1), (2, b2))):
            t = np.zeros((d, d))
            t[ai, bj] = 1.0
            tabs[(i, j)] = t
        best = max(best, cglmp_functional(ProbabilityTable(tabs), d))
    return float(best)
