import itertools
import math

import numpy as np
import pytest

from quditbell.bell import (
    BellObservables,
    CGLMPSettings,
    DegenerateObservablesError,
    ProbabilityTable,
    bell_operator,
    cglmp_classical_max,
    cglmp_functional,
    cglmp_probabilities,
    cglmp_unitaries,
    chsh_classical_max,
    chsh_diagonal_terms,
    chsh_maximize,
    chsh_max_value,
    chsh_objective,
    chsh_term_measurement,
    maximally_entangled_qudits,
    psi_chsh_target,
    reducibility_check,
)
from quditbell.qspace import PAULI, pauli_decompose

SQRT7 = math.sqrt(7)


def haar(d, rng):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_ket(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


@pytest.fixture(scope="module")
def target_result():
    return chsh_maximize(psi_chsh_target())


def rotated_set(psi, result):
    out = []
    for i, j in itertools.product((1, 2), (1, 2)):
        v = np.kron(result.U_A[i - 1], result.U_B[j - 1]) @ psi
        out.append(np.outer(v, v.conj()))
    return out


# --- CHSH maximization ------------------------------------------------------


def test_target_state_value(target_result):
    assert target_result.value == pytest.approx(2.64575, abs=1e-5)
    assert target_result.value == pytest.approx(SQRT7, abs=1e-9)


def test_reported_angles_are_also_maximizers(target_result):
    st = np.stack(pauli_decompose(psi_chsh_target()).sigma_tilde[1:])
    assert chsh_objective(st, [0.0, math.pi, 0.0])[0] == pytest.approx(SQRT7, abs=1e-9)
    assert chsh_objective(st, target_result.angles)[0] == pytest.approx(SQRT7, abs=1e-9)


def test_observables_are_dichotomic_and_reproduce_value(target_result):
    o = target_result.observables
    for op in (o.A, o.A_prime, o.B, o.B_prime):
        assert np.allclose(op @ op, np.eye(op.shape[0]), atol=1e-9)
        assert np.allclose(op, op.conj().T)
    assert target_result.expectation(psi_chsh_target()) == pytest.approx(SQRT7, abs=1e-9)
    with pytest.raises(ValueError):
        BellObservables(o.A, o.A_prime, 0.5 * o.B, o.B_prime)


def test_bell_operator_bound():
    # Tsirelson: no state exceeds 2 sqrt 2 for any dichotomic observables
    rng = np.random.default_rng(0)
    for _ in range(5):
        u2, u4 = haar(2, rng), haar(4, rng)
        A, Ap = u2 @ PAULI[3] @ u2.conj().T, PAULI[1]
        B = u4 @ np.diag([1, -1, 1, -1]) @ u4.conj().T
        Bp = np.diag([1, 1, -1, -1]).astype(complex)
        ev = np.linalg.eigvalsh(bell_operator(BellObservables(A, Ap, B, Bp)))
        assert np.max(np.abs(ev)) <= 2 * math.sqrt(2) + 1e-9


def test_product_state_does_not_violate():
    rng = np.random.default_rng(1)
    for _ in range(5):
        psi = np.kron(random_ket(2, rng), random_ket(4, rng))
        value, _ = chsh_max_value(psi)
        assert value <= 2 + 1e-9


def test_embedded_bell_state_reaches_tsirelson():
    psi = np.zeros(8, complex)
    psi[0] = psi[5] = 1 / math.sqrt(2)
    assert chsh_maximize(psi).value == pytest.approx(2 * math.sqrt(2), abs=1e-8)


def test_local_unitary_invariance():
    rng = np.random.default_rng(2)
    psi = psi_chsh_target()
    # qudit unitaries leave the maximal value unchanged; the search is over qubit directions
    for _ in range(3):
        moved = np.kron(np.eye(2), haar(4, rng)) @ psi
        assert chsh_max_value(moved)[0] == pytest.approx(SQRT7, abs=1e-6)
    moved = np.kron(haar(2, rng), np.eye(4)) @ psi
    assert chsh_max_value(moved)[0] == pytest.approx(SQRT7, abs=1e-6)


def test_random_states_value_consistency():
    rng = np.random.default_rng(3)
    for _ in range(5):
        psi = random_ket(8, rng)
        res = chsh_maximize(psi)
        assert 2 - 1e-9 <= res.value <= 2 * math.sqrt(2) + 1e-9
        assert res.expectation(psi) == pytest.approx(res.value, abs=1e-6)


def test_degenerate_observables():
    # a product state with the qubit along z gives r_B = r_B' = 0
    psi = np.zeros(8, complex)
    psi[0] = 1
    with pytest.raises(DegenerateObservablesError) as err:
        chsh_maximize(psi)
    assert err.value.value == pytest.approx(2.0)


def test_result_serializes(target_result):
    d = target_result.to_dict()
    assert d["value"] == pytest.approx(SQRT7)
    assert len(d["D"]) == 2 and len(d["D"][0]) == 4


# --- reducibility -----------------------------------------------------------


def test_target_is_not_reducible():
    res = reducibility_check(psi_chsh_target())
    assert not res.reducible
    assert res.witness == pytest.approx(0.25)


def test_reducible_cases():
    rng = np.random.default_rng(4)
    assert reducibility_check(np.kron(random_ket(2, rng), random_ket(4, rng))).reducible
    psi = np.zeros(8, complex)
    psi[0] = psi[5] = 1 / math.sqrt(2)
    assert reducibility_check(psi).reducible
    psi = np.zeros(8, complex)
    psi[[1, 2, 4, 7]] = 0.5  # orthogonal qudit blocks
    assert reducibility_check(psi).reducible


def test_reducibility_invariant_under_qudit_unitaries():
    rng = np.random.default_rng(5)
    for _ in range(3):
        u = np.kron(np.eye(2), haar(4, rng))
        res = reducibility_check(u @ psi_chsh_target())
        assert not res.reducible and abs(res.witness) == pytest.approx(0.25)


# --- diagonal CHSH measurement ----------------------------------------------


def test_diagonal_terms_reconstruct_value(target_result):
    psi = psi_chsh_target()
    terms, combo = chsh_diagonal_terms(rotated_set(psi, target_result), target_result.D)
    assert combo == pytest.approx(SQRT7, abs=1e-8)
    for (i, j) in itertools.product((1, 2), (1, 2)):
        direct = chsh_term_measurement(psi, target_result, (i, j))
        assert terms[f"O{i}{j}"] == pytest.approx(direct, abs=1e-10)
        assert chsh_term_measurement(psi, target_result, (i, j), permuted=True) == pytest.approx(direct, abs=1e-10)


def test_diagonal_terms_maximally_mixed():
    terms, combo = chsh_diagonal_terms([np.eye(8) / 8] * 4)
    assert all(v == pytest.approx(0.0, abs=1e-15) for v in terms.values())
    assert combo == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        chsh_diagonal_terms([np.eye(8) / 8] * 3)


def test_classical_chsh_bound():
    assert chsh_classical_max() == 2.0


# --- CGLMP ------------------------------------------------------------------


def cglmp_rotated(psi, settings=CGLMPSettings()):
    u = cglmp_unitaries(settings)
    out = []
    for ua, ub in itertools.product(u[:2], u[2:]):
        v = np.kron(ua, ub) @ psi
        out.append(np.outer(v, v.conj()))
    return out


def test_cglmp_unitaries_are_unitary():
    for u in cglmp_unitaries():
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)


def test_cglmp_maximally_entangled_value():
    table = cglmp_probabilities(cglmp_rotated(maximally_entangled_qudits()))
    assert cglmp_functional(table) == pytest.approx(2.89624, abs=1e-5)


def test_cglmp_probabilities_analytic():
    # P(A_a = k, B_b = l) = 1/(2 d^3 sin^2(pi (k - l + a + b) / d)) for the maximally entangled state
    s = CGLMPSettings()
    table = cglmp_probabilities(cglmp_rotated(maximally_entangled_qudits()))
    d = 4
    for (i, a), (j, b) in itertools.product(enumerate(s.alphas, 1), enumerate(s.betas, 1)):
        for k, l in itertools.product(range(d), repeat=2):
            expected = 1 / (2 * d**3 * math.sin(math.pi * (k - l + a + b) / d) ** 2)
            assert table[(i, j)][k, l] == pytest.approx(expected, abs=1e-12)


def test_cglmp_uniform_and_classical():
    uniform = ProbabilityTable({k: np.full((4, 4), 1 / 16) for k in itertools.product((1, 2), (1, 2))})
    assert cglmp_functional(uniform) == pytest.approx(0.0, abs=1e-14)
    assert cglmp_classical_max() == pytest.approx(2.0)
    rng = np.random.default_rng(6)
    for _ in range(3):
        psi = np.kron(random_ket(4, rng), random_ket(4, rng))
        assert cglmp_functional(cglmp_probabilities(cglmp_rotated(psi))) <= 2 + 1e-9


def test_cglmp_cyclic_relabel_invariance():
    base = cglmp_probabilities(cglmp_rotated(maximally_entangled_qudits()))
    shifted = ProbabilityTable({k: np.roll(np.roll(t, 1, axis=0), 1, axis=1) for k, t in base.tables.items()})
    assert cglmp_functional(shifted) == pytest.approx(cglmp_functional(base), abs=1e-12)


def test_probability_table_validation():
    with pytest.raises(ValueError):
        ProbabilityTable({(1, 1): np.full((4, 4), 0.1)})
    with pytest.raises(ValueError):
        cglmp_probabilities([np.eye(16) / 16] * 3)
    with pytest.raises(ValueError):
        cglmp_probabilities([np.eye(8) / 8] * 4)
