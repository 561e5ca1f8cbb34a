import numpy as np
import pytest
from scipy.linalg import expm

from quditbell.dynamics import propagate_unitary
from quditbell.grape import (
    GrapeConfig,
    GrapeProblem,
    GrapeResult,
    grape_fidelity,
    grape_forward,
    grape_gradient,
    grape_optimize,
    problem_from_model,
)
from quditbell.model import GAUSS, build_dimer, dimer_subspace
from quditbell.qspace import PAULI


def random_hermitian(d, rng, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_unitary(d, rng):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_problem(rng, d=8, n_ctrl=2, N=12, sub=None, drift_frame=False):
    H0 = random_hermitian(d, rng, 0.05)
    # one gauss of control gives ~0.02 rad/ns
    ctrls = tuple(random_hermitian(d, rng, 0.02 / GAUSS) for _ in range(n_ctrl))
    n = d if sub is None else len(sub)
    return GrapeProblem(H0, ctrls, N, 30.0, [(-5.0, 5.0)] * n_ctrl, random_unitary(n, rng), sub, drift_frame)


def qubit_problem(N=20, T=100.0, target=None):
    ctrl = (PAULI[1] / 2 * 0.05 / GAUSS, PAULI[2] / 2 * 0.05 / GAUSS)
    tgt = PAULI[1] if target is None else target
    return GrapeProblem(np.zeros((2, 2)), ctrl, N, T, [(-2.0, 2.0)] * 2, tgt, drift_frame=False)


def test_zero_amplitudes_give_free_evolution():
    rng = np.random.default_rng(0)
    p = random_problem(rng)
    U, segs = grape_forward(p, np.zeros((p.N, p.n_controls)))
    assert segs.shape == (p.N, 8, 8)
    assert np.allclose(U, expm(-1j * p.H0 * p.T), atol=1e-12)


def test_forward_single_segment_and_oracle():
    rng = np.random.default_rng(1)
    p = random_problem(rng, N=1)
    a = rng.uniform(-5, 5, (1, 2))
    H = p.H0 + GAUSS * (a[0, 0] * p.controls[0] + a[0, 1] * p.controls[1])
    assert np.allclose(grape_forward(p, a)[0], expm(-1j * H * p.T), atol=1e-11)
    p = random_problem(rng, N=7)
    a = rng.uniform(-5, 5, (7, 2))
    U = propagate_unitary([(p.H0 + GAUSS * (r[0] * p.controls[0] + r[1] * p.controls[1]), p.dt) for r in a])
    assert np.max(np.abs(grape_forward(p, a)[0] - U)) < 1e-10


def test_fidelity_extremes_and_phase_invariance():
    p = qubit_problem()
    assert grape_fidelity(PAULI[1], p) == pytest.approx(1.0, abs=1e-14)
    assert grape_fidelity(np.exp(0.9j) * PAULI[1], p) == pytest.approx(1.0, abs=1e-14)
    assert grape_fidelity(np.eye(2), p) == pytest.approx(0.0, abs=1e-14)


def test_fidelity_restricted_to_subspace():
    rng = np.random.default_rng(2)
    d, sub = 6, np.array([0, 2, 3])
    tgt = random_unitary(3, rng)
    p = GrapeProblem(np.zeros((d, d)), (np.eye(d),), 4, 10.0, [(-1, 1)], tgt, sub, drift_frame=False)
    U = np.eye(d, dtype=complex)
    U[np.ix_(sub, sub)] = tgt
    # anything outside the subspace is ignored
    rest = [1, 4, 5]
    U[np.ix_(rest, rest)] = random_unitary(3, rng)
    assert grape_fidelity(U, p) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(10 + seed)
    sub = np.array([0, 1, 4, 6]) if seed == 2 else None
    p = random_problem(rng, sub=sub)
    a = rng.uniform(-3, 3, (p.N, p.n_controls))
    g = grape_gradient(p, a)

    def F(x):
        return grape_fidelity(grape_forward(p, x)[0], p)

    h = 1e-4
    num = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        e = np.zeros_like(a)
        e[idx] = h
        num[idx] = (F(a + e) - F(a - e)) / (2 * h)
    assert np.max(np.abs(g - num)) < 1e-5 * max(1.0, np.max(np.abs(num)))


def test_gradient_with_degenerate_segment_spectrum():
    # zero drift and zero amplitudes make every segment Hamiltonian degenerate
    p = qubit_problem(N=5, T=20.0)
    a = np.zeros((5, 2))
    a[2, 0] = 0.5
    F = lambda x: grape_fidelity(grape_forward(p, x)[0], p)  # noqa: E731
    h = 1e-5
    for idx in [(0, 0), (2, 0), (4, 1)]:
        e = np.zeros_like(a)
        e[idx] = h
        assert grape_gradient(p, a)[idx] == pytest.approx((F(a + e) - F(a - e)) / (2 * h), abs=1e-7)


def test_gradient_vanishes_at_optimum_and_for_null_control():
    p = qubit_problem(N=4, T=100.0)
    # a constant x drive of a gauss rotates by 0.05*a*T, so this is a pi pulse
    a = np.zeros((4, 2))
    a[:, 0] = np.pi / (0.05 * 100.0)
    assert grape_fidelity(grape_forward(p, a)[0], p) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(grape_gradient(p, a))) < 1e-10
    rng = np.random.default_rng(3)
    q = GrapeProblem(random_hermitian(4, rng), (np.zeros((4, 4)), random_hermitian(4, rng, 1e3)), 3, 5.0,
                     [(-1, 1)] * 2, random_unitary(4, rng), drift_frame=False)
    g = grape_gradient(q, rng.uniform(-1, 1, (3, 2)))
    assert np.all(g[:, 0] == 0)


def test_optimize_reaches_target_within_bounds():
    p = qubit_problem()
    res = grape_optimize(p, config=GrapeConfig(seed=4))
    assert res.fidelity >= 0.9999 and res.converged
    assert np.all(np.abs(res.amplitudes) <= 2.0)
    assert res.seed == 4 and res.dt == p.dt
    assert res.trace[-1] >= res.trace[0]
    # the L-BFGS-B iterate sequence is non-decreasing in fidelity
    assert all(b >= a - 1e-12 for a, b in zip(res.trace[1:], res.trace[2:]))


def test_optimize_identity_from_zero_is_immediate():
    p = qubit_problem(target=np.eye(2))
    res = grape_optimize(p, init=np.zeros((p.N, 2)))
    assert res.converged and res.fidelity == pytest.approx(1.0)
    assert np.all(res.amplitudes == 0)


def test_optimize_reports_unreachable_target():
    # a single z control cannot produce an x rotation: report, do not raise
    ctrl = (PAULI[3] / 2 * 0.05 / GAUSS,)
    p = GrapeProblem(np.zeros((2, 2)), ctrl, 4, 10.0, [(-1, 1)], PAULI[1], drift_frame=False)
    res = grape_optimize(p, config=GrapeConfig(restarts=1, max_iter=50))
    assert not res.converged and res.fidelity < 0.01
    assert res.attempts == 2


def test_dimer_problem_and_nyquist():
    m = build_dimer()
    sub = dimer_subspace(m)
    p = problem_from_model(m, np.eye(8), sub)
    assert p.dt == pytest.approx(0.625)
    assert p.nyquist_mhz == pytest.approx(800.0)
    assert p.amp_bounds == ((-75.0, 75.0),)
    # identity in the drift frame is free evolution
    short = problem_from_model(m, np.eye(8), sub, N=10, T=20.0)
    U, _ = grape_forward(short, np.zeros((10, 1)))
    assert grape_fidelity(U, short) == pytest.approx(1.0, abs=1e-12)


def test_result_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    amps = rng.uniform(-75, 75, (16, 2))
    res = GrapeResult(amps, 0.99, dt=0.625)
    path = tmp_path / "a.csv"
    res.to_csv(path)
    back = GrapeResult.from_csv(path)
    assert np.array_equal(back.amplitudes, amps)
    assert back.dt == 0.625
    block = res.to_block(("y", "x"), t_start=3.0)
    assert block.duration == pytest.approx(10.0)


def test_problem_validation():
    rng = np.random.default_rng(6)
    H = random_hermitian(3, rng)
    U = random_unitary(3, rng)
    with pytest.raises(ValueError):
        GrapeProblem(np.triu(H) + 1.0j * np.eye(3), (H,), 2, 1.0, [(-1, 1)], U)
    with pytest.raises(ValueError):
        GrapeProblem(H, (), 2, 1.0, [], U)
    with pytest.raises(ValueError):
        GrapeProblem(H, (H,), 0, 1.0, [(-1, 1)], U)
    with pytest.raises(ValueError):
        GrapeProblem(H, (H,), 2, 1.0, [(1, -1)], U)
    with pytest.raises(ValueError):
        GrapeProblem(H, (H,), 2, 1.0, [(-1, 1)], 2 * U)
    with pytest.raises(ValueError):
        # non-diagonal drift mixes the subspace with the rest
        GrapeProblem(H, (H,), 2, 1.0, [(-1, 1)], np.eye(2), [0, 1], drift_frame=True)
    p = GrapeProblem(H, (H,), 2, 1.0, [(-1, 1)], U)
    with pytest.raises(ValueError):
        grape_forward(p, np.zeros((3, 1)))
