"""Classical flow, fluctuation propagator, evolution automorphism, wave
packet synthesis and the grid reference solver."""

import numpy as np
import pytest

from scbundle.dynamics import (
    ClassicalState, HamiltonianSpec, ansatz_error, ansatz_wavefunction,
    classical_flow, cubic_perturbed_spec, evolution_automorphism,
    fluctuation_propagator, l2_distance, quadratic_hamiltonian_spec,
    reference_schrodinger,
)
from scbundle.errors import InputError, NumericalError, ResolutionError
from scbundle.fiber import (DimConfig, FiberVector, inner, momentum_operator,
                            unitarity_residual, unitary_from_hamiltonian)

OSC = quadratic_hamiltonian_spec([[1.0]])
FREE = quadratic_hamiltonian_spec([[0.0]])


def ground_state(n_cut=16):
    cfg = DimConfig(1, n_cut)
    c = np.zeros(cfg.dim, dtype=complex)
    c[0] = 1.0
    return FiberVector(c, cfg)


# ---------------------------------------------------------------------------
# classical flow
# ---------------------------------------------------------------------------

def test_free_flight_closed_form():
    tr = classical_flow(FREE, ClassicalState(0.0, [1.0], [0.0]), 1.0, 1e-3)
    assert tr.final.S == pytest.approx(0.5, abs=1e-12)
    assert tr.final.P[0] == pytest.approx(1.0, abs=1e-12)
    assert tr.final.Q[0] == pytest.approx(1.0, abs=1e-12)


def test_oscillator_closed_orbit():
    tr = classical_flow(OSC, ClassicalState(0.0, [0.0], [1.0]), 2 * np.pi, 1e-3)
    assert abs(tr.final.P[0]) <= 1e-8
    assert abs(tr.final.Q[0] - 1.0) <= 1e-8
    assert abs(tr.final.S) <= 1e-8


def test_zero_time_trajectory():
    X0 = ClassicalState(0.3, [0.2], [-0.4])
    tr = classical_flow(OSC, X0, 0.0, 1e-3)
    assert len(tr) == 1 and tr.final is X0


def test_rk4_fourth_order_scaling():
    X0 = ClassicalState(0.0, [0.0], [1.0])
    T = 2.0
    exact = ClassicalState(
        -0.25 * np.sin(2 * T), [-np.sin(T)], [np.cos(T)])
    errors = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = classical_flow(OSC, X0, T, dt)
        errors.append(tr.final.distance(exact))
    for e0, e1 in zip(errors, errors[1:]):
        assert 8.0 <= e0 / e1 <= 32.0   # dt^4 within a factor 2 of 16


def test_energy_conservation_oscillator():
    tr = classical_flow(OSC, ClassicalState(0.0, [0.4], [0.9]), 2 * np.pi, 1e-3)
    assert tr.energy_drift <= 1e-8


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_flow_blowup_reports_time():
    # dQ/dt = Q^2 escapes to infinity in finite time
    blowup = HamiltonianSpec(
        value=lambda Q, P: float(P[0] * Q[0] ** 2),
        grad_q=lambda Q, P: np.array([2 * P[0] * Q[0]]),
        grad_p=lambda Q, P: np.array([Q[0] ** 2]),
        hess_qq=lambda Q, P: np.array([[2 * P[0]]]),
        hess_qp=lambda Q, P: np.array([[2 * Q[0]]]),
        hess_pp=lambda Q, P: np.zeros((1, 1)),
        n=1)
    with pytest.raises(NumericalError, match="t ="):
        classical_flow(blowup, ClassicalState(0.0, [0.0], [1.0]), 40.0, 0.05)


def test_flow_input_validation():
    X0 = ClassicalState(0.0, [0.0], [1.0])
    with pytest.raises(InputError):
        classical_flow(OSC, X0, np.inf, 1e-3)
    with pytest.raises(InputError):
        classical_flow(OSC, X0, 1.0, -1e-3)
    with pytest.raises(InputError):
        classical_flow(OSC, X0, 1e-4, 1e-3)


def test_hamiltonian_spec_validation():
    probes = [ClassicalState(0.0, [0.3], [0.7]), ClassicalState(0.0, [-1.1], [0.2])]
    assert cubic_perturbed_spec().validate(probes) <= 1e-6
    broken = HamiltonianSpec(
        value=lambda Q, P: float(0.5 * (P[0] ** 2 + Q[0] ** 2)),
        grad_q=lambda Q, P: np.array([2.0 * Q[0]]),   # wrong by a factor 2
        grad_p=lambda Q, P: np.array([P[0]]),
        hess_qq=lambda Q, P: np.eye(1),
        hess_qp=lambda Q, P: np.zeros((1, 1)),
        hess_pp=lambda Q, P: np.eye(1),
        n=1)
    with pytest.raises(InputError):
        broken.validate(probes)


def test_trajectory_csv_export(tmp_path):
    tr = classical_flow(OSC, ClassicalState(0.0, [0.0], [1.0]), 0.01, 1e-3)
    path = tmp_path / "trajectory.csv"
    tr.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,S,P_1,Q_1"
    assert len(lines) == len(tr) + 1


# ---------------------------------------------------------------------------
# fluctuation propagator
# ---------------------------------------------------------------------------

def test_propagator_zero_time_identity():
    cfg = DimConfig(1, 8)
    tr = classical_flow(OSC, ClassicalState(0.0, [0.0], [1.0]), 0.0, 1e-3)
    U = fluctuation_propagator(OSC, tr, cfg)
    assert np.allclose(U.matrix, np.eye(cfg.dim))


def test_propagator_oscillator_diagonal_phases():
    cfg = DimConfig(1, 16)
    t = 1.3
    tr = classical_flow(OSC, ClassicalState(0.0, [0.2], [0.8]), t, 1e-3)
    U = fluctuation_propagator(OSC, tr, cfg)
    expected = np.diag(np.exp(-1j * t * (np.arange(16) + 0.5)))
    assert np.max(np.abs(U.matrix - expected)) <= 1e-6


def test_propagator_free_particle_matches_exponential_oracle():
    cfg = DimConfig(1, 16)
    t = 0.7
    tr = classical_flow(FREE, ClassicalState(0.0, [1.0], [0.0]), t, 1e-3)
    U = fluctuation_propagator(FREE, tr, cfg)
    # independent matrix-exponential oracle: the kinetic generator p^2/2
    # written out from the known ladder matrix elements
    k = np.arange(cfg.dim, dtype=float)
    kinetic = np.diag((2 * k + 1) / 4.0).astype(complex)
    off = -np.sqrt((k[:-2] + 1) * (k[:-2] + 2)) / 4.0
    kinetic += np.diag(off, 2) + np.diag(off, -2)
    from scipy.linalg import expm
    oracle = expm(-1j * t * kinetic)
    assert np.max(np.abs(U.matrix - oracle)) <= 1e-6


def test_propagator_time_dependent_unitarity():
    cfg = DimConfig(1, 12)
    tr = classical_flow(cubic_perturbed_spec(), ClassicalState(0.0, [0.0], [1.0]),
                        1.0, 1e-3)
    U = fluctuation_propagator(cubic_perturbed_spec(), tr, cfg)
    assert unitarity_residual(U) <= 1e-8


# ---------------------------------------------------------------------------
# evolution automorphism
# ---------------------------------------------------------------------------

def test_automorphism_zero_time_identity():
    cfg = DimConfig(1, 8)
    aut = evolution_automorphism(OSC, 0.0, 1e-3, cfg)
    X = ClassicalState(0.1, [0.5], [-0.3])
    assert aut.base_map(X).distance(X) == 0.0
    assert np.allclose(aut.fiber_map(X).matrix, np.eye(cfg.dim))


def test_automorphism_composition_law():
    cfg = DimConfig(1, 16)
    t1, t2 = 0.3, 0.7
    a1 = evolution_automorphism(OSC, t1, 1e-3, cfg)
    a2 = evolution_automorphism(OSC, t2, 1e-3, cfg)
    a12 = evolution_automorphism(OSC, t1 + t2, 1e-3, cfg)
    X = ClassicalState(0.0, [0.3], [0.9])
    base_res = a1.base_map(a2.base_map(X)).distance(a12.base_map(X))
    assert base_res <= 1e-8
    left = a1.fiber_map(a2.base_map(X)).matrix @ a2.fiber_map(X).matrix
    right = a12.fiber_map(X).matrix
    assert np.linalg.norm(left - right) <= 1e-6
    assert unitarity_residual(a12.fiber_map(X)) <= 1e-8


# ---------------------------------------------------------------------------
# ansatz synthesis
# ---------------------------------------------------------------------------

def test_ansatz_ground_mode_real_gaussian():
    xs = np.linspace(-8, 8, 2048)
    eps = 0.1
    X = ClassicalState(0.0, [0.0], [0.7])
    psi = ansatz_wavefunction(X, ground_state(), eps, xs)
    assert np.max(np.abs(psi.imag)) <= 1e-12
    assert xs[np.argmax(np.abs(psi))] == pytest.approx(0.7, abs=xs[1] - xs[0])
    oracle = (np.pi * eps) ** -0.25 * np.exp(-(xs - 0.7) ** 2 / (2 * eps))
    assert np.max(np.abs(psi - oracle)) <= 1e-10


def test_ansatz_unit_norm():
    xs = np.linspace(-10, 10, 4096)
    rng = np.random.default_rng(1)
    cfg = DimConfig(1, 10)
    c = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    f = FiberVector(c, cfg).normalized()
    psi = ansatz_wavefunction(ClassicalState(0.2, [0.4], [-0.5]), f, 0.05, xs)
    norm = np.sqrt(np.sum(np.abs(psi) ** 2) * (xs[1] - xs[0]))
    assert abs(norm - 1.0) <= 1e-6


def test_ansatz_value_at_center():
    eps = 0.07
    S = 0.43
    # place Q exactly on a grid node
    xs = np.linspace(-8, 8, 2049)
    X = ClassicalState(S, [0.0], [0.0])
    f = ground_state()
    psi = ansatz_wavefunction(X, f, eps, xs)
    at_q = psi[np.argmin(np.abs(xs))]
    expected = np.exp(1j * S / eps) * np.pi ** -0.25 * eps ** -0.25
    assert abs(at_q - expected) <= 1e-12


def test_ansatz_resolution_guard():
    xs = np.linspace(-8, 8, 64)
    X = ClassicalState(0.0, [2.0], [0.0])
    with pytest.raises(ResolutionError):
        ansatz_wavefunction(X, ground_state(), 0.01, xs)


# ---------------------------------------------------------------------------
# reference solver
# ---------------------------------------------------------------------------

def test_reference_free_gaussian_spreading():
    eps = 0.05
    xs = np.linspace(-12, 12, 4096)
    P, Q, S = 0.6, -0.4, 0.0
    X0 = ClassicalState(S, [P], [Q])
    psi0 = ansatz_wavefunction(X0, ground_state(), eps, xs)
    T = 1.0
    got = reference_schrodinger(FREE, psi0, eps, T, xs, dt=2.5e-4)
    # analytic spreading Gaussian for the free equation
    Qt = Q + P * T
    St = S + 0.5 * P ** 2 * T
    xi = (xs - Qt) / np.sqrt(eps)
    profile = np.pi ** -0.25 / np.sqrt(1 + 1j * T) * np.exp(-xi ** 2 / (2 * (1 + 1j * T)))
    oracle = eps ** -0.25 * np.exp(1j * (St + P * (xs - Qt)) / eps) * profile
    assert l2_distance(got, oracle, xs[1] - xs[0]) <= 1e-6


def test_reference_zero_time():
    xs = np.linspace(-10, 10, 1024)
    psi0 = np.exp(-xs ** 2)
    out = reference_schrodinger(OSC, psi0, 0.1, 0.0, xs, dt=1e-3)
    assert np.array_equal(out, psi0)


def test_reference_norm_conservation_oscillator():
    eps = 0.08
    xs = np.linspace(-12, 12, 4096)
    psi0 = ansatz_wavefunction(ClassicalState(0.0, [0.0], [1.0]),
                               ground_state(), eps, xs)
    out = reference_schrodinger(OSC, psi0, eps, 1.0, xs, dt=2.5e-4)
    dx = xs[1] - xs[0]
    n0 = np.sqrt(np.sum(np.abs(psi0) ** 2) * dx)
    n1 = np.sqrt(np.sum(np.abs(out) ** 2) * dx)
    assert abs(n1 - n0) <= 1e-8


def test_reference_requires_separable_form():
    nonseparable = quadratic_hamiltonian_spec([[1.0]], m_qp=[[0.5]])
    xs = np.linspace(-10, 10, 512)
    with pytest.raises(InputError):
        reference_schrodinger(nonseparable, np.exp(-xs ** 2), 0.1, 0.1, xs, 1e-3)


# ---------------------------------------------------------------------------
# ansatz error
# ---------------------------------------------------------------------------

def test_ansatz_error_zero_time():
    xs = np.linspace(-14, 14, 4096)
    err = ansatz_error(OSC, ClassicalState(0.0, [0.0], [1.0]), ground_state(),
                       0.05, 0.0, xs)
    assert err <= 1e-10


def test_ansatz_exact_for_quadratic_hamiltonian():
    xs = np.linspace(-16, 16, 8192)
    err = ansatz_error(OSC, ClassicalState(0.0, [0.0], [1.0]), ground_state(),
                       0.04, 1.0, xs, dt=1e-3)
    assert err <= 1e-5


def test_ansatz_error_decreases_with_eps_for_cubic():
    xs = np.linspace(-16, 16, 8192)
    H = cubic_perturbed_spec(1.0, 0.1)
    errs = [ansatz_error(H, ClassicalState(0.0, [0.0], [1.0]), ground_state(),
                         eps, 1.0, xs, dt=1e-3) for eps in (0.08, 0.04)]
    assert errs[1] < errs[0]
