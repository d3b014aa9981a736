"""Garding smoothing, finite-difference generators, and the identity suite."""

import json

import numpy as np
import pytest

from scbundle.actions import (heisenberg_weyl_action, oscillator_action,
                              translations_r2_action)
from scbundle.dynamics import ClassicalState
from scbundle.errors import AlignmentError, InputError
from scbundle.fiber import DimConfig
from scbundle.generators import (
    GeneratorApplication, SmoothingKernel, base_derivative, garding_smooth,
    generator_apply, identity_suite, lattice_kernel, residual_report_json,
)
from scbundle.sections import (BaseFunction, LatticeAxis, OrbitSampling,
                               Section, gentle_probe_section, pairing,
                               smooth_probe_section)

H = 0.15


@pytest.fixture(scope="module")
def weyl():
    cfg = DimConfig(1, 12)
    action, _ = heisenberg_weyl_action(cfg)
    anchor = ClassicalState(0.0, [0.4], [-0.2])
    axes = [LatticeAxis.line(H, -4, 4), LatticeAxis.line(H, -4, 4),
            LatticeAxis.line(H * H, -12, 12)]
    return action, OrbitSampling(action, anchor, axes)


@pytest.fixture(scope="module")
def smoothed(weyl):
    action, sampling = weyl
    rng = np.random.default_rng(0)
    probe = gentle_probe_section(sampling, rng, max_degree=3,
                                 sigma=[0.4, 0.4, 0.35])
    kernel = lattice_kernel(sampling, radius=[0.16, 0.16, 0.07])
    return garding_smooth(kernel, probe, action)


def smooth_alpha():
    return BaseFunction(
        fn=lambda X: np.exp(1j * X.Q[0]) * (1 + 0.3 * X.P[0]),
        batch=lambda rows: np.exp(1j * rows[:, 2]) * (1 + 0.3 * rows[:, 1]))


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------

def test_smoothing_delta_kernel_is_identity(weyl):
    action, sampling = weyl
    rng = np.random.default_rng(1)
    probe = smooth_probe_section(sampling, rng, 3, radius=[0.4, 0.4, 0.1])
    # support radius below one lattice spacing leaves only the identity node
    kernel = lattice_kernel(sampling, radius=[0.9 * H, 0.9 * H, 0.9 * H * H])
    assert len(kernel.weights) == 1 and kernel.mass == pytest.approx(1.0)
    out = garding_smooth(kernel, probe, action)
    assert np.max(np.abs(out.values - probe.values)) <= 1e-12


def test_smoothing_approximates_identity_with_shrinking_support(weyl):
    action, sampling = weyl
    rng = np.random.default_rng(2)
    probe = gentle_probe_section(sampling, rng, 3, sigma=[0.4, 0.4, 0.35])
    drifts = []
    for radius in ([0.45, 0.45, 0.09], [0.3, 0.3, 0.06], [0.16, 0.16, 0.033]):
        kernel = lattice_kernel(sampling, radius=radius)
        out = garding_smooth(kernel, probe, action)
        drifts.append((out - probe).norm)
    assert drifts[0] > drifts[1] > drifts[2]


def test_smoothing_linearity(weyl):
    action, sampling = weyl
    rng = np.random.default_rng(3)
    phi1 = smooth_probe_section(sampling, rng, 3, radius=[0.4, 0.4, 0.1])
    phi2 = smooth_probe_section(sampling, rng, 3, radius=[0.4, 0.4, 0.1])
    kernel = lattice_kernel(sampling, radius=[0.3, 0.3, 0.05])
    a = 1.7 - 0.4j
    lhs = garding_smooth(kernel, a * phi1 + phi2, action)
    rhs = a * garding_smooth(kernel, phi1, action) + garding_smooth(kernel, phi2, action)
    assert (lhs - rhs).norm <= 1e-12


def test_smoothing_lattice_path_matches_field_path(weyl):
    action, sampling = weyl
    rng = np.random.default_rng(4)
    probe = smooth_probe_section(sampling, rng, 3, radius=[0.25, 0.25, 0.05])
    kernel = lattice_kernel(sampling, radius=[0.2, 0.2, 0.04])
    by_field = garding_smooth(kernel, probe, action)
    lattice_only = Section(sampling, probe.values)
    by_lattice = garding_smooth(kernel, lattice_only, action)
    assert np.max(np.abs(by_field.values - by_lattice.values)) <= 1e-12


def test_smoothing_support_growth(weyl):
    # smoothed support stays inside (probe support) + (kernel support)
    action, sampling = weyl
    rng = np.random.default_rng(5)
    probe = smooth_probe_section(sampling, rng, 3, radius=[0.25, 0.25, 0.05])
    kernel = lattice_kernel(sampling, radius=[0.2, 0.2, 0.04])
    out = garding_smooth(kernel, probe, action)
    probe_support = sampling.steps[np.linalg.norm(probe.values, axis=1) > 1e-14]
    out_support = sampling.steps[np.linalg.norm(out.values, axis=1) > 1e-14]
    # Minkowski bound per axis in lattice steps
    for axis in range(3):
        lo = probe_support[:, axis].min() - kernel.radius_steps[axis] - 1
        hi = probe_support[:, axis].max() + kernel.radius_steps[axis] + 1
        assert out_support[:, axis].min() >= lo
        assert out_support[:, axis].max() <= hi


def test_smoothing_left_translation_covariance(weyl):
    # transforming the smoothed section equals smoothing with the
    # left-translated kernel (left invariance of the node weights)
    from scbundle.sections import evaluator_transform
    action, sampling = weyl
    rng = np.random.default_rng(6)
    probe = gentle_probe_section(sampling, rng, 3, sigma=[0.3, 0.3, 0.25])
    kernel = lattice_kernel(sampling, radius=[0.2, 0.2, 0.04])
    g = sampling.action.group.element(
        sampling.action.group.compose_exps([H, -H, 0.0]))
    lhs = evaluator_transform(action, g, garding_smooth(kernel, probe, action))
    translated = SmoothingKernel(
        sampling,
        kernel.node_steps,
        np.einsum("ab,kbc->kac", g.matrix, kernel.node_mats),
        kernel.weights,
        kernel.radius_steps)
    rhs_field = garding_smooth(translated, probe, action)
    assert np.max(np.abs(lhs.values - rhs_field.values)) <= 1e-10


def test_kernel_must_fit_window(weyl):
    _, sampling = weyl
    with pytest.raises(InputError):
        lattice_kernel(sampling, radius=[10 * H, 0.2, 0.04])


# ---------------------------------------------------------------------------
# generator application
# ---------------------------------------------------------------------------

def test_generator_zero_direction(weyl, smoothed):
    action, sampling = weyl
    A = action.group.algebra([0.0, 0.0, 0.0])
    app = generator_apply(A, smoothed, action, tau=1e-3, estimate_order=False)
    assert app.result.norm <= 1e-12


def test_generator_linearity(weyl, smoothed):
    action, _ = weyl
    G = action.group
    A1, A2 = G.algebra([1.0, 0.0, 0.0]), G.algebra([0.0, 1.0, 0.5])
    tau = 1e-3
    both = generator_apply(A1 + A2, smoothed, action, tau, estimate_order=False)
    sep = (generator_apply(A1, smoothed, action, tau, estimate_order=False).result
           + generator_apply(A2, smoothed, action, tau, estimate_order=False).result)
    assert (both.result - sep).norm <= 1e-4


def test_generator_order_estimate_on_smoothed(weyl, smoothed):
    action, _ = weyl
    A = action.group.algebra([0.6, -0.8, 0.3])
    app = generator_apply(A, smoothed, action, tau=2e-3)
    assert isinstance(app, GeneratorApplication)
    assert app.order_estimate >= 1.9


def test_generator_refuses_lattice_only_sections(weyl):
    action, sampling = weyl
    values = np.zeros((len(sampling), sampling.fiber_dim), dtype=complex)
    values[sampling.identity_index(), 0] = 1.0
    psi = Section(sampling, values)
    with pytest.raises(AlignmentError):
        generator_apply(action.group.algebra([1.0, 0, 0]), psi, action, 1e-3)


def test_generator_richardson_refines(weyl, smoothed):
    action, _ = weyl
    A = action.group.algebra([1.0, 0.0, 0.0])
    plain = generator_apply(A, smoothed, action, 4e-3, estimate_order=False)
    rich = generator_apply(A, smoothed, action, 4e-3, richardson=True,
                           estimate_order=False)
    fine = generator_apply(A, smoothed, action, 2.5e-4, estimate_order=False)
    err_plain = (plain.result - fine.result).norm
    err_rich = (rich.result - fine.result).norm
    assert err_rich < err_plain


def test_oscillator_generator_fiber_and_phase_term():
    # At the anchor, the time-translation generator acts as the fluctuation
    # matrix (the analytic derivative of the diagonal phases, diag(k + 1/2))
    # plus the classical action rate of the base flow.
    cfg = DimConfig(1, 10)
    action, _ = oscillator_action(cfg)
    anchor = ClassicalState(0.0, [0.7], [0.4])
    ht = 0.05
    sampling = OrbitSampling(action, anchor, [LatticeAxis.line(ht, -40, 40)])
    rng = np.random.default_rng(7)
    v = rng.standard_normal(cfg.dim) + 1j * rng.standard_normal(cfg.dim)
    v[5:] = 0.0

    rows_cache = {}
    def field(mats):
        rows = sampling.state_rows(mats)
        t = action.group.coords_batch(mats)[:, 0]
        envelope = np.exp(-0.5 * (t / 0.5) ** 2)
        return (np.exp(1j * rows[:, 0]) * envelope)[:, None] * v[None, :]

    psi = Section.from_field(sampling, field)
    A = action.group.algebra([1.0])
    tau = 1e-3
    app = generator_apply(A, psi, action, tau, estimate_order=False)
    got = app.result.values[sampling.identity_index()]
    # analytic: [diag(k+1/2) + dS/dt] psi(anchor) -- the pulled-back argument
    # flips the sign of the action-rate term; envelope even at 0
    levels = np.arange(cfg.dim) + 0.5
    s_rate = anchor.P[0] ** 2 - 0.5 * (anchor.P[0] ** 2 + anchor.Q[0] ** 2)
    expected = (levels + s_rate) * (np.exp(1j * anchor.S) * v)
    assert np.max(np.abs(got - expected)) <= 50 * tau ** 2


# ---------------------------------------------------------------------------
# base derivative
# ---------------------------------------------------------------------------

def test_base_derivative_constant_function(weyl, smoothed):
    action, sampling = weyl
    A = action.group.algebra([0.5, -0.2, 0.1])
    const = BaseFunction(fn=lambda X: 2.3 + 0j,
                         batch=lambda rows: np.full(rows.shape[0], 2.3 + 0j))
    d = base_derivative(A, const, action, sampling, 1e-3)
    assert d.sup <= 1e-12


def test_base_derivative_translation_coordinate():
    cfg = DimConfig(1, 6)
    action, _ = translations_r2_action(cfg)
    anchor = ClassicalState(0.0, [0.0], [0.0])
    sampling = OrbitSampling(
        action, anchor,
        [LatticeAxis.line(0.2, -3, 3), LatticeAxis.line(0.2, -3, 3)])
    alpha = BaseFunction(fn=lambda X: X.Q[0], batch=lambda rows: rows[:, 2])
    A = action.group.algebra([1.0, 0.0])
    d = base_derivative(A, alpha, action, sampling, 1e-3)
    assert np.max(np.abs(d.values - 1.0)) <= 1e-10


def test_base_derivative_of_pairing_has_field(weyl, smoothed):
    action, sampling = weyl
    A = action.group.algebra([1.0, 0.0, 0.0])
    d = base_derivative(A, pairing(smoothed, smoothed), action, sampling, 1e-3)
    assert d.field is not None
    assert np.all(np.isfinite(d.values))


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

FLOOR = 1e-9


def test_identity_suite_heisenberg(weyl, smoothed):
    action, sampling = weyl
    G = action.group
    A, B = G.algebra([1.0, 0.0, 0.0]), G.algebra([0.0, 1.0, 0.0])
    conj = G.element(G.compose_exps([H, H, 0.0]))
    res = identity_suite(A, B, smooth_alpha(), smoothed, action, tau=1e-3,
                         conjugator=conj)
    by_name = {r.name: r for r in res}
    assert set(by_name) == {"linearity", "conjugation", "commutator",
                            "multiplication", "pairing_derivative"}
    for r in res:
        contracted = 1.0 if r.name == "commutator" else 2.0
        assert (r.refined_residual <= FLOOR
                or r.order_estimate >= contracted - 0.15), r.name
    assert by_name["commutator"].residual <= 1e-4


def test_identity_suite_abelian_commutator_vanishes():
    cfg = DimConfig(1, 8)
    action, _ = translations_r2_action(cfg)
    anchor = ClassicalState(0.0, [0.1], [0.3])
    sampling = OrbitSampling(
        action, anchor,
        [LatticeAxis.line(0.15, -4, 4), LatticeAxis.line(0.15, -4, 4)])
    rng = np.random.default_rng(8)
    probe = gentle_probe_section(sampling, rng, 4, sigma=[0.4, 0.4])
    kernel = lattice_kernel(sampling, radius=[0.2, 0.2])
    psi = garding_smooth(kernel, probe, action)
    G = action.group
    A, B = G.algebra([1.0, 0.0]), G.algebra([0.0, 1.0])
    res = identity_suite(A, B, smooth_alpha(), psi, action, tau=1e-3)
    comm = [r for r in res if r.name == "commutator"][0]
    assert comm.residual <= 1e-4


def test_identity_suite_constant_alpha_vanishes(weyl, smoothed):
    action, _ = weyl
    G = action.group
    A, B = G.algebra([1.0, 0.0, 0.0]), G.algebra([0.0, 1.0, 0.0])
    const = BaseFunction(fn=lambda X: 1.5 + 0j,
                         batch=lambda rows: np.full(rows.shape[0], 1.5 + 0j))
    res = identity_suite(A, B, const, smoothed, action, tau=1e-3)
    mult = [r for r in res if r.name == "multiplication"][0]
    assert mult.residual <= 1e-6


def test_residual_report_json(weyl, smoothed):
    action, _ = weyl
    G = action.group
    A, B = G.algebra([1.0, 0.0, 0.0]), G.algebra([0.0, 0.0, 1.0])
    res = identity_suite(A, B, smooth_alpha(), smoothed, action, tau=2e-3)
    payload = json.loads(residual_report_json(res))
    assert all(set(rec) == {"name", "tau", "residual", "refined_residual",
                            "order_estimate"} for rec in payload)
