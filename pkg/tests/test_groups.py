"""Lie group/algebra layer: exponential, bracket, adjoint, factorization,
Haar quadrature."""

import itertools

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from scbundle import groups
from scbundle.errors import ClosureError, InputError, OutOfDomainError
from scbundle.groups import (
    Window, adjoint, bracket, exp, factorize_second_kind, get_group,
    haar_quadrature, smooth_bump,
)

ALL_GROUPS = ["real_line", "translations_r2", "heisenberg", "so2", "su2"]


def taylor_exp(M, terms=60):
    """Independent scaling-and-squaring Taylor oracle for the matrix
    exponential (machine precision for the small matrices used here)."""
    M = np.asarray(M, dtype=complex)
    s = max(0, int(np.ceil(np.log2(max(np.linalg.norm(M, 2), 1e-30)))) + 1)
    X = M / 2 ** s
    out = np.eye(M.shape[0], dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


# ---------------------------------------------------------------------------
# exp
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_exp_zero_is_identity(gid):
    g = get_group(gid)
    A = g.algebra(0.3 * np.arange(1, g.dim + 1))
    assert np.allclose(exp(A, 0.0).matrix, np.eye(g.rep_dim), atol=1e-14)


def test_exp_heisenberg_single_offdiagonal():
    g = get_group("heisenberg")
    X = g.algebra([1.0, 0.0, 0.0])
    got = exp(X, 1.0).matrix
    assert np.allclose(got, taylor_exp(X.matrix), atol=1e-14)
    expected = np.eye(3)
    expected[0, 1] = 1.0
    assert np.allclose(got, expected, atol=1e-14)


def test_exp_so2_quarter_turn():
    g = get_group("so2")
    J = g.algebra([1.0])
    got = exp(J, np.pi / 2).matrix
    assert np.allclose(got, taylor_exp(J.matrix * np.pi / 2), atol=1e-13)
    assert np.allclose(got, [[0.0, -1.0], [1.0, 0.0]], atol=1e-13)


@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_exp_one_parameter_property(gid):
    g = get_group(gid)
    rng = np.random.default_rng(11)
    A = g.algebra(0.4 * rng.standard_normal(g.dim))
    for s, t in [(0.3, 0.5), (-0.2, 0.7), (1.1, -0.4)]:
        lhs = exp(A, s + t).matrix
        rhs = exp(A, s).matrix @ exp(A, t).matrix
        assert np.linalg.norm(lhs - rhs) <= 1e-10


def test_exp_rejects_nonfinite_parameter():
    g = get_group("so2")
    with pytest.raises(InputError):
        exp(g.algebra([1.0]), np.nan)


# ---------------------------------------------------------------------------
# bracket / adjoint
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_bracket_antisymmetry_on_self(gid):
    g = get_group(gid)
    A = g.algebra(np.linspace(0.2, 1.0, g.dim))
    assert np.linalg.norm(bracket(A, A).coords) <= 1e-14


def test_bracket_heisenberg_central():
    g = get_group("heisenberg")
    X, P = g.algebra([1, 0, 0]), g.algebra([0, 1, 0])
    got = bracket(X, P)
    direct = X.matrix @ P.matrix - P.matrix @ X.matrix
    assert np.allclose(got.matrix, direct)
    assert np.allclose(got.coords, [0.0, 0.0, 1.0], atol=1e-14)


def test_bracket_su2_cyclic():
    # su(2) with B_k = -i sigma_k / 2 carries the same structure constants
    # as the rotation algebra: [B_1, B_2] = B_3.
    g = get_group("su2")
    B1, B2 = g.algebra([1, 0, 0]), g.algebra([0, 1, 0])
    got = bracket(B1, B2)
    direct = B1.matrix @ B2.matrix - B2.matrix @ B1.matrix
    assert np.allclose(got.matrix, direct)
    assert np.allclose(got.coords, [0.0, 0.0, 1.0], atol=1e-12)


def test_bracket_closure_error_outside_basis():
    # A two-element "algebra" that is not closed: {E12, E13} in gl(3).
    basis = np.zeros((2, 3, 3))
    basis[0, 0, 1] = 1.0
    basis[1, 1, 2] = 1.0
    g = groups.LieGroup("open_algebra_test", basis, factorization_radius=1.0)
    A, B = g.algebra([1, 0]), g.algebra([0, 1])
    with pytest.raises(ClosureError):
        bracket(A, B)


@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_jacobi_identity_on_basis_triples(gid):
    g = get_group(gid)
    basis = [g.algebra(np.eye(g.dim)[k]) for k in range(g.dim)]
    for A, B, C in itertools.product(basis, repeat=3):
        s = (bracket(A, bracket(B, C)).matrix
             + bracket(B, bracket(C, A)).matrix
             + bracket(C, bracket(A, B)).matrix)
        assert np.linalg.norm(s) <= 1e-10


def test_adjoint_identity_case():
    g = get_group("heisenberg")
    A = g.algebra([0.3, -0.7, 0.2])
    got = adjoint(g.identity(), A)
    assert np.allclose(got.coords, A.coords, atol=1e-14)


def test_adjoint_derivative_matches_bracket():
    # d/dt h(t) A h(t)^-1 at t=0 equals [B, A]; central differences, step 1e-5.
    g = get_group("heisenberg")
    A = g.algebra([0.4, 0.1, -0.3])
    B = g.algebra([-0.2, 0.8, 0.5])
    h_step = 1e-5
    plus = adjoint(exp(B, h_step), A).coords
    minus = adjoint(exp(B, -h_step), A).coords
    fd = (plus - minus) / (2 * h_step)
    assert np.linalg.norm(fd - bracket(B, A).coords) <= 1e-8


def test_adjoint_abelian_group_trivial():
    g = get_group("so2")
    A = g.algebra([0.9])
    got = adjoint(exp(A, 1.234), A)
    assert np.allclose(got.coords, A.coords, atol=1e-12)


@pytest.mark.parametrize("gid", ["heisenberg", "su2"])
def test_adjoint_composition(gid):
    g = get_group(gid)
    rng = np.random.default_rng(5)
    A = g.algebra(rng.standard_normal(g.dim) * 0.5)
    g1 = exp(g.algebra(rng.standard_normal(g.dim) * 0.4))
    g2 = exp(g.algebra(rng.standard_normal(g.dim) * 0.4))
    lhs = adjoint(g1 @ g2, A).coords
    rhs = adjoint(g1, adjoint(g2, A)).coords
    assert np.linalg.norm(lhs - rhs) <= 1e-10


# ---------------------------------------------------------------------------
# second-kind factorization
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_factorize_identity(gid):
    g = get_group(gid)
    t = factorize_second_kind(g.identity())
    assert np.allclose(t, 0.0, atol=1e-12)


@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_factorize_first_axis(gid):
    g = get_group(gid)
    B1 = g.algebra(np.eye(g.dim)[0])
    t = factorize_second_kind(exp(B1, 0.37))
    expected = np.zeros(g.dim)
    expected[0] = 0.37
    assert np.allclose(t, expected, atol=1e-12)


def test_factorize_heisenberg_mixed_product():
    g = get_group("heisenberg")
    X, P = g.algebra([1, 0, 0]), g.algebra([0, 1, 0])
    el = exp(X, 0.8) @ exp(P, -0.55)
    t = factorize_second_kind(el)
    recomposed = g.compose_exps(t)
    assert np.linalg.norm(recomposed - el.matrix) <= 1e-12


@pytest.mark.parametrize("gid", ALL_GROUPS)
def test_factorize_random_recomposition(gid):
    g = get_group(gid)
    rng = np.random.default_rng(42)
    radius = min(g.factorization_radius, 1.0)
    for _ in range(100):
        coords = rng.uniform(-0.5, 0.5, g.dim) * radius
        el = exp(g.algebra(coords))
        t = factorize_second_kind(el)
        assert np.linalg.norm(g.compose_exps(t) - el.matrix) <= 1e-9


def test_factorize_out_of_domain_refusal():
    g = get_group("su2")
    # pi-rotation around x sits at the chart boundary; push beyond the
    # registered radius and expect refusal rather than extrapolation.
    far = exp(g.algebra([3.0, 0.7, 0.0]))
    with pytest.raises(OutOfDomainError):
        factorize_second_kind(far)


@given(a=st.floats(-0.8, 0.8), b=st.floats(-0.8, 0.8), c=st.floats(-0.8, 0.8))
@settings(max_examples=25, deadline=None)
def test_factorize_heisenberg_roundtrip_property(a, b, c):
    g = get_group("heisenberg")
    el = exp(g.algebra([a, b, c]))
    t = factorize_second_kind(el)
    assert np.linalg.norm(g.compose_exps(t) - el.matrix) <= 1e-12


# ---------------------------------------------------------------------------
# Haar quadrature
# ---------------------------------------------------------------------------

def test_haar_so2_full_circle_constant_window():
    so2 = get_group("so2")
    w = Window(fn=lambda c: np.ones(c.shape[0]), support=((-np.pi, np.pi),))
    q = haar_quadrature(so2, w, resolution=64)
    assert abs(q.total_weight - 2 * np.pi) <= 1e-8


def test_haar_real_line_unit_bump():
    line = get_group("real_line")
    bump = smooth_bump(1.0)
    # 1-D quadrature oracle for the normalization constant.
    norm, _ = scipy.integrate.quad(lambda x: bump(np.array([[x]]))[0], -1, 1)
    w = Window(fn=lambda c: bump(c) / norm, support=((-1.0, 1.0),))
    q = haar_quadrature(line, w, resolution=48)
    assert abs(q.total_weight - 1.0) <= max(q.error_estimate * 5, 1e-9)


def test_haar_left_invariance_translation_group():
    line = get_group("real_line")
    bump = smooth_bump(0.8)
    w0 = Window(fn=lambda c: bump(c), support=((-0.8, 0.8),))
    shift = 0.31
    w1 = Window(fn=lambda c: bump(c - shift), support=((-0.8 + shift, 0.8 + shift),))
    q0 = haar_quadrature(line, w0, resolution=40)
    q1 = haar_quadrature(line, w1, resolution=40)
    assert abs(q0.total_weight - q1.total_weight) <= 1e-8


def test_haar_heisenberg_density_is_constant():
    g = get_group("heisenberg")
    rng = np.random.default_rng(3)
    for _ in range(10):
        t = rng.uniform(-2, 2, 3)
        assert abs(g.left_density(t) - 1.0) <= 1e-12


def test_haar_su2_left_invariance_within_reported_bound():
    su2 = get_group("su2")
    bump = smooth_bump(0.6)
    w0 = Window(fn=lambda c: bump(c), support=tuple((-0.6, 0.6) for _ in range(3)))
    q0 = haar_quadrature(su2, w0, resolution=12)

    # Left-translate the window by h: gamma'(g) = gamma(h^-1 g), with the
    # support box grown to cover the translated bump.
    h = exp(su2.algebra([0.15, -0.1, 0.2]))
    h_inv = np.linalg.inv(h.matrix)

    def translated(coords):
        mats = np.array([h_inv @ su2.compose_exps(t) for t in np.atleast_2d(coords)])
        vals = np.zeros(mats.shape[0])
        for i, m in enumerate(mats):
            try:
                vals[i] = bump(su2.factorize_matrix(m).reshape(1, -1))[0]
            except OutOfDomainError:
                vals[i] = 0.0
        return vals

    w1 = Window(fn=translated, support=tuple((-1.1, 1.1) for _ in range(3)))
    q1 = haar_quadrature(su2, w1, resolution=12)
    tol = 5 * (q0.error_estimate + q1.error_estimate) + 1e-8
    assert abs(q0.total_weight - q1.total_weight) <= tol


def test_haar_rejects_low_resolution():
    so2 = get_group("so2")
    w = Window(fn=lambda c: np.ones(c.shape[0]), support=((-np.pi, np.pi),))
    with pytest.raises(InputError):
        haar_quadrature(so2, w, resolution=1)
