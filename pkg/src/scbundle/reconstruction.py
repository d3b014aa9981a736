"""Rebuilding group actions from their infinitesimal generators.

Each basis direction's Cauchy problem is solved by characteristics: fiber
values ride the base flow while a midpoint-exponential product integrates the
fiber Hamiltonian (one cached exponential when the Hamiltonian is constant
over the base, as in every built-in scenario).  Group elements are composed
through second-kind canonical coordinates; word identities, conjugation
covariance, and the group law quantify how faithfully the reconstruction
matches the original action.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .actions import GeneratorFamily
from .dynamics import ClassicalState
from .errors import (AlignmentError, InputError, NumericalError,
                     PreconditionError)
from .groups import GroupElement, factorize_second_kind
from .sections import SampledBaseFunction, Section, pairing

__all__ = [
    "exponentiate_generator",
    "reconstruct_group_operator",
    "family_generator_apply",
    "family_generator_direct",
    "word_identity_check",
    "WordCheck",
    "conjugation_check",
    "group_law_verify",
    "GroupLawReport",
]

_DEFAULT_DT = 1e-3


def _transport_constant(family: GeneratorFamily, k: int, t: float) -> np.ndarray:
    H = family.directions[k].fiber_hamiltonian(None)
    vals, vecs = np.linalg.eigh(H)
    return (vecs * np.exp(-1j * t * vals)) @ vecs.conj().T


def _transport_stepped(family: GeneratorFamily, k: int, t: float,
                       X_end, dt: float) -> np.ndarray:
    d = family.directions[k]
    n_steps = max(1, int(round(abs(t) / dt)))
    h = t / n_steps
    dim = family.dim_config.dim
    U = np.eye(dim, dtype=complex)
    for j in range(n_steps):
        s_mid = (j + 0.5) * h - t
        H = d.fiber_hamiltonian(d.flow(s_mid, X_end))
        vals, vecs = np.linalg.eigh(H)
        U = ((vecs * np.exp(-1j * h * vals)) @ vecs.conj().T) @ U
    return U


def exponentiate_generator(family: GeneratorFamily, k: int, t: float,
                           psi0: Section, dt: float = _DEFAULT_DT) -> Section:
    """Solve the one-parameter Cauchy problem along basis direction ``k``:
    transport each fiber value along the base flow of B_k while integrating
    the fiber rotation, returning the section at parameter ``t``."""
    if not 0 <= k < family.group.dim:
        raise InputError("basis index out of range")
    if not np.isfinite(t):
        raise InputError("non-finite flow parameter")
    if t == 0.0:
        return psi0
    sampling = psi0.sampling
    group = family.group
    pull = scipy.linalg.expm(-t * group.basis[k])
    constant = family.directions[k].constant_fiber

    if psi0.field is not None:
        pf = psi0.field
        if constant:
            T = _transport_constant(family, k, t)

            def new_field(mats):
                return pf(np.einsum("ab,jbc->jac", pull, np.asarray(mats))) @ T.T
        else:
            def new_field(mats):
                mats = np.asarray(mats)
                sources = pf(np.einsum("ab,jbc->jac", pull, mats))
                rows = sampling.state_rows(mats)
                n = sampling.anchor.n
                out = np.empty_like(sources)
                for j, row in enumerate(rows):
                    X_end = ClassicalState(row[0], row[1:1 + n], row[1 + n:])
                    T = _transport_stepped(family, k, t, X_end, dt)
                    out[j] = T @ sources[j]
                return out

        out = Section.from_field(sampling, new_field)
        if not np.all(np.isfinite(out.values)):
            raise NumericalError("generator exponentiation blew up")
        return out

    # lattice path: the flow endpoint must land on the lattice
    sources = sampling.indices_of_matrices(
        np.einsum("ab,jbc->jac", pull, sampling.group_mats))
    if not constant:
        raise AlignmentError(
            "lattice-only sections support constant fiber Hamiltonians only")
    T = _transport_constant(family, k, t)
    new_values = np.zeros_like(psi0.values)
    found = sources >= 0
    new_values[found] = psi0.values[sources[found]] @ T.T
    if not np.isclose(np.sum(np.abs(new_values) ** 2),
                      np.sum(np.abs(psi0.values) ** 2), rtol=1e-10, atol=1e-300):
        raise AlignmentError("flow endpoint misaligned with the sampling window")
    return Section(sampling, new_values)


def reconstruct_group_operator(family: GeneratorFamily, g, psi: Section,
                               dt: float = _DEFAULT_DT) -> Section:
    """Apply the reconstructed operator of ``g`` through its second-kind
    factorization, rightmost one-parameter factor first."""
    if isinstance(g, GroupElement):
        t = factorize_second_kind(g)
    else:
        t = family.group.factorize_matrix(np.asarray(g))
    out = psi
    for k in range(family.group.dim - 1, -1, -1):
        if t[k] != 0.0:
            out = exponentiate_generator(family, k, float(t[k]), out, dt)
    return out


def family_generator_apply(family: GeneratorFamily, A_coords: np.ndarray,
                           psi: Section, tau: float,
                           dt: float = _DEFAULT_DT) -> Section:
    """Finite-difference generator of the *reconstructed* action along
    A = sum_k coords_k B_k."""
    A_coords = np.asarray(A_coords, dtype=float)
    plus = _exp_coords_apply(family, A_coords, tau, psi, dt)
    minus = _exp_coords_apply(family, A_coords, -tau, psi, dt)
    return 1j / (2 * tau) * (plus - minus)


def _exp_coords_apply(family, coords, tau, psi, dt):
    mat = scipy.linalg.expm(tau * np.tensordot(coords, family.group.basis, axes=(0, 0)))
    return reconstruct_group_operator(family, mat, psi, dt)


def family_generator_direct(family: GeneratorFamily, A_coords: np.ndarray,
                            psi: Section, tau: float) -> Section:
    """The generator evaluated from its split form H(A:X) - i d[A]: the fiber
    Hamiltonian acts pointwise and the base derivation is a central
    difference of the section's field along the flow (no fiber transport)."""
    if psi.field is None:
        raise AlignmentError("direct generator needs a field-backed section")
    A_coords = np.asarray(A_coords, dtype=float)
    sampling = psi.sampling
    gen_mat = np.tensordot(A_coords, family.group.basis, axes=(0, 0))
    shift_fwd = scipy.linalg.expm(tau * gen_mat)
    shift_bwd = scipy.linalg.expm(-tau * gen_mat)
    pf = psi.field
    mats = sampling.group_mats
    # d[A] psi at u_h: d/ds psi(u_{exp(A s)} u_h) at s = 0
    up = pf(np.einsum("ab,jbc->jac", shift_fwd, mats))
    dn = pf(np.einsum("ab,jbc->jac", shift_bwd, mats))
    base_term = (up - dn) / (2 * tau)
    values = np.empty_like(psi.values)
    if all(d.constant_fiber for d in family.directions):
        H = family.combination_hamiltonian(A_coords, None)
        values = psi.values @ H.T - 1j * base_term
    else:
        for j, X in enumerate(sampling.base_points):
            H = family.combination_hamiltonian(A_coords, X)
            values[j] = H @ psi.values[j] - 1j * base_term[j]
    return Section(sampling, values)


# ---------------------------------------------------------------------------
# word identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WordCheck:
    residual: float
    lemma_mode: bool
    alphas: tuple
    matrix_defect: float


def word_identity_check(family: GeneratorFamily, word: Sequence,
                        probes: Sequence[Section],
                        alphas: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
                        dt: float = _DEFAULT_DT,
                        matrix_tol: float = 1e-10) -> WordCheck:
    """Check that a word of one-parameter steps acts as the identity.

    ``word`` is a list of ``(basis index, path)`` pairs where ``path`` is a
    smooth function of the deformation parameter with path(0) = 0 (a bare
    float t means the linear path t * alpha).  The matrix word must equal the
    identity at alpha = 1 (hard precondition, else the check is vacuous).
    When it closes at every sampled alpha the deformation hypothesis holds
    (``lemma_mode``) and the residual is measured at every alpha; otherwise
    only the closing endpoints are measured -- that is the projective-anomaly
    probe, where the operator word may legitimately differ from 1.
    """
    group = family.group
    norm_word = []
    for k, path in word:
        if callable(path):
            norm_word.append((int(k), path))
        else:
            t_val = float(path)
            norm_word.append((int(k), (lambda t_v: (lambda a: t_v * a))(t_val)))

    def word_matrix(a: float) -> np.ndarray:
        m = np.eye(group.rep_dim, dtype=complex if np.iscomplexobj(group.basis) else float)
        for k, path in norm_word:
            m = m @ scipy.linalg.expm(path(a) * group.basis[k])
        return m

    eye = np.eye(group.rep_dim)
    end_defect = float(np.linalg.norm(word_matrix(1.0) - eye))
    if end_defect > matrix_tol:
        raise PreconditionError(
            f"matrix word is not the identity at alpha=1 (defect {end_defect:.3e})")
    closing = [a for a in alphas
               if np.linalg.norm(word_matrix(a) - eye) <= matrix_tol]
    lemma_mode = len(closing) == len(alphas)

    worst = 0.0
    for a in closing:
        for psi in probes:
            out = psi
            for k, path in reversed(norm_word):
                t_val = float(path(a))
                if t_val != 0.0:
                    out = exponentiate_generator(family, k, t_val, out, dt)
            worst = max(worst, (out - psi).norm)
    return WordCheck(worst, lemma_mode, tuple(closing), end_defect)


# ---------------------------------------------------------------------------
# conjugation and group law
# ---------------------------------------------------------------------------

def conjugation_check(family: GeneratorFamily, k: int, t: float,
                      A_coords: np.ndarray, psi: Section, tau: float,
                      dt: float = _DEFAULT_DT) -> tuple:
    """Residual of  U^{-t}_{B_k} H(A) U^t_{B_k} psi = H(Ad_{exp(-B_k t)} A) psi
    at fd steps tau and tau/2 (it must shrink at order >= 1)."""
    group = family.group
    A_coords = np.asarray(A_coords, dtype=float)
    gen = np.tensordot(A_coords, group.basis, axes=(0, 0))
    h_inv = scipy.linalg.expm(-t * group.basis[k])
    adjoint_coords = group.expand_in_basis(h_inv @ gen @ np.linalg.inv(h_inv))

    def residual(tk):
        inner = exponentiate_generator(family, k, t, psi, dt)
        mid = family_generator_apply(family, A_coords, inner, tk, dt)
        lhs = exponentiate_generator(family, k, -t, mid, dt)
        rhs = family_generator_apply(family, adjoint_coords, psi, tk, dt)
        return (lhs - rhs).norm

    return residual(tau), residual(tau / 2)


@dataclass(frozen=True)
class GroupLawReport:
    composition_residual: float
    generator_residual: float

    def as_dict(self) -> dict:
        return {"composition_residual": self.composition_residual,
                "generator_residual": self.generator_residual}


def group_law_verify(family: GeneratorFamily, g1, g2, psi: Section,
                     tau: float = 1e-3, dt: float = _DEFAULT_DT) -> GroupLawReport:
    """Composition residual of the reconstructed operators together with the
    closure of their derivative: the fd generator of the reconstructed action
    per basis direction against the family's split form, relative to its
    size."""
    m1 = g1.matrix if isinstance(g1, GroupElement) else np.asarray(g1)
    m2 = g2.matrix if isinstance(g2, GroupElement) else np.asarray(g2)
    two_step = reconstruct_group_operator(
        family, m1, reconstruct_group_operator(family, m2, psi, dt), dt)
    one_step = reconstruct_group_operator(family, m1 @ m2, psi, dt)
    comp = (two_step - one_step).norm

    worst = 0.0
    for k in range(family.group.dim):
        coords = np.eye(family.group.dim)[k]
        fd = family_generator_apply(family, coords, psi, tau, dt)
        direct = family_generator_direct(family, coords, psi, tau)
        scale = max(direct.norm, 1e-12)
        worst = max(worst, (fd - direct).norm / scale)
    return GroupLawReport(comp, worst)
