"""Infinitesimal generators of section transforms.

The derivative of the one-parameter transform family is taken by central
finite differences through the sections' closed-form field evaluators (never
by interpolating lattice values), after Garding smoothing against a compactly
supported kernel summed over lattice-aligned group nodes.  The identity suite
checks linearity, conjugation covariance, the commutator/structure-constant
match, the multiplication-operator commutator, and the pairing derivative,
each with a refinement order estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .actions import BundleAction
from .errors import AlignmentError, InputError
from .groups import AlgebraElement, GroupElement, bracket
from .sections import (BaseFunction, OrbitSampling, SampledBaseFunction,
                       Section, evaluator_transform, multiply, pairing,
                       section_transform)

__all__ = [
    "SmoothingKernel",
    "lattice_kernel",
    "garding_smooth",
    "GeneratorApplication",
    "generator_apply",
    "base_derivative",
    "IdentityResidual",
    "identity_suite",
]


@dataclass(frozen=True)
class SmoothingKernel:
    """Compactly supported smoothing weights on lattice-aligned group nodes.

    ``weights`` already fold the window value and the left-invariant Haar
    density into each node, so smoothing is a plain weighted sum.
    """

    sampling: OrbitSampling
    node_steps: np.ndarray     # (K, n_axes) integer lattice steps
    node_mats: np.ndarray      # (K, d, d)
    weights: np.ndarray        # (K,)
    radius_steps: np.ndarray   # per-axis support half-width in steps

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))


def lattice_kernel(sampling: OrbitSampling, radius, normalize: bool = True,
                   window: Optional[Callable[[np.ndarray], np.ndarray]] = None
                   ) -> SmoothingKernel:
    """Smoothing kernel on the sampling's own lattice: nodes are the lattice
    points inside the coordinate ball of the given per-axis ``radius``, with
    Riemann weights (spacing volume x Haar density x window value).

    The default window is the standard C-infinity bump on the ball.  The
    kernel support must fit inside the sampled window.
    """
    group = sampling.action.group
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (group.dim,))
    steps_max = np.floor(radius / sampling.spacings).astype(int)
    for k, ax in enumerate(sampling.axes):
        if ax.kind == "line" and steps_max[k] > (ax.hi - ax.lo) // 2:
            raise InputError("kernel support exceeds the sampled lattice window")
    grids = np.meshgrid(*[np.arange(-m, m + 1) for m in steps_max], indexing="ij")
    steps = np.stack([g.ravel() for g in grids], axis=-1)
    coords = steps * sampling.spacings
    r2 = np.sum((coords / radius) ** 2, axis=-1)
    inside = r2 < 1.0
    steps, coords, r2 = steps[inside], coords[inside], r2[inside]
    if window is None:
        vals = np.exp(1.0 - 1.0 / (1.0 - r2))
    else:
        vals = np.asarray(window(coords), dtype=float)
    volume = float(np.prod(sampling.spacings))
    density = np.array([group.left_density(t) for t in coords])
    weights = volume * density * vals
    if normalize:
        total = np.sum(weights)
        if total <= 0:
            raise InputError("kernel has nonpositive mass")
        weights = weights / total
    mats = np.array([group.compose_exps(t) for t in coords])
    return SmoothingKernel(sampling, steps, mats, weights,
                           radius_steps=steps_max)


def garding_smooth(kernel: SmoothingKernel, phi: Section,
                   action: BundleAction) -> Section:
    """Group-averaged section  Psi_X = sum_k w_k U_{g_k}(X <- .) Phi(g_k^-1 .).

    Field-backed sections smooth through one fused batch over kernel nodes
    and evaluation points; lattice-only sections fall back to a weighted sum
    of exact lattice transforms (every node is lattice-aligned by
    construction).
    """
    sampling = phi.sampling
    if kernel.sampling is not sampling:
        raise InputError("kernel was built for a different sampling")
    fibers = [action.fiber_matrix(m) for m in kernel.node_mats]
    weighted_U = np.array([w * U for w, U in zip(kernel.weights, fibers)])
    inv_mats = np.array([np.linalg.inv(m) for m in kernel.node_mats])

    if phi.field is not None:
        pf = phi.field
        K = inv_mats.shape[0]

        def smoothed_field(mats):
            mats = np.asarray(mats)
            J = mats.shape[0]
            big = np.einsum("kab,jbc->kjac", inv_mats, mats)
            vals = pf(big.reshape(K * J, *mats.shape[1:]))
            vals = vals.reshape(K, J, -1)
            return np.einsum("kmn,kjn->jm", weighted_U, vals)

        return Section.from_field(sampling, smoothed_field)

    out = np.zeros_like(phi.values)
    for mat, w in zip(kernel.node_mats, kernel.weights):
        out = out + w * section_transform(action, mat, phi).values
    return Section(sampling, out)


# ---------------------------------------------------------------------------
# finite-difference generators
# ---------------------------------------------------------------------------

def _difference_field(A: AlgebraElement, psi: Section, action: BundleAction,
                      tau: float):
    """Central-difference generator field
    i (U_{exp(A tau)} - U_{exp(-A tau)}) psi / (2 tau)."""
    e_plus = scipy.linalg.expm(tau * A.matrix)
    e_minus = scipy.linalg.expm(-tau * A.matrix)
    U_plus = action.fiber_matrix(e_plus)
    U_minus = action.fiber_matrix(e_minus)
    inv_plus = np.linalg.inv(e_plus)
    inv_minus = np.linalg.inv(e_minus)
    pf = psi.field

    def diff_field(mats):
        mats = np.asarray(mats)
        up = pf(np.einsum("ab,jbc->jac", inv_plus, mats)) @ U_plus.T
        dn = pf(np.einsum("ab,jbc->jac", inv_minus, mats)) @ U_minus.T
        return 1j * (up - dn) / (2.0 * tau)

    return diff_field


@dataclass(frozen=True)
class GeneratorApplication:
    """Finite-difference application of a generator to a section."""

    input: Section
    algebra_dir: AlgebraElement
    fd_step: float
    result: Section
    order_estimate: float


def generator_apply(A: AlgebraElement, psi: Section, action: BundleAction,
                    tau: float, richardson: bool = False,
                    estimate_order: bool = True) -> GeneratorApplication:
    """Apply the generator of the one-parameter transform family along A by
    central differences at step ``tau``.

    Requires a field-backed (smoothed or closed-form) section: exp(+-tau A)
    is generically off-lattice and lattice values cannot be differenced
    without interpolation.
    """
    if tau <= 0:
        raise InputError("fd step must be positive")
    if psi.field is None:
        raise AlignmentError(
            "generator application needs a field-backed section "
            "(smooth the input first)")
    sampling = psi.sampling

    def make(tau_k):
        f = _difference_field(A, psi, action, tau_k)
        if richardson:
            f_half = _difference_field(A, psi, action, tau_k / 2)
            base = f

            def f_rich(mats):
                return (4.0 * f_half(mats) - base(mats)) / 3.0
            return f_rich
        return f

    result = Section.from_field(sampling, make(tau))
    order = np.nan
    if estimate_order:
        v1 = result.values
        v2 = Section.from_field(sampling, make(tau / 2)).values
        v4 = Section.from_field(sampling, make(tau / 4)).values
        r12 = np.max(np.linalg.norm(v1 - v2, axis=1))
        r24 = np.max(np.linalg.norm(v2 - v4, axis=1))
        if r24 > 0:
            order = float(np.log2(r12 / r24))
    return GeneratorApplication(psi, A, tau, result, order)


def base_derivative(A: AlgebraElement, alpha, action: BundleAction,
                    sampling: OrbitSampling, tau: float) -> SampledBaseFunction:
    """Directional derivative of a base function along the flow of A,
    d/dt alpha(u_{exp(A t)} X) at t = 0, by central differences.

    ``alpha`` may be a BaseFunction (evaluated through the closed form) or a
    SampledBaseFunction carrying a field.
    """
    if tau <= 0:
        raise InputError("fd step must be positive")
    e_plus = scipy.linalg.expm(tau * A.matrix)
    e_minus = scipy.linalg.expm(-tau * A.matrix)

    if isinstance(alpha, SampledBaseFunction):
        if alpha.field is None:
            raise AlignmentError("sampled base function has no field to flow")
        af = alpha.field

        def diff(mats):
            up = af(np.einsum("ab,jbc->jac", e_plus, mats))
            dn = af(np.einsum("ab,jbc->jac", e_minus, mats))
            return (up - dn) / (2.0 * tau)
    elif isinstance(alpha, BaseFunction):
        def diff(mats):
            rows_up = sampling.state_rows(np.einsum("ab,jbc->jac", e_plus, mats))
            rows_dn = sampling.state_rows(np.einsum("ab,jbc->jac", e_minus, mats))
            return (alpha.eval_rows(rows_up) - alpha.eval_rows(rows_dn)) / (2.0 * tau)
    else:
        raise InputError("alpha must be a BaseFunction or SampledBaseFunction")

    return SampledBaseFunction(sampling, diff(sampling.group_mats), diff)


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityResidual:
    name: str
    tau: float
    residual: float
    refined_residual: float

    @property
    def order_estimate(self) -> float:
        if self.refined_residual <= 0:
            return np.inf
        return float(np.log2(self.residual / self.refined_residual))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "tau": self.tau,
            "residual": self.residual,
            "refined_residual": self.refined_residual,
            "order_estimate": self.order_estimate,
        }


def residual_report_json(residuals: Sequence[IdentityResidual]) -> str:
    return json.dumps([r.as_dict() for r in residuals], sort_keys=True)


def _apply(A, psi, action, tau) -> Section:
    return generator_apply(A, psi, action, tau, estimate_order=False).result


def identity_suite(A: AlgebraElement, B: AlgebraElement, alpha: BaseFunction,
                   psi: Section, action: BundleAction, tau: float,
                   conjugator: Optional[GroupElement] = None) -> list:
    """Residuals of the five generator identities at ``tau`` and ``tau/2``:

    linearity        H(A+B) = H(A) + H(B) and H(2A) = 2 H(A)
    conjugation      U_h H(A) U_{h^-1} = H(h A h^-1)  (h = ``conjugator``)
    commutator       [H(A), H(B)] = i H([A; B])
    multiplication   i [H(A), v[alpha]] = v[d[A] alpha]
    pairing          -i d[A]<psi, psi> = <psi, H(A) psi> - <H(A) psi, psi>

    ``psi`` must be smooth (Garding-smoothed or closed-form field).
    """
    sampling = psi.sampling
    group = action.group
    out = []

    def lin_res(tk):
        both = _apply(A + B, psi, action, tk)
        sep = _apply(A, psi, action, tk) + _apply(B, psi, action, tk)
        add = (both - sep).norm
        hom = (_apply(2.0 * A, psi, action, tk) - 2.0 * _apply(A, psi, action, tk)).norm
        return max(add, hom)

    def conj_res(tk):
        h = conjugator
        if h is None:
            return None
        h_inv = GroupElement(group, np.linalg.inv(h.matrix))
        lhs = evaluator_transform(
            action, h, _apply(A, evaluator_transform(action, h_inv, psi), action, tk))
        hAh = group.expand_in_basis(h.matrix @ A.matrix @ np.linalg.inv(h.matrix))
        rhs = _apply(group.algebra(hAh), psi, action, tk)
        return (lhs - rhs).norm

    def comm_res(tk):
        AB = _apply(A, _apply(B, psi, action, tk), action, tk)
        BA = _apply(B, _apply(A, psi, action, tk), action, tk)
        struct = _apply(bracket(A, B), psi, action, tk)
        return ((AB - BA) - 1j * struct).norm

    def mult_res(tk):
        lhs = 1j * (_apply(A, multiply(alpha, psi), action, tk)
                    - multiply(alpha, _apply(A, psi, action, tk)))
        dalpha = base_derivative(A, alpha, action, sampling, tk)
        rhs = Section(sampling, dalpha.values[:, None] * psi.values)
        return (lhs - rhs).norm

    def pair_res(tk):
        dpair = base_derivative(A, pairing(psi, psi), action, sampling, tk)
        Hpsi = _apply(A, psi, action, tk)
        rhs = pairing(psi, Hpsi).values - pairing(Hpsi, psi).values
        return float(np.max(np.abs(-1j * dpair.values - rhs)))

    for name, fn in (("linearity", lin_res), ("conjugation", conj_res),
                     ("commutator", comm_res), ("multiplication", mult_res),
                     ("pairing_derivative", pair_res)):
        r = fn(tau)
        if r is None:
            continue
        out.append(IdentityResidual(name, tau, r, fn(tau / 2)))
    return out
