"""Gauge actions on the bundle and gauge-equivalent (projective) group laws.

Built-in gauge groups are one-parameter: the pure fiber phase (identity on
the base -- degenerate for invariant sections, and exactly the stabilizer
counterexample), the action shift (moves S, trivial on fibers), and their
pairing (shift S by c, rotate fibers by exp(-ic)), which is the semiclassical
identification that makes the metaplectic circle action honest on
gauge-invariant sections.

The enlarged orbit of a circle scenario is sampled as (rotation lattice) x
(gauge-parameter lattice); invariant sections are stored on that grid and
transformed by the quotient form of the left regular action, with the
compensator resolved from the base bookkeeping or from fiber phases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .actions import BundleAction
from .dynamics import ClassicalState
from .errors import (ConsistencyError, InputError, PreconditionError,
                     SearchFailureError)
from .fiber import DimConfig
from .groups import GroupElement

__all__ = [
    "GaugeGroup",
    "u1_phase_gauge",
    "action_shift_gauge",
    "phase_shift_gauge",
    "gauge_equivalent",
    "GaugeRecord",
    "gauge_report_json",
    "compensator_relations_check",
    "GaugeBundle",
]

EQUIV_TOL = 1e-8


@dataclass(frozen=True)
class GaugeGroup:
    """One-parameter abelian gauge group acting on the bundle.

    ``base_shift_s`` marks gauges whose base map is a pure shift of the
    action coordinate (then compensators are solved from S differences);
    gauges with the identity base map get their compensators from fiber
    phases instead.
    """

    name: str
    base_map: Callable[[float, ClassicalState], ClassicalState]
    fiber_phase: Callable[[float], complex]
    base_shift_s: bool

    def fiber_apply(self, alpha: float, f: np.ndarray) -> np.ndarray:
        return self.fiber_phase(alpha) * np.asarray(f, dtype=complex)

    def unitarity_defect(self, alpha: float) -> float:
        return abs(abs(self.fiber_phase(alpha)) - 1.0)


def u1_phase_gauge() -> GaugeGroup:
    """Pure fiber phase, identity on the base."""
    return GaugeGroup(
        name="u1_phase",
        base_map=lambda alpha, X: X,
        fiber_phase=lambda alpha: np.exp(1j * alpha),
        base_shift_s=False)


def action_shift_gauge() -> GaugeGroup:
    """Shift of the classical action coordinate, trivial on fibers."""
    return GaugeGroup(
        name="action_shift",
        base_map=lambda c, X: ClassicalState(X.S + c, X.P, X.Q),
        fiber_phase=lambda c: 1.0 + 0.0j,
        base_shift_s=True)


def phase_shift_gauge() -> GaugeGroup:
    """The semiclassical pairing: shifting S by c rotates fibers by
    exp(-ic), so the physical packet exp(iS) f is unchanged along orbits."""
    return GaugeGroup(
        name="phase_shift",
        base_map=lambda c, X: ClassicalState(X.S + c, X.P, X.Q),
        fiber_phase=lambda c: np.exp(-1j * c),
        base_shift_s=True)


# ---------------------------------------------------------------------------
# gauge equivalence
# ---------------------------------------------------------------------------

def _equivalence_residual(gauge: GaugeGroup, alpha: float, z1, z2) -> float:
    X1, f1 = z1
    X2, f2 = z2
    moved = gauge.base_map(alpha, X1)
    base = moved.distance(X2)
    fiber = np.linalg.norm(gauge.fiber_apply(alpha, f1) - np.asarray(f2))
    return float(base + fiber)


def _golden_search(fn, lo: float, hi: float, tol: float = 1e-10) -> float:
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(200):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    else:
        raise SearchFailureError("golden-section refinement did not converge")
    return 0.5 * (a + b)


def gauge_equivalent(gauge: GaugeGroup, z1, z2,
                     search_grid: Optional[np.ndarray] = None):
    """Decide whether two bundle points lie on one gauge orbit.

    Returns ``(equivalent, best_alpha, residual)``.  Closed forms cover the
    built-in gauges; otherwise the parameter grid is scanned and refined by
    golden-section search.
    """
    X1, f1 = z1
    X2, f2 = z2
    f1 = np.asarray(f1, dtype=complex)
    f2 = np.asarray(f2, dtype=complex)
    if gauge.base_shift_s:
        alpha = float(X2.S - X1.S)
    elif gauge.name == "u1_phase":
        overlap = np.vdot(f1, f2)
        alpha = float(np.angle(overlap)) if overlap != 0 else 0.0
    else:
        if search_grid is None:
            raise InputError("registered gauge groups need a search grid")
        grid = np.asarray(search_grid, dtype=float)
        coarse = [_equivalence_residual(gauge, a, (X1, f1), (X2, f2)) for a in grid]
        k = int(np.argmin(coarse))
        lo = grid[max(0, k - 1)]
        hi = grid[min(len(grid) - 1, k + 1)]
        alpha = _golden_search(
            lambda a: _equivalence_residual(gauge, a, (X1, f1), (X2, f2)), lo, hi)
    residual = _equivalence_residual(gauge, alpha, (X1, f1), (X2, f2))
    return residual <= EQUIV_TOL, alpha, residual


# ---------------------------------------------------------------------------
# compensator relations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaugeRecord:
    relation: str
    residual: float
    compensator_parameters: tuple
    passed: bool

    def as_dict(self) -> dict:
        return {
            "relation": self.relation,
            "residual": self.residual,
            "compensator_parameters": list(self.compensator_parameters),
            "pass": self.passed,
        }


def gauge_report_json(records: Sequence[GaugeRecord]) -> str:
    import json
    return json.dumps([r.as_dict() for r in records], sort_keys=True)


def _solve_base_compensator(gauge: GaugeGroup, target: ClassicalState,
                            reference: ClassicalState) -> float:
    """Gauge parameter with lambda_alpha(reference) = target."""
    if gauge.base_shift_s:
        return float(target.S - reference.S)
    return 0.0


def _solve_fiber_phase(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """Phase angle aligning rhs to lhs via the inner-product argument."""
    overlap = np.vdot(rhs, lhs)
    return float(np.angle(overlap)) if overlap != 0 else 0.0


def compensator_relations_check(action: BundleAction, gauge: GaugeGroup,
                                g, g1, g2, alpha: float, X: ClassicalState,
                                f: np.ndarray, tol: float = 1e-6):
    """Residuals of the four compensator relations of a gauge action:

    base conjugation      u_g lambda_alpha u_{g^-1} = lambda_beta
    base composition      u_{g1} u_{g2} = lambda_gamma u_{g1 g2}
    fiber conjugation     U_g V_alpha U_{g^-1} = V_beta
    fiber composition     U_{g1} U_{g2} = V_gamma U_{g1 g2}

    Compensators are solved from S differences for base-moving gauges and
    from fiber phases for base-trivial gauges.
    """
    f = np.asarray(f, dtype=complex)
    records = []

    def gm(el):
        return el.matrix if isinstance(el, GroupElement) else np.asarray(el)

    g_m, g1_m, g2_m = gm(g), gm(g1), gm(g2)
    g_inv = np.linalg.inv(g_m)

    # (28): beta from the base points for base-moving gauges, from the fiber
    # conjugation phase otherwise
    conj_point = action.base_map(g_m, gauge.base_map(alpha, action.base_map(g_inv, X)))
    lhs30 = action.fiber_matrix(g_m) @ gauge.fiber_apply(
        alpha, action.fiber_matrix(g_inv) @ f)
    if gauge.base_shift_s:
        beta = _solve_base_compensator(gauge, conj_point, X)
    else:
        beta = _solve_fiber_phase(lhs30, f)
    res28 = gauge.base_map(beta, X).distance(conj_point)
    records.append(GaugeRecord("28", res28, (beta,), res28 <= tol))

    # (29): gamma from the base points
    two_step = action.base_map(g1_m, action.base_map(g2_m, X))
    one_step = action.base_map(g1_m @ g2_m, X)
    if gauge.base_shift_s:
        gamma = _solve_base_compensator(gauge, two_step, one_step)
    else:
        gamma = _solve_fiber_phase(
            action.fiber_matrix(g1_m) @ (action.fiber_matrix(g2_m) @ f),
            action.fiber_matrix(g1_m @ g2_m) @ f)
    res29 = gauge.base_map(gamma, one_step).distance(two_step)
    records.append(GaugeRecord("29", res29, (gamma,), res29 <= tol))

    # (30): fiber conjugation against V_beta
    res30 = float(np.linalg.norm(lhs30 - gauge.fiber_apply(beta, f)))
    records.append(GaugeRecord("30", res30, (beta,), res30 <= tol))

    # (31): fiber composition against V_gamma
    lhs31 = action.fiber_matrix(g1_m) @ (action.fiber_matrix(g2_m) @ f)
    rhs31 = gauge.fiber_apply(gamma, action.fiber_matrix(g1_m @ g2_m) @ f)
    res31 = float(np.linalg.norm(lhs31 - rhs31))
    records.append(GaugeRecord("31", res31, (gamma,), res31 <= tol))
    return records


# ---------------------------------------------------------------------------
# gauge-invariant sections on the enlarged orbit
# ---------------------------------------------------------------------------

class GaugeBundle:
    """Enlarged orbit of a circle scenario: rotation lattice times gauge
    lattice, with the storage and transforms of gauge-invariant sections.

    The left regular action is applied through the *lifted* one-parameter
    flow (unwrapped angle): the circle element of index m acts via the real
    parameter m * (2 pi / M).  On gauge-invariant sections the result depends
    on m only modulo M -- that descent, together with the exact group law,
    is the content the gauge machinery verifies; neither holds for the
    strict (wrapped) action on plain sections.

    ``theta_nodes`` samples the rotation angle on 2 pi / M steps;
    ``gauge_step`` and ``gauge_window`` sample the gauge parameter.  The
    anchor's gauge slice (parameter 0) carries the fundamental values.
    """

    def __init__(self, family, gauge: GaugeGroup, anchor: ClassicalState,
                 theta_nodes: int, gauge_step: float, gauge_window: int):
        if theta_nodes < 2 or gauge_window < 1:
            raise InputError("enlarged orbit needs at least two nodes per axis")
        if family.group.dim != 1:
            raise InputError("the enlarged orbit is built over one-parameter flows")
        self.family = family
        self.flow = family.directions[0].flow
        self.gauge = gauge
        self.anchor = anchor
        self.theta_nodes = theta_nodes
        self.theta_step = 2 * np.pi / theta_nodes
        self.gauge_step = float(gauge_step)
        self.gauge_indices = np.arange(-gauge_window, gauge_window + 1)
        self.dim = family.dim_config.dim
        H = family.directions[0].fiber_hamiltonian(anchor)
        self._levels, self._modes = np.linalg.eigh(H)

        thetas = self.theta_step * np.arange(theta_nodes)
        self._orbit_states = []
        rows = []
        for th in thetas:
            Xi = self.flow(th, anchor)
            self._orbit_states.append(Xi)
            for j in self.gauge_indices:
                Y = gauge.base_map(j * self.gauge_step, Xi)
                rows.append(Y.as_array())
        self.base_rows = np.array(rows)
        self._lookup = {}
        for flat, row in enumerate(self.base_rows):
            self._lookup[self._key(row)] = flat

    def _key(self, row: np.ndarray) -> tuple:
        return tuple(np.round(row / 1e-9).astype(np.int64))

    def _transport(self, theta: float) -> np.ndarray:
        """Fiber transport exp(-i theta H) of the lifted flow (the unwrapped
        parameter matters: a full turn contributes the anomaly phase)."""
        return (self._modes * np.exp(-1j * theta * self._levels)) @ self._modes.conj().T

    @property
    def shape(self) -> tuple:
        return (self.theta_nodes, self.gauge_indices.size)

    def flat(self, i: int, j: int) -> int:
        return i * self.gauge_indices.size + j

    def zeros(self) -> np.ndarray:
        return np.zeros((self.theta_nodes, self.gauge_indices.size, self.dim),
                        dtype=complex)

    def norm(self, values: np.ndarray) -> float:
        return float(np.max(np.linalg.norm(values, axis=-1)))

    # -- invariant sections ------------------------------------------------

    def build_invariant(self, fundamental: np.ndarray) -> np.ndarray:
        """Extend per-rotation-node fundamental values (theta_nodes, dim)
        to the whole enlarged grid through the invariance condition
        Psi(lambda_alpha Y) = V_alpha Psi(Y).

        A gauge whose base map fixes points while its fiber phases act
        nontrivially admits only the zero section: nonzero data is rejected
        as inconsistent (the stabilizer consistency check).
        """
        fundamental = np.asarray(fundamental, dtype=complex)
        if fundamental.shape != (self.theta_nodes, self.dim):
            raise InputError("one fundamental value per rotation node required")
        probe = self.gauge.base_map(self.gauge_step, self._orbit_states[0])
        fixes_base = probe.distance(self._orbit_states[0]) <= 1e-12
        moves_fiber = abs(self.gauge.fiber_phase(self.gauge_step) - 1.0) > 1e-12
        if fixes_base and moves_fiber and np.max(np.abs(fundamental)) > 0:
            raise ConsistencyError(
                "gauge stabilizes base points but rotates fibers: only the "
                "zero section is invariant")
        out = self.zeros()
        for j_pos, j in enumerate(self.gauge_indices):
            phase = self.gauge.fiber_phase(j * self.gauge_step)
            out[:, j_pos, :] = phase * fundamental
        return out

    def invariance_residual(self, values: np.ndarray) -> float:
        """Worst violation of the invariance condition over all sampled
        (gauge shift, grid point) pairs that stay on the grid."""
        worst = 0.0
        n_j = self.gauge_indices.size
        for shift in range(1, n_j):
            phase = self.gauge.fiber_phase(shift * self.gauge_step)
            lhs = values[:, shift:, :]
            rhs = phase * values[:, :n_j - shift, :]
            if lhs.size:
                worst = max(worst, float(np.max(np.linalg.norm(lhs - rhs, axis=-1))))
        return worst

    def require_invariant(self, values: np.ndarray, tol: float = 1e-8) -> None:
        res = self.invariance_residual(values)
        if res > tol:
            raise PreconditionError(
                f"section violates gauge invariance (residual {res:.3e})")

    # -- the quotient left regular action -----------------------------------

    def gauge_transform(self, m_steps: int, values: np.ndarray,
                        check_input: bool = True) -> np.ndarray:
        """Left regular transform by the circle element of index ``m_steps``
        on gauge-invariant sections, applied through the lifted flow.
        Sources off the gauge window are completed through the invariance
        condition."""
        if check_input:
            self.require_invariant(values)
        theta = m_steps * self.theta_step
        U = self._transport(theta)
        out = self.zeros()
        n_j = self.gauge_indices.size
        n = self.anchor.n
        for i in range(self.theta_nodes):
            for j_pos in range(n_j):
                Y = self.base_rows[self.flat(i, j_pos)]
                state = ClassicalState(Y[0], Y[1:1 + n], Y[1 + n:])
                src = self.flow(-theta, state)
                flat = self._lookup.get(self._key(src.as_array()))
                if flat is not None:
                    out[i, j_pos] = U @ values[flat // n_j, flat % n_j]
                    continue
                # complete the off-window gauge coordinate through invariance
                i_src = (i - m_steps) % self.theta_nodes
                ref = self._orbit_states[i_src]
                c_needed = src.S - ref.S
                if np.linalg.norm(src.as_array()[1:] - ref.as_array()[1:]) > 1e-9:
                    raise PreconditionError(
                        "pulled-back point is off the enlarged orbit")
                mid = n_j // 2
                phase = self.gauge.fiber_phase(c_needed)
                out[i, j_pos] = U @ (phase * values[i_src, mid])
        return out


def equivalence_relation_residuals(gauge: GaugeGroup, z: tuple,
                                   alphas: Sequence[float]) -> dict:
    """Reflexivity, symmetry, and transitivity residuals on points drawn
    from one gauge orbit."""
    X, f = z
    a1, a2 = alphas
    z1 = (gauge.base_map(a1, X), gauge.fiber_apply(a1, f))
    z2 = (gauge.base_map(a1 + a2, X), gauge.fiber_apply(a1 + a2, f))
    _, _, r_reflexive = gauge_equivalent(gauge, z, z)
    ok_fwd, alpha_fwd, r_fwd = gauge_equivalent(gauge, z, z1)
    ok_bwd, alpha_bwd, r_bwd = gauge_equivalent(gauge, z1, z)
    _, _, r_trans = gauge_equivalent(gauge, z, z2)
    return {
        "reflexive": r_reflexive,
        "symmetric": max(r_fwd, r_bwd, abs(alpha_fwd + alpha_bwd)),
        "transitive": r_trans,
    }
