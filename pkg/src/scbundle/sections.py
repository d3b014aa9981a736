"""Discretized sections over group-orbit lattices.

An :class:`OrbitSampling` is a finite window of a discrete subgroup lattice
written in second-kind coordinates, so left translation by a lattice element
permutes indices exactly and the section transform needs no interpolation.
Sections optionally carry a closed-form ``field`` evaluator (group matrices
-> fiber values); everything that must leave the lattice (finite-difference
generators, non-lattice transforms) uses the field and refuses otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .actions import BundleAction
from .dynamics import ClassicalState
from .errors import AlignmentError, InputError
from .groups import GroupElement, factorize_second_kind

__all__ = [
    "LatticeAxis",
    "OrbitSampling",
    "Section",
    "BaseFunction",
    "SampledBaseFunction",
    "section_norm",
    "section_transform",
    "evaluator_transform",
    "multiply",
    "pullback",
    "pairing",
    "reconstruct_pointwise_operator",
    "delta_section",
    "smooth_probe_section",
    "gentle_probe_section",
    "section_to_json",
]

_ALIGN_TOL = 1e-9
_STABILIZER_DELTA = 1e-9


@dataclass(frozen=True)
class LatticeAxis:
    """One second-kind coordinate axis of the sampling lattice.

    ``kind`` is "line" (integer window [lo, hi]) or "cycle" (indices modulo
    ``count`` with spacing = period / count).
    """

    spacing: float
    kind: str = "line"
    lo: int = 0
    hi: int = 0
    count: int = 0

    @staticmethod
    def line(spacing: float, lo: int, hi: int) -> "LatticeAxis":
        if hi < lo:
            raise InputError("empty lattice axis")
        return LatticeAxis(spacing=spacing, kind="line", lo=lo, hi=hi)

    @staticmethod
    def cycle(period: float, count: int) -> "LatticeAxis":
        if count < 1:
            raise InputError("cyclic axis needs at least one node")
        return LatticeAxis(spacing=period / count, kind="cycle", count=count)

    def indices(self) -> np.ndarray:
        if self.kind == "line":
            return np.arange(self.lo, self.hi + 1)
        return np.arange(self.count)

    def wrap(self, steps: np.ndarray) -> np.ndarray:
        if self.kind == "cycle":
            return np.mod(steps, self.count)
        return steps

    def contains(self, steps: np.ndarray) -> np.ndarray:
        if self.kind == "cycle":
            return np.ones(np.shape(steps), dtype=bool)
        return (steps >= self.lo) & (steps <= self.hi)


class OrbitSampling:
    """Finite lattice window of a group orbit through an anchor state.

    Samples are de-duplicated modulo the numerically detected stabilizer
    (base points closer than the separation delta collapse to their first
    representative).
    """

    def __init__(self, action: BundleAction, anchor: ClassicalState,
                 axes: Sequence[LatticeAxis],
                 stabilizer_delta: float = _STABILIZER_DELTA):
        group = action.group
        if len(axes) != group.dim:
            raise InputError("one lattice axis per group coordinate required")
        self.action = action
        self.anchor = anchor
        self.axes = tuple(axes)
        self.spacings = np.array([ax.spacing for ax in axes])
        for k, ax in enumerate(axes):
            if ax.kind == "cycle":
                period = group.periodic_axes.get(k)
                if period is None:
                    raise InputError("cyclic axis on a non-periodic coordinate")
                if abs(ax.spacing * ax.count - period) > 1e-12:
                    raise InputError("cyclic axis does not tile the period")

        grids = np.meshgrid(*[ax.indices() for ax in axes], indexing="ij")
        all_steps = np.stack([g.ravel() for g in grids], axis=-1)
        # identity-first canonical order so stabilizer classes keep the
        # earliest representative
        order = np.lexsort(tuple(all_steps.T[::-1]) + (np.sum(np.abs(all_steps), axis=1),))
        all_steps = all_steps[order]

        axis_mats = []
        for k, ax in enumerate(axes):
            base = group.compose_exps(ax.spacing * np.eye(group.dim)[k])
            axis_mats.append(base)
        mats = []
        for steps in all_steps:
            m = np.eye(group.rep_dim, dtype=axis_mats[0].dtype)
            for k, s in enumerate(steps):
                m = m @ np.linalg.matrix_power(axis_mats[k], int(s)) if s else m
            mats.append(m)
        mats = np.array(mats)

        base = action.base_points(mats, anchor)
        keep, seen = [], {}
        for j in range(all_steps.shape[0]):
            key = tuple(np.round(base[j] / stabilizer_delta).astype(np.int64))
            if key in seen:
                continue
            seen[key] = j
            keep.append(j)
        keep = np.asarray(keep)

        self.steps = all_steps[keep]
        self.group_mats = mats[keep]
        self.base_array = base[keep]
        self.stabilizer_delta = stabilizer_delta
        self._lookup = {tuple(s): i for i, s in enumerate(self.steps)}
        n = anchor.n
        self.base_points = tuple(
            ClassicalState(row[0], row[1:1 + n], row[1 + n:]) for row in self.base_array)
        self.deduplicated = self.steps.shape[0] < all_steps.shape[0]

        # flat position table for vectorized index lookups
        self._axis_lo = np.array([ax.lo if ax.kind == "line" else 0 for ax in axes])
        self._axis_size = np.array(
            [ax.hi - ax.lo + 1 if ax.kind == "line" else ax.count for ax in axes])
        self._axis_stride = np.ones(len(axes), dtype=np.int64)
        for k in range(len(axes) - 2, -1, -1):
            self._axis_stride[k] = self._axis_stride[k + 1] * self._axis_size[k + 1]
        table = np.full(int(np.prod(self._axis_size)), -1, dtype=np.int64)
        flat = (self.steps - self._axis_lo) @ self._axis_stride
        table[flat] = np.arange(self.steps.shape[0])
        self._position_table = table

    def __len__(self) -> int:
        return self.steps.shape[0]

    @property
    def fiber_dim(self) -> int:
        return self.action.dim_config.dim

    def identity_index(self) -> int:
        return self._lookup[tuple(np.zeros(len(self.axes), dtype=self.steps.dtype))]

    def samples(self):
        group = self.action.group
        return [GroupElement(group, m) for m in self.group_mats]

    def steps_of_element(self, g) -> np.ndarray:
        """Integer lattice steps of a group element; raises AlignmentError
        when g is off-lattice."""
        mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
        t = self.action.group.factorize_matrix(mat)
        raw = t / self.spacings
        steps = np.round(raw).astype(np.int64)
        if np.max(np.abs(raw - steps)) > _ALIGN_TOL / np.min(self.spacings):
            raise AlignmentError(
                f"group element with coordinates {t} is not lattice-aligned")
        return np.array([ax.wrap(s) for ax, s in zip(self.axes, steps)])

    def index_of_steps(self, steps) -> Optional[int]:
        return self._lookup.get(tuple(int(s) for s in steps))

    def indices_of_matrices(self, mats: np.ndarray) -> np.ndarray:
        """Sample indices of a stack of group matrices (-1 where the point is
        outside the window); raises AlignmentError on off-lattice points."""
        coords = self.action.group.coords_batch(mats)
        raw = coords / self.spacings
        steps = np.round(raw).astype(np.int64)
        if raw.size and np.max(np.abs(raw - steps)) > _ALIGN_TOL / np.min(self.spacings):
            raise AlignmentError("off-lattice point in index lookup")
        inside = np.ones(steps.shape[0], dtype=bool)
        for k, ax in enumerate(self.axes):
            if ax.kind == "cycle":
                steps[:, k] = np.mod(steps[:, k], ax.count)
            else:
                inside &= (steps[:, k] >= ax.lo) & (steps[:, k] <= ax.hi)
        out = np.full(steps.shape[0], -1, dtype=np.int64)
        if np.any(inside):
            flat = (steps[inside] - self._axis_lo) @ self._axis_stride
            out[inside] = self._position_table[flat]
        return out

    def state_rows(self, mats: np.ndarray) -> np.ndarray:
        """Orbit base points u_g(anchor) for arbitrary group matrices."""
        return self.action.base_points(mats, self.anchor)


@dataclass(frozen=True)
class Section:
    """Sampled section: one fiber value per sample, plus an optional
    closed-form batch evaluator over group matrices."""

    sampling: OrbitSampling
    values: np.ndarray
    field: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (len(self.sampling), self.sampling.fiber_dim):
            raise InputError("section values have the wrong shape")
        object.__setattr__(self, "values", values)

    @staticmethod
    def from_field(sampling: OrbitSampling, field) -> "Section":
        return Section(sampling, field(sampling.group_mats), field)

    @property
    def norm(self) -> float:
        """Sup-norm over the orbit: max fiber norm over samples."""
        if len(self.sampling) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def fiber_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def _check_same(self, other: "Section") -> None:
        if other.sampling is not self.sampling:
            raise InputError("sections live on different samplings")

    def __add__(self, other: "Section") -> "Section":
        self._check_same(other)
        f = None
        if self.field is not None and other.field is not None:
            sf, of = self.field, other.field
            f = lambda mats: sf(mats) + of(mats)
        return Section(self.sampling, self.values + other.values, f)

    def __sub__(self, other: "Section") -> "Section":
        self._check_same(other)
        f = None
        if self.field is not None and other.field is not None:
            sf, of = self.field, other.field
            f = lambda mats: sf(mats) - of(mats)
        return Section(self.sampling, self.values - other.values, f)

    def __mul__(self, scale: complex) -> "Section":
        f = None
        if self.field is not None:
            sf = self.field
            f = lambda mats: scale * sf(mats)
        return Section(self.sampling, scale * self.values, f)

    __rmul__ = __mul__


@dataclass(frozen=True)
class BaseFunction:
    """Complex function on the base, with an optional vectorized form over
    stacked state rows (J, 2n+1)."""

    fn: Callable[[ClassicalState], complex]
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smooth: bool = True

    def __call__(self, X: ClassicalState) -> complex:
        return self.fn(X)

    def eval_rows(self, rows: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(rows), dtype=complex)
        n = (rows.shape[1] - 1) // 2
        return np.array([self.fn(ClassicalState(r[0], r[1:1 + n], r[1 + n:]))
                         for r in rows], dtype=complex)

    def eval_on(self, sampling: OrbitSampling) -> np.ndarray:
        return self.eval_rows(sampling.base_array)


@dataclass(frozen=True)
class SampledBaseFunction:
    """Base-function samples aligned with an orbit sampling (the output of
    the pairing and of base derivatives)."""

    sampling: OrbitSampling
    values: np.ndarray
    field: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def section_norm(psi: Section) -> float:
    if len(psi.sampling) == 0:
        raise InputError("empty sampling")
    return psi.norm


def _fiber_matrix_for(action: BundleAction, g_mat: np.ndarray,
                      sampling: OrbitSampling) -> np.ndarray:
    return action.fiber_matrix(g_mat)


def section_transform(action: BundleAction, g, psi: Section) -> Section:
    """Left regular transform: value at u_h(anchor) becomes
    U_g applied to the value at u_{g^-1 h}(anchor).

    ``g`` must be lattice-aligned; re-indexing is exact.  Nonzero values may
    not leave the sampled window (that would silently truncate the section),
    so support overflow raises AlignmentError.
    """
    sampling = psi.sampling
    if action is not sampling.action:
        raise InputError("section transform with a foreign action")
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
    sampling.steps_of_element(g_mat)   # alignment check
    inv_g = np.linalg.inv(g_mat)
    sources = sampling.indices_of_matrices(
        np.einsum("ab,jbc->jac", inv_g, sampling.group_mats))
    U = _fiber_matrix_for(action, g_mat, sampling)
    new_values = np.zeros_like(psi.values)
    found = sources >= 0
    new_values[found] = psi.values[sources[found]] @ U.T
    if not np.isclose(np.sum(np.abs(new_values) ** 2),
                      np.sum(np.abs(psi.values) ** 2),
                      rtol=1e-10, atol=1e-300):
        raise AlignmentError(
            "section support left the sampled window under this transform")
    new_field = None
    if psi.field is not None:
        pf = psi.field
        def new_field(mats):
            return pf(np.einsum("ab,jbc->jac", inv_g, mats)) @ U.T
    return Section(sampling, new_values, new_field)


def evaluator_transform(action: BundleAction, g, psi: Section) -> Section:
    """Left regular transform of a field-backed section at an arbitrary
    (possibly off-lattice) group element: values are re-evaluated from the
    closed-form field, never interpolated.  Lattice-only sections are
    refused."""
    if psi.field is None:
        raise AlignmentError(
            "off-lattice transform needs a field-backed section")
    sampling = psi.sampling
    if action is not sampling.action:
        raise InputError("section transform with a foreign action")
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
    inv_g = np.linalg.inv(g_mat)
    U = action.fiber_matrix(g_mat)
    pf = psi.field

    def new_field(mats):
        return pf(np.einsum("ab,jbc->jac", inv_g, mats)) @ U.T

    return Section.from_field(sampling, new_field)


def multiply(alpha: BaseFunction, psi: Section) -> Section:
    """Multiplication operator: value at X scaled by alpha(X)."""
    sampling = psi.sampling
    scale = alpha.eval_on(sampling)
    new_field = None
    if psi.field is not None:
        pf = psi.field
        def new_field(mats):
            rows = sampling.state_rows(mats)
            return alpha.eval_rows(rows)[:, None] * pf(mats)
    return Section(sampling, scale[:, None] * psi.values, new_field)


def pullback(action: BundleAction, g, alpha: BaseFunction) -> BaseFunction:
    """Base-function pullback: X -> alpha(u_{g^-1} X)."""
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
    inv = np.linalg.inv(g_mat)

    def fn(X: ClassicalState) -> complex:
        return alpha.fn(action.base_map(inv, X))

    def batch(rows: np.ndarray) -> np.ndarray:
        n = (rows.shape[1] - 1) // 2
        mapped = np.array([action.base_map(
            inv, ClassicalState(r[0], r[1:1 + n], r[1 + n:])).as_array()
            for r in rows])
        return alpha.eval_rows(mapped)

    return BaseFunction(fn=fn, batch=batch, smooth=alpha.smooth)


def pairing(phi: Section, psi: Section) -> SampledBaseFunction:
    """Pointwise fiber inner products <phi_X, psi_X> over the sampling
    (conjugate-linear in the first argument)."""
    if phi.sampling is not psi.sampling:
        raise InputError("pairing requires a common sampling")
    vals = np.sum(np.conj(phi.values) * psi.values, axis=1)
    field = None
    if phi.field is not None and psi.field is not None:
        pf, qf = phi.field, psi.field
        def field(mats):
            return np.sum(np.conj(pf(mats)) * qf(mats), axis=1)
    return SampledBaseFunction(phi.sampling, vals, field)


def delta_section(sampling: OrbitSampling, index: int, value: np.ndarray) -> Section:
    """Section supported on a single sample (the bump reconstruction probe)."""
    values = np.zeros((len(sampling), sampling.fiber_dim), dtype=complex)
    values[index] = value
    return Section(sampling, values)


def reconstruct_pointwise_operator(sampling: OrbitSampling, g, X: ClassicalState,
                                   phi0: np.ndarray) -> np.ndarray:
    """Recover U_g(u_g X <- X) phi0 from the section transform alone: plant
    phi0 in a bump section at X, transform, and read off the value at u_g X."""
    dists = np.linalg.norm(sampling.base_array - X.as_array(), axis=1)
    idx = int(np.argmin(dists))
    if dists[idx] > 1e-9:
        raise AlignmentError("state is not on the sampled orbit")
    psi = delta_section(sampling, idx, np.asarray(phi0, dtype=complex))
    moved = section_transform(sampling.action, g, psi)
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
    target_mat = g_mat @ sampling.group_mats[idx]
    target = sampling.indices_of_matrices(target_mat[None])[0]
    if target < 0:
        raise AlignmentError("transformed point left the sampled window")
    return moved.values[target]


# ---------------------------------------------------------------------------
# probe sections
# ---------------------------------------------------------------------------

def smooth_probe_section(sampling: OrbitSampling, rng: np.random.Generator,
                         max_degree: int, radius, center=None,
                         kappa_scale: float = 1.0) -> Section:
    """Smooth compactly supported random section: a C-infinity bump in
    second-kind coordinates times a low-mode fiber profile with smooth
    coordinate dependence.  Carries an exact batch field."""
    group = sampling.action.group
    cfg = sampling.action.dim_config
    degrees = cfg.degrees()
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (group.dim,)).copy()
    center = np.zeros(group.dim) if center is None else np.asarray(center, dtype=float)

    def draw_vec():
        v = rng.standard_normal(cfg.dim) + 1j * rng.standard_normal(cfg.dim)
        v[degrees > max_degree] = 0.0
        return v

    v0 = draw_vec()
    v0 /= np.linalg.norm(v0)
    slopes = np.stack([0.3 * draw_vec() for _ in range(group.dim)])
    kappa = kappa_scale * rng.uniform(-1.0, 1.0, group.dim)

    def field(mats):
        t = group.coords_batch(np.asarray(mats)) - center
        r2 = np.sum((t / radius) ** 2, axis=-1)
        env = np.zeros(r2.shape)
        inside = r2 < 1.0
        env[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        phase = np.exp(1j * (t @ kappa))
        vecs = v0[None, :] + t @ slopes
        return (env * phase)[:, None] * vecs

    return Section.from_field(sampling, field)


def gentle_probe_section(sampling: OrbitSampling, rng: np.random.Generator,
                         max_degree: int, sigma, support_factor: float = 4.0,
                         kappa_scale: float = 1.0) -> Section:
    """Probe with gentle derivatives for finite-difference work: a Gaussian
    bulk of width ``sigma`` per axis under a wide bump (support at
    ``support_factor * sigma``), so the bump's boundary layer is exponentially
    suppressed and fd residuals scale with 1/sigma, not with the bump edge."""
    group = sampling.action.group
    cfg = sampling.action.dim_config
    degrees = cfg.degrees()
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (group.dim,)).copy()
    radius = support_factor * sigma

    def draw_vec():
        v = rng.standard_normal(cfg.dim) + 1j * rng.standard_normal(cfg.dim)
        v[degrees > max_degree] = 0.0
        return v

    v0 = draw_vec()
    v0 /= np.linalg.norm(v0)
    slopes = np.stack([0.3 * draw_vec() for _ in range(group.dim)])
    kappa = kappa_scale * rng.uniform(-1.0, 1.0, group.dim)

    def field(mats):
        t = group.coords_batch(np.asarray(mats))
        r2 = np.sum((t / radius) ** 2, axis=-1)
        env = np.zeros(r2.shape)
        inside = r2 < 1.0
        env[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        env *= np.exp(-0.5 * np.sum((t / sigma) ** 2, axis=-1))
        phase = np.exp(1j * (t @ kappa))
        vecs = v0[None, :] + t @ slopes
        return (env * phase)[:, None] * vecs

    return Section.from_field(sampling, field)


def section_to_json(psi: Section) -> str:
    """Serialize a section: second-kind sampling coordinates plus per-sample
    complex coefficient arrays."""
    sampling = psi.sampling
    coords = sampling.steps * sampling.spacings
    payload = {
        "group_id": sampling.action.group.group_id,
        "spacings": [float(s) for s in sampling.spacings],
        "coordinates": [[float(v) for v in row] for row in coords],
        "values": [[[float(c.real), float(c.imag)] for c in row]
                   for row in psi.values],
    }
    return json.dumps(payload, sort_keys=True)
