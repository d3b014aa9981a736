"""Matrix Lie groups and algebras.

A :class:`LieGroup` is a faithful matrix representation together with a fixed
algebra basis ``B_1..B_n``.  Everything downstream (orbit lattices, generator
exponentiation, Haar smoothing) works in the second-kind canonical chart

    g = exp(B_1 t_1) exp(B_2 t_2) ... exp(B_n t_n),

which is defined locally around the identity; ``factorize_second_kind``
refuses elements outside the registered domain radius instead of
extrapolating.

All values are immutable; operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ClosureError, InputError, OutOfDomainError

__all__ = [
    "AlgebraElement",
    "GroupElement",
    "HaarSample",
    "HaarQuadrature",
    "LieGroup",
    "Window",
    "exp",
    "bracket",
    "adjoint",
    "factorize_second_kind",
    "haar_quadrature",
    "register_group",
    "get_group",
    "builtin_group_ids",
    "smooth_bump",
]

_EXPAND_TOL = 1e-10
_FACTORIZE_TOL = 1e-9


@dataclass(frozen=True)
class AlgebraElement:
    """Element ``sum_k coords_k B_k`` of a registered Lie algebra."""

    group: "LieGroup"
    coords: np.ndarray
    matrix: np.ndarray

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_same(other)
        return AlgebraElement(self.group, self.coords + other.coords,
                              self.matrix + other.matrix)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_same(other)
        return AlgebraElement(self.group, self.coords - other.coords,
                              self.matrix - other.matrix)

    def __mul__(self, scale: float) -> "AlgebraElement":
        return AlgebraElement(self.group, self.coords * scale, self.matrix * scale)

    __rmul__ = __mul__

    def _check_same(self, other: "AlgebraElement") -> None:
        if other.group is not self.group:
            raise InputError("algebra elements belong to different groups")


@dataclass(frozen=True)
class GroupElement:
    """Point on the group manifold in the faithful representation."""

    group: "LieGroup"
    matrix: np.ndarray

    @property
    def group_id(self) -> str:
        return self.group.group_id

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.group is not self.group:
            raise InputError("group elements belong to different groups")
        return GroupElement(self.group, self.matrix @ other.matrix)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.group, np.linalg.inv(self.matrix))


@dataclass(frozen=True)
class HaarSample:
    point: GroupElement
    weight: float


@dataclass(frozen=True)
class HaarQuadrature:
    """Weighted sample set approximating ``integral d_Lg window(g) (.)``.

    Iterating yields :class:`HaarSample` objects; ``error_estimate`` is the
    embedded half-resolution estimate of the quadrature error of the total
    weight.
    """

    samples: tuple
    error_estimate: float

    @property
    def total_weight(self) -> float:
        return float(sum(s.weight for s in self.samples))

    def __iter__(self):
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Window:
    """Smooth compactly supported function on second-kind coordinates.

    ``support`` holds one ``(lo, hi)`` interval per coordinate axis.  On
    periodic axes the interval may cover the full period.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    support: tuple


class LieGroup:
    """A registered matrix Lie group with a fixed algebra basis.

    Parameters
    ----------
    group_id : str
        Registry key.
    basis : array (n, d, d)
        Algebra basis in the faithful representation.
    factorization_radius : float
        Sup-norm radius of the second-kind chart in which factorization is
        trusted.
    residual_fn : callable, optional
        Manifold membership residual; defaults to the recomposition residual
        through the second-kind chart.
    factorize_fn / coords_batch_fn : callable, optional
        Closed-form factorization (single matrix / stacked matrices).  When
        absent a Newton iteration seeded by the matrix logarithm is used.
    periodic_axes : dict, optional
        Maps coordinate axis index to its period (e.g. the rotation angle).
    """

    def __init__(self, group_id: str, basis: np.ndarray, factorization_radius: float,
                 residual_fn: Optional[Callable[[np.ndarray], float]] = None,
                 factorize_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 coords_batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 periodic_axes: Optional[dict] = None):
        basis = np.asarray(basis)
        if basis.ndim != 3 or basis.shape[1] != basis.shape[2]:
            raise InputError("basis must be a stack of square matrices")
        self.group_id = group_id
        self.basis = basis
        self.dim = basis.shape[0]
        self.rep_dim = basis.shape[1]
        self.factorization_radius = float(factorization_radius)
        self.periodic_axes = dict(periodic_axes or {})
        self._residual_fn = residual_fn
        self._factorize_fn = factorize_fn
        self._coords_batch_fn = coords_batch_fn
        # Pseudo-inverse of the basis-expansion map, real and imaginary parts
        # stacked so coordinates stay real.
        cols = basis.reshape(self.dim, -1).T
        self._expand_mat = np.vstack([cols.real, cols.imag])
        self._expand_pinv = np.linalg.pinv(self._expand_mat)

    # -- construction ------------------------------------------------------

    def identity(self) -> GroupElement:
        return GroupElement(self, np.eye(self.rep_dim, dtype=self.basis.dtype))

    def algebra(self, coords: Sequence[float]) -> AlgebraElement:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.dim,):
            raise InputError(f"expected {self.dim} coordinates, got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise InputError("non-finite algebra coordinates")
        matrix = np.tensordot(coords, self.basis, axes=(0, 0))
        return AlgebraElement(self, coords, matrix)

    def element(self, matrix: np.ndarray, check: bool = True) -> GroupElement:
        matrix = np.asarray(matrix)
        if matrix.shape != (self.rep_dim, self.rep_dim):
            raise InputError("matrix has wrong shape for this group")
        if check:
            res = self.manifold_residual(matrix)
            if not res <= _EXPAND_TOL:
                raise InputError(
                    f"matrix is off the {self.group_id} manifold (residual {res:.3e})")
        return GroupElement(self, matrix)

    # -- structure ---------------------------------------------------------

    def expand_in_basis(self, matrix: np.ndarray, tol: float = _EXPAND_TOL) -> np.ndarray:
        """Real coordinates of ``matrix`` in the algebra basis.

        Raises :class:`ClosureError` when the residual exceeds ``tol`` (the
        basis does not span the result).
        """
        vec = np.concatenate([matrix.real.ravel(), matrix.imag.ravel()])
        coords = self._expand_pinv @ vec
        residual = np.linalg.norm(self._expand_mat @ coords - vec)
        if not residual <= tol:
            raise ClosureError(
                f"matrix does not expand in the {self.group_id} basis "
                f"(residual {residual:.3e})")
        return coords

    def manifold_residual(self, matrix: np.ndarray) -> float:
        if self._residual_fn is not None:
            return float(self._residual_fn(matrix))
        # Generic fallback: recomposition through the local chart.
        try:
            t = self.factorize_matrix(matrix)
        except OutOfDomainError:
            return np.inf
        return float(np.linalg.norm(self.compose_exps(t) - matrix))

    def compose_exps(self, t: Sequence[float]) -> np.ndarray:
        """Matrix of ``exp(B_1 t_1) ... exp(B_n t_n)``."""
        t = np.asarray(t, dtype=float)
        out = np.eye(self.rep_dim, dtype=complex if np.iscomplexobj(self.basis) else float)
        for k in range(self.dim):
            out = out @ scipy.linalg.expm(t[k] * self.basis[k])
        return out

    def factorize_matrix(self, matrix: np.ndarray) -> np.ndarray:
        if self._factorize_fn is not None:
            t = np.asarray(self._factorize_fn(matrix), dtype=float)
        else:
            t = self._newton_factorize(matrix)
        if np.max(np.abs(t)) > self.factorization_radius + 1e-12:
            raise OutOfDomainError(
                f"{self.group_id}: coordinates {t} outside factorization radius "
                f"{self.factorization_radius}")
        return t

    def coords_batch(self, mats: np.ndarray) -> np.ndarray:
        """Second-kind coordinates for a stack of group matrices (J, d, d)."""
        if self._coords_batch_fn is not None:
            return self._coords_batch_fn(np.asarray(mats))
        return np.array([self.factorize_matrix(m) for m in np.asarray(mats)])

    def _newton_factorize(self, matrix: np.ndarray) -> np.ndarray:
        logm = scipy.linalg.logm(np.asarray(matrix, dtype=complex))
        try:
            t = self.expand_in_basis(logm, tol=1e-6)
        except ClosureError as err:
            raise OutOfDomainError(f"{self.group_id}: log seed failed") from err
        target = np.concatenate([matrix.real.ravel(), matrix.imag.ravel()])
        for _ in range(60):
            exps = [scipy.linalg.expm(t[k] * self.basis[k]) for k in range(self.dim)]
            prefix = [np.eye(self.rep_dim, dtype=complex)]
            for e in exps:
                prefix.append(prefix[-1] @ e)
            current = prefix[-1]
            res = np.concatenate([current.real.ravel(), current.imag.ravel()]) - target
            if np.linalg.norm(res) < 1e-13:
                break
            suffix = np.eye(self.rep_dim, dtype=complex)
            cols = np.empty((target.size, self.dim))
            for k in range(self.dim - 1, -1, -1):
                d = prefix[k] @ self.basis[k] @ exps[k] @ suffix
                cols[:, k] = np.concatenate([d.real.ravel(), d.imag.ravel()])
                suffix = exps[k] @ suffix
            step, *_ = np.linalg.lstsq(cols, -res, rcond=None)
            t = t + step
            if np.max(np.abs(t)) > 4 * self.factorization_radius:
                raise OutOfDomainError(
                    f"{self.group_id}: Newton iteration left the local chart")
        else:
            raise OutOfDomainError(f"{self.group_id}: Newton factorization stalled")
        return t

    def left_density(self, t: np.ndarray) -> float:
        """Left-invariant Haar density in the second-kind chart at ``t``."""
        exps = [scipy.linalg.expm(t[k] * self.basis[k]) for k in range(self.dim)]
        cols = np.empty((self.dim, self.dim))
        tail = np.eye(self.rep_dim, dtype=complex)  # E_{k+1} ... E_n
        for k in range(self.dim - 1, -1, -1):
            ad = np.linalg.inv(tail) @ self.basis[k] @ tail
            cols[:, k] = self.expand_in_basis(ad)
            tail = exps[k] @ tail
        return float(abs(np.linalg.det(cols)))

    def __repr__(self) -> str:
        return f"LieGroup({self.group_id!r}, dim={self.dim})"


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def exp(A: AlgebraElement, t: float = 1.0) -> GroupElement:
    """Group exponential ``exp(t A)`` in the faithful representation."""
    if not np.isfinite(t):
        raise InputError("non-finite exponential parameter")
    if not np.all(np.isfinite(A.matrix)):
        raise InputError("non-finite algebra matrix")
    return GroupElement(A.group, scipy.linalg.expm(float(t) * A.matrix))


def bracket(A: AlgebraElement, B: AlgebraElement) -> AlgebraElement:
    """Commutator ``AB - BA`` re-expanded in the registered basis."""
    A._check_same(B)
    comm = A.matrix @ B.matrix - B.matrix @ A.matrix
    coords = A.group.expand_in_basis(comm)
    return AlgebraElement(A.group, coords, comm)


def adjoint(h: GroupElement, A: AlgebraElement) -> AlgebraElement:
    """Adjoint action ``h A h^{-1}`` re-expanded in the registered basis."""
    if h.group is not A.group:
        raise InputError("group element and algebra element belong to different groups")
    mat = h.matrix @ A.matrix @ np.linalg.inv(h.matrix)
    coords = h.group.expand_in_basis(mat)
    return AlgebraElement(h.group, coords, mat)


def factorize_second_kind(g: GroupElement) -> np.ndarray:
    """Coordinates ``(t_1..t_n)`` with ``exp(B_1 t_1)...exp(B_n t_n) = g``."""
    t = g.group.factorize_matrix(g.matrix)
    residual = np.linalg.norm(g.group.compose_exps(t) - g.matrix)
    if not residual <= _FACTORIZE_TOL:
        raise OutOfDomainError(
            f"{g.group_id}: factorization residual {residual:.3e} exceeds "
            f"{_FACTORIZE_TOL}")
    return t


def haar_quadrature(group: LieGroup, window: Window, resolution: int) -> HaarQuadrature:
    """Midpoint-rule quadrature of ``d_Lg window(g)`` in the second-kind chart.

    Returns weighted group samples; ``resolution`` is the number of nodes per
    coordinate axis.  The left-invariant density is evaluated exactly from
    the adjoint representation (constant for the unimodular built-ins in
    nilpotent/abelian charts).
    """
    if resolution < 2:
        raise InputError("resolution must be at least 2")
    total, samples = _haar_sum(group, window, resolution)
    coarse, _ = _haar_sum(group, window, max(2, resolution // 2), materialize=False)
    return HaarQuadrature(samples=tuple(samples), error_estimate=abs(total - coarse))


def _haar_sum(group: LieGroup, window: Window, resolution: int, materialize: bool = True):
    axes = []
    volume = 1.0
    for k, (lo, hi) in enumerate(window.support):
        if not hi > lo:
            raise InputError("empty window support interval")
        step = (hi - lo) / resolution
        axes.append(lo + step * (np.arange(resolution) + 0.5))
        volume *= step
    grids = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=-1)
    values = np.asarray(window.fn(coords), dtype=float)
    if values.shape != (coords.shape[0],):
        raise InputError("window.fn must map (J, n) coordinates to (J,) values")
    total = 0.0
    samples = []
    for t, val in zip(coords, values):
        if val == 0.0 and materialize:
            continue
        w = volume * group.left_density(t) * val
        total += w
        if materialize and w != 0.0:
            samples.append(HaarSample(GroupElement(group, group.compose_exps(t)), w))
    if not materialize:
        total = float(volume * np.sum([group.left_density(t) * v
                                       for t, v in zip(coords, values) if v != 0.0]))
    return total, samples


def smooth_bump(radius: float) -> Callable[[np.ndarray], np.ndarray]:
    """Standard C-infinity bump ``exp(1 - 1/(1-(r/radius)^2))`` of compact
    support ``|t|_2 < radius`` on coordinate space; vectorized over (J, n)."""
    def fn(coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        r2 = np.sum((coords / radius) ** 2, axis=-1)
        out = np.zeros(r2.shape)
        inside = r2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out
    return fn


# ---------------------------------------------------------------------------
# Built-in catalog
# ---------------------------------------------------------------------------

_REGISTRY: dict = {}


def register_group(group: LieGroup, replace: bool = False) -> LieGroup:
    if group.group_id in _REGISTRY and not replace:
        raise InputError(f"group {group.group_id!r} already registered")
    _REGISTRY[group.group_id] = group
    return group


def get_group(group_id: str) -> LieGroup:
    try:
        return _REGISTRY[group_id]
    except KeyError:
        raise InputError(f"unknown group {group_id!r}") from None


def builtin_group_ids() -> tuple:
    return tuple(sorted(_REGISTRY))


def _unipotent_residual(pattern: np.ndarray) -> Callable[[np.ndarray], float]:
    """Residual for upper-triangular unit-diagonal groups: off-pattern
    entries must match the identity matrix."""
    def fn(matrix: np.ndarray) -> float:
        eye = np.eye(matrix.shape[0])
        return float(np.linalg.norm((matrix - eye) * (1.0 - pattern)))
    return fn


def _make_real_line() -> LieGroup:
    basis = np.zeros((1, 2, 2))
    basis[0, 0, 1] = 1.0
    pattern = np.zeros((2, 2))
    pattern[0, 1] = 1.0
    return LieGroup(
        "real_line", basis, factorization_radius=np.inf,
        residual_fn=_unipotent_residual(pattern),
        factorize_fn=lambda m: np.array([m[0, 1].real]),
        coords_batch_fn=lambda ms: ms[:, 0, 1].real.reshape(-1, 1),
    )


def _make_translations_r2() -> LieGroup:
    basis = np.zeros((2, 3, 3))
    basis[0, 0, 2] = 1.0
    basis[1, 1, 2] = 1.0
    pattern = np.zeros((3, 3))
    pattern[0, 2] = pattern[1, 2] = 1.0
    return LieGroup(
        "translations_r2", basis, factorization_radius=np.inf,
        residual_fn=_unipotent_residual(pattern),
        factorize_fn=lambda m: np.array([m[0, 2].real, m[1, 2].real]),
        coords_batch_fn=lambda ms: np.stack(
            [ms[:, 0, 2].real, ms[:, 1, 2].real], axis=-1),
    )


def _heisenberg_factorize(m: np.ndarray) -> np.ndarray:
    a, b, c = m[0, 1].real, m[1, 2].real, m[0, 2].real
    return np.array([a, b, c - a * b])


def _heisenberg_batch(ms: np.ndarray) -> np.ndarray:
    a = ms[:, 0, 1].real
    b = ms[:, 1, 2].real
    c = ms[:, 0, 2].real
    return np.stack([a, b, c - a * b], axis=-1)


def _make_heisenberg() -> LieGroup:
    basis = np.zeros((3, 3, 3))
    basis[0, 0, 1] = 1.0   # shift generator (position direction)
    basis[1, 1, 2] = 1.0   # shift generator (momentum direction)
    basis[2, 0, 2] = 1.0   # central element
    pattern = np.zeros((3, 3))
    pattern[0, 1] = pattern[1, 2] = pattern[0, 2] = 1.0
    return LieGroup(
        "heisenberg", basis, factorization_radius=np.inf,
        residual_fn=_unipotent_residual(pattern),
        factorize_fn=_heisenberg_factorize,
        coords_batch_fn=_heisenberg_batch,
    )


def _so2_residual(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(matrix.T @ matrix - np.eye(2))
                 + abs(np.linalg.det(matrix) - 1.0)
                 + np.linalg.norm(np.asarray(matrix).imag))


def _make_so2() -> LieGroup:
    basis = np.zeros((1, 2, 2))
    basis[0, 0, 1] = -1.0
    basis[0, 1, 0] = 1.0
    return LieGroup(
        "so2", basis, factorization_radius=np.pi,
        residual_fn=_so2_residual,
        factorize_fn=lambda m: np.array([np.arctan2(m[1, 0].real, m[0, 0].real)]),
        coords_batch_fn=lambda ms: np.arctan2(
            ms[:, 1, 0].real, ms[:, 0, 0].real).reshape(-1, 1),
        periodic_axes={0: 2 * np.pi},
    )


def _su2_residual(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(matrix.conj().T @ matrix - np.eye(2))
                 + abs(np.linalg.det(matrix) - 1.0))


def _make_su2() -> LieGroup:
    sigma = np.array([
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ], dtype=complex)
    basis = -0.5j * sigma
    return LieGroup("su2", basis, factorization_radius=1.5,
                    residual_fn=_su2_residual)


for _g in (_make_real_line(), _make_translations_r2(), _make_heisenberg(),
           _make_so2(), _make_su2()):
    register_group(_g)
