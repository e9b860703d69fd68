"""Flat torus geometry and the multi-index bookkeeping for (0,q)-forms.

Real coordinates are ordered ``(x_1, y_1, ..., x_n, y_n)``; axis ``2j`` and
``2j + 1`` form the complex coordinate ``z_j = x_j + i y_j``. Every lattice
field stores the ``2n`` grid axes *last*, so operators accept arbitrary
leading batch or component axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations
from math import comb, prod

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(n: int, q: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing antiholomorphic index sets of size ``q``."""
    return tuple(combinations(range(n), q))


@lru_cache(maxsize=None)
def dbar_terms(n: int, q: int) -> tuple[tuple[int, int, int, int], ...]:
    """Wedge table for ``dz̄_j ∧ (0,q)``.

    Returns tuples ``(target, j, sign, source)`` meaning that component
    ``target`` of the (0,q+1)-form receives ``sign * Dbar_j`` applied to
    component ``source`` of the (0,q)-form.
    """
    if q >= n:
        return ()
    targets = {J: t for t, J in enumerate(multi_indices(n, q + 1))}
    terms = []
    for s, Jp in enumerate(multi_indices(n, q)):
        for j in range(n):
            if j in Jp:
                continue
            J = tuple(sorted(Jp + (j,)))
            sign = -1 if J.index(j) % 2 else 1
            terms.append((targets[J], j, sign, s))
    return tuple(terms)


class GeometryMismatchError(ValueError):
    """Fields defined on different grids were combined."""


@dataclass(frozen=True)
class TorusGeometry:
    """Flat torus ``T^{2n}`` with a periodic grid of ``N`` points per axis.

    Parameters
    ----------
    complex_dim : int
        Complex dimension ``n`` in ``{1, 2, 3}``.
    grid_points : int
        Even number of points ``N >= 4`` on every real axis.
    periods : sequence of float, optional
        Either ``2n`` real periods or ``n`` pairs ``(P_x, P_y)``. Defaults to
        unit periods.
    """

    complex_dim: int
    grid_points: int
    periods: tuple[float, ...] = field(default=())

    def __post_init__(self):
        n, N = self.complex_dim, self.grid_points
        if n not in (1, 2, 3):
            raise ValueError(f"complex_dim must be 1, 2 or 3, got {n}")
        if N < 4 or N % 2:
            raise ValueError(f"grid_points must be an even integer >= 4, got {N}")
        periods = self.periods
        if not periods:
            periods = (1.0,) * (2 * n)
        flat = []
        for p in periods:
            if isinstance(p, (tuple, list)):
                flat.extend(p)
            else:
                flat.append(p)
        if len(flat) != 2 * n:
            raise ValueError(f"expected {2 * n} periods, got {len(flat)}")
        if any(float(p) <= 0 for p in flat):
            raise ValueError("periods must be positive")
        object.__setattr__(self, "periods", tuple(float(p) for p in flat))

    @property
    def real_dim(self) -> int:
        return 2 * self.complex_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.grid_points,) * self.real_dim

    @property
    def num_sites(self) -> int:
        return self.grid_points ** self.real_dim

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.periods) / self.grid_points

    @property
    def cell_volume(self) -> float:
        return float(prod(self.spacing))

    @property
    def volume(self) -> float:
        # equals the integral of omega^n / n!
        return float(prod(self.periods))

    def plane_area(self, j: int) -> float:
        return self.periods[2 * j] * self.periods[2 * j + 1]

    def grid_axis(self, a: int) -> int:
        """Array axis of real direction ``a`` (grid axes are trailing)."""
        return a - self.real_dim

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per real axis."""
        out = []
        for a in range(self.real_dim):
            shape = [1] * self.real_dim
            shape[a] = self.grid_points
            out.append((np.arange(self.grid_points) * self.spacing[a]).reshape(shape))
        return out

    def form_shape(self, q: int) -> tuple[int, ...]:
        return (comb(self.complex_dim, q),) + self.shape

    def zeros_form(self, q: int) -> np.ndarray:
        return np.zeros(self.form_shape(q), dtype=complex)

    def check_form(self, f: np.ndarray, q: int, name: str = "field") -> None:
        if f.shape[-self.real_dim - 1:] != self.form_shape(q):
            raise GeometryMismatchError(
                f"{name} has shape {f.shape}, expected trailing {self.form_shape(q)}"
            )

    def check_scalar(self, f: np.ndarray, name: str = "field") -> None:
        if f.shape[-self.real_dim:] != self.shape:
            raise GeometryMismatchError(
                f"{name} has shape {f.shape}, expected trailing {self.shape}"
            )

    def integrate(self, f: np.ndarray) -> np.ndarray | float:
        """Grid quadrature over the trailing grid axes."""
        axes = tuple(range(-self.real_dim, 0))
        return np.sum(f, axis=axes) * self.cell_volume

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        """L2 inner product, conjugate-linear in ``a``, summed over all axes."""
        return complex(np.vdot(a, b)) * self.cell_volume

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a).real, 0.0)))

    def to_dict(self) -> dict:
        return {
            "complex_dim": self.complex_dim,
            "grid_points": self.grid_points,
            "periods": list(self.periods),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TorusGeometry":
        return cls(int(d["complex_dim"]), int(d["grid_points"]), tuple(d.get("periods", ())))


def same_geometry(*geoms: TorusGeometry) -> TorusGeometry:
    first = geoms[0]
    for g in geoms[1:]:
        if g != first:
            raise GeometryMismatchError(f"geometry mismatch: {first} vs {g}")
    return first
