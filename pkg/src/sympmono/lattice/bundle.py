"""U(1) line bundles on the lattice torus, stored as unitary link variables.

A connection is an array ``U`` of shape ``(2n, *grid)``; ``U[a][x]`` is the
parallel transport from ``x + e_a`` back to ``x``. A gauge transformation
``g`` acts by ``U_a(x) -> g(x) U_a(x) conj(g(x + e_a))`` and on sections by
``f -> g f``, which makes the forward covariant difference equivariant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import TorusGeometry, GeometryMismatchError


def shift(f: np.ndarray, geom: TorusGeometry, a: int, step: int = 1) -> np.ndarray:
    """Return ``f(x + step e_a)`` on the periodic grid."""
    return np.roll(f, -step, axis=geom.grid_axis(a))


def trivial_links(geom: TorusGeometry) -> np.ndarray:
    return np.ones((geom.real_dim,) + geom.shape, dtype=complex)


def constant_curvature_links(geom, twists, holonomy=None) -> np.ndarray:
    """Landau-gauge links with constant plaquette phase in each complex plane.

    In plane ``j`` every ``(x_j, y_j)`` plaquette carries phase ``exp(i theta)``
    with ``theta = -2 pi k_j / N^2``, so the face sum is ``-2 pi k_j``. Links
    only depend on their own plane's coordinates, so mixed plaquettes are 1.
    ``holonomy`` adds a flat factor ``exp(i phi_a / N)`` on every link along
    axis ``a``.
    """
    n, N = geom.complex_dim, geom.grid_points
    twists = tuple(int(k) for k in twists)
    if len(twists) != n:
        raise ValueError(f"expected {n} twists, got {len(twists)}")
    U = trivial_links(geom)
    idx = np.arange(N)
    for j, k in enumerate(twists):
        if k == 0:
            continue
        theta = -2.0 * np.pi * k / N**2
        shape_x = [1] * geom.real_dim
        shape_x[2 * j] = N
        shape_y = [1] * geom.real_dim
        shape_y[2 * j + 1] = N
        U[2 * j + 1] = U[2 * j + 1] * np.exp(1j * theta * idx).reshape(shape_x)
        # transition on the last x-slice closes the y-holonomy
        edge = (idx == N - 1).reshape(shape_x)
        phase = np.exp(-1j * theta * N * idx).reshape(shape_y)
        U[2 * j] = np.where(edge, U[2 * j] * phase, U[2 * j])
    if holonomy is not None:
        holonomy = np.asarray(holonomy, dtype=float)
        if holonomy.shape != (geom.real_dim,):
            raise ValueError(f"holonomy must have {geom.real_dim} angles")
        U = U * np.exp(1j * holonomy / N).reshape((-1,) + (1,) * geom.real_dim)
    return U


@dataclass(frozen=True, eq=False)
class LineBundle:
    """Hermitian line bundle with a unitary lattice connection.

    Parameters
    ----------
    geometry : TorusGeometry
    twists : tuple of int
        First Chern class, one integer per complex coordinate plane.
    links : ndarray, shape (2n, *grid)
        Unit-modulus link variables.
    """

    geometry: TorusGeometry
    twists: tuple[int, ...]
    links: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.geometry.real_dim,) + self.geometry.shape
        if self.links.shape != expected:
            raise GeometryMismatchError(
                f"links have shape {self.links.shape}, expected {expected}"
            )

    @property
    def is_trivial_topology(self) -> bool:
        return not any(self.twists)

    def gauge_transform(self, g: np.ndarray) -> "LineBundle":
        return LineBundle(self.geometry, self.twists, gauge_transform_links(self.links, g, self.geometry))

    def with_links(self, links: np.ndarray) -> "LineBundle":
        return LineBundle(self.geometry, self.twists, links)


def constant_curvature_bundle(geom: TorusGeometry, twists, holonomy=None) -> LineBundle:
    """Bundle of the given twists with constant curvature connection."""
    links = constant_curvature_links(geom, twists, holonomy)
    return LineBundle(geom, tuple(int(k) for k in twists), links)


def trivial_bundle(geom: TorusGeometry) -> LineBundle:
    return LineBundle(geom, (0,) * geom.complex_dim, trivial_links(geom))


def gauge_transform_links(links: np.ndarray, g: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    out = np.empty_like(links)
    for a in range(geom.real_dim):
        out[a] = g * links[a] * np.conj(shift(g, geom, a))
    return out


def random_gauge(geom: TorusGeometry, rng: np.random.Generator, amplitude: float = 1.0,
                 smooth: bool = False) -> np.ndarray:
    """Random unit-modulus gauge field ``exp(i chi)``.

    With ``smooth`` the phase is a sum of a few low Fourier modes, which keeps
    link perturbations small; otherwise ``chi`` is i.i.d. per site.
    """
    if not smooth:
        chi = amplitude * rng.uniform(-np.pi, np.pi, size=geom.shape)
        return np.exp(1j * chi)
    chi = np.zeros(geom.shape)
    coords = geom.coordinates()
    for _ in range(3):
        m = rng.integers(-1, 2, size=geom.real_dim)
        phase = sum(2 * np.pi * m[a] * coords[a] / geom.periods[a] for a in range(geom.real_dim))
        chi = chi + amplitude * rng.normal() * np.cos(phase + rng.uniform(0, 2 * np.pi))
    return np.exp(1j * chi)
