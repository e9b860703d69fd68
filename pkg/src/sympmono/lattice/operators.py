"""Covariant difference operators, curvature and contractions on the lattice.

Every operator acts on the trailing grid axes, so fields may carry leading
batch or component axes. The (0,q)-component axis sits directly in front of
the grid axes.

Conventions
-----------
``D_a f(x) = (U_a(x) f(x + e_a) - f(x)) / h_a`` and
``Dbar_j = (D_{x_j} + i D_{y_j}) / 2``. Adjoints are derived mechanically,
so ``<dbar a, b> = <a, dbar* b>`` holds to rounding on every bundle.
Curvature is the principal-branch plaquette angle divided by the plaquette
area, ``F_ab = i arg(P_ab) / (h_a h_b)``; a constant twist ``k`` on the unit
square gives ``F = -2 pi i k dx ^ dy`` and ``i Lambda F = 2 pi k``.
"""
from __future__ import annotations

from math import factorial

import numpy as np

from .bundle import LineBundle, shift
from .geometry import TorusGeometry, dbar_terms, multi_indices


class DegreeError(ValueError):
    """Operator applied outside the range of form degrees."""


class CurvatureOverflowError(ArithmeticError):
    """A plaquette phase sits on the branch cut of the logarithm."""


def _ix(s: int, d: int) -> tuple:
    # index of component s when the component axis precedes d grid axes
    return (Ellipsis, s) + (slice(None),) * d


def _links(bundle) -> np.ndarray | None:
    if bundle is None:
        return None
    if isinstance(bundle, LineBundle):
        return bundle.links
    return bundle


def cov_diff(f, geom: TorusGeometry, a: int, links=None) -> np.ndarray:
    """Forward covariant difference ``D_a f``."""
    fs = shift(f, geom, a)
    if links is not None:
        fs = links[a] * fs
    return (fs - f) / geom.spacing[a]


def cov_diff_adjoint(f, geom: TorusGeometry, a: int, links=None) -> np.ndarray:
    """Adjoint ``D_a^* f(x) = (conj(U_a(x - e_a)) f(x - e_a) - f(x)) / h_a``."""
    g = f if links is None else np.conj(links[a]) * f
    return (shift(g, geom, a, -1) - f) / geom.spacing[a]


def dbar_j(f, geom, j, links=None):
    return 0.5 * (cov_diff(f, geom, 2 * j, links) + 1j * cov_diff(f, geom, 2 * j + 1, links))


def dbar_j_adjoint(f, geom, j, links=None):
    return 0.5 * (cov_diff_adjoint(f, geom, 2 * j, links)
                  - 1j * cov_diff_adjoint(f, geom, 2 * j + 1, links))


def dbar(f: np.ndarray, bundle, q: int, geom: TorusGeometry | None = None) -> np.ndarray:
    """Twisted Dolbeault operator on (0,q)-forms.

    Parameters
    ----------
    f : ndarray, shape (..., C(n, q), *grid)
    bundle : LineBundle, link array, or None for the trivial flat bundle
    q : int
        Form degree of ``f``.
    geom : TorusGeometry, optional
        Required when ``bundle`` is not a ``LineBundle``.

    Returns
    -------
    ndarray, shape (..., C(n, q + 1), *grid)
    """
    geom = geom or bundle.geometry
    n = geom.complex_dim
    if not 0 <= q < n:
        raise DegreeError(f"dbar needs 0 <= q < n={n}, got q={q}")
    geom.check_form(f, q, "f")
    links = _links(bundle)
    lead = f.shape[: -geom.real_dim - 1]
    out = np.zeros(lead + geom.form_shape(q + 1), dtype=complex)
    d = geom.real_dim
    for t, j, sign, s in dbar_terms(n, q):
        out[_ix(t, d)] += sign * dbar_j(f[_ix(s, d)], geom, j, links)
    return out


def dbar_adjoint(f: np.ndarray, bundle, q: int, geom: TorusGeometry | None = None) -> np.ndarray:
    """Formal adjoint of ``dbar`` mapping (0,q)-forms to (0,q-1)-forms."""
    geom = geom or bundle.geometry
    n = geom.complex_dim
    if not 1 <= q <= n:
        raise DegreeError(f"dbar_adjoint needs 1 <= q <= n={n}, got q={q}")
    geom.check_form(f, q, "f")
    links = _links(bundle)
    lead = f.shape[: -geom.real_dim - 1]
    out = np.zeros(lead + geom.form_shape(q - 1), dtype=complex)
    d = geom.real_dim
    for t, j, sign, s in dbar_terms(n, q - 1):
        out[_ix(s, d)] += sign * dbar_j_adjoint(f[_ix(t, d)], geom, j, links)
    return out


def plaquette_angles(links: np.ndarray, geom: TorusGeometry, check: bool = True) -> np.ndarray:
    """Principal plaquette angles ``Theta_ab`` as a dense antisymmetric array.

    Raises
    ------
    CurvatureOverflowError
        If any plaquette phase is within ``1e-10`` of ``-1``.
    """
    d = geom.real_dim
    theta = np.zeros((d, d) + geom.shape)
    for a in range(d):
        for b in range(a + 1, d):
            P = (links[a] * shift(links[b], geom, a)
                 * np.conj(shift(links[a], geom, b)) * np.conj(links[b]))
            ang = np.angle(P)
            if check and np.any(np.pi - np.abs(ang) < 1e-10):
                raise CurvatureOverflowError(
                    f"plaquette ({a},{b}) has phase near -1; refine the grid"
                )
            theta[a, b] = ang
            theta[b, a] = -ang
    return theta


def curvature(bundle, geom: TorusGeometry | None = None) -> np.ndarray:
    """Curvature 2-form ``F_ab`` (imaginary valued), shape ``(2n, 2n, *grid)``."""
    geom = geom or bundle.geometry
    theta = plaquette_angles(_links(bundle), geom)
    h = geom.spacing
    area = np.outer(h, h).reshape((geom.real_dim,) * 2 + (1,) * geom.real_dim)
    return 1j * theta / area


def curvature_parts(F: np.ndarray, geom: TorusGeometry):
    """Split a 2-form into its (2,0), (1,1) and (0,2) parts.

    Returns
    -------
    F20, F02 : ndarray, shape (C(n, 2), *grid)
        Coefficients on ``dz_j ^ dz_k`` and ``dz̄_j ^ dz̄_k`` for ``j < k``.
    F11 : ndarray, shape (2n, 2n, *grid)
        Dense real-coordinate components of the (1,1) part.
    """
    n = geom.complex_dim
    pairs = multi_indices(n, 2)
    F20 = np.zeros((len(pairs),) + geom.shape, dtype=complex)
    F02 = np.zeros_like(F20)
    for p, (j, k) in enumerate(pairs):
        xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
        F02[p] = 0.25 * (F[xj, xk] + 1j * F[xj, yk] + 1j * F[yj, xk] - F[yj, yk])
        F20[p] = 0.25 * (F[xj, xk] - 1j * F[xj, yk] - 1j * F[yj, xk] - F[yj, yk])
    F11 = F - two_form_from_pure(F20, F02, geom)
    return F20, F11, F02


def two_form_from_pure(F20: np.ndarray, F02: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Dense real components of ``sum F20 dz_j^dz_k + F02 dz̄_j^dz̄_k``."""
    d = geom.real_dim
    F = np.zeros((d, d) + F02.shape[1:], dtype=complex)
    for p, (j, k) in enumerate(multi_indices(geom.complex_dim, 2)):
        xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
        # dz_j ^ dz_k = (dxj + i dyj) ^ (dxk + i dyk)
        c = {(xj, xk): 1, (xj, yk): 1j, (yj, xk): 1j, (yj, yk): -1}
        for (a, b), v in c.items():
            val = F20[p] * v + F02[p] * np.conj(v)
            F[a, b] += val
            F[b, a] -= val
    return F


def omega(geom: TorusGeometry) -> np.ndarray:
    """Kähler form ``sum_j dx_j ^ dy_j`` as a dense 2-form."""
    d = geom.real_dim
    w = np.zeros((d, d) + geom.shape)
    for j in range(geom.complex_dim):
        w[2 * j, 2 * j + 1] = 1.0
        w[2 * j + 1, 2 * j] = -1.0
    return w


def lambda_contract(F: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Contraction ``Lambda F = sum_j F(e_{x_j}, e_{y_j})``; ``Lambda omega = n``."""
    return sum(F[2 * j, 2 * j + 1] for j in range(geom.complex_dim))


def omega_wedge(f: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """``omega ^ f`` for a scalar field; adjoint of ``lambda_contract``."""
    return omega(geom) * f


def two_form_inner(F: np.ndarray, G: np.ndarray, geom: TorusGeometry) -> complex:
    """L2 inner product of dense 2-forms summed over ``a < b``."""
    iu = np.triu_indices(geom.real_dim, 1)
    return geom.inner(F[iu], G[iu])


def degree_from_curvature(bundle, geom: TorusGeometry | None = None) -> float:
    """Grid quadrature of ``(i / 2 pi) int F ^ omega^{n-1}``.

    On a product torus with twists ``k_j`` this equals
    ``(n-1)! sum_j k_j prod_{m != j} area_m``; on unit ``T^2`` it is ``k``.
    """
    geom = geom or bundle.geometry
    F = curvature(bundle, geom)
    lam = lambda_contract(F, geom)
    total = geom.integrate(lam)
    return float((1j / (2 * np.pi) * factorial(geom.complex_dim - 1) * total).real)


def d0(f: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Forward exterior derivative of a function, shape ``(2n, *grid)``."""
    return np.stack([cov_diff(f, geom, a) for a in range(geom.real_dim)], axis=-geom.real_dim - 1)


def d0_adjoint(a: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """``d^*`` on 1-forms stored with the direction axis before the grid."""
    d = geom.real_dim
    return sum(cov_diff_adjoint(a[_ix(b, d)], geom, b) for b in range(d))


def laplacian(f: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Nonpositive Laplacian ``Delta = -d^* d`` (nearest-neighbour stencil)."""
    out = np.zeros_like(f, dtype=np.result_type(f, float))
    for a in range(geom.real_dim):
        h2 = geom.spacing[a] ** 2
        out = out + (shift(f, geom, a) + shift(f, geom, a, -1) - 2 * f) / h2
    return out


def laplacian_symbol(geom: TorusGeometry, m) -> float:
    """Eigenvalue of ``laplacian`` on the Fourier mode with integer wave vector ``m``."""
    N = geom.grid_points
    return float(sum((2 * np.cos(2 * np.pi * m[a] / N) - 2) / geom.spacing[a] ** 2
                     for a in range(geom.real_dim)))


def dbar_symbol(geom: TorusGeometry, m, j: int) -> complex:
    """Multiplier of ``Dbar_j`` on ``exp(2 pi i <m, x / P>)`` for the trivial bundle."""
    N = geom.grid_points
    zx = (np.exp(2j * np.pi * m[2 * j] / N) - 1) / geom.spacing[2 * j]
    zy = (np.exp(2j * np.pi * m[2 * j + 1] / N) - 1) / geom.spacing[2 * j + 1]
    return complex(0.5 * (zx + 1j * zy))


def laplacian_eigenvalues(geom: TorusGeometry) -> np.ndarray:
    """Eigenvalues of ``d^* d`` on the FFT grid (``numpy.fft`` ordering)."""
    N = geom.grid_points
    lam = np.zeros(geom.shape)
    for a in range(geom.real_dim):
        shape = [1] * geom.real_dim
        shape[a] = N
        th = 2 * np.pi * np.arange(N) / N
        lam = lam + ((2 - 2 * np.cos(th)) / geom.spacing[a] ** 2).reshape(shape)
    return lam


def poisson_preconditioner(geom: TorusGeometry, shift: float | np.ndarray = 1.0):
    """``LinearOperator`` applying ``(d^* d + shift P_0)^{-1}`` by FFT.

    ``P_0`` is the projection onto constants, so the operator is invertible
    for any positive ``shift``.
    """
    from scipy.sparse.linalg import LinearOperator

    lam = laplacian_eigenvalues(geom)
    lam.flat[0] = float(shift)
    shape = geom.shape

    def apply(x):
        xh = np.fft.fftn(x.reshape(shape))
        out = np.fft.ifftn(xh / lam)
        return (out.real if np.isrealobj(x) else out).ravel()

    M = geom.num_sites
    return LinearOperator((M, M), matvec=apply, dtype=float)
