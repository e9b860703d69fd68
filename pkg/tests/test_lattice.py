import numpy as np
import pytest

from sympmono.lattice import (
    CurvatureOverflowError,
    DegreeError,
    GeometryMismatchError,
    TorusGeometry,
    constant_curvature_bundle,
    constant_curvature_links,
    curvature,
    curvature_parts,
    d0,
    d0_adjoint,
    dbar,
    dbar_adjoint,
    dbar_symbol,
    dbar_terms,
    degree_from_curvature,
    gauge_transform_links,
    lambda_contract,
    laplacian,
    laplacian_eigenvalues,
    laplacian_symbol,
    multi_indices,
    omega,
    plaquette_angles,
    random_gauge,
    trivial_links,
    two_form_from_pure,
)
from sympmono.lattice.bundle import shift


def crandn(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_geometry_basics():
    g = TorusGeometry(2, 8, ((1.0, 2.0), (3.0, 0.5)))
    assert g.real_dim == 4 and g.shape == (8,) * 4 and g.num_sites == 8**4
    assert g.volume == pytest.approx(3.0)
    assert g.form_shape(1) == (2, 8, 8, 8, 8)
    assert np.allclose(g.spacing, [1 / 8, 2 / 8, 3 / 8, 0.5 / 8])
    assert TorusGeometry.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        TorusGeometry(1, 8, (1.0, -1.0))
    with pytest.raises(GeometryMismatchError):
        g.check_form(np.zeros((3,) + g.shape), 1)


def test_multi_indices_and_terms():
    assert multi_indices(3, 2) == ((0, 1), (0, 2), (1, 2))
    # every (form, direction) pair appears once for dbar on (0,1)-forms in n=3
    terms = dbar_terms(3, 1)
    assert len(terms) == 6
    assert len({(s, j) for _, j, _, s in terms}) == 6


@pytest.mark.parametrize("n,N,tw", [(1, 16, (2,)), (2, 6, (1, -1)), (3, 4, (1, 0, -1))])
def test_dbar_squares_to_zero_on_constant_curvature(n, N, tw, rng):
    g = TorusGeometry(n, N)
    U = constant_curvature_links(g, tw)
    for q in range(n - 1):
        f = crandn(rng, g.form_shape(q))
        assert np.max(np.abs(dbar(dbar(f, U, q, g), U, q + 1, g))) < 1e-10 * N**2


@pytest.mark.parametrize("n,N", [(1, 12), (2, 6), (3, 4)])
def test_dbar_adjoint_identity(n, N, rng):
    g = TorusGeometry(n, N)
    U = gauge_transform_links(constant_curvature_links(g, (1,) * n), random_gauge(g, rng), g)
    for q in range(n):
        a = crandn(rng, g.form_shape(q))
        b = crandn(rng, g.form_shape(q + 1))
        da = dbar(a, U, q, g)
        err = abs(g.inner(da, b) - g.inner(a, dbar_adjoint(b, U, q + 1, g)))
        assert err <= 1e-12 * g.norm(da) * g.norm(b)


def test_degree_errors():
    g = TorusGeometry(1, 8)
    with pytest.raises(DegreeError):
        dbar(g.zeros_form(1), None, 1, g)
    with pytest.raises(DegreeError):
        dbar_adjoint(g.zeros_form(0), None, 0, g)


def test_gauge_covariance_of_dbar(rng):
    g = TorusGeometry(2, 6)
    U = constant_curvature_links(g, (1, 2))
    gf = random_gauge(g, rng)
    f = crandn(rng, g.form_shape(1))
    lhs = dbar(gf * f, gauge_transform_links(U, gf, g), 1, g)
    assert np.allclose(lhs, gf * dbar(f, U, 1, g), atol=1e-12)


@pytest.mark.parametrize("k", [-2, 1, 3])
def test_constant_twist_curvature(k):
    g = TorusGeometry(1, 16)
    F = curvature(constant_curvature_links(g, (k,)), g)
    assert np.allclose(F[0, 1], -2j * np.pi * k)
    assert np.allclose((1j * lambda_contract(F, g)).real, 2 * np.pi * k)
    assert degree_from_curvature(constant_curvature_bundle(g, (k,))) == pytest.approx(k)


def test_product_degree_matches_formula():
    g = TorusGeometry(3, 4, ((1.0, 2.0), (1.0, 1.0), (0.5, 1.0)))
    deg = degree_from_curvature(constant_curvature_bundle(g, (1, -1, 2)))
    areas = [2.0, 1.0, 0.5]
    expected = 2 * (1 * areas[1] * areas[2] - 1 * areas[0] * areas[2] + 2 * areas[0] * areas[1])
    assert deg == pytest.approx(expected)


def test_mixed_plaquettes_trivial_and_parts_roundtrip(rng):
    g = TorusGeometry(2, 6)
    F = curvature(constant_curvature_links(g, (1, 2)), g)
    F20, F11, F02 = curvature_parts(F, g)
    assert np.max(np.abs(F02)) < 1e-12 and np.max(np.abs(F20)) < 1e-12
    a, b = crandn(rng, F20.shape), crandn(rng, F02.shape)
    G = two_form_from_pure(a, b, g)
    A, _, B = curvature_parts(G, g)
    assert np.allclose(A, a) and np.allclose(B, b)
    assert np.allclose(lambda_contract(omega(g), g), 2)


def test_curvature_overflow():
    g = TorusGeometry(1, 4)
    U = trivial_links(g)
    U[0, 0, 0] = -1.0
    with pytest.raises(CurvatureOverflowError):
        plaquette_angles(U, g)


def test_laplacian_spectrum_and_d0(rng):
    g = TorusGeometry(2, 6, ((1.0, 2.0), (1.5, 1.0)))
    f = rng.normal(size=g.shape)
    assert np.allclose(laplacian(f, g), -d0_adjoint(d0(f, g), g))
    lam = laplacian_eigenvalues(g)
    fh = np.fft.ifftn(-np.fft.fftn(f) * lam).real
    assert np.allclose(laplacian(f, g), fh)
    m = (1, 0, 2, 5)
    x = g.coordinates()
    mode = np.exp(2j * np.pi * sum(m[a] * x[a] / g.periods[a] for a in range(4)))
    assert np.allclose(laplacian(mode, g), laplacian_symbol(g, m) * mode)
    dz = dbar(mode[None], None, 0, g)
    for j in range(2):
        assert np.allclose(dz[j], dbar_symbol(g, m, j) * mode)


def test_shift_convention():
    g = TorusGeometry(1, 4)
    f = np.arange(16.0).reshape(4, 4)
    assert shift(f, g, 0)[0, 0] == f[1, 0]
    assert shift(f, g, 1, -1)[0, 0] == f[0, 3]


def test_holonomy_is_flat():
    g = TorusGeometry(2, 6)
    U = constant_curvature_links(g, (0, 0), holonomy=[0.3, 1.0, -2.0, 0.5])
    assert np.max(np.abs(plaquette_angles(U, g))) < 1e-13
    with pytest.raises(ValueError):
        constant_curvature_links(g, (0, 0), holonomy=[1.0])
    with pytest.raises(ValueError):
        constant_curvature_links(g, (0,))
