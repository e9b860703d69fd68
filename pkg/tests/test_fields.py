import numpy as np
import pytest

from sympmono.fields import (
    Configuration,
    bound_report,
    connection_deviation,
    coulomb_project,
    degree_identity,
    energy_identity,
    gauge_act,
    is_reducible,
    random_configuration,
    rescale,
    residual_general,
    residual_kahler,
    zero_configuration,
)
from sympmono.lattice import (
    GeometryMismatchError,
    TorusGeometry,
    constant_curvature_links,
    d0_adjoint,
    random_gauge,
)
from sympmono.vortex import constant_vortex


def test_zero_configuration_is_a_flat_solution():
    g = TorusGeometry(3, 4)
    cfg = zero_configuration(g, holonomy=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    R = residual_general(cfg, 2.0)
    assert R.sup() < 1e-13
    assert residual_kahler(cfg).is_solution()
    assert is_reducible(cfg).reducible


def test_twisted_zero_configuration_has_curvature_residual():
    g = TorusGeometry(1, 8)
    R = residual_general(zero_configuration(g, (1,)))
    # xi = L^2 so i Lambda F = 2 pi * 2
    assert np.allclose(R.r4, 4 * np.pi)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gauge_equivariance(n, rng):
    g = TorusGeometry(n, 4 if n == 3 else 6)
    cfg = random_configuration(g, rng, (1,) * n, amplitude=0.7)
    R = residual_general(cfg, 1.5)
    for _ in range(3):
        gf = random_gauge(g, rng)
        Rg = residual_general(gauge_act(gf, cfg), 1.5)
        assert np.allclose(Rg.r1, gf * R.r1, atol=1e-12)
        assert np.allclose(Rg.r2, gf * R.r2, atol=1e-12)
        assert np.allclose(Rg.r3, R.r3, atol=1e-12)
        assert np.allclose(Rg.r4, R.r4, atol=1e-12)


def test_kahler_residual_vanishes_iff_general_on_beta_zero(rng):
    g = TorusGeometry(3, 4)
    vort, _ = constant_vortex(g, (-1, -1, -1), s=1.0)
    assert residual_general(vort).norm() < 1e-10
    assert residual_kahler(vort).max_norm() < 1e-10
    cfg = random_configuration(g, rng, (0, 0, 0), amplitude=0.3)
    K = residual_kahler(cfg).fields
    R = residual_general(cfg)
    assert np.allclose(K["curvature"], R.r4)


def test_rescale_bijection():
    g = TorusGeometry(3, 4)
    for s in (0.25, 4.0):
        cfg, _ = constant_vortex(g, (-1, -1, -1), s=s)
        assert residual_general(cfg, s).norm() < 1e-9
        assert residual_general(rescale(cfg, s), 1.0).norm() < 1e-9
        assert residual_general(rescale(cfg, s), s).norm() > 1e-3
    with pytest.raises(ValueError):
        rescale(cfg, 0.0)


def test_energy_identity_and_degree_identity():
    g = TorusGeometry(3, 4)
    cfg, _ = constant_vortex(g, (-2, -1, -1), s=1.5)
    assert energy_identity(cfg) < 1e-20
    d = degree_identity(cfg, 1.5)
    assert d.gap < 1e-8 and d.lhs < 0
    with pytest.raises(ValueError):
        energy_identity(zero_configuration(TorusGeometry(1, 4)))


def test_energy_identity_positive_off_solutions(rng):
    g = TorusGeometry(3, 4)
    cfg = random_configuration(g, rng, (0, 0, 0), amplitude=0.3)
    assert energy_identity(cfg) > 0


def test_coulomb_projection(rng):
    g = TorusGeometry(2, 6)
    ref = constant_curvature_links(g, (1, 0))
    cfg = zero_configuration(g, (1, 0)).replace(alpha=np.ones(g.form_shape(0), complex))
    cfg = gauge_act(random_gauge(g, rng, amplitude=0.3, smooth=True), cfg)
    out = coulomb_project(cfg, ref)
    div = d0_adjoint(connection_deviation(out.links, ref, g), g)
    assert np.max(np.abs(div)) < 1e-10
    R0, R1 = residual_general(cfg), residual_general(out)
    assert abs(R0.norm() - R1.norm()) < 1e-10


def test_bound_report_and_reducibility(rng):
    g = TorusGeometry(3, 4)
    cfg, _ = constant_vortex(g, (-1, -1, -1), s=2.0)
    b = bound_report(cfg, 2.0)
    # s/8 coupling: a constant vortex sits at twice the -4 F_c / s reference
    assert b["sup_alpha"] ** 2 == pytest.approx(2 * b["alpha_sq_reference"], rel=1e-10)
    assert not is_reducible(cfg).reducible
    assert is_reducible(cfg.replace(alpha=1e-12 * cfg.alpha)).reducible


def test_configuration_validation():
    g = TorusGeometry(2, 4)
    c = zero_configuration(g)
    with pytest.raises(GeometryMismatchError):
        Configuration(g, c.links[:2], c.alpha, c.beta, c.u)
    with pytest.raises(GeometryMismatchError):
        c.replace(alpha=np.zeros((2,) + g.shape))
    assert c.xi_twists == (0, 0) and c.n == 2
