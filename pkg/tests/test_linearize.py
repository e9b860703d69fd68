import numpy as np
import pytest

from sympmono._tangent import Tangent, apply_tangent, pack_residual
from sympmono.fields import random_configuration, residual_general, zero_configuration
from sympmono.lattice import TorusGeometry, constant_curvature_bundle
from sympmono.linearize import (
    DeformationComplex,
    assemble_L1,
    assemble_L2,
    complex_defect,
    defect_closed_form,
    defect_response,
    dolbeault_cohomology_dims,
    flat_moduli_dimension,
    closed_form_L2,
)
from sympmono.vortex import constant_vortex


def _random_tangent(cfg, rng):
    v = Tangent.zeros(cfg)
    return Tangent.unpack(rng.normal(size=v.pack().size), cfg)


def _packed(comps):
    return pack_residual(list(comps))


@pytest.fixture
def cfg6(rng):
    g = TorusGeometry(3, 4)
    return random_configuration(g, rng, (1, -1, 0), amplitude=0.5)


def test_L2_matches_finite_differences(cfg6, rng):
    s = 1.7
    cx = DeformationComplex(cfg6, s)
    eps = 1e-5
    for _ in range(5):
        v = _random_tangent(cfg6, rng)
        plus = residual_general(apply_tangent(cfg6, v, eps), s).components().values()
        minus = residual_general(apply_tangent(cfg6, v, -eps), s).components().values()
        fd = (_packed(plus) - _packed(minus)) / (2 * eps)
        jv = _packed(cx.L2(v))
        assert np.linalg.norm(fd - jv) <= 1e-6 * max(np.linalg.norm(jv), 1.0)


def test_L2_is_linear_and_zero_on_zero(cfg6, rng):
    cx = DeformationComplex(cfg6)
    assert np.linalg.norm(_packed(cx.L2(Tangent.zeros(cfg6)))) == 0.0
    a, b = _random_tangent(cfg6, rng), _random_tangent(cfg6, rng)
    ab = Tangent.unpack(2 * a.pack() - 3 * b.pack(), cfg6)
    lhs = _packed(cx.L2(ab))
    rhs = 2 * _packed(cx.L2(a)) - 3 * _packed(cx.L2(b))
    assert np.allclose(lhs, rhs, atol=1e-11)


def test_adjoint_pairs(cfg6, rng):
    L1, L2 = assemble_L1(cfg6), assemble_L2(cfg6, 0.8)
    for op in (L1, L2):
        x = rng.normal(size=op.shape[1])
        y = rng.normal(size=op.shape[0])
        lhs, rhs = y @ op.matvec(x), x @ op.rmatvec(y)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0) * 10


def test_L1_directions(rng):
    g = TorusGeometry(2, 4)
    cfg = zero_configuration(g).replace(alpha=np.ones(g.form_shape(0), complex))
    cx = DeformationComplex(cfg)
    v = cx.L1(np.ones(g.shape))
    assert np.all(v.eta == 0) and np.allclose(v.dalpha, -1j)
    chi = rng.normal(size=g.shape)
    assert np.allclose(cx.L1(2 * chi).pack(), 2 * cx.L1(chi).pack())


def test_pure_gauge_is_in_kernel_at_flat_solution(rng):
    g = TorusGeometry(3, 4)
    cfg = zero_configuration(g, holonomy=rng.uniform(-1, 1, 6))
    assert complex_defect(cfg, rng=rng) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_defect_matches_closed_form(n, rng):
    g = TorusGeometry(n, 4 if n == 3 else 6)
    cfg = random_configuration(g, rng, (0,) * n, amplitude=0.4)
    cx = DeformationComplex(cfg)
    chi = rng.normal(size=g.shape)
    got = _packed(cx.L2(cx.L1(chi)))
    want = _packed(defect_closed_form(cfg, chi))
    assert np.max(np.abs(got - want)) < 1e-11


def test_defect_tracks_residual():
    g = TorusGeometry(3, 4)
    cfg, _ = constant_vortex(g, (-1, -1, -1))
    assert complex_defect(cfg) < 1e-11
    rep = defect_response(cfg, [1e-4, 1e-3, 1e-2])
    assert rep["slope"] == pytest.approx(1.0, abs=0.05)


def test_closed_form_L2_agrees_with_jacobian(rng):
    g = TorusGeometry(3, 4)
    cfg, _ = constant_vortex(g, (-1, -1, -1), s=1.0)
    cfg = cfg.replace(alpha=cfg.alpha * (1 + 0.1 * rng.normal(size=g.shape)))
    for _ in range(3):
        v = _random_tangent(cfg, rng)
        got = _packed(closed_form_L2(cfg, v))
        want = _packed(DeformationComplex(cfg).L2(v))
        assert np.max(np.abs(got - want)) < 1e-11
    with pytest.raises(ValueError):
        closed_form_L2(cfg.replace(u=np.ones_like(cfg.u)), v)


@pytest.mark.parametrize("twists,dims", [((2,), (2, 0)), ((0,), (1, 1)), ((-1,), (0, 1)),
                                         ((1, 1), (1, 0, 0)), ((0, 0, 0), (1, 3, 3, 1))])
def test_dolbeault_dims(twists, dims):
    N = {1: 16, 2: 12, 3: 6}[len(twists)]
    g = TorusGeometry(len(twists), N)
    rep = dolbeault_cohomology_dims(constant_curvature_bundle(g, twists))
    assert rep.dims == dims
    assert rep.to_dict()["euler"] == rep.euler


def test_twisted_section_needs_resolution():
    # the lattice zero mode of a degree-1 bundle is only approximate on coarse grids
    coarse = dolbeault_cohomology_dims(constant_curvature_bundle(TorusGeometry(1, 8), (1,)))
    fine = dolbeault_cohomology_dims(constant_curvature_bundle(TorusGeometry(1, 12), (1,)))
    assert coarse.dims == (0, 0) and fine.dims == (1, 0)


def test_dolbeault_needs_input():
    with pytest.raises(ValueError):
        dolbeault_cohomology_dims()


@pytest.mark.parametrize("n,N", [(1, 8), (2, 4)])
def test_flat_moduli_fourier_and_sparse(n, N):
    g = TorusGeometry(n, N)
    assert flat_moduli_dimension(g) == 2 * n
    assert flat_moduli_dimension(g, method="sparse") == 2 * n
    with pytest.raises(ValueError):
        flat_moduli_dimension(g, method="bogus")
