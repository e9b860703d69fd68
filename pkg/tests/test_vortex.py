import numpy as np
import pytest

from sympmono.fields import degree_identity, residual_general
from sympmono.lattice import (
    TorusGeometry,
    constant_curvature_bundle,
    constant_curvature_links,
    random_gauge,
)
from sympmono.spectral import IndeterminateGapError
from sympmono.vortex import (
    KWProblem,
    NoSolutionError,
    PreconditionError,
    constant_solution,
    constant_vortex,
    count_holomorphic_sections,
    holomorphic_basis,
    manufactured_problem,
    reconstruct_solution,
    section_spectrum,
    solve_kazdan_warner,
    trichotomy_experiment,
    vortex_problem,
)


@pytest.mark.parametrize("w,gv,s", [(1.0, 1.0, 1.0), (2.0, 0.5, 3.0), (0.3, 7.0, 0.1)])
def test_constant_data_closed_form(w, gv, s):
    g = TorusGeometry(2, 8)
    p = KWProblem(np.full(g.shape, w), gv, s, g)
    sol = solve_kazdan_warner(p)
    assert sol.iterations == 1
    assert np.max(np.abs(sol.u - 0.5 * np.log(8 * gv / (s * w)))) < 1e-12
    assert constant_solution(w, gv, s) == pytest.approx(sol.u.flat[0], abs=1e-12)


@pytest.mark.parametrize("n,N", [(1, 32), (2, 8), (3, 4)])
def test_manufactured_solution(n, N, rng):
    g = TorusGeometry(n, N)
    p, u_star = manufactured_problem(g, s=1.3, kappa=2.0, rng=rng)
    sol = solve_kazdan_warner(p)
    assert np.max(np.abs(sol.u - u_star)) < 1e-8
    assert sol.min_ritz > 0


def test_uniqueness_from_different_starts(rng):
    g = TorusGeometry(1, 24)
    p, _ = manufactured_problem(g, rng=rng)
    a = solve_kazdan_warner(p).u
    b = solve_kazdan_warner(p, u0=rng.normal(size=g.shape)).u
    assert np.max(np.abs(a - b)) < 1e-9


def test_integral_constraint(rng):
    g = TorusGeometry(1, 24)
    p, _ = manufactured_problem(g, rng=rng)
    u = solve_kazdan_warner(p).u
    lhs = g.integrate(p.s / 8 * p.w * np.exp(2 * u))
    assert lhs == pytest.approx(g.integrate(p.g), rel=1e-10)


def test_no_solution_paths():
    g = TorusGeometry(1, 8)
    with pytest.raises(NoSolutionError, match="no-solution"):
        solve_kazdan_warner(KWProblem(np.zeros(g.shape), 1.0, 1.0, g))
    with pytest.raises(NoSolutionError):
        solve_kazdan_warner(KWProblem(np.ones(g.shape), -1.0, 1.0, g))
    with pytest.raises(NoSolutionError):
        solve_kazdan_warner(KWProblem(np.ones(g.shape), 0.0, 1.0, g))
    with pytest.raises(ValueError):
        KWProblem(-np.ones(g.shape), 1.0, 1.0, g)


def test_scaling_in_s(rng):
    # u(4s) = u(s) - ln(4) / 2 exactly, for any data
    g = TorusGeometry(1, 16)
    p, _ = manufactured_problem(g, rng=rng)
    u1 = solve_kazdan_warner(p).u
    u4 = solve_kazdan_warner(KWProblem(p.w, p.g, 4 * p.s, g, p.kappa)).u
    assert np.max(np.abs(u4 - (u1 - 0.5 * np.log(4)))) < 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
def test_section_counts(k):
    g = TorusGeometry(1, 32)
    rep = section_spectrum(constant_curvature_bundle(g, (k,)))
    assert rep.count == k and rep.gap_ratio >= 1e3


def test_section_counts_degenerate(rng):
    g = TorusGeometry(1, 16)
    b0 = constant_curvature_bundle(g, (0,))
    hol = b0.with_links(b0.links * np.exp(1j * np.array([0.3, 0.7]))[:, None, None])
    assert count_holomorphic_sections(hol) == 0
    assert count_holomorphic_sections(b0) == 1
    assert count_holomorphic_sections(constant_curvature_bundle(g, (-1,))) == 0


def test_section_count_gauge_invariant(rng):
    g = TorusGeometry(1, 16)
    b = constant_curvature_bundle(g, (2,))
    gb = b.gauge_transform(random_gauge(g, rng, amplitude=0.5, smooth=True))
    assert count_holomorphic_sections(gb) == 2


def test_indeterminate_gap():
    g = TorusGeometry(1, 8)
    with pytest.raises(IndeterminateGapError):
        section_spectrum(constant_curvature_bundle(g, (1,)), tol_gap=1e30)


def test_constant_vortex_is_exact():
    g = TorusGeometry(3, 4)
    cfg, sol = constant_vortex(g, (-1, -2, -1), s=2.0)
    assert residual_general(cfg, 2.0).norm() < 1e-10
    assert np.ptp(np.abs(cfg.alpha)) < 1e-12


def _twisted_vortex(N):
    g = TorusGeometry(1, N)
    b = constant_curvature_bundle(g, (1,))
    can = constant_curvature_links(g, (-3,))
    a = 3 * holomorphic_basis(b)[0]
    sol = solve_kazdan_warner(vortex_problem(a, b.links, g, 1.0, can))
    return reconstruct_solution(sol, a, b.links, g, (1,), can, (-3,))


def test_nonconstant_vortex_reconstruction():
    coarse, fine = _twisted_vortex(16), _twisted_vortex(32)
    for cfg in (coarse, fine):
        R = residual_general(cfg)
        assert np.max(np.abs(R.r4)) < 1e-9
        assert degree_identity(cfg).gap < 1e-8
    # the rescaled section is holomorphic only up to the grid spacing
    r_c = np.max(np.abs(residual_general(coarse).r1))
    r_f = np.max(np.abs(residual_general(fine).r1))
    assert r_f < 0.6 * r_c


def test_reconstruct_rejects_nonholomorphic(rng):
    g = TorusGeometry(1, 8)
    b = constant_curvature_bundle(g, (0,))
    a = rng.normal(size=(1,) + g.shape) + 0j
    sol = solve_kazdan_warner(KWProblem(np.ones(g.shape), 1.0, 1.0, g))
    with pytest.raises(PreconditionError):
        reconstruct_solution(sol, a, b.links, g)


def test_small_trichotomy_zero_twist():
    rep = trichotomy_experiment((0,), runs=2, grid=6, seed=3)
    assert rep["all_reducible_flat"] and not rep["partial"]
    assert len(rep["runs"]) == 2 and rep["flat_moduli_dimension"] == 2
