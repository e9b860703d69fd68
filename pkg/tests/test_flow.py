import numpy as np
import pytest

from sympmono._tangent import Tangent, apply_tangent
from sympmono.fields import random_configuration, residual_general
from sympmono.flow import (
    NormalPreconditioner,
    energy_and_gradient,
    link_normal_symbol,
    solve_monopole,
)
from sympmono.lattice import TorusGeometry


@pytest.mark.parametrize("n,N", [(1, 8), (2, 4)])
def test_link_symbol_hermitian_psd(n, N):
    S = link_normal_symbol(TorusGeometry(n, N))
    assert np.allclose(S, np.conj(np.swapaxes(S, -1, -2)), atol=1e-12)
    assert np.linalg.eigvalsh(S).min() > -1e-10


def test_null_modes():
    # on T^2 only the holonomies are null
    assert NormalPreconditioner(TorusGeometry(1, 8)).null_count == 2
    # from T^4 on, lattice doublers add null momenta
    assert NormalPreconditioner(TorusGeometry(2, 6)).null_count > 4


def test_preconditioner_is_symmetric(rng):
    g = TorusGeometry(2, 4)
    cfg = random_configuration(g, rng, (0, 0), amplitude=0.3)
    P = NormalPreconditioner(g)
    P.update(cfg, 0.5)
    n = Tangent.zeros(cfg).pack().size
    x, y = rng.normal(size=n), rng.normal(size=n)
    assert abs(y @ P(x) - x @ P(y)) < 1e-10 * max(abs(y @ P(x)), 1.0)
    assert x @ P(x) >= 0


def test_gradient_matches_finite_difference(rng):
    g = TorusGeometry(2, 4)
    cfg = random_configuration(g, rng, (1, 0), amplitude=0.4)
    E, grad, _ = energy_and_gradient(cfg, 1.3)
    v = Tangent.unpack(rng.normal(size=grad.pack().size), cfg)
    eps = 1e-6
    Ep = energy_and_gradient(apply_tangent(cfg, v, eps), 1.3)[0]
    Em = energy_and_gradient(apply_tangent(cfg, v, -eps), 1.3)[0]
    assert (Ep - Em) / (2 * eps) == pytest.approx(grad.dot(v), rel=1e-6)


@pytest.mark.parametrize("n,N", [(1, 8), (2, 6)])
def test_small_untwisted_solve(n, N, rng):
    g = TorusGeometry(n, N)
    cfg = random_configuration(g, rng, (0,) * n, amplitude=0.3, link_noise=0.05, link_modes=1)
    res = solve_monopole(cfg, tol=1e-8)
    assert res.converged and res.residual <= 1e-8
    assert residual_general(res.configuration).norm() == pytest.approx(res.residual, rel=1e-6)
    tr = res.trace()
    assert set(tr) >= {"residual", "iterations", "converged", "stalled", "history"}
    assert tr["history"][0] >= tr["history"][-1]


def test_budget_stops_run(rng):
    g = TorusGeometry(2, 4)
    cfg = random_configuration(g, rng, (0, 0), amplitude=0.3)
    res = solve_monopole(cfg, tol=1e-14, budget=0.0)
    assert not res.converged and res.iterations <= 1
