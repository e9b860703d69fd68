"""Linearised deformation complex, Dolbeault cohomology and flat moduli.

At a configuration ``c`` the complex is

    gauge directions --L1--> field directions --L2--> equation directions

with ``L1`` the infinitesimal gauge action and ``L2`` the Jacobian of
:func:`~sympmono.fields.residual_general`. Field directions are
:class:`~sympmono._tangent.Tangent` objects: ``eta`` is the change of the
link angles of ``L``, so the connection on ``xi = L^2`` moves by ``2 eta``.
Gauge equivariance of the residual gives ``L2 L1 chi = (-i chi r1,
-i chi r2, 0, 0)``, hence the defect is controlled by the residual.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from . import spectral
from ._tangent import (
    Tangent,
    gauge_direction,
    gauge_direction_adjoint,
    pack_residual,
    residual_jvp,
    residual_vjp,
    unpack_residual,
)
from .fields import Configuration, residual_general
from .lattice import LineBundle, TorusGeometry, constant_curvature_links, dbar, dbar_adjoint

__all__ = [
    "DeformationComplex", "assemble_L1", "assemble_L2", "complex_defect",
    "defect_closed_form", "defect_response", "closed_form_L2", "CohomologyDims",
    "dolbeault_cohomology_dims", "flat_moduli_dimension", "harmonic_one_form_count",
]


@dataclass
class DeformationComplex:
    """Matrix-free ``L1`` and ``L2`` at a base configuration."""

    base: Configuration
    s: float = 1.0

    def L1(self, chi: np.ndarray) -> Tangent:
        """Gauge direction of the real function ``chi`` (``g = exp(-i t chi)``)."""
        return gauge_direction(self.base, np.asarray(chi, dtype=float))

    def L1_adjoint(self, v: Tangent) -> np.ndarray:
        return gauge_direction_adjoint(self.base, v)

    def L2(self, v: Tangent):
        """Linearised residual ``(dr1, dr2, dr3, dr4)``."""
        return residual_jvp(self.base, v, self.s)

    def L2_adjoint(self, cot) -> Tangent:
        return residual_vjp(self.base, cot, self.s)

    def operators(self) -> tuple[LinearOperator, LinearOperator]:
        """``(L1, L2)`` as real ``LinearOperator`` objects on packed vectors."""
        return assemble_L1(self.base), assemble_L2(self.base, self.s)


def assemble_L1(cfg: Configuration) -> LinearOperator:
    """``chi -> (h d chi, 0, -i chi alpha, -i chi beta)`` on packed real vectors.

    ``beta`` vanishes at the configurations where the closed form applies;
    carrying the term keeps ``L1`` the exact gauge derivative.
    """
    g = cfg.geometry
    n_out = Tangent.zeros(cfg).pack().size

    def mv(x):
        return gauge_direction(cfg, np.asarray(x).reshape(g.shape)).pack()

    def rmv(y):
        return gauge_direction_adjoint(cfg, Tangent.unpack(np.asarray(y).ravel(), cfg)).ravel()

    return LinearOperator((n_out, g.num_sites), matvec=mv, rmatvec=rmv, dtype=float)


def assemble_L2(cfg: Configuration, s: float = 1.0) -> LinearOperator:
    """Jacobian of ``residual_general`` at ``cfg`` on packed real vectors."""
    g = cfg.geometry
    n_in = Tangent.zeros(cfg).pack().size
    n_out = pack_residual(residual_general(cfg, s).components().values()).size

    def mv(x):
        return pack_residual(residual_jvp(cfg, Tangent.unpack(np.asarray(x).ravel(), cfg), s))

    def rmv(y):
        return residual_vjp(cfg, unpack_residual(np.asarray(y).ravel(), g), s).pack()

    return LinearOperator((n_out, n_in), matvec=mv, rmatvec=rmv, dtype=float)


def closed_form_L2(cfg: Configuration, v: Tangent, s: float = 1.0):
    """Closed-form ``L2`` at configurations ``(A, 0, (alpha, 0))``.

    Assembled term by term from the specialised formulas: ``dbar a +
    dbar^* b + (link variation) alpha``, ``dbar b + alpha upsilon / 2``,
    ``F02-variation + dbar^* upsilon - conj(alpha) b / 4`` and
    ``Lambda``-variation ``+ (s/4) Re(conj(alpha) a)``. The last
    coefficient is the exact derivative of the ``s/8`` coupling, twice the
    ``1/8`` sometimes quoted for the ``omega`` component.

    Raises
    ------
    ValueError
        If ``u`` or ``beta`` is nonzero.
    """
    from ._tangent import _dbar_link_jvp, _f02_coeffs, _plaquette_jvp

    g = cfg.geometry
    n = g.complex_dim
    if np.any(cfg.u != 0) or np.any(cfg.beta != 0):
        raise ValueError("closed_form_L2 needs u = 0 and beta = 0")
    U, al = cfg.links, cfg.alpha
    dr1 = dbar(v.dalpha, U, 0, g) + _dbar_link_jvp(al, U, v.eta, 0, g)
    if n >= 2:
        dr1 = dr1 + dbar_adjoint(v.dbeta, U, 2, g)
    dr2 = g.zeros_form(3)
    if n == 3:
        dr2 = dbar(v.dbeta, U, 2, g) + 0.5 * al * v.du
    dth = _plaquette_jvp(2 * v.eta, g)
    h = g.spacing
    dr3 = g.zeros_form(2)
    if n >= 2:
        for p, coeffs in enumerate(_f02_coeffs(g)):
            dr3[p] = sum(k * dth[a, b] for (a, b), k in coeffs.items())
        dr3 = dr3 - 0.25 * np.conj(al) * v.dbeta
        if n == 3:
            dr3 = dr3 + dbar_adjoint(v.du, None, 3, g)
    dlam = -sum(dth[2 * j, 2 * j + 1] / (h[2 * j] * h[2 * j + 1]) for j in range(n))
    dr4 = dlam + s / 4.0 * np.sum(np.real(np.conj(al) * v.dalpha), axis=0)
    return dr1, dr2, dr3, dr4


def _residual_norm(comps, geom: TorusGeometry) -> float:
    return float(np.sqrt(sum(geom.norm(c) ** 2 for c in comps)))


def complex_defect(cfg: Configuration, s: float = 1.0, n_samples: int = 8,
                   rng: np.random.Generator | None = None) -> float:
    """``max ||L2 L1 chi||`` over random unit-norm real ``chi``.

    Constants are always among the samples, since they probe the ``alpha``
    term alone.
    """
    g = cfg.geometry
    rng = np.random.default_rng(0) if rng is None else rng
    cx = DeformationComplex(cfg, s)
    samples = [np.ones(g.shape)] + [rng.normal(size=g.shape) for _ in range(n_samples)]
    worst = 0.0
    for chi in samples:
        chi = chi / g.norm(chi)
        worst = max(worst, _residual_norm(cx.L2(cx.L1(chi)), g))
    return worst


def defect_closed_form(cfg: Configuration, chi: np.ndarray, s: float = 1.0):
    """``L2 L1 chi`` predicted by gauge equivariance."""
    R = residual_general(cfg, s)
    return -1j * chi * R.r1, -1j * chi * R.r2, np.zeros_like(R.r3), np.zeros_like(R.r4)


def defect_response(cfg: Configuration, deltas, s: float = 1.0,
                    rng: np.random.Generator | None = None) -> dict:
    """Defect against residual along ``alpha -> alpha + delta * noise``.

    Returns residual norms, defects and the fitted log-log slope.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    g = cfg.geometry
    noise = rng.normal(size=cfg.alpha.shape) + 1j * rng.normal(size=cfg.alpha.shape)
    noise /= g.norm(noise)
    res, dfs = [], []
    for d in deltas:
        c = cfg.replace(alpha=cfg.alpha + d * noise)
        res.append(residual_general(c, s).norm())
        dfs.append(complex_defect(c, s, n_samples=2, rng=np.random.default_rng(2)))
    slope = float(np.polyfit(np.log(deltas), np.log(dfs), 1)[0])
    return {"deltas": [float(d) for d in deltas], "residual": res, "defect": dfs, "slope": slope}


# --- Dolbeault cohomology -----------------------------------------------------

@dataclass
class CohomologyDims:
    """Harmonic ``(0,q)`` counts with their gap ratios."""

    dims: tuple
    gap_ratios: list = field(default_factory=list)

    @property
    def euler(self) -> int:
        return int(sum((-1) ** q * d for q, d in enumerate(self.dims)))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "euler": self.euler,
                "gap_ratios": [spectral._finite(r) for r in self.gap_ratios]}


def _planes(bundle: LineBundle):
    geom = bundle.geometry
    if geom.complex_dim == 1:
        return None
    if not np.allclose(bundle.links, constant_curvature_links(geom, bundle.twists), atol=1e-14):
        return None
    out = []
    for j, k in enumerate(bundle.twists):
        g2 = TorusGeometry(1, geom.grid_points, geom.periods[2 * j: 2 * j + 2])
        out.append(LineBundle(g2, (k,), constant_curvature_links(g2, (k,))))
    return out


def _hodge_report(bundle: LineBundle, q: int, tol_gap: float) -> spectral.KernelReport:
    geom, links = bundle.geometry, bundle.links
    if spectral.is_translation_invariant(links, geom):
        return spectral.fourier_hodge_kernel(geom, links, q, tol_gap)
    A = spectral.hodge_block(geom, links, q)
    S = spectral.roughness_matrix(geom, links, comb(geom.complex_dim, q))
    return spectral.kernel_count(A, S, tol_gap)


def dolbeault_cohomology_dims(bundle: LineBundle | None = None, geometry: TorusGeometry | None = None,
                              tol_gap: float = spectral.DEFAULT_GAP) -> CohomologyDims:
    """Kernel dimensions of the twisted Hodge Laplacians on ``(0,q)``-forms.

    Translation-invariant links use the exact momentum-space symbol. The
    standard constant-curvature bundles on ``T^4`` and ``T^6`` factor over
    the coordinate planes, so their counts follow from the ``T^2`` counts by
    the Künneth formula (the lattice complex is a tensor product). Other
    bundles go through the sparse Hodge block.

    Raises
    ------
    spectral.IndeterminateGapError
        When some bidegree has no singular-value gap.
    """
    if bundle is None:
        if geometry is None:
            raise ValueError("need a bundle or a geometry")
        from .lattice import trivial_bundle

        bundle = trivial_bundle(geometry)
    geom = bundle.geometry
    n = geom.complex_dim
    if not spectral.is_translation_invariant(bundle.links, geom):
        planes = _planes(bundle)
        if planes is not None:
            per = [dolbeault_cohomology_dims(b, tol_gap=tol_gap) for b in planes]
            dims = [0] * (n + 1)
            for qs in itertools.product(range(2), repeat=n):
                dims[sum(qs)] += int(np.prod([p.dims[q] for p, q in zip(per, qs)]))
            ratios = [min(r for p in per for r in p.gap_ratios)] * (n + 1)
            return CohomologyDims(tuple(dims), ratios)
    reps = [_hodge_report(bundle, q, tol_gap) for q in range(n + 1)]
    return CohomologyDims(tuple(r.count for r in reps), [r.gap_ratio for r in reps])


# --- flat moduli ------------------------------------------------------------------

def harmonic_one_form_count(geometry: TorusGeometry, tol_gap: float = spectral.DEFAULT_GAP) -> int:
    """Dimension of ``ker d_1 ∩ ker d_0^*`` from the sparse exterior derivatives."""
    d0m, d1m = spectral.exterior_d_matrices(geometry)
    A = sp.vstack([d1m, d0m.T], format="csr").astype(complex)
    S = spectral.roughness_matrix(geometry, None, geometry.real_dim)
    return spectral.kernel_count(A, S, tol_gap).count


def flat_moduli_dimension(geometry: TorusGeometry, method: str = "fourier",
                          tol_gap: float = spectral.DEFAULT_GAP) -> int:
    """Real dimension of the flat-connection moduli, i.e. harmonic 1-forms.

    ``method`` is ``"fourier"`` (exact symbol) or ``"sparse"`` (gap rule on
    the assembled ``d`` and ``d^*``; feasible for small grids only).
    """
    if method == "fourier":
        return spectral.fourier_one_form_kernel(geometry, tol_gap).count
    if method == "sparse":
        return harmonic_one_form_count(geometry, tol_gap)
    raise ValueError(f"unknown method {method!r}")

