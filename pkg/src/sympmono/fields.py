"""Configurations ``(A, u, alpha, beta)``, residuals and gauge symmetry.

The connection ``A`` on ``L`` is a link field ``U_L``. The connection on the
characteristic bundle ``xi`` is ``A' = A_c + 2A``, realised on links as
``W = U_c * U_L**2``. On a flat torus the canonical connection ``A_c`` is
trivial; any background twist supplied through ``canonical_twists`` is a
synthetic stand-in for a curved canonical bundle.

Residual conventions
--------------------
``r1 = dbar_A alpha + dbar_A^* beta``              (0,1)-form in L
``r2 = dbar_A beta + alpha u / 2``                 (0,3)-form in L
``r3 = F^{0,2}_{A'} + dbar^* u - conj(alpha) beta / 4``   (0,2)-form
``r4 = i Lambda F_{A'} - (s/8)(|u|^2 + |beta|^2 - |alpha|^2)``   real
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from math import factorial
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse.linalg as spla

from .lattice import (
    TorusGeometry,
    constant_curvature_links,
    curvature,
    curvature_parts,
    dbar,
    dbar_adjoint,
    d0_adjoint,
    degree_from_curvature,
    gauge_transform_links,
    lambda_contract,
    laplacian,
    poisson_preconditioner,
    random_gauge,
    read_field,
    write_field,
)
from .lattice.geometry import GeometryMismatchError

SOLVER_TOL = 1e-10
IDENTITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Configuration:
    """A lattice configuration ``(A, u, alpha, beta)``.

    Parameters
    ----------
    geometry : TorusGeometry
    links : ndarray, shape (2n, *grid)
        Connection ``A`` on ``L`` as link variables.
    alpha : ndarray, shape (1, *grid)
    beta : ndarray, shape (C(n, 2), *grid)
    u : ndarray, shape (C(n, 3), *grid)
        Empty component axis when ``n < 3``.
    twists : tuple of int
        Chern class of ``L`` per complex plane.
    canonical_links : ndarray or None
        Background ``A_c``; ``None`` means the flat trivial connection.
    canonical_twists : tuple of int
    """

    geometry: TorusGeometry
    links: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    twists: tuple = ()
    canonical_links: np.ndarray | None = field(default=None, repr=False)
    canonical_twists: tuple = ()

    def __post_init__(self):
        g = self.geometry
        n = g.complex_dim
        if not self.twists:
            object.__setattr__(self, "twists", (0,) * n)
        if not self.canonical_twists:
            object.__setattr__(self, "canonical_twists", (0,) * n)
        if self.links.shape != (g.real_dim,) + g.shape:
            raise GeometryMismatchError(f"links shape {self.links.shape}")
        g.check_form(self.alpha, 0, "alpha")
        g.check_form(self.beta, 2, "beta")
        g.check_form(self.u, 3, "u")
        if self.canonical_links is not None and self.canonical_links.shape != self.links.shape:
            raise GeometryMismatchError("canonical links shape mismatch")

    @property
    def n(self) -> int:
        return self.geometry.complex_dim

    @property
    def xi_twists(self) -> tuple:
        return tuple(c + 2 * k for c, k in zip(self.canonical_twists, self.twists))

    def xi_links(self) -> np.ndarray:
        W = self.links ** 2
        return W if self.canonical_links is None else self.canonical_links * W

    def replace(self, **kw) -> "Configuration":
        return replace(self, **kw)

    def field_norm2(self) -> float:
        g = self.geometry
        return sum(g.norm(f) ** 2 for f in (self.alpha, self.beta, self.u))

    def allclose(self, other: "Configuration", atol: float) -> bool:
        return all(np.max(np.abs(a - b), initial=0.0) <= atol for a, b in
                   ((self.links, other.links), (self.alpha, other.alpha),
                    (self.beta, other.beta), (self.u, other.u)))


def zero_configuration(geom: TorusGeometry, twists=None, canonical_twists=None,
                       holonomy=None) -> Configuration:
    """Reducible configuration with constant-curvature connections."""
    n = geom.complex_dim
    twists = tuple(twists) if twists is not None else (0,) * n
    ctw = tuple(canonical_twists) if canonical_twists is not None else (0,) * n
    links = constant_curvature_links(geom, twists, holonomy)
    can = None if not any(ctw) else constant_curvature_links(geom, ctw)
    return Configuration(geom, links, geom.zeros_form(0), geom.zeros_form(2),
                         geom.zeros_form(3), twists, can, ctw)


def random_configuration(geom: TorusGeometry, rng: np.random.Generator, twists=None,
                         amplitude: float = 1.0, link_noise: float = 0.1,
                         canonical_twists=None, link_modes: int | None = None) -> Configuration:
    """Random fields on a constant-curvature bundle with perturbed links.

    ``link_noise`` is the RMS link angle. With ``link_modes`` set, the link
    perturbation keeps only Fourier modes with ``|m_a| <= link_modes`` on
    every axis; ``link_modes=1`` avoids the lattice doubler momenta, whose
    curvature the equations do not see.
    """
    cfg = zero_configuration(geom, twists, canonical_twists)

    def cnoise(shape):
        return amplitude * (rng.normal(size=shape) + 1j * rng.normal(size=shape))

    eta = rng.normal(size=cfg.links.shape)
    if link_modes is not None:
        axes = tuple(range(1, geom.real_dim + 1))
        m = np.fft.fftfreq(geom.grid_points, 1.0 / geom.grid_points)
        keep = np.abs(m) <= link_modes
        mask = np.ones(geom.shape, dtype=bool)
        for a in range(geom.real_dim):
            mask &= keep.reshape((-1,) + (1,) * (geom.real_dim - 1 - a))
        eta = np.fft.ifftn(np.fft.fftn(eta, axes=axes) * mask, axes=axes).real
        eta /= max(float(np.sqrt(np.mean(eta ** 2))), 1e-300)
    eta = link_noise * eta
    return cfg.replace(links=cfg.links * np.exp(1j * eta),
                       alpha=cnoise(cfg.alpha.shape), beta=cnoise(cfg.beta.shape),
                       u=cnoise(cfg.u.shape))


# --- residuals ------------------------------------------------------------

@dataclass
class Residual:
    """The four equation residuals on a common geometry."""

    geometry: TorusGeometry
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r4: np.ndarray

    def components(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "r3": self.r3, "r4": self.r4}

    def component_norms(self) -> dict:
        return {k: self.geometry.norm(v) for k, v in self.components().items()}

    def norm(self) -> float:
        return float(np.sqrt(sum(v ** 2 for v in self.component_norms().values())))

    def sup(self) -> float:
        return max((float(np.max(np.abs(v), initial=0.0)) for v in self.components().values()))


def _abs2(f: np.ndarray) -> np.ndarray:
    # pointwise squared norm summed over the component axis
    return np.sum(np.abs(f) ** 2, axis=0)


def xi_curvature(cfg: Configuration) -> np.ndarray:
    return curvature(cfg.xi_links(), cfg.geometry)


def residual_general(cfg: Configuration, s: float = 1.0) -> Residual:
    """Residuals of the monopole equations with quadratic coupling ``s``."""
    g = cfg.geometry
    n = g.complex_dim
    U = cfg.links
    r1 = dbar(cfg.alpha, U, 0, g)
    if n >= 2:
        r1 = r1 + dbar_adjoint(cfg.beta, U, 2, g)
    r2 = g.zeros_form(3)
    if n == 3:
        r2 = dbar(cfg.beta, U, 2, g) + 0.5 * cfg.alpha * cfg.u
    F = xi_curvature(cfg)
    if n >= 2:
        _, _, F02 = curvature_parts(F, g)
        r3 = F02 - 0.25 * np.conj(cfg.alpha) * cfg.beta
        if n == 3:
            r3 = r3 + dbar_adjoint(cfg.u, None, 3, g)
    else:
        r3 = g.zeros_form(2)
    ilf = (1j * lambda_contract(F, g)).real
    r4 = ilf - s / 8.0 * (_abs2(cfg.u) + _abs2(cfg.beta) - _abs2(cfg.alpha))
    return Residual(g, r1, r2, r3, r4)


KAHLER_NAMES = ("dbar_alpha", "dbar_beta", "dbar_adj_beta", "alpha_u",
                "F02", "dbar_adj_u", "alphabar_beta", "curvature")


@dataclass
class KahlerResidual:
    """Component fields of the Kähler-reduced system and their L2 norms."""

    geometry: TorusGeometry
    fields: dict

    def norms(self) -> dict:
        return {k: self.geometry.norm(v) for k, v in self.fields.items()}

    def max_norm(self) -> float:
        return max(self.norms().values())

    def is_solution(self, tol: float = SOLVER_TOL) -> bool:
        return self.max_norm() <= tol


def residual_kahler(cfg: Configuration, s: float = 1.0) -> KahlerResidual:
    """Separate holomorphicity conditions plus the real curvature equation."""
    g = cfg.geometry
    n = g.complex_dim
    U = cfg.links
    zero3, zero2, zero1 = g.zeros_form(3), g.zeros_form(2), g.zeros_form(1)
    F = xi_curvature(cfg)
    F02 = curvature_parts(F, g)[2] if n >= 2 else zero2
    ilf = (1j * lambda_contract(F, g)).real
    f = {
        "dbar_alpha": dbar(cfg.alpha, U, 0, g),
        "dbar_beta": dbar(cfg.beta, U, 2, g) if n == 3 else zero3,
        "dbar_adj_beta": dbar_adjoint(cfg.beta, U, 2, g) if n >= 2 else zero1,
        "alpha_u": cfg.alpha * cfg.u,
        "F02": F02,
        "dbar_adj_u": dbar_adjoint(cfg.u, None, 3, g) if n == 3 else zero2,
        "alphabar_beta": np.conj(cfg.alpha) * cfg.beta,
        "curvature": ilf - s / 8.0 * (_abs2(cfg.u) + _abs2(cfg.beta) - _abs2(cfg.alpha)),
    }
    return KahlerResidual(g, f)


def energy_identity(cfg: Configuration) -> float:
    """Five-term energy that vanishes on solutions of the monopole equations.

    ``|dbar_A beta|^2 + 2|dbar^* u|^2 + |(|alpha||u|)|^2/4
    + |dbar_A^* beta|^2/2 + |(|alpha||beta|)|^2/8``.
    """
    g = cfg.geometry
    n = g.complex_dim
    if n != 3:
        raise ValueError("energy identity is defined for complex dimension 3")
    U = cfg.links
    a = np.sqrt(_abs2(cfg.alpha))
    terms = (
        g.norm(dbar(cfg.beta, U, 2, g)) ** 2,
        2 * g.norm(dbar_adjoint(cfg.u, None, 3, g)) ** 2,
        0.25 * g.norm(a * np.sqrt(_abs2(cfg.u))) ** 2,
        0.5 * g.norm(dbar_adjoint(cfg.beta, U, 2, g)) ** 2,
        0.125 * g.norm(a * np.sqrt(_abs2(cfg.beta))) ** 2,
    )
    return float(sum(terms))


class DegreeIdentity(NamedTuple):
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def degree_identity(cfg: Configuration, s: float = 1.0) -> DegreeIdentity:
    """Compare ``deg xi`` from curvature with the integral of the field terms.

    With ``Lambda omega = n`` and ``deg xi = (i/2pi) int F ^ omega^{n-1}``, the
    curvature equation gives
    ``deg xi = (n-1)! s / (16 pi) int (|u|^2 + |beta|^2 - |alpha|^2)``.
    """
    g = cfg.geometry
    lhs = degree_from_curvature(cfg.xi_links(), g)
    dens = _abs2(cfg.u) + _abs2(cfg.beta) - _abs2(cfg.alpha)
    rhs = factorial(g.complex_dim - 1) * s / (16 * np.pi) * float(g.integrate(dens))
    return DegreeIdentity(float(lhs), float(rhs))


# --- gauge group ----------------------------------------------------------

def gauge_act(gfield: np.ndarray, cfg: Configuration) -> Configuration:
    """Act by ``g``: ``A -> A - g^{-1} dg``, ``alpha -> g alpha``, ``beta -> g beta``."""
    g = np.asarray(gfield)
    cfg.geometry.check_scalar(g, "g")
    return cfg.replace(links=gauge_transform_links(cfg.links, g, cfg.geometry),
                       alpha=g * cfg.alpha, beta=g * cfg.beta)


class Reducibility(NamedTuple):
    reducible: bool
    stabilizer_dim: int


def is_reducible(cfg: Configuration, tol: float | None = None) -> Reducibility:
    """``(alpha, beta)`` vanish to ``tol`` (default ``1e-8 max(1, sup|u|)``)."""
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(cfg.u), initial=0.0)))
    sup = max(float(np.max(np.abs(cfg.alpha), initial=0.0)),
              float(np.max(np.abs(cfg.beta), initial=0.0)))
    red = sup <= tol
    return Reducibility(red, 1 if red else 0)


# --- gauge fixing ---------------------------------------------------------

class CoulombNonConvergenceError(RuntimeError):
    def __init__(self, message, iterations):
        super().__init__(message)
        self.iterations = iterations


def connection_deviation(links: np.ndarray, reference: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Real 1-form ``a`` with ``U = U_0 exp(i h a)``, principal branch."""
    h = geom.spacing.reshape((-1,) + (1,) * geom.real_dim)
    return np.angle(links * np.conj(reference)) / h


def _poisson_solve(rhs: np.ndarray, geom: TorusGeometry, tol: float, maxiter: int):
    """Solve ``d^* d chi = rhs`` for mean-zero ``chi`` by FFT-preconditioned CG."""
    shape = geom.shape
    M = geom.num_sites
    count = [0]

    def mv(x):
        x = x.reshape(shape)
        return (-laplacian(x, geom)).ravel() + x.mean()  # rank-one fix of constants

    def cb(_):
        count[0] += 1

    A = spla.LinearOperator((M, M), matvec=mv, dtype=float)
    P = poisson_preconditioner(geom)
    b = (rhs - rhs.mean()).ravel()
    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb, M=P)
    if info != 0:
        raise CoulombNonConvergenceError(
            f"Poisson solve did not converge after {count[0]} iterations", count[0]
        )
    return x.reshape(shape), count[0]


def coulomb_project(cfg: Configuration, reference: np.ndarray | None = None,
                    tol: float = 1e-10, max_outer: int = 20, maxiter: int = 5000) -> Configuration:
    """Gauge-equivalent configuration with ``d^*(A - A_0) = 0``.

    Parameters
    ----------
    reference : ndarray, optional
        Links of ``A_0``; defaults to the constant-curvature connection with
        the configuration's twists.

    Raises
    ------
    CoulombNonConvergenceError
        If the Poisson solve or the outer branch iteration fails.
    """
    g = cfg.geometry
    if reference is None:
        reference = constant_curvature_links(g, cfg.twists)
    total_iter = 0
    for _ in range(max_outer):
        a = connection_deviation(cfg.links, reference, g)
        div = d0_adjoint(a, g)
        if np.max(np.abs(div)) <= tol:
            return cfg
        chi, it = _poisson_solve(div, g, tol=1e-14, maxiter=maxiter)
        total_iter += it
        cfg = gauge_act(np.exp(1j * chi), cfg)
    a = connection_deviation(cfg.links, reference, g)
    if np.max(np.abs(d0_adjoint(a, g))) <= tol:
        return cfg
    raise CoulombNonConvergenceError(
        f"Coulomb projection not converged after {max_outer} outer steps "
        f"({total_iter} CG iterations)", total_iter
    )


# --- rescaling and bounds -------------------------------------------------

def rescale(cfg: Configuration, s: float) -> Configuration:
    """Map ``(A, u, alpha, beta) -> (A, sqrt(s) u, sqrt(s) alpha, sqrt(s) beta)``."""
    if not s > 0:
        raise ValueError(f"rescale needs s > 0, got {s}")
    r = np.sqrt(s)
    return cfg.replace(u=r * cfg.u, alpha=r * cfg.alpha, beta=r * cfg.beta)


def bound_report(cfg: Configuration, s: float = 1.0) -> dict:
    """Field suprema next to the pointwise bound ``|alpha|^2 <= -4 F_c / s``.

    ``F_c = i Lambda F_{A_c}`` is the canonical curvature; it vanishes on a
    flat torus, where the reference bound collapses to zero. With the
    ``s/8`` curvature coupling used here a covariantly constant solution sits
    at ``|alpha|^2 = -8 F_c / s``, twice the reference value.
    """
    g = cfg.geometry
    F_L = curvature(cfg.links, g)
    F_xi = xi_curvature(cfg)
    if cfg.canonical_links is None:
        fc = np.zeros(g.shape)
    else:
        fc = (1j * lambda_contract(curvature(cfg.canonical_links, g), g)).real
    ref = float(np.max(-4.0 * fc)) / s
    return {
        "sup_alpha": float(np.max(np.abs(cfg.alpha), initial=0.0)),
        "sup_beta": float(np.max(np.sqrt(_abs2(cfg.beta)), initial=0.0)),
        "sup_u": float(np.max(np.sqrt(_abs2(cfg.u)), initial=0.0)),
        "sup_F": float(np.max(np.abs(F_L), initial=0.0)),
        "sup_F_xi": float(np.max(np.abs(F_xi), initial=0.0)),
        "alpha_sq_reference": max(ref, 0.0),
        "s": float(s),
    }


# --- serialization --------------------------------------------------------

def save_configuration(cfg: Configuration, directory, s: float = 1.0, reference: str = "constant-curvature",
                       double: bool = True) -> Path:
    """Write fields in the lattice format plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = cfg.geometry
    write_field(d / "links.smf", cfg.links, g, None, cfg.twists, double)
    write_field(d / "alpha.smf", cfg.alpha, g, 0, cfg.twists, double)
    write_field(d / "beta.smf", cfg.beta, g, 2, cfg.twists, double)
    write_field(d / "u.smf", cfg.u, g, 3, (), double)
    if cfg.canonical_links is not None:
        write_field(d / "canonical.smf", cfg.canonical_links, g, None, cfg.canonical_twists, double)
    manifest = {
        "geometry": g.to_dict(),
        "twists": list(cfg.twists),
        "canonical_twists": list(cfg.canonical_twists),
        "xi_twists": list(cfg.xi_twists),
        "s": s,
        "gauge_reference": reference,
        "files": sorted(p.name for p in d.glob("*.smf")),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_configuration(directory) -> tuple[Configuration, dict]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    g = TorusGeometry.from_dict(manifest["geometry"])
    links, _, _ = read_field(d / "links.smf")
    alpha, _, _ = read_field(d / "alpha.smf")
    beta, _, _ = read_field(d / "beta.smf")
    u, _, _ = read_field(d / "u.smf")
    can = read_field(d / "canonical.smf")[0] if (d / "canonical.smf").exists() else None
    cfg = Configuration(g, links, alpha, beta, u, tuple(manifest["twists"]),
                        can, tuple(manifest["canonical_twists"]))
    return cfg, manifest
