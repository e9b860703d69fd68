"""Kazdan-Warner solver, vortex reconstruction and holomorphic section counts.

The reduced curvature equation is solved in the monotone form

    M(u) = kappa d^*d u + (s/8) w exp(2u) - g = 0,

with Jacobian ``kappa d^*d + (s/4) w exp(2u)``, symmetric positive definite
whenever ``w`` is positive somewhere. ``kappa = 1`` is the plain scalar
equation; reconstructing a monopole configuration uses ``kappa = 2`` because
the characteristic connection is ``A_c + 2A``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import spectral
from .fields import Configuration, is_reducible
from .lattice import (
    LineBundle,
    TorusGeometry,
    constant_curvature_links,
    curvature,
    dbar,
    lambda_contract,
    laplacian,
    laplacian_eigenvalues,
)
from .lattice.bundle import shift

log = logging.getLogger(__name__)


class NoSolutionError(ValueError):
    """The data violate the integral obstruction, so no solution exists."""


class NonConvergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or {}


class PreconditionError(ValueError):
    """Input section is not holomorphic to the requested tolerance."""


@dataclass
class KWProblem:
    """Data of ``kappa d^*d u + (s/8) w e^{2u} = g`` on a torus grid."""

    w: np.ndarray
    g: np.ndarray
    s: float
    geometry: TorusGeometry
    kappa: float = 1.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.g = np.broadcast_to(np.asarray(self.g, dtype=float), self.geometry.shape).copy()
        self.geometry.check_scalar(self.w, "w")
        if np.any(self.w < 0):
            raise ValueError("w must be nonnegative")
        if not self.s > 0 or not self.kappa > 0:
            raise ValueError("s and kappa must be positive")

    def operator(self, u: np.ndarray) -> np.ndarray:
        return (-self.kappa * laplacian(u, self.geometry)
                + self.s / 8.0 * self.w * np.exp(2 * u) - self.g)

    def constant_guess(self) -> np.ndarray:
        wbar, gbar = self.w.mean(), self.g.mean()
        if wbar > 0 and gbar > 0:
            val = 0.5 * np.log(8 * gbar / (self.s * wbar))
        else:
            val = 0.0
        return np.full(self.geometry.shape, val)


@dataclass
class KWSolution:
    u: np.ndarray
    iterations: int
    final_residual: float
    history: list = field(default_factory=list)
    min_ritz: float = np.inf
    cg_iterations: int = 0

    def trace(self) -> dict:
        return {"iterations": self.iterations, "final_residual": self.final_residual,
                "residual_history": list(map(float, self.history)),
                "min_ritz": float(self.min_ritz), "cg_iterations": self.cg_iterations}


def _pcg(apply_A, b, precond, rtol, maxiter):
    """Preconditioned CG that also returns the smallest Lanczos Ritz value."""
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    bnorm = np.linalg.norm(b)
    alphas, betas = [], []
    if bnorm == 0:
        return x, 0, np.inf
    k = 0
    for k in range(1, maxiter + 1):
        Ap = apply_A(p)
        pAp = float(np.vdot(p, Ap).real)
        if pAp <= 0:
            # loss of positivity; Ritz value nonpositive by definition
            return x, k, pAp
        a = rz / pAp
        x += a * p
        r -= a * Ap
        alphas.append(a)
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        z = precond(r)
        rz_new = float(np.vdot(r, z).real)
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    al = np.array(alphas)
    be = np.array(betas[: len(al) - 1])
    diag = 1.0 / al
    diag[1:] += be / al[:-1]
    off = np.sqrt(be) / al[:-1]
    ritz = eigh_tridiagonal(diag, off, eigvals_only=True) if len(al) > 1 else diag
    return x, k, float(np.min(ritz))


def solve_kazdan_warner(p: KWProblem, tol: float = 1e-10, u0: np.ndarray | None = None,
                        max_newton: int = 60, max_halvings: int = 30,
                        cg_maxiter: int = 2000) -> KWSolution:
    """Damped Newton with Armijo backtracking on ``|M(u)|^2 / 2``.

    Raises
    ------
    NoSolutionError
        If ``w == 0`` everywhere, or ``int g <= 0`` while ``w`` is positive
        somewhere (integrating the equation forces ``int g > 0``).
    NonConvergenceError
        If the line search or the iteration budget fails.
    """
    geom = p.geometry
    gint = float(geom.integrate(p.g))
    if not np.any(p.w > 0):
        raise NoSolutionError(
            "no-solution: w vanishes identically"
            + (f" and int g = {gint:.3g} != 0" if abs(gint) > 0 else "; solution not unique")
        )
    if gint <= 0:
        raise NoSolutionError(f"no-solution: int g = {gint:.3g} must be positive")
    u = p.constant_guess() if u0 is None else np.array(u0, dtype=float)
    lam = laplacian_eigenvalues(geom) * p.kappa
    M = p.operator(u)
    res = float(np.max(np.abs(M)))
    history = [res]
    min_ritz = np.inf
    cg_total = 0
    for it in range(1, max_newton + 1):
        coef = p.s / 4.0 * p.w * np.exp(2 * u)
        shift_c = max(float(coef.mean()), 1e-300)
        lam_p = lam + shift_c

        def apply_J(v, coef=coef):
            v = v.reshape(geom.shape)
            return (-p.kappa * laplacian(v, geom) + coef * v).ravel()

        def precond(r, lam_p=lam_p):
            return np.fft.ifftn(np.fft.fftn(r.reshape(geom.shape)) / lam_p).real.ravel()

        rtol = max(1e-14, min(1e-4, 0.01 * res))
        step, k, ritz = _pcg(apply_J, -M.ravel(), precond, rtol, cg_maxiter)
        cg_total += k
        min_ritz = min(min_ritz, ritz)
        if ritz <= 0:
            raise NonConvergenceError("Newton Jacobian lost positive definiteness",
                                      {"iteration": it, "ritz": ritz, "history": history})
        step = step.reshape(geom.shape)
        phi = 0.5 * float(np.sum(M ** 2))
        t = 1.0
        for _ in range(max_halvings + 1):
            u_try = u + t * step
            with np.errstate(over="ignore"):
                M_try = p.operator(u_try)
            phi_try = 0.5 * float(np.sum(M_try ** 2))
            if np.isfinite(phi_try) and (phi_try <= (1 - 2e-4 * t) * phi
                                         or float(np.max(np.abs(M_try))) <= tol):
                break
            t *= 0.5
        else:
            if res <= tol:
                return KWSolution(u, it - 1, res, history, min_ritz, cg_total)
            raise NonConvergenceError(
                f"line search failed at Newton step {it} (residual {res:.3g})",
                {"iteration": it, "history": history},
            )
        u, M = u_try, M_try
        res = float(np.max(np.abs(M)))
        history.append(res)
        log.debug("newton %d: residual %.3e step %.3g cg %d", it, res, t, k)
        if res <= tol:
            return KWSolution(u, it, res, history, min_ritz, cg_total)
    raise NonConvergenceError(
        f"Newton did not reach tol {tol:g} in {max_newton} steps (residual {res:.3g})",
        {"history": history},
    )


def constant_solution(w: float, g: float, s: float) -> float:
    """Closed form ``u = ln(8 g / (s w)) / 2`` for constant data."""
    return 0.5 * np.log(8.0 * g / (s * w))


def manufactured_problem(geom: TorusGeometry, s: float = 1.0, kappa: float = 1.0,
                         rng: np.random.Generator | None = None, modes: int = 3,
                         amplitude: float = 0.3) -> tuple[KWProblem, np.ndarray]:
    """Problem with a known smooth solution ``u*``; returns ``(problem, u*)``.

    ``u*`` is a few random low Fourier modes, ``w = 1 + sin`` terms kept
    positive, and ``g`` is the discrete operator applied to ``u*``, so
    ``u*`` solves the lattice equation exactly.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    coords = geom.coordinates()

    def wave():
        m = rng.integers(-2, 3, size=geom.real_dim)
        return np.cos(sum(2 * np.pi * m[a] * coords[a] / geom.periods[a]
                          for a in range(geom.real_dim)) + rng.uniform(0, 2 * np.pi))

    u_star = amplitude * sum(rng.normal() * wave() for _ in range(modes))
    w = 1.0 + 0.5 * wave()
    g = -kappa * laplacian(u_star, geom) + s / 8.0 * w * np.exp(2 * u_star)
    return KWProblem(w, g, s, geom, kappa), u_star


# --- reconstruction ---------------------------------------------------------

def conformal_links(u: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Link phases realising ``A -> A + i(dbar u - d u)`` with ``i Lambda dF = d^*d u``.

    In plane ``j``: ``theta_x = -h_x (u - u(x - e_y)) / h_y`` and
    ``theta_y = h_y (u - u(x - e_x)) / h_x`` (backward differences).
    """
    h = geom.spacing
    ang = np.zeros((geom.real_dim,) + geom.shape)
    for j in range(geom.complex_dim):
        ax, ay = 2 * j, 2 * j + 1
        ang[ax] = -h[ax] * (u - shift(u, geom, ay, -1)) / h[ay]
        ang[ay] = h[ay] * (u - shift(u, geom, ax, -1)) / h[ax]
    return np.exp(1j * ang)


def vortex_problem(alpha_k: np.ndarray, links_k: np.ndarray, geom: TorusGeometry, s: float = 1.0,
                   canonical_links: np.ndarray | None = None) -> KWProblem:
    """Kazdan-Warner data for a holomorphic pair ``(A_k, alpha_k)``.

    ``w = |alpha_k|^2`` and ``g = -i Lambda F_{A_c + 2 A_k}``; ``kappa = 2``.
    """
    W = links_k ** 2 if canonical_links is None else canonical_links * links_k ** 2
    ilf = (1j * lambda_contract(curvature(W, geom), geom)).real
    w = np.sum(np.abs(alpha_k) ** 2, axis=0)
    return KWProblem(w, -ilf, s, geom, kappa=2.0)


def reconstruct_solution(sol: KWSolution, alpha_k: np.ndarray, links_k: np.ndarray,
                         geom: TorusGeometry, twists=None, canonical_links=None,
                         canonical_twists=None, holo_tol: float = 1e-8) -> Configuration:
    """Monopole configuration ``(A_k + conformal(u), 0, e^u alpha_k, 0)``.

    Raises
    ------
    PreconditionError
        If ``|dbar_{A_k} alpha_k| > holo_tol (1 + |alpha_k|)``.
    """
    defect = geom.norm(dbar(alpha_k, links_k, 0, geom))
    if defect > holo_tol * (1 + geom.norm(alpha_k)):
        raise PreconditionError(f"alpha not holomorphic: |dbar alpha| = {defect:.3g}")
    u = sol.u
    links = links_k * conformal_links(u, geom)
    return Configuration(geom, links, np.exp(u) * alpha_k, geom.zeros_form(2), geom.zeros_form(3),
                         tuple(twists) if twists is not None else (),
                         canonical_links, tuple(canonical_twists) if canonical_twists else ())


def constant_vortex(geom: TorusGeometry, canonical_twists, s: float = 1.0,
                    tol: float = 1e-12) -> tuple[Configuration, KWSolution]:
    """Exact vortex on a flat trivial ``L`` over a negatively twisted background.

    The background twist makes ``g = -i Lambda F_{A_c}`` a positive constant,
    so ``alpha_k = 1`` is holomorphic and ``u`` is the closed-form constant.
    """
    can = constant_curvature_links(geom, canonical_twists)
    links_k = constant_curvature_links(geom, (0,) * geom.complex_dim)
    alpha_k = np.ones(geom.form_shape(0), dtype=complex)
    p = vortex_problem(alpha_k, links_k, geom, s, can)
    sol = solve_kazdan_warner(p, tol=tol)
    cfg = reconstruct_solution(sol, alpha_k, links_k, geom, None, can, canonical_twists)
    return cfg, sol


# --- section counting -------------------------------------------------------

def section_spectrum(bundle: LineBundle, tol_gap: float = spectral.DEFAULT_GAP) -> spectral.KernelReport:
    """Gap-rule kernel report of ``dbar_A`` on sections of ``bundle``."""
    geom = bundle.geometry
    links = bundle.links
    if spectral.is_translation_invariant(links, geom):
        return spectral.fourier_hodge_kernel(geom, links, 0, tol_gap)
    if geom.complex_dim > 1 and geom.num_sites > spectral.DENSE_LIMIT:
        product = _product_planes(bundle)
        if product is not None:
            reps = [section_spectrum(b, tol_gap) for b in product]
            count = int(np.prod([r.count for r in reps]))
            raw = int(np.prod([r.raw_count for r in reps]))
            return spectral.KernelReport(count, raw, min(r.gap_ratio for r in reps),
                                         reps[0].singular_values, [], reps[0].floor)
    A = spectral.dbar_matrix(geom, links, 0)
    S = spectral.roughness_matrix(geom, links, 1)
    return spectral.kernel_count(A, S, tol_gap)


def _product_planes(bundle: LineBundle):
    """Split a standard constant-curvature bundle into per-plane ``T^2`` bundles."""
    geom = bundle.geometry
    if not np.allclose(bundle.links, constant_curvature_links(geom, bundle.twists), atol=1e-14):
        return None
    out = []
    for j, k in enumerate(bundle.twists):
        g2 = TorusGeometry(1, geom.grid_points, geom.periods[2 * j: 2 * j + 2])
        out.append(LineBundle(g2, (k,), constant_curvature_links(g2, (k,))))
    return out


def count_holomorphic_sections(bundle: LineBundle, tol_gap: float = spectral.DEFAULT_GAP) -> int:
    """``dim H^0`` of the bundle, counted by the spectral gap of ``dbar_A``.

    Raises
    ------
    spectral.IndeterminateGapError
        If no singular-value ratio reaches ``tol_gap``.
    """
    return section_spectrum(bundle, tol_gap).count


def holomorphic_basis(bundle: LineBundle, tol_gap: float = spectral.DEFAULT_GAP) -> np.ndarray:
    """Orthonormal smooth kernel vectors of ``dbar_A`` (dense path, ``T^2`` scale)."""
    geom = bundle.geometry
    A = spectral.dbar_matrix(geom, bundle.links, 0).toarray()
    _, sv, Vh = np.linalg.svd(A)
    order = np.argsort(sv)
    V = Vh.conj().T[:, order]
    floor = 64 * np.finfo(float).eps * max(sv.max(), 1.0)
    m, _ = spectral.gap_index(sv[order], floor, tol_gap)
    K = V[:, :m]
    S = spectral.roughness_matrix(geom, bundle.links, 1)
    G = K.conj().T @ (S @ K)
    r, Q = np.linalg.eigh(0.5 * (G + G.conj().T))
    K = K @ Q[:, r < spectral.ROUGHNESS_CUTOFF]
    return (K.T / np.sqrt(geom.cell_volume)).reshape((-1, 1) + geom.shape)


# --- trichotomy experiment --------------------------------------------------

def trichotomy_experiment(twists, s: float = 1.0, runs: int = 10, grid: int = 6,
                          seed: int = 0, budget: float | None = None, tol: float = 1e-8,
                          max_iter: int = 60, amplitude: float = 0.3,
                          link_noise: float = 0.05, flat_tol: float = 1e-6,
                          plateau_window: int = 3, plateau_rtol: float = 1e-2) -> dict:
    """Flow runs from random starts; records residual floors and reducibility.

    ``twists`` are the twists of ``L``; the torus is flat so ``xi = L^2``.
    Starts are white-noise fields of RMS ``amplitude`` on the
    constant-curvature bundle, with smooth link noise (``|m| <= 1``) so no
    curvature sits in the lattice doubler modes the equations cannot see.

    Near the reducible locus the residual is quadratic in the constant field
    modes, so fields shrink like ``sqrt(residual)``: a run counts as
    reducible when ``sup |(alpha, beta)| <= 10 sqrt(tol)`` and as flat when
    ``sup |F_xi| <= flat_tol``.

    A run that cannot converge stops on a plateau: less than ``plateau_rtol``
    relative decrease over ``plateau_window`` full Gauss–Newton steps.
    """
    import time

    from .flow import solve_monopole
    from .fields import random_configuration
    from .linearize import flat_moduli_dimension

    twists = tuple(int(k) for k in twists)
    geom = TorusGeometry(len(twists), grid)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=runs)
    red_tol = 10.0 * np.sqrt(tol)
    rows = []
    t0 = time.perf_counter()
    partial = False
    for i, sd in enumerate(seeds):
        if budget is not None and time.perf_counter() - t0 > budget:
            partial = True
            break
        r = np.random.default_rng(int(sd))
        cfg0 = random_configuration(geom, r, twists, amplitude=amplitude,
                                    link_noise=link_noise, link_modes=1)
        res = solve_monopole(cfg0, s=s, tol=tol, max_iter=max_iter,
                             stall_window=plateau_window, stall_rtol=plateau_rtol)
        c = res.configuration
        sup_F = float(np.max(np.abs(curvature(c.xi_links(), geom))))
        rows.append({
            "run": i,
            "seed": int(sd),
            "residual": res.residual,
            "iterations": res.iterations,
            "converged": res.converged,
            "stalled": res.stalled,
            "seconds": res.seconds,
            "reducible": bool(is_reducible(c, tol=red_tol).reducible),
            "flat": sup_F <= flat_tol,
            "sup_alpha": float(np.max(np.abs(c.alpha))),
            "sup_beta": float(np.max(np.abs(c.beta), initial=0.0)),
            "sup_u": float(np.max(np.abs(c.u), initial=0.0)),
            "sup_F": sup_F,
        })
        log.info("trichotomy %s run %d: residual %.3e in %.1f s", twists, i,
                 res.residual, res.seconds)
    resid = [r["residual"] for r in rows]
    xi = tuple(2 * k for k in twists)
    report = {
        "twists_L": list(twists),
        "twists_xi": list(xi),
        "grid": grid,
        "s": s,
        "tol": tol,
        "runs": rows,
        "partial": partial,
        "seconds": time.perf_counter() - t0,
        "min_residual": float(min(resid)) if resid else None,
        "max_residual": float(max(resid)) if resid else None,
    }
    if not any(xi):
        report["flat_moduli_dimension"] = flat_moduli_dimension(geom)
        report["all_reducible_flat"] = bool(rows) and all(
            r["reducible"] and r["flat"] and r["residual"] <= tol for r in rows)
    elif resid:
        mean = float(np.mean(resid))
        report["floor"] = mean
        # largest relative deviation of a run from the mean floor
        report["floor_spread"] = float(np.max(np.abs(np.asarray(resid) - mean)) / mean)
    return report
