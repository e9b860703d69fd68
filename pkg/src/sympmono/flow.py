"""Damped Gauss–Newton flow for the monopole equations.

The equations give no constructive algorithm for general solutions, so the
driver decreases ``E = |R|^2 / 2`` by Levenberg–Marquardt steps. The step
solves ``(J^T J + gamma C^T C + mu) dx = -J^T R`` by preconditioned CG with
the exact tangent maps of :mod:`._tangent`; ``C`` is the Coulomb operator
``eta -> d^*(eta / h)``, which fixes the gauge freedom of the step only.

Plain gradient descent is hopeless here: at reducible solutions the
constant modes of ``alpha``, ``beta`` and ``u`` feel only a quartic energy,
so first-order methods decay algebraically. A Gauss–Newton step halves such
modes, giving linear convergence. The preconditioner is the momentum-space
normal operator at the flat trivial point plus mean-field mass terms.

Steps that would push a ``xi`` plaquette angle beyond an admissibility
bound are shortened, so that field gradients cannot tear the connection
into lattice monopoles (plaquettes wrapping through ``-1``).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from ._tangent import Tangent, _f02_coeffs, apply_tangent, residual_jvp, residual_vjp
from .fields import Configuration, CoulombNonConvergenceError, coulomb_project, residual_general
from .lattice import TorusGeometry, d0, d0_adjoint, plaquette_angles
from .lattice.bundle import shift
from .lattice.operators import CurvatureOverflowError
from .spectral import _difference_symbols

log = logging.getLogger(__name__)

ADMISSIBLE_ANGLE = 1.0


@dataclass
class FlowResult:
    configuration: Configuration
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    cg_iterations: int = 0
    stalled: bool = False
    seconds: float = 0.0

    def trace(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations,
                "converged": self.converged, "stalled": self.stalled,
                "cg_iterations": self.cg_iterations,
                "history": [float(h) for h in self.history]}


def energy_and_gradient(cfg: Configuration, s: float = 1.0):
    """``E`` (cell-weighted) and its gradient as a :class:`Tangent`."""
    R = residual_general(cfg, s)
    vol = cfg.geometry.cell_volume
    comps = (R.r1, R.r2, R.r3, R.r4)
    E = 0.5 * vol * sum(float(np.vdot(c, c).real) for c in comps)
    grad = residual_vjp(cfg, comps, s)
    for name in ("eta", "du", "dalpha", "dbeta"):
        setattr(grad, name, vol * getattr(grad, name))
    return E, grad, R


# --- preconditioner -------------------------------------------------------------

def _link_stencil(eta: np.ndarray, geom: TorusGeometry, gamma: float) -> np.ndarray:
    """Linear link part of ``(r3, r4)`` and the weighted Coulomb term (complex input)."""
    n, d = geom.complex_dim, geom.real_dim
    h = geom.spacing
    dth = np.zeros((d, d) + geom.shape, dtype=complex)
    for a in range(d):
        for b in range(a + 1, d):
            v = 2 * (eta[a] + shift(eta[b], geom, a) - shift(eta[a], geom, b) - eta[b])
            dth[a, b], dth[b, a] = v, -v
    rows = [sum(k * dth[a, b] for (a, b), k in coeffs.items()) for coeffs in _f02_coeffs(geom)]
    rows.append(-sum(dth[2 * j, 2 * j + 1] / (h[2 * j] * h[2 * j + 1]) for j in range(n)))
    hh = h.reshape((-1,) + (1,) * d)
    rows.append(np.sqrt(gamma) * d0_adjoint(eta / hh, geom))
    return np.stack(rows)


def link_normal_symbol(geom: TorusGeometry, gamma: float = 1.0) -> np.ndarray:
    """Momentum-space symbol ``(..., 2n, 2n)`` of the link normal operator.

    Computed from impulse responses of the stencil; the real pairing
    symmetrises ``K(k)^H K(k)`` with the transpose at ``-k``.
    """
    d = geom.real_dim
    axes = tuple(range(1, d + 1))
    cols = []
    for b in range(d):
        e = np.zeros((d,) + geom.shape)
        e[(b,) + (0,) * d] = 1.0
        cols.append(sfft.fftn(_link_stencil(e, geom, gamma), axes=axes))
    K = np.moveaxis(np.stack(cols, axis=1), (0, 1), (-2, -1))
    neg = tuple((-np.arange(geom.grid_points)) % geom.grid_points for _ in range(d))
    Km = K[np.ix_(*neg)]
    KH = np.conj(np.swapaxes(K, -1, -2))
    KmH = np.conj(np.swapaxes(Km, -1, -2))
    return 0.5 * (KH @ K + np.swapaxes(KmH @ Km, -1, -2))


class NormalPreconditioner:
    """Block-diagonal FFT approximation of ``(J^T J + gamma C^T C + mu)^{-1}``."""

    def __init__(self, geom: TorusGeometry, gamma: float = 1.0):
        self.geometry = geom
        d = geom.real_dim
        half = geom.grid_points // 2 + 1
        ev, V = np.linalg.eigh(link_normal_symbol(geom, gamma)[..., :half, :, :])
        # kernel of the link symbol: holonomies and lattice doublers; the
        # preconditioner annihilates it so Krylov iterates never move there
        self.null = ev < 1e-9 * float(ev.max())
        self.null_count = int(self.null.sum())
        self._ev, self._V = ev, V
        zs = _difference_symbols(geom, None)
        self._field = np.broadcast_to(
            sum(np.abs(0.5 * (zs[2 * j] + 1j * zs[2 * j + 1])) ** 2
                for j in range(geom.complex_dim)), geom.shape)
        self._axes = tuple(range(1, d + 1))

    def _apply_blocks(self, B, eta):
        ax = self._axes
        eh = sfft.rfftn(eta, axes=ax)
        y = np.empty_like(eh)
        for i in range(eh.shape[0]):
            y[i] = B[i, 0] * eh[0]
            for j in range(1, eh.shape[0]):
                y[i] += B[i, j] * eh[j]
        return sfft.irfftn(y, s=self.geometry.shape, axes=ax)

    def update(self, cfg: Configuration, mu: float, s: float = 1.0):
        """Refresh the mass terms for the current configuration."""
        g = self.geometry
        d = g.real_dim
        a2 = float(np.mean(np.abs(cfg.alpha) ** 2))
        b2 = float(np.mean(np.sum(np.abs(cfg.beta) ** 2, axis=0))) if cfg.beta.size else 0.0
        u2 = float(np.mean(np.abs(cfg.u) ** 2)) if cfg.u.size else 0.0
        q = s * s / 16.0
        m_eta = (a2 + b2) / (4.0 * float(np.mean(g.spacing ** 2)))
        w = np.where(self.null, 0.0, 1.0 / (self._ev + mu + m_eta))
        Ni = (self._V * w[..., None, :]) @ np.conj(np.swapaxes(self._V, -1, -2))
        self._link_inv = np.ascontiguousarray(np.moveaxis(Ni, (-2, -1), (0, 1)))
        fs = self._field + mu
        self._w_alpha = 1.0 / (fs + q * a2 + b2 / 16.0 + u2 / 4.0 + 1e-300)
        self._w_beta = 1.0 / (fs + q * b2 + a2 / 16.0 + 1e-300)
        self._w_u = 1.0 / (fs + q * u2 + a2 / 4.0 + 1e-300)
        self._cfg = cfg

    def __call__(self, x: np.ndarray) -> np.ndarray:
        cfg = self._cfg
        t = Tangent.unpack(x, cfg)
        ax = self._axes
        eta = self._apply_blocks(self._link_inv, t.eta)

        def filt(z, w):
            return sfft.ifftn(sfft.fftn(z, axes=ax) * w, axes=ax) if z.size else z

        return Tangent(eta, filt(t.du, self._w_u), filt(t.dalpha, self._w_alpha),
                       filt(t.dbeta, self._w_beta)).pack()


# --- driver ---------------------------------------------------------------------------

def _rnorm2(comps) -> float:
    return sum(float(np.vdot(c, c).real) for c in comps)


def _max_plaquette(cfg: Configuration) -> float:
    return float(np.max(np.abs(plaquette_angles(cfg.xi_links(), cfg.geometry, check=False))))


def solve_monopole(cfg0: Configuration, s: float = 1.0, tol: float = 1e-8,
                   max_iter: int = 60, inner_maxiter: int = 10, inner_rtol: float = 0.1,
                   gauge_weight: float = 1.0, mu0: float = 1.0,
                   max_link_step: float = 0.25, admissible: float = ADMISSIBLE_ANGLE,
                   stall_window: int = 4, stall_rtol: float = 1e-3,
                   budget: float | None = None, reference=None) -> FlowResult:
    """Decrease the residual norm from ``cfg0`` by damped Gauss–Newton steps.

    Parameters
    ----------
    tol : float
        Target for the L2 residual norm.
    max_iter : int
        Outer (Gauss–Newton) iterations.
    inner_maxiter, inner_rtol : int, float
        CG limits for each step.
    gauge_weight : float
        Step penalty on ``d^* eta``. Link steps are also kept off the kernel
        of the linear curvature map (holonomies and lattice doublers, which
        carry curvature invisible to ``F02`` and ``Lambda F``); coupled to
        near-null field modes those make the Gauss–Newton model bilinear.
    max_link_step : float
        Largest allowed change of a link angle per step.
    admissible : float
        Bound on ``xi`` plaquette angles; the initial maximum is always allowed.
    stall_window, stall_rtol
        Stop when the residual fell by less than ``stall_rtol`` (relative)
        over the last ``stall_window`` iterations, all of them full
        Gauss–Newton steps. Slow damped progress near a saddle is not a stall.
    budget : float, optional
        Wall-clock seconds after which the run stops.
    reference : ndarray, optional
        Links of the Coulomb-gauge reference connection; defaults to the
        constant-curvature connection of the configuration's twists.

    Returns
    -------
    FlowResult
        ``converged`` is true when the residual norm reached ``tol``.
    """
    t0 = time.perf_counter()
    g = cfg0.geometry
    vol = g.cell_volume
    hh = g.spacing.reshape((-1,) + (1,) * g.real_dim)
    P = NormalPreconditioner(g, gauge_weight)
    cfg = cfg0
    R = residual_general(cfg, s)
    r = (R.r1, R.r2, R.r3, R.r4)
    f = _rnorm2(r)
    bound = max(admissible, _max_plaquette(cfg))
    mu = mu0
    history = [float(np.sqrt(f * vol))]
    cg_total = 0
    stalled = False
    full_run = 0
    it = 0
    for it in range(1, max_iter + 1):
        if history[-1] <= tol:
            it -= 1
            break
        if budget is not None and time.perf_counter() - t0 > budget:
            it -= 1
            break
        P.update(cfg, mu, s)
        b = -residual_vjp(cfg, r, s).pack()

        def normal(x, cfg=cfg, mu=mu):
            v = Tangent.unpack(x, cfg)
            y = residual_vjp(cfg, residual_jvp(cfg, v, s), s)
            y.eta += gauge_weight * d0(d0_adjoint(v.eta / hh, g), g) / hh
            return y.pack() + mu * x

        count = [0]
        A = spla.LinearOperator((b.size, b.size), matvec=normal, dtype=float)
        M = spla.LinearOperator((b.size, b.size), matvec=P, dtype=float)
        x, _ = spla.cg(A, b, rtol=inner_rtol, maxiter=inner_maxiter, M=M,
                       callback=lambda _: count.__setitem__(0, count[0] + 1))
        cg_total += count[0]
        step = Tangent.unpack(x, cfg)
        t = min(1.0, max_link_step / max(float(np.max(np.abs(step.eta))), 1e-300))
        full = t == 1.0
        accepted = None
        while t >= 1e-4:
            trial = _try(cfg, step, t, s, bound)
            if trial is not None and trial[1] < f:
                accepted = trial
                break
            t *= 0.5
        if accepted is not None and full and t == 1.0:
            ext = _try(cfg, step, 2.0, s, bound)
            if ext is not None and ext[1] < accepted[1]:
                accepted = ext
        if accepted is None or not (full and t == 1.0):
            full_run = 0
        if accepted is None:
            mu *= 10.0
            history.append(history[-1])
        else:
            cfg, f, r = accepted
            cfg, r = _regauge(cfg, r, s, reference)
            history.append(float(np.sqrt(f * vol)))
            if full and t == 1.0:
                full_run += 1
                mu = max(mu / 10.0, 1e-12)
            elif t < 0.5:
                # the model overshot by about 1/t; damp it by that much
                mu /= t
        log.debug("it %d res %.3e mu %.1e t %.3g cg %d", it, history[-1], mu, t, count[0])
        if mu > 1e14:
            stalled = True
            break
        # only undamped steps count: damped ones show a saddle or a hard region
        if full_run >= stall_window and history[-1] > tol:
            old = history[-1 - stall_window]
            if old - history[-1] <= stall_rtol * old:
                stalled = True
                break
    res = history[-1]
    log.debug("flow: %d iterations, %d CG, residual %.3e", it, cg_total, res)
    return FlowResult(cfg, res, it, res <= tol, history, cg_total, stalled,
                      time.perf_counter() - t0)


def _regauge(cfg, r, s, reference):
    # the FFT preconditioner is built for small connection deviations
    try:
        new = coulomb_project(cfg, reference, tol=1e-6, max_outer=5)
    except CoulombNonConvergenceError:
        return cfg, r
    R = residual_general(new, s)
    return new, (R.r1, R.r2, R.r3, R.r4)


def _try(cfg, step, t, s, bound):
    trial = apply_tangent(cfg, step, t)
    try:
        if _max_plaquette(trial) > bound:
            return None
        R = residual_general(trial, s)
    except CurvatureOverflowError:
        return None
    r = (R.r1, R.r2, R.r3, R.r4)
    return trial, _rnorm2(r), r
