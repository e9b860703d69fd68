"""Exact tangent map of ``residual_general`` and its adjoint.

Directions are ``(eta, du, dalpha, dbeta)``: ``eta`` is a real link-angle
field (``U -> U exp(i eta)``) and the rest are complex field increments.
The adjoint is taken for the real pairing ``Re sum conj(a) b`` without cell
weights, so ``Re<c, J v> = <vjp(c), v>`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import dbar, dbar_adjoint
from .lattice.bundle import shift
from .lattice.geometry import dbar_terms, multi_indices
from .lattice.operators import _ix


@dataclass
class Tangent:
    """Direction in configuration space."""

    eta: np.ndarray
    du: np.ndarray
    dalpha: np.ndarray
    dbeta: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.eta.ravel(), _c2r(self.du), _c2r(self.dalpha), _c2r(self.dbeta)])

    @classmethod
    def unpack(cls, x: np.ndarray, cfg) -> "Tangent":
        shapes = [cfg.links.shape, cfg.u.shape, cfg.alpha.shape, cfg.beta.shape]
        sizes = [int(np.prod(shapes[0]))] + [2 * int(np.prod(s)) for s in shapes[1:]]
        parts = np.split(x, np.cumsum(sizes)[:-1])
        eta = parts[0].reshape(shapes[0])
        cx = [_r2c(p, s) for p, s in zip(parts[1:], shapes[1:])]
        return cls(eta, *cx)

    @classmethod
    def zeros(cls, cfg) -> "Tangent":
        return cls(np.zeros(cfg.links.shape), np.zeros_like(cfg.u), np.zeros_like(cfg.alpha),
                   np.zeros_like(cfg.beta))

    def dot(self, other: "Tangent") -> float:
        return float(np.vdot(self.pack(), other.pack()).real)


def pack_residual(comps) -> np.ndarray:
    """Real vector of ``(r1, r2, r3)`` (complex) and ``r4`` (real)."""
    r1, r2, r3, r4 = comps
    return np.concatenate([_c2r(r1), _c2r(r2), _c2r(r3), np.asarray(r4, dtype=float).ravel()])


def unpack_residual(x: np.ndarray, geom):
    shapes = [geom.form_shape(1), geom.form_shape(3), geom.form_shape(2)]
    sizes = [2 * int(np.prod(s)) for s in shapes] + [geom.num_sites]
    parts = np.split(x, np.cumsum(sizes)[:-1])
    out = [_r2c(p, s) for p, s in zip(parts[:3], shapes)]
    return (*out, parts[3].reshape(geom.shape))


def _c2r(z):
    z = np.asarray(z, dtype=complex).ravel()
    return np.concatenate([z.real, z.imag])


def _r2c(x, shape):
    m = x.size // 2
    return (x[:m] + 1j * x[m:]).reshape(shape)


# --- link variations of dbar ---------------------------------------------

def _dbar_j_coeffs(j):
    return ((2 * j, 0.5), (2 * j + 1, 0.5j))


def _dbar_link_jvp(f, U, eta, q, geom):
    """``(d/dt) dbar_{U exp(i t eta)} f`` at ``t = 0``."""
    n, d = geom.complex_dim, geom.real_dim
    out = np.zeros(f.shape[:-d - 1] + geom.form_shape(q + 1), dtype=complex)
    for t, j, sign, s in dbar_terms(n, q):
        fs = f[_ix(s, d)]
        for a, c in _dbar_j_coeffs(j):
            out[_ix(t, d)] += sign * c * 1j * eta[a] * U[a] * shift(fs, geom, a) / geom.spacing[a]
    return out


def _dbar_adj_link_jvp(f, U, eta, q, geom):
    """Variation of ``dbar^*`` on (0,q)-forms."""
    n, d = geom.complex_dim, geom.real_dim
    out = np.zeros(f.shape[:-d - 1] + geom.form_shape(q - 1), dtype=complex)
    for t, j, sign, s in dbar_terms(n, q - 1):
        ft = f[_ix(t, d)]
        for a, c in _dbar_j_coeffs(j):
            term = -1j * eta[a] * np.conj(U[a]) * ft / geom.spacing[a]
            out[_ix(s, d)] += sign * np.conj(c) * shift(term, geom, a, -1)
    return out


def _dbar_link_vjp(c, f, U, q, geom, g_eta):
    """Accumulate the link cotangent of ``Re<c, dbar-variation(f)>``."""
    n, d = geom.complex_dim, geom.real_dim
    for t, j, sign, s in dbar_terms(n, q):
        fs = f[_ix(s, d)]
        ct = c[_ix(t, d)]
        for a, k in _dbar_j_coeffs(j):
            g_eta[a] += np.real(np.conj(ct) * sign * k * 1j * U[a] * shift(fs, geom, a)) / geom.spacing[a]


def _dbar_adj_link_vjp(c, f, U, q, geom, g_eta):
    n, d = geom.complex_dim, geom.real_dim
    for t, j, sign, s in dbar_terms(n, q - 1):
        ft = f[_ix(t, d)]
        cs = c[_ix(s, d)]
        for a, k in _dbar_j_coeffs(j):
            g_eta[a] += np.real(sign * np.conj(k) * -1j * np.conj(U[a]) * ft
                                * np.conj(shift(cs, geom, a))) / geom.spacing[a]


# --- curvature variation ------------------------------------------------

def _plaquette_jvp(eta_xi, geom):
    """Linearised plaquette angles for link-angle change ``eta_xi``."""
    d = geom.real_dim
    dth = np.zeros((d, d) + geom.shape)
    for a in range(d):
        for b in range(a + 1, d):
            v = (eta_xi[a] + shift(eta_xi[b], geom, a) - shift(eta_xi[a], geom, b) - eta_xi[b])
            dth[a, b] = v
            dth[b, a] = -v
    return dth


def _plaquette_vjp(G, geom):
    """Adjoint of :func:`_plaquette_jvp` on the upper triangle ``G[a, b]``."""
    d = geom.real_dim
    g = np.zeros((d,) + geom.shape)
    for a in range(d):
        for b in range(a + 1, d):
            Gab = G[a, b]
            g[a] += Gab - shift(Gab, geom, b, -1)
            g[b] += shift(Gab, geom, a, -1) - Gab
    return g


def _f02_coeffs(geom):
    """``dF02_p = sum kappa_ab dTheta_ab`` as a list per pair ``p``."""
    h = geom.spacing
    out = []
    for j, k in multi_indices(geom.complex_dim, 2):
        xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
        out.append({(xj, xk): 0.25j / (h[xj] * h[xk]),
                    (xj, yk): -0.25 / (h[xj] * h[yk]),
                    (yj, xk): -0.25 / (h[yj] * h[xk]),
                    (yj, yk): -0.25j / (h[yj] * h[yk])})
    return out


def _abs2_jvp(f, df):
    return 2 * np.sum(np.real(np.conj(f) * df), axis=0)


def residual_jvp(cfg, v: Tangent, s: float = 1.0):
    """Directional derivative ``(dr1, dr2, dr3, dr4)`` of ``residual_general``."""
    g = cfg.geometry
    n = g.complex_dim
    U = cfg.links
    al, be, u = cfg.alpha, cfg.beta, cfg.u
    dal, dbe, du = v.dalpha, v.dbeta, v.du

    dr1 = dbar(dal, U, 0, g) + _dbar_link_jvp(al, U, v.eta, 0, g)
    if n >= 2:
        dr1 = dr1 + dbar_adjoint(dbe, U, 2, g) + _dbar_adj_link_jvp(be, U, v.eta, 2, g)
    dr2 = g.zeros_form(3)
    if n == 3:
        dr2 = (dbar(dbe, U, 2, g) + _dbar_link_jvp(be, U, v.eta, 2, g)
               + 0.5 * (dal * u + al * du))
    # xi links W = U_c U^2 move by 2 eta
    dth = _plaquette_jvp(2 * v.eta, g)
    h = g.spacing
    dr3 = g.zeros_form(2)
    if n >= 2:
        for p, coeffs in enumerate(_f02_coeffs(g)):
            dr3[p] = sum(kap * dth[a, b] for (a, b), kap in coeffs.items())
        dr3 = dr3 - 0.25 * (np.conj(dal) * be + np.conj(al) * dbe)
        if n == 3:
            dr3 = dr3 + dbar_adjoint(du, None, 3, g)
    dilf = -sum(dth[2 * j, 2 * j + 1] / (h[2 * j] * h[2 * j + 1]) for j in range(n))
    dr4 = dilf - s / 8.0 * (_abs2_jvp(u, du) + _abs2_jvp(be, dbe) - _abs2_jvp(al, dal))
    return dr1, dr2, dr3, dr4


def residual_vjp(cfg, cot, s: float = 1.0) -> Tangent:
    """Adjoint of :func:`residual_jvp` for cotangent ``(c1, c2, c3, c4)``."""
    g = cfg.geometry
    n = g.complex_dim
    d = g.real_dim
    U = cfg.links
    al, be, u = cfg.alpha, cfg.beta, cfg.u
    c1, c2, c3, c4 = cot
    g_eta = np.zeros((d,) + g.shape)
    g_al = dbar_adjoint(c1, U, 1, g)
    _dbar_link_vjp(c1, al, U, 0, g, g_eta)
    g_be = np.zeros_like(be)
    g_u = np.zeros_like(u)
    if n >= 2:
        g_be = g_be + dbar(c1, U, 1, g)
        _dbar_adj_link_vjp(c1, be, U, 2, g, g_eta)
    if n == 3:
        g_be = g_be + dbar_adjoint(c2, U, 3, g)
        _dbar_link_vjp(c2, be, U, 2, g, g_eta)
        g_al = g_al + 0.5 * np.sum(np.conj(u) * c2, axis=0, keepdims=True)
        g_u = g_u + 0.5 * np.conj(al) * c2
    h = g.spacing
    G = np.zeros((d, d) + g.shape)
    if n >= 2:
        for p, coeffs in enumerate(_f02_coeffs(g)):
            for (a, b), kap in coeffs.items():
                G[a, b] += np.real(np.conj(c3[p]) * kap)
        g_be = g_be - 0.25 * al * c3
        g_al = g_al - 0.25 * np.sum(np.conj(c3) * be, axis=0, keepdims=True)
        if n == 3:
            g_u = g_u + dbar(c3, None, 2, g)
    for j in range(n):
        G[2 * j, 2 * j + 1] += -c4 / (h[2 * j] * h[2 * j + 1])
    g_eta += 2 * _plaquette_vjp(G, g)
    g_u = g_u - s / 4.0 * c4 * u
    g_be = g_be - s / 4.0 * c4 * be
    g_al = g_al + s / 4.0 * c4 * al
    return Tangent(g_eta, g_u, g_al, g_be)


def apply_tangent(cfg, v: Tangent, t: float = 1.0):
    """Move ``cfg`` along ``v`` (links multiplicatively)."""
    return cfg.replace(links=cfg.links * np.exp(1j * t * v.eta), u=cfg.u + t * v.du,
                       alpha=cfg.alpha + t * v.dalpha, beta=cfg.beta + t * v.dbeta)


def gauge_direction(cfg, chi: np.ndarray) -> Tangent:
    """Infinitesimal action of ``exp(-i t chi)``: ``eta = h d chi``, ``dalpha = -i chi alpha``."""
    g = cfg.geometry
    eta = np.stack([shift(chi, g, a) - chi for a in range(g.real_dim)])
    return Tangent(eta, np.zeros_like(cfg.u), -1j * chi * cfg.alpha, -1j * chi * cfg.beta)


def gauge_direction_adjoint(cfg, v: Tangent) -> np.ndarray:
    """Adjoint of :func:`gauge_direction` for the real pairing."""
    g = cfg.geometry
    out = np.zeros(g.shape)
    for a in range(g.real_dim):
        out += shift(v.eta[a], g, a, -1) - v.eta[a]
    out += np.sum(np.real(np.conj(-1j * cfg.alpha) * v.dalpha), axis=0)
    out += np.sum(np.real(np.conj(-1j * cfg.beta) * v.dbeta), axis=0)
    return out
