"""Kernel counting by spectral gaps, shared by section counts and Hodge numbers.

The forward-difference Dolbeault operator has a second, lattice-scale zero of
its symbol at wave angles ``(pi/2, 3pi/2)`` in every complex plane (a
"doubler"). Kernel vectors are therefore split by their roughness
``<v, sum_a h_a^2 D_a^* D_a v>``: smooth modes score ``O(h^2)``, doublers
score ``O(1)``. Only smooth modes are counted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .lattice.geometry import TorusGeometry, dbar_terms

DEFAULT_GAP = 1e3
ROUGHNESS_CUTOFF = 1.0
DENSE_LIMIT = 3000


class IndeterminateGapError(RuntimeError):
    """No singular-value ratio reached the gap threshold."""

    def __init__(self, message, singular_values):
        super().__init__(message)
        self.singular_values = list(map(float, singular_values))


@dataclass
class KernelReport:
    """Result of a gap-rule kernel count.

    ``raw_count`` includes lattice doublers; ``count`` keeps smooth modes.
    """

    count: int
    raw_count: int
    gap_ratio: float
    singular_values: list = field(default_factory=list)
    roughness: list = field(default_factory=list)
    floor: float = 0.0

    def to_dict(self):
        return {
            "count": self.count,
            "raw_count": self.raw_count,
            "gap_ratio": _finite(self.gap_ratio),
            "singular_values": [float(s) for s in self.singular_values],
            "roughness": [float(r) for r in self.roughness],
            "floor": float(self.floor),
        }


def _finite(x):
    return float(x) if np.isfinite(x) else "inf"


def gap_index(svals, floor: float, tol_gap: float = DEFAULT_GAP, complete: bool = True):
    """Apply the gap rule to ascending singular values.

    With ``s_0 = floor`` prepended, the ratios ``s_{m+1} / s_m`` are scanned
    and the position of the largest one is returned, provided it reaches
    ``tol_gap``. Taking the largest rather than the first ratio keeps
    near-zero modes of coarse grids (``~1e-7``) on the kernel side.
    ``complete`` says whether ``svals`` is the whole spectrum; a spectrum that
    sits entirely below the floor is then all kernel.
    """
    s = np.sort(np.asarray(svals, dtype=float))
    chain = np.concatenate([[floor], s])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = chain[1:] / chain[:-1]
    ratios = np.where(chain[:-1] == 0, np.inf, ratios)
    if ratios.size:
        m = int(np.argmax(ratios))
        if ratios[m] >= tol_gap:
            return m, float(ratios[m])
    if complete and s.size and s[-1] <= floor:
        return s.size, np.inf
    raise IndeterminateGapError(
        f"no singular-value ratio >= {tol_gap:g} (floor {floor:.3g})", s[:16]
    )


# --- sparse stencils -------------------------------------------------------

def shift_matrix(geom: TorusGeometry, a: int) -> sp.csr_matrix:
    """Permutation ``(P f)(x) = f(x + e_a)``."""
    M = geom.num_sites
    idx = np.arange(M).reshape(geom.shape)
    tgt = np.roll(idx, -1, axis=a).ravel()
    return sp.csr_matrix((np.ones(M), (np.arange(M), tgt)), shape=(M, M))


def cov_diff_matrix(geom: TorusGeometry, a: int, links=None) -> sp.csr_matrix:
    P = shift_matrix(geom, a).astype(complex)
    if links is not None:
        P = sp.diags(np.asarray(links[a]).ravel()) @ P
    return ((P - sp.identity(geom.num_sites, format="csr")) / geom.spacing[a]).tocsr()


def dbar_matrix(geom: TorusGeometry, links, q: int) -> sp.csr_matrix:
    """Sparse matrix of ``dbar`` from (0,q) to (0,q+1) in component-major order."""
    n = geom.complex_dim
    D = [cov_diff_matrix(geom, a, links) for a in range(geom.real_dim)]
    Dbar = [0.5 * (D[2 * j] + 1j * D[2 * j + 1]) for j in range(n)]
    blocks = [[None] * comb(n, q) for _ in range(comb(n, q + 1))]
    for t, j, sign, s in dbar_terms(n, q):
        blocks[t][s] = sign * Dbar[j]
    M = geom.num_sites
    for row in blocks:
        if all(b is None for b in row):
            row[0] = sp.csr_matrix((M, M), dtype=complex)
    return sp.bmat(blocks, format="csr", dtype=complex)


def hodge_block(geom: TorusGeometry, links, q: int) -> sp.csr_matrix:
    """Stacked operator ``[dbar_q ; dbar_{q-1}^*]`` whose kernel is harmonic (0,q)."""
    n = geom.complex_dim
    parts = []
    if q < n:
        parts.append(dbar_matrix(geom, links, q))
    if q > 0:
        parts.append(dbar_matrix(geom, links, q - 1).conj().T.tocsr())
    return sp.vstack(parts, format="csr")


def roughness_matrix(geom: TorusGeometry, links, ncomp: int) -> sp.csr_matrix:
    """``sum_a h_a^2 D_a^* D_a`` acting componentwise."""
    S = sum((h * h) * (Da.conj().T @ Da)
            for h, Da in ((geom.spacing[a], cov_diff_matrix(geom, a, links))
                          for a in range(geom.real_dim)))
    return sp.kron(sp.identity(ncomp), S, format="csr")


def _smooth_count(K: np.ndarray, S) -> tuple[int, list]:
    if K.shape[1] == 0:
        return 0, []
    G = K.conj().T @ (S @ K)
    r = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    return int(np.sum(r < ROUGHNESS_CUTOFF)), r.tolist()


def kernel_count(A: sp.spmatrix, S: sp.spmatrix, tol_gap: float = DEFAULT_GAP,
                 n_report: int = 12, n_iter: int = 16) -> KernelReport:
    """Count the smooth kernel of ``A`` by the gap rule.

    Dense SVD is used when ``A`` has at most :data:`DENSE_LIMIT` columns;
    otherwise the smallest eigenpairs of ``A^* A`` come from ARPACK.
    """
    ncols = A.shape[1]
    if ncols <= DENSE_LIMIT:
        Ad = A.toarray()
        _, sv, Vh = np.linalg.svd(Ad, full_matrices=True)
        if Ad.shape[0] < ncols:
            sv = np.concatenate([sv, np.zeros(ncols - Ad.shape[0])])
        order = np.argsort(sv)
        sv = sv[order]
        V = Vh.conj().T[:, order]
        floor = 64 * np.finfo(float).eps * max(sv[-1], 1.0)
        m, ratio = gap_index(sv, floor, tol_gap)
    else:
        H = (A.conj().T @ A).tocsr()
        k = min(n_iter, ncols - 2)
        lam, V = eigsh(H, k=k, which="SA", tol=1e-13, maxiter=20 * ncols)
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
        sv = np.sqrt(np.clip(lam, 0, None))
        norm_est = sp.linalg.norm(A, 1) if A.nnz else 1.0
        floor = 10 * np.sqrt(np.finfo(float).eps) * norm_est
        m, ratio = gap_index(sv, floor, tol_gap, complete=False)
    count, rough = _smooth_count(V[:, :m], S)
    return KernelReport(count, m, ratio, sv[:n_report].tolist(), rough, floor)


# --- Fourier path for translation-invariant links ---------------------------

def is_translation_invariant(links, geom: TorusGeometry, atol: float = 1e-14) -> bool:
    if links is None:
        return True
    flat = np.asarray(links).reshape(geom.real_dim, -1)
    return bool(np.all(np.abs(flat - flat[:, :1]) <= atol))


def _difference_symbols(geom: TorusGeometry, links):
    """Per-axis symbols ``(U_a e^{i theta_a} - 1) / h_a`` on the momentum grid."""
    N = geom.grid_points
    theta = 2 * np.pi * np.arange(N) / N
    zs = []
    for a in range(geom.real_dim):
        u = 1.0 if links is None else complex(np.asarray(links[a]).flat[0])
        shape = [1] * geom.real_dim
        shape[a] = N
        zs.append(((u * np.exp(1j * theta) - 1) / geom.spacing[a]).reshape(shape))
    return zs


def fourier_hodge_kernel(geom: TorusGeometry, links, q: int,
                         tol_gap: float = DEFAULT_GAP) -> KernelReport:
    """Harmonic (0,q) count for constant links from the exact symbol.

    On a translation-invariant bundle the Laplacian is diagonal in momentum
    with eigenvalue ``sum_j |sigma_j|^2`` on every (0,q) component.
    """
    n = geom.complex_dim
    zs = _difference_symbols(geom, links)
    lap = sum(np.abs(0.5 * (zs[2 * j] + 1j * zs[2 * j + 1])) ** 2 for j in range(n))
    lap = np.broadcast_to(lap, geom.shape)
    rough = np.broadcast_to(
        sum(geom.spacing[a] ** 2 * np.abs(zs[a]) ** 2 for a in range(geom.real_dim)), geom.shape
    )
    return _fourier_count(np.sqrt(lap).ravel(), rough.ravel(), comb(n, q), tol_gap)


def _fourier_count(sv_mom, rough_mom, mult, tol_gap):
    order = np.argsort(sv_mom)
    sv_mom, rough_mom = sv_mom[order], rough_mom[order]
    floor = 64 * np.finfo(float).eps * max(sv_mom[-1], 1.0)
    m, ratio = gap_index(sv_mom, floor, tol_gap)
    smooth = int(np.sum(rough_mom[:m] < ROUGHNESS_CUTOFF))
    return KernelReport(smooth * mult, m * mult, ratio,
                        np.repeat(sv_mom[:12], mult)[:12].tolist(),
                        rough_mom[:m].tolist(), floor)


def fourier_one_form_kernel(geom: TorusGeometry, tol_gap: float = DEFAULT_GAP) -> KernelReport:
    """Harmonic real 1-forms for the forward-difference ``d`` on a flat torus.

    ``d d^* + d^* d`` acts on each of the ``2n`` components as ``sum |zeta_a|^2``.
    """
    zs = _difference_symbols(geom, None)
    lap = np.broadcast_to(sum(np.abs(z) ** 2 for z in zs), geom.shape)
    # forward differences have no doublers, so roughness only guards the count
    rough = np.broadcast_to(sum(geom.spacing[a] ** 2 * np.abs(zs[a]) ** 2
                                for a in range(geom.real_dim)), geom.shape)
    return _fourier_count(np.sqrt(lap).ravel(), rough.ravel(), geom.real_dim, tol_gap)


def exterior_d_matrices(geom: TorusGeometry):
    """Sparse ``d_0`` (functions to 1-forms) and ``d_1`` (1-forms to 2-forms)."""
    d = geom.real_dim
    D = [cov_diff_matrix(geom, a).real.tocsr() for a in range(d)]
    d0 = sp.vstack(D, format="csr")
    pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    rows = []
    for a, b in pairs:
        row = [None] * d
        # (d A)_ab = D_a A_b - D_b A_a
        row[b] = D[a]
        row[a] = -D[b]
        rows.append(row)
    d1 = sp.bmat(rows, format="csr") if rows else None
    return d0, d1
