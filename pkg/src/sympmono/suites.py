"""Property suites behind ``sympmono verify`` and the acceptance tests.

Every suite takes a seed, draws all randomness from it, and returns a
:class:`SuiteResult` holding one :class:`Check` per measured property.
"""
from __future__ import annotations

import functools
import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import chern
from .lattice import (
    TorusGeometry,
    constant_curvature_bundle,
    constant_curvature_links,
    dbar,
    dbar_adjoint,
    gauge_transform_links,
    random_gauge,
)


@dataclass
class Check:
    name: str
    value: object
    threshold: object
    passed: bool
    timing: bool = False

    def to_dict(self, timings: bool = True) -> dict:
        d = {"name": self.name, "passed": bool(self.passed), "threshold": _jsonable(self.threshold)}
        if timings or not self.timing:
            d["value"] = _jsonable(self.value)
        return d


@dataclass
class SuiteResult:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, threshold, passed, timing=False):
        self.checks.append(Check(name, value, threshold, bool(passed), timing))

    def at_most(self, name, value, bound):
        self.add(name, float(value), bound, float(value) <= bound)

    def equal(self, name, value, expected):
        self.add(name, value, expected, value == expected)

    def runtime(self, limit):
        self.add("runtime_seconds", self.seconds, limit, self.seconds < limit, timing=True)

    def failures(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self, timings: bool = True) -> dict:
        d = {"suite": self.suite, "passed": self.passed,
             "checks": [c.to_dict(timings) for c in self.checks],
             "details": _strip_timings(_jsonable(self.details), timings)}
        if timings:
            d["seconds"] = self.seconds
        return d


def _jsonable(x):
    if isinstance(x, Fraction):
        return chern._fmt(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _strip_timings(x, timings):
    if timings:
        return x
    if isinstance(x, dict):
        return {k: _strip_timings(v, timings) for k, v in x.items() if k != "seconds"}
    if isinstance(x, list):
        return [_strip_timings(v, timings) for v in x]
    return x


# --- index --------------------------------------------------------------------

def _series_inverse(c: list) -> list:
    out = [Fraction(1) / c[0]]
    for k in range(1, len(c)):
        out.append(-sum(c[j] * out[k - j] for j in range(1, k + 1)) / c[0])
    return out


def _solve_exact(A, b):
    """Gaussian elimination over the rationals."""
    n = len(b)
    M = [list(map(Fraction, row)) + [Fraction(v)] for row, v in zip(A, b)]
    for i in range(n):
        p = next(r for r in range(i, n) if M[r][i] != 0)
        M[i], M[p] = M[p], M[i]
        for r in range(n):
            if r != i and M[r][i] != 0:
                f = M[r][i] / M[i][i]
                M[r] = [a - f * c for a, c in zip(M[r], M[i])]
    return [M[i][n] / M[i][i] for i in range(n)]


@functools.lru_cache(maxsize=1)
def todd_coefficients():
    """Todd polynomial of a threefold in ``c1, c2, c3`` from ``x / (1 - e^{-x})``.

    The per-root series is inverted exactly, multiplied over three roots, and
    the symmetric degree-``d`` parts are fitted to elementary symmetric
    monomials at rational root triples.
    """
    from math import factorial

    f = _series_inverse([Fraction((-1) ** k, factorial(k + 1)) for k in range(4)])
    bases = {1: [(1, 0, 0)], 2: [(2, 0, 0), (0, 1, 0)], 3: [(3, 0, 0), (1, 1, 0), (0, 0, 1)]}
    pts = [(1, 2, 3), (2, -1, 5), (3, 7, -2), (-4, 1, 9)]
    out = {}
    for d, monos in bases.items():
        A, b = [], []
        for x in pts[: len(monos)]:
            e = (sum(x), x[0] * x[1] + x[0] * x[2] + x[1] * x[2], x[0] * x[1] * x[2])
            A.append([Fraction(e[0]) ** m[0] * Fraction(e[1]) ** m[1] * Fraction(e[2]) ** m[2]
                      for m in monos])
            b.append(sum(f[i] * f[j] * f[d - i - j] * Fraction(x[0]) ** i * Fraction(x[1]) ** j
                         * Fraction(x[2]) ** (d - i - j)
                         for i in range(d + 1) for j in range(d + 1 - i)))
        out[d] = dict(zip(monos, _solve_exact(A, b)))
    return out


def hrr_virtual_dimension(d: chern.ChernData) -> Fraction:
    """``-(chi(O) + chi(L))`` from ``int ch(L) td(X)`` with derived Todd coefficients."""
    td = todd_coefficients()
    if td[3][(3, 0, 0)] != 0 or td[3][(0, 0, 1)] != 0:
        raise AssertionError("Todd degree-3 part depends on c1^3 or c3")
    chi_O = td[3][(1, 1, 0)] * d.c1c2
    chi_L = (d.l3 / 6 + td[1][(1, 0, 0)] * d.l2_c1 / 2
             + td[2][(2, 0, 0)] * d.c1sq_l + td[2][(0, 1, 0)] * d.c2_l + chi_O)
    return -(chi_O + chi_L)


def random_chern_data(rng: np.random.Generator, b: int = 2) -> chern.ChernData:
    """Class vectors with random rational entries reduced to intersection numbers."""
    def rat():
        return Fraction(int(rng.integers(-30, 31)), int(rng.integers(1, 9)))

    T = [[[None] * b for _ in range(b)] for _ in range(b)]
    for i, j, k in itertools.combinations_with_replacement(range(b), 3):
        v = rat()
        for p in set(itertools.permutations((i, j, k))):
            T[p[0]][p[1]][p[2]] = v
    return chern.chern_data_from_classes([rat() for _ in range(b)], [rat() for _ in range(b)],
                                         [rat() for _ in range(b)], T)


def cp3_data(l: int) -> chern.ChernData:
    """``X = CP^3`` with ``c1 = 4H``, ``c2 = 6H^2``, ``H^3 = 1`` and ``L = O(l)``."""
    return chern.chern_data_from_classes([4], [6], [l], [[[1]]])


def suite_index(seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    res = SuiteResult("index")
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(50):
        d = random_chern_data(rng)
        mismatches += chern.virtual_dimension(d) != hrr_virtual_dimension(d)
    res.equal("random_datasets_mismatches", int(mismatches), 0)
    res.equal("cp3_O", chern.virtual_dimension(cp3_data(0)), Fraction(-2))
    res.equal("cp3_O(-1)", chern.virtual_dimension(cp3_data(-1)), Fraction(-1))
    res.seconds = time.perf_counter() - t0
    res.runtime(1.0)
    return res


# --- adjointness ----------------------------------------------------------------

def _crandn(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def suite_adjointness(seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    res = SuiteResult("adjointness")
    rng = np.random.default_rng(seed)
    cases = [(1, 64, (1,)), (2, 12, (1, -2)), (3, 6, (1, 0, -1))]
    worst = {}
    for n, N, tw in cases:
        g = TorusGeometry(n, N)
        for label, twists in (("untwisted", (0,) * n), ("twisted", tw)):
            links = constant_curvature_links(g, twists)
            if label == "twisted":
                gf = random_gauge(g, rng)
                links = gauge_transform_links(links, gf, g)
            for q in range(n):
                a = _crandn(rng, g.form_shape(q))
                b = _crandn(rng, g.form_shape(q + 1))
                da = dbar(a, links, q, g)
                lhs = g.inner(da, b)
                rhs = g.inner(a, dbar_adjoint(b, links, q + 1, g))
                rel = abs(lhs - rhs) / (g.norm(da) * g.norm(b))
                key = f"T{2 * n}_{N}_{label}_q{q}"
                worst[key] = rel
                res.at_most(key, rel, 1e-12)
    res.details["relative_errors"] = worst
    res.seconds = time.perf_counter() - t0
    res.runtime(60.0)
    return res


# --- section counting -----------------------------------------------------------

def suite_sections(seed: int = 0) -> SuiteResult:
    from .vortex import section_spectrum

    t0 = time.perf_counter()
    res = SuiteResult("sections")
    rng = np.random.default_rng(seed)
    g = TorusGeometry(1, 32)
    for k in (1, 2, 3):
        rep = section_spectrum(constant_curvature_bundle(g, (k,)))
        res.equal(f"k={k}_count", rep.count, k)
        res.add(f"k={k}_gap_ratio", rep.gap_ratio, 1e3, rep.gap_ratio >= 1e3)
    hol = rng.uniform(0.5, 2 * np.pi - 0.5, size=2)
    rep0 = section_spectrum(constant_curvature_bundle(g, (0,), holonomy=hol))
    res.equal("k=0_generic_count", rep0.count, 0)
    rep_neg = section_spectrum(constant_curvature_bundle(g, (-1,)))
    res.equal("k=-1_count", rep_neg.count, 0)
    res.details["generic_holonomy"] = [float(h) for h in hol]
    res.seconds = time.perf_counter() - t0
    res.runtime(60.0)
    return res


# --- Kazdan-Warner --------------------------------------------------------------

def suite_kazdan_warner(seed: int = 0) -> SuiteResult:
    from .vortex import KWProblem, constant_solution, manufactured_problem, solve_kazdan_warner

    t0 = time.perf_counter()
    res = SuiteResult("kazdan-warner")
    rng = np.random.default_rng(seed)
    g = TorusGeometry(1, 64)
    worst = 0.0
    for w, gg, s in ((1.0, 1.0, 1.0), (2.0, 0.5, 3.0), (0.3, 4.0, 0.5)):
        sol = solve_kazdan_warner(KWProblem(np.full(g.shape, w), gg, s, g))
        worst = max(worst, float(np.max(np.abs(sol.u - constant_solution(w, gg, s)))))
    res.at_most("constant_closed_form", worst, 1e-12)
    p, u_star = manufactured_problem(g, s=2.0, rng=rng)
    sol = solve_kazdan_warner(p)
    res.at_most("manufactured_linf", np.max(np.abs(sol.u - u_star)), 1e-8)
    u1 = solve_kazdan_warner(p, u0=rng.normal(size=g.shape)).u
    u2 = solve_kazdan_warner(p, u0=rng.normal(size=g.shape)).u
    res.at_most("uniqueness", np.max(np.abs(u1 - u2)), 1e-9)
    lhs = g.integrate(p.s / 8.0 * p.w * np.exp(2 * sol.u))
    res.at_most("integral_constraint", abs(lhs - g.integrate(p.g)), 1e-10)
    res.seconds = time.perf_counter() - t0
    res.runtime(30.0)
    return res


# --- rescaling ------------------------------------------------------------------

def suite_rescaling(seed: int = 0) -> SuiteResult:
    from .fields import rescale, residual_general
    from .vortex import constant_vortex

    t0 = time.perf_counter()
    res = SuiteResult("rescaling")
    g = TorusGeometry(3, 4)
    rng = np.random.default_rng(seed)
    worst_sol, worst_scale = 0.0, 0.0
    for s in (0.5, 2.0, 7.0):
        cfg, _ = constant_vortex(g, (-1, -1, -1), s=s)
        r_s = residual_general(cfg, s).norm()
        r_1 = residual_general(rescale(cfg, s), 1.0).norm()
        worst_sol = max(worst_sol, r_s, r_1)
        c = cfg.replace(beta=_crandn(rng, cfg.beta.shape), u=_crandn(rng, cfg.u.shape))
        rc = rescale(c, s)
        for a, b in ((c.alpha, rc.alpha), (c.beta, rc.beta), (c.u, rc.u)):
            worst_scale = max(worst_scale, abs(g.norm(b) / g.norm(a) - np.sqrt(s)))
    res.at_most("solution_residual_both_sides", worst_sol, 1e-9)
    res.at_most("norm_scaling", worst_scale, 1e-13)
    res.seconds = time.perf_counter() - t0
    return res


# --- identities -----------------------------------------------------------------

def suite_identities(seed: int = 0, flow_solution=None) -> SuiteResult:
    """Gauge equivariance, energy identity and degree identity.

    ``flow_solution`` is an optional converged zero-twist configuration; one is
    computed when omitted.
    """
    from .fields import (
        degree_identity,
        energy_identity,
        gauge_act,
        random_configuration,
        residual_general,
    )
    from .flow import solve_monopole
    from .vortex import constant_vortex

    t0 = time.perf_counter()
    res = SuiteResult("identities")
    rng = np.random.default_rng(seed)
    g = TorusGeometry(3, 4)
    cfg = random_configuration(g, rng, (1, 0, -1), amplitude=0.5)
    R = residual_general(cfg, 1.3)
    scale = max(R.sup(), 1.0)
    worst = 0.0
    for _ in range(10):
        gf = random_gauge(g, rng)
        Rg = residual_general(gauge_act(gf, cfg), 1.3)
        # r1, r2 are sections of L and transform; r3, r4 are invariant
        pairs = ((Rg.r1, gf * R.r1), (Rg.r2, gf * R.r2), (Rg.r3, R.r3), (Rg.r4, R.r4))
        worst = max(worst, max(float(np.max(np.abs(a - b), initial=0.0)) for a, b in pairs) / scale)
    res.at_most("gauge_equivariance", worst, 1e-12)
    if flow_solution is None:
        g6 = TorusGeometry(3, 6)
        c0 = random_configuration(g6, rng, (0, 0, 0), amplitude=0.3, link_noise=0.05, link_modes=1)
        fr = solve_monopole(c0, tol=1e-8)
        res.add("flow_converged", fr.residual, 1e-8, fr.converged)
        flow_solution = fr.configuration
    vort, _ = constant_vortex(TorusGeometry(3, 4), (-1, -1, -1), s=1.0)
    res.at_most("energy_identity_flow", energy_identity(flow_solution), 1e-8)
    res.at_most("energy_identity_vortex", energy_identity(vort), 1e-8)
    gaps = []
    for s, ctw in ((1.0, (-1, -1, -1)), (2.5, (-2, -1, 0)), (0.7, (-1, -2, -3))):
        v, _ = constant_vortex(TorusGeometry(3, 4), ctw, s=s)
        gaps.append(degree_identity(v, s).gap)
    res.at_most("degree_identity_vortex", max(gaps), 1e-8)
    res.seconds = time.perf_counter() - t0
    return res


# --- linearization --------------------------------------------------------------

def suite_linearization(seed: int = 0) -> SuiteResult:
    from ._tangent import Tangent, apply_tangent, pack_residual
    from .fields import random_configuration, residual_general, zero_configuration
    from .linearize import assemble_L2, complex_defect
    from .vortex import constant_vortex

    t0 = time.perf_counter()
    res = SuiteResult("linearization")
    rng = np.random.default_rng(seed)
    g = TorusGeometry(3, 4)
    s = 1.7
    cfg = random_configuration(g, rng, (1, 0, -1), amplitude=0.5, link_noise=0.1)
    L2 = assemble_L2(cfg, s)
    eps = 1e-5
    worst = 0.0
    for _ in range(20):
        v = Tangent.unpack(rng.normal(size=L2.shape[1]), cfg)
        plus = pack_residual(residual_general(apply_tangent(cfg, v, eps), s).components().values())
        minus = pack_residual(residual_general(apply_tangent(cfg, v, -eps), s).components().values())
        fd = (plus - minus) / (2 * eps)
        jv = L2.matvec(v.pack())
        worst = max(worst, float(np.linalg.norm(jv - fd) / np.linalg.norm(fd)))
    res.at_most("L2_vs_finite_difference", worst, 1e-6)
    flats = []
    for n, N in ((1, 16), (2, 8), (3, 4)):
        gn = TorusGeometry(n, N)
        hol = rng.uniform(0, 2 * np.pi, size=gn.real_dim)
        flats.append(complex_defect(zero_configuration(gn, holonomy=hol), s, rng=rng))
    res.at_most("defect_flat", max(flats), 1e-12)
    kw_tol = 1e-12
    vort, sol = constant_vortex(g, (-1, -1, -1), s=s, tol=kw_tol)
    res.at_most("defect_vortex", complex_defect(vort, s, rng=rng), 10 * kw_tol)
    res.seconds = time.perf_counter() - t0
    return res


# --- cohomology -----------------------------------------------------------------

def suite_cohomology(seed: int = 0) -> SuiteResult:
    from .linearize import dolbeault_cohomology_dims, flat_moduli_dimension

    t0 = time.perf_counter()
    res = SuiteResult("cohomology")
    for n, N, expected in ((1, 16, (1, 1)), (3, 6, (1, 3, 3, 1))):
        for M in (N, 2 * N):
            dims = dolbeault_cohomology_dims(geometry=TorusGeometry(n, M)).dims
            res.equal(f"hodge_T{2 * n}_N{M}", tuple(dims), expected)
    for n, N in ((1, 16), (2, 8), (3, 6)):
        for M in (N, 2 * N):
            res.equal(f"flat_moduli_T{2 * n}_N{M}", flat_moduli_dimension(TorusGeometry(n, M)), 2 * n)
    res.seconds = time.perf_counter() - t0
    return res


# --- trichotomy -----------------------------------------------------------------

def suite_trichotomy(seed: int = 0, runs: int = 10, grid: int = 6, tol: float = 1e-8,
                     twists=((0, 0, 0), (-1, 0, 0)), spread: float = 0.2) -> SuiteResult:
    from .vortex import trichotomy_experiment

    t0 = time.perf_counter()
    res = SuiteResult("trichotomy")
    for tw in twists:
        rep = trichotomy_experiment(tw, runs=runs, grid=grid, seed=seed, tol=tol)
        label = ",".join(map(str, tw))
        res.details[label] = rep
        if not any(tw):
            res.add(f"({label})_all_reducible_flat", rep["max_residual"], tol,
                    rep["all_reducible_flat"] and len(rep["runs"]) == runs)
            res.equal(f"({label})_flat_moduli_dimension", rep["flat_moduli_dimension"], 2 * len(tw))
        else:
            # a floor must sit well clear of the convergence tolerance
            res.add(f"({label})_floor_positive", rep["min_residual"], 100 * tol,
                    rep["min_residual"] > 100 * tol and len(rep["runs"]) == runs)
            res.at_most(f"({label})_floor_spread", rep["floor_spread"], spread)
    res.seconds = time.perf_counter() - t0
    res.runtime(600.0)
    return res


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "index": suite_index,
    "adjointness": suite_adjointness,
    "sections": suite_sections,
    "kazdan-warner": suite_kazdan_warner,
    "rescaling": suite_rescaling,
    "identities": suite_identities,
    "linearization": suite_linearization,
    "cohomology": suite_cohomology,
    "trichotomy": suite_trichotomy,
}


def run_suite(name: str, seed: int = 0, **kw) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](seed, **kw)
