"""Exact characteristic-number arithmetic for the monopole index.

All computations use :class:`fractions.Fraction`; floats enter only through
:class:`DegreeData`, which is the interface to lattice measurements.
"""
from __future__ import annotations

import enum
import json
import numbers
from dataclasses import dataclass
from fractions import Fraction
from math import factorial, prod
from typing import Sequence

import numpy as np

CHERN_KEYS = ("c1c2", "c1sq_l", "c2_l", "l2_c1", "l3")


class ChernDataError(ValueError):
    """Malformed characteristic data."""


def to_fraction(x) -> Fraction:
    """Parse an int, Fraction or ``"p/q"`` string into an exact rational."""
    if isinstance(x, bool):
        raise ChernDataError(f"boolean is not a rational: {x!r}")
    if isinstance(x, (numbers.Integral, Fraction)):
        return Fraction(int(x)) if isinstance(x, numbers.Integral) else x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ChernDataError(f"cannot parse rational {x!r}") from exc
    if isinstance(x, float):
        if not np.isfinite(x) or x != int(x):
            raise ChernDataError(f"non-integral float {x!r}; pass a 'p/q' string")
        return Fraction(int(x))
    raise ChernDataError(f"unsupported rational type {type(x).__name__}")


@dataclass(frozen=True)
class ChernData:
    """The five intersection numbers consumed by :func:`virtual_dimension`.

    Attributes
    ----------
    c1c2 : Fraction
        ``c_1(X) c_2(X) [X]``.
    c1sq_l : Fraction
        ``c_1(L) c_1(X)^2``.
    c2_l : Fraction
        ``c_1(L) c_2(X)``.
    l2_c1 : Fraction
        ``c_1(L)^2 c_1(X)``.
    l3 : Fraction
        ``c_1(L)^3``.
    """

    c1c2: Fraction = Fraction(0)
    c1sq_l: Fraction = Fraction(0)
    c2_l: Fraction = Fraction(0)
    l2_c1: Fraction = Fraction(0)
    l3: Fraction = Fraction(0)
    integral: bool = False

    def __post_init__(self):
        for f in CHERN_KEYS:
            object.__setattr__(self, f, to_fraction(getattr(self, f)))
        if self.integral:
            bad = [f for f in CHERN_KEYS if getattr(self, f).denominator != 1]
            if bad:
                raise ChernDataError(f"non-integral entries with integral=True: {bad}")

    def as_dict(self) -> dict:
        return {k: _fmt(getattr(self, k)) for k in CHERN_KEYS}

    @classmethod
    def from_mapping(cls, d: dict, integral: bool = False) -> "ChernData":
        unknown = set(d) - set(CHERN_KEYS)
        if unknown:
            raise ChernDataError(f"unknown keys: {sorted(unknown)}")
        return cls(**{k: to_fraction(d.get(k, 0)) for k in CHERN_KEYS}, integral=integral)

    @classmethod
    def from_json(cls, text: str) -> "ChernData":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ChernDataError(f"invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ChernDataError("Chern data must be a JSON object")
        return cls.from_mapping(d)


def _fmt(x: Fraction):
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class DegreeData:
    c1xi_omega2: float = 0.0
    volume_normalization: float = 1.0

    def __post_init__(self):
        if not self.volume_normalization > 0:
            raise ChernDataError("volume_normalization must be positive")


def virtual_dimension(d: ChernData) -> Fraction:
    """Exact virtual dimension of the monopole moduli space.

    ``-c1c2/12 - (2 c1sq_l + 2 c2_l + 6 l2_c1 + 4 l3)/24``, which equals
    ``-(chi(O_X) + chi(L))`` by Hirzebruch-Riemann-Roch.
    """
    return (-Fraction(1, 12) * d.c1c2
            - Fraction(1, 24) * (2 * d.c1sq_l + 2 * d.c2_l + 6 * d.l2_c1 + 4 * d.l3))


def chern_data_from_classes(c1_X: Sequence, c2_X_pairing: Sequence, c1_L: Sequence,
                            triple: np.ndarray, c1c2: int | Fraction | None = None) -> ChernData:
    """Reduce class vectors to the five intersection numbers.

    Parameters
    ----------
    c1_X, c1_L : sequence of rationals
        Coordinates of ``c_1(X)`` and ``c_1(L)`` in a basis ``e_i`` of ``H^2``.
    c2_X_pairing : sequence of rationals
        Values ``c_2(X) e_i`` on the fundamental class.
    triple : array-like, shape (b, b, b)
        Symmetric cubic form ``T_ijk = e_i e_j e_k [X]``.
    c1c2 : rational, optional
        ``c_1 c_2``; computed from the pairing when omitted.
    """
    c1 = [to_fraction(x) for x in c1_X]
    l = [to_fraction(x) for x in c1_L]
    c2 = [to_fraction(x) for x in c2_X_pairing]
    if not (len(c1) == len(l) == len(c2)):
        raise ChernDataError("class vectors must share one basis")
    b = len(c1)
    T = [[[to_fraction(triple[i][j][k]) for k in range(b)] for j in range(b)] for i in range(b)]

    def cube(u, v, w):
        return sum(u[i] * v[j] * w[k] * T[i][j][k]
                   for i in range(b) for j in range(b) for k in range(b))

    def lin(u):
        return sum(u[i] * c2[i] for i in range(b))

    return ChernData(
        c1c2=lin(c1) if c1c2 is None else to_fraction(c1c2),
        c1sq_l=cube(l, c1, c1),
        c2_l=lin(l),
        l2_c1=cube(l, l, c1),
        l3=cube(l, l, l),
    )


def characteristic_class(c1_L: Sequence, c1_KXinv: Sequence) -> tuple:
    """``c_1(xi) = c_1(K_X^{-1}) + 2 c_1(L)`` componentwise."""
    if len(c1_L) != len(c1_KXinv):
        raise ChernDataError(
            f"basis length mismatch: {len(c1_L)} vs {len(c1_KXinv)}"
        )
    return tuple(to_fraction(k) + 2 * to_fraction(l) for l, k in zip(c1_L, c1_KXinv))


def degree(d: DegreeData) -> float:
    """Degree ``c_1(xi) . [omega^2]`` of the characteristic bundle."""
    return float(d.c1xi_omega2)


def torus_degree(twists: Sequence[int], periods_pairs=None) -> Fraction | float:
    """Degree of a product torus bundle with plane twists ``k_j``.

    Evaluates ``(n-1)! sum_j k_j prod_{m != j} area_m``, the wedge integral of
    ``sum_j k_j dx_j dy_j / area_j`` against ``omega^{n-1}``.
    """
    n = len(twists)
    areas = [1] * n if periods_pairs is None else [p[0] * p[1] for p in periods_pairs]
    total = sum(k * prod(areas[m] for m in range(n) if m != j) for j, k in enumerate(twists))
    total = Fraction(total) if periods_pairs is None else total
    return factorial(n - 1) * total


class Branch(enum.Enum):
    ZERO = "Zero"
    POINT_COUNT = "PointCount"
    PAIRED_CLASS = "PairedClass"
    UNDEFINED = "Undefined"

    def __str__(self):
        return self.value


def invariant_branch(ind, has_reducibles: bool) -> Branch:
    """Classify which branch of the invariant definition applies.

    ``ind`` is the index of the deformation complex, so the moduli dimension
    is ``-ind``. Negative moduli dimension gives the zero invariant, zero
    dimension an algebraic point count, and positive dimension a pairing
    with a cohomology class. Reducible solutions leave it undefined.
    """
    if has_reducibles:
        return Branch.UNDEFINED
    ind = to_fraction(ind)
    if -ind < 0:
        return Branch.ZERO
    if ind == 0:
        return Branch.POINT_COUNT
    return Branch.PAIRED_CLASS
