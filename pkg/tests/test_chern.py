from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from sympmono import chern
from sympmono.suites import cp3_data, hrr_virtual_dimension, random_chern_data, todd_coefficients


def _sympy_chi_coefficients():
    """Degree-3 part of ``ch(L) td(X)`` in ``c1, c2, c3, l`` via sympy series."""
    x = sp.symbols("x1:4")
    l, t = sp.symbols("l t")
    td = sp.Integer(1)
    for xi in x:
        td *= sp.series(t * xi / (1 - sp.exp(-t * xi)), t, 0, 4).removeO()
    ch = sp.series(sp.exp(t * l), t, 0, 4).removeO()
    top = sp.expand(td * ch).coeff(t, 3)
    td3 = sp.expand(td).coeff(t, 3)
    sym_chi, rem, _ = sp.polys.polyfuncs.symmetrize(top, *x, formal=True)
    sym_td, rem2, _ = sp.polys.polyfuncs.symmetrize(td3, *x, formal=True)
    assert rem == 0 and rem2 == 0
    return sym_chi, sym_td


@pytest.fixture(scope="module")
def chi_oracle():
    sym_chi, sym_td = _sympy_chi_coefficients()
    s1, s2, s3 = sp.symbols("s1:4")
    l = sp.Symbol("l")
    poly = sp.Poly(sp.expand(sym_chi + sym_td), s1, s2, s3, l)
    return dict(poly.terms())


def _oracle_vdim(coeffs, d):
    # monomial exponents (s1, s2, s3, l) -> intersection number
    numbers = {(1, 1, 0, 0): d.c1c2, (2, 0, 0, 1): d.c1sq_l, (0, 1, 0, 1): d.c2_l,
               (1, 0, 0, 2): d.l2_c1, (0, 0, 0, 3): d.l3}
    total = Fraction(0)
    for mono, c in coeffs.items():
        c = Fraction(int(sp.numer(c)), int(sp.denom(c)))
        if c == 0:
            continue
        assert mono in numbers, f"unexpected monomial {mono}"
        total += c * numbers[mono]
    return -total


def test_virtual_dimension_matches_sympy_hrr(chi_oracle):
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = random_chern_data(rng)
        assert chern.virtual_dimension(d) == _oracle_vdim(chi_oracle, d)


def test_fraction_oracle_agrees_with_sympy():
    x = sp.Symbol("x")
    ser = sp.series(x / (1 - sp.exp(-x)), x, 0, 4).removeO()
    assert sp.Rational(todd_coefficients()[1][(1, 0, 0)]) == ser.coeff(x, 1)
    td = todd_coefficients()
    assert td[2] == {(2, 0, 0): Fraction(1, 12), (0, 1, 0): Fraction(1, 12)}
    assert td[3] == {(3, 0, 0): 0, (1, 1, 0): Fraction(1, 24), (0, 0, 1): 0}
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = random_chern_data(rng)
        assert hrr_virtual_dimension(d) == chern.virtual_dimension(d)


def test_cp3_values():
    assert chern.virtual_dimension(cp3_data(0)) == -2
    assert chern.virtual_dimension(cp3_data(-1)) == -1
    assert chern.virtual_dimension(chern.ChernData()) == 0


def test_chern_data_from_classes_cp3_numbers():
    d = cp3_data(-1)
    assert (d.c1c2, d.c1sq_l, d.c2_l, d.l2_c1, d.l3) == (24, -16, -6, 4, -1)


def test_to_fraction_parsing():
    assert chern.to_fraction("3/4") == Fraction(3, 4)
    assert chern.to_fraction(5) == 5
    assert chern.to_fraction(2.0) == 2
    for bad in ("x", True, 0.5, float("nan"), [1]):
        with pytest.raises(chern.ChernDataError):
            chern.to_fraction(bad)


def test_chern_data_validation():
    with pytest.raises(chern.ChernDataError):
        chern.ChernData.from_mapping({"c1c2": 1, "nope": 2})
    with pytest.raises(chern.ChernDataError):
        chern.ChernData.from_json("[1, 2]")
    with pytest.raises(chern.ChernDataError):
        chern.ChernData.from_json("{bad json")
    with pytest.raises(chern.ChernDataError):
        chern.ChernData(l3="1/2", integral=True)
    d = chern.ChernData.from_json('{"c1c2": 24, "l3": "-1/3"}')
    assert d.as_dict()["l3"] == "-1/3"


def test_invariant_branch():
    B = chern.Branch
    assert chern.invariant_branch(0, False) is B.POINT_COUNT
    assert chern.invariant_branch(2, False) is B.ZERO
    assert chern.invariant_branch(-3, False) is B.PAIRED_CLASS
    assert chern.invariant_branch(0, True) is B.UNDEFINED
    # CP^3 with L = O: moduli dimension -2 gives the zero invariant
    assert chern.invariant_branch(-chern.virtual_dimension(cp3_data(0)), False) is B.ZERO


def test_characteristic_class_and_degree():
    assert chern.characteristic_class([1, 0], [-4, 2]) == (-2, 2)
    with pytest.raises(chern.ChernDataError):
        chern.characteristic_class([1], [1, 2])
    assert chern.torus_degree((1, 0, 0)) == 2
    assert chern.torus_degree((1, -1, 2)) == 4
    assert chern.torus_degree((3,)) == 3
    assert chern.degree(chern.DegreeData(1.5)) == 1.5
    with pytest.raises(chern.ChernDataError):
        chern.DegreeData(1.0, 0.0)
