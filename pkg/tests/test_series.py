import io
import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nsseries.series import (EXACT, FLOAT, Caps, CoefficientField, ModeMismatchError, MultiIndex,
                             cauchy_product, derivative_shift, evaluate, read_records, write_records)

SMALL = Caps.uniform(3, 3)


def field(entries, caps=SMALL, mode=EXACT):
    return CoefficientField(entries, caps, mode)


indices = st.tuples(*(st.integers(0, 2),) * 4)
sparse_fields = st.dictionaries(indices, st.integers(-3, 3).map(Fraction), max_size=6).map(field)


def brute_convolution(a, b, caps):
    out = {}
    for idx in caps.indices():
        total = Fraction(0)
        for split in itertools.product(*(range(c + 1) for c in idx)):
            rest = tuple(i - s for i, s in zip(idx, split))
            total += a[split] * b[rest]
        if total:
            out[idx] = total
    return out


def test_identity_product_truncates():
    one = field({(0, 0, 0, 0): 1})
    b = field({(0, 1, 0, 0): 2, (3, 3, 3, 3): 5})
    small = Caps.uniform(1, 1)
    assert cauchy_product(one, b, small).entries == {MultiIndex(0, 1, 0, 0): 2}


def test_hand_expansion():
    a = field({(0, 0, 0, 0): 1, (0, 1, 0, 0): 1})
    b = field({(0, 0, 0, 0): 1, (0, 0, 1, 0): 1})
    got = cauchy_product(a, b).entries
    assert got == {MultiIndex(0, 0, 0, 0): 1, MultiIndex(0, 1, 0, 0): 1,
                   MultiIndex(0, 0, 1, 0): 1, MultiIndex(0, 1, 1, 0): 1}


@settings(max_examples=40, deadline=None)
@given(sparse_fields, sparse_fields)
def test_product_matches_brute_force(a, b):
    caps = Caps.uniform(4, 4)
    assert cauchy_product(a, b, caps).entries == brute_convolution(a, b, caps)


@settings(max_examples=40, deadline=None)
@given(sparse_fields, sparse_fields, sparse_fields)
def test_product_algebra(a, b, c):
    assert cauchy_product(a, b).entries == cauchy_product(b, a).entries
    assert cauchy_product(cauchy_product(a, b), c).entries == cauchy_product(a, cauchy_product(b, c)).entries
    assert cauchy_product(a, b + c).entries == (cauchy_product(a, b) + cauchy_product(a, c)).entries


def test_mode_mismatch():
    with pytest.raises(ModeMismatchError):
        cauchy_product(field({}), field({}, mode=FLOAT))


def test_derivative_examples():
    assert derivative_shift(field({(0, 2, 0, 0): 1}), "x").entries == {MultiIndex(0, 1, 0, 0): 2}
    assert derivative_shift(field({(0, 3, 0, 0): 1}), "x", 2).entries == {MultiIndex(0, 1, 0, 0): 6}
    with pytest.raises(ValueError):
        derivative_shift(field({}), "x", 0)


@settings(max_examples=40, deadline=None)
@given(sparse_fields, st.sampled_from("txyz"), st.sampled_from("txyz"))
def test_derivatives_commute_and_compose(a, u, v):
    assert derivative_shift(derivative_shift(a, u), v).entries == derivative_shift(derivative_shift(a, v), u).entries
    assert derivative_shift(derivative_shift(a, u), u).entries == derivative_shift(a, u, 2).entries


def test_evaluate():
    assert evaluate(field({}), (1, 2, 3, 4)) == 0
    assert evaluate(field({(0, 0, 0, 0): 1, (1, 0, 0, 0): 1}), (2, 0, 0, 0)) == 3


def test_truncated_exponential_tail():
    import math
    caps = Caps(12, 0, 0, 0)
    exp_t = field({(k, 0, 0, 0): Fraction(1, math.factorial(k)) for k in range(13)}, caps, FLOAT)
    err = abs(evaluate(exp_t, (0.5, 0, 0, 0)) - math.exp(0.5))
    assert err <= 2 * 0.5 ** 13 / math.factorial(13)


@settings(max_examples=40, deadline=None)
@given(sparse_fields, sparse_fields, st.tuples(*(st.fractions(-2, 2, max_denominator=5),) * 4))
def test_evaluate_is_multiplicative(a, b, point):
    big = Caps.uniform(6, 6)
    product = cauchy_product(a, b, big)
    assert evaluate(product, point) == evaluate(a, point) * evaluate(b, point)


def test_caps_reject_outside_and_negative():
    with pytest.raises(ValueError):
        field({(4, 0, 0, 0): 1})
    with pytest.raises(ValueError):
        Caps(-1, 0, 0, 0)
    assert field({(1, 0, 0, 0): 0}).entries == {}
    value, truncated = field({}).lookup((9, 0, 0, 0))
    assert value == 0 and truncated


def test_cone_caps():
    caps = Caps.cone(2, 10, 2)
    assert caps.contains((2, 2, 2, 2)) and not caps.contains((2, 3, 2, 2))
    assert caps.contains((0, 10, 0, 0))


@settings(max_examples=30, deadline=None)
@given(sparse_fields)
def test_records_round_trip(a):
    buffer = io.StringIO()
    write_records({"u1": a}, buffer)
    buffer.seek(0)
    assert read_records(buffer).get("u1", {}) == a.entries


def test_records_reject_malformed():
    with pytest.raises(ValueError):
        read_records(io.StringIO("u1 0 0 0 1\n"))
    with pytest.raises(ValueError):
        read_records(io.StringIO("w 0 0 0 0 1\n"))
