import random

import pytest
from hypothesis import given, settings, strategies as st

from kleptolab.curve import (
    INFINITY,
    SECP256K1,
    TOY,
    CurveError,
    CurveParams,
    Point,
    curve_names,
    decode_point,
    double_scalar_mul,
    encode_point,
    point_add,
    point_from_hex,
    point_neg,
    point_order,
    point_sub,
    point_to_hex,
    registry_get,
    scalar_from_hex,
    scalar_mul,
    scalar_to_hex,
)
from oracle import enumerate_points, oracle_add, oracle_multiples

TOY_POINTS = [Point(x, y) for x, y in enumerate_points(TOY.p, TOY.a, TOY.b)]


def _tup(P):
    return None if P.is_infinity else (P.x, P.y)


def test_toy_group_has_prime_order_and_is_cyclic():
    # affine points plus the identity
    assert len(TOY_POINTS) + 1 == TOY.n
    assert TOY.n * TOY.h == len(TOY_POINTS) + 1
    TOY.validate()
    SECP256K1.validate()


def test_toy_no_point_has_x_divisible_by_n():
    assert all(P.x % TOY.n for P in TOY_POINTS)


def test_identity_and_inverse():
    for P in TOY_POINTS[:50]:
        assert point_add(P, INFINITY, TOY) == P
        assert point_add(INFINITY, P, TOY) == P
        assert point_add(P, point_neg(P, TOY), TOY) == INFINITY
        assert point_sub(P, P, TOY) == INFINITY
    assert point_neg(INFINITY, TOY) == INFINITY


def test_addition_table_matches_complete_formula_oracle():
    pts = [INFINITY] + TOY_POINTS
    for P in pts:
        for Q in pts:
            assert _tup(point_add(P, Q, TOY)) == oracle_add(_tup(P), _tup(Q), TOY.p, TOY.b)


def test_scalar_mul_exhaustive_against_repeated_addition():
    mults = oracle_multiples(_tup(TOY.G), TOY.n + 1, TOY.p, TOY.b)
    assert mults[TOY.n] is None
    for k in range(TOY.n + 1):
        assert _tup(scalar_mul(k, TOY.G, TOY)) == mults[k]


def test_scalar_mul_negative_and_reduced():
    P = TOY_POINTS[7]
    assert scalar_mul(-1, P, TOY) == point_neg(P, TOY)
    assert scalar_mul(5 + 3 * TOY.n, P, TOY) == scalar_mul(5, P, TOY)
    assert scalar_mul(0, P, TOY) == INFINITY
    assert scalar_mul(12, INFINITY, TOY) == INFINITY


def test_off_curve_point_rejected():
    with pytest.raises(CurveError):
        point_add(Point(1, 1), TOY.G, TOY)
    with pytest.raises(CurveError):
        scalar_mul(3, Point(1, 1), TOY)


def test_point_order():
    assert point_order(INFINITY, TOY) == 1
    for P in TOY_POINTS:
        assert point_order(P, TOY) == TOY.n
    assert point_order(SECP256K1.G, SECP256K1) == SECP256K1.n


def test_secp256k1_known_multiples():
    two_g = scalar_mul(2, SECP256K1.G, SECP256K1)
    assert two_g.x == 0xC6047F9441ED7D6D3045406E95C07CD85C778E4B8CEF3CA7ABAC09B95C709EE5
    assert two_g.y == 0x1AE168FEA63DC339A3C58419466CEAEEF7F632653266D0E1236431A950CFE52A
    assert scalar_mul(SECP256K1.n - 1, SECP256K1.G, SECP256K1) == point_neg(SECP256K1.G, SECP256K1)
    assert scalar_mul(SECP256K1.n, SECP256K1.G, SECP256K1) == INFINITY


def test_linearity_property_secp256k1():
    rng = random.Random(1)
    n, G = SECP256K1.n, SECP256K1.G
    # full 10^4 trials are exercised on the toy curve below; keep secp quick
    for _ in range(200):
        a, b = rng.randrange(n), rng.randrange(n)
        lhs = scalar_mul((a + b) % n, G, SECP256K1)
        rhs = point_add(scalar_mul(a, G, SECP256K1), scalar_mul(b, G, SECP256K1), SECP256K1)
        assert lhs == rhs


def test_linearity_property_toy_10k():
    rng = random.Random(2)
    for _ in range(10_000):
        a, b = rng.randrange(TOY.n), rng.randrange(TOY.n)
        P = rng.choice(TOY_POINTS)
        assert scalar_mul(a + b, P, TOY) == point_add(scalar_mul(a, P, TOY), scalar_mul(b, P, TOY), TOY)


def test_double_scalar_mul():
    P = TOY_POINTS[3]
    for k1, k2 in [(0, 0), (1, 0), (5, 7), (TOY.n - 1, 2)]:
        expect = point_add(scalar_mul(k1, TOY.G, TOY), scalar_mul(k2, P, TOY), TOY)
        assert double_scalar_mul(k1, TOY.G, k2, P, TOY) == expect


def test_encoding_fixed_vectors():
    assert point_to_hex(SECP256K1.G, SECP256K1) == (
        "0279be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798"
    )
    # y = 109 is odd, x = 2 in two bytes
    assert encode_point(TOY.G, TOY).hex() == "030002"


def test_encoding_roundtrip_exhaustive_toy():
    for P in TOY_POINTS:
        raw = encode_point(P, TOY)
        assert len(raw) == 1 + TOY.field_bytes
        assert decode_point(raw, TOY) == P


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=SECP256K1.n - 1))
def test_encoding_roundtrip_secp256k1(k):
    P = scalar_mul(k, SECP256K1.G, SECP256K1)
    assert point_from_hex(point_to_hex(P, SECP256K1), SECP256K1) == P


def test_encoding_errors():
    with pytest.raises(CurveError):
        encode_point(INFINITY, TOY)
    with pytest.raises(CurveError):
        decode_point(b"\x04\x00\x02", TOY)
    with pytest.raises(CurveError):
        decode_point(b"\x02\x00", TOY)
    # an x with no matching y
    xs = {P.x for P in TOY_POINTS}
    bad_x = next(x for x in range(TOY.p) if x not in xs)
    with pytest.raises(CurveError):
        decode_point(b"\x02" + bad_x.to_bytes(2, "big"), TOY)
    with pytest.raises(CurveError):
        decode_point(b"\x02" + TOY.p.to_bytes(2, "big"), TOY)


def test_scalar_hex():
    assert scalar_to_hex(1, SECP256K1) == "00" * 31 + "01"
    assert scalar_from_hex(scalar_to_hex(312, TOY), TOY) == 312
    with pytest.raises(CurveError):
        scalar_from_hex("0139", TOY)  # 313 == n
    with pytest.raises(CurveError):
        scalar_from_hex("01", TOY)


def test_registry():
    assert registry_get("secp256k1") is SECP256K1
    assert registry_get("toy") is TOY
    assert curve_names() == ["secp256k1", "toy"]
    with pytest.raises(CurveError):
        registry_get("p256")


def test_validate_rejects_bad_params():
    with pytest.raises(CurveError):
        CurveParams("bad", 349, 0, 7, Point(2, 109), 312).validate()
    with pytest.raises(CurveError):
        CurveParams("bad", 349, 0, 7, Point(2, 1), 313).validate()
