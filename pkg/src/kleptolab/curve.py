"""Short-Weierstrass curve arithmetic in affine coordinates.

Points are immutable :class:`Point` values; the point at infinity is the
module constant :data:`INFINITY`.  Scalars are plain Python ints reduced
modulo the group order ``n``.

Nothing here is constant time.  This is an attack laboratory, not a
production signer: timings leak scalars.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from gmpy2 import invert as _invert, mpz


def inverse_mod(a: int, m: int) -> int:
    """Modular inverse; raises ZeroDivisionError when ``a`` is not invertible."""
    return int(_invert(a, m))


class CurveError(ValueError):
    """Raised for off-curve points, bad encodings and unknown curves."""


@dataclass(frozen=True)
class Point:
    x: Optional[int]
    y: Optional[int]

    @property
    def is_infinity(self) -> bool:
        return self.x is None

    def __repr__(self):
        if self.is_infinity:
            return "Point(INFINITY)"
        return f"Point(x={self.x:#x}, y={self.y:#x})"


INFINITY = Point(None, None)


@dataclass(frozen=True)
class CurveParams:
    """Domain parameters of ``y^2 = x^3 + a*x + b`` over GF(p).

    ``G`` generates a subgroup of prime order ``n``; ``h`` is the cofactor.
    """

    name: str
    p: int
    a: int
    b: int
    G: Point
    n: int
    h: int = 1

    @property
    def field_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_bytes(self) -> int:
        return (self.n.bit_length() + 7) // 8

    def is_on_curve(self, P: Point) -> bool:
        if P.is_infinity:
            return True
        x, y = P.x, P.y
        if not (0 <= x < self.p and 0 <= y < self.p):
            return False
        return (y * y - x * x * x - self.a * x - self.b) % self.p == 0

    def validate(self) -> None:
        """Check the structural invariants; raises CurveError on failure."""
        if (4 * self.a**3 + 27 * self.b**2) % self.p == 0:
            raise CurveError(f"{self.name}: singular curve")
        if self.G.is_infinity or not self.is_on_curve(self.G):
            raise CurveError(f"{self.name}: generator not on curve")
        if not scalar_mul(self.n, self.G, self).is_infinity:
            raise CurveError(f"{self.name}: n*G != infinity")
        if not _probably_prime(self.n):
            raise CurveError(f"{self.name}: group order is not prime")


def _probably_prime(m: int) -> bool:
    if m < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if m % q == 0:
            return m == q
    d, s = m - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    # fixed bases: deterministic for m < 3.3e24, overwhelming beyond
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, m)
        if x in (1, m - 1):
            continue
        for _ in range(s - 1):
            x = x * x % m
            if x == m - 1:
                break
        else:
            return False
    return True


def _check(P: Point, params: CurveParams) -> None:
    if not params.is_on_curve(P):
        raise CurveError(f"point not on curve {params.name}: {P!r}")


def point_neg(P: Point, params: CurveParams) -> Point:
    if P.is_infinity:
        return P
    return Point(P.x, (-P.y) % params.p)


def _add(P: Point, Q: Point, params: CurveParams) -> Point:
    # unchecked group law; callers validate inputs once
    if P.is_infinity:
        return Q
    if Q.is_infinity:
        return P
    p = params.p
    if P.x == Q.x:
        if (P.y + Q.y) % p == 0:
            return INFINITY
        lam = (3 * P.x * P.x + params.a) * inverse_mod(2 * P.y, p) % p
    else:
        lam = (Q.y - P.y) * inverse_mod(Q.x - P.x, p) % p
    x3 = (lam * lam - P.x - Q.x) % p
    y3 = (lam * (P.x - x3) - P.y) % p
    return Point(x3, y3)


def point_add(P: Point, Q: Point, params: CurveParams) -> Point:
    """Group sum ``P + Q``."""
    _check(P, params)
    _check(Q, params)
    return _add(P, Q, params)


def point_sub(P: Point, Q: Point, params: CurveParams) -> Point:
    return point_add(P, point_neg(Q, params), params)


def _mul_raw(k: int, x: int, y: int, p: int, a: int):
    # double-and-add on bare (x, y) tuples of mpz; None is infinity
    x, y, p, a = mpz(x), mpz(y), mpz(p), mpz(a)
    R = None
    for bit in bin(k)[2:]:
        if R is not None:
            x1, y1 = R
            if y1 == 0:
                R = None
            else:
                lam = (3 * x1 * x1 + a) * _invert(2 * y1, p) % p
                x3 = (lam * lam - 2 * x1) % p
                R = (x3, (lam * (x1 - x3) - y1) % p)
        if bit == "1":
            if R is None:
                R = (x, y)
            else:
                x1, y1 = R
                if x1 == x:
                    if (y1 + y) % p == 0:
                        R = None
                        continue
                    lam = (3 * x * x + a) * _invert(2 * y, p) % p
                else:
                    lam = (y - y1) * _invert(x - x1, p) % p
                x3 = (lam * lam - x1 - x) % p
                R = (x3, (lam * (x1 - x3) - y1) % p)
    return R


def scalar_mul(k: int, P: Point, params: CurveParams) -> Point:
    """``k * P`` by left-to-right double-and-add.

    Negative ``k`` multiplies ``-P``.  For points of the prime-order
    subgroup the result only depends on ``k mod n``.
    """
    _check(P, params)
    if P.is_infinity or k == 0:
        return INFINITY
    if k < 0:
        k = -k
        P = point_neg(P, params)
    R = _mul_raw(k, P.x, P.y, params.p, params.a)
    return INFINITY if R is None else Point(int(R[0]), int(R[1]))


@lru_cache(maxsize=256)
def generator_multiple(k: int, params: CurveParams) -> Point:
    """Cached ``k*G`` for small sets of fixed scalars (setup constants)."""
    return scalar_mul(k, params.G, params)


def double_scalar_mul(k1: int, P1: Point, k2: int, P2: Point, params: CurveParams) -> Point:
    """``k1*P1 + k2*P2``."""
    return point_add(scalar_mul(k1, P1, params), scalar_mul(k2, P2, params), params)


def point_order(P: Point, params: CurveParams) -> int:
    """Order of ``P`` inside the prime-order subgroup: 1 for infinity, else n."""
    _check(P, params)
    if P.is_infinity:
        return 1
    if not scalar_mul(params.n, P, params).is_infinity:
        raise CurveError("point is outside the prime-order subgroup")
    return params.n


# -- encoding ---------------------------------------------------------------


def encode_point(P: Point, params: CurveParams) -> bytes:
    """SEC1 compressed encoding: 02/03 parity byte then big-endian x."""
    if P.is_infinity:
        raise CurveError("cannot encode identity")
    _check(P, params)
    return bytes([2 + (P.y & 1)]) + P.x.to_bytes(params.field_bytes, "big")


def _sqrt_mod(v: int, p: int) -> Optional[int]:
    v %= p
    if v == 0:
        return 0
    if pow(v, (p - 1) // 2, p) != 1:
        return None
    if p % 4 == 3:
        return pow(v, (p + 1) // 4, p)
    # Tonelli-Shanks
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c, t, r = s, pow(z, q, p), pow(v, q, p), pow(v, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c, t, r = i, b * b % p, t * b * b % p, r * b % p
    return r


def decode_point(data: bytes, params: CurveParams) -> Point:
    if len(data) != 1 + params.field_bytes or data[0] not in (2, 3):
        raise CurveError("malformed compressed point")
    x = int.from_bytes(data[1:], "big")
    if x >= params.p:
        raise CurveError("x coordinate out of range")
    y = _sqrt_mod(x * x * x + params.a * x + params.b, params.p)
    if y is None:
        raise CurveError("x coordinate not on curve")
    if (y & 1) != (data[0] & 1):
        y = (-y) % params.p
    P = Point(x, y)
    _check(P, params)
    return P


def point_to_hex(P: Point, params: CurveParams) -> str:
    return encode_point(P, params).hex()


def point_from_hex(text: str, params: CurveParams) -> Point:
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise CurveError(f"bad point hex: {exc}") from None
    return decode_point(raw, params)


def scalar_to_hex(k: int, params: CurveParams) -> str:
    return (k % params.n).to_bytes(params.scalar_bytes, "big").hex()


def scalar_from_hex(text: str, params: CurveParams) -> int:
    if len(text) != 2 * params.scalar_bytes:
        raise CurveError(f"scalar hex must be {2 * params.scalar_bytes} chars")
    k = int(text, 16)
    if k >= params.n:
        raise CurveError("scalar out of range")
    return k


# -- registry ---------------------------------------------------------------

SECP256K1 = CurveParams(
    name="secp256k1",
    p=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F,
    a=0,
    b=7,
    G=Point(
        0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
        0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
    ),
    n=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141,
    h=1,
)

# Produced by scripts/derive_toy_curve.py: y^2 = x^3 + 7 over GF(349) has
# prime order 313 and no point with x = 0 mod 313 (so r is never zero).
TOY = CurveParams(name="toy", p=349, a=0, b=7, G=Point(2, 109), n=313, h=1)

_REGISTRY = {c.name: c for c in (SECP256K1, TOY)}


def registry_get(name: str) -> CurveParams:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise CurveError(f"unknown curve {name!r}; known: {sorted(_REGISTRY)}") from None


def curve_names() -> list:
    return sorted(_REGISTRY)
