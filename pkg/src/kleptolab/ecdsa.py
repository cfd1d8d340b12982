"""Textbook ECDSA plus the two classical nonce attacks.

Signing and verification follow the plain algorithm with SHA-256 as the
message hash, reduced mod n.  No low-s normalisation is applied, so
``(r, n - s)`` verifies whenever ``(r, s)`` does.

Randomness is always passed in as an ``rng`` object exposing
``randrange`` and ``getrandbits`` (``secrets.SystemRandom()`` by default,
``random.Random(seed)`` for reproducible demos only).
"""

from __future__ import annotations

import enum
import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

from .curve import (
    CurveError,
    CurveParams,
    Point,
    inverse_mod,
    point_add,
    scalar_mul,
)


class ECDSAError(ValueError):
    pass


class RetryNonce(ECDSAError):
    """The supplied nonce produced r == 0 or s == 0; pick another one."""


class DegenerateRelation(ECDSAError):
    pass


def default_rng():
    return secrets.SystemRandom()


def random_scalar(rng, params: CurveParams) -> int:
    """Uniform integer in [1, n-1]."""
    return rng.randrange(1, params.n)


def hash_to_scalar(msg: bytes, params: CurveParams) -> int:
    return int.from_bytes(hashlib.sha256(msg).digest(), "big") % params.n


@dataclass(frozen=True)
class MessageDigest:
    m_bytes: bytes
    e: int

    @classmethod
    def of(cls, msg: bytes, params: CurveParams) -> "MessageDigest":
        return cls(bytes(msg), hash_to_scalar(msg, params))

    def hex(self) -> str:
        return hashlib.sha256(self.m_bytes).hexdigest()


@dataclass(frozen=True)
class KeyPair:
    d: int
    Q: Point

    @classmethod
    def from_private(cls, d: int, params: CurveParams) -> "KeyPair":
        if not 0 < d < params.n:
            raise ECDSAError("private key must lie in [1, n-1]")
        return cls(d, scalar_mul(d, params.G, params))


@dataclass(frozen=True)
class Signature:
    r: int
    s: int

    def to_bytes(self, params: CurveParams) -> bytes:
        w = params.scalar_bytes
        return self.r.to_bytes(w, "big") + self.s.to_bytes(w, "big")

    def hex(self, params: CurveParams) -> str:
        return self.to_bytes(params).hex()

    @classmethod
    def from_bytes(cls, raw: bytes, params: CurveParams) -> "Signature":
        w = params.scalar_bytes
        if len(raw) != 2 * w:
            raise ECDSAError(f"signature must be {2 * w} bytes, got {len(raw)}")
        return cls(int.from_bytes(raw[:w], "big"), int.from_bytes(raw[w:], "big"))


class Verdict(enum.Enum):
    ACCEPT = "accept"
    REJECT_MISMATCH = "reject: r does not match"
    REJECT_RANGE = "reject: r or s outside [1, n-1]"
    REJECT_MALFORMED = "reject: malformed signature encoding"
    REJECT_PUBKEY = "reject: invalid public key"

    def __bool__(self):
        return self is Verdict.ACCEPT


def keygen(params: CurveParams, rng=None) -> KeyPair:
    rng = rng or default_rng()
    return KeyPair.from_private(random_scalar(rng, params), params)


def sign_with_point(e: int, d: int, k: int, R: Point, params: CurveParams) -> Signature:
    """Finish a signature when ``R = k*G`` is already known."""
    n = params.n
    r = R.x % n
    if r == 0:
        raise RetryNonce("r == 0")
    s = inverse_mod(k, n) * (e + d * r) % n
    if s == 0:
        raise RetryNonce("s == 0")
    return Signature(r, s)


def sign(msg: bytes, d: int, k: int, params: CurveParams) -> Signature:
    """ECDSA signature of ``msg`` under private key ``d`` with nonce ``k``.

    Raises RetryNonce instead of looping, so the caller keeps control over
    how a replacement nonce is chosen.
    """
    n = params.n
    if not 0 < d < n:
        raise ECDSAError("private key must lie in [1, n-1]")
    if not 0 < k < n:
        raise ECDSAError("nonce must lie in [1, n-1]")
    R = scalar_mul(k, params.G, params)
    return sign_with_point(hash_to_scalar(msg, params), d, k, R, params)


@lru_cache(maxsize=1 << 16)
def _nonce_point(e: int, r: int, s: int, Q: Point, params: CurveParams) -> Point:
    w = inverse_mod(s, params.n)
    return point_add(
        scalar_mul(e * w % params.n, params.G, params),
        scalar_mul(r * w % params.n, Q, params),
        params,
    )


def _check_pubkey(Q: Point, params: CurveParams) -> bool:
    return not Q.is_infinity and params.is_on_curve(Q)


def verify(msg: bytes, sig: Union[Signature, bytes], Q: Point, params: CurveParams) -> Verdict:
    """Check ``sig`` on ``msg`` against public key ``Q``.

    ``sig`` may also be the raw ``r || s`` encoding; encodings of the wrong
    length are rejected with REJECT_MALFORMED.
    """
    if not isinstance(sig, Signature):
        try:
            sig = Signature.from_bytes(sig, params)
        except ECDSAError:
            return Verdict.REJECT_MALFORMED
    if not _check_pubkey(Q, params):
        return Verdict.REJECT_PUBKEY
    n = params.n
    if not (0 < sig.r < n and 0 < sig.s < n):
        return Verdict.REJECT_RANGE
    R = _nonce_point(hash_to_scalar(msg, params), sig.r, sig.s, Q, params)
    if R.is_infinity or R.x % n != sig.r:
        return Verdict.REJECT_MISMATCH
    return Verdict.ACCEPT


def reconstruct_nonce_point(msg: bytes, sig: Signature, Q: Point, params: CurveParams) -> Point:
    """Recover the full point ``k*G`` behind a valid signature.

    This is the point the verifier rebuilds, ``s^-1*e*G + s^-1*r*Q``.
    For a signature made with nonce ``k`` it equals ``k*G`` exactly (the
    malleated twin ``(r, n-s)`` yields ``-k*G``).
    """
    verdict = verify(msg, sig, Q, params)
    if not verdict:
        raise ECDSAError(f"cannot reconstruct nonce point: {verdict.value}")
    return _nonce_point(hash_to_scalar(msg, params), sig.r, sig.s, Q, params)


def derive_deterministic_nonce(d: int, msg: bytes, params: CurveParams) -> int:
    """Nonce as a pure function of (key, message, curve).

    Rejection sampling over SHA-256(d || SHA-256(msg) || counter), taking the
    top bit_length(n) bits of each block.  Not RFC 6979.
    """
    if not 0 < d < params.n:
        raise ECDSAError("private key must lie in [1, n-1]")
    prefix = d.to_bytes(params.scalar_bytes, "big") + hashlib.sha256(msg).digest()
    return sample_scalar(prefix, params)


def sample_scalar(prefix: bytes, params: CurveParams) -> int:
    """Map ``prefix`` to [1, n-1] by hashing with a counter until in range."""
    n = params.n
    shift = 256 - n.bit_length()
    if shift < 0:
        raise CurveError("group order wider than SHA-256 output")
    counter = 0
    while True:
        block = hashlib.sha256(prefix + counter.to_bytes(4, "big")).digest()
        k = int.from_bytes(block, "big") >> shift
        if 0 < k < n:
            return k
        counter += 1


def sign_deterministic(msg: bytes, d: int, params: CurveParams) -> Signature:
    return sign(msg, d, derive_deterministic_nonce(d, msg, params), params)


def extract_key_from_known_nonce(msg: bytes, sig: Signature, k: int, params: CurveParams) -> int:
    """Private key from one signature and its nonce.

    From ``s = k^-1 (e + d r)`` we get ``d = (s k - e) r^-1 mod n``.
    """
    n = params.n
    if sig.r % n == 0:
        raise ECDSAError("r == 0 is not invertible")
    e = hash_to_scalar(msg, params)
    return (sig.s * k - e) * inverse_mod(sig.r, n) % n


def extract_key_from_linear_relation(
    msg1: bytes,
    sig1: Signature,
    msg2: bytes,
    sig2: Signature,
    a: int,
    b: int,
    params: CurveParams,
) -> tuple:
    """Solve for ``(d, k1)`` when the nonces satisfy ``k2 = a*k1 + b``.

    Eliminating k1 from ``s1 k1 = e1 + d r1`` and ``s2 (a k1 + b) = e2 + d r2``:

        d (a s2 r1 - s1 r2) = s1 e2 - a s2 e1 - s1 s2 b
    """
    n = params.n
    a %= n
    b %= n
    if a == 0:
        raise DegenerateRelation("degenerate relation: a == 0")
    e1 = hash_to_scalar(msg1, params)
    e2 = hash_to_scalar(msg2, params)
    r1, s1, r2, s2 = sig1.r, sig1.s, sig2.r, sig2.s
    denom = (a * s2 * r1 - s1 * r2) % n
    if denom == 0:
        raise DegenerateRelation("degenerate relation: singular system")
    d = (s1 * e2 - a * s2 * e1 - s1 * s2 * b) * inverse_mod(denom, n) % n
    k1 = (e1 + d * r1) * inverse_mod(s1, n) % n
    return d, k1


def signature_from_hex(text: str, params: CurveParams) -> Signature:
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise ECDSAError(f"bad signature hex: {exc}") from None
    return Signature.from_bytes(raw, params)

