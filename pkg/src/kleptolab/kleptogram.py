"""Two-round covert nonce generation and the attacker's recovery.

The malicious implementation emits a fresh random ``c1`` in round one and
stores it.  In round two it derives ``c2`` from

    Z = (c1 - omega*t)*G + (-alpha*c1 - beta)*Q_A

through a seeded hash, where ``Q_A`` is the attacker's public key and ``t``
a random bit.  Whoever holds ``d_A`` rebuilds ``Z`` from the two published
nonce points ``M1 = c1*G`` and ``M2 = c2*G``:

    R  = alpha*M1 + beta*G
    Z1 = M1 - d_A*R            (t = 0)
    Z2 = Z1 - omega*G          (t = 1)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

from .curve import (
    INFINITY,
    CurveParams,
    Point,
    encode_point,
    generator_multiple,
    point_add,
    point_from_hex,
    point_order,
    point_sub,
    point_to_hex,
    scalar_from_hex,
    scalar_mul,
    scalar_to_hex,
)
from .ecdsa import default_rng, random_scalar, sample_scalar

DEFAULT_MAX_RETRY = 15


class KleptoError(RuntimeError):
    pass


class PhaseError(KleptoError):
    pass


@dataclass(frozen=True)
class SetupParams:
    """Constants baked into the malicious implementation.

    ``prng_seed`` is shared between implementation and attacker; ``d_A``
    never appears here.
    """

    alpha: int
    beta: int
    omega: int
    attacker_pub: Point
    prng_seed: bytes

    def __post_init__(self):
        if self.omega % 2 == 0:
            raise ValueError("omega must be odd")

    def to_dict(self, params: CurveParams) -> dict:
        return {
            "curve": params.name,
            "alpha": scalar_to_hex(self.alpha, params),
            "beta": scalar_to_hex(self.beta, params),
            "omega": scalar_to_hex(self.omega, params),
            "attacker_pub": point_to_hex(self.attacker_pub, params),
            "prng_seed": self.prng_seed.hex(),
        }

    @classmethod
    def from_dict(cls, data: dict, params: CurveParams) -> "SetupParams":
        if data.get("curve", params.name) != params.name:
            raise ValueError(f"setup is for curve {data['curve']}, not {params.name}")
        return cls(
            alpha=scalar_from_hex(data["alpha"], params),
            beta=scalar_from_hex(data["beta"], params),
            omega=scalar_from_hex(data["omega"], params),
            attacker_pub=point_from_hex(data["attacker_pub"], params),
            prng_seed=bytes.fromhex(data["prng_seed"]),
        )

    def dumps(self, params: CurveParams) -> str:
        return json.dumps(self.to_dict(params), indent=2)

    @classmethod
    def loads(cls, text: str, params: CurveParams) -> "SetupParams":
        return cls.from_dict(json.loads(text), params)


def make_setup(
    attacker_pub: Point,
    params: CurveParams,
    rng=None,
    alpha: int = 1,
    beta: int = 1,
    omega: int = 1,
    seed: Optional[bytes] = None,
) -> SetupParams:
    rng = rng or default_rng()
    if seed is None:
        seed = rng.getrandbits(256).to_bytes(32, "big")
    return SetupParams(alpha, beta, omega, attacker_pub, seed)


@dataclass(frozen=True)
class KleptoState:
    """Round bookkeeping of one malicious signer; ``c1`` set means round two is due."""

    setup: SetupParams
    c1: Optional[int] = None

    @property
    def phase(self) -> str:
        return "round1" if self.c1 is None else "round2"


@dataclass(frozen=True)
class KleptoCandidate:
    Z: Point
    t: int
    retry: int
    c: int


def prng_R(Z: Point, seed: bytes, retry: int, params: CurveParams) -> int:
    """Seeded hash of a curve point into [1, n-1]."""
    if Z.is_infinity:
        raise KleptoError("degenerate kleptogram point")
    return sample_scalar(seed + encode_point(Z, params) + retry.to_bytes(4, "big"), params)


def klepto_round1(state: KleptoState, params: CurveParams, rng=None):
    """Returns ``(c1, M1, state')``."""
    if state.c1 is not None:
        raise PhaseError("round 1 requested while round 2 is pending")
    rng = rng or default_rng()
    c1 = random_scalar(rng, params)
    return c1, scalar_mul(c1, params.G, params), replace(state, c1=c1)


def klepto_point(c1: int, t: int, setup: SetupParams, params: CurveParams) -> Point:
    n = params.n
    return point_add(
        scalar_mul((c1 - setup.omega * t) % n, params.G, params),
        scalar_mul((-setup.alpha * c1 - setup.beta) % n, setup.attacker_pub, params),
        params,
    )


def klepto_round2(state: KleptoState, params: CurveParams, rng=None):
    """Returns ``(candidate, M2, state')``; ``candidate.c`` is the nonce c2.

    If ``Z`` is the identity for the drawn bit the other bit is tried; both
    degenerate is only reachable on tiny curves and raises KleptoError.
    """
    if state.c1 is None:
        raise PhaseError("round 2 requested before round 1")
    rng = rng or default_rng()
    setup = state.setup
    t = rng.getrandbits(1)
    Z = klepto_point(state.c1, t, setup, params)
    if Z.is_infinity:
        t ^= 1
        Z = klepto_point(state.c1, t, setup, params)
        if Z.is_infinity:
            raise KleptoError("both kleptogram points are the identity")
    cand = KleptoCandidate(Z, t, 0, prng_R(Z, setup.prng_seed, 0, params))
    return cand, scalar_mul(cand.c, params.G, params), replace(state, c1=None)


def klepto_rederive(cand: KleptoCandidate, setup: SetupParams, params: CurveParams):
    """Next nonce for the same ``Z`` after a downstream r == 0 / s == 0."""
    retry = cand.retry + 1
    nxt = KleptoCandidate(cand.Z, cand.t, retry, prng_R(cand.Z, setup.prng_seed, retry, params))
    return nxt, scalar_mul(nxt.c, params.G, params)


def recovery_points(M1: Point, d_A: int, alpha: int, beta: int, omega: int, params: CurveParams):
    """The two candidate kleptogram points ``(Z1, Z2)`` for t = 0 and t = 1."""
    R = point_add(scalar_mul(alpha, M1, params), generator_multiple(beta, params), params)
    Z1 = point_sub(M1, scalar_mul(d_A, R, params), params)
    Z2 = point_sub(Z1, generator_multiple(omega, params), params)
    return Z1, Z2


def klepto_recover(
    M1: Point,
    M2: Point,
    d_A: int,
    alpha: int,
    beta: int,
    omega: int,
    seed: bytes,
    params: CurveParams,
    max_retry: int = DEFAULT_MAX_RETRY,
) -> Optional[int]:
    """Return the round-two nonce behind ``M2`` or None if the pair is not ours."""
    if M2.is_infinity:
        return None
    for Z in recovery_points(M1, d_A, alpha, beta, omega, params):
        if Z.is_infinity:
            continue
        for retry in range(max_retry + 1):
            c = prng_R(Z, seed, retry, params)
            if scalar_mul(c, params.G, params) == M2:
                return c
    return None


@dataclass(frozen=True)
class StrengthReport:
    orders: dict  # "G1" / "G2" / "G3" -> order
    n: int

    @property
    def degenerate(self) -> list:
        return sorted(name for name, order in self.orders.items() if order != self.n)

    @property
    def ok(self) -> bool:
        return not self.degenerate


def check_setup_strength(setup: SetupParams, d_A: int, params: CurveParams) -> StrengthReport:
    """Orders of the three points governing how many values ``Z`` can take."""
    n = params.n
    scalars = {
        "G1": (-d_A * setup.beta - setup.omega) % n,
        "G2": (-d_A * setup.beta) % n,
        "G3": (1 - d_A * setup.alpha) % n,
    }
    orders = {
        name: point_order(scalar_mul(k, params.G, params) if k else INFINITY, params)
        for name, k in scalars.items()
    }
    return StrengthReport(orders, n)
