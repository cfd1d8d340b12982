"""Kleptographic backdoor for ECDSA nonces: attack, recovery and countermeasures."""

from .curve import INFINITY, SECP256K1, TOY, CurveParams, Point, registry_get, scalar_mul
from .ecdsa import KeyPair, Signature, keygen, sign, verify

__version__ = "0.1.0"

__all__ = [
    "INFINITY",
    "SECP256K1",
    "TOY",
    "CurveParams",
    "KeyPair",
    "Point",
    "Signature",
    "keygen",
    "registry_get",
    "scalar_mul",
    "sign",
    "verify",
]
