"""Signer/supervisor nonce co-generation.

The signer commits to ``T = t*G`` with ``h_T = SHA-256(encode(T))``, the
supervisor answers with a random ``u`` and the message, and the signer
signs with ``k = t*u mod n``.  The supervisor releases the signature only
if the commitment opens, ``r == x(u*T) mod n`` and the signature verifies.

The prearranged variant ships ``l`` commitments up front; each later
signature then needs a single request/response exchange.

Both parties are explicit state machines talking through :class:`Channel`,
which frames every message as bytes and records it in a
:class:`Transcript` that :func:`replay_transcript` can re-check offline.
"""

from __future__ import annotations

import enum
import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

from .curve import CurveParams, Point, decode_point, encode_point, scalar_mul
from .ecdsa import (
    KeyPair,
    RetryNonce,
    Signature,
    default_rng,
    random_scalar,
    sign,
    verify,
)
from .signer import MaliciousSigner, SignatureRecord, malicious_sign


class ProtocolError(RuntimeError):
    """A message arrived in the wrong phase or was malformed."""


class NonceAbort(ProtocolError):
    """The co-generated k gave r == 0 or s == 0; start a fresh run."""


class PrearrangementExhausted(ProtocolError):
    pass


class ProtocolCancelled(ProtocolError):
    def __init__(self, decision: "Decision"):
        super().__init__(f"protocol cancelled: {decision.value}")
        self.decision = decision


class Decision(enum.Enum):
    ACCEPT = "accept"
    COMMITMENT_MISMATCH = "commitment-mismatch"
    NONCE_MISMATCH = "nonce-mismatch"
    SIGNATURE_INVALID = "signature-invalid"

    def __bool__(self):
        return self is Decision.ACCEPT


def commit_point(T: Point, params: CurveParams) -> bytes:
    # unsalted on purpose: T carries the full entropy of t
    return hashlib.sha256(encode_point(T, params)).digest()


# -- messages ---------------------------------------------------------------


@dataclass(frozen=True)
class CommitMsg:
    h_T: bytes


@dataclass(frozen=True)
class ChallengeMsg:
    u: int
    m: bytes


@dataclass(frozen=True)
class RevealMsg:
    T: Point


@dataclass(frozen=True)
class SigMsg:
    sig: Signature


@dataclass(frozen=True)
class PrearrangeMsg:
    hashes: tuple


@dataclass(frozen=True)
class SignRequestMsg:
    m: bytes
    u: int


@dataclass(frozen=True)
class SigWithRevealMsg:
    sig: Signature
    T: Point


ProtocolMessage = Union[
    CommitMsg, ChallengeMsg, RevealMsg, SigMsg, PrearrangeMsg, SignRequestMsg, SigWithRevealMsg
]

_TAGS = {
    CommitMsg: 1,
    ChallengeMsg: 2,
    RevealMsg: 3,
    SigMsg: 4,
    PrearrangeMsg: 5,
    SignRequestMsg: 6,
    SigWithRevealMsg: 7,
}
_BY_TAG = {v: k for k, v in _TAGS.items()}


def _lp(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def _fields(msg, params: CurveParams) -> List[bytes]:
    w = params.scalar_bytes
    if isinstance(msg, CommitMsg):
        return [msg.h_T]
    if isinstance(msg, ChallengeMsg):
        return [msg.u.to_bytes(w, "big"), msg.m]
    if isinstance(msg, RevealMsg):
        return [encode_point(msg.T, params)]
    if isinstance(msg, SigMsg):
        return [msg.sig.to_bytes(params)]
    if isinstance(msg, PrearrangeMsg):
        return list(msg.hashes)
    if isinstance(msg, SignRequestMsg):
        return [msg.m, msg.u.to_bytes(w, "big")]
    if isinstance(msg, SigWithRevealMsg):
        return [msg.sig.to_bytes(params), encode_point(msg.T, params)]
    raise TypeError(f"not a protocol message: {msg!r}")


def encode_message(msg: ProtocolMessage, params: CurveParams) -> bytes:
    """``tag(1) | count(4) | (len(4) | bytes)*``"""
    parts = _fields(msg, params)
    return bytes([_TAGS[type(msg)]]) + len(parts).to_bytes(4, "big") + b"".join(map(_lp, parts))


def decode_message(frame: bytes, params: CurveParams) -> ProtocolMessage:
    try:
        cls = _BY_TAG[frame[0]]
        count = int.from_bytes(frame[1:5], "big")
        pos, parts = 5, []
        for _ in range(count):
            size = int.from_bytes(frame[pos : pos + 4], "big")
            pos += 4
            if pos + size > len(frame):
                raise ValueError("truncated field")
            parts.append(frame[pos : pos + size])
            pos += size
        if pos != len(frame):
            raise ValueError("trailing bytes")
        return _build(cls, parts, params)
    except (IndexError, KeyError, ValueError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from None


def _scalar(raw: bytes, params: CurveParams) -> int:
    if len(raw) != params.scalar_bytes:
        raise ValueError("bad scalar width")
    v = int.from_bytes(raw, "big")
    if not 0 < v < params.n:
        raise ValueError("scalar out of range")
    return v


def _build(cls, parts, params):
    if cls is CommitMsg:
        (h,) = parts
        if len(h) != 32:
            raise ValueError("commitment must be 32 bytes")
        return CommitMsg(h)
    if cls is ChallengeMsg:
        u, m = parts
        return ChallengeMsg(_scalar(u, params), m)
    if cls is RevealMsg:
        (T,) = parts
        return RevealMsg(decode_point(T, params))
    if cls is SigMsg:
        (s,) = parts
        return SigMsg(Signature.from_bytes(s, params))
    if cls is PrearrangeMsg:
        if any(len(h) != 32 for h in parts):
            raise ValueError("commitment must be 32 bytes")
        return PrearrangeMsg(tuple(parts))
    if cls is SignRequestMsg:
        m, u = parts
        return SignRequestMsg(m, _scalar(u, params))
    s, T = parts
    return SigWithRevealMsg(Signature.from_bytes(s, params), decode_point(T, params))


# -- transcript and channel -------------------------------------------------

TO_SUPERVISOR = "signer->supervisor"
TO_SIGNER = "supervisor->signer"


@dataclass
class TranscriptEntry:
    seq: int
    direction: str
    frame: bytes
    timestamp: float

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "direction": self.direction, "frame": self.frame.hex(),
             "time": self.timestamp},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "TranscriptEntry":
        obj = json.loads(line)
        return cls(int(obj["seq"]), obj["direction"], bytes.fromhex(obj["frame"]), float(obj["time"]))


@dataclass
class Transcript:
    entries: List[TranscriptEntry] = field(default_factory=list)

    def dumps(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        return cls([TranscriptEntry.from_json(l) for l in text.splitlines() if l.strip()])


class Channel:
    """Ordered, exactly-once, in-process link that logs every frame.

    The receiver gets the message decoded from the frame, so anything the
    peers rely on has survived the wire format.
    """

    def __init__(self, params: CurveParams, clock: Optional[Callable[[], float]] = None):
        self.params = params
        self.transcript = Transcript()
        self._clock = clock or time.time

    def send(self, direction: str, msg: ProtocolMessage) -> ProtocolMessage:
        frame = encode_message(msg, self.params)
        seq = len(self.transcript.entries)
        self.transcript.entries.append(TranscriptEntry(seq, direction, frame, self._clock()))
        return decode_message(frame, self.params)


# -- parties ----------------------------------------------------------------


class SignerSession:
    """The signing device.  Holds the private key and the pending/prearranged t values."""

    def __init__(self, keypair: KeyPair):
        self.keypair = keypair
        self.pending_t: Optional[int] = None
        self.choices: List[int] = []
        self.phase = "idle"

    def _nonce_signature(self, m: bytes, t: int, u: int, params: CurveParams) -> Signature:
        k = t * u % params.n
        try:
            return sign(m, self.keypair.d, k, params)
        except RetryNonce:
            raise NonceAbort("co-generated nonce unusable (r or s is zero); rerun") from None

    def commit(self, params: CurveParams, rng=None, t: Optional[int] = None) -> CommitMsg:
        if self.phase != "idle":
            raise ProtocolError(f"commit in phase {self.phase}")
        t = t if t is not None else random_scalar(rng or default_rng(), params)
        if not 0 < t < params.n:
            raise ProtocolError("t out of range")
        self.pending_t = t
        self.phase = "committed"
        return CommitMsg(commit_point(scalar_mul(t, params.G, params), params))

    def finish(self, challenge: ChallengeMsg, params: CurveParams):
        """Returns ``(RevealMsg, SigMsg)``."""
        if self.phase != "committed":
            raise ProtocolError(f"challenge in phase {self.phase}")
        t = self.pending_t
        self.pending_t = None
        self.phase = "idle"
        T = scalar_mul(t, params.G, params)
        sig = self._nonce_signature(challenge.m, t, challenge.u, params)
        return RevealMsg(T), SigMsg(sig)

    def prearrange(self, count: int, params: CurveParams, rng=None, choices=None) -> PrearrangeMsg:
        if count <= 0:
            raise ValueError("prearrangement needs at least one commitment")
        if self.choices or self.phase != "idle":
            raise ProtocolError("prearrangement requires a fresh session")
        if choices is None:
            rng = rng or default_rng()
            choices = [random_scalar(rng, params) for _ in range(count)]
        if len(choices) != count or not all(0 < t < params.n for t in choices):
            raise ProtocolError("bad prearranged choices")
        self.choices = list(choices)
        return PrearrangeMsg(
            tuple(commit_point(scalar_mul(t, params.G, params), params) for t in self.choices)
        )

    def answer(self, req: SignRequestMsg, params: CurveParams) -> SigWithRevealMsg:
        if not self.choices:
            raise PrearrangementExhausted("prearrangement exhausted")
        t = self.choices.pop(0)
        sig = self._nonce_signature(req.m, t, req.u, params)
        return SigWithRevealMsg(sig, scalar_mul(t, params.G, params))


class CheatingSigner(SignerSession):
    """Signer that ignores ``u`` and signs with kleptogram nonces.

    It still opens its commitments honestly; ``cheat_on`` limits cheating
    to the given 0-based signature numbers (None means always).
    """

    def __init__(self, malicious: MaliciousSigner, cheat_on=None, rng=None):
        super().__init__(malicious.keypair)
        self.malicious = malicious
        self.cheat_on = cheat_on
        self.rng = rng
        self.count = 0

    def _nonce_signature(self, m, t, u, params):
        n_sig = self.count
        self.count += 1
        if self.cheat_on is not None and n_sig not in self.cheat_on:
            return super()._nonce_signature(m, t, u, params)
        sig, self.malicious = malicious_sign(self.malicious, m, params, self.rng)
        return sig


def check_response(
    h_T: bytes, u: int, m: bytes, T: Point, sig: Signature, pubkey: Point, params: CurveParams
) -> Decision:
    """All supervisor checks, first failure wins.

    Running the standard verification on top of the two nonce checks is an
    addition: it is strictly stronger and costs two multiplications.
    """
    if commit_point(T, params) != h_T:
        return Decision.COMMITMENT_MISMATCH
    R = scalar_mul(u, T, params)
    if R.is_infinity or R.x % params.n != sig.r:
        return Decision.NONCE_MISMATCH
    if not verify(m, sig, pubkey, params):
        return Decision.SIGNATURE_INVALID
    return Decision.ACCEPT


class SupervisorSession:
    """The device between signer and outside world; it never sees the key."""

    def __init__(self, pubkey: Point):
        self.pubkey = pubkey
        self.pending: Optional[tuple] = None  # (h_T, u, m)
        self.hash_list: List[bytes] = []
        self.phase = "idle"
        self.poisoned = False
        self.released: List[SignatureRecord] = []

    def _release(self, m: bytes, sig: Signature) -> SignatureRecord:
        rec = SignatureRecord(len(self.released), m, sig, self.pubkey)
        self.released.append(rec)
        return rec

    def challenge(self, commit: CommitMsg, m: bytes, params: CurveParams, rng=None,
                  u: Optional[int] = None) -> ChallengeMsg:
        if self.phase != "idle":
            raise ProtocolError(f"commitment in phase {self.phase}")
        u = u if u is not None else random_scalar(rng or default_rng(), params)
        self.pending = (commit.h_T, u, m)
        self.phase = "challenged"
        return ChallengeMsg(u, m)

    def validate(self, reveal: RevealMsg, sigmsg: SigMsg, params: CurveParams) -> Decision:
        if self.phase != "challenged":
            raise ProtocolError(f"reveal in phase {self.phase}")
        h_T, u, m = self.pending
        self.pending = None
        self.phase = "idle"
        decision = check_response(h_T, u, m, reveal.T, sigmsg.sig, self.pubkey, params)
        if decision:
            self._release(m, sigmsg.sig)
        return decision

    def receive_prearrangement(self, msg: PrearrangeMsg) -> None:
        if self.hash_list or self.phase != "idle":
            raise ProtocolError("prearrangement requires a fresh session")
        self.hash_list = list(msg.hashes)

    def request(self, m: bytes, params: CurveParams, rng=None, u: Optional[int] = None) -> SignRequestMsg:
        if self.poisoned:
            raise ProtocolError("session cancelled earlier; alert the user")
        if not self.hash_list:
            raise PrearrangementExhausted("prearrangement exhausted")
        if self.phase != "idle":
            raise ProtocolError(f"request in phase {self.phase}")
        u = u if u is not None else random_scalar(rng or default_rng(), params)
        self.pending = (self.hash_list[0], u, m)
        self.phase = "requested"
        return SignRequestMsg(m, u)

    def check_answer(self, resp: SigWithRevealMsg, params: CurveParams) -> Decision:
        if self.phase != "requested":
            raise ProtocolError(f"answer in phase {self.phase}")
        h_T, u, m = self.pending
        self.pending = None
        self.phase = "idle"
        decision = check_response(h_T, u, m, resp.T, resp.sig, self.pubkey, params)
        if decision:
            self.hash_list.pop(0)
            self._release(m, resp.sig)
        else:
            self.poisoned = True
        return decision


# -- drivers ----------------------------------------------------------------


def run_interactive(
    signer: SignerSession,
    supervisor: SupervisorSession,
    m: bytes,
    params: CurveParams,
    rng=None,
    channel: Optional[Channel] = None,
) -> Decision:
    """One full interactive signature; the decision is returned, not raised."""
    rng = rng or default_rng()
    channel = channel or Channel(params)
    commit = channel.send(TO_SUPERVISOR, signer.commit(params, rng))
    challenge = channel.send(TO_SIGNER, supervisor.challenge(commit, m, params, rng))
    reveal, sigmsg = signer.finish(challenge, params)
    reveal = channel.send(TO_SUPERVISOR, reveal)
    sigmsg = channel.send(TO_SUPERVISOR, sigmsg)
    return supervisor.validate(reveal, sigmsg, params)


def run_prearrangement(
    signer: SignerSession,
    supervisor: SupervisorSession,
    count: int,
    params: CurveParams,
    rng=None,
    channel: Optional[Channel] = None,
) -> None:
    channel = channel or Channel(params)
    supervisor.receive_prearrangement(channel.send(TO_SUPERVISOR, signer.prearrange(count, params, rng)))


def sign_prearranged(
    signer: SignerSession,
    supervisor: SupervisorSession,
    m: bytes,
    params: CurveParams,
    rng=None,
    channel: Optional[Channel] = None,
) -> SignatureRecord:
    """Sign ``m`` with the next prearranged commitment.

    Raises PrearrangementExhausted when the lists are used up and
    ProtocolCancelled when the supervisor refuses the answer.
    """
    channel = channel or Channel(params)
    req = channel.send(TO_SIGNER, supervisor.request(m, params, rng))
    resp = channel.send(TO_SUPERVISOR, signer.answer(req, params))
    decision = supervisor.check_answer(resp, params)
    if not decision:
        raise ProtocolCancelled(decision)
    return supervisor.released[-1]


# -- offline replay ---------------------------------------------------------


def replay_transcript(transcript: Transcript, pubkey: Point, params: CurveParams) -> List[Decision]:
    """Re-run every supervisor check from a recorded transcript.

    Returns one decision per completed signature exchange, in order.  Raises
    ProtocolError if the messages are out of protocol order.
    """
    msgs = [(e.direction, decode_message(e.frame, params)) for e in transcript.entries]
    decisions = []
    hashes: List[bytes] = []
    i = 0

    def expect(cls, direction):
        nonlocal i
        if i >= len(msgs) or not isinstance(msgs[i][1], cls) or msgs[i][0] != direction:
            got = type(msgs[i][1]).__name__ if i < len(msgs) else "end of transcript"
            raise ProtocolError(f"entry {i}: expected {cls.__name__}, got {got}")
        i += 1
        return msgs[i - 1][1]

    while i < len(msgs):
        msg = msgs[i][1]
        if isinstance(msg, CommitMsg):
            commit = expect(CommitMsg, TO_SUPERVISOR)
            ch = expect(ChallengeMsg, TO_SIGNER)
            if i == len(msgs) or not isinstance(msgs[i][1], RevealMsg):
                continue  # signer aborted (NonceAbort); nothing was released
            reveal = expect(RevealMsg, TO_SUPERVISOR)
            sigmsg = expect(SigMsg, TO_SUPERVISOR)
            decisions.append(check_response(commit.h_T, ch.u, ch.m, reveal.T, sigmsg.sig, pubkey, params))
        elif isinstance(msg, PrearrangeMsg):
            hashes = list(expect(PrearrangeMsg, TO_SUPERVISOR).hashes)
        elif isinstance(msg, SignRequestMsg):
            req = expect(SignRequestMsg, TO_SIGNER)
            if not hashes:
                raise ProtocolError(f"entry {i - 1}: request after prearrangement exhausted")
            if i == len(msgs):
                break  # request never answered
            resp = expect(SigWithRevealMsg, TO_SUPERVISOR)
            decision = check_response(hashes[0], req.u, req.m, resp.T, resp.sig, pubkey, params)
            decisions.append(decision)
            if not decision:
                break
            hashes.pop(0)
        else:
            raise ProtocolError(f"entry {i}: unexpected {type(msg).__name__}")
    return decisions
