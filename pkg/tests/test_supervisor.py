import random

import pytest
from hypothesis import given, settings, strategies as st

from kleptolab.curve import SECP256K1, TOY, scalar_mul
from kleptolab.ecdsa import KeyPair, Signature, hash_to_scalar, keygen, verify
from kleptolab.kleptogram import make_setup
from kleptolab.signer import MaliciousSigner, attacker_recover_privkey
from kleptolab.supervisor import (
    TO_SIGNER,
    TO_SUPERVISOR,
    Channel,
    ChallengeMsg,
    CheatingSigner,
    CommitMsg,
    Decision,
    NonceAbort,
    PrearrangeMsg,
    PrearrangementExhausted,
    ProtocolCancelled,
    ProtocolError,
    RevealMsg,
    SignerSession,
    SigMsg,
    SignRequestMsg,
    SigWithRevealMsg,
    SupervisorSession,
    Transcript,
    check_response,
    commit_point,
    decode_message,
    encode_message,
    replay_transcript,
    run_interactive,
    run_prearrangement,
    sign_prearranged,
)

scalars = st.integers(min_value=1, max_value=SECP256K1.n - 1)
digests = st.binary(min_size=32, max_size=32)


def _point(k):
    return scalar_mul(k, SECP256K1.G, SECP256K1)


messages = st.one_of(
    st.builds(CommitMsg, digests),
    st.builds(ChallengeMsg, scalars, st.binary(max_size=64)),
    st.builds(RevealMsg, scalars.map(_point)),
    st.builds(SigMsg, st.builds(Signature, scalars, scalars)),
    st.builds(PrearrangeMsg, st.lists(digests, min_size=1, max_size=4).map(tuple)),
    st.builds(SignRequestMsg, st.binary(max_size=64), scalars),
    st.builds(SigWithRevealMsg, st.builds(Signature, scalars, scalars), scalars.map(_point)),
)


@settings(max_examples=100, deadline=None)
@given(messages)
def test_framing_roundtrip(msg):
    frame = encode_message(msg, SECP256K1)
    assert decode_message(frame, SECP256K1) == msg


@settings(max_examples=100, deadline=None)
@given(messages, st.data())
def test_truncated_frames_rejected(msg, data):
    frame = encode_message(msg, SECP256K1)
    cut = data.draw(st.integers(min_value=0, max_value=len(frame) - 1))
    with pytest.raises(ProtocolError):
        decode_message(frame[:cut], SECP256K1)


def test_malformed_frames():
    good = encode_message(CommitMsg(bytes(32)), SECP256K1)
    for bad in (b"", b"\x09" + good[1:], good + b"\x00", encode_message(CommitMsg(bytes(31)), SECP256K1)):
        with pytest.raises(ProtocolError):
            decode_message(bad, SECP256K1)
    # u = 0 is out of range
    frame = b"\x02" + (2).to_bytes(4, "big") + (32).to_bytes(4, "big") + bytes(32) + bytes(4)
    with pytest.raises(ProtocolError):
        decode_message(frame, SECP256K1)
    with pytest.raises(TypeError):
        encode_message("hello", SECP256K1)


def test_interactive_accept_and_replay(rng):
    kp = keygen(SECP256K1, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    ch = Channel(SECP256K1, clock=lambda: 0.0)
    for i in range(3):
        assert run_interactive(signer, sup, f"m{i}".encode(), SECP256K1, rng, ch) is Decision.ACCEPT
    assert len(sup.released) == 3
    assert all(rec.verifies(SECP256K1) for rec in sup.released)
    assert [e.direction for e in ch.transcript.entries[:4]] == [
        TO_SUPERVISOR, TO_SIGNER, TO_SUPERVISOR, TO_SUPERVISOR
    ]
    again = Transcript.loads(ch.transcript.dumps())
    assert again == ch.transcript
    assert replay_transcript(again, kp.Q, SECP256K1) == [Decision.ACCEPT] * 3


def test_nonce_is_product_of_shares(rng):
    kp = keygen(TOY, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    commit = signer.commit(TOY, t=5)
    challenge = sup.challenge(commit, b"msg", TOY, u=7)
    reveal, sigmsg = signer.finish(challenge, TOY)
    assert sigmsg.sig.r == scalar_mul(35, TOY.G, TOY).x % TOY.n
    assert sup.validate(reveal, sigmsg, TOY)


def test_cheater_rejected_with_nonce_mismatch(rng):
    kp, attacker = keygen(SECP256K1, rng), keygen(SECP256K1, rng)
    setup = make_setup(attacker.Q, SECP256K1, rng)
    cheat = CheatingSigner(MaliciousSigner.create(kp, setup), rng=rng)
    sup = SupervisorSession(kp.Q)
    for i in range(4):
        assert run_interactive(cheat, sup, f"m{i}".encode(), SECP256K1, rng) is Decision.NONCE_MISMATCH
    assert sup.released == []


def test_cheater_on_selected_signatures_only(rng):
    kp = keygen(TOY, rng)
    setup = make_setup(KeyPair.from_private(101, TOY).Q, TOY, seed=b"s")
    cheat = CheatingSigner(MaliciousSigner.create(kp, setup), cheat_on={1}, rng=rng)
    sup = SupervisorSession(kp.Q)
    decisions = [run_interactive(cheat, sup, bytes([i]), TOY, rng) for i in range(3)]
    assert decisions[0] is Decision.ACCEPT and decisions[2] is Decision.ACCEPT
    assert decisions[1] is not Decision.ACCEPT


def test_commitment_mismatch(rng):
    kp = keygen(SECP256K1, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    challenge = sup.challenge(signer.commit(SECP256K1, rng), b"m", SECP256K1, rng)
    reveal, sigmsg = signer.finish(challenge, SECP256K1)
    fake = RevealMsg(scalar_mul(2, reveal.T, SECP256K1))
    assert sup.validate(fake, sigmsg, SECP256K1) is Decision.COMMITMENT_MISMATCH


def test_signature_invalid_even_with_right_nonce(rng):
    kp = keygen(SECP256K1, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    challenge = sup.challenge(signer.commit(SECP256K1, rng), b"m", SECP256K1, rng)
    reveal, sigmsg = signer.finish(challenge, SECP256K1)
    bad = SigMsg(Signature(sigmsg.sig.r, sigmsg.sig.s % (SECP256K1.n - 1) + 1))
    assert sup.validate(reveal, bad, SECP256K1) is Decision.SIGNATURE_INVALID
    assert sup.released == []


def test_check_order_commitment_first():
    kp = KeyPair.from_private(3, TOY)
    T = scalar_mul(4, TOY.G, TOY)
    bogus = Signature(1, 1)
    assert check_response(bytes(32), 5, b"m", T, bogus, kp.Q, TOY) is Decision.COMMITMENT_MISMATCH
    assert check_response(commit_point(T, TOY), 5, b"m", T, bogus, kp.Q, TOY) is Decision.NONCE_MISMATCH


def test_nonce_abort_when_product_nonce_unusable():
    t, u, m = 6, 11, b"abort"
    r = scalar_mul(t * u, TOY.G, TOY).x % TOY.n
    d = -hash_to_scalar(m, TOY) * pow(r, -1, TOY.n) % TOY.n
    kp = KeyPair.from_private(d, TOY)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    ch = Channel(TOY)
    commit = ch.send(TO_SUPERVISOR, signer.commit(TOY, t=t))
    challenge = ch.send(TO_SIGNER, sup.challenge(commit, m, TOY, u=u))
    with pytest.raises(NonceAbort):
        signer.finish(challenge, TOY)
    assert signer.phase == "idle"
    # an aborted exchange releases nothing, and a fresh run still works
    assert replay_transcript(ch.transcript, kp.Q, TOY) == []
    sup2 = SupervisorSession(kp.Q)
    assert run_interactive(signer, sup2, b"fine", TOY, random.Random(1))


def test_phase_discipline(rng):
    kp = keygen(TOY, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    with pytest.raises(ProtocolError):
        signer.finish(ChallengeMsg(3, b""), TOY)
    commit = signer.commit(TOY, rng)
    with pytest.raises(ProtocolError):
        signer.commit(TOY, rng)
    with pytest.raises(ProtocolError):
        sup.validate(RevealMsg(TOY.G), SigMsg(Signature(1, 1)), TOY)
    sup.challenge(commit, b"m", TOY, rng)
    with pytest.raises(ProtocolError):
        sup.challenge(commit, b"m", TOY, rng)
    with pytest.raises(ProtocolError):
        signer.commit(TOY, t=TOY.n)


def test_prearranged_list_discipline(rng):
    kp = keygen(SECP256K1, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    ch = Channel(SECP256K1)
    run_prearrangement(signer, sup, 3, SECP256K1, rng, ch)
    for i in range(3):
        rec = sign_prearranged(signer, sup, f"m{i}".encode(), SECP256K1, rng, ch)
        assert rec.index == i and rec.verifies(SECP256K1)
    with pytest.raises(PrearrangementExhausted):
        sign_prearranged(signer, sup, b"one too many", SECP256K1, rng, ch)
    with pytest.raises(PrearrangementExhausted):
        signer.answer(SignRequestMsg(b"x", 5), SECP256K1)
    assert replay_transcript(ch.transcript, kp.Q, SECP256K1) == [Decision.ACCEPT] * 3


def test_prearrangement_needs_fresh_session(rng):
    kp = keygen(TOY, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    msg = signer.prearrange(2, TOY, rng)
    with pytest.raises(ProtocolError):
        signer.prearrange(2, TOY, rng)
    sup.receive_prearrangement(msg)
    with pytest.raises(ProtocolError):
        sup.receive_prearrangement(msg)
    with pytest.raises(ValueError):
        SignerSession(kp).prearrange(0, TOY, rng)
    with pytest.raises(ProtocolError):
        SignerSession(kp).prearrange(2, TOY, choices=[1])


def test_prearranged_cheater_poisons_session(rng):
    kp, attacker = keygen(SECP256K1, rng), keygen(SECP256K1, rng)
    setup = make_setup(attacker.Q, SECP256K1, rng)
    cheat = CheatingSigner(MaliciousSigner.create(kp, setup), cheat_on={1}, rng=rng)
    sup = SupervisorSession(kp.Q)
    ch = Channel(SECP256K1)
    run_prearrangement(cheat, sup, 4, SECP256K1, rng, ch)
    sign_prearranged(cheat, sup, b"ok", SECP256K1, rng, ch)
    with pytest.raises(ProtocolCancelled) as info:
        sign_prearranged(cheat, sup, b"cheat", SECP256K1, rng, ch)
    assert info.value.decision is Decision.NONCE_MISMATCH
    with pytest.raises(ProtocolError):
        sup.request(b"after", SECP256K1, rng)
    assert replay_transcript(ch.transcript, kp.Q, SECP256K1) == [Decision.ACCEPT, Decision.NONCE_MISMATCH]


def test_replay_rejects_out_of_order(rng):
    kp = keygen(TOY, rng)
    t = Transcript()
    ch = Channel(TOY)
    ch.send(TO_SUPERVISOR, RevealMsg(TOY.G))
    with pytest.raises(ProtocolError):
        replay_transcript(ch.transcript, kp.Q, TOY)
    ch = Channel(TOY)
    ch.send(TO_SUPERVISOR, CommitMsg(bytes(32)))
    ch.send(TO_SUPERVISOR, SigMsg(Signature(1, 1)))
    with pytest.raises(ProtocolError):
        replay_transcript(ch.transcript, kp.Q, TOY)
    assert replay_transcript(t, kp.Q, TOY) == []


def test_supervised_signatures_leak_nothing_to_attacker(rng):
    """Released signatures are honest ECDSA; the kleptogram recovery finds nothing."""
    kp, attacker = keygen(SECP256K1, rng), keygen(SECP256K1, rng)
    setup = make_setup(attacker.Q, SECP256K1, rng)
    signer, sup = SignerSession(kp), SupervisorSession(kp.Q)
    for i in range(4):
        run_interactive(signer, sup, bytes([i]), SECP256K1, rng)
    recs = sup.released
    for a, b in zip(recs, recs[1:]):
        assert attacker_recover_privkey(a, b, attacker.d, setup, SECP256K1) is None


def test_residual_channel_by_grinding_commitments(rng):
    """A signer may grind t until its commitment carries a chosen bit.

    The supervisor cannot tell: every check passes.  The nonce itself stays
    uniform (k = t*u with u fresh), so this leaks one bit per signature at a
    cost of about two extra multiplications, not the private key.
    """
    kp = keygen(SECP256K1, rng)
    secret_bits = [1, 0, 1, 1, 0, 0, 1, 0]
    sup = SupervisorSession(kp.Q)
    observed = []
    for bit in secret_bits:
        signer = SignerSession(kp)
        while True:
            t = rng.randrange(1, SECP256K1.n)
            if commit_point(scalar_mul(t, SECP256K1.G, SECP256K1), SECP256K1)[0] & 1 == bit:
                break
        commit = signer.commit(SECP256K1, t=t)
        observed.append(commit.h_T[0] & 1)
        challenge = sup.challenge(commit, b"tx", SECP256K1, rng)
        reveal, sigmsg = signer.finish(challenge, SECP256K1)
        assert sup.validate(reveal, sigmsg, SECP256K1) is Decision.ACCEPT
    assert observed == secret_bits
    assert all(verify(r.msg, r.sig, kp.Q, SECP256K1) for r in sup.released)
