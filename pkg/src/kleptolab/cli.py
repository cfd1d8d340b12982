"""kleptolab command line.

Exit codes: 0 success, 1 keys recovered (``attack`` only), 2 protocol
cancelled, 3 verification failure, 4 I/O or configuration error.

``--seed`` swaps the system CSPRNG for a seeded ``random.Random`` so demos
are byte-reproducible.  A seeded run has no security whatsoever.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import bench
from .curve import CurveError, point_from_hex, point_to_hex, registry_get, scalar_from_hex, scalar_to_hex
from .ecdsa import ECDSAError, KeyPair, default_rng, keygen, sign_deterministic
from .kleptogram import KleptoState, SetupParams, check_setup_strength, make_setup
from .signer import (
    MaliciousSigner,
    SignatureRecord,
    derive_address,
    malicious_sign,
    read_log,
    scan_signature_log,
    sign_honest,
    write_log,
)
from .supervisor import (
    Channel,
    CheatingSigner,
    NonceAbort,
    PrearrangementExhausted,
    ProtocolCancelled,
    SignerSession,
    SupervisorSession,
    Transcript,
    replay_transcript,
    run_interactive,
    run_prearrangement,
    sign_prearranged,
)

EXIT_OK = 0
EXIT_FOUND = 1
EXIT_CANCEL = 2
EXIT_VERIFY = 3
EXIT_CONFIG = 4

log = logging.getLogger("kleptolab")


class ConfigError(Exception):
    pass


def _rng(args):
    if args.seed is None:
        return default_rng()
    return random.Random(args.seed)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


# -- role files -------------------------------------------------------------


def keyfile_dict(kp: KeyPair, role: str, params) -> dict:
    return {
        "role": role,
        "curve": params.name,
        "d": scalar_to_hex(kp.d, params),
        "Q": point_to_hex(kp.Q, params),
        "address": derive_address(kp.Q, params).hex(),
    }


def load_key(path, params, role: str) -> KeyPair:
    data = _read_json(path)
    if data.get("role") != role:
        raise ConfigError(f"{path}: expected a {role} key file, found role {data.get('role')!r}")
    if data.get("curve") != params.name:
        raise ConfigError(f"{path}: key is for curve {data.get('curve')!r}, not {params.name}")
    try:
        kp = KeyPair.from_private(scalar_from_hex(data["d"], params), params)
    except (KeyError, CurveError, ECDSAError) as exc:
        raise ConfigError(f"{path}: bad key material ({exc})") from None
    if point_to_hex(kp.Q, params) != data.get("Q"):
        raise ConfigError(f"{path}: public key does not match private key")
    return kp


def load_setup(path, params) -> SetupParams:
    data = _read_json(path)
    if "d" in data or data.get("role") == "attacker":
        raise ConfigError(f"{path}: looks like attacker key material, not a setup file")
    try:
        return SetupParams.from_dict(data, params)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad setup file ({exc})") from None


def state_dict(signer: MaliciousSigner, params) -> dict:
    c1 = signer.klepto.c1
    return {
        "curve": params.name,
        "phase": signer.klepto.phase,
        "c1": None if c1 is None else scalar_to_hex(c1, params),
        "signature_counter": signer.signature_counter,
    }


def load_state(path, kp: KeyPair, setup: SetupParams, params) -> MaliciousSigner:
    signer = MaliciousSigner.create(kp, setup)
    if not Path(path).exists():
        return signer
    data = _read_json(path)
    try:
        c1 = None if data["c1"] is None else scalar_from_hex(data["c1"], params)
        return MaliciousSigner(kp, KleptoState(setup, c1), int(data["signature_counter"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad state file ({exc})") from None


def _read_messages(paths):
    out = []
    for p in paths:
        try:
            out.append(Path(p).read_bytes())
        except OSError as exc:
            raise ConfigError(f"cannot read message {p}: {exc.strerror}") from None
    return out


# -- commands ---------------------------------------------------------------


def cmd_keygen(args) -> int:
    params = registry_get(args.curve)
    kp = keygen(params, _rng(args))
    data = keyfile_dict(kp, args.role, params)
    _write_text(args.out, json.dumps(data, indent=2) + "\n")
    print(f"pubkey  {data['Q']}")
    print(f"address {data['address']}")
    return EXIT_OK


def cmd_setup(args) -> int:
    params = registry_get(args.curve)
    attacker = load_key(args.attacker_key, params, "attacker")
    setup = make_setup(attacker.Q, params, _rng(args), args.alpha, args.beta, args.omega)
    report = check_setup_strength(setup, attacker.d, params)
    for name, order in sorted(report.orders.items()):
        print(f"order({name}) = {'n' if order == params.n else order}")
    if not report.ok:
        print(f"degenerate constants: {', '.join(report.degenerate)}", file=sys.stderr)
        return EXIT_CONFIG
    _write_text(args.out, setup.dumps(params) + "\n")
    return EXIT_OK


def _next_index(path) -> int:
    try:
        with open(path) as fh:
            return sum(1 for line in fh if line.strip())
    except FileNotFoundError:
        return 0


def cmd_sign(args) -> int:
    params = registry_get(args.curve)
    kp = load_key(args.key, params, "victim")
    messages = _read_messages(args.messages)
    rng = _rng(args)
    signer = None
    if args.mode == "malicious":
        if not args.setup or not args.state:
            raise ConfigError("malicious mode needs --setup and --state")
        signer = load_state(args.state, kp, load_setup(args.setup, params), params)
    start = _next_index(args.out)
    records = []
    for i, msg in enumerate(messages):
        if args.mode == "honest":
            sig = sign_honest(msg, kp, params, rng)
        elif args.mode == "deterministic":
            sig = sign_deterministic(msg, kp.d, params)
        else:
            sig, signer = malicious_sign(signer, msg, params, rng)
        rec = SignatureRecord(start + i, msg, sig, kp.Q)
        if not rec.verifies(params):
            print(f"signature {rec.index} failed self-check", file=sys.stderr)
            return EXIT_VERIFY
        records.append(rec)
    try:
        write_log(records, args.out, params, append=True)
    except OSError as exc:
        raise ConfigError(f"cannot write {args.out}: {exc.strerror}") from None
    if signer is not None:
        _write_text(args.state, json.dumps(state_dict(signer, params), indent=2) + "\n")
    for rec in records:
        print(f"{rec.index} {rec.sig.hex(params)}")
    return EXIT_OK


def cmd_attack(args) -> int:
    params = registry_get(args.curve)
    attacker = load_key(args.attacker_key, params, "attacker")
    setup = load_setup(args.setup, params)
    try:
        records, bad = read_log(args.log, params)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.log}: {exc.strerror}") from None
    if bad:
        print(f"{bad} malformed log lines skipped", file=sys.stderr)
    found = scan_signature_log(records, attacker.d, setup, params)
    for hit in found:
        print(f"{point_to_hex(hit.pubkey, params)} {scalar_to_hex(hit.d, params)}")
    if not found:
        print(f"no keys recovered from {len(records)} records", file=sys.stderr)
    return EXIT_FOUND if found else EXIT_OK


def cmd_supervise(args) -> int:
    params = registry_get(args.curve)
    kp = load_key(args.key, params, "victim")
    messages = _read_messages(args.messages)
    rng = _rng(args)
    if args.cheat:
        if not args.setup:
            raise ConfigError("--cheat needs --setup")
        signer = CheatingSigner(MaliciousSigner.create(kp, load_setup(args.setup, params)), rng=rng)
    else:
        signer = SignerSession(kp)
    supervisor = SupervisorSession(kp.Q)
    ticks = iter(range(1 << 62))
    channel = Channel(params, clock=(lambda: float(next(ticks))) if args.seed is not None else None)
    status = EXIT_OK
    try:
        if args.mode == "interactive":
            for msg in messages:
                decision = run_interactive(signer, supervisor, msg, params, rng, channel)
                if not decision:
                    print(f"rejected: {decision.value}", file=sys.stderr)
                    status = EXIT_CANCEL
                    break
        else:
            run_prearrangement(signer, supervisor, args.count or len(messages), params, rng, channel)
            for msg in messages:
                sign_prearranged(signer, supervisor, msg, params, rng, channel)
    except ProtocolCancelled as exc:
        print(f"rejected: {exc.decision.value}; protocol cancelled, alert the user", file=sys.stderr)
        status = EXIT_CANCEL
    except (NonceAbort, PrearrangementExhausted) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        status = EXIT_CANCEL
    if args.transcript:
        _write_text(args.transcript, channel.transcript.dumps())
    if args.out and supervisor.released:
        write_log(supervisor.released, args.out, params)
    for rec in supervisor.released:
        print(f"released {rec.index} {rec.sig.hex(params)}")
    return status


def cmd_replay(args) -> int:
    params = registry_get(args.curve)
    try:
        transcript = Transcript.loads(Path(args.transcript).read_text())
        pubkey = point_from_hex(args.pubkey, params)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.transcript}: {exc.strerror}") from None
    except (CurveError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad input: {exc}") from None
    decisions = replay_transcript(transcript, pubkey, params)
    for i, d in enumerate(decisions):
        print(f"signature {i}: {d.value}")
    return EXIT_OK if all(decisions) else EXIT_VERIFY


def cmd_bench(args) -> int:
    params = registry_get(args.curve)
    if args.count < bench.MIN_SAMPLES:
        raise ConfigError(f"--count must be at least {bench.MIN_SAMPLES}")
    rng = _rng(args)
    victim = keygen(params, rng)
    attacker = keygen(params, rng)
    setup = make_setup(attacker.Q, params, rng)
    honest = bench.generate_corpus("honest", args.count, victim, params, rng=rng)
    malicious = bench.generate_corpus("malicious", args.count, victim, params, setup, rng)
    result = {"curve": params.name, "count": args.count}

    reports = bench.third_party_tests(honest, malicious, params)
    result["honest_vs_malicious"] = [r.to_dict() for r in reports]
    print("third-party battery, honest vs malicious")
    print(bench.format_table(reports))
    if args.positive_control:
        biased = bench.biased_corpus(args.count, victim, params, rng)
        control = bench.third_party_tests(honest, biased, params)
        result["positive_control"] = [r.to_dict() for r in control]
        print("\npositive control, honest vs constant-nonce")
        print(bench.format_table(control))

    att = {}
    for corpus in (malicious, honest):
        rep = bench.attacker_distinguisher(corpus, attacker.d, setup, params)
        att[corpus.label] = {"pairs": len(rep.pairs), "flagged": rep.flagged, "verdict": rep.verdict}
        print(f"\nattacker on {corpus.label}: {rep.flagged}/{len(rep.pairs)} pairs flagged, verdict {rep.verdict}")
    result["attacker"] = att
    if args.out:
        _write_text(args.out, json.dumps(result, indent=2) + "\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kleptolab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--curve", default="secp256k1", choices=["secp256k1", "toy"])
    common.add_argument("--seed", type=int, default=None, help="reproducible demo RNG (insecure)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", parents=[common], help="generate a key file")
    p.add_argument("--role", choices=["victim", "attacker"], default="victim")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("setup", parents=[common], help="create backdoor constants from an attacker key")
    p.add_argument("--attacker-key", required=True)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--beta", type=int, default=1)
    p.add_argument("--omega", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("sign", parents=[common], help="sign message files, append to a signature log")
    p.add_argument("--mode", choices=["honest", "malicious", "deterministic"], default="honest")
    p.add_argument("--key", required=True)
    p.add_argument("--setup")
    p.add_argument("--state", help="persisted round state of the malicious signer")
    p.add_argument("--out", required=True)
    p.add_argument("messages", nargs="+")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("attack", parents=[common], help="scan a signature log for backdoored keys")
    p.add_argument("--attacker-key", required=True)
    p.add_argument("--setup", required=True)
    p.add_argument("log")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("supervise", parents=[common], help="sign through the supervisor protocol")
    p.add_argument("--mode", choices=["interactive", "prearranged"], default="interactive")
    p.add_argument("--key", required=True)
    p.add_argument("--count", type=int, help="prearranged commitments (default: one per message)")
    p.add_argument("--cheat", action="store_true", help="signer substitutes backdoored nonces")
    p.add_argument("--setup")
    p.add_argument("--transcript")
    p.add_argument("--out", help="signature log of released signatures")
    p.add_argument("messages", nargs="+")
    p.set_defaults(func=cmd_supervise)

    p = sub.add_parser("replay", parents=[common], help="re-verify a supervisor transcript offline")
    p.add_argument("--pubkey", required=True)
    p.add_argument("transcript")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bench", parents=[common], help="indistinguishability bench")
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--positive-control", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
