"""Honest versus backdoored signatures: what a third party sees, and what the attacker sees.

Third parties get a fixed battery of two-sample tests on nonce-derived
observables (values of r, reconstructed nonce points, serial structure).
Passing the battery is evidence of indistinguishability, not a proof.
The attacker simply runs the recovery on every pair.

Security of past and future keys after the backdoor is discovered rests on
the hardness of computing ``d_A`` from ``Q_A``; the only empirical check
possible here is that recovery with a wrong ``d_A`` finds nothing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from .curve import CurveParams, point_to_hex
from .ecdsa import (
    KeyPair,
    RetryNonce,
    default_rng,
    reconstruct_nonce_point,
    sign,
    sign_deterministic,
)
from .kleptogram import SetupParams
from .signer import (
    MaliciousSigner,
    RecordError,
    RecoveredKey,
    SignatureRecord,
    attacker_recover_privkey,
    group_by_pubkey,
    malicious_sign,
    sign_honest,
)

ALPHA = 0.001
MIN_SAMPLES = 100
MESSAGE_BYTES = 32


class BenchError(ValueError):
    pass


@dataclass
class Corpus:
    label: str
    records: List[SignatureRecord]
    config_hash: str = ""

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class StatReport:
    test: str
    statistic: float
    p_value: float
    sample_size: int
    threshold: float

    @property
    def passed(self) -> bool:
        """True when the test finds no difference at the corrected threshold."""
        return self.p_value > self.threshold

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "reject"

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "sample_size": self.sample_size,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }


def _config_hash(**config) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _random_message(rng) -> bytes:
    return rng.getrandbits(8 * MESSAGE_BYTES).to_bytes(MESSAGE_BYTES, "big")


def generate_corpus(
    mode: str,
    count: int,
    keypair: KeyPair,
    params: CurveParams,
    setup: Optional[SetupParams] = None,
    rng=None,
) -> Corpus:
    """``count`` signatures by one key over fresh random messages."""
    if mode == "malicious" and setup is None:
        raise BenchError("malicious corpus needs setup parameters")
    if mode not in ("honest", "malicious", "deterministic"):
        raise BenchError(f"unknown mode {mode!r}")
    rng = rng or default_rng()
    signer = MaliciousSigner.create(keypair, setup) if setup is not None else None
    records = []
    while len(records) < count:
        msg = _random_message(rng)
        if mode == "honest":
            sig = sign_honest(msg, keypair, params, rng)
        elif mode == "malicious":
            sig, signer = malicious_sign(signer, msg, params, rng)
        else:
            try:
                sig = sign_deterministic(msg, keypair.d, params)
            except RetryNonce:
                continue  # no second nonce exists for this message; draw another
        records.append(SignatureRecord(len(records), msg, sig, keypair.Q))
    cfg = _config_hash(mode=mode, count=count, curve=params.name, pubkey=point_to_hex(keypair.Q, params),
                       setup=setup.to_dict(params) if setup else None)
    return Corpus(mode, records, cfg)


def biased_corpus(count: int, keypair: KeyPair, params: CurveParams, rng=None, k: Optional[int] = None) -> Corpus:
    """Positive control: every signature reuses one nonce."""
    rng = rng or default_rng()
    k = k or rng.randrange(1, params.n)
    records = []
    while len(records) < count:
        msg = _random_message(rng)
        try:
            sig = sign(msg, keypair.d, k, params)
        except RetryNonce:
            continue
        records.append(SignatureRecord(len(records), msg, sig, keypair.Q))
    return Corpus("biased", records, _config_hash(mode="constant-nonce", count=count, curve=params.name))


# -- third-party battery ----------------------------------------------------


def _chi2_two_sample(a: np.ndarray, b: np.ndarray, bins: int):
    table = np.vstack([np.bincount(a, minlength=bins), np.bincount(b, minlength=bins)])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        # both samples sit in one cell: identical, nothing to reject
        return 0.0, 1.0
    chi2, p, _, _ = stats.chi2_contingency(table, correction=False)
    return float(chi2), float(p)


def _serial_correlation(u: np.ndarray):
    x, y = u[:-1], u[1:]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        # a constant sequence is perfectly predictable
        return 1.0, 0.0
    res = stats.pearsonr(x, y)
    return float(res[0]), float(res[1])


def _observables(corpus: Corpus, params: CurveParams):
    w = params.scalar_bytes
    rs = [rec.sig.r for rec in corpus.records]
    lead = np.array([r >> (8 * (w - 1)) for r in rs], dtype=np.int64)
    trail = np.array([r & 0xFF for r in rs], dtype=np.int64)
    # float division of big ints keeps ~53 bits of the ratio
    r_unit = np.array([r / params.n for r in rs])
    nonce_x = np.array(
        [reconstruct_nonce_point(rec.msg, rec.sig, rec.pubkey, params).x / params.p for rec in corpus.records]
    )
    return lead, trail, r_unit, nonce_x


def third_party_tests(c1: Corpus, c2: Corpus, params: CurveParams, alpha: float = ALPHA) -> List[StatReport]:
    """Two-sample battery on nonce-derived observables, Bonferroni-corrected.

    Every record must verify; reconstructing the nonce points enforces it.
    """
    if len(c1) < MIN_SAMPLES or len(c2) < MIN_SAMPLES:
        raise BenchError(f"need at least {MIN_SAMPLES} signatures per corpus")
    lead1, trail1, u1, x1 = _observables(c1, params)
    lead2, trail2, u2, x2 = _observables(c2, params)
    lead_bins = max(lead1.max(), lead2.max()) + 1
    size = len(c1) + len(c2)

    raw = []
    raw.append(("chi2 leading byte of r", *_chi2_two_sample(lead1, lead2, lead_bins), size))
    raw.append(("chi2 trailing byte of r", *_chi2_two_sample(trail1, trail2, 256), size))
    ks = stats.ks_2samp(u1, u2)
    raw.append(("KS r/n", float(ks.statistic), float(ks.pvalue), size))
    ks = stats.ks_2samp(x1, x2)
    raw.append(("KS x(nonce point)/p", float(ks.statistic), float(ks.pvalue), size))
    raw.append((f"serial correlation of r [{c1.label}]", *_serial_correlation(u1), len(c1)))
    raw.append((f"serial correlation of r [{c2.label}]", *_serial_correlation(u2), len(c2)))

    threshold = alpha / len(raw)
    return [StatReport(name, stat, p, n, threshold) for name, stat, p, n in raw]


def battery_passes(reports: List[StatReport]) -> bool:
    return all(r.passed for r in reports)


# -- attacker view ----------------------------------------------------------


@dataclass
class PairVerdict:
    first: int
    second: int
    pubkey_hex: str
    malicious: bool


@dataclass
class DistinguisherReport:
    label: str
    pairs: List[PairVerdict] = field(default_factory=list)
    recovered: List[RecoveredKey] = field(default_factory=list)

    @property
    def flagged(self) -> int:
        return sum(p.malicious for p in self.pairs)

    @property
    def flag_rate(self) -> float:
        return self.flagged / len(self.pairs) if self.pairs else 0.0

    @property
    def detection_rate(self) -> Optional[float]:
        return self.flag_rate if self.label == "malicious" else None

    @property
    def false_positive_rate(self) -> Optional[float]:
        return self.flag_rate if self.label in ("honest", "deterministic") else None

    @property
    def verdict(self) -> str:
        return "malicious" if self.recovered else "clean"


def attacker_distinguisher(corpus: Corpus, d_A: int, setup: SetupParams, params: CurveParams) -> DistinguisherReport:
    """Run the recovery on each signer's consecutive disjoint pairs.

    Pairs follow record order within each public key, which matches the
    backdoored signer's round-one/round-two pairing for generated corpora.
    A corpus is called malicious iff some key was recovered.
    """
    report = DistinguisherReport(corpus.label)
    seen = set()
    for pubkey, recs in group_by_pubkey(corpus.records).items():
        hexkey = point_to_hex(pubkey, params)
        for rec1, rec2 in zip(recs[0::2], recs[1::2]):
            try:
                d = attacker_recover_privkey(rec1, rec2, d_A, setup, params)
            except RecordError:
                d = None
            report.pairs.append(PairVerdict(rec1.index, rec2.index, hexkey, d is not None))
            if d is not None and pubkey not in seen:
                seen.add(pubkey)
                report.recovered.append(RecoveredKey(pubkey, d))
    return report


def format_table(reports: List[StatReport]) -> str:
    width = max(len(r.test) for r in reports)
    lines = [f"{'test':<{width}}  {'statistic':>12}  {'p-value':>10}  {'n':>6}  verdict"]
    for r in reports:
        lines.append(f"{r.test:<{width}}  {r.statistic:12.5g}  {r.p_value:10.4g}  {r.sample_size:6d}  {r.verdict}")
    lines.append(f"(threshold per test: {reports[0].threshold:.2g}, Bonferroni over {len(reports)} tests)")
    return "\n".join(lines)
