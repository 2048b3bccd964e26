"""
HomodyneQKD — Self Test
A fast subset of the invariant suite, runnable from an installed copy
without pytest.
"""
import asyncio
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from app.core.errors import NonMonotoneSlotsError
from app.schemas.schemas import (
    AliceConfig,
    BasisAnnounce,
    BobConfig,
    ChannelConfig,
    ChannelMode,
)
from app.services import analysis
from app.services.alice import Symbol, default_table, encode_symbol
from app.services.bob import DetectionRecords, decide_array, homodyne_sample
from app.services.protocol import decode_message, encode_message, sift
from app.services.session import run_session

logger = logging.getLogger(__name__)

SELFTEST_SEED = 1543


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_encoder() -> Tuple[bool, str]:
    table = default_table()
    out = [encode_symbol(Symbol(b, k), table, 1 + 0j) for b in (0, 1) for k in (0, 1)]
    magnitudes = np.abs(out)
    phases = np.angle(out) % (2 * math.pi)
    expected = np.array([0.0, math.pi / 2, math.pi, 3 * math.pi / 2])
    # Phase 0 may fold to just under 2π.
    phases = np.where(phases > 2 * math.pi - 1e-9, phases - 2 * math.pi, phases)
    envelope_ok = float(np.ptp(magnitudes)) < 1e-12
    phase_ok = float(np.max(np.abs(np.sort(phases) - expected))) < 1e-12
    return envelope_ok and phase_ok, f"envelope spread {np.ptp(magnitudes):.1e}"


def check_vacuum(n: int = 200_000) -> Tuple[bool, str]:
    rng = np.random.default_rng(SELFTEST_SEED)
    q = homodyne_sample(0j, 0.0, 0.0, BobConfig(), rng, size=n)
    mean, var = float(np.mean(q)), float(np.var(q, ddof=1))
    ok = abs(mean) < 3 / math.sqrt(n) and abs(var - 1.0) < 3 * math.sqrt(2 / n)
    return ok, f"mean {mean:.4f}, variance {var:.4f}"


def check_sift(instances: int = 2000) -> Tuple[bool, str]:
    rng = np.random.default_rng(SELFTEST_SEED)
    for _ in range(instances):
        alice = rng.integers(0, 2, 16, dtype=np.uint8)
        bob = rng.integers(0, 2, 16, dtype=np.uint8)
        q = rng.normal(size=16)
        records = DetectionRecords(bob_basis=bob, q=q, decision=decide_array(q, 0.5))
        brute = [i for i in range(16) if alice[i] == bob[i] and abs(q[i]) > 0.5]
        if sift(alice, records).tolist() != brute:
            return False, f"mismatch on alice={alice.tolist()} bob={bob.tolist()}"
    return True, f"{instances} random 16-slot instances"


def check_codec() -> Tuple[bool, str]:
    message = BasisAnnounce(session_id=0, first_slot=0, bases=[0, 1, 1, 0])
    if decode_message(encode_message(message)) != message:
        return False, "round trip changed the message"
    try:
        decode_message(b'{"type":"sift_result","session_id":0,"kept_slots":[5,3]}\n')
    except NonMonotoneSlotsError:
        return True, "round trip and slot-order check"
    return False, "non-monotone slot list accepted"


def check_qber_oracle(n: int = 40_000) -> Tuple[bool, str]:
    alice = AliceConfig(mu_signal=1.0)
    bob = BobConfig()
    channel = ChannelConfig(mode=ChannelMode.TWO_FIBER, linewidth_hz=0.0)
    report = asyncio.run(run_session(alice, bob, channel, n, 0.5, SELFTEST_SEED))
    expected = analysis.theoretical_qber(1.0, 1.0)
    se = math.sqrt(expected * (1 - expected) / report.n_sample)
    ok = abs(report.qber_estimate - expected) < 3 * se
    return ok, f"QBER {report.qber_estimate:.5f} vs {expected:.5f} ± {3 * se:.5f}"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("encoder constant envelope and QPSK phases", check_encoder),
    ("vacuum shot-noise normalisation", check_vacuum),
    ("sifting against brute force", check_sift),
    ("wire codec", check_codec),
    ("Monte Carlo QBER against erfc oracle", check_qber_oracle),
]


def run_selftest() -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        results.append(CheckResult(name=name, passed=passed, detail=detail))
    return results
