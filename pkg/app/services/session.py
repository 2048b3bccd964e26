"""
HomodyneQKD — Session
Alice and Bob endpoint state machines for the public discussion, and the
end-to-end session: frame → fiber → homodyne → sifting → QBER sample.

Exchange:
  Bob   → BasisAnnounce × k   (contiguous chunks covering every slot)
  Alice → SiftResult          (basis-matched slots)
  Bob   → SiftResult          (the subset Bob measured conclusively)
  Alice → SampleRequest       (sacrificial QBER sample)
  Bob   → SampleReveal        (his bits on the sample)
Any failure sends Abort and ends the session without a key.
"""
import asyncio
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Type

import numpy as np
from numpy.typing import NDArray

from app.core.config import settings
from app.core.errors import (
    ConfigError,
    EmptySampleError,
    LengthMismatchError,
    ProtocolError,
    SessionAborted,
    UnexpectedMessageError,
)
from app.schemas.schemas import (
    Abort,
    AliceConfig,
    BasisAnnounce,
    BobConfig,
    ChannelConfig,
    SampleRequest,
    SampleReveal,
    SessionReport,
    SiftResult,
    SlotDiagnostic,
)
from app.services import analysis
from app.services.alice import PulseFrame, SymbolStream, build_frame, random_symbols
from app.services.bob import Decision, DetectionRecords, choose_bases, measure_frame
from app.services.channel import propagate
from app.services.protocol import check_reveal, estimate_qber
from app.services.transport import Transcript, Transport, queue_pair
from app.utils.seeding import session_streams

logger = logging.getLogger(__name__)

# After one endpoint fails, how long the other gets to see the Abort.
ABORT_GRACE_SECONDS = 1.0


class EndpointState(str, Enum):
    IDLE = "idle"
    ANNOUNCING = "announcing"
    AWAIT_BASES = "await_bases"
    AWAIT_SIFT = "await_sift"
    AWAIT_CONFIRM = "await_confirm"
    AWAIT_REQUEST = "await_request"
    AWAIT_REVEAL = "await_reveal"
    DONE = "done"
    ABORTED = "aborted"


@dataclass(frozen=True)
class EndpointOutcome:
    kept: NDArray[np.int64]
    sample: NDArray[np.int64]
    key_slots: NDArray[np.int64]
    key: NDArray[np.uint8]


@dataclass(frozen=True)
class AliceOutcome(EndpointOutcome):
    n_base_matched: int
    n_sample_errors: int
    qber_estimate: float


def sample_size(sample_fraction: float, n_kept: int) -> int:
    """⌈f·n⌉, immune to float noise such as 0.1·50 = 5.000000000000001.

    A non-empty kept list always gives up at least one slot.
    """
    if n_kept == 0:
        return 0
    return min(n_kept, max(1, math.ceil(sample_fraction * n_kept - 1e-9)))


class _Endpoint:
    name = "endpoint"

    def __init__(self, session_id: int, transport: Transport):
        self.session_id = session_id
        self.transport = transport
        self.state = EndpointState.IDLE

    async def _expect(self, model: Type):
        message = await self.transport.recv()
        if isinstance(message, Abort):
            self.state = EndpointState.ABORTED
            raise SessionAborted(message.reason, remote=True)
        if message.session_id != self.session_id:
            raise UnexpectedMessageError(
                f"session {message.session_id} does not match {self.session_id}"
            )
        if not isinstance(message, model):
            raise UnexpectedMessageError(
                f"{self.name} expected {model.__name__} in state {self.state.value}, got {message.type}"
            )
        return message

    async def run(self):
        try:
            return await self._run()
        except ProtocolError as e:
            self.state = EndpointState.ABORTED
            logger.warning(f"{self.name} aborting session {self.session_id}: {e.reason}")
            try:
                await self.transport.send(Abort(session_id=self.session_id, reason=e.reason))
            except ProtocolError:
                pass
            raise SessionAborted(e.reason) from e

    async def _run(self):
        raise NotImplementedError


class AliceEndpoint(_Endpoint):
    name = "alice"

    def __init__(self, session_id: int, symbols: SymbolStream, sample_fraction: float,
                 rng: np.random.Generator, transport: Transport):
        super().__init__(session_id, transport)
        self.symbols = symbols
        self.sample_fraction = sample_fraction
        self.rng = rng

    async def _collect_bases(self) -> NDArray[np.uint8]:
        n = len(self.symbols)
        bases = np.empty(n, dtype=np.uint8)
        received = 0
        self.state = EndpointState.AWAIT_BASES
        while received < n:
            announce = await self._expect(BasisAnnounce)
            if announce.first_slot != received:
                raise UnexpectedMessageError(
                    f"basis announce starts at slot {announce.first_slot}, expected {received}"
                )
            count = len(announce.bases)
            if count == 0:
                raise UnexpectedMessageError("empty basis announce")
            if received + count > n:
                raise LengthMismatchError(f"bases announced for {received + count} of {n} slots")
            bases[received:received + count] = announce.bases
            received += count
        return bases

    async def _run(self) -> AliceOutcome:
        bob_bases = await self._collect_bases()
        matched = np.flatnonzero(self.symbols.bases == bob_bases).astype(np.int64)

        await self.transport.send(SiftResult(session_id=self.session_id, kept_slots=matched.tolist()))
        self.state = EndpointState.AWAIT_CONFIRM
        confirm = await self._expect(SiftResult)
        kept = np.asarray(confirm.kept_slots, dtype=np.int64)
        if not np.all(np.isin(kept, matched)):
            raise UnexpectedMessageError("confirmed slots are not a subset of the basis-matched slots")
        if kept.size == 0:
            raise EmptySampleError("empty sifted key")

        k = sample_size(self.sample_fraction, kept.size)
        sample = np.sort(self.rng.choice(kept, size=k, replace=False)).astype(np.int64)
        request = SampleRequest(session_id=self.session_id, slots=sample.tolist())
        await self.transport.send(request)

        self.state = EndpointState.AWAIT_REVEAL
        reveal = await self._expect(SampleReveal)
        check_reveal(request, reveal)
        bob_sample_bits = np.asarray(reveal.bits, dtype=np.uint8)
        alice_sample_bits = self.symbols.bits[sample]
        qber = estimate_qber(alice_sample_bits, bob_sample_bits)

        key_slots = np.setdiff1d(kept, sample, assume_unique=True)
        self.state = EndpointState.DONE
        return AliceOutcome(
            kept=kept,
            sample=sample,
            key_slots=key_slots,
            key=self.symbols.bits[key_slots],
            n_base_matched=int(matched.size),
            n_sample_errors=int(np.count_nonzero(alice_sample_bits != bob_sample_bits)),
            qber_estimate=qber,
        )


class BobEndpoint(_Endpoint):
    name = "bob"

    def __init__(self, session_id: int, records: DetectionRecords, transport: Transport,
                 chunk_slots: Optional[int] = None):
        super().__init__(session_id, transport)
        self.records = records
        self.chunk_slots = chunk_slots or settings.ANNOUNCE_CHUNK_SLOTS

    async def _run(self) -> EndpointOutcome:
        n = len(self.records)
        self.state = EndpointState.ANNOUNCING
        for first in range(0, n, self.chunk_slots):
            chunk = self.records.bob_basis[first:first + self.chunk_slots]
            await self.transport.send(BasisAnnounce(
                session_id=self.session_id, first_slot=first, bases=chunk.tolist(),
            ))

        self.state = EndpointState.AWAIT_SIFT
        proposal = await self._expect(SiftResult)
        matched = np.asarray(proposal.kept_slots, dtype=np.int64)
        if matched.size and matched[-1] >= n:
            raise LengthMismatchError(f"sift result names slot {matched[-1]} of a {n}-slot frame")
        kept = matched[self.records.conclusive[matched]]
        await self.transport.send(SiftResult(session_id=self.session_id, kept_slots=kept.tolist()))

        self.state = EndpointState.AWAIT_REQUEST
        request = await self._expect(SampleRequest)
        sample = np.asarray(request.slots, dtype=np.int64)
        if not np.all(np.isin(sample, kept)):
            raise UnexpectedMessageError("sample request names slots outside the sifted key")
        bits = self.records.decision[sample].astype(np.uint8)
        await self.transport.send(SampleReveal(session_id=self.session_id, bits=bits.tolist()))

        key_slots = np.setdiff1d(kept, sample, assume_unique=True)
        self.state = EndpointState.DONE
        return EndpointOutcome(
            kept=kept,
            sample=sample,
            key_slots=key_slots,
            key=self.records.decision[key_slots].astype(np.uint8),
        )


async def run_endpoints(alice: AliceEndpoint, bob: BobEndpoint) -> Tuple[AliceOutcome, EndpointOutcome]:
    """Drive both endpoints; raise the originating SessionAborted if either fails."""
    tasks = [asyncio.create_task(alice.run()), asyncio.create_task(bob.run())]
    done, pending = await asyncio.wait(tasks, return_when=asyncio.FIRST_EXCEPTION)
    if pending:
        await asyncio.wait(pending, timeout=ABORT_GRACE_SECONDS)
        for task in pending:
            task.cancel()
        await asyncio.gather(*pending, return_exceptions=True)

    errors = [t.exception() for t in tasks if not t.cancelled() and t.exception() is not None]
    if errors:
        local = [e for e in errors if isinstance(e, SessionAborted) and not e.remote]
        raise (local or errors)[0]
    return tasks[0].result(), tasks[1].result()


# ── End-to-end ───────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class SessionOutcome:
    report: SessionReport
    frame: PulseFrame
    records: DetectionRecords


def _bit_string(bits: NDArray[np.uint8]) -> str:
    return (np.asarray(bits, dtype=np.uint8) + ord("0")).astype(np.uint8).tobytes().decode("ascii")


def _slot_table(frame: PulseFrame, records: DetectionRecords, alice: AliceOutcome):
    labels = np.full(len(frame), "anti-coincidence", dtype=object)
    matched = frame.symbols.bases == records.bob_basis
    labels[matched & (records.decision == Decision.INCONCLUSIVE)] = "inconclusive"
    labels[alice.sample] = "sample"
    labels[alice.key_slots] = "key"
    return [
        SlotDiagnostic(slot=i, phi_a=phi_a, phi_b=phi_b, q=q, label=label)
        for i, (phi_a, phi_b, q, label) in enumerate(zip(
            frame.phi_a.tolist(), records.phi_b.tolist(), records.q.tolist(), labels.tolist(),
        ))
    ]


async def simulate_session(
    alice_cfg: AliceConfig,
    bob_cfg: BobConfig,
    channel_cfg: ChannelConfig,
    n_pulses: int,
    sample_fraction: float,
    seed: int,
    transport: Optional[Tuple[Transport, Transport]] = None,
    scenario: Optional[str] = None,
    include_slots: Optional[bool] = None,
) -> SessionOutcome:
    """run_session plus the frame and detection records the harness analyses."""
    if n_pulses <= 0:
        raise ConfigError(f"n_pulses must be positive, got {n_pulses}")
    if not 0 < sample_fraction < 1:
        raise ConfigError(f"sample_fraction must lie in (0, 1), got {sample_fraction}")
    include_slots = settings.REPORT_INCLUDE_SLOTS if include_slots is None else include_slots

    logger.info(
        f"Session {seed}: {n_pulses} pulses, {channel_cfg.mode.value}, "
        f"mu_signal={alice_cfg.mu_signal}, {channel_cfg.length_km} km"
    )
    streams = session_streams(seed)
    symbols = random_symbols(streams.alice_symbols, n_pulses)
    frame = build_frame(symbols, alice_cfg, channel_cfg.mode)
    pframe = propagate(frame, channel_cfg, streams.channel)
    bases = choose_bases(streams.bob_bases, n_pulses)
    records = measure_frame(pframe, bases, bob_cfg, streams.bob_noise)

    transcript = Transcript()
    if transport is None:
        alice_end, bob_end = queue_pair(transcript)
    else:
        alice_end, bob_end = transport
        alice_end.transcript = transcript
        bob_end.transcript = transcript

    alice = AliceEndpoint(seed, symbols, sample_fraction, streams.alice_sample, alice_end)
    bob = BobEndpoint(seed, records, bob_end)
    alice_out, bob_out = await run_endpoints(alice, bob)

    mu_eff = analysis.effective_mu(alice_cfg, bob_cfg, channel_cfg)
    sigma_sq = analysis.detector_variance(alice_cfg, bob_cfg, channel_cfg)
    qber_theory, _ = analysis.theoretical_postselection(mu_eff, sigma_sq, bob_cfg.threshold_q0)

    report = SessionReport(
        scenario=scenario,
        session_id=seed,
        seed=seed,
        mode=channel_cfg.mode,
        n_pulses=n_pulses,
        n_base_matched=alice_out.n_base_matched,
        n_inconclusive=int(np.count_nonzero(records.decision == Decision.INCONCLUSIVE)),
        n_kept=int(alice_out.kept.size),
        n_sample=int(alice_out.sample.size),
        n_sample_errors=alice_out.n_sample_errors,
        n_key_bits=int(alice_out.key.size),
        qber_estimate=alice_out.qber_estimate,
        mu_eff=mu_eff,
        sigma_sq=sigma_sq,
        qber_theory=qber_theory,
        sifted_key=_bit_string(alice_out.key),
        bob_sifted_key=_bit_string(bob_out.key),
        key_mismatches=int(np.count_nonzero(alice_out.key != bob_out.key)),
        transcript_sha256=transcript.hexdigest(),
        config={
            "alice": alice_cfg.model_dump(mode="json"),
            "bob": bob_cfg.model_dump(mode="json"),
            "channel": channel_cfg.model_dump(mode="json"),
            "n_pulses": n_pulses,
            "sample_fraction": sample_fraction,
        },
        slots=_slot_table(frame, records, alice_out) if include_slots else None,
    )
    logger.info(
        f"Session {seed} done: {report.n_base_matched} matched, {report.n_key_bits} key bits, "
        f"QBER {report.qber_estimate:.5f} (theory {qber_theory:.5f})"
    )
    return SessionOutcome(report=report, frame=frame, records=records)


async def run_session(
    alice_cfg: AliceConfig,
    bob_cfg: BobConfig,
    channel_cfg: ChannelConfig,
    n_pulses: int,
    sample_fraction: float,
    seed: int,
    transport: Optional[Tuple[Transport, Transport]] = None,
) -> SessionReport:
    """One full QKD session, deterministic in `seed`. Raises SessionAborted on failure."""
    outcome = await simulate_session(
        alice_cfg, bob_cfg, channel_cfg, n_pulses, sample_fraction, seed, transport,
    )
    return outcome.report
