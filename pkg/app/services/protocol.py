"""
HomodyneQKD — Classical Protocol
Basis sifting, QBER estimation and the wire codec.

Wire format: one flat JSON object per message, UTF-8, terminated by a
single LF. Only integers, integer arrays and the abort reason travel.
"""
import json
import logging
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import ValidationError

from app.core.errors import (
    EmptySampleError,
    FramingError,
    LengthMismatchError,
    MalformedMessageError,
    NonMonotoneSlotsError,
    UnknownMessageTypeError,
)
from app.schemas.schemas import (
    MESSAGE_TYPES,
    Message,
    SampleRequest,
    SampleReveal,
    SiftResult,
)
from app.services.bob import DetectionRecords

logger = logging.getLogger(__name__)


# ── Sifting and estimation ───────────────────────────────────────────────────
def sift(alice_bases: ArrayLike, bob_records: DetectionRecords) -> NDArray[np.int64]:
    """Slots where the bases coincide and Bob's outcome is conclusive, in order."""
    alice_bases = np.asarray(alice_bases)
    if alice_bases.size != len(bob_records):
        raise LengthMismatchError(
            f"{alice_bases.size} Alice bases against {len(bob_records)} detection records"
        )
    keep = (alice_bases == bob_records.bob_basis) & bob_records.conclusive
    return np.flatnonzero(keep).astype(np.int64)


def estimate_qber(alice_bits: ArrayLike, bob_bits: ArrayLike) -> float:
    """Fraction of disagreeing positions in the revealed sample."""
    alice_bits = np.asarray(alice_bits)
    bob_bits = np.asarray(bob_bits)
    if alice_bits.size != bob_bits.size:
        raise LengthMismatchError(f"{alice_bits.size} bits against {bob_bits.size}")
    if alice_bits.size == 0:
        raise EmptySampleError("QBER is undefined on an empty sample")
    return float(np.count_nonzero(alice_bits != bob_bits)) / alice_bits.size


# ── Invariants ───────────────────────────────────────────────────────────────
def check_slots(slots: Sequence[int]) -> None:
    for prev, cur in zip(slots, slots[1:]):
        if cur <= prev:
            raise NonMonotoneSlotsError("non-monotone slot list")


def check_message(message: Message) -> None:
    if isinstance(message, SiftResult):
        check_slots(message.kept_slots)
    elif isinstance(message, SampleRequest):
        check_slots(message.slots)


def check_reveal(request: SampleRequest, reveal: SampleReveal) -> None:
    if len(reveal.bits) != len(request.slots):
        raise LengthMismatchError(
            f"{len(reveal.bits)} revealed bits for {len(request.slots)} requested slots"
        )


# ── Codec ────────────────────────────────────────────────────────────────────
def encode_message(m: Message) -> bytes:
    check_message(m)
    line = json.dumps(m.model_dump(mode="json"), separators=(",", ":"), ensure_ascii=False)
    return line.encode("utf-8") + b"\n"


def decode_message(data: bytes) -> Message:
    if not data.endswith(b"\n"):
        raise FramingError("truncated message: missing line terminator")
    body = data[:-1]
    if b"\n" in body:
        raise FramingError("more than one line in a single message")

    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedMessageError(f"undecodable message: {e}") from e
    if not isinstance(payload, dict):
        raise MalformedMessageError("message is not a JSON object")

    tag = payload.get("type")
    model = MESSAGE_TYPES.get(tag) if isinstance(tag, str) else None
    if model is None:
        raise UnknownMessageTypeError(f"unknown message type {tag!r}")

    try:
        message = model.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise MalformedMessageError(f"invalid {tag} field {where}: {first['msg']}") from e

    check_message(message)
    return message
