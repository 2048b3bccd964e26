"""
HomodyneQKD — Transports
Ordered, reliable duplex message delivery between exactly two endpoints.

Two implementations share one contract:
- QueuePairTransport: in-process asyncio queues (tests, deterministic runs);
- StreamTransport: length-framed byte stream over a loopback TCP socket.

Both carry the encoded bytes, so each message crosses the codec exactly as
it would on a real link. Every sent frame is fed into a transcript digest.
"""
import asyncio
import hashlib
import logging
from abc import ABC, abstractmethod
from contextlib import asynccontextmanager
from typing import AsyncIterator, Optional, Tuple

from app.core.config import settings
from app.core.errors import FramingError, TransportClosedError
from app.schemas.schemas import Message
from app.services.protocol import decode_message, encode_message

logger = logging.getLogger(__name__)

HEADER_BYTES = 4


class Transcript:
    """Running SHA-256 over every frame sent by either endpoint, in send order."""

    def __init__(self):
        self._digest = hashlib.sha256()
        self.messages = 0

    def record(self, data: bytes) -> None:
        self._digest.update(len(data).to_bytes(HEADER_BYTES, "big"))
        self._digest.update(data)
        self.messages += 1

    def hexdigest(self) -> str:
        return self._digest.hexdigest()


class Transport(ABC):
    """One endpoint's view of the duplex link."""

    def __init__(self, name: str, transcript: Optional[Transcript] = None,
                 timeout: Optional[float] = None):
        self.name = name
        self.transcript = transcript
        self.timeout = settings.TRANSPORT_TIMEOUT_SECONDS if timeout is None else timeout

    async def send(self, message: Message) -> None:
        data = encode_message(message)
        if self.transcript is not None:
            self.transcript.record(data)
        logger.debug(f"{self.name} -> {message.type} ({len(data)} bytes)")
        await self.send_raw(data)

    async def recv(self) -> Message:
        try:
            data = await asyncio.wait_for(self.recv_raw(), timeout=self.timeout)
        except asyncio.TimeoutError as e:
            raise TransportClosedError(f"{self.name}: no message within {self.timeout}s") from e
        message = decode_message(data)
        logger.debug(f"{self.name} <- {message.type}")
        return message

    @abstractmethod
    async def send_raw(self, data: bytes) -> None:
        """Deliver one encoded message."""

    @abstractmethod
    async def recv_raw(self) -> bytes:
        """Next encoded message from the peer."""

    @abstractmethod
    async def close(self) -> None:
        pass


# ── In-process ───────────────────────────────────────────────────────────────
class QueuePairTransport(Transport):
    _CLOSED = object()

    def __init__(self, name: str, outbox: asyncio.Queue, inbox: asyncio.Queue,
                 transcript: Optional[Transcript] = None, timeout: Optional[float] = None):
        super().__init__(name, transcript, timeout)
        self._outbox = outbox
        self._inbox = inbox
        self._closed = False

    async def send_raw(self, data: bytes) -> None:
        if self._closed:
            raise TransportClosedError(f"{self.name}: send on a closed transport")
        await self._outbox.put(bytes(data))

    async def recv_raw(self) -> bytes:
        item = await self._inbox.get()
        if item is self._CLOSED:
            raise TransportClosedError(f"{self.name}: peer closed the link")
        return item

    async def close(self) -> None:
        if not self._closed:
            self._closed = True
            await self._outbox.put(self._CLOSED)


def queue_pair(transcript: Optional[Transcript] = None,
               timeout: Optional[float] = None) -> Tuple[QueuePairTransport, QueuePairTransport]:
    """(alice_end, bob_end) joined by two in-process queues."""
    a_to_b: asyncio.Queue = asyncio.Queue()
    b_to_a: asyncio.Queue = asyncio.Queue()
    alice = QueuePairTransport("alice", a_to_b, b_to_a, transcript, timeout)
    bob = QueuePairTransport("bob", b_to_a, a_to_b, transcript, timeout)
    return alice, bob


# ── Socket ───────────────────────────────────────────────────────────────────
class StreamTransport(Transport):
    """Frames are a 4-byte big-endian length followed by the encoded line."""

    def __init__(self, name: str, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 transcript: Optional[Transcript] = None, timeout: Optional[float] = None,
                 max_frame_bytes: Optional[int] = None):
        super().__init__(name, transcript, timeout)
        self._reader = reader
        self._writer = writer
        self.max_frame_bytes = max_frame_bytes or settings.MAX_FRAME_BYTES

    async def send_raw(self, data: bytes) -> None:
        if len(data) > self.max_frame_bytes:
            raise FramingError(f"frame of {len(data)} bytes exceeds {self.max_frame_bytes}")
        try:
            self._writer.write(len(data).to_bytes(HEADER_BYTES, "big") + data)
            await self._writer.drain()
        except (ConnectionError, RuntimeError) as e:
            raise TransportClosedError(f"{self.name}: {e}") from e

    async def recv_raw(self) -> bytes:
        try:
            header = await self._reader.readexactly(HEADER_BYTES)
        except asyncio.IncompleteReadError as e:
            if not e.partial:
                raise TransportClosedError(f"{self.name}: peer closed the link") from e
            raise FramingError("truncated frame header") from e
        except ConnectionError as e:
            raise TransportClosedError(f"{self.name}: {e}") from e

        length = int.from_bytes(header, "big")
        if length > self.max_frame_bytes:
            raise FramingError(f"frame of {length} bytes exceeds {self.max_frame_bytes}")
        try:
            return await self._reader.readexactly(length)
        except asyncio.IncompleteReadError as e:
            raise FramingError(
                f"truncated frame: got {len(e.partial)} of {length} bytes"
            ) from e

    async def close(self) -> None:
        if self._writer.is_closing():
            return
        self._writer.close()
        try:
            await self._writer.wait_closed()
        except ConnectionError:
            pass


@asynccontextmanager
async def socket_pair(
    host: Optional[str] = None,
    transcript: Optional[Transcript] = None,
    timeout: Optional[float] = None,
) -> AsyncIterator[Tuple[StreamTransport, StreamTransport]]:
    """(alice_end, bob_end) over a loopback TCP connection on an ephemeral port."""
    host = host or settings.TRANSPORT_HOST
    accepted: asyncio.Future = asyncio.get_running_loop().create_future()

    def on_connect(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        if not accepted.done():
            accepted.set_result((reader, writer))

    server = await asyncio.start_server(on_connect, host, 0)
    port = server.sockets[0].getsockname()[1]
    logger.info(f"Classical channel listening on {host}:{port}")

    alice_reader, alice_writer = await asyncio.open_connection(host, port)
    bob_reader, bob_writer = await accepted
    alice = StreamTransport("alice", alice_reader, alice_writer, transcript, timeout)
    bob = StreamTransport("bob", bob_reader, bob_writer, transcript, timeout)
    try:
        yield alice, bob
    finally:
        await alice.close()
        await bob.close()
        server.close()
        await server.wait_closed()
