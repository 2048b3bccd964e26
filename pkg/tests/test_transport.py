"""Transports: in-process queues, loopback socket framing and the transcript digest."""
import asyncio
import hashlib

import pytest

from app.core.errors import FramingError, MalformedMessageError, TransportClosedError
from app.schemas.schemas import Abort, BasisAnnounce, SiftResult
from app.services.protocol import encode_message
from app.services.transport import StreamTransport, Transcript, queue_pair, socket_pair


async def _raw_stream_pair():
    """A StreamTransport for Bob and the bare writer of the other end."""
    accepted = asyncio.get_running_loop().create_future()

    def on_connect(reader, writer):
        accepted.set_result((reader, writer))

    server = await asyncio.start_server(on_connect, "127.0.0.1", 0)
    port = server.sockets[0].getsockname()[1]
    _, raw_writer = await asyncio.open_connection("127.0.0.1", port)
    reader, writer = await accepted
    return server, StreamTransport("bob", reader, writer, timeout=2.0), raw_writer


class TestQueuePair:
    @pytest.mark.asyncio
    async def test_ordered_duplex_delivery(self):
        alice, bob = queue_pair()
        for i in range(5):
            await bob.send(BasisAnnounce(session_id=1, first_slot=i, bases=[i % 2]))
        await alice.send(SiftResult(session_id=1, kept_slots=[0, 3]))
        got = [await alice.recv() for _ in range(5)]
        assert [m.first_slot for m in got] == list(range(5))
        assert await bob.recv() == SiftResult(session_id=1, kept_slots=[0, 3])

    @pytest.mark.asyncio
    async def test_close_is_seen_by_peer(self):
        alice, bob = queue_pair()
        await alice.close()
        with pytest.raises(TransportClosedError):
            await bob.recv()
        with pytest.raises(TransportClosedError):
            await alice.send(Abort(session_id=0, reason="late"))

    @pytest.mark.asyncio
    async def test_silent_peer_times_out(self):
        alice, _ = queue_pair(timeout=0.05)
        with pytest.raises(TransportClosedError):
            await alice.recv()

    @pytest.mark.asyncio
    async def test_raw_bytes_go_through_the_decoder(self):
        alice, bob = queue_pair()
        await alice.send_raw(b"{oops\n")
        with pytest.raises(MalformedMessageError):
            await bob.recv()


class TestTranscript:
    @pytest.mark.asyncio
    async def test_digest_over_length_prefixed_frames(self):
        transcript = Transcript()
        alice, bob = queue_pair(transcript)
        m1 = BasisAnnounce(session_id=2, first_slot=0, bases=[1, 0])
        m2 = SiftResult(session_id=2, kept_slots=[1])
        await bob.send(m1)
        await alice.send(m2)

        expected = hashlib.sha256()
        for m in (m1, m2):
            data = encode_message(m)
            expected.update(len(data).to_bytes(4, "big") + data)
        assert transcript.messages == 2
        assert transcript.hexdigest() == expected.hexdigest()


class TestSocketPair:
    @pytest.mark.asyncio
    async def test_round_trip_over_loopback(self):
        async with socket_pair() as (alice, bob):
            await bob.send(BasisAnnounce(session_id=9, first_slot=0, bases=[0, 1, 1]))
            await alice.send(SiftResult(session_id=9, kept_slots=[1, 2]))
            assert (await alice.recv()).bases == [0, 1, 1]
            assert (await bob.recv()).kept_slots == [1, 2]

    @pytest.mark.asyncio
    async def test_large_message_survives_framing(self):
        bases = [i % 2 for i in range(200_000)]
        async with socket_pair() as (alice, bob):
            await bob.send(BasisAnnounce(session_id=0, first_slot=0, bases=bases))
            assert (await alice.recv()).bases == bases

    @pytest.mark.asyncio
    async def test_peer_close(self):
        server, bob, raw = await _raw_stream_pair()
        raw.close()
        with pytest.raises(TransportClosedError):
            await bob.recv()
        await bob.close()
        server.close()

    @pytest.mark.asyncio
    async def test_truncated_payload(self):
        server, bob, raw = await _raw_stream_pair()
        raw.write((100).to_bytes(4, "big") + b'{"type"')
        await raw.drain()
        raw.close()
        with pytest.raises(FramingError):
            await bob.recv()
        await bob.close()
        server.close()

    @pytest.mark.asyncio
    async def test_truncated_header(self):
        server, bob, raw = await _raw_stream_pair()
        raw.write(b"\x00\x00")
        await raw.drain()
        raw.close()
        with pytest.raises(FramingError):
            await bob.recv()
        await bob.close()
        server.close()

    @pytest.mark.asyncio
    async def test_oversized_frame_rejected(self):
        server, bob, raw = await _raw_stream_pair()
        bob.max_frame_bytes = 16
        raw.write((1 << 20).to_bytes(4, "big"))
        await raw.drain()
        with pytest.raises(FramingError):
            await bob.recv()
        raw.close()
        await bob.close()
        server.close()
