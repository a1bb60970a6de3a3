import hashlib
import threading

import pytest

from pretzel import transport
from pretzel.errors import TransportError
from pretzel.rng import StreamRng


def test_zero_byte_roundtrip():
    a, b = transport.pair_inmemory()
    a.send_frame(transport.TAG_HELLO, b"")
    frame = b.recv_frame()
    assert frame.tag == transport.TAG_HELLO and frame.payload == b""


def test_large_payload_integrity():
    a, b = transport.pair_inmemory()
    payload = StreamRng(b"big").randbytes(1 << 20)
    a.send_frame(transport.TAG_MODEL_CHUNK, payload)
    got = b.recv_frame().payload
    assert hashlib.sha256(got).digest() == hashlib.sha256(payload).digest()


def test_oversize_frame_latches_channel():
    a, _ = transport.pair_inmemory()
    with pytest.raises(TransportError):
        a.send_frame(transport.TAG_OUTPUT, b"x" * (transport.MAX_FRAME + 1))
    with pytest.raises(TransportError):
        a.send_frame(transport.TAG_OUTPUT, b"fine")  # unusable thereafter


def test_close_mid_frame_is_typed_error():
    a, b = transport.pair_inmemory()
    a.close()
    with pytest.raises(TransportError):
        b.recv_frame()


def test_counters_match_across_directions():
    a, b = transport.pair_inmemory()
    a.send_frame(transport.TAG_HELLO, b"hi")
    a.send_frame(transport.TAG_OUTPUT, b"world")
    b.recv_frame()
    b.recv_frame()
    assert a.counters.bytes_sent == b.counters.bytes_received
    assert a.counters.frames_sent == b.counters.frames_received == 2
    assert a.counters.sent_by_tag[transport.TAG_HELLO] == 5 + 2
    assert a.counters.sent_frames_by_tag[transport.TAG_OUTPUT] == 1
    assert b.counters.received_by_tag[transport.TAG_OUTPUT] == 5 + 5


def test_ordering_under_burst():
    a, b = transport.pair_inmemory()
    for i in range(100):
        a.send_frame(transport.TAG_OT_MSG, bytes([i]))
    got = [b.recv_frame().payload[0] for _ in range(100)]
    assert got == list(range(100))


def test_concurrent_channels_do_not_interleave():
    pairs = [transport.pair_inmemory() for _ in range(4)]

    def pump(idx):
        a, b = pairs[idx]
        for i in range(50):
            a.send_frame(transport.TAG_OT_MSG, bytes([idx, i]))
        for i in range(50):
            assert b.recv_frame().payload == bytes([idx, i])

    threads = [threading.Thread(target=pump, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def test_socket_loopback():
    listener = transport.listen("127.0.0.1", 0)
    host, port = listener.address
    result = {}

    def server():
        ch = listener.accept()
        frame = ch.recv_frame()
        ch.send_frame(frame.tag, frame.payload[::-1])
        result["server_counters"] = ch.counters
        ch.close()

    t = threading.Thread(target=server)
    t.start()
    ch = transport.connect(host, port)
    ch.send_frame(transport.TAG_HELLO, b"abcdef")
    assert ch.recv_frame().payload == b"fedcba"
    t.join()
    assert ch.counters.bytes_sent == result["server_counters"].bytes_received
    ch.close()
    listener.close()


def test_connect_failure_is_typed():
    with pytest.raises(TransportError):
        transport.connect("127.0.0.1", 1)  # nothing listens on port 1
