import os
import socket
import struct

import pytest

from privrel.errors import FramingError, TransportError
from privrel.protocol.messages import MessageType, encode_frame
from privrel.protocol.transcript import Transcript
from privrel.transport import PREAMBLE_MAGIC, PREAMBLE_VERSION, LoopbackNetwork, TcpEndpoint


@pytest.fixture
def pair():
    a = TcpEndpoint("a", ("127.0.0.1", 0), connect_timeout=5)
    b = TcpEndpoint("b", ("127.0.0.1", 0), connect_timeout=5)
    a.peers["b"] = b.address
    b.peers["a"] = a.address
    yield a, b
    a.close()
    b.close()


def test_loopback_delivers_in_order():
    net = LoopbackNetwork()
    tr = Transcript()
    a, b = net.endpoint("a", tr), net.endpoint("b", tr, record_frames=True)
    for i in range(3):
        a.send("b", encode_frame(MessageType.GRID, bytes([i])))
    got = [b.recv(1) for _ in range(3)]
    assert [d.payload for d in got] == [b"\x00", b"\x01", b"\x02"]
    assert all(d.sender == "a" and d.msg_type == MessageType.GRID for d in got)
    assert len(b.inbound_frames) == 3
    assert len(tr.messages("a", "send")) == 3 and len(tr.messages("b", "recv")) == 3


def test_loopback_timeout():
    b = LoopbackNetwork().endpoint("b")
    with pytest.raises(TransportError):
        b.recv(0.05)


def test_tcp_round_trip(pair):
    a, b = pair
    a.send("b", encode_frame(MessageType.HELLO, b"hi"))
    d = b.recv(5)
    assert (d.sender, d.msg_type, d.payload) == ("a", MessageType.HELLO, b"hi")
    b.send("a", encode_frame(MessageType.RESULT, b"x" * 5000))
    assert a.recv(5).payload == b"x" * 5000


def test_tcp_100_megabyte_frame(pair):
    a, b = pair
    payload = os.urandom(1 << 16) * 1600  # 100 MiB + change
    a.send("b", encode_frame(MessageType.GRID, payload))
    d = b.recv(60)
    assert d.payload == payload


def _raw_connect(endpoint, name=b"evil"):
    s = socket.create_connection(endpoint.address)
    s.sendall(PREAMBLE_MAGIC + bytes([PREAMBLE_VERSION]) + struct.pack(">H", len(name)) + name)
    return s


def test_truncated_frame_is_framing_error(pair):
    _, b = pair
    frame = encode_frame(MessageType.GRID, b"z" * 1000)
    s = _raw_connect(b)
    s.sendall(frame[:500])
    s.close()
    with pytest.raises(FramingError, match="evil"):
        b.recv(5)


def test_corrupt_frame_is_framing_error(pair):
    _, b = pair
    frame = bytearray(encode_frame(MessageType.GRID, b"z" * 100))
    frame[40] ^= 0xFF
    s = _raw_connect(b)
    s.sendall(bytes(frame))
    with pytest.raises(FramingError, match="checksum"):
        b.recv(5)
    s.close()


def test_bad_preamble(pair):
    _, b = pair
    s = socket.create_connection(b.address)
    s.sendall(b"GET / HTTP/1.1\r\n\r\n")
    s.close()
    with pytest.raises(FramingError, match="preamble"):
        b.recv(5)


def test_unreachable_peer():
    a = TcpEndpoint("a", ("127.0.0.1", 0), connect_timeout=0.3)
    probe = socket.create_server(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    a.peers["b"] = ("127.0.0.1", port)
    with a, pytest.raises(TransportError, match="unreachable"):
        a.send("b", encode_frame(MessageType.HELLO, b""))


def test_unknown_peer_and_busy_port(pair):
    a, _ = pair
    with pytest.raises(TransportError, match="no address"):
        a.send("nobody", encode_frame(MessageType.HELLO, b""))
    with pytest.raises(TransportError, match="cannot listen"):
        TcpEndpoint("c", a.address)
