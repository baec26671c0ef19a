"""Frame delivery between parties: in-process queues or TCP sockets.

Both transports move complete protocol frames.  A receiver validates the
header, length and checksum before anything reaches a party, so a
truncated or corrupted frame surfaces as ``FramingError`` and never as a
partial message.  Payloads are already homomorphic ciphertexts; channel
authentication, if wanted, belongs in a standard secure-channel wrapper.

TCP: one connection per ordered (sender, receiver) pair, opened lazily.
Each connection starts with a preamble naming the sender::

    b"PRVC"  u8 version  u16 name length  name (utf-8)

and then carries frames back to back.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass

from privrel.errors import FramingError, TransportError
from privrel.protocol.messages import CRC, DEFAULT_MAX_FRAME, HEADER, MessageType, decode_frame, parse_header
from privrel.protocol.transcript import Transcript

log = logging.getLogger(__name__)

PREAMBLE_MAGIC = b"PRVC"
PREAMBLE_VERSION = 1
DEFAULT_TIMEOUT = 900.0


@dataclass(frozen=True)
class Delivery:
    sender: str
    msg_type: MessageType
    payload: bytes
    size: int


class Endpoint(ABC):
    """One party's view of the network."""

    def __init__(self, name: str, transcript: Transcript | None = None, record_frames: bool = False):
        self.name = name
        self.transcript = transcript
        self.record_frames = record_frames
        self.inbound_frames: list[tuple[str, bytes]] = []

    def send(self, dest: str, frame: bytes) -> None:
        msg_type = MessageType(frame[5])
        self._send(dest, frame)
        if self.transcript:
            self.transcript.record(self.name, "send", peer=dest, type=msg_type.name, bytes=len(frame))

    def recv(self, timeout: float | None = DEFAULT_TIMEOUT) -> Delivery:
        sender, frame = self._recv(timeout)
        if self.record_frames:
            self.inbound_frames.append((sender, frame))
        try:
            msg_type, payload = decode_frame(frame)
        except FramingError as e:
            raise FramingError(f"from {sender}: {e}", party=self.name) from None
        if self.transcript:
            self.transcript.record(self.name, "recv", peer=sender, type=msg_type.name, bytes=len(frame))
        return Delivery(sender, msg_type, payload, len(frame))

    @abstractmethod
    def _send(self, dest: str, frame: bytes) -> None: ...

    @abstractmethod
    def _recv(self, timeout: float | None) -> tuple[str, bytes]: ...

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- in-process ------------------------------------------------------------------


class LoopbackNetwork:
    """Queues between endpoints in one process, with the same framing as TCP."""

    def __init__(self):
        self._queues: dict[str, queue.Queue] = {}
        self._lock = threading.Lock()

    def _queue(self, name: str) -> queue.Queue:
        with self._lock:
            return self._queues.setdefault(name, queue.Queue())

    def endpoint(self, name: str, transcript: Transcript | None = None, record_frames: bool = False) -> "LoopbackEndpoint":
        return LoopbackEndpoint(self, name, transcript, record_frames)


class LoopbackEndpoint(Endpoint):
    def __init__(self, network: LoopbackNetwork, name: str, transcript=None, record_frames=False):
        super().__init__(name, transcript, record_frames)
        self.network = network
        self._inbox = network._queue(name)

    def _send(self, dest: str, frame: bytes) -> None:
        self.network._queue(dest).put((self.name, bytes(frame)))

    def _recv(self, timeout):
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"no message within {timeout} s", party=self.name) from None


# -- TCP --------------------------------------------------------------------------


def _recv_exact(sock: socket.socket, k: int) -> bytes:
    buf = bytearray(k)
    view = memoryview(buf)
    got = 0
    while got < k:
        n = sock.recv_into(view[got:], min(k - got, 1 << 20))
        if n == 0:
            break
        got += n
    return bytes(buf[:got])


def read_frame(sock: socket.socket, max_frame: int = DEFAULT_MAX_FRAME) -> bytes | None:
    """Next complete frame from a stream, ``None`` on a clean end of stream."""
    head = _recv_exact(sock, HEADER.size)
    if not head:
        return None
    hdr = parse_header(head, max_frame)
    rest = _recv_exact(sock, hdr.length + CRC.size)
    if len(rest) != hdr.length + CRC.size:
        raise FramingError(f"connection closed inside a {hdr.msg_type.name} frame ({len(rest)} of {hdr.length + CRC.size} bytes)")
    return head + rest


class TcpEndpoint(Endpoint):
    """Listens on ``bind`` and connects to peers on demand.

    ``peers`` maps party names to (host, port).  Port 0 binds an ephemeral
    port; read it back from ``address``.
    """

    def __init__(
        self,
        name: str,
        bind: tuple[str, int],
        peers: dict[str, tuple[str, int]] | None = None,
        transcript: Transcript | None = None,
        record_frames: bool = False,
        connect_timeout: float = 30.0,
        max_frame: int = DEFAULT_MAX_FRAME,
    ):
        super().__init__(name, transcript, record_frames)
        self.peers = dict(peers or {})
        self.connect_timeout = connect_timeout
        self.max_frame = max_frame
        self._inbox: queue.Queue = queue.Queue()
        self._out: dict[str, socket.socket] = {}
        self._out_lock = threading.Lock()
        self._closed = threading.Event()
        self._conns: list[socket.socket] = []
        try:
            self._server = socket.create_server(bind, reuse_port=False)
        except OSError as e:
            raise TransportError(f"cannot listen on {bind[0]}:{bind[1]}: {e}", party=name) from None
        self._server.settimeout(0.2)
        self._acceptor = threading.Thread(target=self._accept_loop, name=f"{name}-accept", daemon=True)
        self._acceptor.start()

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.getsockname()[:2]
        return host, port

    def _accept_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            self._conns.append(conn)
            threading.Thread(target=self._reader, args=(conn,), name=f"{self.name}-reader", daemon=True).start()

    def _reader(self, conn: socket.socket) -> None:
        sender = "?"
        try:
            pre = _recv_exact(conn, 7)
            if len(pre) != 7 or pre[:4] != PREAMBLE_MAGIC or pre[4] != PREAMBLE_VERSION:
                raise FramingError("bad connection preamble")
            (name_len,) = struct.unpack(">H", pre[5:7])
            try:
                sender = _recv_exact(conn, name_len).decode("utf-8")
            except UnicodeDecodeError:
                raise FramingError("bad connection preamble") from None
            while True:
                frame = read_frame(conn, self.max_frame)
                if frame is None:
                    return
                self._inbox.put((sender, frame))
        except FramingError as e:
            if not self._closed.is_set():
                self._inbox.put(FramingError(f"from {sender}: {e}", party=self.name))
        except OSError as e:
            if not self._closed.is_set():
                self._inbox.put(TransportError(f"connection from {sender} failed: {e}", party=self.name))

    def _connect(self, dest: str) -> socket.socket:
        try:
            addr = self.peers[dest]
        except KeyError:
            raise TransportError(f"no address for party {dest!r}", party=self.name) from None
        deadline = time.monotonic() + self.connect_timeout
        delay = 0.05
        while True:
            try:
                sock = socket.create_connection(addr, timeout=self.connect_timeout)
                break
            except OSError as e:
                if time.monotonic() >= deadline:
                    raise TransportError(f"{dest} unreachable at {addr[0]}:{addr[1]}: {e}", party=self.name) from None
                time.sleep(delay)
                delay = min(delay * 2, 1.0)
        sock.settimeout(None)
        name = self.name.encode("utf-8")
        sock.sendall(PREAMBLE_MAGIC + bytes([PREAMBLE_VERSION]) + struct.pack(">H", len(name)) + name)
        return sock

    def _send(self, dest: str, frame: bytes) -> None:
        with self._out_lock:
            sock = self._out.get(dest)
            if sock is None:
                sock = self._out[dest] = self._connect(dest)
            try:
                sock.sendall(frame)
            except OSError as e:
                self._out.pop(dest, None)
                raise TransportError(f"sending to {dest} failed: {e}", party=self.name) from None

    def _recv(self, timeout):
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"no message within {timeout} s", party=self.name) from None
        if isinstance(item, Exception):
            raise item
        return item

    def close(self) -> None:
        self._closed.set()
        with self._out_lock:
            for sock in self._out.values():
                try:
                    sock.shutdown(socket.SHUT_WR)
                except OSError:
                    pass
                sock.close()
            self._out.clear()
        self._server.close()
        for conn in self._conns:
            try:
                conn.close()
            except OSError:
                pass
