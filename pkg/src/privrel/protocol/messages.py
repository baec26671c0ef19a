"""Wire frames and message payloads.

Frame layout (integers big-endian)::

    offset  size  field
    0       4     magic b"PRVL"
    4       1     frame version (FRAME_VERSION)
    5       1     message type
    6       1     flags, bit 0 = payload is deflate-compressed
    7       1     reserved, must be 0
    8       8     payload length (as stored, i.e. after compression)
    16      n     payload
    16+n    4     CRC-32 of bytes 0 .. 16+n

TABLE and RESULT payloads are deflate-compressed; all others are stored.

Payloads:

HELLO, GRID, LEVEL_COLUMN, ABORT
    UTF-8 JSON objects (floats written with full repr, so they round-trip).
PUBKEY
    u32 JSON length, JSON {"params": ...}, u64 + public key blob,
    u64 + evaluation key blob (formats in ``privrel.he.wire``).
TABLE, RESULT
    u32 JSON length, JSON header, then one u64-length-prefixed serialized
    ciphertext after another.  Ciphertexts are written and read one at a
    time so a table is never held twice in memory.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Iterator

from privrel.errors import FormatError, FramingError, ProtocolError
from privrel.he.core import Ciphertext, EvaluationKey, PublicKey
from privrel.he.params import SchemeParameters
from privrel.he.wire import (
    deserialize_ciphertext,
    deserialize_evaluation_key,
    deserialize_public_key,
    serialize_ciphertext,
    serialize_evaluation_key,
    serialize_public_key,
)
from privrel.protocol.tables import EncryptedSignatureTable, ResultVector, TableLayout

MAGIC = b"PRVL"
FRAME_VERSION = 1
PROTOCOL_VERSION = 1
HEADER = struct.Struct(">4sBBBBQ")
CRC = struct.Struct(">I")
FLAG_COMPRESSED = 0x01
DEFAULT_MAX_FRAME = 1 << 34
DEFAULT_COMPRESSION_LEVEL = 6


class MessageType(enum.IntEnum):
    HELLO = 1
    PUBKEY = 2
    GRID = 3
    LEVEL_COLUMN = 4
    TABLE = 5
    RESULT = 6
    ABORT = 7


COMPRESSED_TYPES = frozenset({MessageType.TABLE, MessageType.RESULT})


# -- frames ------------------------------------------------------------------------


def encode_frame(
    msg_type: MessageType,
    payload: bytes | Iterable[bytes],
    compression_level: int = DEFAULT_COMPRESSION_LEVEL,
) -> bytes:
    """Frame a payload; ``payload`` may be an iterable of chunks."""
    chunks = [payload] if isinstance(payload, (bytes, bytearray, memoryview)) else payload
    flags = 0
    if msg_type in COMPRESSED_TYPES:
        z = zlib.compressobj(compression_level)
        body = b"".join([z.compress(c) for c in chunks] + [z.flush()])
        flags |= FLAG_COMPRESSED
    else:
        body = b"".join(chunks)
    head = HEADER.pack(MAGIC, FRAME_VERSION, int(msg_type), flags, 0, len(body))
    crc = zlib.crc32(body, zlib.crc32(head))
    return head + body + CRC.pack(crc)


@dataclass(frozen=True)
class FrameHeader:
    msg_type: MessageType
    flags: int
    length: int


def parse_header(head: bytes, max_frame: int = DEFAULT_MAX_FRAME) -> FrameHeader:
    if len(head) != HEADER.size:
        raise FramingError(f"truncated frame header ({len(head)} of {HEADER.size} bytes)")
    magic, version, mtype, flags, reserved, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise FramingError("bad frame magic")
    if version != FRAME_VERSION:
        raise FramingError(f"unsupported frame version {version}")
    try:
        msg_type = MessageType(mtype)
    except ValueError:
        raise FramingError(f"unknown message type {mtype}") from None
    if reserved or flags & ~FLAG_COMPRESSED:
        raise FramingError("reserved frame bits set")
    if length > max_frame:
        raise FramingError(f"frame of {length} bytes exceeds the {max_frame}-byte cap")
    return FrameHeader(msg_type, flags, length)


def decode_frame(frame: bytes, max_frame: int = DEFAULT_MAX_FRAME) -> tuple[MessageType, bytes]:
    """Check a complete frame and return (type, decompressed payload)."""
    if len(frame) < HEADER.size + CRC.size:
        raise FramingError(f"truncated frame ({len(frame)} bytes)")
    hdr = parse_header(frame[: HEADER.size], max_frame)
    end = HEADER.size + hdr.length
    if len(frame) != end + CRC.size:
        raise FramingError(f"frame length mismatch: header says {hdr.length} payload bytes, got {len(frame) - HEADER.size - CRC.size}")
    (crc,) = CRC.unpack(frame[end:])
    if zlib.crc32(frame[:end]) != crc:
        raise FramingError("frame checksum mismatch")
    body = frame[HEADER.size : end]
    if hdr.flags & FLAG_COMPRESSED:
        try:
            body = zlib.decompress(body)
        except zlib.error as e:
            raise FramingError(f"corrupt compressed payload: {e}") from None
    return hdr.msg_type, body


# -- helpers -------------------------------------------------------------------------


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _unjson(payload: bytes, what: str) -> dict:
    try:
        obj = json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"malformed {what} payload: {e}") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{what} payload must be a JSON object")
    return obj


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = memoryview(blob)
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.blob):
            raise FormatError("truncated message payload")
        out = bytes(self.blob[self.pos : self.pos + k])
        self.pos += k
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.blob)


def grid_hash(times) -> str:
    return hashlib.sha256(_json([repr(float(t)) for t in times])).hexdigest()


# -- HELLO --------------------------------------------------------------------------


@dataclass(frozen=True)
class Hello:
    sender: str
    role: str
    params_id: str
    profile: str
    backend: str
    kappa: int
    grid_hash: str
    protocol: int = PROTOCOL_VERSION

    FIELDS = ("sender", "role", "params_id", "profile", "backend", "kappa", "grid_hash", "protocol")

    def encode(self) -> bytes:
        return encode_frame(MessageType.HELLO, _json({f: getattr(self, f) for f in self.FIELDS}))

    @classmethod
    def decode(cls, payload: bytes) -> "Hello":
        d = _unjson(payload, "HELLO")
        if set(d) != set(cls.FIELDS):
            raise FormatError(f"HELLO fields {sorted(d)} differ from {sorted(cls.FIELDS)}")
        return cls(**d)

    def mismatch(self, other: "Hello") -> str | None:
        """Name of the first disagreeing field, if any."""
        for f in ("protocol", "params_id", "profile", "backend", "kappa", "grid_hash"):
            if getattr(self, f) != getattr(other, f):
                return f
        return None


# -- PUBKEY -------------------------------------------------------------------------


def encode_pubkey(params: SchemeParameters, public_key: PublicKey, evaluation_key: EvaluationKey) -> bytes:
    head = _json({"params": params.to_dict()})
    pk = serialize_public_key(public_key)
    evk = serialize_evaluation_key(evaluation_key)
    parts = [struct.pack(">I", len(head)), head, struct.pack(">Q", len(pk)), pk, struct.pack(">Q", len(evk)), evk]
    return encode_frame(MessageType.PUBKEY, parts)


def decode_pubkey(payload: bytes) -> tuple[SchemeParameters, PublicKey, EvaluationKey]:
    cur = _Cursor(payload)
    head = _unjson(cur.take(cur.u32()), "PUBKEY")
    if set(head) != {"params"}:
        raise FormatError("PUBKEY header carries unexpected fields")
    params = SchemeParameters.from_dict(head["params"])
    pk = deserialize_public_key(cur.take(cur.u64()), params)
    evk = deserialize_evaluation_key(cur.take(cur.u64()), params)
    if not cur.exhausted:
        raise FormatError("trailing bytes in PUBKEY")
    if pk.key_id != evk.key_id:
        raise FormatError("public and evaluation keys belong to different key pairs")
    return params, pk, evk


# -- GRID / LEVEL_COLUMN / ABORT ---------------------------------------------------------


def encode_grid(times, kappa: int) -> bytes:
    return encode_frame(MessageType.GRID, _json({"times": [float(t) for t in times], "kappa": kappa}))


def decode_grid(payload: bytes) -> tuple[tuple[float, ...], int]:
    d = _unjson(payload, "GRID")
    if set(d) != {"times", "kappa"}:
        raise FormatError("GRID carries unexpected fields")
    return tuple(float(t) for t in d["times"]), int(d["kappa"])


def encode_level_column(type_index: int, levels) -> bytes:
    return encode_frame(MessageType.LEVEL_COLUMN, _json({"type_index": type_index, "levels": [int(l) for l in levels]}))


def decode_level_column(payload: bytes) -> tuple[int, tuple[int, ...]]:
    d = _unjson(payload, "LEVEL_COLUMN")
    if set(d) != {"type_index", "levels"}:
        raise FormatError("LEVEL_COLUMN carries unexpected fields")
    return int(d["type_index"]), tuple(int(l) for l in d["levels"])


def encode_abort(party: str, stage: str, reason: str) -> bytes:
    return encode_frame(MessageType.ABORT, _json({"party": party, "stage": stage, "reason": reason}))


class PeerAbort(ProtocolError):
    """Another party gave up; ``party`` and ``stage`` name where it failed."""


def decode_abort(payload: bytes) -> PeerAbort:
    d = _unjson(payload, "ABORT")
    return PeerAbort(f"peer aborted: {d.get('reason', '?')}", party=d.get("party"), stage=d.get("stage"))


# -- TABLE / RESULT ---------------------------------------------------------------------


TABLE_FIELDS = {"layout", "times", "kappa", "scale_exponent", "applied_mask", "params_id", "count"}
RESULT_FIELDS = {"layout", "times", "kappa", "scale_exponent", "K", "params_id"}


def _ciphertext_chunks(head: dict, cts: Iterable[Ciphertext]) -> Iterator[bytes]:
    h = _json(head)
    yield struct.pack(">I", len(h)) + h
    for ct in cts:
        blob = serialize_ciphertext(ct)
        yield struct.pack(">Q", len(blob)) + blob


def encode_table(table: EncryptedSignatureTable, compression_level: int = DEFAULT_COMPRESSION_LEVEL) -> bytes:
    head = {
        "layout": table.layout.to_dict(),
        "times": list(table.times),
        "kappa": table.kappa,
        "scale_exponent": table.scale_exponent,
        "applied_mask": list(table.applied_mask),
        "params_id": table.ciphertexts[0].params_id.hex(),
        "count": len(table.ciphertexts),
    }
    return encode_frame(MessageType.TABLE, _ciphertext_chunks(head, table.ciphertexts), compression_level)


def _read_head(cur: _Cursor, fields: set, what: str, params: SchemeParameters) -> dict:
    head = _unjson(cur.take(cur.u32()), what)
    if set(head) != fields:
        raise FormatError(f"{what} header fields {sorted(head)} differ from {sorted(fields)}")
    if head["params_id"] != params.params_id.hex():
        raise FormatError(f"{what} was produced under different scheme parameters")
    return head


def decode_table(payload: bytes, params: SchemeParameters) -> EncryptedSignatureTable:
    cur = _Cursor(payload)
    head = _read_head(cur, TABLE_FIELDS, "TABLE", params)
    layout = TableLayout.from_dict(head["layout"])
    if head["count"] != layout.ciphertext_count:
        raise FormatError("TABLE ciphertext count does not match its layout")
    cts = tuple(deserialize_ciphertext(cur.take(cur.u64()), params) for _ in range(head["count"]))
    if not cur.exhausted:
        raise FormatError("trailing bytes in TABLE")
    return EncryptedSignatureTable(
        layout,
        cts,
        tuple(float(t) for t in head["times"]),
        int(head["kappa"]),
        int(head["scale_exponent"]),
        tuple(bool(b) for b in head["applied_mask"]),
    )


def encode_result(result: ResultVector, compression_level: int = DEFAULT_COMPRESSION_LEVEL) -> bytes:
    head = {
        "layout": result.layout.to_dict(),
        "times": list(result.times),
        "kappa": result.kappa,
        "scale_exponent": result.scale_exponent,
        "K": result.K,
        "params_id": result.ciphertext.params_id.hex(),
    }
    return encode_frame(MessageType.RESULT, _ciphertext_chunks(head, [result.ciphertext]), compression_level)


def decode_result(payload: bytes, params: SchemeParameters) -> ResultVector:
    cur = _Cursor(payload)
    head = _read_head(cur, RESULT_FIELDS, "RESULT", params)
    ct = deserialize_ciphertext(cur.take(cur.u64()), params)
    if not cur.exhausted:
        raise FormatError("trailing bytes in RESULT")
    return ResultVector(
        ct,
        TableLayout.from_dict(head["layout"]),
        tuple(float(t) for t in head["times"]),
        int(head["kappa"]),
        int(head["scale_exponent"]),
        int(head["K"]),
    )
