"""Binary formats for ciphertexts and key material.

Every object starts with the same header::

    magic   4 bytes  b"PRHE"
    version u8       WIRE_VERSION
    kind    u8       1 ciphertext, 2 public key, 3 secret key, 4 evaluation key
    backend u8 length + ascii name
    params  16 bytes params_id
    key id  16 bytes
    level   u16      (ciphertexts only)

Polynomials are stored as n coefficients in [0, q), each little-endian at
the byte width of q - 1.  Slot vectors of the debug backend use the byte
width of t - 1.  Integers in headers are big-endian.
"""

from __future__ import annotations

import struct
from typing import Callable

from privrel.errors import FormatError
from privrel.he.core import Ciphertext, EvaluationKey, PublicKey, SecretKey
from privrel.he.params import SchemeParameters
from privrel.he.ring import byte_width

MAGIC = b"PRHE"
WIRE_VERSION = 1

KIND_CIPHERTEXT = 1
KIND_PUBLIC_KEY = 2
KIND_SECRET_KEY = 3
KIND_EVALUATION_KEY = 4


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.blob):
            raise FormatError("truncated HE object")
        out = self.blob[self.pos : self.pos + k]
        self.pos += k
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> None:
        if self.pos != len(self.blob):
            raise FormatError(f"{len(self.blob) - self.pos} trailing bytes after HE object")


def _header(kind: int, backend: str, params: SchemeParameters, key_id: bytes) -> bytes:
    name = backend.encode("ascii")
    return MAGIC + struct.pack(">BBB", WIRE_VERSION, kind, len(name)) + name + params.params_id + key_id


def _read_header(r: _Reader, kind: int, params: SchemeParameters) -> tuple[str, bytes]:
    if r.take(4) != MAGIC:
        raise FormatError("bad magic bytes: not a serialized HE object")
    version, got_kind, name_len = r.unpack(">BBB")
    if version != WIRE_VERSION:
        raise FormatError(f"unsupported HE wire version {version} (expected {WIRE_VERSION})")
    if got_kind != kind:
        raise FormatError(f"expected HE object kind {kind}, found {got_kind}")
    backend = r.take(name_len).decode("ascii")
    if r.take(16) != params.params_id:
        raise FormatError("HE object was produced under different scheme parameters")
    return backend, r.take(16)


def _write_poly(out: list[bytes], poly, width: int) -> None:
    out.append(b"".join(c.to_bytes(width, "little") for c in poly))


def _read_poly(r: _Reader, n: int, width: int, bound: int) -> list[int]:
    raw = r.take(n * width)
    fb = int.from_bytes
    poly = [fb(raw[i : i + width], "little") for i in range(0, n * width, width)]
    if max(poly) >= bound:
        raise FormatError("coefficient out of range")
    return poly


def _switching_keys(out: list[bytes], keys, width: int) -> None:
    out.append(struct.pack(">H", len(keys)))
    for k0, k1 in keys:
        _write_poly(out, k0, width)
        _write_poly(out, k1, width)


def _read_switching_keys(r: _Reader, n: int, width: int, q: int):
    (count,) = r.unpack(">H")
    return [(_read_poly(r, n, width, q), _read_poly(r, n, width, q)) for _ in range(count)]


# -- ciphertexts ---------------------------------------------------------------


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    p = ct.params
    out = [_header(KIND_CIPHERTEXT, ct.backend, p, ct.key_id), struct.pack(">H", ct.level)]
    if ct.backend == "bfv":
        width = byte_width(p.ciphertext_modulus - 1)
        out.append(struct.pack(">B", len(ct.data)))
        for c0, c1 in ct.data:
            _write_poly(out, c0, width)
            _write_poly(out, c1, width)
    elif ct.backend == "debug":
        slots, tag = ct.data
        _write_poly(out, slots, byte_width(p.plaintext_modulus - 1))
        out.append(tag)
    else:
        raise FormatError(f"no wire format for backend {ct.backend!r}")
    return b"".join(out)


def deserialize_ciphertext(blob: bytes, params: SchemeParameters) -> Ciphertext:
    r = _Reader(blob)
    backend, key_id = _read_header(r, KIND_CIPHERTEXT, params)
    (level,) = r.unpack(">H")
    if level > params.depth_budget:
        raise FormatError(f"ciphertext level {level} exceeds the depth budget")
    n = params.ring_dimension
    if backend == "bfv":
        q = params.ciphertext_modulus
        width = byte_width(q - 1)
        (parts,) = r.unpack(">B")
        if parts != len(params.plaintext_moduli):
            raise FormatError("ciphertext has the wrong number of CRT parts")
        data = tuple((_read_poly(r, n, width, q), _read_poly(r, n, width, q)) for _ in range(parts))
    elif backend == "debug":
        T = params.plaintext_modulus
        data = (_read_poly(r, n, byte_width(T - 1), T), r.take(8))
    else:
        raise FormatError(f"unknown backend {backend!r}")
    r.done()
    return Ciphertext(params, backend, key_id, level, data)


# -- keys ------------------------------------------------------------------------


def serialize_public_key(pk: PublicKey) -> bytes:
    out = [_header(KIND_PUBLIC_KEY, pk.backend, pk.params, pk.key_id)]
    if pk.backend == "bfv":
        width = byte_width(pk.params.ciphertext_modulus - 1)
        for poly in pk.data:
            _write_poly(out, poly, width)
    return b"".join(out)


def deserialize_public_key(blob: bytes, params: SchemeParameters) -> PublicKey:
    r = _Reader(blob)
    backend, key_id = _read_header(r, KIND_PUBLIC_KEY, params)
    data = None
    if backend == "bfv":
        q = params.ciphertext_modulus
        width = byte_width(q - 1)
        n = params.ring_dimension
        data = (_read_poly(r, n, width, q), _read_poly(r, n, width, q))
    r.done()
    return PublicKey(params, backend, key_id, data)


def serialize_secret_key(sk: SecretKey) -> bytes:
    out = [_header(KIND_SECRET_KEY, sk.backend, sk.params, sk.key_id)]
    if sk.backend == "bfv":
        out.append(bytes(x + 1 for x in sk.data))
    return b"".join(out)


def deserialize_secret_key(blob: bytes, params: SchemeParameters) -> SecretKey:
    r = _Reader(blob)
    backend, key_id = _read_header(r, KIND_SECRET_KEY, params)
    data = None
    if backend == "bfv":
        raw = r.take(params.ring_dimension)
        if max(raw) > 2:
            raise FormatError("secret key coefficient out of range")
        data = [b - 1 for b in raw]
    r.done()
    return SecretKey(params, backend, key_id, data)


def serialize_evaluation_key(evk: EvaluationKey) -> bytes:
    out = [_header(KIND_EVALUATION_KEY, evk.backend, evk.params, evk.key_id)]
    elements = sorted(evk.galois)
    if evk.backend == "bfv":
        width = byte_width(evk.params.ciphertext_modulus - 1)
        _switching_keys(out, evk.relin, width)
        out.append(struct.pack(">H", len(elements)))
        for g in elements:
            out.append(struct.pack(">I", g))
            _switching_keys(out, evk.galois[g], width)
    else:
        out.append(struct.pack(">H", len(elements)))
        out.extend(struct.pack(">I", g) for g in elements)
    return b"".join(out)


def deserialize_evaluation_key(blob: bytes, params: SchemeParameters) -> EvaluationKey:
    r = _Reader(blob)
    backend, key_id = _read_header(r, KIND_EVALUATION_KEY, params)
    n, q = params.ring_dimension, params.ciphertext_modulus
    if backend == "bfv":
        width = byte_width(q - 1)
        relin = _read_switching_keys(r, n, width, q)
        (count,) = r.unpack(">H")
        galois = {}
        for _ in range(count):
            (g,) = r.unpack(">I")
            galois[g] = _read_switching_keys(r, n, width, q)
    else:
        relin = None
        (count,) = r.unpack(">H")
        galois = {r.unpack(">I")[0]: None for _ in range(count)}
    r.done()
    return EvaluationKey(params, backend, key_id, relin, galois)


_READERS: dict[int, Callable] = {
    KIND_CIPHERTEXT: deserialize_ciphertext,
    KIND_PUBLIC_KEY: deserialize_public_key,
    KIND_SECRET_KEY: deserialize_secret_key,
    KIND_EVALUATION_KEY: deserialize_evaluation_key,
}


def peek_kind(blob: bytes) -> int:
    """Object kind of a serialized blob, after checking magic and version."""
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise FormatError("bad magic bytes: not a serialized HE object")
    if blob[4] != WIRE_VERSION:
        raise FormatError(f"unsupported HE wire version {blob[4]} (expected {WIRE_VERSION})")
    return blob[5]


def deserialize(blob: bytes, params: SchemeParameters):
    kind = peek_kind(blob)
    try:
        return _READERS[kind](blob, params)
    except KeyError:
        raise FormatError(f"unknown HE object kind {kind}") from None
