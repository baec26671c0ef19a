import random

import pytest

from privrel.errors import (
    DepthError,
    FormatError,
    IntegrityError,
    ParameterError,
    ParamsMismatchError,
    PlaintextRangeError,
)
from privrel.he import get_backend, wire
from privrel.he.batching import rotate_slots, swap_slot_rows
from privrel.he.core import Sampler
from privrel.he.params import PROFILE_TABLE, get_profile, make_parameters, security_level
from privrel.he.ring import Ring

TINY = make_parameters("tiny", 64, 20, 1, 2, insecure=True)
BACKENDS = ["debug", "bfv"]


def centered(x, t):
    x %= t
    return x - t if x > t // 2 else x


@pytest.fixture(scope="module", params=BACKENDS)
def setup(request):
    backend = get_backend(request.param)
    n = TINY.ring_dimension
    galois = [pow(3, s, 2 * n) for s in (1, 4)] + [2 * n - 1]
    keys = backend.keygen(TINY, rng_seed=3, galois_elements=galois)
    return backend, keys


def rand_slots(rng, t, n):
    return [rng.randrange(t) - t // 2 for _ in range(n)]


def test_ring_multiplication_matches_schoolbook():
    rng = random.Random(1)
    n, q = 16, 97
    ring = Ring(n, q)
    a = [rng.randrange(q) for _ in range(n)]
    b = [rng.randrange(q) for _ in range(n)]
    want = [0] * n
    for i in range(n):
        for j in range(n):
            k, sign = (i + j, 1) if i + j < n else (i + j - n, -1)
            want[k] = (want[k] + sign * a[i] * b[j]) % q
    assert [x % q for x in ring.mul_mod(a, b)] == want


def test_encrypt_decrypt_add_mul(setup):
    backend, keys = setup
    rng = random.Random(2)
    t, n = TINY.plaintext_modulus, TINY.ring_dimension
    a, b = rand_slots(rng, t, n), rand_slots(rng, t, n)
    s = Sampler(4)
    ca, cb = backend.encrypt(keys.public_key, a, s), backend.encrypt(keys.public_key, b, s)
    assert backend.decrypt(keys.secret_key, ca) == a
    assert backend.decrypt(keys.secret_key, backend.add(ca, cb)) == [centered(x + y, t) for x, y in zip(a, b)]
    prod = backend.mul(ca, cb, keys.evaluation_key)
    assert prod.level == TINY.depth_budget - 1
    assert backend.decrypt(keys.secret_key, prod) == [centered(x * y, t) for x, y in zip(a, b)]
    assert backend.decrypt(keys.secret_key, backend.mul_plain(ca, b)) == [centered(x * y, t) for x, y in zip(a, b)]


def test_rotations(setup):
    backend, keys = setup
    n = TINY.ring_dimension
    vals = list(range(n))
    ct = backend.encrypt(keys.public_key, vals)
    assert backend.decrypt(keys.secret_key, backend.rotate(ct, 4, keys.evaluation_key)) == rotate_slots(vals, 4)
    assert backend.decrypt(keys.secret_key, backend.swap_rows(ct, keys.evaluation_key)) == swap_slot_rows(vals)


def test_missing_rotation_key(setup):
    backend, keys = setup
    ct = backend.encrypt(keys.public_key, [1, 2, 3])
    with pytest.raises(ParameterError):
        backend.rotate(ct, 2, keys.evaluation_key)


def test_depth_exhaustion(setup):
    backend, keys = setup
    ct = backend.encrypt(keys.public_key, 2)
    for _ in range(TINY.depth_budget):
        ct = backend.mul(ct, backend.encrypt(keys.public_key, 2), keys.evaluation_key)
    assert backend.decrypt(keys.secret_key, ct)[0] == 2 ** (TINY.depth_budget + 1)
    with pytest.raises(DepthError):
        backend.mul(ct, ct, keys.evaluation_key)
    with pytest.raises(DepthError):
        backend.mul_plain(ct, 3)


def test_plaintext_range(setup):
    backend, keys = setup
    with pytest.raises(PlaintextRangeError):
        backend.encrypt(keys.public_key, TINY.plaintext_modulus)
    with pytest.raises(PlaintextRangeError):
        backend.encrypt(keys.public_key, [0] * (TINY.ring_dimension + 1))


def test_wrong_key_detected(setup):
    backend, keys = setup
    other = backend.keygen(TINY, rng_seed=99)
    ct = backend.encrypt(keys.public_key, list(range(10)))
    with pytest.raises((IntegrityError, ParamsMismatchError)):
        backend.decrypt(other.secret_key, ct)
    with pytest.raises(ParamsMismatchError):
        backend.add(ct, backend.encrypt(other.public_key, 1))


def test_noise_budget_shrinks():
    backend = get_backend("bfv")
    keys = backend.keygen(TINY, rng_seed=5)
    ct = backend.encrypt(keys.public_key, 3)
    fresh = backend.noise_budget(keys.secret_key, ct)
    after = backend.noise_budget(keys.secret_key, backend.mul(ct, ct, keys.evaluation_key))
    assert fresh > after > 0


def test_corrupted_ciphertext_raises_integrity_error():
    backend = get_backend("bfv")
    keys = backend.keygen(TINY, rng_seed=6)
    ct = backend.encrypt(keys.public_key, list(range(20)))
    (c0, c1), = ct.data
    rng = random.Random(0)
    q = TINY.ciphertext_modulus
    ct.data = (([rng.randrange(q) for _ in c0], c1),)
    with pytest.raises(IntegrityError):
        backend.decrypt(keys.secret_key, ct)


def test_debug_tag_detects_tampering():
    backend = get_backend("debug")
    keys = backend.keygen(TINY, rng_seed=1)
    ct = backend.encrypt(keys.public_key, [1, 2, 3])
    slots, tag = ct.data
    ct.data = ([9] + list(slots[1:]), tag)
    with pytest.raises(IntegrityError):
        backend.decrypt(keys.secret_key, ct)


@pytest.mark.parametrize("name", BACKENDS)
def test_wire_round_trip(name):
    backend = get_backend(name)
    n = TINY.ring_dimension
    keys = backend.keygen(TINY, rng_seed=8, galois_elements=[2 * n - 1])
    ct = backend.encrypt(keys.public_key, list(range(30)), Sampler(1))
    ct2 = wire.deserialize(wire.serialize_ciphertext(ct), TINY)
    assert backend.decrypt(keys.secret_key, ct2) == backend.decrypt(keys.secret_key, ct)
    pk = wire.deserialize(wire.serialize_public_key(keys.public_key), TINY)
    sk = wire.deserialize(wire.serialize_secret_key(keys.secret_key), TINY)
    evk = wire.deserialize(wire.serialize_evaluation_key(keys.evaluation_key), TINY)
    c = backend.mul(backend.encrypt(pk, 7), backend.encrypt(pk, 6), evk)
    c = backend.swap_rows(c, evk)
    assert backend.decrypt(sk, c)[0] == 42


def test_wire_rejects_bad_bytes():
    backend = get_backend("bfv")
    keys = backend.keygen(TINY, rng_seed=8)
    blob = wire.serialize_ciphertext(backend.encrypt(keys.public_key, 1))
    with pytest.raises(FormatError):
        wire.deserialize(b"XXXX" + blob[4:], TINY)
    with pytest.raises(FormatError):
        wire.deserialize(blob[:-10], TINY)
    with pytest.raises(FormatError):
        wire.deserialize(blob, get_profile("desk-128-d1-k3"))


def test_backends_agree_bit_for_bit():
    rng = random.Random(11)
    t, n = TINY.plaintext_modulus, TINY.ring_dimension
    vals = [rand_slots(rng, t, n) for _ in range(3)]
    out = []
    for name in BACKENDS:
        b = get_backend(name)
        keys = b.keygen(TINY, rng_seed=1, galois_elements=[pow(3, 1, 2 * n)])
        cts = [b.encrypt(keys.public_key, v) for v in vals]
        r = b.mul(b.mul(cts[0], cts[1], keys.evaluation_key), cts[2], keys.evaluation_key)
        r = b.rotate(b.add(r, cts[0]), 1, keys.evaluation_key)
        out.append(b.decrypt(keys.secret_key, r))
    assert out[0] == out[1]


@pytest.mark.parametrize("name", sorted(PROFILE_TABLE))
def test_profiles_are_rated_128_bit(name):
    p = get_profile(name)
    assert p.rated_security >= 128
    assert security_level(p.ring_dimension, p.modulus_bits) >= 128
    assert not p.insecure


def test_parameter_checks():
    with pytest.raises(ParameterError):
        get_profile("no-such-profile")
    with pytest.raises(ParameterError, match="depth"):
        make_parameters("too-deep", 4096, 30, 1, 6)
    p = get_profile("desk-128-d4-k3")
    with pytest.raises(ParameterError):
        p.check_depth(5)
    p.check_depth(4)
