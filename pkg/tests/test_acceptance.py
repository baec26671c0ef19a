"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``; the summary lines appear at the end
of the pytest report.
"""

import itertools
import math
import random
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from functools import lru_cache

import pytest

from privrel.encoding import EncodedValue, add, decode, encode, multiply
from privrel.errors import DepthError, PrecisionError
from privrel.he import get_backend
from privrel.he.core import Sampler
from privrel.he.params import MINIMAL_PROFILE, PROFILE_TABLE, get_profile
from privrel.inference import distribution_from_survival
from privrel.protocol.messages import (
    MessageType,
    decode_frame,
    decode_grid,
    decode_level_column,
    decode_pubkey,
)
from privrel.protocol.parties import DESIGNER, manufacturer_name
from privrel.protocol.runner import run_protocol
from privrel.protocol.tables import (
    LevelTable,
    designer_setup,
    final_column_sums,
    manufacturer_update,
)
from privrel.inference import count_distribution
from privrel.survsig import (
    ComponentType,
    Component,
    All,
    SystemStructure,
    braking_system,
    survival_curve_oracle,
    survival_signature,
)
from privrel.verify import (
    brute_force_system_reliability,
    compare_curves,
    expected_integers,
    oracle_curve,
    random_coherent_system,
    synthetic_samples,
)

from conftest import BRAKING_TIMES

RESULTS: dict[str, tuple[bool, str]] = {}

KAPPA = 3
TIME_LIMIT = 600.0
MAX_GAP = 5e-3


@contextmanager
def criterion(name):
    detail = []
    try:
        yield detail
    except BaseException as e:
        RESULTS[name] = (False, f"{type(e).__name__}: {str(e)[:300]}")
        print(f"FAIL  {name}")
        raise
    RESULTS[name] = (True, "; ".join(detail))
    print(f"PASS  {name}  {'; '.join(detail)}")


@lru_cache(maxsize=None)
def braking_run(transport):
    from conftest import braking_samples_from_package

    system = braking_system()
    samples = braking_samples_from_package(system)
    t0 = time.perf_counter()
    run = run_protocol(
        system, samples, BRAKING_TIMES, KAPPA, "desk-128-d4-k3", "bfv", transport, record_frames=True
    )
    return system, samples, run, time.perf_counter() - t0


# -- 1 -----------------------------------------------------------------------------


@pytest.mark.parametrize("transport", ["loopback", "tcp"])
def test_braking_reproduction(transport):
    with criterion(f"1 braking reproduction ({transport})") as detail:
        system, samples, run, seconds = braking_run(transport)
        assert system.K == 4 and system.row_count == 100
        oracle = oracle_curve(system, samples, BRAKING_TIMES)
        report = compare_curves(run.curve, oracle, system.row_count, system.K, KAPPA)
        detail += [
            f"{seconds:.1f} s",
            f"max gap {report.max_gap:.2e}",
            f"envelope {report.envelope:.3g}",
            f"TV {report.tv_distance:.2e}",
        ]
        assert len(run.curve) == 100
        assert seconds < TIME_LIMIT
        assert report.max_gap <= report.envelope
        assert report.max_gap <= MAX_GAP
        assert run.integers == expected_integers(system, samples, BRAKING_TIMES, KAPPA)


# -- 2 -----------------------------------------------------------------------------


def test_backend_equivalence():
    with criterion("2 backend equivalence (10 seeds)") as detail:
        system = braking_system()
        for seed in range(10):
            samples = synthetic_samples(system, seed)
            a = run_protocol(system, samples, BRAKING_TIMES, KAPPA, backend="debug", seed=seed)
            b = run_protocol(system, samples, BRAKING_TIMES, KAPPA, backend="bfv", seed=seed)
            assert a.integers == b.integers, f"seed {seed}: backends disagree"
            assert a.integers == expected_integers(system, samples, BRAKING_TIMES, KAPPA)
        detail.append("10/10 seeds identical")


# -- 3 -----------------------------------------------------------------------------


def test_signature_correctness():
    with criterion("3 signature correctness (25 systems x 5 times)") as detail:
        rng = random.Random(31337)
        worst = 0.0
        for _ in range(25):
            system = random_coherent_system(rng, max_components=12, max_types=3)
            assert system.M <= 12 and system.K <= 3
            rates = [rng.uniform(0.05, 1.5) for _ in system.types]
            times = sorted(rng.uniform(0.0, 4.0) for _ in range(5))
            dists = [
                distribution_from_survival([math.exp(-r * x) for x in times], t.multiplicity, times, t.id)
                for t, r in zip(system.types, rates)
            ]
            curve = survival_curve_oracle(survival_signature(system), dists, times)
            for j, x in enumerate(times):
                exact = brute_force_system_reliability(system, [math.exp(-r * x) for r in rates])
                worst = max(worst, abs(curve.values[j] - exact))
        detail.append(f"worst |oracle - brute force| {worst:.1e}")
        assert worst <= 1e-12


# -- 4 -----------------------------------------------------------------------------


def _series(K):
    types = tuple(ComponentType(k + 1, "ABCD"[k], 1 + k % 2) for k in range(K))
    leaves = tuple(Component(t.id, i + 1) for t in types for i in range(t.multiplicity))
    return SystemStructure(types, All(leaves))


def test_scale_exponent():
    with criterion("4 scale exponent (K+1)kappa, K=1..4") as detail:
        backend = get_backend("debug")
        params = get_profile("desk-128-d4-k3")
        times = (0.5, 1.0, 2.0)
        for K in range(1, 5):
            system = _series(K)
            samples = synthetic_samples(system, K)
            keys, levels, table = designer_setup(system, times, KAPPA, params, backend, rng_seed=K)
            assert table.scale_exponent == KAPPA
            for step, t in enumerate(system.types, start=1):
                dist = count_distribution(samples[t.id], t.multiplicity, times, t.id)
                table = manufacturer_update(
                    table, t.id, levels.column(t.id), dist, keys.public_key, keys.evaluation_key, KAPPA, backend
                )
                assert table.scale_exponent == (step + 1) * KAPPA
            result = final_column_sums(table, keys.evaluation_key, backend)
            assert result.scale_exponent == (K + 1) * KAPPA
            run = run_protocol(system, samples, times, KAPPA, backend="debug", seed=K)
            assert run.scale_exponent == (K + 1) * KAPPA
            detail.append(f"K={K}:{run.scale_exponent}")


# -- 5 -----------------------------------------------------------------------------


CHAINS = 1000


def _centered(x, t):
    x %= t
    return x - t if x > t // 2 else x


@pytest.mark.parametrize("profile", sorted(PROFILE_TABLE))
def test_depth_contract(profile):
    with criterion(f"5 depth contract ({profile})") as detail:
        params = get_profile(profile)
        depth = params.depth_budget
        t = params.plaintext_modulus
        backend = get_backend("bfv")
        keys = backend.keygen(params, rng_seed=7)
        sampler = Sampler(8)
        rng = random.Random(profile)
        # each slot carries one independent chain of depth + 1 factors
        factors = [[rng.randrange(t) - t // 2 for _ in range(CHAINS)] for _ in range(depth + 1)]
        ct = backend.encrypt(keys.public_key, factors[0], sampler)
        want = list(factors[0])
        for f in factors[1:]:
            ct = backend.mul(ct, backend.encrypt(keys.public_key, f, sampler), keys.evaluation_key)
            want = [_centered(a * b, t) for a, b in zip(want, f)]
        got = backend.decrypt(keys.secret_key, ct)[:CHAINS]
        assert got == want
        detail.append(f"{CHAINS} chains of depth {depth} correct, {backend.noise_budget(keys.secret_key, ct):.0f} bits left")
        if profile == MINIMAL_PROFILE:
            with pytest.raises(DepthError):
                backend.mul(ct, backend.encrypt(keys.public_key, factors[0], sampler), keys.evaluation_key)
            detail.append(f"depth {depth + 1} raises DepthError")


# -- 6 -----------------------------------------------------------------------------


@pytest.mark.parametrize("transport", ["loopback", "tcp"])
def test_privacy_surface(transport):
    with criterion(f"6 privacy surface ({transport})") as detail:
        system, _, run, _ = braking_run(transport)
        ring = [manufacturer_name(t.label) for t in system.types]
        levels = LevelTable.for_multiplicities(system.multiplicities)
        for pos, name in enumerate(ring):
            k = system.types[pos].id
            frames = [(s, *decode_frame(f)) for s, f in run.inbound_frames[name]]
            kinds = sorted(m for _, m, _ in frames)
            assert kinds == sorted(
                [MessageType.HELLO, MessageType.PUBKEY, MessageType.GRID, MessageType.LEVEL_COLUMN, MessageType.TABLE]
            ), f"{name} received {[m.name for m in kinds]}"
            for sender, m, payload in frames:
                if m == MessageType.TABLE:
                    assert sender == (DESIGNER if pos == 0 else ring[pos - 1])
                else:
                    assert sender == DESIGNER
                if m == MessageType.PUBKEY:
                    params, pk, evk = decode_pubkey(payload)
                    assert pk.backend == "bfv" and evk.params == params
                if m == MessageType.GRID:
                    assert decode_grid(payload) == (tuple(BRAKING_TIMES), KAPPA)
                if m == MessageType.LEVEL_COLUMN:
                    got_k, column = decode_level_column(payload)
                    assert got_k == k and column == levels.column(k)
        designer = [decode_frame(f)[0] for _, f in run.inbound_frames[DESIGNER]]
        assert designer[-1] == MessageType.RESULT
        assert designer[:-1] == [MessageType.HELLO] * system.K
        detail.append(f"{len(ring)} manufacturers and designer checked")


# -- 7 -----------------------------------------------------------------------------


def test_encoding():
    with criterion("7 encoding (10^4 trials)") as detail:
        rng = random.Random(77)
        for _ in range(10_000):
            kappa = rng.randint(0, 12)
            y = rng.choice([rng.random(), rng.uniform(-50, 50), rng.random() * 10.0 ** -rng.randint(0, 8)])
            v = encode(y, kappa)
            assert v.scale == kappa
            assert abs(Fraction(v.integer, 10**kappa) - Fraction(y)) <= Fraction(1, 2 * 10**kappa)
            assert abs(decode(v) - y) <= 0.5 * 10.0**-kappa * (1 + 1e-9) + 1e-15 * abs(y)
            other = rng.choice([k for k in range(13) if k != kappa])
            with pytest.raises(PrecisionError):
                add(v, encode(rng.random(), other))
            w = encode(rng.random(), kappa)
            prod = multiply(v, w)
            assert prod == v * w == EncodedValue(v.integer * w.integer, 2 * kappa)
        detail.append("half-ulp bound, mismatch rejection and 2kappa products hold")


# -- 8 -----------------------------------------------------------------------------


def test_ring_order():
    with criterion("8 ring order (all 3! orders, debug)") as detail:
        rng = random.Random(8)
        system = random_coherent_system(rng, 9, 3)
        while system.K != 3:
            system = random_coherent_system(rng, 9, 3)
        samples = synthetic_samples(system, 8)
        times = BRAKING_TIMES[::10]
        want = expected_integers(system, samples, times, KAPPA)
        for order in itertools.permutations([1, 2, 3]):
            run = run_protocol(system, samples, times, KAPPA, backend="debug", ring_order=order, seed=1)
            assert run.integers == want, f"ring order {order} differs"
        detail.append(f"6 orders identical (M={system.M})")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
