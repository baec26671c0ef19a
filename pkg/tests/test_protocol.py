import dataclasses
import json

import pytest

from privrel.errors import CapacityError, FramingError, IntegrityError, ParameterError, ProtocolError
from privrel.he import get_backend
from privrel.he.params import get_profile
from privrel.inference import count_distribution
from privrel.protocol import messages as msg
from privrel.protocol.messages import Hello, MessageType
from privrel.protocol.runner import build_configs, run_parties, run_protocol
from privrel.protocol.tables import (
    LevelTable,
    TableLayout,
    check_parameters,
    decrypt_result,
    designer_finalize,
    designer_setup,
    encode_probability,
    error_envelope,
    final_column_sums,
    manufacturer_update,
    result_magnitude_bound,
)
from privrel.protocol.transcript import Transcript, load_transcript
from privrel.survsig import All, Component, ComponentType, SystemStructure, k_out_of_n_system, series_system
from privrel.transport import LoopbackNetwork
from privrel.verify import expected_integers, oracle_curve, synthetic_samples

TIMES = (0.25, 0.5, 1.0, 2.0, 3.0)


def test_level_table_columns():
    lv = LevelTable.for_multiplicities((2, 1))
    assert lv.R == 6 and lv.K == 2
    assert lv.column(1) == (0, 0, 1, 1, 2, 2)
    assert lv.column(2) == (0, 1, 0, 1, 0, 1)


@pytest.mark.parametrize("mode", ["packed", "row"])
def test_layout_slots_are_distinct(mode):
    lay = TableLayout(mode, 64, 13, 5)
    for c in range(lay.ciphertext_count):
        used = [lay.slot(i, t) for i in range(len(lay.rows_of(c))) for t in range(lay.times)]
        assert len(set(used)) == len(used)
    assert sum(len(lay.rows_of(c)) for c in range(lay.ciphertext_count)) == 13
    assert TableLayout.from_dict(lay.to_dict()) == lay


def test_layout_capacity():
    with pytest.raises(CapacityError):
        TableLayout("packed", 64, 4, 40)
    with pytest.raises(ParameterError):
        TableLayout("diagonal", 64, 4, 4)


def test_error_envelope_and_magnitude():
    assert error_envelope(100, 4, 3) == pytest.approx(0.25)
    assert error_envelope(100, 4, 1) == pytest.approx(25.0)
    assert result_magnitude_bound(100, 4, 3) == 100 * 10**15


def test_check_parameters_refuses_oversized_runs():
    p = get_profile("desk-128-d1-k3")
    with pytest.raises(ParameterError):
        check_parameters(p, 4, 2, 3)
    with pytest.raises(ParameterError):
        check_parameters(p, 4, 1, 6)
    check_parameters(p, 4, 1, 3)


def test_encode_probability_rounding():
    from fractions import Fraction

    assert encode_probability(Fraction(1, 2), 3) == 500
    assert encode_probability(Fraction(1, 3), 3) == 333
    assert encode_probability(Fraction(2, 3), 3) == 667
    assert encode_probability(0.0005, 3) == 1


def _stages(system, samples, backend, params, layout="packed", strict=False):
    keys, levels, table = designer_setup(system, TIMES, 3, params, backend, layout, rng_seed=1)
    for t in system.types:
        dist = count_distribution(samples[t.id], t.multiplicity, TIMES, t.id)
        table = manufacturer_update(
            table, t.id, levels.column(t.id), dist, keys.public_key, keys.evaluation_key, 3, backend, strict=strict
        )
    return keys, final_column_sums(table, keys.evaluation_key, backend)


@pytest.mark.parametrize("layout, strict", [("packed", False), ("row", False), ("row", True)])
def test_table_pipeline_debug(braking, layout, strict):
    samples = synthetic_samples(braking, 3)
    backend = get_backend("debug")
    keys, result = _stages(braking, samples, backend, get_profile("desk-128-d4-k3"), layout, strict)
    assert decrypt_result(result, keys.secret_key, backend) == expected_integers(braking, samples, TIMES, 3)
    curve = designer_finalize(result, keys.secret_key, backend, 3, braking.K)
    oracle = oracle_curve(braking, samples, TIMES)
    assert max(abs(a - b) for a, b in zip(curve.raw, oracle.values)) <= error_envelope(100, 4, 3)


def test_table_pipeline_bfv_minimal_profile():
    system = k_out_of_n_system(2, 3)
    samples = synthetic_samples(system, 4)
    backend = get_backend("bfv")
    keys, result = _stages(system, samples, backend, get_profile("desk-128-d1-k3"))
    assert decrypt_result(result, keys.secret_key, backend) == expected_integers(system, samples, TIMES, 3)


def test_update_order_and_repeat_checks(braking):
    samples = synthetic_samples(braking, 1)
    backend = get_backend("debug")
    keys, levels, table = designer_setup(braking, TIMES, 3, get_profile("desk-128-d4-k3"), backend, rng_seed=1)
    dist = count_distribution(samples[1], 4, TIMES, 1)
    table = manufacturer_update(table, 1, levels.column(1), dist, keys.public_key, keys.evaluation_key, 3, backend)
    with pytest.raises(ProtocolError):
        manufacturer_update(table, 1, levels.column(1), dist, keys.public_key, keys.evaluation_key, 3, backend)
    with pytest.raises(ProtocolError):
        final_column_sums(table, keys.evaluation_key, backend)


def test_tampered_result_is_reported_not_decoded(braking):
    samples = synthetic_samples(braking, 2)
    backend = get_backend("debug")
    keys, result = _stages(braking, samples, backend, get_profile("desk-128-d4-k3"))
    slots, tag = result.ciphertext.data
    result.ciphertext.data = ([s + 1 for s in slots], tag)
    with pytest.raises(IntegrityError):
        decrypt_result(result, keys.secret_key, backend)


def test_frames_round_trip_and_reject_damage():
    frame = msg.encode_frame(MessageType.GRID, b"payload")
    assert msg.decode_frame(frame) == (MessageType.GRID, b"payload")
    big = msg.encode_frame(MessageType.TABLE, [b"a" * 1000, b"b" * 1000])
    assert msg.decode_frame(big) == (MessageType.TABLE, b"a" * 1000 + b"b" * 1000)
    assert len(big) < 200
    damaged = bytearray(frame)
    damaged[-6] ^= 1
    for bad in (bytes(damaged), frame[:-1], b"XXXX" + frame[4:], frame[:10]):
        with pytest.raises(FramingError):
            msg.decode_frame(bad)
    with pytest.raises(FramingError):
        msg.decode_frame(frame, max_frame=3)


def test_hello_mismatch():
    a = Hello("designer", "designer", "ab", "p", "bfv", 3, "g")
    assert a.mismatch(Hello.decode(_payload(a.encode()))) is None
    assert a.mismatch(dataclasses.replace(a, kappa=2)) == "kappa"


def _payload(frame):
    return msg.decode_frame(frame)[1]


def test_grid_and_column_codecs():
    assert msg.decode_grid(_payload(msg.encode_grid(TIMES, 3))) == (TIMES, 3)
    assert msg.decode_level_column(_payload(msg.encode_level_column(2, (0, 1, 0, 1)))) == (2, (0, 1, 0, 1))
    e = msg.decode_abort(_payload(msg.encode_abort("manufacturer-C", "update", "boom")))
    assert isinstance(e, msg.PeerAbort) and "boom" in str(e)


def _run_with(system, samples, configs):
    net = LoopbackNetwork()
    tr = Transcript()
    eps = {name: net.endpoint(name, tr) for name in configs}
    return run_parties(system, samples, configs, eps, tr)


def test_wrong_type_index_aborts_with_attribution():
    system = SystemStructure(
        (ComponentType(1, "A", 1), ComponentType(2, "B", 2)),
        All((Component(1, 1), Component(2, 1), Component(2, 2))),
    )
    samples = synthetic_samples(system, 1)
    configs = build_configs(system, TIMES, 3, "desk-128-d4-k3", "debug", timeout=30)
    configs["manufacturer-B"] = dataclasses.replace(configs["manufacturer-B"], type_index=1)
    with pytest.raises(ProtocolError) as info:
        _run_with(system, samples, configs)
    assert not isinstance(info.value, msg.PeerAbort)
    assert info.value.party == "manufacturer-B"
    assert info.value.stage == "level column"


def test_handshake_mismatch_aborts():
    system = series_system(2)
    samples = synthetic_samples(system, 1)
    configs = build_configs(system, TIMES, 3, "desk-128-d4-k3", "debug", timeout=30)
    configs["manufacturer-X"] = dataclasses.replace(configs["manufacturer-X"], kappa=2)
    with pytest.raises(ProtocolError, match="kappa"):
        _run_with(system, samples, configs)


def test_ring_order_must_be_permutation(braking):
    with pytest.raises(ProtocolError):
        build_configs(braking, TIMES, 3, "desk-128-d4-k3", ring_order=[1, 2, 2, 4])


def test_transcript_has_timing_rows(tmp_path, braking):
    samples = synthetic_samples(braking, 5)
    path = tmp_path / "t.jsonl"
    tr = Transcript(path)
    run = run_protocol(braking, samples, TIMES, 3, backend="debug", transcript=tr, seed=5)
    tr.close()
    events = load_transcript(path)
    stages = {(e["party"], e["stage"]) for e in events if e["event"] == "stage"}
    for label in "CHMP":
        for stage in ("load table", "update table"):
            assert (f"manufacturer-{label}", stage) in stages
    assert ("manufacturer-P", "column sums") in stages
    assert ("manufacturer-C", "save table") in stages
    assert "update table" in run.transcript.timing_table()
    assert all(json.dumps(e) for e in events)
