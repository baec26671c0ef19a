import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from privrel.errors import CapacityError, InputError, LevelRangeError, StructureError
from privrel.inference import distribution_from_survival
from privrel.survsig import (
    All,
    Any_,
    AtLeast,
    Component,
    ComponentType,
    SurvivalCurve,
    SystemStructure,
    check_coherent,
    check_level,
    enumerate_level_set,
    evaluate_structure,
    k_out_of_n_system,
    level_grid,
    level_set_size,
    load_system,
    parallel_system,
    save_system,
    series_system,
    survival_curve_oracle,
    survival_signature,
    system_from_dict,
    system_to_dict,
)
from privrel.verify import brute_force_system_reliability


@pytest.mark.parametrize("n", [1, 2, 5])
def test_series_and_parallel(n):
    s = survival_signature(series_system(n))
    p = survival_signature(parallel_system(n))
    for l in range(n + 1):
        assert s[(l,)] == (1 if l == n else 0)
        assert p[(l,)] == (1 if l >= 1 else 0)


def test_k_out_of_n():
    sig = survival_signature(k_out_of_n_system(2, 4))
    assert [sig[(l,)] for l in range(5)] == [0, 0, 1, 1, 1]


def test_braking_signature(braking):
    sig = survival_signature(braking)
    assert braking.multiplicities == (4, 1, 1, 4)
    assert braking.row_count == len(sig) == 100
    assert sig[(0, 1, 0, 1)] == Fraction(1, 2)
    assert sig[(4, 1, 1, 4)] == 1 and sig[(0, 0, 0, 0)] == 0
    # no motor and no hydraulics: nothing works
    assert all(sig[(c, 0, 0, p)] == 0 for c in range(5) for p in range(5))
    assert all(0 <= v <= 1 for v in sig.rows.values())


def test_signature_against_level_set_enumeration():
    types = (ComponentType(1, "A", 2), ComponentType(2, "B", 2))
    sys_ = SystemStructure(types, Any_((All((Component(1, 1), Component(2, 1))), All((Component(1, 2), Component(2, 2))))))
    sig = survival_signature(sys_)
    for l in level_grid(sys_.multiplicities):
        states = list(enumerate_level_set(sys_, l))
        assert len(states) == level_set_size(sys_, l)
        assert sig[l] == Fraction(sum(evaluate_structure(sys_, x) for x in states), len(states))


def test_level_grid_order():
    assert level_grid((1, 2)) == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]


def test_level_range_errors(braking):
    with pytest.raises(LevelRangeError):
        check_level(braking, (5, 0, 0, 0))
    with pytest.raises(LevelRangeError):
        check_level(braking, (1, 1))
    with pytest.raises(LevelRangeError):
        survival_signature(braking)[(0, 2, 0, 0)]


def test_state_vector_length_checked(braking):
    with pytest.raises(StructureError):
        evaluate_structure(braking, (1, 0))


def test_incoherent_systems_rejected():
    a1, a2 = Component(1, 1), Component(1, 2)
    irrelevant = SystemStructure((ComponentType(1, "A", 2),), Any_((a1, All((a1, a2)))))
    with pytest.raises(StructureError, match="irrelevant"):
        check_coherent(irrelevant)
    with pytest.raises(StructureError):
        survival_signature(irrelevant)


def test_malformed_structures():
    with pytest.raises(StructureError):
        SystemStructure((ComponentType(1, "A", 1),), Component(1, 2))
    with pytest.raises(StructureError):
        SystemStructure((ComponentType(1, "A", 2),), AtLeast(3, (Component(1, 1), Component(1, 2))))
    with pytest.raises(StructureError):
        SystemStructure((ComponentType(2, "A", 1),), Component(2, 1))
    with pytest.raises(StructureError):
        ComponentType(1, "A1", 1)


def test_capacity_caps(braking):
    with pytest.raises(CapacityError):
        survival_signature(braking, max_rows=10)
    with pytest.raises(CapacityError):
        survival_signature(braking, max_evaluations=100)


def test_json_round_trip(tmp_path, braking):
    p = tmp_path / "s.json"
    save_system(braking, p)
    again = load_system(p)
    assert survival_signature(again).rows == survival_signature(braking).rows
    assert system_from_dict(system_to_dict(again)) == again


def test_json_errors(tmp_path):
    with pytest.raises(InputError):
        load_system(tmp_path / "missing.json")
    with pytest.raises(StructureError):
        system_from_dict({"format": "other/9", "types": [], "structure": "A"})
    with pytest.raises(StructureError):
        system_from_dict({"types": [{"label": "A", "multiplicity": 2}], "structure": "A"})
    with pytest.raises(StructureError):
        system_from_dict({"types": [{"label": "A", "multiplicity": 1}], "structure": {"xor": ["A"]}})


def test_oracle_matches_brute_force_for_braking(braking):
    # every component survives with probability 0.9 at t = 1
    dists = [distribution_from_survival([1.0, 0.9], t.multiplicity, [0.0, 1.0], t.id) for t in braking.types]
    curve = survival_curve_oracle(survival_signature(braking), dists, [0.0, 1.0])
    assert curve.values[0] == 1.0
    assert curve.values[1] == pytest.approx(brute_force_system_reliability(braking, [0.9] * 4), abs=1e-12)


def test_oracle_is_non_increasing_for_decreasing_survival():
    sys_ = k_out_of_n_system(2, 3)
    times = np.linspace(0, 3, 20)
    dists = [distribution_from_survival(np.exp(-times), 3, times)]
    v = survival_curve_oracle(survival_signature(sys_), dists, times).values
    assert all(b <= a + 1e-15 for a, b in zip(v, v[1:]))


def test_curve_validation():
    with pytest.raises(InputError):
        SurvivalCurve((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(InputError):
        SurvivalCurve((0.0,), (1.5,))
