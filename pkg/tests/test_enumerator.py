from fractions import Fraction

import pytest

from ballistic.core import L, R, S, LengthVector, PolyP, PolyPR, Skyline, velocities
from ballistic.enumerator import (
    A5_PATTERNS,
    And,
    EnumerationBoundError,
    FirstCrosserIs,
    Paired,
    PairingEquals,
    SkylineEquals,
    VelocitiesEqual,
    asym_A5_components,
    delta_event,
    distinct_arrangements,
    enumerate_configurations,
    enumerate_event,
    oracle_report,
    skyline_distribution,
    universality_diff,
    z_value,
)
from ballistic.exact import compute_sequences

F = Fraction
p = PolyP.p()
q = PolyP.one_minus_p()
SEQ = compute_sequences(8)
ONE = PolyPR([[1]])


def ones(n):
    return (1,) * n


def binary(n):
    return tuple(2**k for k in range(n))


def test_spec_examples():
    assert enumerate_event(3, ones(3), FirstCrosserIs(3)).symmetric == (p + F(1, 2)) * q * q * F(1, 4)
    for ell in ((1, 1), (1, 5)):
        ev = enumerate_event(2, ell, And(PairingEquals((1, 0)), VelocitiesEqual((R, L))))
        assert ev.symmetric == q * q * F(1, 4)
    one = enumerate_event(1, (1,), FirstCrosserIs(1)).poly
    assert one == PolyPR([[1, -1], [-1, 1]])  # (1-r)(1-p)


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("lengths", [ones, binary])
def test_oracle_match(n, lengths):
    rep = oracle_report(n, lengths(n), seq=SEQ)
    assert rep["checks"] == {"partition_unity": True, "oracle_match": True}


def test_delta_event_shape():
    ev = delta_event(4)
    assert ev.holds((R, S, S, L), (3, 2, 1, 0))
    assert not ev.holds((R, R, L, L), (1, 0, 3, 2))
    # And flattens nested conjunctions
    assert And(And(Paired(0, 1)), ev).parts == (Paired(0, 1),) + ev.parts


@pytest.mark.parametrize("n, lengths", [(3, (1, 1, 1)), (4, (1, 1, 2, 3)), (5, (1, 1, 1, 1, 1)), (5, (1, 2, 3, 5, 8))])
def test_backends_and_spin_economy_agree(n, lengths):
    a = enumerate_configurations(lengths, "numba")
    b = enumerate_configurations(lengths, "python")
    c = enumerate_configurations(lengths, "python", full_spins=True)
    assert a.table == b.table == c.table


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("lengths", [ones, binary])
def test_skyline_partition_of_unity(n, lengths):
    dist = skyline_distribution(n, lengths(n))
    total = PolyPR()
    for v in dist.values():
        total = total + v.poly
    assert total == ONE
    assert all(Skyline.from_key(k).check(n) for k in dist)


def test_skyline_n1():
    dist = {k: v.symmetric for k, v in skyline_distribution(1, (1,)).items()}
    assert dist == {"Up[0:0]": p, "SurvLeft[0:0]": q * F(1, 2), "SurvRight[0:0]": q * F(1, 2)}


def test_skyline_mass_matches_recurrence():
    dist = skyline_distribution(3, (1, 1, 1))
    assert dist["SurvLeft[0:2]"].symmetric == SEQ.p[3]
    ev = enumerate_event(3, (1, 2, 4), SkylineEquals(Skyline.from_key("SurvLeft[0:2]")))
    assert ev.symmetric == SEQ.p[3]


@pytest.mark.parametrize("n", range(1, 6))
def test_symmetric_universality(n):
    assert universality_diff(n, binary(n), ones(n)).zero
    assert universality_diff(n, (1, 1, 2, 3, 5)[:n], ones(n)).zero


def test_universality_same_lengths_trivially_zero():
    assert universality_diff(4, (1, 2, 3, 4), (1, 2, 3, 4), r=F(1, 3)).zero


def test_asymmetric_non_universality():
    res = universality_diff(5, binary(5), ones(5), r=F(3, 10), event=FirstCrosserIs(5))
    assert not res.zero and res.max_degree >= 5
    assert universality_diff(5, binary(5), ones(5), r=F(1, 2), event=FirstCrosserIs(5)).zero
    assert universality_diff(4, binary(4), ones(4), r=F(3, 10)).zero


def test_reflection_symmetry():
    n, lengths = 4, (1, 1, 2, 3)
    cd = enumerate_configurations(lengths)
    joint = cd.partition(lambda v, pi: (v, pi))
    r = F(3, 10)
    for (v, pi), ev in joint.items():
        vr = tuple(velocities([-int(a) for a in reversed(v)]))
        pr = tuple(n - 1 - pi[n - 1 - i] for i in range(n))
        assert ev.at_r(r) == joint[(vr, pr)].at_r(1 - r)


@pytest.mark.parametrize("lengths, z", [((1, 1, 1, 1, 1), 1), ((1, 1, 1, 1, 13), F(4, 5)), ((1, 1, 1, 1, 3), F(9, 10)), ((1, 2, 4, 8, 16), F(3, 4))])
def test_z_value(lengths, z):
    assert z_value(lengths) == z


def test_z_value_wrong_size():
    with pytest.raises(ValueError):
        z_value((1, 2, 3))


def test_a5_components():
    a = asym_A5_components(ones(5))
    b = asym_A5_components(binary(5))
    assert a["others"] == b["others"]
    for res in (a, b):
        for comp in res["components"]:
            assert comp.match_derived
        total = PolyPR()
        for comp in res["components"]:
            total = total + comp.enumerated
        assert total + res["others"] == res["total"]
    by = {c.pattern: c for c in a["components"]}
    # with z = 1 the stated display puts the zero on the second pattern; enumeration puts it on the first
    assert by[(1, 1, 0, 0, -1)].enumerated.is_zero()
    assert not by[(1, 0, 0, -1, -1)].enumerated.is_zero()
    assert by[(1, 0, 0, -1, -1)].displayed.is_zero()
    assert [c.conditional for c in a["components"]] == [0, 1, 0, F(1, 2)]
    assert [c.conditional for c in b["components"]] == [F(1, 4), F(3, 4), F(1, 8), F(3, 8)]


def test_a5_display_disagrees_with_enumeration():
    # recorded discrepancy: the stated expressions do not reproduce the enumeration
    comps = asym_A5_components(binary(5))["components"]
    assert not any(c.match for c in comps)


def test_bounds():
    with pytest.raises(EnumerationBoundError):
        enumerate_event(9, ones(9), FirstCrosserIs(9))
    with pytest.raises(EnumerationBoundError):
        skyline_distribution(8, ones(8))
    with pytest.raises(ValueError):
        enumerate_event(3, (1, 1), FirstCrosserIs(3))


def test_distinct_arrangements():
    assert distinct_arrangements((1, 1, 2)) == [(1, 1, 2), (1, 2, 1), (2, 1, 1)]
    assert len(distinct_arrangements((1, 2, 3, 4))) == 24
