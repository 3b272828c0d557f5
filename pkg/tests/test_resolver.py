import io
import itertools
import json
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballistic import _kernels as K
from ballistic.core import L, R, S, ArrangedInstance, LengthVector, Outcome, Skyline, SkylineShape, Velocity, velocities
from ballistic.resolver import (
    GenericityClass,
    classify_lengths,
    collision_trace,
    config_skyline,
    extract_skyline,
    first_crossing,
    perturbed_lengths,
    phi_map,
    positions_from,
    resolve,
    resolve_reference,
    rev_operator,
    tie_count,
    write_trace,
)


def random_instance(rng: random.Random, nmax=24, equal=False):
    n = rng.randint(1, nmax)
    gaps = [1] * n if equal else [rng.choice((1, 2, 3)) for _ in range(n)]
    v = [rng.choice((L, S, R)) for _ in range(n)]
    s = [rng.choice((-1, 1)) for _ in range(n)]
    return ArrangedInstance.from_lengths(gaps, v, s)


@pytest.mark.parametrize(
    "perm, expected",
    [((0, 1, 2), (1, 3, 7)), ((1, 0, 2), (2, 3, 7))],
)
def test_positions_from(perm, expected):
    assert positions_from((1, 2, 4), perm) == expected
    assert positions_from((1, 1, 1), perm) == (1, 2, 3)


def test_positions_from_rejects_non_permutation():
    with pytest.raises(ValueError):
        positions_from((1, 2), (0, 0))


@pytest.mark.parametrize(
    "pos, v, spins, pairing",
    [
        ((1, 2), "RL", None, (1, 0)),
        ((1, 2, 3), "RSL", (1, -1, 1), (1, 0, 2)),
        ((1, 2, 3), "RSL", (1, 1, 1), (0, 2, 1)),
        ((1, 2, 3, 4), "SLRS", None, (1, 0, 3, 2)),
        ((1,), "S", None, (0,)),
    ],
)
def test_resolve_examples(pos, v, spins, pairing):
    inst = ArrangedInstance(pos, v, spins)
    out = resolve(inst)
    assert out.pairing == pairing
    assert resolve_reference(inst) == out


def test_triple_collision_is_recorded():
    out = resolve(ArrangedInstance((1, 2, 3), "RSL", (1, -1, 1)))
    assert out.triples == ((0, 1, 2, 2),)
    out = resolve(ArrangedInstance((1, 2, 3), "RSL", (1, 1, 1)))
    assert out.triples == ((0, 1, 2, 0),)


def test_deep_race_through_cancelled_pairs():
    # R1 kills S2 at t=1; R0 then reaches S3 at t=3 together with L4.
    inst = ArrangedInstance.from_lengths([1, 1, 1, 1, 3], "RRSSL")
    out = resolve(inst)
    assert out == resolve_reference(inst)
    assert out.pairing == (3, 2, 1, 0, 4)
    assert out.triples == ((0, 3, 4, 4),)


@pytest.mark.parametrize("equal", [False, True])
def test_stack_matches_event_loop_random(equal):
    rng = random.Random(11 + equal)
    for _ in range(3000):
        inst = random_instance(rng, 40, equal)
        assert resolve(inst) == resolve_reference(inst), inst


def test_exhaustive_equal_gaps_small():
    for n in range(1, 7):
        for v in itertools.product((L, S, R), repeat=n):
            for s in itertools.product((-1, 1), repeat=n):
                inst = ArrangedInstance(tuple(range(1, n + 1)), v, s)
                assert resolve(inst) == resolve_reference(inst)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([-1, 0, 1]), st.integers(1, 3), st.sampled_from([-1, 1])), min_size=1, max_size=30))
def test_outcome_is_valid_and_skyline_consistent(items):
    v = [Velocity(a) for a, _, _ in items]
    inst = ArrangedInstance.from_lengths([g for _, g, _ in items], v, [s for _, _, s in items])
    out = resolve(inst)
    out.validate(inst.velocities)
    sk = extract_skyline(inst, out)
    assert sk.check(len(v))
    surv = set()
    for seg in sk:
        if seg.shape is SkylineShape.SURV_LEFT:
            surv.add(seg.end)
        elif seg.shape is SkylineShape.SURV_RIGHT:
            surv.add(seg.start)
        elif seg.shape is SkylineShape.UP:
            surv.add(seg.start)
    assert surv == set(out.survivors)


def test_kernel_resolver_agrees():
    rng = random.Random(5)
    for _ in range(3000):
        inst = random_instance(rng, 40, rng.random() < 0.5)
        x = np.array(inst.positions, dtype=np.int64)
        v = np.array([int(a) for a in inst.velocities], dtype=np.int8)
        s = np.array(inst.spins, dtype=np.int8)
        assert tuple(K.resolve_one(x, v, s).tolist()) == resolve(inst).pairing


def test_first_crossing():
    inst = ArrangedInstance((1, 2, 3), "RSL", (1, -1, 1))
    c = first_crossing(inst, resolve(inst))
    assert c.number == 3 and c.distance == 3
    inst = ArrangedInstance((2, 5), "LR")
    c = first_crossing(inst, resolve(inst))
    assert c.index == 0 and c.distance == 2
    inst = ArrangedInstance((1, 2), "RL")
    assert not first_crossing(inst, resolve(inst))


@pytest.mark.parametrize(
    "pos, v, spins, key",
    [
        ((1,), "S", None, "Up[0:0]"),
        ((1, 2), "RL", None, "ArchRL[0:1]"),
        ((1, 2, 3), "RSL", (1, -1, 1), "SurvLeft[0:2]"),
        ((1, 2, 3), "SRL", None, "Up[0:0]|ArchRL[1:2]"),
        ((1, 2, 3), "RSR", None, "ArchRS[0:1]|SurvRight[2:2]"),
    ],
)
def test_skyline_examples(pos, v, spins, key):
    inst = ArrangedInstance(pos, v, spins)
    assert extract_skyline(inst, resolve(inst)).key == key


def test_skyline_restriction_consistency():
    # dropping a leading SurvLeft segment and re-resolving leaves the rest unchanged
    rng = random.Random(2)
    checked = 0
    for _ in range(2000):
        inst = random_instance(rng, 16)
        sk = extract_skyline(inst, resolve(inst))
        if not sk.segments or sk.segments[0].shape is not SkylineShape.SURV_LEFT:
            continue
        cut = sk.segments[0].end + 1
        if cut == len(inst):
            continue
        rest = ArrangedInstance(
            tuple(x - inst.positions[cut - 1] for x in inst.positions[cut:]), inst.velocities[cut:], inst.spins[cut:]
        )
        sk2 = extract_skyline(rest, resolve(rest))
        shifted = [(s.start - cut, s.end - cut, s.shape) for s in sk.segments[1:]]
        assert [(s.start, s.end, s.shape) for s in sk2.segments] == shifted
        checked += 1
    assert checked > 100


def test_collision_trace():
    inst = ArrangedInstance((1, 2, 3, 5, 7), "RSLSL", (1, -1, 1, 1, 1))
    trace = collision_trace(inst)
    assert trace[0]["kind"] == "triple" and trace[0]["time"] == 1 and trace[0]["survivor"] == 2
    assert trace[1]["kind"] == "pair" and trace[1]["indices"] == [3, 4] and trace[1]["time"] == 2
    buf = io.StringIO()
    assert write_trace(inst, buf) == 2
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert rows[0]["time"] == "1/1"


@pytest.mark.parametrize(
    "lengths, cls, ties",
    [((1, 2, 4, 8), GenericityClass.GENERIC, 0), ((1, 2, 3), GenericityClass.SINGLE, 1), ((1, 1, 1), GenericityClass.MULTIPLE, 3)],
)
def test_classify_lengths(lengths, cls, ties):
    assert classify_lengths(lengths) == cls
    assert tie_count(lengths) == ties


def test_classify_bound():
    with pytest.raises(ValueError):
        classify_lengths([1] * 25)


def _all_configs(n):
    for v in itertools.product((L, S, R), repeat=n):
        for s in itertools.product((-1, 1), repeat=n):
            for sg in itertools.permutations(range(n)):
                yield (v, s, sg)


def test_rev_identity_without_triple():
    ell = (1, 1, 1)
    c = ((R, L, S), (-1, -1, -1), (0, 1, 2))
    assert rev_operator(0, 2, ell, perturbed_lengths(ell), c) == c


def test_rev_mirrors_on_spin_mismatch():
    ell = (1, 1, 1)
    ellp = (Fraction(1), Fraction(1), Fraction(1, 2))  # gap before the static beats the gap after it
    c = ((R, S, L), (-1, -1, -1), (0, 1, 2))
    # l'_I = l'[sigma[1]] = 1 > l'_J = l'[sigma[2]] = 1/2 with spin -1: mismatch, so mirror
    out = rev_operator(0, 2, ell, ellp, c)
    assert out == ((R, S, L), (-1, 1, -1), (0, 2, 1))
    assert rev_operator(0, 2, ell, ellp, out) == c


def test_rev_errors():
    with pytest.raises(ValueError):
        rev_operator(2, 1, (1, 1, 1), (1, 1, 1), ((R, S, L), (-1, -1, -1), (0, 1, 2)))
    with pytest.raises(ValueError):
        rev_operator(0, 2, (1, 1, 1), (1, 1, 1), ((R, S, L), (-1, -1, -1), (0, 1, 2)))


@pytest.mark.parametrize("lengths", [(1, 1, 1), (1, 2, 3), (1, 1, 1, 1), (1, 2, 3, 8), (1, 1, 2, 3)])
def test_phi_involution_statics_skyline(lengths):
    ellp = perturbed_lengths(lengths)
    assert classify_lengths(ellp) == GenericityClass.GENERIC
    for c in _all_configs(len(lengths)):
        d = phi_map(lengths, ellp, c)
        assert phi_map(lengths, ellp, d) == c
        assert d[0].count(S) == c[0].count(S)
        assert config_skyline(lengths, c) == config_skyline(ellp, d)


def test_rev_twice_is_identity_single():
    ell = (1, 2, 3)
    ellp = perturbed_lengths(ell)
    for c in _all_configs(3):
        for j, k in ((0, 2),):
            assert rev_operator(j, k, ell, ellp, rev_operator(j, k, ell, ellp, c)) == c
