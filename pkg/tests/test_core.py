from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballistic.core import (
    L,
    R,
    S,
    ArrangedInstance,
    Deterministic,
    Exponential,
    Gamma,
    LengthVector,
    ModelParams,
    Outcome,
    PolyP,
    PolyPR,
    Skyline,
    SkylineShape,
    TwoPoint,
    Uniform,
    Velocity,
    as_rational,
    format_distribution,
    format_rational,
    parse_distribution,
    poly_derivative,
    poly_eval,
    velocities,
)

P3 = PolyP([Fraction(1, 8), 0, Fraction(-3, 8), Fraction(1, 4)])
rationals = st.fractions(max_denominator=50).filter(lambda x: abs(x) < 100)
polys = st.lists(rationals, max_size=6).map(PolyP)


def test_poly_eval_examples():
    half_q = PolyP([Fraction(1, 2), Fraction(-1, 2)])
    assert poly_eval(half_q, Fraction(1, 4)) == Fraction(3, 8)
    assert poly_eval(PolyP(), Fraction(2, 7)) == 0
    assert poly_eval(P3, Fraction(1, 4)) == Fraction(27, 256)


def test_p3_factored_form():
    p = PolyP.p()
    q = PolyP.one_minus_p()
    assert (p + Fraction(1, 2)) * q * q * Fraction(1, 4) == P3


def test_poly_derivative_examples():
    assert poly_derivative(PolyP([Fraction(1, 2), Fraction(-1, 2)])) == PolyP([Fraction(-1, 2)])
    assert poly_derivative(PolyP([5])).is_zero()
    assert poly_derivative(P3)(0) == 0


def test_trimming_and_degree():
    assert PolyP([1, 2, 0, 0]).degree == 1
    assert PolyP([0, 0]).degree == -1
    assert PolyP().is_zero()


@settings(max_examples=200)
@given(polys, polys, polys, rationals)
def test_ring_laws_and_evaluation_homomorphism(f, g, h, x):
    assert f * g == g * f
    assert (f * g) * h == f * (g * h)
    assert f * (g + h) == f * g + f * h
    assert (f * g)(x) == f(x) * g(x)
    assert (f + g)(x) == f(x) + g(x)


@given(rationals, rationals)
def test_rational_round_trip(a, c):
    assert (a + c) - c == a


@given(polys)
def test_polyp_json_round_trip(f):
    assert PolyP.loads(f.dumps()) == f
    assert all("/" in c for c in f.to_json())


@given(polys, polys)
def test_divmod(f, g):
    if g.is_zero():
        return
    q, r = f.divmod(g)
    assert q * g + r == f
    assert r.degree < g.degree


def test_polypr_specialisation():
    p = PolyPR([[0], [1]])
    r = PolyPR.r()
    f = p * r + (PolyPR([[1], [-1]]) * r * r)
    assert f.specialize_r(Fraction(1, 2)) == PolyP([Fraction(1, 4), Fraction(1, 4)])
    assert f.evaluate(Fraction(1, 3), Fraction(1, 2)) == Fraction(1, 3)
    assert PolyPR.from_json(f.to_json()) == f


def test_velocity_parsing():
    assert velocities("RSL") == (R, S, L)
    assert velocities((1, 0, -1)) == (R, S, L)
    assert [v.symbol for v in Velocity] == ["L", "S", "R"]
    with pytest.raises(ValueError):
        velocities("RX")


def test_model_params_validation():
    m = ModelParams(Fraction(1, 4))
    assert m.symmetric
    probs = m.velocity_probabilities()
    assert sum(probs.values()) == 1
    assert probs[L] == probs[R] == Fraction(3, 8)
    with pytest.raises(ValueError):
        ModelParams(Fraction(3, 2))
    with pytest.raises(ValueError):
        ModelParams(Fraction(1, 2), 1)


def test_length_vector_sorted_and_positive():
    lv = LengthVector([4, 1, 2])
    assert lv.lengths == (1, 2, 4)
    assert LengthVector.powers_of_two(3).lengths == (1, 2, 4)
    assert LengthVector.ones(2).lengths == (1, 1)
    with pytest.raises(ValueError):
        LengthVector([1, 0])


def test_arranged_instance_invariants():
    inst = ArrangedInstance.from_lengths([1, 2, 4], "RSL")
    assert inst.positions == (1, 3, 7)
    assert inst.spins == (-1, -1, -1)
    with pytest.raises(ValueError):
        ArrangedInstance((1, 1), "RL")
    with pytest.raises(ValueError):
        ArrangedInstance((0, 1), "RL")
    with pytest.raises(ValueError):
        ArrangedInstance((1, 2), "RL", (0, 1))


def test_outcome_validation_rejects_bad_pairings():
    Outcome((1, 0)).validate(velocities("RL"))
    with pytest.raises(ValueError):
        Outcome((1, 0)).validate(velocities("LR"))
    with pytest.raises(ValueError):
        Outcome((2, 3, 0, 1)).validate(velocities("RRLL"))
    with pytest.raises(ValueError):
        Outcome((2, 1, 0)).validate(velocities("RSL"))


@pytest.mark.parametrize(
    "key, n, ok",
    [
        ("Up[0:0]", 1, True),
        ("SurvLeft[0:2]|ArchRL[3:4]|SurvRight[5:5]", 6, True),
        ("ArchRL[0:1]|SurvLeft[2:2]", 3, False),
        ("Up[0:1]", 2, False),
        ("ArchRS[0:2]", 3, False),
    ],
)
def test_skyline_check(key, n, ok):
    sk = Skyline.from_key(key)
    assert sk.key == key
    assert sk.check(n) is ok


def test_six_shapes():
    assert len(SkylineShape) == 6


@pytest.mark.parametrize(
    "spec, cls",
    [("exp:1", Exponential), ("gamma:2,1", Gamma), ("uniform:0.5,1.5", Uniform), ("twopoint:1,4,0.5", TwoPoint), ("det:1", Deterministic)],
)
def test_parse_distribution_round_trip(spec, cls):
    d = parse_distribution(spec)
    assert isinstance(d, cls)
    assert parse_distribution(format_distribution(d)) == d


@pytest.mark.parametrize("dist", [Exponential(2.0), Gamma(2.0, 1.5), Uniform(0.5, 1.5), TwoPoint(1, 4, 0.25), Deterministic(3)])
def test_sample_mean_and_laplace(dist):
    rng = np.random.default_rng(3)
    x = dist.sample(rng, 200_000)
    assert abs(x.mean() - dist.mean) < 5 * x.std() / np.sqrt(x.size) + 1e-12
    lam = 0.7
    assert abs(np.exp(-lam * x).mean() - dist.laplace(lam)) < 0.005


def test_bad_distribution_parameters():
    with pytest.raises(ValueError):
        Exponential(-1)
    with pytest.raises(ValueError):
        TwoPoint(1, 4, 1.5)
    with pytest.raises(ValueError):
        parse_distribution("cauchy:1")


def test_rational_helpers():
    assert as_rational("3/10") == Fraction(3, 10)
    assert as_rational(0.5) == Fraction(1, 2)
    assert format_rational(Fraction(-3, 8)) == "-3/8"
