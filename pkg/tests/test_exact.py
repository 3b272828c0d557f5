import itertools
import math
from dataclasses import replace
from fractions import Fraction

import pytest

from ballistic.core import PolyP, Skyline, SkylineShape
from ballistic.exact import (
    CATALAN_MAX_M,
    all_skylines,
    catalan,
    catalan_report,
    compute_sequences,
    conjecture_scan,
    derivative_at_zero,
    exact_skyline_distribution,
    generating_identity_residual,
    laplace_D,
    laplace_series,
    quartic,
    sequence_values,
    skyline_probability,
    skyline_weight,
    uniform_grid,
)

F = Fraction
p = PolyP.p()
q = PolyP.one_minus_p()
SEQ = compute_sequences(30)


def test_base_cases():
    assert SEQ.p[1] == q * F(1, 2)
    assert SEQ.delta[1].is_zero()
    assert SEQ.p[2].is_zero()


def test_small_closed_forms():
    assert SEQ.p[3] == (p + F(1, 2)) * q * q * F(1, 4)
    assert SEQ.delta[2] == q * q * F(1, 4)
    assert SEQ.delta[4] == (PolyP([1, 1])) * q * q * q * F(1, 16)
    assert SEQ.p[5] == (p + F(1, 2)) ** 2 * q**3 * F(1, 4) - p * q**4 * F(1, 32)


@pytest.mark.parametrize("n", range(1, 31))
def test_parity_and_decomposition(n):
    if n % 2 == 0:
        assert SEQ.p[n].is_zero()
    else:
        assert SEQ.delta[n].is_zero()
    if n >= 2:
        assert SEQ.alpha[n] + SEQ.beta[n] + SEQ.gamma[n] == SEQ.p[n]
        assert SEQ.beta[n] * 2 == SEQ.alpha[n]


def test_numeric_sequences_agree_with_polynomials():
    x = F(2, 7)
    pv, dv = sequence_values(x, 30)
    assert all(pv[n] == SEQ.p[n](x) for n in range(1, 31))
    assert all(dv[n] == SEQ.delta[n](x) for n in range(1, 31))
    pf, _ = sequence_values(0.3, 30)
    assert max(abs(pf[n] - float(SEQ.p[n](F(3, 10)))) for n in range(1, 31)) < 1e-14


def test_bad_N():
    with pytest.raises(ValueError):
        compute_sequences(0)


@pytest.mark.parametrize(
    "shape, k, expected",
    [
        (SkylineShape.UP, 1, p),
        (SkylineShape.UP, 2, PolyP()),
        (SkylineShape.ARCH_RS, 2, p * q * F(1, 2)),
        (SkylineShape.ARCH_SL, 2, p * q * F(1, 2)),
        (SkylineShape.SURV_LEFT, 1, q * F(1, 2)),
        (SkylineShape.ARCH_RL, 2, q * q * F(1, 4)),
    ],
)
def test_skyline_weights(shape, k, expected):
    assert skyline_weight(shape, k, SEQ) == expected


def test_skyline_weight_rejects_empty():
    with pytest.raises(ValueError):
        skyline_weight(SkylineShape.UP, 0)


def test_skyline_probability_examples():
    assert skyline_probability(Skyline.from_key("Up[0:0]")) == p
    assert skyline_probability(Skyline.from_key("ArchRL[0:1]")) == q * q * F(1, 4)
    assert skyline_probability(Skyline.from_key("ArchRL[0:2]")).is_zero()


@pytest.mark.parametrize("n", range(1, 8))
def test_skyline_mass_is_one(n):
    dist = exact_skyline_distribution(n, SEQ)
    total = PolyP()
    for v in dist.values():
        total = total + v
    assert total == PolyP.constant(1)
    assert all(Skyline.from_key(k).check(n) for k in dist)


def test_all_skylines_are_valid_and_distinct():
    keys = [s.key for s in all_skylines(5)]
    assert len(keys) == len(set(keys))
    assert all(Skyline.from_key(k).check(5) for k in keys)


@pytest.mark.parametrize("N", [3, 30])
def test_generating_identity(N):
    res = generating_identity_residual(N, SEQ)
    assert all(c.is_zero() for c in res)


def test_generating_identity_negative_control():
    bad = replace(SEQ, p=SEQ.p[:3] + (SEQ.p[3] + PolyP.constant(1),) + SEQ.p[4:])
    assert any(not c.is_zero() for c in generating_identity_residual(10, bad))


def test_laplace_p0_closed_form():
    assert laplace_D(0.0, 0.6) == pytest.approx(1 / 3, abs=1e-12)
    for ell in (0.1, 0.5, 0.95):
        assert laplace_D(0.0, ell) == pytest.approx((1 - math.sqrt(1 - ell * ell)) / ell, abs=1e-12)


@pytest.mark.parametrize("pp", [0.0, 0.1, 0.25, 0.4, 0.7])
@pytest.mark.parametrize("ell", [0.2, 0.5, 0.9])
def test_laplace_root_matches_series(pp, ell):
    w = laplace_D(pp, ell)
    assert abs(quartic(pp, ell, w)) <= 1e-12
    assert abs(w - laplace_series(pp, ell, 200)) <= 1e-9


@pytest.mark.parametrize("pp, lam", [(0.1, 0.5), (0.25, 1.0), (0.4, 2.0)])
def test_laplace_exponential_form(pp, lam):
    w = laplace_D(pp, 1 / (1 + lam))
    assert abs(pp * w**4 - (2 * pp + 1) * w**2 + 2 * (lam + 1) * w + pp - 1) < 1e-10


def test_laplace_at_one_below_quarter():
    for pp in (0.0, 0.1, 0.25):
        assert laplace_D(pp, 1.0) == pytest.approx(1.0, abs=1e-4)
    assert laplace_D(0.5, 1.0) < 0.99


def test_laplace_rejects_bad_parameters():
    with pytest.raises(ValueError):
        laplace_D(0.2, 0.0)
    with pytest.raises(ValueError):
        laplace_D(1.5, 0.5)


@pytest.mark.parametrize("m", range(1, 6))
def test_catalan_counts(m):
    rep = catalan_report(m, SEQ)
    assert rep.C_m == math.comb(2 * m, m) // (m + 1) == catalan(m)
    assert rep.counts_match
    assert rep.T_left == (rep.Square + rep.T_sym) / 2
    assert rep.extras["EV_bruteforce"] == rep.closedForms["EV"] == rep.closedForms["EV_ratio"]
    assert rep.extras["EW_bruteforce"] == rep.closedForms["EW"]
    # the derivative assembled from the counts must agree with the recurrence
    assert rep.derivAt0_fromCounts == rep.derivAt0_fromRecurrence


def test_catalan_m1_hand_values():
    rep = catalan_report(1, SEQ)
    assert (rep.C_m, rep.T_sym, rep.Square, rep.T_left) == (1, 1, 2, F(3, 2))


def test_catalan_bound():
    with pytest.raises(ValueError):
        catalan_report(CATALAN_MAX_M + 1)


@pytest.mark.parametrize("m, rec, displayed", [(1, F(0), F(1, 16)), (2, F(1, 32), F(11, 128)), (3, F(1, 32), F(19, 256))])
def test_derivative_at_zero(m, rec, displayed):
    assert derivative_at_zero(m, SEQ) == (rec, displayed)


@pytest.mark.parametrize("n", range(1, 26))
def test_log_derivative_at_quarter(n):
    seq = compute_sequences(25) if n > SEQ.N else SEQ
    pn = seq.p[n]
    x = F(1, 4)
    assert pn.derivative()(x) + F(4, 3) * pn(x) == 0


def test_scan_p3_values():
    d3 = SEQ.p[3].derivative()
    assert d3(F(1, 4)) == F(-9, 64) == -F(4, 3) * SEQ.p[3](F(1, 4))
    assert d3 == p * q * F(-3, 4)


def test_scan_flags_small():
    table = conjecture_scan(7, uniform_grid(101), SEQ, prop51_points=200)
    assert all(table.flags.values()), table.flags
    assert len(table.rows) == 7 * 101
    csv_text = table.to_csv()
    assert csv_text.splitlines()[0] == "n,p_decimal,p,p_n,cdf,cond,dp_n"
    assert "3,0.250000,1/4,27/256" in csv_text


def test_scan_rejects_bad_grid():
    with pytest.raises(ValueError):
        conjecture_scan(3, [F(3, 2)])


def test_partial_sums_monotone_and_bounded():
    pv, _ = sequence_values(F(1, 4), 60)
    partial = list(itertools.accumulate(pv[1:]))
    assert all(b >= a for a, b in zip(partial, partial[1:]))
    assert partial[-1] < 1
    hi, _ = sequence_values(0.6, 200)
    assert sum(hi) < 0.9


@pytest.mark.xfail(strict=True, reason="the tail of sum p_n at p=1/4 decays like N^(-1/3); N=200 leaves a gap of about 0.15")
def test_partial_sum_at_quarter_within_loose_band():
    pv, _ = sequence_values(0.25, 200)
    assert abs(sum(pv) - 1) <= 0.05
