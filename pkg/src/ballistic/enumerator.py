"""Exhaustive exact enumeration of the fixed-lengths model.

One pass over every velocity vector, every distinct arrangement of the
lengths and every spin branch actually consulted yields the conditional law
of the pairing given the velocities, ``c(v, pi)``.  Any event that is a
function of ``(v, pi)`` then has probability

    sum_v  p^#S (r(1-p))^#R ((1-r)(1-p))^#L  sum_{pi in event} c(v, pi)

which is assembled as an exact polynomial in ``(p, r)``.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import (
    L,
    R,
    S,
    ArrangedInstance,
    LengthVector,
    Outcome,
    PolyP,
    PolyPR,
    Skyline,
    Velocity,
    as_rational,
    format_rational,
    velocities,
)
from .resolver import extract_skyline, first_crossing, resolve

ENUM_MAX_N = 8
SKYLINE_MAX_N = 7
HALF = Fraction(1, 2)


class EnumerationBoundError(ValueError):
    """Requested size is beyond exhaustive reach."""


# ------------------------------------------------------------------ events


@dataclass(frozen=True)
class FirstCrosserIs:
    """``A == n`` (1-based); ``n=None`` means no particle crosses."""

    n: Optional[int]

    def holds(self, v, pairing) -> bool:
        for i, j in enumerate(pairing):
            if i == j and v[i] is L:
                return self.n == i + 1
        return self.n is None

    def describe(self) -> str:
        return f"A={'inf' if self.n is None else self.n}"


@dataclass(frozen=True)
class SkylineEquals:
    skyline: Skyline

    def holds(self, v, pairing) -> bool:
        return extract_skyline(v, Outcome(tuple(pairing))) == self.skyline

    def describe(self) -> str:
        return f"sky={self.skyline.key}"


@dataclass(frozen=True)
class PairingEquals:
    pairing: tuple

    def holds(self, v, pairing) -> bool:
        return tuple(pairing) == tuple(self.pairing)

    def describe(self) -> str:
        return f"pi={list(self.pairing)}"


@dataclass(frozen=True)
class Paired:
    """Particles ``i`` and ``j`` annihilate each other (0-based)."""

    i: int
    j: int

    def holds(self, v, pairing) -> bool:
        return pairing[self.i] == self.j

    def describe(self) -> str:
        return f"{self.i}~{self.j}"


@dataclass(frozen=True)
class VelocitiesEqual:
    """Velocity pattern; ``None`` entries are wildcards."""

    pattern: tuple

    def __init__(self, pattern):
        pat = tuple(None if x is None else Velocity(int(x)) for x in pattern)
        object.__setattr__(self, "pattern", pat)

    def holds(self, v, pairing) -> bool:
        return len(v) == len(self.pattern) and all(w is None or w is x for w, x in zip(self.pattern, v))

    def describe(self) -> str:
        return "v=" + "".join("*" if w is None else w.symbol for w in self.pattern)


@dataclass(frozen=True)
class And:
    parts: tuple

    def __init__(self, *parts):
        flat = []
        for p in parts:
            if isinstance(p, (list, tuple)):
                p = And(*p)
            if isinstance(p, And):
                flat.extend(p.parts)
            else:
                flat.append(p)
        object.__setattr__(self, "parts", tuple(flat))

    def holds(self, v, pairing) -> bool:
        return all(p.holds(v, pairing) for p in self.parts)

    def describe(self) -> str:
        return " & ".join(p.describe() for p in self.parts)


EventSpec = Union[FirstCrosserIs, SkylineEquals, PairingEquals, Paired, VelocitiesEqual, And]


def delta_event(n: int) -> And:
    """First particle right-moving, annihilated by the last, left-moving one."""
    return And(Paired(0, n - 1), VelocitiesEqual((R,) + (None,) * (n - 2) + (L,)))


# ------------------------------------------------------------------ results


@dataclass(frozen=True)
class EventPoly:
    poly: PolyPR

    def at_r(self, r) -> PolyP:
        return self.poly.specialize_r(r)

    @property
    def symmetric(self) -> PolyP:
        return self.poly.specialize_r(HALF)

    def __add__(self, other: "EventPoly") -> "EventPoly":
        return EventPoly(self.poly + other.poly)

    def __sub__(self, other: "EventPoly") -> "EventPoly":
        return EventPoly(self.poly - other.poly)

    def is_zero(self) -> bool:
        return self.poly.is_zero()

    def to_json(self):
        return self.poly.to_json()


@lru_cache(maxsize=64)
def _monomial(ns: int, nr: int, nl: int) -> PolyPR:
    # p^ns (r(1-p))^nr ((1-r)(1-p))^nl
    p = PolyPR([[0], [1]])
    q = PolyPR([[1], [-1]])
    r = PolyPR([[0, 1]])
    rbar = PolyPR([[1, -1]])
    return (p**ns) * (r**nr) * (rbar**nl) * (q ** (nr + nl))


@dataclass
class ConfigDistribution:
    """Conditional law ``c[v][pi] = P(pairing = pi | velocities = v)`` for fixed lengths."""

    lengths: LengthVector
    table: dict  # v tuple -> {pairing tuple: Fraction}
    leaves: int = 0

    @property
    def n(self) -> int:
        return len(self.lengths)

    def probability(self, event: EventSpec) -> EventPoly:
        groups: dict = defaultdict(Fraction)
        for v, dist in self.table.items():
            mass = sum((c for pi, c in dist.items() if event.holds(v, pi)), Fraction(0))
            if mass:
                groups[(v.count(S), v.count(R), v.count(L))] += mass
        out = PolyPR()
        for (ns, nr, nl), c in sorted(groups.items()):
            out = out + _monomial(ns, nr, nl) * c
        return EventPoly(out)

    def partition(self, key) -> dict:
        """Probability of every value of ``key(v, pi)``."""
        groups: dict = defaultdict(lambda: defaultdict(Fraction))
        for v, dist in self.table.items():
            cnt = (v.count(S), v.count(R), v.count(L))
            for pi, c in dist.items():
                groups[key(v, pi)][cnt] += c
        out = {}
        for k, g in groups.items():
            poly = PolyPR()
            for (ns, nr, nl), c in sorted(g.items()):
                poly = poly + _monomial(ns, nr, nl) * c
            out[k] = EventPoly(poly)
        return out


# ------------------------------------------------------------------ arrangements


def distinct_arrangements(values: Sequence) -> list[tuple]:
    """All distinct orderings of a multiset, in lexicographic order."""
    a = sorted(values)
    out = [tuple(a)]
    n = len(a)
    while True:
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return out
        j = n - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1 :] = reversed(a[i + 1 :])
        out.append(tuple(a))


def _integer_lengths(lengths: LengthVector) -> list[int]:
    den = math.lcm(*(x.denominator for x in lengths)) if len(lengths) else 1
    return [int(x * den) for x in lengths]


def _arrangement_weight(ints: Sequence[int]) -> Fraction:
    """Probability of one distinct arrangement under a uniform permutation."""
    mult = 1
    for c in _counts(ints).values():
        mult *= math.factorial(c)
    return Fraction(mult, math.factorial(len(ints)))


def _counts(xs):
    d: dict = defaultdict(int)
    for x in xs:
        d[x] += 1
    return d


def _check_bound(n: int, bound: int = ENUM_MAX_N):
    if n > bound:
        raise EnumerationBoundError(f"exhaustive enumeration is limited to n <= {bound} (got {n})")


# ------------------------------------------------------------------ backends


def _python_table(lengths: LengthVector, full_spins: bool = False) -> tuple[dict, int]:
    n = len(lengths)
    ints = _integer_lengths(lengths)
    arr = distinct_arrangements(ints)
    w_arr = _arrangement_weight(ints)
    table: dict = {}
    leaves = 0
    for vt in itertools.product((L, S, R), repeat=n):
        dist: dict = defaultdict(Fraction)
        for a in arr:
            pos = tuple(itertools.accumulate(a))
            if full_spins:
                for sp in itertools.product((-1, 1), repeat=n):
                    out = resolve(ArrangedInstance(pos, vt, sp))
                    dist[out.pairing] += w_arr / 2**n
                    leaves += 1
            else:
                for pairing, w in _lazy_spin_leaves(pos, vt):
                    dist[pairing] += w_arr * w
                    leaves += 1
        table[vt] = dict(dist)
    return table, leaves


def _lazy_spin_leaves(pos, vt):
    """Spin branches that matter, each with its probability."""
    n = len(pos)

    def explore(fixed: dict):
        spins = [fixed.get(i, -1) for i in range(n)]
        out = resolve(ArrangedInstance(pos, vt, spins))
        consulted = [t[1] for t in out.triples]
        free = [i for i in consulted if i not in fixed]
        if not free:
            yield out.pairing, Fraction(1, 2 ** len(fixed))
            return
        k = min(free)
        for s in (-1, 1):
            yield from explore({**fixed, k: s})

    yield from explore({})


def _numba_table(lengths: LengthVector, threads: int = 1) -> tuple[dict, int]:
    from . import _kernels as K

    n = len(lengths)
    ints = _integer_lengths(lengths)
    arr = distinct_arrangements(ints)
    w_arr = _arrangement_weight(ints)
    X = np.cumsum(np.array(arr, dtype=np.int64).reshape(len(arr), n), axis=1)
    total = 3**n
    threads = max(1, int(threads))
    bounds = np.linspace(0, total, min(threads * 4, total) + 1).astype(np.int64)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if threads == 1:
        parts = [K.enumerate_block(X, n, a, b) for a, b in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda ab: K.enumerate_block(X, n, ab[0], ab[1]), chunks))
    table: dict = {}
    leaves = 0
    decode_v = {}
    for vi_arr, key_arr, cnt_arr in parts:
        for vi, key, cnt in zip(vi_arr.tolist(), key_arr.tolist(), cnt_arr.tolist()):
            vt = decode_v.get(vi)
            if vt is None:
                t, digits = vi, []
                for _ in range(n):
                    digits.append(Velocity(t % 3 - 1))
                    t //= 3
                vt = decode_v[vi] = tuple(digits)
            nc = key & 15
            code = key >> 4
            pairing = tuple((code >> (4 * i)) & 15 for i in range(n))
            d = table.setdefault(vt, {})
            d[pairing] = d.get(pairing, Fraction(0)) + w_arr * Fraction(cnt, 2**nc)
            leaves += cnt
    return table, leaves


@lru_cache(maxsize=32)
def _cached(lengths: tuple, backend: str, full_spins: bool) -> ConfigDistribution:
    lv = LengthVector(lengths)
    if backend == "numba":
        table, leaves = _numba_table(lv)
    elif backend == "python":
        table, leaves = _python_table(lv, full_spins)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return ConfigDistribution(lv, table, leaves)


def enumerate_configurations(lengths, backend: str = "numba", full_spins: bool = False, threads: int = 1) -> ConfigDistribution:
    """Exact conditional law of the pairing given the velocities.

    ``full_spins`` (python backend only) sums over all ``2^n`` spin vectors
    instead of branching on consulted spins; it exists to validate the lazy
    branching.
    """
    lv = lengths if isinstance(lengths, LengthVector) else LengthVector(lengths)
    _check_bound(len(lv))
    if full_spins and backend != "python":
        raise ValueError("full spin enumeration is only provided by the python backend")
    if threads > 1 and backend == "numba":
        table, leaves = _numba_table(lv, threads)
        return ConfigDistribution(lv, table, leaves)
    return _cached(tuple(lv.lengths), backend, full_spins)


# ------------------------------------------------------------------ operations


def _lengths_for(n: int, lengths) -> LengthVector:
    lv = lengths if isinstance(lengths, LengthVector) else LengthVector(lengths)
    if len(lv) != n:
        raise ValueError(f"expected {n} lengths, got {len(lv)}")
    return lv


def enumerate_event(n: int, lengths, event: EventSpec, backend: str = "numba", threads: int = 1) -> EventPoly:
    _check_bound(n)
    lv = _lengths_for(n, lengths)
    return enumerate_configurations(lv, backend, threads=threads).probability(event)


def skyline_distribution(n: int, lengths, backend: str = "numba") -> dict[str, EventPoly]:
    """Skyline key -> exact probability polynomial in ``(p, r)``."""
    _check_bound(n, SKYLINE_MAX_N)
    lv = _lengths_for(n, lengths)
    if n == 0:
        return {"": EventPoly(PolyPR([[1]]))}
    cd = enumerate_configurations(lv, backend)
    return cd.partition(lambda v, pi: extract_skyline(v, Outcome(pi)).key)


@dataclass
class UniversalityResult:
    zero: bool
    differences: dict  # key -> PolyP (nonzero only)
    r: Fraction

    @property
    def max_degree(self) -> int:
        return max((d.degree for d in self.differences.values()), default=-1)

    def to_json(self) -> dict:
        return {
            "result": "ZERO" if self.zero else "nonzero",
            "r": format_rational(self.r),
            "max_degree": self.max_degree,
            "differences": {k: d.to_json() for k, d in sorted(self.differences.items())},
        }


def universality_diff(n: int, l1, l2, r=HALF, event: Optional[EventSpec] = None, backend: str = "numba") -> UniversalityResult:
    """Compare the two length vectors at right-share ``r``.

    Without ``event`` every skyline probability is compared; with an event
    only that event.
    """
    r = as_rational(r)
    if event is None:
        _check_bound(n, SKYLINE_MAX_N)
        a = skyline_distribution(n, l1, backend)
        b = skyline_distribution(n, l2, backend)
        keys = set(a) | set(b)
        zero = EventPoly(PolyPR())
        diffs = {}
        for k in keys:
            d = (a.get(k, zero) - b.get(k, zero)).at_r(r)
            if not d.is_zero():
                diffs[k] = d
    else:
        _check_bound(n)
        d = (enumerate_event(n, l1, event, backend) - enumerate_event(n, l2, event, backend)).at_r(r)
        diffs = {} if d.is_zero() else {event.describe(): d}
    return UniversalityResult(not diffs, diffs, r)


# ------------------------------------------------------------------ the n = 5 asymmetric example


def z_value(lengths) -> Fraction:
    """``P(x4 - x1 > x5 - x4) + P(=)/2`` over a uniform ordering of 5 lengths."""
    vals = [as_rational(x) for x in (lengths.lengths if isinstance(lengths, LengthVector) else lengths)]
    if len(vals) != 5:
        raise ValueError("z is defined for five lengths")
    tot = Fraction(0)
    for perm in itertools.permutations(vals):
        a, b = perm[1] + perm[2] + perm[3], perm[4]
        tot += 1 if a > b else (HALF if a == b else 0)
    return tot / 120


A5_PATTERNS = ((1, 1, 0, 0, -1), (1, 0, 0, -1, -1), (1, 0, -1, 0, -1), (1, 0, 1, 0, -1))


def displayed_A5_formula(pattern, z: Fraction) -> PolyPR:
    """The four stated expressions for ``P(A=5, v=pattern)``, verbatim."""
    p = PolyPR([[0], [1]])
    q = PolyPR([[1], [-1]])
    r = PolyPR([[0, 1]])
    rb = PolyPR([[1, -1]])
    base = p**2 * q**3
    pattern = tuple(pattern)
    if pattern == A5_PATTERNS[0]:
        return base * r**2 * rb * (z / 8)
    if pattern == A5_PATTERNS[1]:
        return base * r * rb**2 * ((1 - z) / 8)
    if pattern == A5_PATTERNS[2]:
        return base * r * rb**2 * r**2 * rb * (z / 16)
    if pattern == A5_PATTERNS[3]:
        return base * r**2 * rb * ((1 - z) / 16)
    raise ValueError(f"no stated expression for {pattern}")


def derived_A5_formula(pattern, z: Fraction) -> PolyPR:
    """``P(A=5, v=pattern)`` as established by enumeration: ``P(v)`` times
    ``1-z``, ``z``, ``(1-z)/2`` or ``z/2`` respectively."""
    pattern = tuple(pattern)
    if pattern not in A5_PATTERNS:
        raise ValueError(f"no expression for {pattern}")
    vt = velocities(pattern)
    cond = {0: 1 - z, 1: z, 2: (1 - z) / 2, 3: z / 2}[A5_PATTERNS.index(pattern)]
    return _monomial(vt.count(S), vt.count(R), vt.count(L)) * cond


@dataclass
class A5Component:
    pattern: tuple
    enumerated: PolyPR
    displayed: PolyPR
    derived: PolyPR
    conditional: Fraction  # P(A=5 | v = pattern)

    @property
    def match(self) -> bool:
        return self.enumerated == self.displayed

    @property
    def match_derived(self) -> bool:
        return self.enumerated == self.derived

    def to_json(self) -> dict:
        return {
            "pattern": list(self.pattern),
            "enumerated": self.enumerated.to_json(),
            "displayed": self.displayed.to_json(),
            "derived": self.derived.to_json(),
            "conditional_given_v": format_rational(self.conditional),
            "match": self.match,
            "match_derived": self.match_derived,
        }


def asym_A5_components(lengths, backend: str = "numba") -> dict:
    """Exact ``P(A=5, v=w)`` for the four highlighted patterns and the rest."""
    lv = _lengths_for(5, lengths)
    cd = enumerate_configurations(lv, backend)
    z = z_value(lv)
    comps = []
    for w in A5_PATTERNS:
        vt = velocities(w)
        cond = sum((c for pi, c in cd.table[vt].items() if FirstCrosserIs(5).holds(vt, pi)), Fraction(0))
        ev = cd.probability(And(FirstCrosserIs(5), VelocitiesEqual(w)))
        comps.append(A5Component(tuple(w), ev.poly, displayed_A5_formula(w, z), derived_A5_formula(w, z), cond))
    total = cd.probability(FirstCrosserIs(5)).poly
    others = total
    for c in comps:
        others = others - c.enumerated
    return {"z": z, "components": comps, "others": others, "total": total}


# ------------------------------------------------------------------ reports


def oracle_report(n: int, lengths, backend: str = "numba", seq=None) -> dict:
    """JSON-ready report: ``A=k`` for every ``k <= n``, the delta event, and checks."""
    from .exact import compute_sequences

    lv = _lengths_for(n, lengths)
    seq = seq if seq is not None and seq.N >= n else compute_sequences(max(n, 1))
    cd = enumerate_configurations(lv, backend)
    events = []
    unity = PolyPR()
    oracle = True
    for k in list(range(1, n + 1)) + [None]:
        ev = cd.probability(FirstCrosserIs(k))
        unity = unity + ev.poly
        events.append({"spec": FirstCrosserIs(k).describe(), "poly": ev.to_json()})
    pn = cd.probability(FirstCrosserIs(n)).symmetric
    oracle &= pn == seq.p[n]
    if n >= 2:
        dn = cd.probability(delta_event(n))
        events.append({"spec": delta_event(n).describe(), "poly": dn.to_json()})
        oracle &= dn.symmetric == seq.delta[n]
    return {
        "n": n,
        "lengths": lv.to_json(),
        "r": "symbolic",
        "events": events,
        "checks": {"partition_unity": unity == PolyPR([[1]]), "oracle_match": bool(oracle)},
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2)
