"""Collision resolution for a single arranged instance.

Two independent routes compute the same :class:`Outcome`:

* :func:`resolve` scans left to right with a stack of right-movers and
  statics that are still reachable;
* :func:`resolve_reference` runs an event-driven loop over adjacent pairs.

Spin convention at a triple collision ``R -> S <- L``: spin ``-1`` means
the right-mover and the static annihilate and the left-mover goes on;
spin ``+1`` means the static and the left-mover annihilate.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .core import (
    L,
    R,
    S,
    ArrangedInstance,
    LengthVector,
    Outcome,
    Segment,
    Skyline,
    SkylineShape,
    Velocity,
    as_rational,
    format_rational,
)

CLASSIFY_MAX_N = 24


class GenericityClass:
    GENERIC = "Generic"
    SINGLE = "Single"
    MULTIPLE = "Multiple"


@dataclass(frozen=True)
class Crossing:
    """First particle to cross the origin from the right.

    ``index`` is 0-based; ``number`` is the 1-based particle count ``A``.
    """

    index: Optional[int] = None
    distance: Optional[object] = None

    @property
    def number(self) -> Optional[int]:
        return None if self.index is None else self.index + 1

    def __bool__(self):
        return self.index is not None


def positions_from(lengths: Sequence, permutation: Sequence[int]) -> tuple:
    """Partial sums of ``lengths`` read in the order ``permutation`` (0-based)."""
    n = len(lengths)
    if sorted(permutation) != list(range(n)):
        raise ValueError(f"{permutation!r} is not a permutation of 0..{n - 1}")
    out, acc = [], 0
    for k in permutation:
        acc = acc + lengths[k]
        out.append(acc)
    return tuple(out)


def _effective_right(stack: list[int], v) -> Optional[int]:
    """Stack slot of the right-mover that first reaches the static on top.

    Right/static pairs below the top cancel before any left-mover can get
    there, so the search skips over them; an unmatched static blocks.
    """
    pending = 0
    for slot in range(len(stack) - 2, -1, -1):
        if v[stack[slot]] is S:
            pending += 1
        elif pending:
            pending -= 1
        else:
            return slot
    return None


def _cancel_run(run: list[int], v, pairing: list[int]) -> list[int]:
    """Pair off right-movers directly followed by statics; return the leftovers."""
    reduced: list[int] = []
    for k in run:
        if v[k] is S and reduced and v[reduced[-1]] is R:
            j = reduced.pop()
            pairing[j], pairing[k] = k, j
        else:
            reduced.append(k)
    return reduced


def resolve(instance: ArrangedInstance) -> Outcome:
    """Stack resolution of the annihilation dynamics."""
    x, v, s = instance.positions, instance.velocities, instance.spins
    n = len(x)
    pairing = list(range(n))
    triples = []
    stack: list[int] = []
    for i in range(n):
        if v[i] is not L:
            stack.append(i)
            continue
        while stack:
            top = stack[-1]
            if v[top] is R:
                stack.pop()
                pairing[top], pairing[i] = i, top
                break
            slot = _effective_right(stack, v)
            if slot is not None:
                rival = stack[slot]
                t_left = x[i] - x[top]
                t_right = x[top] - x[rival]
                tie = t_left == t_right
            if slot is None or t_left < t_right or (tie and s[top] == 1):
                if slot is not None and tie:
                    triples.append((rival, top, i, rival))
                stack.pop()
                pairing[top], pairing[i] = i, top
                break
            if tie:
                triples.append((rival, top, i, i))
            leftover = _cancel_run(stack[slot + 1 : -1], v, pairing)
            assert not leftover, "particles between the racing pair must cancel"
            del stack[slot:]
            pairing[top], pairing[rival] = rival, top
    _cancel_run(stack, v, pairing)
    return Outcome(tuple(pairing), tuple(sorted(triples)))


def _meet2(xa, va, xb, vb):
    """Twice the meeting time of adjacent particles ``a < b``, or None."""
    if va is R:
        if vb is L:
            return xb - xa
        if vb is S:
            return 2 * (xb - xa)
    elif va is S and vb is L:
        return 2 * (xb - xa)
    return None


def _event_loop(instance: ArrangedInstance, trace: Optional[list] = None) -> Outcome:
    x, v, s = instance.positions, instance.velocities, instance.spins
    n = len(x)
    pairing = list(range(n))
    triples = []
    alive = [True] * n
    nxt = list(range(1, n)) + [-1]
    prv = [-1] + list(range(n - 1))
    heap: list = []

    def push(a: int, b: int, now2=None):
        if a < 0 or b < 0:
            return
        t2 = _meet2(x[a], v[a], x[b], v[b])
        if t2 is None:
            return
        if now2 is not None and not t2 > now2:
            raise AssertionError("newly adjacent pair meets in the past")
        heapq.heappush(heap, (t2, a, b))

    def unlink(k: int):
        alive[k] = False
        a, b = prv[k], nxt[k]
        if a >= 0:
            nxt[a] = b
        if b >= 0:
            prv[b] = a

    def record(t2, kind, indices, survivor):
        if trace is None:
            return
        if kind == "pair" and v[indices[0]] is R and v[indices[1]] is L:
            pos = (x[indices[0]] + x[indices[1]]) / 2 if isinstance(x[0], float) else Fraction(x[indices[0]] + x[indices[1]], 2)
        else:
            pos = x[next(k for k in indices if v[k] is S)]
        t = t2 / 2 if isinstance(t2, float) else Fraction(t2, 2)
        trace.append({"time": t, "position": pos, "kind": kind, "indices": list(indices), "survivor": survivor})

    for a in range(n - 1):
        push(a, a + 1)

    while heap:
        now2 = heap[0][0]
        batch = []
        while heap and heap[0][0] == now2:
            _, a, b = heapq.heappop(heap)
            if alive[a] and alive[b] and nxt[a] == b:
                batch.append((a, b))
        if not batch:
            continue
        involved: dict[int, list] = {}
        for a, b in batch:
            involved.setdefault(a, []).append((a, b))
            involved.setdefault(b, []).append((a, b))
        removed = []
        done = set()
        for a, b in batch:
            if (a, b) in done:
                continue
            # a static hit from both sides at once is a triple collision
            mid = a if len(involved[a]) == 2 else (b if len(involved[b]) == 2 else None)
            if mid is not None:
                (ra, _), (_, lb) = sorted(involved[mid])
                done.update(involved[mid])
                if s[mid] == -1:
                    pairing[ra], pairing[mid] = mid, ra
                    removed += [ra, mid]
                    triples.append((ra, mid, lb, lb))
                    record(now2, "triple", (ra, mid, lb), lb)
                else:
                    pairing[mid], pairing[lb] = lb, mid
                    removed += [mid, lb]
                    triples.append((ra, mid, lb, ra))
                    record(now2, "triple", (ra, mid, lb), ra)
            else:
                done.add((a, b))
                pairing[a], pairing[b] = b, a
                removed += [a, b]
                record(now2, "pair", (a, b), None)
        for k in removed:
            unlink(k)
        for k in removed:
            a, b = prv[k], nxt[k]
            if a >= 0 and b >= 0 and alive[a] and alive[b]:
                push(a, b, now2)
    return Outcome(tuple(pairing), tuple(sorted(triples)))


def resolve_reference(instance: ArrangedInstance) -> Outcome:
    """Event-driven resolution: always collide the earliest adjacent pair."""
    return _event_loop(instance)


def collision_trace(instance: ArrangedInstance) -> list[dict]:
    """Chronological list of collisions (time, position, kind, indices, survivor)."""
    trace: list = []
    _event_loop(instance, trace)
    return trace


def _num_json(x):
    if isinstance(x, float):
        return repr(x)
    return format_rational(as_rational(x))


def write_trace(instance: ArrangedInstance, fh) -> int:
    """Write the collision trace as JSON lines; returns the number of events."""
    events = collision_trace(instance)
    for ev in events:
        row = dict(ev, time=_num_json(ev["time"]), position=_num_json(ev["position"]))
        fh.write(json.dumps(row) + "\n")
    return len(events)


def first_crossing(instance: ArrangedInstance, outcome: Outcome) -> Crossing:
    v = instance.velocities
    for i, j in enumerate(outcome.pairing):
        if i == j and v[i] is L:
            return Crossing(i, instance.positions[i])
    return Crossing()


def extract_skyline(instance, outcome: Outcome) -> Skyline:
    """Skyline of a resolved configuration.

    ``instance`` may be an :class:`ArrangedInstance` or a bare velocity
    sequence; the skyline only depends on velocities and pairing.
    """
    v = instance.velocities if isinstance(instance, ArrangedInstance) else instance
    pi = outcome.pairing
    n = len(pi)
    segs: list[Segment] = []
    start = 0
    right_surv = []
    for i, j in enumerate(pi):
        if i != j:
            continue
        if v[i] is L:
            segs.append(Segment(start, i, SkylineShape.SURV_LEFT))
            start = i + 1
        elif v[i] is R:
            right_surv.append(i)
    stop = right_surv[0] if right_surv else n
    i = start
    arch = {(R, L): SkylineShape.ARCH_RL, (R, S): SkylineShape.ARCH_RS, (S, L): SkylineShape.ARCH_SL}
    while i < stop:
        j = pi[i]
        if j == i:
            segs.append(Segment(i, i, SkylineShape.UP))
            i += 1
        else:
            segs.append(Segment(i, j, arch[v[i], v[j]]))
            i = j + 1
    for idx, k in enumerate(right_surv):
        end = right_surv[idx + 1] - 1 if idx + 1 < len(right_surv) else n - 1
        segs.append(Segment(k, end, SkylineShape.SURV_RIGHT))
    return Skyline(tuple(segs))


def _integer_scaled(lengths: Iterable) -> list[int]:
    vals = [as_rational(x) for x in lengths]
    den = math.lcm(*(x.denominator for x in vals)) if vals else 1
    return [int(x * den) for x in vals]


def _signed_sums(vals: Sequence[int]) -> dict[int, int]:
    counts = {0: 1}
    for w in vals:
        nxt: dict[int, int] = {}
        for sm, c in counts.items():
            for d in (-w, 0, w):
                nxt[sm + d] = nxt.get(sm + d, 0) + c
        counts = nxt
    return counts


def tie_count(lengths) -> int:
    """Number of unordered pairs of disjoint nonempty index sets with equal sums."""
    vals = _integer_scaled(lengths)
    if len(vals) > CLASSIFY_MAX_N:
        raise ValueError(f"exact tie census limited to n <= {CLASSIFY_MAX_N}")
    half = len(vals) // 2
    left, right = _signed_sums(vals[:half]), _signed_sums(vals[half:])
    zero = sum(c * right.get(-sm, 0) for sm, c in left.items())
    return (zero - 1) // 2


def classify_lengths(lengths) -> str:
    ties = tie_count(lengths)
    if ties == 0:
        return GenericityClass.GENERIC
    if ties == 1:
        return GenericityClass.SINGLE
    return GenericityClass.MULTIPLE


# ------------------------------------------------------------------ reversing operators
#
# A configuration is ``(v, s, sigma)``: velocities, spins and a permutation of
# length indices.  The gap just before particle ``m`` is ``lengths[sigma[m]]``
# (the first gap, from the origin, never affects the dynamics).


def perturbed_lengths(lengths) -> LengthVector:
    """Generic neighbour ``l + eps (1, 2, 4, ...)`` keeping every strict comparison.

    With integer-scaled lengths, ``eps = 2^-(n+1)`` moves any subset sum by
    less than 1/2 while making all disjoint subset sums distinct.
    """
    vals = [as_rational(x) for x in lengths]
    den = math.lcm(*(x.denominator for x in vals)) if vals else 1
    eps = Fraction(1, den * 2 ** (len(vals) + 1))
    return LengthVector([x + eps * 2**t for t, x in enumerate(vals)])


def _config_instance(lengths: Sequence, config) -> ArrangedInstance:
    v, s, sigma = config
    return ArrangedInstance(positions_from(lengths, sigma), v, s)


def _check_config(lengths, config):
    v, s, sigma = config
    n = len(lengths)
    if not (len(v) == len(s) == len(sigma) == n):
        raise ValueError("configuration and lengths differ in size")
    if sorted(sigma) != list(range(n)):
        raise ValueError(f"{sigma!r} is not a permutation")
    if any(x not in (-1, 1) for x in s):
        raise ValueError("spins must be +-1")


def _lengths_values(lengths) -> tuple:
    return tuple(lengths.lengths if isinstance(lengths, LengthVector) else (as_rational(x) for x in lengths))


def config_outcome(lengths, config) -> Outcome:
    return resolve(_config_instance(_lengths_values(lengths), config))


def config_skyline(lengths, config) -> Skyline:
    return extract_skyline(config[0], config_outcome(lengths, config))


def _triple_at(lengths, config, j: int, k: int) -> Optional[int]:
    """Static index ``i`` of a triple collision ``R_j -> S_i <- L_k`` under ``lengths``."""
    for a, i, b, _ in config_outcome(lengths, config).triples:
        if a == j and b == k:
            return i
    return None


def rev_operator(j: int, k: int, lengths, lengths_p, config):
    """Reverse the interval between a tied right-mover ``j`` and left-mover ``k``.

    Identity unless ``config`` has the triple collision ``R_j -> S_i <- L_k``
    under ``lengths``.  Otherwise it stays put when the perturbed comparison
    of the two tied gap sums already agrees with the spin of ``i``, and is
    mirrored on ``(x_j, x_k)`` (gaps reversed, velocities and spins negated)
    when it does not.
    """
    ell, ellp = _lengths_values(lengths), _lengths_values(lengths_p)
    if len(ell) != len(ellp):
        raise ValueError("length vectors differ in size")
    _check_config(ell, config)
    n = len(ell)
    if not 0 <= j < k < n:
        raise ValueError(f"need 0 <= j < k < n, got j={j}, k={k}")
    v, s, sigma = (tuple(c) for c in config)
    i = _triple_at(ell, (v, s, sigma), j, k)
    if i is None:
        return (v, s, sigma)
    I = [sigma[t] for t in range(j + 1, i + 1)]
    J = [sigma[t] for t in range(i + 1, k + 1)]
    if sum(ell[t] for t in I) != sum(ell[t] for t in J):
        raise ValueError("triple collision without a tie: lengths/config inconsistent")
    lI, lJ = sum(ellp[t] for t in I), sum(ellp[t] for t in J)
    if lI == lJ:
        raise ValueError("perturbed lengths must break the tie")
    if (lI < lJ and s[i] == -1) or (lI > lJ and s[i] == 1):
        return (v, s, sigma)
    v2, s2, sg2 = list(v), list(s), list(sigma)
    for m in range(j + 1, k + 1):
        sg2[m] = sigma[j + 1 + k - m]
    for m in range(j + 1, k):
        v2[m] = Velocity(-v[j + k - m])
        s2[m] = -s[j + k - m]
    return (tuple(v2), tuple(s2), tuple(sg2))


def phi_map(lengths, lengths_p, config):
    """Compose ``rev`` over the triple collisions of ``config``, innermost first."""
    ell = _lengths_values(lengths)
    _check_config(ell, config)
    cur = tuple(tuple(c) for c in config)
    pairs = sorted({(a, b) for a, _, b, _ in config_outcome(ell, cur).triples}, key=lambda ab: (ab[1] - ab[0], ab[0]))
    for a, b in pairs:
        cur = rev_operator(a, b, ell, lengths_p, cur)
    return cur
