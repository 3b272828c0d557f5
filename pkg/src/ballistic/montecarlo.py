"""Seeded Monte Carlo for the random-length model.

Trials are generated in fixed-size blocks; block ``b`` draws from its own
PCG64 stream spawned from ``(master_seed, stream_index, b)``.  Which worker
runs a block never matters, so results are identical for any thread count.

Continuous length laws use float positions and never consult spins (ties
have probability zero; any that occur are broken towards the right-mover /
static pair and counted as ``floatTies``).  Discrete laws use integer-scaled
positions, so ties are exact and spins are drawn uniformly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .core import (
    Deterministic,
    Exponential,
    Gamma,
    ModelParams,
    Segment,
    Skyline,
    SkylineShape,
    TwoPoint,
    Uniform,
    Velocity,
    format_distribution,
    velocities,
)
from .exact import laplace_D, laplace_series

BLOCK_SIZE = 1 << 14
PAIRING_KEY_MAX_N = 10
SKYLINE_KEY_MAX_N = 22
MIN_CLASS = 500
SHAPES = list(SkylineShape)


class InsufficientSamples(ValueError):
    pass


def default_threads() -> int:
    env = os.environ.get("BA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RngSpec:
    master_seed: int = 0
    stream_index: int = 0

    def block(self, b: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index, b))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngSpec":
        """Independent spec for a sub-experiment."""
        return RngSpec(self.master_seed, self.stream_index * 1000 + k + 1)


def _as_rng(seed) -> RngSpec:
    return seed if isinstance(seed, RngSpec) else RngSpec(int(seed))


def _blocks(total: int, size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(b, min(size, total - b * size)) for b in range((total + size - 1) // size)]


def _map_blocks(fn, blocks, threads):
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, blocks))


# ------------------------------------------------------------------ length laws


def _is_discrete(dist) -> bool:
    return isinstance(dist, (TwoPoint, Deterministic))


def _integer_atoms(dist) -> tuple[list[int], int]:
    atoms = [Fraction(a) for a in dist.atoms()]
    den = math.lcm(*(a.denominator for a in atoms))
    return [int(a * den) for a in atoms], den


def _kernel_law(dist) -> tuple[int, float, float, float, float]:
    """(kind, a, b, c, scale) for the streaming kernels; positions are divided by ``scale``."""
    if isinstance(dist, Exponential):
        return K.D_EXP, 1.0 / dist.rate, 0.0, 0.0, 1.0
    if isinstance(dist, Gamma):
        return K.D_GAMMA, float(dist.shape), float(dist.scale), 0.0, 1.0
    if isinstance(dist, Uniform):
        return K.D_UNIFORM, float(dist.a), float(dist.b), 0.0, 1.0
    if isinstance(dist, TwoPoint):
        (ia, ib), den = _integer_atoms(dist)
        return K.D_TWOPOINT, float(ia), float(ib), float(dist.weight), float(den)
    if isinstance(dist, Deterministic):
        (ic,), den = _integer_atoms(dist)
        return K.D_DET, float(ic), 0.0, 0.0, float(den)
    raise ValueError(f"unsupported length law {dist!r}")


# ------------------------------------------------------------------ trial records


@dataclass(frozen=True)
class TrialRecord:
    A: Optional[int]
    D: Optional[float]
    x_n: float
    skylineKey: Optional[str]
    pairingKey: Optional[str]
    staticCount: int


@lru_cache(maxsize=None)
def skyline_key_from_code(code: int, n: int) -> str:
    digits = []
    for _ in range(n):
        digits.append(code % 7)
        code //= 7
    starts = [i for i, d in enumerate(digits) if d]
    segs = []
    for s_idx, i in enumerate(starts):
        end = starts[s_idx + 1] - 1 if s_idx + 1 < len(starts) else n - 1
        segs.append(Segment(i, end, SHAPES[digits[i] - 1]))
    return Skyline(tuple(segs)).key


@lru_cache(maxsize=None)
def pairing_key_from_code(code: int, n: int) -> str:
    v = []
    for _ in range(n):
        v.append(Velocity(code % 3 - 1))
        code //= 3
    pi = []
    for _ in range(n):
        pi.append(code % 16)
        code //= 16
    return "".join(x.symbol for x in v) + ":" + ",".join(map(str, pi))


@dataclass
class TrialBatch:
    """Column storage for trials; behaves as a sequence of :class:`TrialRecord`.

    ``A`` is 1-based with -1 for "no crossing"; ``D`` is NaN then.  Keys are
    integer codes (-1 when not computed).
    """

    n: int
    A: np.ndarray
    D: np.ndarray
    xn: np.ndarray
    sky: np.ndarray
    pc: np.ndarray
    static: np.ndarray
    survivors: np.ndarray
    ties: int = 0
    discrete: bool = False

    def __len__(self):
        return int(self.A.shape[0])

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[k] for k in range(*t.indices(len(self)))]
        a = int(self.A[t])
        return TrialRecord(
            None if a < 0 else a,
            None if a < 0 else float(self.D[t]),
            float(self.xn[t]),
            self.skyline_key(t),
            self.pairing_key(t),
            int(self.static[t]),
        )

    def __iter__(self):
        for t in range(len(self)):
            yield self[t]

    def skyline_key(self, t) -> Optional[str]:
        c = int(self.sky[t])
        return None if c < 0 else skyline_key_from_code(c, self.n)

    def pairing_key(self, t) -> Optional[str]:
        c = int(self.pc[t])
        return None if c < 0 else pairing_key_from_code(c, self.n)

    @property
    def float_ties(self) -> int:
        return 0 if self.discrete else self.ties

    def select(self, mask) -> "TrialBatch":
        return TrialBatch(
            self.n, self.A[mask], self.D[mask], self.xn[mask], self.sky[mask], self.pc[mask],
            self.static[mask], self.survivors[mask], self.ties, self.discrete,
        )

    def to_csv(self, fh) -> None:
        fh.write("A,D,x_n,skylineKey,pairingKey,staticCount\n")
        for rec in self:
            fh.write(
                f"{'' if rec.A is None else rec.A},{'' if rec.D is None else repr(rec.D)},{rec.x_n!r},"
                f"{rec.skylineKey or ''},{rec.pairingKey or ''},{rec.staticCount}\n"
            )

    @classmethod
    def concat(cls, n: int, parts: Sequence[tuple], discrete: bool) -> "TrialBatch":
        cols = list(zip(*parts))
        return cls(
            n, *(np.concatenate(c) for c in cols[:7]), ties=int(sum(cols[7])), discrete=discrete
        )


def _forced_array(forced, n):
    if forced is None:
        return None
    vt = velocities(forced)
    if len(vt) != n:
        raise ValueError(f"forced velocities have length {len(vt)}, expected {n}")
    return np.array([int(x) for x in vt], dtype=np.int8)


def _velocities_block(rng, size, n, params: ModelParams):
    u = rng.random((size, n))
    p, r = float(params.p), float(params.r)
    return np.where(u < p, 0, np.where(u < p + r * (1 - p), 1, -1)).astype(np.int8)


def run_trials(
    n: int,
    dist,
    params: ModelParams,
    trials: int,
    seed=0,
    threads: Optional[int] = None,
    forced_velocities=None,
    keys: bool = True,
) -> TrialBatch:
    """``trials`` independent systems of ``n`` particles.

    ``forced_velocities`` conditions every trial on one velocity vector.
    Keys are computed when ``keys`` and ``n`` is small enough for the
    integer codes (skyline n <= 22, pairing n <= 10).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    spec = _as_rng(seed)
    forced = _forced_array(forced_velocities, n)
    discrete = _is_discrete(dist)
    if discrete:
        ints, den = _integer_atoms(dist)
    want = bool(keys)

    def block(bs):
        b, size = bs
        rng = spec.block(b)
        V = _velocities_block(rng, size, n, params) if forced is None else np.tile(forced, (size, 1))
        if discrete:
            if len(ints) == 2:
                L = np.where(rng.random((size, n)) < float(dist.weight), ints[0], ints[1]).astype(np.int64)
            else:
                L = np.full((size, n), ints[0], dtype=np.int64)
            SP = np.where(rng.random((size, n)) < 0.5, 1, -1).astype(np.int8)
            scale = float(den)
        else:
            L = np.asarray(dist.sample(rng, (size, n)), dtype=np.float64)
            SP = np.full((size, n), -1, dtype=np.int8)
            scale = 1.0
        X = np.cumsum(L, axis=1)
        return K.mc_batch(X, V, SP, scale, want)

    parts = _map_blocks(block, _blocks(trials), threads)
    return TrialBatch.concat(n, parts, discrete)


# ------------------------------------------------------------------ estimates


@dataclass(frozen=True)
class PmfEntry:
    k: Optional[int]
    count: int
    estimate: float
    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_json(self) -> dict:
        return {"k": self.k, "count": self.count, "estimate": self.estimate, "ci95": [self.lo, self.hi]}


def wilson(count: int, total: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(count), int(total)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_A_pmf(records, kmax: Optional[int] = None) -> dict:
    """Empirical law of ``A`` with 95% Wilson intervals; key None is "no crossing".

    ``records`` is a :class:`TrialBatch`, an array of ``A`` values (-1 for
    none) or any iterable of :class:`TrialRecord`.
    """
    if isinstance(records, TrialBatch):
        A = records.A
    elif isinstance(records, np.ndarray):
        A = records
    else:
        A = np.array([-1 if r.A is None else r.A for r in records], dtype=np.int64)
    total = int(A.shape[0])
    if total == 0:
        raise ValueError("no records")
    kmax = int(A.max()) if kmax is None else kmax
    counts = np.bincount(A[A > 0], minlength=kmax + 1) if (A > 0).any() else np.zeros(kmax + 1, np.int64)
    out = {}
    for k in range(1, kmax + 1):
        c = int(counts[k]) if k < counts.shape[0] else 0
        lo, hi = wilson(c, total)
        out[k] = PmfEntry(k, c, c / total, lo, hi)
    c = int((A < 0).sum())
    lo, hi = wilson(c, total)
    out[None] = PmfEntry(None, c, c / total, lo, hi)
    return out


# ------------------------------------------------------------------ KS machinery


@dataclass
class TestReport:
    name: str
    statistic: float
    pValue: float
    samplesPerClass: list
    alpha: float
    classes: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def rejected(self) -> bool:
        return self.pValue < self.alpha

    @property
    def decision(self) -> str:
        return "reject" if self.rejected else "no rejection"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "pValue": self.pValue,
            "alpha": self.alpha,
            "decision": self.decision,
            "samplesPerClass": self.samplesPerClass,
            "classes": self.classes,
            "extras": self.extras,
        }


def ks_by_class(values, labels, alpha: float = 1e-3, min_class: int = MIN_CLASS, name: str = "ks", describe=None) -> TestReport:
    """Each class against the pooled remainder, Bonferroni over classes.

    Classes below ``min_class`` samples are merged into one "other" class,
    which is tested too if it reaches ``min_class``.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    uniq, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    big = counts >= min_class
    groups = [(uniq[g], inv == g) for g in np.flatnonzero(big)]
    other = ~big[inv]
    if other.sum() >= min_class:
        groups.append(("other", other))
    if len(groups) < 2:
        raise InsufficientSamples(f"need at least two classes with >= {min_class} samples, got {len(groups)}")
    m = len(groups)
    rows = []
    for lab, mask in groups:
        res = stats.ks_2samp(values[mask], values[~mask], method="asymp")
        lab_s = lab if isinstance(lab, str) else (describe(lab) if describe else str(lab))
        rows.append(
            {
                "class": lab_s,
                "size": int(mask.sum()),
                "statistic": float(res.statistic),
                "pValue": float(res.pvalue),
                "adjusted": float(min(1.0, m * res.pvalue)),
            }
        )
    worst = min(rows, key=lambda r: r["adjusted"])
    return TestReport(
        name,
        max(r["statistic"] for r in rows),
        worst["adjusted"],
        [r["size"] for r in rows],
        alpha,
        rows,
    )


def _config(**kw) -> dict:
    out = {}
    for k, v in kw.items():
        if isinstance(v, ModelParams):
            v = {"p": float(v.p), "r": float(v.r)}
        elif hasattr(v, "sample"):
            v = format_distribution(v)
        out[k] = v
    return out


def test_skyline_independence(
    n: int,
    dist,
    params: ModelParams,
    trials: int,
    seed=0,
    threads: Optional[int] = None,
    alpha: float = 1e-3,
    inject_dependence: bool = False,
    transform: Optional[Callable[[TrialBatch], np.ndarray]] = None,
) -> TestReport:
    """KS of ``x_n`` across skyline classes.

    ``inject_dependence`` replaces ``x_n`` by ``x_n + #survivors`` (negative
    control); ``transform`` does the same with any function of the batch.
    """
    if n > SKYLINE_KEY_MAX_N:
        raise ValueError(f"skyline classes limited to n <= {SKYLINE_KEY_MAX_N}")
    batch = run_trials(n, dist, params, trials, seed, threads)
    vals = batch.xn
    if inject_dependence:
        vals = vals + batch.survivors
    if transform is not None:
        vals = transform(batch)
    rep = ks_by_class(vals, batch.sky, alpha, name="skyline-independence", describe=lambda c: skyline_key_from_code(int(c), n))
    rep.extras.update(
        config=_config(n=n, dist=dist, params=params, trials=trials, seed=_as_rng(seed).master_seed, inject=inject_dependence),
        floatTies=batch.float_ties,
    )
    return rep


def test_pairing_independence_gamma(
    n: int,
    shape: float,
    params: ModelParams,
    trials: int,
    seed=0,
    threads: Optional[int] = None,
    alpha: float = 1e-3,
    scale: float = 1.0,
) -> TestReport:
    """KS of ``x_n`` across ``(v, pi)`` classes for gamma lengths."""
    if n > PAIRING_KEY_MAX_N:
        raise ValueError(f"pairing classes limited to n <= {PAIRING_KEY_MAX_N}")
    dist = Gamma(shape, scale)
    batch = run_trials(n, dist, params, trials, seed, threads)
    rep = ks_by_class(batch.xn, batch.pc, alpha, name="pairing-independence", describe=lambda c: pairing_key_from_code(int(c), n))
    rep.extras.update(
        config=_config(n=n, dist=dist, params=params, trials=trials, seed=_as_rng(seed).master_seed),
        floatTies=batch.float_ties,
    )
    return rep


COUNTER_VELOCITIES = (1, 1, 0, 0, -1)
COUNTER_PAIRING = (3, 2, 1, 0, 4)


def counterexample(trials: int = 200_000, seed=0, threads: Optional[int] = None, alpha: float = 1e-3) -> TestReport:
    """Two-point lengths break pairing independence.

    All trials have ``v = (1,1,0,0,-1)``; ``x_5`` given the pairing
    ``R0~S3, R1~S2, L4 alone`` is compared with ``x_5`` given the others.
    """
    dist = TwoPoint(1, 4, Fraction(1, 2))
    params = ModelParams(Fraction(1, 4))
    batch = run_trials(5, dist, params, trials, seed, threads, forced_velocities=COUNTER_VELOCITIES)
    target = pairing_key_from_code(_pairing_code(COUNTER_VELOCITIES, COUNTER_PAIRING), 5)
    mask = batch.pc == _pairing_code(COUNTER_VELOCITIES, COUNTER_PAIRING)
    cond, rest = batch.xn[mask], batch.xn[~mask]
    if cond.size == 0 or rest.size == 0:
        raise InsufficientSamples("conditioning event not observed")
    res = stats.ks_2samp(cond, rest, method="asymp")
    support = sorted({float(x) for x in np.unique(cond)})
    return TestReport(
        "two-point-counterexample",
        float(res.statistic),
        float(res.pvalue),
        [int(cond.size), int(rest.size)],
        alpha,
        extras={
            "pairing": target,
            "conditionalSupport": support,
            "unconditionalSupport": sorted({float(x) for x in np.unique(batch.xn)}),
            "conditionalFrequency": float(mask.mean()),
            "config": _config(dist=dist, params=params, trials=trials, seed=_as_rng(seed).master_seed),
        },
    )


def _pairing_code(v, pairing) -> int:
    code = 0
    for i in reversed(range(len(pairing))):
        code = code * 16 + pairing[i]
    for i in reversed(range(len(v))):
        code = code * 3 + (int(v[i]) + 1)
    return code


def gamma_fact_test(alpha_shape: float, beta_shape: float, trials: int, seed=0, alpha: float = 1e-3) -> TestReport:
    """``X + Y`` is independent of the ordering of ``X`` and ``Y`` for gamma variables of one scale."""
    rng = _as_rng(seed).block(0)
    X = rng.gamma(alpha_shape, 1.0, trials)
    Y = rng.gamma(beta_shape, 1.0, trials)
    Z = X + Y
    less = X < Y
    if less.all() or not less.any():
        raise InsufficientSamples("one of the ordering classes is empty")
    res = stats.ks_2samp(Z[less], Z[~less], method="asymp")
    q = float(less.mean())
    return TestReport(
        "gamma-fact",
        float(res.statistic),
        float(res.pvalue),
        [int(less.sum()), int((~less).sum())],
        alpha,
        extras={
            "P_X_less_Y": q,
            "P_X_less_Y_se": math.sqrt(q * (1 - q) / trials),
            "mean_sum": float(Z.mean()),
            "mean_sum_se": float(Z.std(ddof=1) / math.sqrt(trials)),
            "expected_mean": alpha_shape + beta_shape,
        },
    )


# ------------------------------------------------------------------ streams


def first_crosser_samples(
    dist, params: ModelParams, trials: int, seed=0, threads: Optional[int] = None, n_max: int = 200, cutoff: float = math.inf
) -> tuple[np.ndarray, np.ndarray, int]:
    """``(A, D, ties)`` from one-sided systems grown until the first crossing.

    ``A = -1`` (``D`` NaN) when no crossing happens within ``n_max``
    particles or before position ``cutoff``.
    """
    spec = _as_rng(seed)
    kind, a, b, c, scale = _kernel_law(dist)
    rs = _is_discrete(dist)
    cut = cutoff * scale if math.isfinite(cutoff) else math.inf

    def block(bs):
        bi, size = bs
        A = np.empty(size, np.int64)
        D = np.empty(size)
        ties = K.first_crosser_stream(spec.block(bi), size, n_max, cut, float(params.p), float(params.r), kind, a, b, c, rs, A, D)
        return A, D / scale, ties

    parts = _map_blocks(block, _blocks(trials), threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), int(sum(p[2] for p in parts))


@dataclass
class LaplaceRow:
    lam: float
    L_ell: float
    mc: float
    se: float
    root: float
    series: float
    truncation: float

    @property
    def ok(self) -> bool:
        return abs(self.mc - self.root) <= 3 * self.se + self.truncation

    def to_json(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def laplace_check(
    p: float, lambdas: Sequence[float], trials: int, n_max: int = 200, seed=0, threads: Optional[int] = None
) -> dict:
    """``E[exp(-lam x_A); A <= n_max]`` by simulation vs the quartic root and its series.

    Exponential(1) lengths, so ``L_ell(lam) = 1/(1+lam)``.  One simulation
    serves every ``lam``.
    """
    if not 0 <= p <= 0.5:
        raise ValueError("the Laplace check needs 0 <= p <= 1/2")
    params = ModelParams(p)
    A, D, ties = first_crosser_samples(Exponential(1.0), params, trials, seed, threads, n_max)
    hit = A > 0
    rows = []
    for lam in lambdas:
        L = 1.0 / (1.0 + lam)
        w = np.where(hit, np.exp(-lam * np.where(hit, D, 0.0)), 0.0)
        rows.append(
            LaplaceRow(
                float(lam), L, float(w.mean()), float(w.std(ddof=1) / math.sqrt(trials)),
                laplace_D(p, L), laplace_series(p, L, n_max), L ** n_max,
            )
        )
    return {
        "config": _config(p=p, lambdas=list(map(float, lambdas)), trials=trials, nMax=n_max, seed=_as_rng(seed).master_seed),
        "rows": rows,
        "diagnostics": {"floatTies": ties},
    }


@dataclass
class C0Result:
    empirical: float
    empirical_se: float
    predicted: float
    predicted_se: float
    tail: float
    tail_se: float
    windows: int
    float_ties: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.empirical_se, self.predicted_se)

    @property
    def ok(self) -> bool:
        return abs(self.empirical - self.predicted) <= 3 * self.combined_se

    def to_json(self) -> dict:
        return dict(self.__dict__, combined_se=self.combined_se, ok=self.ok)


def c0_experiment(
    p: float,
    t: float,
    half_width: float,
    windows: int,
    seed=0,
    threads: Optional[int] = None,
    dist=None,
    tail_trials: Optional[int] = None,
) -> C0Result:
    """Density of statics alive at time ``t`` against ``p P(D > t)^2``.

    Windows ``[-W, W]`` are built from two independent half-lines; statics
    in ``[-W/2, W/2]`` are counted per particle (lattice density).  Since
    nothing outside the window can reach the inner half before time
    ``W/2``, the count is exact for ``t <= W/4``.  ``P(D > t)`` comes from
    independent one-sided streams cut at ``t``.
    """
    if t < 0 or t > half_width / 4:
        raise ValueError("need 0 <= t <= half_width / 4")
    dist = Exponential(1.0) if dist is None else dist
    if _is_discrete(dist):
        raise ValueError("c0 experiment expects a continuous length law")
    spec = _as_rng(seed)
    kind, a, b, c, _ = _kernel_law(dist)
    rp = float(p)

    def block(bs):
        bi, size = bs
        alive = np.empty(size, np.int64)
        total = np.empty(size, np.int64)
        stat = np.empty(size, np.int64)
        ties = K.density_windows(spec.child(0).block(bi), size, half_width, t, rp, 0.5, kind, a, b, c, False, alive, total, stat)
        return alive, total, ties

    parts = _map_blocks(block, _blocks(windows, 256), threads)
    alive = np.concatenate([q[0] for q in parts]).astype(np.float64)
    total = np.concatenate([q[1] for q in parts]).astype(np.float64)
    ties = int(sum(q[2] for q in parts))
    dens = alive.sum() / total.sum()
    # ratio estimator over i.i.d. windows
    resid = alive - dens * total
    dens_se = math.sqrt(resid.var(ddof=1) / windows) / total.mean()

    m = tail_trials if tail_trials is not None else 20 * windows
    n_max = int(10 * t / dist.mean + 1000)
    A, _, ties2 = first_crosser_samples(dist, ModelParams(p), m, spec.child(1), threads, n_max, t)
    q = float((A < 0).mean())
    q_se = math.sqrt(q * (1 - q) / m)
    return C0Result(dens, dens_se, rp * q * q, 2 * rp * q * q_se, q, q_se, windows, ties + ties2)


def static_alive(x, v, pairing, t) -> list[bool]:
    """Statics alive at time ``t`` by the partner-distance rule (reference for the kernel)."""
    return [v[k] == 0 and (pairing[k] == k or abs(x[pairing[k]] - x[k]) > t) for k in range(len(x))]
