"""A simulated statistical-query oracle and low-degree distinguishers.

The oracle answers ``E[f(x, y)]`` for bounded ``f`` within a tolerance
``tau`` in one of two modes:

* ``sampled``: the empirical mean over a fresh batch of ``budget`` samples.
  Hoeffding's inequality sizes the pair so that
  ``P(|answer - E f| > tau) <= failure_prob`` for each query:
  ``tau = sqrt(2 ln(2 / failure_prob) / budget)``.
* ``adversarial``: the exact expectation moved by at most ``tau`` toward
  the answer the null distribution would give.

The distinguisher correlates the label with every normalized Hermite
product ``H_J(x)`` with ``1 <= |J| <= D``.  Under the null each correlation
has mean zero and unit variance, so for each degree ``s`` the statistic
``B * sum_{|J|=s} m_J^2`` is approximately chi-square with ``N_{s,n}``
degrees of freedom.  Each is mapped to a one-sided z-score and compared
with a 3-sigma threshold Bonferroni-corrected over the ``D`` degrees.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from sphereforge import kernels
from sphereforge import rng as rngmod
from sphereforge.design_weighted import WeightedDesign
from sphereforge.hermite import hermite_sign_corr_coeff
from sphereforge.mixture import MixtureInstance, build_instance, null_sample, sample
from sphereforge.parallel import map_ordered
from sphereforge.polycore import dim_homogeneous, monomial_exponents

MODES = ("sampled", "adversarial")
SIGMA = 3.0
CHUNK = 1 << 10
QUERY_CHUNK = 1 << 14


class ClampWarning(UserWarning):
    """A query returned values outside [-1, 1] and was clamped."""


def hoeffding_tau(budget: int, failure_prob: float) -> float:
    return math.sqrt(2.0 * math.log(2.0 / failure_prob) / budget)


def hoeffding_budget(tau: float, failure_prob: float) -> int:
    return math.ceil(2.0 * math.log(2.0 / failure_prob) / tau**2)


@dataclass(frozen=True)
class StatOracleConfig:
    """Give ``budget`` or ``tau``; the other is derived (sampled mode)."""

    mode: str = "sampled"
    budget: int | None = None
    tau: float | None = None
    seed: int = 0
    failure_prob: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.failure_prob < 1:
            raise ValueError("failure_prob must lie in (0, 1)")
        if self.budget is None and self.tau is None:
            object.__setattr__(self, "budget", 10**6)
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.mode == "sampled":
            if self.tau is None:
                object.__setattr__(self, "tau", hoeffding_tau(self.budget, self.failure_prob))
            elif self.budget is None:
                object.__setattr__(self, "budget", hoeffding_budget(self.tau, self.failure_prob))
            elif self.tau < hoeffding_tau(self.budget, self.failure_prob):
                raise ValueError("budget too small for the requested tau at this failure probability")
        elif self.tau is None:
            object.__setattr__(self, "tau", hoeffding_tau(self.budget, self.failure_prob))
        elif self.budget is None:
            object.__setattr__(self, "budget", hoeffding_budget(self.tau, self.failure_prob))

    def with_seed(self, seed: int) -> "StatOracleConfig":
        return replace(self, seed=seed)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "budget": self.budget,
            "tau": self.tau,
            "seed": self.seed,
            "failure_prob": self.failure_prob,
        }


class Handle:
    """A labelled distribution the oracle can sample from or evaluate exactly."""

    n: int
    label: str

    def draw(self, count: int, seed: int, threads: int = 1):
        raise NotImplementedError

    def hermite_corr(self, exps: np.ndarray) -> np.ndarray:
        """Exact ``E[y H_J(x)]`` for each row ``J`` of ``exps``."""
        raise NotImplementedError


class InstanceHandle(Handle):
    def __init__(self, instance: MixtureInstance):
        self.instance = instance
        self.n = instance.n
        self.label = "instance"

    def draw(self, count, seed, threads=1):
        return sample(self.instance, count, seed, threads=threads)

    def hermite_corr(self, exps):
        # E[sign(<u, x>) H_J(x)] = c_|J| sqrt(|J|!/J!) u^J for unit u
        exps = np.asarray(exps, dtype=np.intp)
        coeff = np.array([hermite_sign_corr_coeff(tuple(int(a) for a in row)) for row in exps])
        mono = kernels.monomial_features(self.instance.directions, exps)
        return coeff * (self.instance.weights @ mono)


class NullHandle(Handle):
    def __init__(self, n: int):
        self.n = n
        self.label = "null"

    def draw(self, count, seed, threads=1):
        return null_sample(self.n, count, seed, threads=threads)

    def hermite_corr(self, exps):
        return np.zeros(np.asarray(exps).shape[0])


def as_handle(obj) -> Handle:
    if isinstance(obj, Handle):
        return obj
    if isinstance(obj, MixtureInstance):
        return InstanceHandle(obj)
    raise TypeError(f"cannot build a distribution handle from {type(obj).__name__}")


class Query:
    """A bounded function of ``(x, y)`` with optional exact expectations."""

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exact(self, handle: Handle) -> float | None:
        return None


class FunctionQuery(Query):
    def __init__(self, fn: Callable, exact_fn: Callable | None = None):
        self.fn = fn
        self.exact_fn = exact_fn

    def __call__(self, x, y):
        return self.fn(x, y)

    def exact(self, handle):
        return None if self.exact_fn is None else self.exact_fn(handle)


class ConstantQuery(Query):
    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, x, y):
        return np.full(y.shape[0], self.value)

    def exact(self, handle):
        return self.value


class LabelHalfspaceQuery(Query):
    """``y * sign(<u, x>)``; ``u = None`` gives the plain label ``y``."""

    def __init__(self, u=None):
        self.u = None if u is None else np.asarray(u, dtype=np.float64) / np.linalg.norm(u)

    def __call__(self, x, y):
        if self.u is None:
            return y.astype(np.float64)
        return y * np.where(x @ self.u >= 0, 1.0, -1.0)

    def exact(self, handle):
        if isinstance(handle, NullHandle):
            return 0.0
        if isinstance(handle, InstanceHandle):
            if self.u is None:
                # E[y] = E[g(Ux)] and g is odd
                return 0.0
            cos = np.clip(handle.instance.directions @ self.u, -1.0, 1.0)
            return float(handle.instance.weights @ (1.0 - 2.0 * np.arccos(cos) / math.pi))
        return None


class HermiteQuery(Query):
    """``y * H_J(x)``.  Unbounded; used by the distinguisher, where its unit
    null variance is what the z-scores rely on."""

    def __init__(self, J):
        self.J = np.asarray(J, dtype=np.intp).reshape(1, -1)

    def __call__(self, x, y):
        table = kernels.hermite_table(x, int(self.J.max()))
        return y * kernels.table_products(table, self.J)[:, 0]

    def exact(self, handle):
        return float(handle.hermite_corr(self.J)[0])


def _null_answer(query: Query, n: int) -> float | None:
    return query.exact(NullHandle(n))


def _adversarial(exact: float, null: float, tau: float) -> float:
    return exact - float(np.clip(exact - null, -tau, tau))


def stat_query(handle, f, config: StatOracleConfig, *, index: int = 0, threads: int = 1) -> float:
    """Answer one statistical query.  ``index`` selects the query's own random stream."""
    handle = as_handle(handle)
    query = f if isinstance(f, Query) else FunctionQuery(f)
    if config.mode == "adversarial":
        exact = query.exact(handle)
        if exact is None:
            raise ValueError("adversarial mode needs a query with an exact expectation")
        null = _null_answer(query, handle.n)
        return exact if null is None else _adversarial(exact, null, config.tau)
    seed = _query_seed(config.seed, index)
    batch = handle.draw(config.budget, seed, threads=threads)
    total = 0.0
    clamped = False
    for lo in range(0, config.budget, QUERY_CHUNK):
        sl = slice(lo, lo + QUERY_CHUNK)
        vals = np.asarray(query(batch.x[sl], batch.y[sl]), dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise ValueError("query returned non-finite values")
        if np.any(np.abs(vals) > 1.0):
            clamped = True
            vals = np.clip(vals, -1.0, 1.0)
        total += vals.sum()
    if clamped:
        warnings.warn("query values outside [-1, 1] were clamped", ClampWarning, stacklevel=2)
    return total / config.budget


def _query_seed(seed: int, index: int) -> int:
    # a per-query seed keeps answers independent of the order queries are issued in
    return int(rngmod.stream(seed, "stat-query", index).integers(0, 2**63 - 1))


def hermite_indices(n: int, D: int) -> list:
    """The pre-registered query set: all ``J`` with ``1 <= |J| <= D``, by degree then graded-lex."""
    return [monomial_exponents(s, n) for s in range(1, D + 1)]


def _half_exponents(k: int, D: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.intp)
    return np.concatenate([monomial_exponents(s, k) for s in range(D + 1)], axis=0)


def hermite_correlations(x: np.ndarray, y: np.ndarray, D: int, threads: int = 1) -> list:
    """Empirical ``mean(y * H_J(x))`` for every ``|J| = s``, ``s = 1..D``, in
    :func:`hermite_indices` order.

    ``H_J`` factors over a split of the coordinates into two halves.  Per
    batch chunk, each half's features come from a one-multiply-per-feature
    chain, and one matrix product per first-half degree collects every
    ``J`` of total degree at most ``D``.
    """
    count, n = x.shape
    if count == 0:
        return [np.zeros(dim_homogeneous(s, n)) for s in range(1, D + 1)]
    na = n // 2
    ea, eb = _half_exponents(na, D), _half_exponents(n - na, D)
    ca, cb = kernels.product_chain(ea), kernels.product_chain(eb)
    deg_a, deg_b = ea.sum(axis=1), eb.sum(axis=1)
    starts_a = np.searchsorted(deg_a, np.arange(D + 2))
    ends_b = np.searchsorted(deg_b, np.arange(D + 1), side="right")

    def one(lo: int):
        xs = x[lo : lo + CHUNK]
        ys = y[lo : lo + CHUNK].astype(np.float64)
        tb = np.ascontiguousarray(kernels.hermite_table(xs[:, na:], D).transpose(1, 2, 0))
        fb = kernels.chained_products_fm(tb, ys, cb)
        if na == 0:
            return [fb[: ends_b[D]].sum(axis=1, keepdims=True).T]
        ta = np.ascontiguousarray(kernels.hermite_table(xs[:, :na], D).transpose(1, 2, 0))
        fa = kernels.chained_products_fm(ta, np.ones(xs.shape[0]), ca)
        return [fa[starts_a[s1] : starts_a[s1 + 1]] @ fb[: ends_b[D - s1]].T for s1 in range(D + 1)]

    parts = map_ordered(one, range(0, count, CHUNK), threads)
    blocks = [sum(p[s1] for p in parts) / count for s1 in range(len(parts[0]))]
    index_a = {tuple(r): i for i, r in enumerate(ea)}
    index_b = {tuple(r): i for i, r in enumerate(eb)}
    out = []
    for s in range(1, D + 1):
        full = monomial_exponents(s, n)
        vals = np.empty(full.shape[0])
        for k, row in enumerate(full):
            ja, jb = tuple(row[:na]), tuple(row[na:])
            s1 = int(sum(ja))
            ia = index_a[ja] - starts_a[s1] if na else 0
            vals[k] = blocks[s1][ia, index_b[jb]]
        out.append(vals)
    return out


def _chi2_z(stat: float, dof: int) -> float:
    sf = float(stats.chi2.sf(stat, dof))
    sf = min(max(sf, 1e-300), 1.0 - 1e-16)
    return float(stats.norm.isf(sf))


def detection_threshold(num_stats: int, sigma: float = SIGMA) -> float:
    alpha = float(stats.norm.sf(sigma))
    return float(stats.norm.isf(alpha / max(num_stats, 1)))


@dataclass(frozen=True)
class DistinguisherReport:
    degree: int
    z_scores: dict
    threshold: float
    detected: bool
    query_count: int
    mode: str
    distribution: str
    query_z: list = field(default_factory=list, repr=False)

    def to_record(self) -> dict:
        return {
            "degree": self.degree,
            "z_scores": {str(s): float(z) for s, z in sorted(self.z_scores.items())},
            "threshold": float(self.threshold),
            "detected": self.detected,
            "query_count": self.query_count,
            "mode": self.mode,
            "distribution": self.distribution,
        }


def distinguisher_reports(handle, degrees: Sequence[int], config: StatOracleConfig, *, threads: int = 1) -> dict:
    """One :class:`DistinguisherReport` per requested degree, all answered from
    the same oracle draw.  Identical to calling :func:`lowdeg_distinguisher`
    once per degree with the same config."""
    degrees = sorted(set(int(D) for D in degrees))
    if not degrees:
        return {}
    if degrees[0] < 1:
        raise ValueError("degrees must be at least 1")
    handle = as_handle(handle)
    top = degrees[-1]
    idx = hermite_indices(handle.n, top)
    if config.mode == "sampled":
        batch = handle.draw(config.budget, _query_seed(config.seed, 0), threads=threads)
        means = hermite_correlations(batch.x, batch.y, top, threads)
    else:
        means = [
            np.array([_adversarial(e, 0.0, config.tau) for e in handle.hermite_corr(exps)]) for exps in idx
        ]
    scale = math.sqrt(config.budget)
    zs = [scale * m for m in means]
    agg = {s: _chi2_z(float(z @ z), z.shape[0]) for s, z in enumerate(zs, start=1)}
    out = {}
    for D in degrees:
        thr = detection_threshold(D)
        z_scores = {s: agg[s] for s in range(1, D + 1)}
        query_z = [
            (s, tuple(int(a) for a in row), float(z))
            for s in range(1, D + 1)
            for row, z in zip(idx[s - 1], zs[s - 1])
        ]
        out[D] = DistinguisherReport(
            degree=D,
            z_scores=z_scores,
            threshold=thr,
            detected=any(z > thr for z in z_scores.values()),
            query_count=len(query_z),
            mode=config.mode,
            distribution=handle.label,
            query_z=query_z,
        )
    return out


def lowdeg_distinguisher(handle, D: int, config: StatOracleConfig, *, threads: int = 1) -> DistinguisherReport:
    """Test label/Hermite correlations of every degree ``1..D`` against the null value 0.

    Sampled mode answers all queries from one shared batch of ``budget``
    samples.  Adversarial mode uses exact expectations moved toward 0 by up
    to ``tau``; its z-scores use the same ``sqrt(budget)`` scale.
    """
    if D < 1:
        raise ValueError("D must be at least 1")
    return distinguisher_reports(handle, [D], config, threads=threads)[D]


def report_csv(report: DistinguisherReport, per_query: bool = False) -> str:
    """Rows ``degree, multi_index, z_score, detect``; ``*`` marks a per-degree aggregate."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["degree", "multi_index", "z_score", "detect"])
    for s, z in sorted(report.z_scores.items()):
        w.writerow([s, "*", repr(float(z)), int(z > report.threshold)])
    if per_query:
        for s, J, z in report.query_z:
            w.writerow([s, "-".join(map(str, J)), repr(z), ""])
    return buf.getvalue()


@dataclass(frozen=True)
class PowerRow:
    design: int
    degree: int
    runs: int
    detections: int

    @property
    def rate(self) -> float:
        return self.detections / self.runs if self.runs else 0.0


def power_curve(
    designs: Sequence[WeightedDesign] | None,
    n: int,
    degrees: Sequence[int],
    config: StatOracleConfig,
    runs: int,
    *,
    threads: int = 1,
) -> list:
    """Detection counts per design and degree over ``runs`` seeded repetitions.

    Run ``i`` embeds the design with its own projection and uses its own
    oracle seed, both derived from ``config.seed``; all degrees of a run
    share that oracle draw.  ``designs=None`` runs the null against itself.
    """
    degrees = sorted(set(int(D) for D in degrees))
    if not degrees:
        return []
    targets = [None] if designs is None else list(designs)
    rows = []
    for di, design in enumerate(targets):
        def one(i: int, di=di, design=design) -> dict:
            seeds = rngmod.stream(config.seed, "power", di, i).integers(0, 2**63 - 1, size=2)
            handle = NullHandle(n) if design is None else InstanceHandle(build_instance(design, n, int(seeds[0])))
            reps = distinguisher_reports(handle, degrees, config.with_seed(int(seeds[1])))
            return {D: rep.detected for D, rep in reps.items()}

        results = map_ordered(one, range(runs), threads)
        for D in degrees:
            rows.append(PowerRow(di, D, runs, sum(int(r[D]) for r in results)))
    return rows


def power_csv(rows: Sequence[PowerRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["design", "degree", "runs", "detections", "rate"])
    for r in rows:
        w.writerow([r.design, r.degree, r.runs, r.detections, repr(r.rate)])
    return buf.getvalue()
