"""Mixtures of linear classifiers hidden in a random low-dimensional subspace.

An instance embeds a weighted design ``(v_l, w_l)`` in ``R^n`` through a
matrix ``U`` with orthonormal rows.  A sample draws ``x ~ N(0, I_n)``, picks
component ``l`` with probability ``w_l`` and labels ``y = sign(<U^T v_l, x>)``
with ``sign(0) = +1``.  The label's conditional mean is
``g(Ux) = sum_l w_l sign(<v_l, Ux>)``.

Random streams (see :mod:`sphereforge.rng`):

* ``projection``: the Gaussian matrix orthonormalized into ``U``;
* ``sample-x`` / ``sample-component``, per block: covariates and component draws;
* ``null-x`` / ``null-y``, per block: the independent-label reference;
* ``tv-x``, per block: Monte-Carlo points for the TV estimate.

Blocks have a fixed size, so outputs do not depend on how blocks are
scheduled across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from sphereforge import kernels, records
from sphereforge import rng as rngmod
from sphereforge.config import DEFAULT
from sphereforge.design_weighted import WeightedDesign, min_separation
from sphereforge.errors import DimensionError, RecordError
from sphereforge.parallel import block_sizes, map_ordered

BLOCK = 1 << 16


class LabeledSample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True, eq=False)
class Samples:
    """Column-oriented batch of labelled points; iterates as :class:`LabeledSample`."""

    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.y.shape[0]

    def __iter__(self) -> Iterator[LabeledSample]:
        for xi, yi in zip(self.x, self.y):
            yield LabeledSample(xi, int(yi))


def random_projection(m: int, n: int, seed: int) -> np.ndarray:
    """``m x n`` matrix with orthonormal rows, Haar distributed."""
    if m > n:
        raise DimensionError(f"cannot embed dimension {m} into {n}")
    if m < 1:
        raise DimensionError("m must be positive")
    g = rngmod.stream(seed, "projection").standard_normal((n, m))
    q, r = np.linalg.qr(g)
    # fixing diag(r) > 0 makes the factorization unique, hence Haar
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return np.ascontiguousarray(q.T)


@dataclass(frozen=True, eq=False)
class MixtureInstance:
    n: int
    projection: np.ndarray = field(repr=False)
    design: WeightedDesign = field(repr=False)
    seed: int

    @property
    def m(self) -> int:
        return self.design.d

    @property
    def directions(self) -> np.ndarray:
        """Hidden unit directions ``U^T v_l`` in ``R^n``, shape (r, n)."""
        return self.design.points @ self.projection

    @property
    def weights(self) -> np.ndarray:
        return self.design.weights

    def check(self, tol: float = DEFAULT.isometry) -> None:
        u = self.projection
        if u.shape != (self.m, self.n):
            raise DimensionError(f"projection has shape {u.shape}, expected ({self.m}, {self.n})")
        err = np.abs(u @ u.T - np.eye(self.m)).max()
        if err > tol:
            raise ValueError(f"projection rows are not orthonormal (error {err:.3g})")
        if self.design.r >= 2:
            gap = abs(min_separation(self.directions) - min_separation(self.design.points))
            if gap > tol:
                raise ValueError(f"embedding changed the separation by {gap:.3g}")

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "instance_seed": self.seed,
            "projection": [float(v) for v in self.projection.ravel()],
            "design": self.design.to_record(),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "MixtureInstance":
        records.require(rec, "n", "m", "instance_seed", "projection", "design")
        design = WeightedDesign.from_record(rec["design"])
        n, m = rec["n"], rec["m"]
        if m != design.d:
            raise RecordError(f"record says m={m} but the design has dimension {design.d}")
        if len(rec["projection"]) != m * n:
            raise RecordError(f"projection needs {m * n} entries, found {len(rec['projection'])}")
        u = np.reshape(np.asarray(rec["projection"], dtype=np.float64), (m, n))
        inst = cls(n, u, design, int(rec["instance_seed"]))
        try:
            inst.check()
        except (ValueError, DimensionError) as exc:
            raise RecordError(str(exc)) from exc
        return inst


def build_instance(design: WeightedDesign, n: int, seed: int, projection=None) -> MixtureInstance:
    if design.d > n:
        raise DimensionError(f"design dimension {design.d} exceeds ambient dimension {n}")
    u = random_projection(design.d, n, seed) if projection is None else np.asarray(projection, dtype=np.float64)
    inst = MixtureInstance(n, u, design, seed)
    inst.check()
    return inst


def conditional_mean(instance: MixtureInstance, x) -> np.ndarray | float:
    """``E[y | x] = sum_l w_l sign(<v_l, Ux>)`` for one point or an (N, n) array."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != instance.n:
        raise DimensionError(f"x has dimension {arr.shape[1]}, instance has {instance.n}")
    ux = arr @ instance.projection.T
    g = kernels.sign_mixture(ux @ instance.design.points.T, instance.weights)
    return float(g[0]) if single else g


def _run_blocks(fn, sizes: list, threads: int):
    return map_ordered(lambda job: fn(*job), enumerate(sizes), threads)


def _pick_components(u: np.ndarray, weights: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, weights.shape[0] - 1)


def sample(instance: MixtureInstance, count: int, seed: int, *, threads: int = 1, block: int = BLOCK) -> Samples:
    if count < 0:
        raise ValueError("count must be non-negative")
    dirs = instance.directions
    w = instance.weights

    def one(b: int, size: int):
        x = rngmod.stream(seed, "sample-x", b).standard_normal((size, instance.n))
        comp = _pick_components(rngmod.stream(seed, "sample-component", b).random(size), w)
        proj = np.einsum("ij,ij->i", x, dirs[comp])
        return x, np.where(proj >= 0, 1, -1).astype(np.int8)

    parts = _run_blocks(one, block_sizes(count, block), threads)
    if not parts:
        return Samples(np.zeros((0, instance.n)), np.zeros(0, dtype=np.int8))
    return Samples(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def null_sample(n: int, count: int, seed: int, *, threads: int = 1, block: int = BLOCK) -> Samples:
    if count < 0:
        raise ValueError("count must be non-negative")

    def one(b: int, size: int):
        x = rngmod.stream(seed, "null-x", b).standard_normal((size, n))
        y = np.where(rngmod.stream(seed, "null-y", b).random(size) < 0.5, 1, -1).astype(np.int8)
        return x, y

    parts = _run_blocks(one, block_sizes(count, block), threads)
    if not parts:
        return Samples(np.zeros((0, n)), np.zeros(0, dtype=np.int8))
    return Samples(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


class TVEstimate(NamedTuple):
    value: float
    stderr: float


def tv_lower_estimate(instance: MixtureInstance, mc_count: int, seed: int, *, threads: int = 1, block: int = BLOCK) -> TVEstimate:
    """Monte-Carlo estimate of the total variation distance to the independent-label null,
    ``E|g(Ux)| / 2``, with its standard error."""
    if mc_count < 1:
        raise ValueError("mc_count must be at least 1")

    def one(b: int, size: int):
        x = rngmod.stream(seed, "tv-x", b).standard_normal((size, instance.n))
        h = 0.5 * np.abs(conditional_mean(instance, x))
        return h.sum(), (h * h).sum()

    parts = _run_blocks(one, block_sizes(mc_count, block), threads)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / mc_count
    var = max(s2 / mc_count - mean * mean, 0.0)
    se = math.sqrt(var / (mc_count - 1)) if mc_count > 1 else math.inf
    return TVEstimate(mean, se)


def tv_exact_planar(design: WeightedDesign) -> float:
    """Exact ``E|g(z)| / 2`` for ``z ~ N(0, I_m)`` with ``m <= 2``.

    In the plane ``g`` is constant on the arcs between the angles where some
    ``<v_l, z>`` changes sign, and the angle of ``z`` is uniform.
    """
    pts, w = design.points, design.weights
    if design.d == 1:
        return 0.5 * abs(float(w @ np.where(pts[:, 0] >= 0, 1.0, -1.0)))
    if design.d != 2:
        raise DimensionError("exact TV is only available for m <= 2")
    base = np.arctan2(pts[:, 1], pts[:, 0])
    cuts = np.sort(np.mod(np.concatenate([base + np.pi / 2, base - np.pi / 2]), 2 * np.pi))
    cuts = np.concatenate([cuts, [cuts[0] + 2 * np.pi]])
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0:
            continue
        mid = 0.5 * (lo + hi)
        g = float(w @ np.where(pts @ np.array([math.cos(mid), math.sin(mid)]) >= 0, 1.0, -1.0))
        total += abs(g) * (hi - lo)
    return 0.5 * total / (2 * np.pi)
