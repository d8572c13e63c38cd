import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereforge import records
from sphereforge import rng as rngmod
from sphereforge.design_weighted import WeightedDesign, evenly_spaced_circle, min_separation
from sphereforge.errors import DimensionError, RecordError
from sphereforge.mixture import (
    LabeledSample,
    MixtureInstance,
    build_instance,
    conditional_mean,
    null_sample,
    random_projection,
    sample,
    tv_exact_planar,
    tv_lower_estimate,
)


def halfspace(n=4, seed=0):
    return build_instance(WeightedDesign([[1.0]], [1.0]), n, seed)


def antipodal(n=4, seed=0):
    return build_instance(WeightedDesign([[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5]), n, seed)


class TestProjection:
    @pytest.mark.parametrize("m,n", [(1, 2), (3, 3), (5, 10), (2, 17)])
    def test_orthonormal(self, m, n):
        u = random_projection(m, n, 4)
        assert u.shape == (m, n)
        np.testing.assert_allclose(u @ u.T, np.eye(m), atol=1e-12)

    def test_deterministic(self):
        np.testing.assert_array_equal(random_projection(3, 8, 5), random_projection(3, 8, 5))
        assert not np.array_equal(random_projection(3, 8, 5), random_projection(3, 8, 6))

    def test_errors(self):
        with pytest.raises(DimensionError):
            random_projection(4, 3, 0)

    def test_row_is_uniform_direction(self):
        # m=1, n=2: the angle of the row should be uniform on the circle
        ang = np.array([math.atan2(*random_projection(1, 2, s)[0][::-1]) for s in range(2000)])
        hist, _ = np.histogram(ang, bins=8, range=(-math.pi, math.pi))
        expected = 2000 / 8
        assert np.all(np.abs(hist - expected) < 5 * math.sqrt(expected))


class TestInstance:
    def test_identity_projection(self):
        e = evenly_spaced_circle(5)
        inst = build_instance(e, 2, 0, projection=np.eye(2))
        np.testing.assert_array_equal(inst.directions, e.points)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 12))
    def test_isometry(self, seed, n):
        g = rngmod.stream(seed, "iso")
        m = min(n, 3)
        pts = rngmod.uniform_sphere(g, 6, m)
        inst = build_instance(WeightedDesign.uniform(pts), n, seed)
        dirs = inst.directions
        for i in range(6):
            for j in range(6):
                for sgn in (1, -1):
                    a = np.linalg.norm(dirs[i] + sgn * dirs[j])
                    b = np.linalg.norm(pts[i] + sgn * pts[j])
                    assert abs(a - b) <= 1e-10
        assert abs(min_separation(dirs) - min_separation(pts)) <= 1e-10

    def test_circle_into_ten(self):
        inst = build_instance(evenly_spaced_circle(5), 10, 3)
        assert inst.directions.shape == (5, 10)
        np.testing.assert_allclose(np.linalg.norm(inst.directions, axis=1), 1.0, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            build_instance(evenly_spaced_circle(3), 1, 0)

    def test_record_round_trip(self):
        inst = build_instance(evenly_spaced_circle(5), 7, 9)
        text = records.dumps(records.wrap("instance", inst.to_record()))
        back = MixtureInstance.from_record(records.loads(text, "instance"))
        np.testing.assert_array_equal(back.projection, inst.projection)
        assert back.seed == 9 and back.n == 7
        assert records.dumps(records.wrap("instance", back.to_record())) == text

    def test_corrupt_record(self):
        rec = build_instance(evenly_spaced_circle(5), 7, 9).to_record()
        rec["projection"] = [2 * v for v in rec["projection"]]
        with pytest.raises(RecordError):
            MixtureInstance.from_record(rec)


class TestConditionalMean:
    def test_halfspace(self):
        inst = halfspace()
        x = inst.directions[0] * 0.3
        assert conditional_mean(inst, x) == 1.0

    def test_antipodal_cancels(self):
        x = rngmod.stream(0, "cm").standard_normal((1000, 4))
        assert np.all(conditional_mean(antipodal(), x) == 0.0)

    def test_circle_values(self):
        inst = build_instance(evenly_spaced_circle(5), 6, 1)
        x = rngmod.stream(0, "cm5").standard_normal((5000, 6))
        vals = conditional_mean(inst, x)
        allowed = np.array([-1, -0.6, -0.2, 0.2, 0.6, 1.0])
        assert np.abs(vals[:, None] - allowed[None]).min(axis=1).max() <= 1e-12
        np.testing.assert_allclose(conditional_mean(inst, -x), -vals, atol=1e-15)

    def test_projection_invariance(self):
        inst = build_instance(evenly_spaced_circle(7), 9, 2)
        g = rngmod.stream(1, "nullspace")
        x = g.standard_normal((2000, 9))
        noise = g.standard_normal((2000, 9))
        noise -= (noise @ inst.projection.T) @ inst.projection
        np.testing.assert_array_equal(conditional_mean(inst, x), conditional_mean(inst, x + 3 * noise))


class TestSampling:
    def test_empty(self):
        assert len(sample(halfspace(), 0, 1)) == 0
        assert len(null_sample(3, 0, 1)) == 0
        assert list(null_sample(3, 0, 1)) == []

    def test_labelled_items(self):
        items = list(sample(halfspace(), 3, 1))
        assert all(isinstance(s, LabeledSample) and s.y in (-1, 1) for s in items)

    def test_halfspace_labels_are_sign(self):
        inst = halfspace(5, 2)
        s = sample(inst, 10**6, 3)
        ref = np.where(s.x @ inst.directions[0] >= 0, 1, -1)
        assert np.mean(s.y * ref) == 1.0

    def test_mean_label_zero(self):
        count = 200_000
        s = sample(build_instance(evenly_spaced_circle(5), 10, 1), count, 4)
        assert abs(s.y.mean()) <= 4 / math.sqrt(count)
        z = null_sample(6, count, 5)
        assert abs(z.y.mean()) <= 4 / math.sqrt(count)
        assert abs(np.mean(z.y * z.x[:, 0])) <= 4 / math.sqrt(count)
        assert set(np.unique(z.y)) == {-1, 1}

    def test_bounded_statistic_matches_conditional_mean(self):
        inst = build_instance(evenly_spaced_circle(5), 8, 6)
        count = 300_000
        s = sample(inst, count, 7)
        phi = np.tanh(s.x[:, 0] + s.x[:, 1] * s.x[:, 2])
        emp = s.y * phi
        exact_proxy = conditional_mean(inst, s.x) * phi
        # y - g(x) has conditional mean zero; compare on the same x
        diff = emp - exact_proxy
        assert abs(diff.mean()) <= 4 * diff.std() / math.sqrt(count)

    def test_sector_bins(self):
        e = evenly_spaced_circle(5)
        inst = build_instance(e, 4, 8)
        s = sample(inst, 400_000, 9)
        ux = s.x @ inst.projection.T
        ang = np.mod(np.arctan2(ux[:, 1], ux[:, 0]), 2 * np.pi)
        bins = np.floor(ang / (2 * np.pi / 40)).astype(int)
        g = conditional_mean(inst, s.x)
        for b in range(40):
            sel = bins == b
            gb = g[sel]
            if np.ptp(gb) > 0:
                continue  # a sign boundary crosses this bin
            se = math.sqrt(max(1 - gb[0] ** 2, 1e-12) / sel.sum())
            assert abs(s.y[sel].mean() - gb[0]) <= 4 * se + 1e-12

    @pytest.mark.parametrize("threads", [2, 3])
    def test_thread_count_independent(self, threads):
        inst = build_instance(evenly_spaced_circle(5), 6, 1)
        a = sample(inst, 50_000, 2, block=4096)
        b = sample(inst, 50_000, 2, threads=threads, block=4096)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        c = null_sample(4, 30_000, 2, block=4096)
        d = null_sample(4, 30_000, 2, threads=threads, block=4096)
        np.testing.assert_array_equal(c.x, d.x)
        np.testing.assert_array_equal(c.y, d.y)


class TestTV:
    def test_halfspace_exact(self):
        est = tv_lower_estimate(halfspace(), 10_000, 1)
        assert est.value == 0.5 and est.stderr == 0.0

    def test_antipodal_zero(self):
        est = tv_lower_estimate(antipodal(), 10_000, 1)
        assert est.value == 0.0 and est.stderr == 0.0
        assert tv_exact_planar(antipodal().design) == 0.0

    @pytest.mark.parametrize("k", [3, 5, 7])
    def test_planar_oracle_agrees(self, k):
        e = evenly_spaced_circle(k)
        exact = tv_exact_planar(e)
        # |g| = 1/k everywhere for an odd evenly spaced circle
        assert exact == pytest.approx(0.5 / k, rel=1e-12)
        est = tv_lower_estimate(build_instance(e, 5, k), 200_000, 3)
        assert abs(est.value - exact) <= 4 * est.stderr + 1e-12

    def test_random_planar_design(self):
        g = rngmod.stream(2, "tvr")
        pts = rngmod.uniform_sphere(g, 6, 2)
        w = g.random(6)
        e = WeightedDesign(pts, w / w.sum())
        est = tv_lower_estimate(build_instance(e, 3, 1), 400_000, 4)
        assert abs(est.value - tv_exact_planar(e)) <= 4 * est.stderr

    def test_threads(self):
        inst = build_instance(evenly_spaced_circle(5), 6, 1)
        assert tv_lower_estimate(inst, 70_000, 1, block=8192) == tv_lower_estimate(inst, 70_000, 1, threads=3, block=8192)
