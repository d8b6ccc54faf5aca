import numpy as np
import pytest

from gazekit import evaluation as E
from gazekit.errors import (
    DegeneratePlane,
    LengthMismatch,
    MissingSigma,
    TooFewSamples,
)
from gazekit.geometry import SphericalGaze, angular_error_spherical


def sph(yaw_deg, pitch_deg=0.0, sigma=None):
    return SphericalGaze(np.radians(yaw_deg), np.radians(pitch_deg), sigma=sigma)


class TestSubsetErrors:
    def test_perfect(self):
        gts = [sph(10), sph(100), sph(-30)]
        r = E.subset_errors(gts, gts)
        assert r.mean_err_all == pytest.approx(0.0, abs=1e-5)
        assert r.mean_err_front180 == pytest.approx(0.0, abs=1e-5)
        assert r.mean_err_frontfacing == pytest.approx(0.0, abs=1e-5)

    def test_rear_sample_counted_in_all_only(self):
        preds = [sph(150), sph(0)]
        gts = [sph(160), sph(5)]
        r = E.subset_errors(preds, gts)
        # the 160-degree sample only contributes to the overall mean
        e_rear = angular_error_spherical(preds[0], gts[0])
        e_front = angular_error_spherical(preds[1], gts[1])
        assert r.mean_err_all == pytest.approx((e_rear + e_front) / 2)
        assert r.mean_err_front180 == pytest.approx(e_front)
        assert r.mean_err_frontfacing == pytest.approx(e_front)

    def test_three_sample_brute_force(self):
        preds = [sph(12, 3), sph(85, -10), sph(170, 20)]
        gts = [sph(10, 0), sph(80, -5), sph(175, 15)]
        r = E.subset_errors(preds, gts)
        errs = [angular_error_spherical(p, g) for p, g in zip(preds, gts)]
        from gazekit.geometry import angular_error, from_spherical

        cam = np.array([0, 0, -1.0])
        gt_ang = [angular_error(from_spherical(g), cam) for g in gts]
        all_m = np.mean(errs)
        f180 = np.mean([e for e, a in zip(errs, gt_ang) if a <= 90])
        ff = [e for e, a in zip(errs, gt_ang) if a <= 20]
        assert r.mean_err_all == pytest.approx(all_m)
        assert r.mean_err_front180 == pytest.approx(f180)
        assert r.mean_err_frontfacing == pytest.approx(np.mean(ff))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            E.subset_errors([sph(0)], [sph(0), sph(1)])


class TestSpearman:
    def test_monotone(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert E.spearman(x, [2.0, 4.0, 5.0, 9.0]) == pytest.approx(1.0)
        assert E.spearman(x, [9.0, 5.0, 4.0, 2.0]) == pytest.approx(-1.0)

    def test_tie_case_vs_brute_force(self):
        sig = [1.0, 2.0, 2.0, 3.0, 4.0]
        err = [0.5, 0.7, 0.9, 0.7, 1.5]

        def ranks(v):
            order = np.argsort(v, kind="stable")
            r = np.empty(len(v))
            i = 0
            sv = np.array(v)[order]
            while i < len(v):
                j = i
                while j + 1 < len(v) and sv[j + 1] == sv[i]:
                    j += 1
                r[order[i : j + 1]] = (i + j) / 2 + 1
                i = j + 1
            return r

        rs, re = ranks(sig), ranks(err)
        expected = np.corrcoef(rs, re)[0, 1]
        assert E.spearman(sig, err) == pytest.approx(expected)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        sig = rng.uniform(0.1, 2.0, size=50)
        err = rng.uniform(0, 30, size=50)
        base = E.spearman(sig, err)
        assert E.spearman(np.exp(sig), err**3 + 1) == pytest.approx(base)

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            E.spearman([1, 2], [3, 4])


class TestCoverage:
    def test_huge_sigma(self):
        preds = [sph(0, 0, sigma=1e6), sph(10, 5, sigma=1e6)]
        gts = [sph(100, 40), sph(-120, -30)]
        assert E.coverage(preds, gts)["per_angle"] == 1.0

    def test_zero_sigma_imperfect(self):
        preds = [sph(0, 0, sigma=0.0)]
        gts = [sph(5, 5)]
        c = E.coverage(preds, gts)
        assert c["per_angle"] == 0.0 and c["joint"] == 0.0

    def test_missing_sigma(self):
        with pytest.raises(MissingSigma):
            E.coverage([sph(0)], [sph(0)])

    def test_laplace_quantiles_cover_80_percent(self):
        rng = np.random.default_rng(4)
        b = 0.1
        sigma = b * np.log(5.0)  # [q10, q90] interval half-width for Laplace(b)
        n = 20000
        preds, gts = [], []
        for _ in range(n):
            yaw_err = rng.laplace(0.0, b)
            pitch_err = rng.laplace(0.0, b)
            preds.append(SphericalGaze(0.0, 0.0, sigma=sigma))
            gts.append(
                SphericalGaze(
                    float(np.clip(yaw_err, -np.pi + 1e-9, np.pi)),
                    float(np.clip(pitch_err, -np.pi / 2, np.pi / 2)),
                )
            )
        c = E.coverage(preds, gts)
        assert c["per_angle"] == pytest.approx(0.80, abs=0.03)


class TestYawCurve:
    def test_flat_curve(self):
        rng = np.random.default_rng(1)
        gts = [sph(y) for y in rng.uniform(-170, 170, 500)]
        preds = [sph(np.degrees(g.yaw) + 5, 0, sigma=0.1) for g in gts]
        rows = E.yaw_curve(preds, gts, bin_width_deg=30)
        errs = [r["mean_error_deg"] for r in rows]
        assert max(errs) - min(errs) < 1.0

    def test_row_count_bound(self):
        gts = [sph(y) for y in np.linspace(-179, 179, 100)]
        preds = [sph(np.degrees(g.yaw), 0, sigma=0.1) for g in gts]
        assert len(E.yaw_curve(preds, gts, bin_width_deg=30)) <= 12

    def test_empty_bins_omitted(self):
        gts = [sph(5), sph(6)]
        preds = [sph(7, 0, sigma=0.1), sph(4, 0, sigma=0.1)]
        rows = E.yaw_curve(preds, gts, bin_width_deg=15)
        assert len(rows) == 1 and rows[0]["bin_center_deg"] == 7.5


class TestMollweide:
    def test_identity_and_poles(self):
        assert E.mollweide_project(0.0, 0.0) == (0.0, 0.0)
        x, y = E.mollweide_project(0.0, np.pi / 2)
        assert x == pytest.approx(0.0, abs=1e-9)
        assert y == pytest.approx(np.sqrt(2), abs=1e-9)
        x, y = E.mollweide_project(np.pi, 0.0)
        assert x == pytest.approx(2 * np.sqrt(2), abs=1e-9)
        assert y == pytest.approx(0.0, abs=1e-9)

    def test_equal_area_quadrants(self):
        rng = np.random.default_rng(8)
        n = 200000
        yaw = rng.uniform(-np.pi, np.pi, n)
        pitch = np.arcsin(rng.uniform(-1, 1, n))  # uniform on the sphere
        xs = np.empty(n)
        ys = np.empty(n)
        for i in range(n):
            xs[i], ys[i] = E.mollweide_project(yaw[i], pitch[i])
        for qx in (xs >= 0, xs < 0):
            for qy in (ys >= 0, ys < 0):
                frac = np.mean(qx & qy)
                assert frac == pytest.approx(0.25, rel=0.02)


class TestDistributionMap:
    def test_writes_svg(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = [sph(y, p) for y, p in zip(
            rng.uniform(-170, 170, 200), rng.uniform(-60, 60, 200)
        )]
        out = tmp_path / "map.svg"
        E.export_distribution_map(samples, out)
        content = out.read_text()
        assert content.lstrip().startswith("<?xml")

    def test_single_sample(self, tmp_path):
        out = tmp_path / "one.svg"
        E.export_distribution_map([sph(10, 5)], out)
        assert out.exists()


class TestAttentionMap:
    def grid(self):
        return E.AttentionGrid(
            point=np.array([0.0, 2.0, 0.0]), normal=np.array([0.0, -1.0, 0.0])
        )

    def test_perpendicular_ray_hits_cell(self):
        g = self.grid()
        u, v = g.axes()
        center = g.point + 0.6 * u + 0.3 * v  # some interior cell center-ish
        res = E.attention_map([np.zeros(3)], [center / np.linalg.norm(center)], g)
        assert res.counts.sum() == 1
        assert res.hits[0] is not None

    def test_parallel_ray_misses(self):
        g = self.grid()
        res = E.attention_map([np.zeros(3)], [np.array([1.0, 0.0, 0.0])], g)
        assert res.hits[0] is None and res.counts.sum() == 0

    def test_noiseless_fixation_accuracy_one(self):
        g = self.grid()
        u, v = g.axes()
        origins, dirs, labels = [], [], []
        rng = np.random.default_rng(3)
        for _ in range(100):
            row = rng.integers(0, g.rows)
            col = rng.integers(0, g.cols)
            x = (col + 0.5) * g.cell_width - g.cols * g.cell_width / 2
            y = (row + 0.5) * g.cell_height - g.rows * g.cell_height / 2
            target = g.point + x * u + y * v
            origin = np.array([rng.uniform(-1, 1), -rng.uniform(1, 3), rng.uniform(-0.5, 0.5)])
            d = target - origin
            origins.append(origin)
            dirs.append(d / np.linalg.norm(d))
            labels.append((row, col))
        res = E.attention_map(origins, dirs, g, labels)
        assert res.accuracy == 1.0

    def test_degenerate_plane(self):
        with pytest.raises(DegeneratePlane):
            E.AttentionGrid(point=np.zeros(3), normal=np.zeros(3))
