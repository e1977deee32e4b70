import numpy as np
import pytest

from tactile_eit.errors import OutOfDomainError
from tactile_eit.geometry import CHANNEL, rasterize
from tactile_eit.phantom import (TouchPhantom, TouchPoint, apply_phantom,
                                 ground_truth_image, random_phantom)


def single(center, radius, **kw):
    return TouchPhantom((TouchPoint(center=center, radius=radius, **kw),),
                        "contrast" if "contrast" in kw else "depth")


class TestTouchPoint:
    def test_requires_exactly_one_mode(self):
        with pytest.raises(ValueError):
            TouchPoint(center=(50, 50), radius=5.0)
        with pytest.raises(ValueError):
            TouchPoint(center=(50, 50), radius=5.0, contrast=1.0, press_depth=1.0)

    def test_contrast_bounds(self):
        with pytest.raises(ValueError):
            TouchPoint(center=(50, 50), radius=5.0, contrast=3.0)

    def test_phantom_mode_consistency(self):
        touch = TouchPoint(center=(50, 50), radius=5.0, contrast=1.5)
        with pytest.raises(ValueError):
            TouchPhantom((touch,), "depth")


class TestApplyPhantom:
    def test_empty_phantom_leaves_field(self, lattice_baseline, lattice_mesh):
        phantom = TouchPhantom((), "contrast")
        out = apply_phantom(lattice_baseline, phantom, lattice_mesh)
        assert np.array_equal(out.values, lattice_baseline.values)

    def test_unit_contrast_is_identity(self, lattice_baseline, lattice_mesh):
        out = apply_phantom(lattice_baseline,
                            single((50.0, 50.0), 9.0, contrast=1.0),
                            lattice_mesh)
        assert np.allclose(out.values, lattice_baseline.values)

    def test_half_thickness_press_halves_sigma(self, lattice_baseline,
                                               lattice_mesh):
        # (t - d)/t with d = t/2 = 1.5 mm gives exactly 1/2
        out = apply_phantom(lattice_baseline,
                            single((50.0, 50.0), 9.0, press_depth=1.5),
                            lattice_mesh)
        changed = out.values != lattice_baseline.values
        assert changed.any()
        assert np.allclose(out.values[changed],
                           0.5 * lattice_baseline.values[changed])

    def test_never_touches_matrix_or_outside(self, lattice_baseline,
                                             lattice_mesh, lattice_geom, rng):
        for _ in range(5):
            phantom = random_phantom(3, "contrast", rng, lattice_geom)
            out = apply_phantom(lattice_baseline, phantom, lattice_mesh)
            changed = np.flatnonzero(out.values != lattice_baseline.values)
            cents = lattice_mesh.centroids[changed]
            assert np.all(lattice_mesh.element_region[changed] == CHANNEL)
            inside_any = np.zeros(len(changed), dtype=bool)
            for t in phantom.touches:
                d2 = ((cents[:, 0] - t.center[0]) ** 2
                      + (cents[:, 1] - t.center[1]) ** 2)
                inside_any |= d2 <= t.radius ** 2 + 1e-9
            assert inside_any.all()

    def test_contrast_bounds_invariant(self, lattice_baseline, lattice_mesh,
                                       lattice_geom, rng):
        for _ in range(5):
            phantom = random_phantom(5, "contrast", rng, lattice_geom)
            out = apply_phantom(lattice_baseline, phantom, lattice_mesh)
            channel = lattice_mesh.element_region == CHANNEL
            ratio = out.values[channel] / lattice_baseline.values[channel]
            assert np.all(ratio >= 0.05 - 1e-12)
            assert np.all(ratio <= 2.0 + 1e-12)

    def test_overlap_last_writer_wins(self, lattice_baseline, lattice_mesh):
        t1 = TouchPoint(center=(50.0, 50.0), radius=10.0, contrast=0.5)
        t2 = TouchPoint(center=(50.0, 50.0), radius=6.0, contrast=2.0)
        out = apply_phantom(lattice_baseline, TouchPhantom((t1, t2), "contrast"),
                            lattice_mesh)
        cents = lattice_mesh.centroids
        inner = (((cents[:, 0] - 50) ** 2 + (cents[:, 1] - 50) ** 2 <= 36.0)
                 & (lattice_mesh.element_region == CHANNEL))
        assert np.allclose(out.values[inner], 2.0 * lattice_baseline.values[inner])

    def test_out_of_domain_raises(self, lattice_baseline, lattice_mesh):
        with pytest.raises(OutOfDomainError):
            apply_phantom(lattice_baseline, single((2.0, 50.0), 5.0, contrast=2.0),
                          lattice_mesh)
        with pytest.raises(OutOfDomainError):
            apply_phantom(lattice_baseline, single((50.0, 50.0), 5.0, press_depth=5.0),
                          lattice_mesh)

    def test_zero_depth_is_noop(self, lattice_baseline, lattice_mesh):
        out = apply_phantom(lattice_baseline,
                            single((50.0, 50.0), 9.0, press_depth=0.0),
                            lattice_mesh)
        assert np.allclose(out.values, lattice_baseline.values)


class TestRandomPhantom:
    def test_deterministic_for_seed(self, lattice_geom):
        a = random_phantom(3, "contrast", np.random.default_rng(9), lattice_geom)
        b = random_phantom(3, "contrast", np.random.default_rng(9), lattice_geom)
        assert a.to_text() == b.to_text()

    def test_radius_and_center_bounds(self, lattice_geom):
        rng = np.random.default_rng(0)
        for mode, lo, hi in (("contrast", 3.75, 13.75), ("depth", 6.25, 8.75)):
            for _ in range(2000):
                ph = random_phantom(1, mode, rng, lattice_geom)
                t = ph.touches[0]
                assert lo <= t.radius <= hi
                assert t.radius <= t.center[0] <= 100 - t.radius
                assert t.radius <= t.center[1] <= 100 - t.radius

    def test_contrast_mean(self, lattice_geom):
        # mean of uniform(0.05, 2.0) = 1.025
        rng = np.random.default_rng(0)
        values = [random_phantom(1, "contrast", rng, lattice_geom).touches[0].contrast
                  for _ in range(10000)]
        assert abs(np.mean(values) - 1.025) <= 0.02 * 1.025

    def test_depth_bounds(self, lattice_geom):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            ph = random_phantom(1, "depth", rng, lattice_geom)
            d = ph.touches[0].press_depth
            assert 1.0 <= d <= min(5.0, 0.9 * lattice_geom.layer_thickness)

    def test_touch_count_validation(self, lattice_geom, rng):
        with pytest.raises(ValueError):
            random_phantom(0, "contrast", rng, lattice_geom)
        with pytest.raises(ValueError):
            random_phantom(6, "contrast", rng, lattice_geom)


class TestGroundTruthImage:
    def test_empty_phantom_zero_image(self, lattice_baseline, lattice_mesh):
        img = ground_truth_image(TouchPhantom((), "contrast"), lattice_baseline,
                                 lattice_mesh)
        assert np.all(img.pixels == 0)

    def test_nonzero_pixels_confined_to_dilated_disc(self, lattice_baseline,
                                                     lattice_mesh):
        phantom = single((50.0, 50.0), 10.0, contrast=2.0)
        img = ground_truth_image(phantom, lattice_baseline, lattice_mesh).pixels
        delta = lattice_mesh.geom.side_length / 48
        rows, cols = np.nonzero(img)
        centers_x = (cols + 0.5) * delta
        centers_y = (rows + 0.5) * delta
        dist = np.hypot(centers_x - 50.0, centers_y - 50.0)
        # one pixel dilation plus the largest element diameter
        assert dist.max() <= 10.0 + delta * 1.5 + 2.0 * np.sqrt(2)

    def test_nonzero_pixel_count_near_analytic(self, lattice_baseline,
                                               lattice_mesh, lattice_geom):
        # oracle: pixels overlapping disc-intersect-channel, via supersampling
        # the mask (the lattice removes matrix-region pixels from the naive
        # pi r^2 / pixel-area count)
        from tactile_eit.geometry import build_lattice_mask
        center, radius = (50.0, 50.0), 10.0
        phantom = single(center, radius, contrast=2.0)
        img = ground_truth_image(phantom, lattice_baseline, lattice_mesh).pixels
        count = np.count_nonzero(img)

        mask = build_lattice_mask(lattice_geom)
        delta = lattice_geom.side_length / 48
        sub = (np.arange(8) + 0.5) / 8 * delta

        def overlap_count(r_disc):
            n = 0
            for r in range(48):
                for c in range(48):
                    xs = c * delta + sub
                    ys = r * delta + sub
                    gx, gy = np.meshgrid(xs, ys)
                    in_disc = ((gx - center[0]) ** 2 + (gy - center[1]) ** 2
                               <= r_disc ** 2)
                    if np.any(in_disc & mask(gx, gy)):
                        n += 1
            return n

        inner = overlap_count(radius)
        # elements whose centroid is inside the disc spill outward by up to
        # one element size
        outer = overlap_count(radius + lattice_mesh.target_element_size)
        assert 0.85 * inner <= count <= 1.15 * outer


class TestSerialization:
    def test_text_round_trip(self, lattice_geom, rng):
        for mode in ("contrast", "depth"):
            ph = random_phantom(4, mode, rng, lattice_geom, seed=17)
            back = TouchPhantom.from_text(ph.to_text())
            assert back.to_text() == ph.to_text()
            assert back.seed == 17

    def test_transformed_phantom_stays_valid(self, lattice_geom, rng,
                                             lattice_baseline, lattice_mesh):
        ph = random_phantom(2, "contrast", rng, lattice_geom)
        for g in range(8):
            moved = ph.transformed(g, lattice_geom.side_length)
            apply_phantom(lattice_baseline, moved, lattice_mesh)
