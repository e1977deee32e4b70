import numpy as np
import pytest

from tactile_eit.errors import DegenerateReferenceError
from tactile_eit.forward import ForwardSolver, MeasurementFrame
from tactile_eit.geometry import SensorGeometry, baseline_field, generate_mesh
from tactile_eit.phantom import TouchPhantom, TouchPoint, apply_phantom
from tactile_eit.sweep import SweepConfig, SweepResult, run_sweep, select_optimum, v_rel


def frame(values, version="adjacent16-v1", ghash="g"):
    return MeasurementFrame(np.asarray(values, dtype=float),
                            protocol_version=version, geometry_hash=ghash)


class TestVRel:
    def test_identical_frames_zero(self):
        f = frame([1.0, -2.0, 3.0])
        assert v_rel(f, f) == 0.0

    def test_doubled_frame_is_one(self):
        ref = frame([1.0, -2.0, 0.5])
        touch = frame([2.0, -4.0, 1.0])
        assert v_rel(touch, ref) == pytest.approx(1.0)

    def test_hand_case(self):
        # (|1.1-1|/1 + |1.8-2|/2) / 2 = (0.1 + 0.1)/2 = 0.1
        assert v_rel(frame([1.1, 1.8]), frame([1.0, 2.0])) == pytest.approx(0.1)

    def test_scale_invariance(self, rng):
        ref = frame(rng.uniform(0.5, 2.0, size=16))
        touch = frame(ref.values * rng.uniform(0.9, 1.1, size=16))
        base = v_rel(touch, ref)
        for k in (-3.0, 0.25, 7.0):
            assert v_rel(frame(k * touch.values), frame(k * ref.values)) == \
                pytest.approx(base, rel=1e-12)

    def test_degenerate_reference(self):
        with pytest.raises(DegenerateReferenceError):
            v_rel(frame([1.0, 1.0]), frame([1.0, 1e-16]))

    def test_version_mismatch(self):
        with pytest.raises(ValueError):
            v_rel(frame([1.0], version="other"), frame([1.0]))


@pytest.fixture(scope="module")
def tiny_sweep():
    config = SweepConfig(widths=(0.0, 4.0), thicknesses=(3.0,),
                         phantoms_per_condition=4, touch_counts=(1,),
                         master_seed=123)
    return config, run_sweep(config)


class TestRunSweep:
    def test_lattice_beats_uniform(self, tiny_sweep):
        _, result = tiny_sweep
        assert result.cell(4.0, 3.0)["mean"] > result.cell(0.0, 3.0)["mean"]

    def test_cell_counts(self, tiny_sweep):
        config, result = tiny_sweep
        for cell in result.cells:
            assert cell["n"] == config.phantoms_per_condition * len(config.touch_counts)

    def test_determinism(self, tiny_sweep):
        config, result = tiny_sweep
        again = run_sweep(config)
        assert again.table() == result.table()
        for c1, c2 in zip(result.cells, again.cells):
            assert np.array_equal(c1["raw"], c2["raw"])

    def test_zero_depth_gives_zero(self):
        geom = SensorGeometry(channel_width=4.0, layer_thickness=3.0)
        mesh = generate_mesh(geom, 2.0)
        base = baseline_field(geom, mesh)
        solver = ForwardSolver(mesh)
        ref = solver.simulate_frame(base)
        phantom = TouchPhantom((TouchPoint(center=(50.0, 50.0), radius=7.0,
                                           press_depth=0.0),), "depth")
        touched = apply_phantom(base, phantom, mesh)
        assert v_rel(solver.simulate_frame(touched), ref) == 0.0

    def test_table_format(self, tiny_sweep):
        _, result = tiny_sweep
        lines = result.table().strip().splitlines()
        assert lines[0] == "w_mm,t_mm,mean_v_rel,std_v_rel,n"
        assert len(lines) == 1 + len(result.cells)

    def test_report_names_optimum(self, tiny_sweep):
        _, result = tiny_sweep
        w, t = select_optimum(result)
        assert f"optimum: w = {w} mm, t = {t} mm" in result.report()


class TestMonotonicityInDepth:
    def test_v_rel_nondecreasing_in_depth(self):
        # thick layer so depths 1..4 mm are all admissible
        geom = SensorGeometry(channel_width=4.0, layer_thickness=5.0)
        mesh = generate_mesh(geom, 2.0)
        base = baseline_field(geom, mesh)
        solver = ForwardSolver(mesh)
        ref = solver.simulate_frame(base)
        values = []
        for depth in (1.0, 2.0, 3.0, 4.0):
            phantom = TouchPhantom((TouchPoint(center=(40.0, 55.0), radius=8.0,
                                               press_depth=depth),), "depth")
            touched = apply_phantom(base, phantom, mesh)
            values.append(v_rel(solver.simulate_frame(touched), ref))
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestSelectOptimum:
    def _result(self, cells):
        r = SweepResult(config=SweepConfig())
        for w, t, mean in cells:
            r.cells.append({"w": w, "t": t, "mean": mean, "std": 0.0, "n": 1,
                            "raw": np.array([mean])})
        return r

    def test_single_cell(self):
        assert select_optimum(self._result([(4.0, 3.0, 0.5)])) == (4.0, 3.0)

    def test_strict_maximum(self):
        r = self._result([(0.0, 3.0, 0.1), (4.0, 3.0, 0.9), (6.0, 3.0, 0.4)])
        assert select_optimum(r) == (4.0, 3.0)

    def test_tie_breaks_toward_smaller_width(self):
        r = self._result([(6.0, 3.0, 0.5), (4.0, 3.0, 0.5)])
        assert select_optimum(r) == (4.0, 3.0)

    def test_invariant_under_uniform_scaling(self):
        r = self._result([(0.0, 3.0, 0.1), (4.0, 3.0, 0.9), (6.0, 3.0, 0.4)])
        scaled = self._result([(0.0, 3.0, 0.7), (4.0, 3.0, 6.3), (6.0, 3.0, 2.8)])
        assert select_optimum(r) == select_optimum(scaled)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            select_optimum(SweepResult(config=SweepConfig()))
