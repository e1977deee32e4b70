"""Shared fixtures: expensive meshes, solvers and Jacobians built once."""

import numpy as np
import pytest

from tactile_eit.forward import ForwardSolver
from tactile_eit.geometry import SensorGeometry, baseline_field, generate_mesh


@pytest.fixture(scope="session")
def lattice_geom():
    return SensorGeometry(channel_width=4.0, layer_thickness=3.0)


@pytest.fixture(scope="session")
def lattice_mesh(lattice_geom):
    return generate_mesh(lattice_geom, 2.0)


@pytest.fixture(scope="session")
def lattice_baseline(lattice_geom, lattice_mesh):
    return baseline_field(lattice_geom, lattice_mesh)


@pytest.fixture(scope="session")
def lattice_solver(lattice_mesh):
    return ForwardSolver(lattice_mesh)


@pytest.fixture(scope="session")
def lattice_reference(lattice_solver, lattice_baseline):
    return lattice_solver.simulate_frame(lattice_baseline)


@pytest.fixture(scope="session")
def lattice_jacobian(lattice_solver, lattice_baseline):
    return lattice_solver.jacobian(lattice_baseline)


@pytest.fixture(scope="session")
def uniform_geom():
    return SensorGeometry(channel_width=0.0, layer_thickness=3.0)


@pytest.fixture(scope="session")
def uniform_mesh(uniform_geom):
    return generate_mesh(uniform_geom, 2.0)


@pytest.fixture(scope="session")
def uniform_baseline(uniform_geom, uniform_mesh):
    return baseline_field(uniform_geom, uniform_mesh)


@pytest.fixture(scope="session")
def uniform_solver(uniform_mesh):
    return ForwardSolver(uniform_mesh)


@pytest.fixture(scope="session")
def coarse_geom():
    # gap-free wide electrodes keep the element count small while every
    # electrode still owns two boundary edges
    return SensorGeometry(channel_width=0.0, electrode_width=25.0)


@pytest.fixture(scope="session")
def coarse_mesh(coarse_geom):
    return generate_mesh(coarse_geom, 12.5)


@pytest.fixture(scope="session")
def coarse_solver(coarse_mesh):
    return ForwardSolver(coarse_mesh)


@pytest.fixture(scope="session")
def coarse_baseline(coarse_geom, coarse_mesh):
    return baseline_field(coarse_geom, coarse_mesh)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


# gesture assets are expensive (minutes of synthesis); built once per run
# and shared between the module tests and the acceptance suite
GESTURE_TRAIN_SEED = 2025
GESTURE_TEST_SEED = 77
GESTURE_MODEL_SEED = 0


@pytest.fixture(scope="session")
def gesture_assets():
    import time

    from tactile_eit.gestures import (GestureSynthesizer, TrainConfig, train)

    synth = GestureSynthesizer()
    t0 = time.perf_counter()
    train_set = synth.balanced_dataset(per_class=100,
                                       master_seed=GESTURE_TRAIN_SEED, n_jobs=2)
    test_set = synth.balanced_dataset(per_class=20,
                                      master_seed=GESTURE_TEST_SEED, n_jobs=2)
    synthesis_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    classifier = train(train_set, TrainConfig(seed=GESTURE_MODEL_SEED, epochs=200))
    train_seconds = time.perf_counter() - t0
    return {
        "synthesizer": synth,
        "train_set": train_set,
        "test_set": test_set,
        "classifier": classifier,
        "synthesis_seconds": synthesis_seconds,
        "train_seconds": train_seconds,
    }
