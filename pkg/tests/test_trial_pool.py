import time

import numpy as np
import pytest

from app.errors import MeasurementError
from app.model.state import MultiModeState
from app.service import fock_service as fock
from app.service import rng_service
from app.workers.trial_pool import TrialPool


def _draw(i):
    return float(rng_service.derive(99, 0, i).normal())


def test_results_should_not_depend_on_thread_count():
    serial = TrialPool(1).run(_draw, 50)
    parallel = TrialPool(4).run(_draw, 50)
    assert serial.results == parallel.results


def test_results_should_stay_in_trial_order():
    def job(i):
        time.sleep(0.001 * (5 - i % 5))
        return i

    assert TrialPool(3).run(job, 20).results == list(range(20))


def test_simulation_errors_should_be_collected_per_trial():
    def job(i):
        if i % 4 == 0:
            raise MeasurementError(f"trial {i}")
        return i

    batch = TrialPool(2).run(job, 8)
    assert batch.ok() == [1, 2, 3, 5, 6, 7]
    assert [i for i, _ in batch.errors] == [0, 4]
    assert batch.completed_fraction == pytest.approx(0.75)


def test_other_errors_should_propagate():
    def job(i):
        raise RuntimeError("bug")

    with pytest.raises(RuntimeError):
        TrialPool(1).run(job, 2)


def test_progress_should_reach_hundred_percent():
    seen = []
    TrialPool(2, label="x", progress=lambda pct, label: seen.append((pct, label))).run(_draw, 10)
    assert seen[-1] == (100, "x")


def test_rng_streams_should_be_distinct_and_reproducible():
    a = rng_service.derive(1, 2, 3).random()
    assert a == rng_service.derive(1, 2, 3).random()
    assert a != rng_service.derive(1, 2, 4).random()


def test_invalid_states_in_a_trial_should_be_collected_not_raised():
    def job(i):
        if i == 1:
            fock.make_number_state(-1, 4)
        return MultiModeState(np.zeros(3) if i == 2 else np.eye(3)[0])

    batch = TrialPool(1).run(job, 3)
    assert batch.processed == 1
    assert [i for i, _ in batch.errors] == [1, 2]
    assert "ParameterError" in batch.errors[0][1]
    assert "NormalizationError" in batch.errors[1][1]
