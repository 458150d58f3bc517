# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

import numpy as np
import pytest

import avgopt

from avgopt import HierarchySpec, LearnerConfig, TabularMdp, train


structlog = pytest.importorskip("structlog")


@pytest.fixture(name="log_output")
def _log_output():
    from structlog.testing import LogCapture

    log_output = LogCapture()
    structlog.configure(processors=[log_output])

    return log_output.entries


def test_training_progress(log_output):
    """
    Training runs log their progress and their end with run details.
    """
    train(
        TabularMdp(np.ones((1, 2, 1)), np.zeros((1, 2))),
        HierarchySpec(1, (), 2),
        LearnerConfig(total_steps=20, progress_every=10),
        name="r",
    )

    assert [10, 20, 20] == [e["step"] for e in log_output]
    assert {
        "run": "r",
        "environment": "custom",
        "mode": "average-reward",
        "seed": 0,
        "step": 20,
        "total_steps": 20,
        "jhat": 0.0,
        "cycles": 0,
        "last_value": None,
        "phase": "finished",
        "event": "avgopt.training_progress",
        "log_level": "info",
    } == log_output[-1]


def test_failed_seeds_warned(log_output, monkeypatch, tmp_path):
    """
    Experiments with diverged seeds log a warning.
    """

    def diverge(*args, **kwargs):
        raise avgopt.DivergenceError("boom", {})

    monkeypatch.setattr("avgopt._harness.train", diverge)

    avgopt.run_experiment(
        avgopt.ExperimentConfig(
            name="e", n_seeds=2, total_steps=10, window=10, out=tmp_path
        )
    )

    assert [
        {
            "experiment": "e",
            "failed": 2,
            "surviving": 0,
            "event": "avgopt.seeds_failed",
            "log_level": "warning",
        }
    ] == log_output
