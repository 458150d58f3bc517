# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from importlib.metadata import version

import numpy as np
import pytest

import avgopt


def pytest_report_header(config):
    return f"""\
numpy: {version("numpy")}
scipy: {version("scipy")}
tenacity: {version("tenacity")}
avgopt: {version("avgopt")}\
"""


@pytest.fixture(autouse=True)
def _reset_config():
    """
    Ensure test mode is off and we have default progress hooks before each
    test.
    """
    avgopt.set_testing(False)
    avgopt.instrumentation.set_on_progress_hooks(None)


@pytest.fixture(name="rng")
def _rng():
    return np.random.default_rng(20240611)


@pytest.fixture(name="make_mdp")
def _make_mdp():
    """
    Factory for random dense MDPs: Dirichlet(1) rows and uniform rewards.
    """

    def make_mdp(rng, n_states, n_actions, low=-1.0, high=1.0):
        return avgopt.TabularMdp(
            rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
            rng.uniform(low, high, size=(n_states, n_actions)),
        )

    return make_mdp


@pytest.fixture(name="make_params")
def _make_params():
    """
    Factory for tabular parameters with weights uniform in [-scale, scale].
    """

    def make_params(rng, spec, n_states, scale=1.0):
        params = avgopt.ActorParams(
            spec, avgopt.FeatureMap.tabular(spec, n_states)
        )
        return params.with_vector(
            rng.uniform(-scale, scale, size=params.dimension)
        )

    return make_params
