import numpy as np
import pytest

from pfsmooth.filter import FilterTrace, ParticleCloud, log_z_estimate
from pfsmooth.model import (
    DiscreteHmmParams,
    LinearGaussianParams,
    ObservationRecord,
    discrete_hmm_model,
    linear_gaussian_model,
)


def make_trace(model, positions, log_weights, ancestors=None, log_adjustment=None, obs=None):
    """Assemble a FilterTrace from hand-chosen arrays (one row per time)."""
    n1 = len(positions)
    clouds = []
    for k in range(n1):
        lw = np.asarray(log_weights[k], dtype=float)
        la = (np.zeros_like(lw) if log_adjustment is None
              else np.asarray(log_adjustment[k], dtype=float))
        anc = None if k == 0 else np.asarray(ancestors[k - 1], dtype=np.intp)
        clouds.append(ParticleCloud(np.asarray(positions[k]), lw, la, anc, k))
    obs = obs if obs is not None else ObservationRecord(np.zeros(n1))
    trace = FilterTrace(tuple(clouds), 0.0, np.zeros(n1), model, obs)
    lz = log_z_estimate(trace)
    return FilterTrace(tuple(clouds), lz, np.zeros(n1), model, obs)


@pytest.fixture
def hmm3_params():
    return DiscreteHmmParams(
        transition_matrix=np.array([[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.2, 0.2, 0.6]]),
        emission_matrix=np.array([[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]]),
        initial_distribution=np.array([0.5, 0.3, 0.2]),
    )


@pytest.fixture
def hmm2_params():
    return DiscreteHmmParams(
        transition_matrix=np.array([[0.9, 0.1], [0.25, 0.75]]),
        emission_matrix=np.array([[0.8, 0.2], [0.3, 0.7]]),
        initial_distribution=np.array([0.6, 0.4]),
    )


@pytest.fixture
def hmm3(hmm3_params):
    return discrete_hmm_model(hmm3_params)


@pytest.fixture
def lg_params():
    return LinearGaussianParams(phi=0.9, state_noise_var=1.0, obs_coeff=1.0,
                                obs_noise_var=1.0, init_mean=0.0, init_var=1.0)


@pytest.fixture
def lg(lg_params):
    return linear_gaussian_model(lg_params)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
