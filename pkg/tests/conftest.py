import numpy as np
import pytest

from extremecast.dynamics import State, SystemParams, integrate

STUDY_EPSILONS = (0.05, 0.061, 0.081, 0.112)


@pytest.fixture(scope="session")
def regime_trajectories():
    """Full-length default trajectories for the four drive strengths; simulated
    once per session and shared by dynamics, pipeline, and acceptance tests."""
    out = {}
    for eps in STUDY_EPSILONS:
        out[eps] = integrate(
            SystemParams(epsilon=eps), State(0.1, 0.1),
            t_end=21000.0, dt=0.01, sample_interval=1.0, transient=1000.0,
        )
    return out


@pytest.fixture(scope="session")
def sine_series():
    return np.sin(0.1 * np.arange(2000))
