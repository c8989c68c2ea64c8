import json
from pathlib import Path

import numpy as np
import pytest

from survmediate import SurvivalSample

GOLDEN_DIR = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def hand_examples():
    with open(GOLDEN_DIR / "hand_examples.json") as handle:
        return json.load(handle)


def make_sample(time, status, arm=None, mediator=None, **kwargs) -> SurvivalSample:
    time = np.asarray(time, dtype=float)
    n = time.shape[0]
    if arm is None:
        arm = np.arange(n) % 2
    if mediator is None:
        mediator = np.zeros(n)
    return SurvivalSample(time=time, status=status, arm=arm, mediator=mediator, **kwargs)


def random_censored_sample(rng, n, competing=False, tie_grid=None) -> SurvivalSample:
    """Exponential event/censoring draws; tie_grid rounds times onto a lattice
    so tied and censor-at-event times occur."""
    event = rng.exponential(3.0, n)
    censor = rng.exponential(8.0, n)
    if competing:
        other = rng.exponential(5.0, n)
        observed = np.minimum(np.minimum(event, censor), other)
        status = np.where(
            event <= np.minimum(censor, other), 1, np.where(other <= censor, 2, 0)
        )
        n_causes = 2
    else:
        observed = np.minimum(event, censor)
        status = (event <= censor).astype(int)
        n_causes = 1
    if tie_grid:
        observed = np.round(observed / tie_grid) * tie_grid + tie_grid
    if status.max() == 0:
        status[int(rng.integers(0, n))] = 1
    return make_sample(observed, status, n_causes=n_causes)


def uncensored_sample(rng, n, n_causes=1) -> SurvivalSample:
    time = np.round(rng.exponential(3.0, n), 1) + 0.1
    status = rng.integers(1, n_causes + 1, n) if n_causes > 1 else np.ones(n, dtype=int)
    return make_sample(time, status, n_causes=n_causes)
