import numpy as np
import pytest
from hypothesis import settings

from plumbline.optim import OptimConfig
from plumbline.synth import CLUTTER_KINDS, run_study

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


GAMMAS = (1e-5, 2e-5)
NOISE = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
TRIALS = 20
STUDY_OPTIM = OptimConfig(radial_only=True, min_edgels=50)


@pytest.fixture(scope="session")
def radial_study():
    """Noise-free study, 20 trials per gamma."""
    return run_study(GAMMAS, [0.0], TRIALS, optim_cfg=STUDY_OPTIM)


@pytest.fixture(scope="session")
def noise_studies():
    """Noise sweep for each clutter kind, 20 trials per cell."""
    return {kind: run_study(GAMMAS, NOISE, TRIALS, kind=kind, optim_cfg=STUDY_OPTIM)
            for kind in CLUTTER_KINDS}
