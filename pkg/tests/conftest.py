import numpy as np
import pytest

from arraysep import synth
from arraysep.roomsim import ArrayGeometry, SimulationConfig, render_mixture, sample_scenario

FS = 16000


@pytest.fixture(scope="session")
def fast_sim_config():
    """Low-reverberation ranges keep image counts small for unit tests."""
    return SimulationConfig(t60_range=(0.14, 0.3))


@pytest.fixture(scope="session")
def rendered_utterance(fast_sim_config):
    scenario = sample_scenario(fast_sim_config, 42)
    geometry = ArrayGeometry.default()
    dry_target = synth.speech_like("fixture-target", 2.5, FS, 1)
    dry_interferer = synth.speech_like("fixture-interferer", 2.5, FS, 2)
    dry_noise = synth.white_noise(6.0, FS, 3)
    return render_mixture(scenario, geometry, dry_target, dry_interferer, dry_noise, FS)
