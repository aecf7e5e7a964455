import pytest

from audiocert import audio_io

from support import reference_bridge_cmd


@pytest.fixture
def bridge_cmd():
    return reference_bridge_cmd


@pytest.fixture
def tone_clip():
    return audio_io.tone(440.0, 0.5, 16000)
