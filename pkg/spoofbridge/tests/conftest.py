import pytest
import torch

from bridge_support import TinyDetector


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    torch.manual_seed(0)
    module = TinyDetector().eval()
    traced = torch.jit.trace(module, torch.zeros(1, 8000))
    path = tmp_path_factory.mktemp("model") / "tiny_detector.pt"
    traced.save(str(path))
    return path


@pytest.fixture(scope="session")
def prob_checkpoint(tmp_path_factory):
    """A checkpoint that already emits probabilities, for identity mode."""
    torch.manual_seed(1)
    module = torch.nn.Sequential(TinyDetector(), torch.nn.Softmax(dim=1)).eval()
    traced = torch.jit.trace(module, torch.zeros(1, 8000))
    path = tmp_path_factory.mktemp("model") / "prob_detector.pt"
    traced.save(str(path))
    return path
