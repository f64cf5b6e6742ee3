import subprocess
import sys

import pytest
import torch


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Ten-sample synthetic dataset produced through the core CLI."""
    out = tmp_path_factory.mktemp("data") / "ds"
    res = subprocess.run(
        [sys.executable, "-m", "dualmoire.cli", "synth", "--count", "10",
         "--seed", "77", "--out", str(out), "--size", "96x96"],
        capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return out


@pytest.fixture()
def gen():
    return torch.Generator().manual_seed(99)
