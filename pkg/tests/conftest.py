import pytest

from epsim.datafiles import load_bundled_model
from epsim.model import ensure_valid


@pytest.fixture(scope="session")
def bundled_model():
    return ensure_valid(load_bundled_model())
