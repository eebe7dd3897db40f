import pytest

from gridrel import DcOpf, load_system
from gridrel.system_model import fixture_path


@pytest.fixture(scope="session")
def rbts():
    return load_system(fixture_path("rbts"))


@pytest.fixture(scope="session")
def rts79():
    return load_system(fixture_path("rts79"))


@pytest.fixture(scope="session")
def rbts_solver(rbts):
    return DcOpf(rbts)


@pytest.fixture(scope="session")
def rts79_solver(rts79):
    return DcOpf(rts79)
