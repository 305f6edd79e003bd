import pytest

from sstod.config import load_domain
from sstod.core import DOMAINS


@pytest.fixture(scope="session")
def specs():
    return {d: load_domain(d) for d in DOMAINS}


@pytest.fixture(scope="session")
def phone(specs):
    return specs["phone"]


@pytest.fixture(scope="session")
def name(specs):
    return specs["name"]
