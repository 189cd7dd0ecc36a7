import pytest

from zonalnls.evolution import dealiasing_rule
from zonalnls.harmonics import triple_product_tensor
from zonalnls.quadrature import gauss_rule


@pytest.fixture(scope="session")
def tensor():
    """Triple-product tensor large enough for every small-band form in the tests."""
    return triple_product_tensor(16)


@pytest.fixture(scope="session")
def fine_rule():
    return gauss_rule(64)


@pytest.fixture(scope="session")
def rule16():
    return dealiasing_rule(16)
