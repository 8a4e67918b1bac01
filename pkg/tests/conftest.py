import numpy as np
import pytest

from qtraj.model import SourceParams, UnitParams, build_single_unit, build_two_unit

# the operating point used throughout the packaged studies
OP_UNIT = UnitParams()
OP_SOURCE = SourceParams()


@pytest.fixture(scope="session")
def unit_model():
    return build_single_unit(OP_UNIT, OP_SOURCE)


@pytest.fixture(scope="session")
def unit_model_small():
    """d_cavity=2 truncation: small enough for dense superoperator oracles."""
    return build_single_unit(OP_UNIT, OP_SOURCE, d_cavity=2)


@pytest.fixture(scope="session")
def two_unit_model():
    return build_two_unit(OP_UNIT, OP_UNIT, OP_SOURCE)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
