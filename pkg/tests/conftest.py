import pytest

from racefree import corpus
from racefree.lang import parse_region_text


@pytest.fixture(scope="session")
def coupled_xy():
    return corpus.load("coupled_xy")


@pytest.fixture(scope="session")
def capped_counter():
    return corpus.load("capped_counter")


@pytest.fixture(scope="session")
def double_increment():
    return corpus.load("double_increment")


@pytest.fixture(scope="session")
def flag_handoff():
    return corpus.load("flag_handoff")


@pytest.fixture(scope="session")
def coupled_xy_regions(coupled_xy):
    return parse_region_text(corpus.COUPLED_XY_REGIONS, coupled_xy.variables)


@pytest.fixture(scope="session")
def double_increment_regions(double_increment):
    return parse_region_text(corpus.DOUBLE_INCREMENT_REGIONS, double_increment.variables)
