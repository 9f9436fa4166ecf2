import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bsl_lab.circle_map import genus2_map  # noqa: E402
from bsl_lab.combinatorics import genus2_scheme  # noqa: E402
from bsl_lab.dyngraph import graph_from_map  # noqa: E402
from bsl_lab.generators import build_generators  # noqa: E402


@pytest.fixture(scope="session")
def scheme():
    return genus2_scheme()


@pytest.fixture(scope="session")
def gmap():
    return genus2_map()


@pytest.fixture(scope="session")
def fam(gmap):
    return build_generators(gmap)


@pytest.fixture(scope="session")
def graph7(gmap):
    return graph_from_map(gmap, 7)


@pytest.fixture(scope="session")
def graph8(gmap):
    return graph_from_map(gmap, 8)


@pytest.fixture(scope="session")
def octagon():
    from oracles import octagon_generators

    return octagon_generators()
