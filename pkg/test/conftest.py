import os

import pytest

# Set test environment variables before the app reads them
os.environ["CONSENSUS_LOG_LEVEL"] = "WARNING"
os.environ["CONSENSUS_MAX_WORKERS"] = "1"
os.environ["WEBHOOK_URL"] = "http://127.0.0.1:9/webhook"

from app.services.graph_service import from_edge_list  # noqa: E402
from app.utils.db import db  # noqa: E402

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")

# (receiver, sender), 1-based
FIG1_PAIRS = [
    (2, 1), (4, 1), (1, 2), (2, 3), (7, 3), (5, 4), (8, 4), (4, 5), (6, 5),
    (7, 6), (6, 7), (3, 7), (4, 8), (9, 8), (10, 9), (7, 10), (9, 10),
]


def pytest_collection_modifyitems(config, items):
    if os.getenv("CONSENSUS_SKIP_SLOW"):
        skip = pytest.mark.skip(reason="CONSENSUS_SKIP_SLOW is set")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip)


@pytest.fixture(scope="session")
def fig1_path():
    return os.path.join(DATA_DIR, "fig1.edges")


@pytest.fixture(scope="session")
def scenario_path():
    return os.path.join(DATA_DIR, "fig1_scenario.env")


@pytest.fixture(scope="session")
def fig1_pairs():
    return list(FIG1_PAIRS)


@pytest.fixture(scope="session")
def fig1_graph():
    """Ten-agent reference network"""
    return from_edge_list(10, FIG1_PAIRS)


@pytest.fixture(scope="session")
def pair_graph():
    """Two nodes talking to each other"""
    return from_edge_list(2, [(1, 2), (2, 1)])


@pytest.fixture(scope="session")
def single_graph():
    return from_edge_list(1, [])


@pytest.fixture
def clean_db():
    db.reset()
    yield db
    db.reset()
