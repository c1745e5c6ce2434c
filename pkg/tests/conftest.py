import os
import pathlib

import pytest

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data"


def pytest_collection_modifyitems(config, items):
    if os.environ.get("QUMVQD_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set QUMVQD_RUN_SLOW=1 to run desk-scale acceptance runs")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def data_dir():
    return DATA_DIR
