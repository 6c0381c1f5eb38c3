import os
import pathlib
import sys

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]


def _env_path(name, default):
    return pathlib.Path(os.environ.get(name, default))


@pytest.fixture(scope="session")
def data_dir():
    return _env_path("REPORT_KG_DATA", ROOT / "data")


@pytest.fixture(scope="session")
def config_dir():
    return _env_path("REPORT_KG_CONFIGS", ROOT / "configs")


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("REPORT_KG_CLI")
    if not path or not pathlib.Path(path).exists():
        pytest.skip("REPORT_KG_CLI not set")
    return path


# The in-tree extension lives under <build>/python; an installed wheel also works.
if "REPORT_KG_PYTHONPATH" in os.environ:
    sys.path.insert(0, os.environ["REPORT_KG_PYTHONPATH"])
