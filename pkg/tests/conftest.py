import os
from datetime import datetime, timezone
from pathlib import Path

import pytest

from processors.knowledge_base import catalog_to_document, load_default_catalog
from simulation.topology import default_testbed

GOLDEN_DIR = Path(__file__).parent / "golden"
FIXED_TIME = datetime(2024, 1, 1, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def catalog():
    return load_default_catalog()


@pytest.fixture(scope="session")
def catalog_document(catalog):
    """A fresh, mutable copy of the shipped catalog document per use."""
    return lambda: catalog_to_document(catalog)


@pytest.fixture
def testbed():
    return default_testbed()


@pytest.fixture
def fixed_clock():
    return lambda: FIXED_TIME


@pytest.fixture
def golden():
    """
    Compares text against the checked-in tests/golden/<name>. A missing file
    fails; SDNSEC_UPDATE_GOLDEN=1 rewrites the file instead of comparing.
    """
    def check(name: str, text: str) -> None:
        path = GOLDEN_DIR / name
        if os.getenv("SDNSEC_UPDATE_GOLDEN") == "1":
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            return
        if not path.exists():
            pytest.fail(f"golden file {name} is missing; run with SDNSEC_UPDATE_GOLDEN=1 to create it")
        assert text == path.read_text(encoding="utf-8")

    return check
