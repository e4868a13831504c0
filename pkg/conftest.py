"""Pytest wiring for the Django test suite (mirrors ``manage.py test``)."""
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent / "benchproject"))
os.environ.setdefault("DJANGO_SETTINGS_MODULE", "benchproject.test_settings")

import django  # noqa: E402

django.setup()


@pytest.fixture(scope="session", autouse=True)
def django_test_environment():
    from django.test.utils import setup_test_environment, teardown_test_environment
    from django.test.utils import setup_databases, teardown_databases

    setup_test_environment()
    old_config = setup_databases(verbosity=0, interactive=False)
    yield
    teardown_databases(old_config, verbosity=0)
    teardown_test_environment()
