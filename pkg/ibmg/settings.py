"""Define settings for the ibmg app."""
import os
from typing import Any, Dict

from django.conf import settings as django_project_settings

IBMG_THREADS: int = int(getattr(
    django_project_settings, "IBMG_THREADS", os.environ.get("IBMG_THREADS", 1)
))
"""Cap on the number of threads used by the additive Schwarz subdomain solves."""

IBMG_QUEUE_SERVICE_TYPE: str = getattr(
    django_project_settings, "IBMG_QUEUE_SERVICE_TYPE", "local"
)

IBMG_OUTPUT_DIR: str = getattr(
    django_project_settings, "IBMG_OUTPUT_DIR", "ibmg-results"
)

IBMG_N_REPORTS_KEPT: int = getattr(
    django_project_settings, "IBMG_N_REPORTS_KEPT", 20
)

IBMG_DEFAULTS: Dict[str, Any] = getattr(
    django_project_settings, "IBMG_DEFAULTS", {}
)
"""
Override experiment-config defaults project-wide.

Example:

    IBMG_DEFAULTS = {
        "wrap": 3,
        "max_iters": 200,
    }

Keys must be known experiment-config keys (see ``ibmg print-config``).
"""
