"""Configure the ibmg app."""
import logging

from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _

from ibmg.settings import IBMG_THREADS

logger = logging.getLogger(__name__)


class IBMGConfig(AppConfig):
    """ibmg app configuration."""

    name = "ibmg"
    verbose_name = _("ibmg")
    default_auto_field = "django.db.models.BigAutoField"

    def ready(self) -> None:
        """Run stuff when Django starts."""
        logger.debug(f"ibmg ready, smoother threads capped at {IBMG_THREADS}")
