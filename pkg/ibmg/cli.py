"""Standalone ``ibmg`` console script.

Configures a minimal Django project around the app (sqlite database at
``$IBMG_DATABASE``, default ``ibmg.sqlite3``), applies migrations and
dispatches to the management commands::

    ibmg run sweep.cfg --jobs 4
    ibmg print-config
    ibmg snapshot sweep.cfg out/ --index 2
    ibmg export 3
"""
import os
import sys
from typing import List, Optional

SUBCOMMANDS = {
    "run": "ibmg_run",
    "print-config": "ibmg_print_config",
    "snapshot": "ibmg_snapshot",
    "export": "ibmg_export",
}


def configure(database: Optional[str] = None) -> None:
    """Set up Django unless a settings module is already in charge."""
    import django
    from django.conf import settings

    if not settings.configured and "DJANGO_SETTINGS_MODULE" not in os.environ:
        settings.configure(
            INSTALLED_APPS=["ibmg"],
            DATABASES={
                "default": {
                    "ENGINE": "django.db.backends.sqlite3",
                    "NAME": database or os.environ.get("IBMG_DATABASE", "ibmg.sqlite3"),
                }
            },
            DEFAULT_AUTO_FIELD="django.db.models.BigAutoField",
            USE_TZ=True,
            IBMG_THREADS=int(os.environ.get("IBMG_THREADS", 1)),
        )
    django.setup()


def usage() -> str:
    return "usage: ibmg {" + ",".join(SUBCOMMANDS) + "} [options]\n"


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the console script; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        sys.stdout.write(usage())
        return 0 if argv else 2
    if argv[0] not in SUBCOMMANDS:
        sys.stderr.write(f"unknown command '{argv[0]}'\n" + usage())
        return 2

    configure()
    from django.core.management import call_command, execute_from_command_line

    call_command("migrate", "ibmg", verbosity=0, interactive=False)
    try:
        execute_from_command_line(["ibmg", SUBCOMMANDS[argv[0]], *argv[1:]])
    except SystemExit as e:
        return int(e.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
