"""Print the experiment config defaults."""
from django.core.management.base import CommandError

from ibmg.services.experiments import ConfigError, config_defaults, format_config, read_config
from ibmg.services.logger import LoggerEnabledCommand


class Command(LoggerEnabledCommand):
    """Print every experiment-config key with its default, or the resolved values of a config file."""

    help = "Print every experiment-config key with its default, or the resolved values of a config file"

    def add_arguments(self, parser):
        """Add arguments method."""
        parser.add_argument("config", nargs="?", default=None, help="Optional config file to resolve")

    def handle(self, *args, **options):
        """Handle method."""
        try:
            if options["config"]:
                config = read_config(options["config"])
                self.stdout.write(format_config(config.values, config.axes), ending="")
            else:
                self.stdout.write(format_config(config_defaults()), ending="")
        except ConfigError as e:
            raise CommandError(str(e)) from e
