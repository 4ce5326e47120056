import logging

from django.core.management.base import BaseCommand, CommandError

from django_reach import settings as reach_settings
from django_reach.exceptions import ConfigurationError, ReachError
from django_reach.runner import FORMATS, ORDERS, STRATEGIES, RunConfig, execute
from django_reach.utils import parse_overrides


def endpoint_option(value):
    """
    --remote and --serve given without a value use REACH_ENDPOINT
    """
    if value != "":
        return value
    if not reach_settings.ENDPOINT:
        raise ConfigurationError("no endpoint given and REACH_ENDPOINT is not set")
    return reach_settings.ENDPOINT


class Command(BaseCommand):
    """
    Command class for the reachability analysis of a B-lite machine
    """

    help = "Computes the reachable states of a B-lite machine and checks them for deadlocks and invariant violations"
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("model", nargs="?", help="B-lite model file")
        parser.add_argument(
            "-c", "--constant", action="append", default=[], metavar="NAME=VALUE", help="override a constant"
        )
        parser.add_argument("--strategy", choices=STRATEGIES, help="exploration strategy, bfs by default")
        parser.add_argument("--order", choices=ORDERS, default="natural", help="variable order")
        parser.add_argument("--deadlock", action="store_true", help="report deadlock states")
        parser.add_argument("--invariant", action="store_true", help="report invariant violations")
        parser.add_argument(
            "--remote",
            nargs="?",
            const="",
            metavar="ENDPOINT",
            help="explore a model served at ENDPOINT, REACH_ENDPOINT when omitted",
        )
        parser.add_argument(
            "--serve",
            nargs="?",
            const="",
            metavar="ENDPOINT",
            help="serve the model at ENDPOINT until TERM, REACH_ENDPOINT when omitted",
        )
        parser.add_argument("--matrices", action="store_true", help="print the read and write matrices")
        parser.add_argument("--stats", action="store_true", help="print a one line summary")
        parser.add_argument("--format", choices=FORMATS, default="text", help="output format")
        parser.add_argument("--node-table", type=int, help="LDD node table size")
        parser.add_argument("--cache", type=int, help="LDD operation cache size")
        parser.add_argument("--graph", metavar="PATH", help="write the explicit transition graph, - for stdout")

    def handle(self, *args, **options):
        """
        Handles the task execution
        @param args: args of the command
        @param options: options of the command
        """
        if options["verbosity"] >= 2:
            logging.getLogger("django_reach").setLevel(logging.DEBUG)
        try:
            config = RunConfig(
                model=options["model"],
                constants=parse_overrides(options["constant"]),
                strategy=options["strategy"],
                order=options["order"],
                deadlock=options["deadlock"],
                invariant=options["invariant"],
                remote=endpoint_option(options["remote"]),
                serve=endpoint_option(options["serve"]),
                matrices=options["matrices"],
                stats=options["stats"],
                format=options["format"],
                node_table=options["node_table"],
                cache=options["cache"],
                graph=options["graph"],
            )
            summary = execute(config, self.stdout)
        except ReachError as e:
            raise CommandError(str(e), returncode=2)

        if summary is not None and summary.violated:
            found = [
                f"{finding.count} {label}"
                for label, finding in (("deadlocks", summary.deadlocks), ("invariant violations", summary.invariant))
                if finding is not None and finding.count
            ]
            raise CommandError(f"found {' and '.join(found)}", returncode=1)
