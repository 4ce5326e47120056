from django.core.management.base import BaseCommand, CommandError

from django_reach.exceptions import ReachError
from django_reach.parser import parse_file
from django_reach.printer import print_machine


class Command(BaseCommand):
    """
    Command class printing a B-lite model in canonical form
    """

    help = "Prints the canonical form of a B-lite model"
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("model", help="B-lite model file")
        parser.add_argument(
            "--check", action="store_true", help="only check that the file is already in canonical form"
        )

    def handle(self, *args, **options):
        try:
            machine = parse_file(options["model"])
        except ReachError as e:
            raise CommandError(str(e), returncode=2)
        text = print_machine(machine)
        if not options["check"]:
            self.stdout.write(text, ending="")
            return
        with open(options["model"], encoding="utf-8") as f:
            if f.read() != text:
                raise CommandError(f"{options['model']} is not in canonical form", returncode=1)
