"""
Console entry point. Outside a Django project a minimal configuration is installed so the reach command
runs stand-alone; inside a project `manage.py reach` does the same job.
"""
__author__ = "Thorin Schiffer"

import sys
from typing import List, Optional

import django
from django.conf import settings

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {"plain": {"format": "%(levelname)s %(name)s: %(message)s"}},
    "handlers": {"stderr": {"class": "logging.StreamHandler", "stream": "ext://sys.stderr", "formatter": "plain"}},
    "loggers": {"django_reach": {"handlers": ["stderr"], "level": "WARNING"}},
}


def configure():
    if not settings.configured:
        settings.configure(INSTALLED_APPS=["django_reach"], LOGGING=LOGGING)
    django.setup()


def main(argv: Optional[List[str]] = None) -> int:
    """
    Runs the reach command on the arguments
    @param argv: command line arguments without the program name
    @return: exit code, 0 clean, 1 deadlock or invariant violation found, 2 usage or model error
    """
    configure()
    from django_reach.management.commands.reach import Command

    argv = sys.argv[1:] if argv is None else argv
    try:
        Command().run_from_argv(["reach", "reach", *argv])
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    return 0


def run():
    sys.exit(main())
