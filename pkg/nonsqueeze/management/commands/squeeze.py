import argparse

from django.core.management.base import BaseCommand, CommandError

from nonsqueeze.cli import cli
from nonsqueeze.exceptions import EXIT_OK


class Command(BaseCommand):
    help = "Run a nonsqueeze task, e.g. `squeeze fold verify --R 1 --L 8`."

    def add_arguments(self, parser):
        parser.add_argument('args', nargs=argparse.REMAINDER)

    def handle(self, *args, **options):
        code = cli(list(args))
        if code != EXIT_OK:
            raise CommandError(f"squeeze {' '.join(args[:2])} exited with status {code}", returncode=code)
