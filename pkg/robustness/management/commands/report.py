from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from robustness.exceptions import RobustnessError
from robustness.models import Experiment
from robustness.reports import ReportFormat, emit_report, sort_records


class Command(BaseCommand):
    help = 'Re-emit CSV or plot data for a stored experiment'

    def add_arguments(self, parser):
        parser.add_argument('name', help='Experiment name')
        parser.add_argument('--kind', choices=Experiment.Kind.values, default=Experiment.Kind.SWEEP)
        parser.add_argument(
            '--format', dest='formats', action='append', choices=ReportFormat.values,
            help='Report format(s) to emit (default csv)',
        )
        parser.add_argument('--output-dir', help='Directory for reports (default RESULTS_ROOT/<name>)')

    def handle(self, *args, **options):
        try:
            experiment = Experiment.objects.get(name=options['name'], kind=options['kind'])
        except Experiment.DoesNotExist:
            raise CommandError(f"No {options['kind']} experiment named {options['name']!r}")

        output_dir = Path(options['output_dir'] or Path(settings.RESULTS_ROOT) / experiment.name)
        records = sort_records(experiment.records())
        try:
            paths = []
            for fmt in options['formats'] or [ReportFormat.CSV]:
                paths.extend(emit_report(records, fmt, output_dir, name=experiment.kind))
        except RobustnessError as exc:
            raise CommandError(str(exc))

        for path in paths:
            self.stdout.write(f"  {path}")
        self.stdout.write(self.style.SUCCESS(f"Reported {len(records)} rows of {experiment}"))
