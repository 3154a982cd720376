from django.core.management.base import BaseCommand, CommandError

from robustness.exceptions import RobustnessError
from robustness.management.options import add_experiment_arguments, experiment_config
from robustness.reports import ReportFormat, emit_report
from robustness.runner import run_rq1


class Command(BaseCommand):
    help = 'Train the unperturbed model under several seeds and compare the runs'

    def add_arguments(self, parser):
        add_experiment_arguments(parser)

    def handle(self, *args, **options):
        try:
            cfg = experiment_config(options)
            records = run_rq1(cfg)
            paths = []
            for fmt in options['formats'] or [ReportFormat.CSV]:
                paths.extend(emit_report(records, fmt, cfg.results_dir, name='rq1'))
        except RobustnessError as exc:
            raise CommandError(str(exc))

        for path in paths:
            self.stdout.write(f"  {path}")
        self.stdout.write(self.style.SUCCESS(
            f"Compared {len(cfg.seeds)} seeds of {cfg.name}: {len(records)} result rows"
        ))
