from django.core.management.base import BaseCommand, CommandError

from robustness.exceptions import RobustnessError
from robustness.management.options import add_experiment_arguments, experiment_config
from robustness.models import Experiment, SweepCell
from robustness.reports import ReportFormat, emit_report
from robustness.runner import run_sweep


class Command(BaseCommand):
    help = 'Run the baseline and every (scenario, n, seed) perturbation cell of an experiment'

    def add_arguments(self, parser):
        add_experiment_arguments(parser)
        parser.add_argument(
            '--fresh', action='store_true',
            help='Discard stored cells of an experiment with the same name instead of resuming it',
        )

    def handle(self, *args, **options):
        try:
            cfg = experiment_config(options)
            records = run_sweep(cfg, fresh=options['fresh'])
            paths = []
            if records:
                for fmt in options['formats'] or [ReportFormat.CSV]:
                    paths.extend(emit_report(records, fmt, cfg.results_dir, name='sweep'))
        except RobustnessError as exc:
            raise CommandError(str(exc))

        for path in paths:
            self.stdout.write(f"  {path}")
        failed = SweepCell.objects.filter(
            experiment__name=cfg.name, experiment__kind=Experiment.Kind.SWEEP, status=SweepCell.Status.FAILED,
        )
        for cell in failed:
            self.stdout.write(self.style.WARNING(f"Failed cell {cell}: {cell.error}"))
        self.stdout.write(self.style.SUCCESS(f"Sweep {cfg.name}: {len(records)} result rows"))
