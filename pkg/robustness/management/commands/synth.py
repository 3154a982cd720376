from django.core.management.base import BaseCommand, CommandError

from robustness.corpus import dataset_stats, gen_synthetic, write_canonical
from robustness.exceptions import RobustnessError


class Command(BaseCommand):
    help = 'Generate a synthetic interest-drift dataset in the canonical format'

    def add_arguments(self, parser):
        parser.add_argument('output', help='Canonical output file')
        parser.add_argument('--n-users', type=int, default=500)
        parser.add_argument('--n-items', type=int, default=200)
        parser.add_argument('--seq-len-min', type=int, default=20)
        parser.add_argument('--seq-len-max', type=int, default=60)
        parser.add_argument('--phases', type=int, default=4)
        parser.add_argument('--drift', type=float, default=0.2)
        parser.add_argument('--cluster-size', type=int, default=10)
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        try:
            ds = gen_synthetic(
                n_users=options['n_users'],
                n_items=options['n_items'],
                seq_len_range=(options['seq_len_min'], options['seq_len_max']),
                n_phases=options['phases'],
                drift=options['drift'],
                seed=options['seed'],
                cluster_size=options['cluster_size'],
            )
            path = write_canonical(ds, options['output'])
        except RobustnessError as exc:
            raise CommandError(str(exc))
        except OSError as exc:
            raise CommandError(f"cannot write {options['output']}: {exc.strerror or exc}")

        self.stdout.write(str(dataset_stats(ds)))
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
