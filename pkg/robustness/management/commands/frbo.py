from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from robustness.exceptions import RobustnessError
from robustness.ranksim import SimilarityConfig, SimilarityKind, read_ranking, similarity


class Command(BaseCommand):
    help = 'Similarity of two ranking files (one item id per line)'

    def add_arguments(self, parser):
        parser.add_argument('first')
        parser.add_argument('second')
        parser.add_argument('--n-items', type=int, required=True, help='Size of the item universe')
        parser.add_argument('--p', type=float, default=None, help='Persistence (default RLS_PERSISTENCE)')
        parser.add_argument('--k', type=int, default=None, help='Cut-off (default: the ranking length)')
        parser.add_argument(
            '--kind', choices=SimilarityKind.values + ['all'], default=SimilarityKind.FRBO_SIMPLE,
        )

    def handle(self, *args, **options):
        try:
            x = read_ranking(options['first'])
            y = read_ranking(options['second'])
            k = options['k'] or len(x)
            kinds = SimilarityKind.values if options['kind'] == 'all' else [options['kind']]
            cfg = SimilarityConfig(
                n_items=options['n_items'],
                p=options['p'] if options['p'] is not None else settings.RLS_PERSISTENCE,
                k=k,
            )
            values = {kind: similarity(x[:k], y[:k], cfg.with_kind(kind)) for kind in kinds}
        except RobustnessError as exc:
            raise CommandError(str(exc))

        for kind, value in values.items():
            self.stdout.write(f"{kind} {value:.6f}")
