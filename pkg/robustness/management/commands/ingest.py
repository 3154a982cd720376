"""
Read a raw dataset, apply the minimum sequence length filter and write it in the
canonical user_id,item_id,timestamp format.
"""
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from robustness.corpus import (
    MIN_SEQUENCE_LENGTH, DatasetSourceKind, dataset_stats, filter_min_length, parse_foursquare,
    parse_movielens, read_canonical, write_canonical,
)
from robustness.exceptions import RobustnessError

SOURCES = [
    DatasetSourceKind.ML100K, DatasetSourceKind.ML1M, DatasetSourceKind.FOURSQUARE, DatasetSourceKind.CANONICAL,
]


class Command(BaseCommand):
    help = 'Ingest MovieLens, Foursquare or canonical interaction files'

    def add_arguments(self, parser):
        parser.add_argument('source', choices=[str(s) for s in SOURCES])
        parser.add_argument('path', help='Raw interaction file')
        parser.add_argument('--output', help='Canonical output file (default DATA_ROOT/<source>.csv)')
        parser.add_argument('--min-length', type=int, default=MIN_SEQUENCE_LENGTH)
        parser.add_argument('--user-col', type=int, default=0, help='Foursquare user column')
        parser.add_argument('--item-col', type=int, default=1, help='Foursquare venue column')
        parser.add_argument('--timestamp-col', type=int, default=-1, help='Foursquare timestamp column')
        parser.add_argument('--encoding', default='latin-1', help='Foursquare file encoding')

    def handle(self, *args, **options):
        source = options['source']
        output = options['output'] or settings.DATA_ROOT / f"{source}.csv"
        try:
            if source == DatasetSourceKind.FOURSQUARE:
                ds = parse_foursquare(
                    options['path'],
                    user_col=options['user_col'],
                    item_col=options['item_col'],
                    timestamp_col=options['timestamp_col'],
                    encoding=options['encoding'],
                )
            elif source == DatasetSourceKind.CANONICAL:
                ds = read_canonical(options['path'])
            else:
                ds = parse_movielens(options['path'], source)
            self.stdout.write(f"Raw: {dataset_stats(ds)}")

            filtered = filter_min_length(ds, options['min_length'])
            self.stdout.write(f"Filtered (L_u >= {options['min_length']}): {dataset_stats(filtered)}")
            write_canonical(filtered, output)
        except RobustnessError as exc:
            raise CommandError(str(exc))
        except OSError as exc:
            raise CommandError(f"{exc.filename or output}: {exc.strerror or exc}")

        self.stdout.write(self.style.SUCCESS(f"Wrote {output}"))
