import tempfile
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from robustness.corpus import (
    Dataset, PerturbationSpec, Scenario, UserSequence, dataset_stats, filter_min_length, gen_synthetic,
    parse_foursquare, parse_movielens, perturb, read_canonical, split_leave_one_out, write_canonical,
)
from robustness.exceptions import DatasetError, PerturbationError

ML100K = Path(settings.DATA_ROOT) / 'ml-100k' / 'u.data'


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write(self, name, text):
        path = self.dir / name
        path.write_text(text, encoding='utf-8')
        return path


class MovieLensParserTest(TempDirMixin, SimpleTestCase):
    def test_sorts_by_timestamp_and_reindexes_items(self):
        path = self.write('u.data', "1\t10\t5\t300\n1\t20\t3\t100\n2\t10\t4\t200\n1\t30\t4\t200\n")
        ds = parse_movielens(path, 'ml100k')

        self.assertEqual(ds.n_items, 3)
        self.assertEqual([u.user_id for u in ds.users], [1, 2])
        self.assertEqual(ds.users[0].items, (1, 2, 0))
        self.assertEqual(ds.users[0].timestamps, (100, 200, 300))
        self.assertEqual(ds.users[1].items, (0,))

    def test_equal_timestamps_keep_file_order(self):
        path = self.write('u.data', "1\t30\t5\t100\n1\t10\t5\t100\n1\t20\t5\t100\n")
        ds = parse_movielens(path, 'ml100k')
        self.assertEqual(ds.users[0].items, (2, 0, 1))

    def test_ml1m_separator(self):
        path = self.write('ratings.dat', "1::1193::5::978300760\n1::661::3::978302109\n")
        ds = parse_movielens(path, 'ml1m')
        self.assertEqual(ds.users[0].items, (1, 0))

    def test_malformed_field_reports_line(self):
        path = self.write('u.data', "1\t10\t5\t300\n1\tabc\t3\t100\n")
        with self.assertRaises(DatasetError) as ctx:
            parse_movielens(path, 'ml100k')
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn('line 2', str(ctx.exception))

    def test_missing_field_reports_line(self):
        path = self.write('u.data', "1\t10\t5\t300\n1\t20\t3\t100\n2\t10\t4\n")
        with self.assertRaises(DatasetError) as ctx:
            parse_movielens(path, 'ml100k')
        self.assertEqual(ctx.exception.line, 3)

    def test_missing_file(self):
        with self.assertRaises(DatasetError):
            parse_movielens(self.dir / 'nope.data', 'ml100k')

    def test_unknown_variant(self):
        path = self.write('u.data', "1\t10\t5\t300\n")
        with self.assertRaises(DatasetError):
            parse_movielens(path, 'ml10m')


class FoursquareParserTest(TempDirMixin, SimpleTestCase):
    def test_venues_become_items(self):
        path = self.write('checkins.tsv', (
            "10\tvenueB\tBar\tTue Apr 03 18:00:09 +0000 2012\n"
            "20\tvenueB\tBar\tWed Apr 04 10:00:00 +0000 2012\n"
            "10\tvenueA\tCafe\tTue Apr 03 18:05:09 +0000 2012\n"
        ))
        ds = parse_foursquare(path)

        self.assertEqual(ds.n_items, 2)
        first = ds.users[0]
        self.assertEqual(first.user_id, 10)
        self.assertEqual(first.items, (1, 0))
        self.assertEqual(first.timestamps[1] - first.timestamps[0], 300)

    def test_numeric_timestamps_and_custom_columns(self):
        path = self.write('checkins.tsv', "x\t7\t500\tv2\nx\t7\t100\tv1\n")
        ds = parse_foursquare(path, user_col=1, item_col=3, timestamp_col=2)
        self.assertEqual(ds.users[0].items, (0, 1))
        self.assertEqual(ds.users[0].timestamps, (100, 500))

    def test_bad_timestamp_reports_line(self):
        path = self.write('checkins.tsv', (
            "10\tvenueA\tBar\tTue Apr 03 18:00:09 +0000 2012\n"
            "10\tvenueB\tBar\tyesterday\n"
        ))
        with self.assertRaises(DatasetError) as ctx:
            parse_foursquare(path)
        self.assertEqual(ctx.exception.line, 2)

    def test_column_out_of_range(self):
        path = self.write('checkins.tsv', "10\tvenueA\n")
        with self.assertRaises(DatasetError):
            parse_foursquare(path, timestamp_col=5)


class CanonicalFormatTest(TempDirMixin, SimpleTestCase):
    def test_write_then_read(self):
        ds = gen_synthetic(30, 80, (12, 20), 2, 0.2, seed=4)
        path = write_canonical(ds, self.dir / 'synthetic.csv')
        self.assertEqual(read_canonical(path, name=ds.name), ds)

    def test_name_defaults_to_file_stem(self):
        path = self.write('tiny.csv', "0,5,0\n0,6,1\n")
        self.assertEqual(read_canonical(path).name, 'tiny')

    def test_wrong_column_count(self):
        path = self.write('tiny.csv', "0,5\n0,6\n")
        with self.assertRaises(DatasetError):
            read_canonical(path)


class FilterTest(SimpleTestCase):
    def test_short_users_and_their_items_are_dropped(self):
        ds = Dataset(
            users=(
                UserSequence(user_id=0, items=tuple(range(11))),
                UserSequence(user_id=1, items=tuple(range(5, 15))),
            ),
            n_items=15,
            name='toy',
        )
        filtered = filter_min_length(ds, 11)

        self.assertEqual([u.user_id for u in filtered.users], [0])
        self.assertEqual(filtered.n_items, 11)
        self.assertEqual(filtered.users[0].items, tuple(range(11)))

    def test_nothing_left(self):
        ds = Dataset(users=(UserSequence(user_id=0, items=(1, 2)),), n_items=3)
        with self.assertRaises(DatasetError):
            filter_min_length(ds, 11)

    def test_stats(self):
        ds = Dataset(
            users=(UserSequence(user_id=0, items=(0, 1)), UserSequence(user_id=1, items=(0, 1, 2, 3))),
            n_items=4,
        )
        stats = dataset_stats(ds)
        self.assertEqual((stats.users, stats.items, stats.interactions), (2, 4, 6))
        self.assertEqual(stats.mean_length, 3.0)


class PerturbTest(SimpleTestCase):
    def test_examples(self):
        seq = tuple(range(1, 11))
        self.assertEqual(perturb(seq, PerturbationSpec(Scenario.BEGINNING, 3)), tuple(range(4, 11)))
        self.assertEqual(perturb(seq, PerturbationSpec(Scenario.END, 3)), tuple(range(1, 8)))
        # m = 10, n = 4: the block starts at index 3
        self.assertEqual(perturb(seq, PerturbationSpec(Scenario.MIDDLE, 4)), (1, 2, 3, 8, 9, 10))

    def test_zero_is_identity(self):
        seq = (5, 3, 9)
        for scenario in Scenario.values:
            self.assertEqual(perturb(seq, PerturbationSpec(scenario, 0)), seq)

    def test_random_sequences(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            length = int(rng.integers(11, 60))
            n = int(rng.integers(0, 11))
            scenario = Scenario.values[int(rng.integers(3))]
            seq = tuple(int(i) for i in rng.permutation(1000)[:length])
            out = perturb(seq, PerturbationSpec(scenario, n))

            self.assertEqual(len(out), length - n)
            positions = [seq.index(item) for item in out]
            self.assertEqual(positions, sorted(positions))
            removed = sorted(set(range(length)) - set(positions))
            if n:
                self.assertEqual(removed, list(range(removed[0], removed[0] + n)))
            if scenario == Scenario.BEGINNING:
                self.assertEqual(out, seq[n:])
            elif scenario == Scenario.END:
                self.assertEqual(out, seq[:length - n])

    def test_cannot_empty_a_sequence(self):
        with self.assertRaises(PerturbationError):
            perturb((1, 2, 3), PerturbationSpec(Scenario.END, 3))

    def test_spec_bounds(self):
        with self.assertRaises(PerturbationError):
            PerturbationSpec(Scenario.END, 11)
        with self.assertRaises(PerturbationError):
            PerturbationSpec('sideways', 1)


class SplitTest(SimpleTestCase):
    def setUp(self):
        self.ds = Dataset(users=(UserSequence(user_id=7, items=tuple(range(15))),), n_items=20, name='toy')

    def test_baseline_split(self):
        split = split_leave_one_out(self.ds, PerturbationSpec())
        user = split.users[0]
        self.assertEqual(user.test_target, 14)
        self.assertEqual(user.test_context, tuple(range(14)))
        self.assertEqual(user.train_items, tuple(range(14)))
        self.assertEqual(user.valid_target, 13)

    def test_perturbation_leaves_test_context_alone(self):
        split = split_leave_one_out(self.ds, PerturbationSpec(Scenario.END, 4))
        user = split.users[0]
        self.assertEqual(user.train_items, tuple(range(10)))
        self.assertEqual(user.valid_target, 9)
        self.assertEqual(user.test_context, tuple(range(14)))
        self.assertEqual(user.items, tuple(range(15)))

    def test_too_short_for_removal(self):
        ds = Dataset(users=(UserSequence(user_id=0, items=(1, 2, 3)),), n_items=4)
        with self.assertRaisesRegex(PerturbationError, 'user 0'):
            split_leave_one_out(ds, PerturbationSpec(Scenario.BEGINNING, 2))


class SyntheticTest(SimpleTestCase):
    def test_deterministic(self):
        first = gen_synthetic(50, 100, (12, 30), 3, 0.2, seed=1)
        second = gen_synthetic(50, 100, (12, 30), 3, 0.2, seed=1)
        other = gen_synthetic(50, 100, (12, 30), 3, 0.2, seed=2)
        self.assertEqual(first, second)
        self.assertNotEqual(first, other)

    def test_shape(self):
        ds = gen_synthetic(40, 120, (15, 25), 4, 0.3, seed=0)
        self.assertEqual(len(ds.users), 40)
        self.assertLessEqual(ds.n_items, 120)
        for user in ds.users:
            self.assertTrue(15 <= len(user) <= 25)
            self.assertTrue(all(0 <= item < ds.n_items for item in user.items))

    def test_invalid_arguments(self):
        with self.assertRaises(DatasetError):
            gen_synthetic(10, 5, (12, 20), 4, 0.2, seed=0)
        with self.assertRaises(DatasetError):
            gen_synthetic(10, 100, (5, 20), 4, 0.2, seed=0)
        with self.assertRaises(DatasetError):
            gen_synthetic(10, 100, (12, 20), 4, 1.5, seed=0)


@skipUnless(ML100K.exists(), 'MovieLens 100K is not available under DATA_ROOT')
class MovieLens100KTest(SimpleTestCase):
    def test_published_counts(self):
        ds = parse_movielens(ML100K, 'ml100k')
        stats = dataset_stats(ds)
        self.assertEqual((stats.users, stats.items, stats.interactions), (943, 1682, 100_000))
