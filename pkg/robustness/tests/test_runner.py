import tempfile
from pathlib import Path
from unittest import skipUnless

from django.conf import settings
from django.test import TestCase, tag
from scipy import stats

from robustness.exceptions import ConfigurationError
from robustness.experiment import build_config, load_config
from robustness.models import Experiment, ResultRow, SweepCell
from robustness.reports import write_csv
from robustness.runner import run_rq1, run_sweep

ML100K = Path(settings.DATA_ROOT) / 'ml-100k' / 'u.data'
EMBEDDING_EXPERIMENT = Path(settings.BASE_DIR) / 'experiments' / 'synthetic_embedding.yaml'


def small_config(name='small', **overrides):
    data = {
        'name': name,
        'dataset': {
            'source': 'synthetic',
            'synthetic': {'n_users': 60, 'n_items': 120, 'seq_len_min': 12, 'seq_len_max': 20, 'n_phases': 2},
        },
        'model': {'kind': 'markov'},
        'scenarios': ['beginning', 'end'],
        'n_values': [1, 2],
        'seeds': [0, 1],
        'eval_negatives': 50,
        'workers': 1,
    }
    data.update(overrides)
    return build_config(data)


def by_key(records, seed=0):
    return {(r.scenario, r.n, r.metric): r for r in records if r.seed == seed}


class SweepGridTest(TestCase):
    def test_every_cell_runs_once(self):
        records = run_sweep(small_config())
        experiment = Experiment.objects.get(name='small', kind=Experiment.Kind.SWEEP)

        # baseline plus 2 scenarios x 2 removal counts, for each of 2 seeds
        self.assertEqual(experiment.cells.count(), 10)
        self.assertEqual(experiment.cells.filter(status=SweepCell.Status.DONE).count(), 10)
        # 4 baseline metrics per seed; 4 metrics, 4 variations and 3 RLS rows per perturbed cell
        self.assertEqual(len(records), 2 * 4 + 8 * 11)
        self.assertEqual(len({r.key for r in records}), len(records))

    def test_perturbed_rows(self):
        rows = by_key(run_sweep(small_config()))
        ndcg = rows[('end', 2, 'ndcg')]
        self.assertIsNotNone(ndcg.p_value)
        self.assertEqual(ndcg.significant, ndcg.p_value < 1e-3)
        for metric in ('rls_jac', 'rls_frbo', 'rls_rbo', 'ndcg_pct', 'mrr_pct', 'precision_pct', 'recall_pct'):
            self.assertIn(('end', 2, metric), rows)
        baseline = rows[('baseline', 0, 'ndcg')].value
        expected = 100.0 * (ndcg.value - baseline) / baseline
        self.assertAlmostEqual(rows[('end', 2, 'ndcg_pct')].value, expected, places=9)

    def test_resume_skips_done_cells(self):
        cfg = small_config()
        first = run_sweep(cfg)
        again = run_sweep(cfg)
        self.assertEqual(again, first)
        self.assertEqual(ResultRow.objects.count(), len(first))

    def test_resume_reruns_pending_cells(self):
        cfg = small_config()
        first = run_sweep(cfg)
        cell = SweepCell.objects.get(scenario='end', n=2, seed=1)
        cell.results.all().delete()
        cell.status = SweepCell.Status.PENDING
        cell.save()

        self.assertEqual(run_sweep(cfg), first)

    def test_changed_config_needs_fresh_start(self):
        run_sweep(small_config())
        with self.assertRaises(ConfigurationError):
            run_sweep(small_config(model={'kind': 'popularity'}))
        records = run_sweep(small_config(model={'kind': 'popularity'}), fresh=True)
        self.assertEqual({r.model for r in records}, {'popularity'})
        self.assertEqual(Experiment.objects.get(name='small').model_kind, 'popularity')

    def test_same_inputs_give_identical_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = write_csv(run_sweep(small_config('first')), Path(tmp) / 'first.csv')
            second = write_csv(run_sweep(small_config('second')), Path(tmp) / 'second.csv')
            self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_worker_pool_matches_serial_run(self):
        serial = run_sweep(small_config('serial', seeds=[0]))
        pooled = run_sweep(small_config('pooled', seeds=[0], workers=2))
        self.assertEqual(pooled, serial)

    def test_failed_cell_is_recorded(self):
        # every user has exactly 11 interactions, so removing 10 leaves nothing to train on
        cfg = small_config(
            'failing',
            dataset={'source': 'synthetic', 'synthetic': {'n_users': 30, 'n_items': 80, 'seq_len_min': 11, 'seq_len_max': 11}},
            scenarios=['end'],
            n_values=[1, 10],
            seeds=[0],
        )
        records = run_sweep(cfg)
        failed = SweepCell.objects.get(experiment__name='failing', n=10)
        self.assertEqual(failed.status, SweepCell.Status.FAILED)
        self.assertIn('PerturbationError', failed.error)
        self.assertEqual({(r.scenario, r.n) for r in records}, {('baseline', 0), ('end', 1)})


class DriftDirectionTest(TestCase):
    """On interest-drift data, removing the most recent items hurts the Markov model most"""

    @classmethod
    def setUpTestData(cls):
        cfg = build_config({
            'name': 'drift',
            'dataset': {'source': 'synthetic', 'synthetic': {
                'n_users': 500, 'n_items': 200, 'seq_len_min': 20, 'seq_len_max': 60,
                'n_phases': 4, 'drift': 0.2, 'seed': 0,
            }},
            'model': {'kind': 'markov'},
            'seeds': [0],
            'workers': 1,
        })
        cls.rows = by_key(run_sweep(cfg))
        cls.baseline = cls.rows[('baseline', 0, 'ndcg')].value

    def drop(self, scenario, n=10):
        return self.baseline - self.rows[(scenario, n, 'ndcg')].value

    def test_end_removal_hurts_most(self):
        end = self.drop('end')
        self.assertGreater(end, self.drop('beginning'))
        self.assertGreater(end, self.drop('middle'))
        self.assertLess(self.drop('beginning'), end / 3)
        self.assertLess(self.drop('middle'), end / 3)
        self.assertLess(self.rows[('end', 10, 'ndcg')].p_value, 1e-3)
        self.assertTrue(self.rows[('end', 10, 'ndcg')].significant)

    def test_accuracy_falls_with_removal_count(self):
        values = [self.rows[('end', n, 'ndcg')].value for n in range(1, 11)]
        rho = stats.spearmanr(range(1, 11), values).statistic
        self.assertLessEqual(rho, -0.8)

    def test_end_removal_changes_rankings_most(self):
        for metric in ('rls_jac', 'rls_frbo'):
            end = self.rows[('end', 10, metric)].value
            self.assertLess(end, self.rows[('beginning', 10, metric)].value)
            self.assertLess(end, self.rows[('middle', 10, metric)].value)


class SeedInstabilityTest(TestCase):
    def test_deterministic_model_is_stable(self):
        records = run_rq1(small_config('stable', model={'kind': 'popularity'}, seeds=[0, 1, 2]))
        rows = {(r.n, r.metric): r.value for r in records}

        self.assertEqual(len(records), 3 * 4 + 3 * 7)
        for first, second in ((0, 1), (0, 2), (1, 2)):
            self.assertEqual(rows[(second, f'rls_jac_vs_run{first}')], 1.0)
            self.assertEqual(rows[(second, f'ndcg_pct_vs_run{first}')], 0.0)
        self.assertEqual(Experiment.objects.get(name='stable').kind, Experiment.Kind.RQ1)

    def test_repeated_seed_reproduces_the_run(self):
        cfg = small_config(
            'repeated',
            model={
                'kind': 'embedding_seq', 'embedding_dim': 8, 'lr': 0.01, 'optimizer': 'adam', 'batch_size': 32,
                'n_negatives_train': 10, 'max_epochs': 4, 'patience': 3, 'valid_negatives': 20,
            },
            seeds=[3, 3],
        )
        records = run_rq1(cfg)
        rows = {(r.n, r.metric): r for r in records}

        self.assertEqual({r.seed for r in records}, {3})
        self.assertEqual(rows[(0, 'ndcg')].value, rows[(1, 'ndcg')].value)
        for metric in ('ndcg', 'mrr', 'precision', 'recall'):
            self.assertEqual(rows[(1, f'{metric}_pct_vs_run0')].value, 0.0)
        for metric in ('rls_jac', 'rls_frbo'):
            self.assertEqual(rows[(1, f'{metric}_vs_run0')].value, 1.0)
        self.assertEqual(SweepCell.objects.filter(experiment__name='repeated', status=SweepCell.Status.DONE).count(), 2)

    def test_needs_two_seeds(self):
        with self.assertRaises(ConfigurationError):
            run_rq1(small_config(seeds=[0]))

    def test_sweep_seeds_must_be_distinct(self):
        with self.assertRaises(ConfigurationError):
            run_sweep(small_config(seeds=[0, 0]))
        self.assertFalse(Experiment.objects.exists())


class StationaryControlTest(TestCase):
    """Without interest drift, where the items are removed makes no real difference"""

    @classmethod
    def setUpTestData(cls):
        cfg = build_config({
            'name': 'stationary',
            'dataset': {'source': 'synthetic', 'synthetic': {
                'n_users': 500, 'n_items': 200, 'seq_len_min': 20, 'seq_len_max': 60,
                'n_phases': 1, 'drift': 0.0, 'seed': 0,
            }},
            'model': {'kind': 'markov'},
            'scenarios': ['beginning', 'end'],
            'n_values': [10],
            'seeds': [0],
            'workers': 1,
        })
        cls.rows = by_key(run_sweep(cfg))
        cls.baseline = cls.rows[('baseline', 0, 'ndcg')].value

    def test_end_removal_matches_beginning_removal(self):
        end = self.baseline - self.rows[('end', 10, 'ndcg')].value
        beginning = self.baseline - self.rows[('beginning', 10, 'ndcg')].value
        self.assertLess(abs(end), 0.05)
        self.assertLess(abs(beginning), 0.05)
        self.assertLess(abs(end - beginning), 0.03)


@tag('slow')
class EmbeddingDriftTest(TestCase):
    """The embedding model on the shipped synthetic drift experiment"""

    @classmethod
    def setUpTestData(cls):
        cls.rows = by_key(run_sweep(load_config(EMBEDDING_EXPERIMENT, {
            'name': 'embedding-drift', 'n_values': [10], 'seeds': [0], 'workers': 1,
        })))
        cls.baseline = cls.rows[('baseline', 0, 'ndcg')].value
        cls.seed_rows = {
            (r.n, r.metric): r.value
            for r in run_rq1(load_config(EMBEDDING_EXPERIMENT, {'name': 'embedding-seeds', 'seeds': [0, 1], 'workers': 1}))
        }

    def drop(self, scenario):
        return self.baseline - self.rows[(scenario, 10, 'ndcg')].value

    def test_end_removal_hurts_most(self):
        end = self.drop('end')
        self.assertGreater(end, self.drop('beginning'))
        self.assertGreater(end, self.drop('middle'))
        self.assertLess(self.drop('beginning'), end / 3)
        self.assertLess(self.drop('middle'), end / 3)
        self.assertLess(self.rows[('end', 10, 'ndcg')].p_value, 1e-3)
        self.assertTrue(self.rows[('end', 10, 'ndcg')].significant)

    def test_seeds_agree_on_accuracy_but_not_on_rankings(self):
        self.assertLess(self.seed_rows[(1, 'ndcg_pct_vs_run0')], 5.0)
        self.assertLess(self.seed_rows[(1, 'rls_jac_vs_run0')], 0.9)
        # a random ranking of 101 candidates scores about 0.07
        self.assertGreater(self.seed_rows[(0, 'ndcg')], 0.3)


@skipUnless(ML100K.exists(), 'MovieLens 100K is not available under DATA_ROOT')
class MovieLens100KSweepTest(TestCase):
    def test_end_removal_hurts_more_than_beginning(self):
        cfg = build_config({
            'name': 'ml100k-markov',
            'dataset': {'source': 'ml100k', 'path': str(ML100K)},
            'model': {'kind': 'markov'},
            'scenarios': ['beginning', 'end'],
            'n_values': [10],
            'seeds': [0],
        })
        rows = by_key(run_sweep(cfg))
        baseline = rows[('baseline', 0, 'ndcg')].value
        self.assertGreater(
            baseline - rows[('end', 10, 'ndcg')].value,
            baseline - rows[('beginning', 10, 'ndcg')].value,
        )
