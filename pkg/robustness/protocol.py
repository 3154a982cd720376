"""
The per-cell experimental protocol: perturb, fit, evaluate and compare against
the same-seed baseline.

Nothing in here touches the database or Django settings, so cells can run in
worker processes; the runner owns persistence.
"""
import logging
from dataclasses import dataclass
from itertools import combinations

from .corpus import PerturbationSpec, Scenario, split_leave_one_out
from .evaluation import Metric, evaluate, paired_t_test, percentage_variation, rls_report
from .exceptions import DegenerateTestError, RobustnessError
from .ranksim import SimilarityConfig, SimilarityKind
from .recommenders import fit
from .reports import BASELINE, ResultRecord

logger = logging.getLogger(__name__)

RLS_METRICS = {
    SimilarityKind.JAC: 'rls_jac',
    SimilarityKind.FRBO_SIMPLE: 'rls_frbo',
    SimilarityKind.RBO: 'rls_rbo',
}


@dataclass(frozen=True)
class EvalSettings:
    k: int
    # built for a universe of 1 + n_negatives candidates, the items two rankings draw from
    similarity: SimilarityConfig
    eval_seed: int
    n_negatives: int
    significance: float


@dataclass(frozen=True)
class CellTask:
    dataset: object
    spec: PerturbationSpec
    model_config: object
    settings: EvalSettings
    baseline: object = None
    # position in the seed list; RQ1 may train the same seed more than once
    run: int = 0

    @property
    def label(self):
        scenario = BASELINE if self.spec.is_baseline else self.spec.scenario
        return f"{scenario} n={self.spec.n} seed={self.model_config.seed} run={self.run}"


@dataclass
class CellOutcome:
    report: object
    records: list


def train_and_evaluate(dataset, spec, model_config, settings):
    split = split_leave_one_out(dataset, spec)
    model = fit(split, model_config)
    return evaluate(model, split, k=settings.k, eval_seed=settings.eval_seed, n_negatives=settings.n_negatives)


def metric_records(report, scenario=None, n=None):
    return [
        ResultRecord(
            dataset=report.dataset,
            model=report.model,
            scenario=scenario or report.scenario,
            n=report.n if n is None else n,
            seed=report.seed,
            metric=metric,
            value=value,
        )
        for metric, value in report.means.items()
    ]


def comparison_records(baseline, perturbed, settings):
    """Metrics with significance, their percentage variation and RLS of ``perturbed`` against ``baseline``"""
    common = dict(
        dataset=perturbed.dataset,
        model=perturbed.model,
        scenario=perturbed.scenario,
        n=perturbed.n,
        seed=perturbed.seed,
    )
    records = []
    for metric in Metric.values:
        try:
            test = paired_t_test(perturbed.per_user[metric], baseline.per_user[metric], alpha=settings.significance)
            p_value, significant = test.p_value, test.significant
        except DegenerateTestError:
            # identical per-user values: no variation to test
            p_value, significant = None, None
        records.append(ResultRecord(
            metric=metric, value=perturbed.mean(metric), p_value=p_value, significant=significant, **common,
        ))

    for metric in Metric.values:
        records.append(ResultRecord(
            metric=f"{metric}_pct",
            value=percentage_variation(perturbed.mean(metric), baseline.mean(metric)),
            **common,
        ))

    rls = rls_report(baseline, perturbed, settings.similarity, kinds=tuple(RLS_METRICS))
    for kind, name in RLS_METRICS.items():
        records.append(ResultRecord(metric=name, value=rls.mean(kind), **common))
    return records


def run_cell(task):
    """Train and evaluate one grid cell; perturbed cells are compared with ``task.baseline``"""
    logger.info("Cell %s started", task.label)
    report = train_and_evaluate(task.dataset, task.spec, task.model_config, task.settings)
    if task.spec.is_baseline:
        records = metric_records(report, scenario=BASELINE)
    else:
        if task.baseline is None:
            raise RobustnessError(f"cell {task.label} needs its baseline evaluation")
        records = comparison_records(task.baseline, report, task.settings)
    logger.info("Cell %s finished: NDCG@%d %.5f", task.label, task.settings.k, report.mean(Metric.NDCG))
    return CellOutcome(report=report, records=records)


def check_baseline_identity(dataset):
    """A removal of size zero must leave every scenario's split unchanged"""
    splits = [split_leave_one_out(dataset, PerturbationSpec(scenario=s, n=0)) for s in Scenario.values]
    reference = splits[0].users
    for split in splits[1:]:
        if split.users != reference:
            raise RobustnessError(f"n=0 split for scenario {split.spec.scenario!r} differs from the baseline")


def seed_comparison_records(runs, settings):
    """
    RQ1 rows from ``{run: report}``, a run being a position in the seed list.

    The ``n`` column carries the run, since nothing is removed. First the absolute
    metrics of every run, then for every unordered run pair (a, b) the absolute
    percentage discrepancy of each metric and the RLS of b's rankings against a's,
    stored on b with the suffix ``vs_run<a>``.
    """
    records = []
    for run, report in sorted(runs.items()):
        records.extend(metric_records(report, scenario=BASELINE, n=run))

    for (first_run, first), (run, second) in combinations(sorted(runs.items()), 2):
        common = dict(
            dataset=second.dataset, model=second.model, scenario=BASELINE, n=run, seed=second.seed,
        )
        suffix = f"vs_run{first_run}"
        for metric in Metric.values:
            records.append(ResultRecord(
                metric=f"{metric}_pct_{suffix}",
                value=abs(percentage_variation(second.mean(metric), first.mean(metric))),
                **common,
            ))
        rls = rls_report(first, second, settings.similarity, kinds=tuple(RLS_METRICS))
        for kind, name in RLS_METRICS.items():
            records.append(ResultRecord(metric=f"{name}_{suffix}", value=rls.mean(kind), **common))
    return records
