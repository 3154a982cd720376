"""
Experiment orchestration: expands an ExperimentConfig into grid cells, runs them
(optionally in a process pool) and commits each finished cell in one transaction.
"""
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed

from django.db import transaction
from django.utils import timezone

from .corpus import PerturbationSpec
from .exceptions import ConfigurationError, RobustnessError
from .models import Experiment, ResultRow, SweepCell
from .protocol import CellTask, EvalSettings, check_baseline_identity, run_cell, seed_comparison_records
from .reports import BASELINE, sort_records

logger = logging.getLogger(__name__)

# keys that may change between a run and its resumption
RESUMABLE_KEYS = ('output_dir', 'workers')


def eval_settings(cfg):
    return EvalSettings(
        k=cfg.k,
        similarity=cfg.similarity(cfg.eval_negatives + 1),
        eval_seed=cfg.eval_seed,
        n_negatives=cfg.eval_negatives,
        significance=cfg.significance,
    )


def _identity(config):
    return {key: value for key, value in config.items() if key not in RESUMABLE_KEYS}


def prepare_experiment(cfg, kind, dataset, fresh=False):
    config = cfg.as_dict()
    experiment, created = Experiment.objects.get_or_create(
        name=cfg.name,
        kind=kind,
        defaults={'dataset': dataset.name, 'model_kind': str(cfg.model.model_kind), 'config': config},
    )
    if created:
        return experiment
    if fresh:
        experiment.cells.all().delete()
    elif _identity(experiment.config) != _identity(config):
        raise ConfigurationError(
            f"experiment {cfg.name!r} already exists with a different configuration; "
            "pick another name or start it afresh"
        )
    experiment.dataset = dataset.name
    experiment.model_kind = str(cfg.model.model_kind)
    experiment.config = config
    experiment.save()
    return experiment


def execute(tasks, workers):
    """Run cell tasks and yield ``(task, outcome, error)`` as they complete"""
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            try:
                outcome = run_cell(task)
            except Exception as exc:
                logger.exception("Cell %s failed", task.label)
                yield task, None, exc
            else:
                yield task, outcome, None
        return

    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(run_cell, task): task for task in tasks}
        for future in as_completed(futures):
            task = futures[future]
            try:
                outcome = future.result()
            except Exception as exc:
                logger.exception("Cell %s failed", task.label)
                yield task, None, exc
            else:
                yield task, outcome, None


def record_success(experiment, cell, records, start=0):
    with transaction.atomic():
        ResultRow.objects.bulk_create([
            ResultRow.from_record(record, experiment, cell, start + position)
            for position, record in enumerate(records)
        ])
        cell.status = SweepCell.Status.DONE
        cell.error = ''
        cell.finished_at = timezone.now()
        cell.save()


def record_failure(cell, error):
    cell.status = SweepCell.Status.FAILED
    cell.error = f"{type(error).__name__}: {error}"
    cell.finished_at = timezone.now()
    cell.save()


def _cell(experiment, scenario, n, seed):
    cell, _ = SweepCell.objects.get_or_create(experiment=experiment, scenario=scenario, n=n, seed=seed)
    return cell


def run_sweep(cfg, fresh=False):
    """
    Baseline plus every (scenario, n) cell for every seed.

    Completed cells of an earlier run under the same name are skipped; failed and
    pending ones are retried. Baselines are re-trained whenever one of their
    seed's perturbed cells still has to run, which is deterministic.
    """
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigurationError(f"sweep seeds must be distinct, got {list(cfg.seeds)}")
    dataset = cfg.dataset.load()
    check_baseline_identity(dataset)
    experiment = prepare_experiment(cfg, Experiment.Kind.SWEEP, dataset, fresh=fresh)
    settings = eval_settings(cfg)

    cells = {}
    for seed in cfg.seeds:
        cells[(BASELINE, 0, seed)] = _cell(experiment, BASELINE, 0, seed)
        for spec in cfg.perturbations():
            cells[(spec.scenario, spec.n, seed)] = _cell(experiment, spec.scenario, spec.n, seed)

    def pending(key):
        return cells[key].status != SweepCell.Status.DONE

    open_seeds = [seed for seed in cfg.seeds if any(pending(key) for key in cells if key[2] == seed)]
    done = len(cells) - sum(pending(key) for key in cells)
    logger.info(
        "Sweep %s: %d cells, %d already done, %d seed(s) to run",
        cfg.name, len(cells), done, len(open_seeds),
    )

    baselines = {}
    baseline_tasks = [
        CellTask(dataset=dataset, spec=PerturbationSpec(), model_config=cfg.model.with_seed(seed), settings=settings)
        for seed in open_seeds
    ]
    for task, outcome, error in execute(baseline_tasks, cfg.workers):
        seed = task.model_config.seed
        cell = cells[(BASELINE, 0, seed)]
        if error is not None:
            record_failure(cell, error)
            continue
        baselines[seed] = outcome.report
        if cell.status != SweepCell.Status.DONE:
            record_success(experiment, cell, outcome.records)

    tasks = []
    for seed in open_seeds:
        for spec in cfg.perturbations():
            key = (spec.scenario, spec.n, seed)
            if not pending(key):
                continue
            if seed not in baselines:
                record_failure(cells[key], RobustnessError(f"baseline for seed {seed} failed"))
                continue
            tasks.append(CellTask(
                dataset=dataset,
                spec=spec,
                model_config=cfg.model.with_seed(seed),
                settings=settings,
                baseline=baselines[seed],
            ))

    for task, outcome, error in execute(tasks, cfg.workers):
        cell = cells[(task.spec.scenario, task.spec.n, task.model_config.seed)]
        if error is not None:
            record_failure(cell, error)
        else:
            record_success(experiment, cell, outcome.records)

    failed = experiment.cells.filter(status=SweepCell.Status.FAILED).count()
    if failed:
        logger.warning("Sweep %s finished with %d failed cell(s)", cfg.name, failed)
    return sort_records(experiment.records())


def run_rq1(cfg):
    """
    Train the unperturbed model once per entry of ``cfg.seeds`` and compare every
    pair of runs. A seed may repeat; each run is keyed by its position.
    """
    if len(cfg.seeds) < 2:
        raise ConfigurationError("the seed-instability protocol needs at least two seeds")
    dataset = cfg.dataset.load()
    experiment = prepare_experiment(cfg, Experiment.Kind.RQ1, dataset, fresh=True)
    settings = eval_settings(cfg)

    cells = {run: _cell(experiment, BASELINE, run, seed) for run, seed in enumerate(cfg.seeds)}
    tasks = [
        CellTask(
            dataset=dataset,
            spec=PerturbationSpec(),
            model_config=cfg.model.with_seed(seed),
            settings=settings,
            run=run,
        )
        for run, seed in enumerate(cfg.seeds)
    ]
    reports = {}
    for task, outcome, error in execute(tasks, cfg.workers):
        if error is not None:
            record_failure(cells[task.run], error)
        else:
            reports[task.run] = outcome.report

    if len(reports) < 2:
        raise RobustnessError(f"only {len(reports)} seed run(s) succeeded; at least two are needed")

    records = seed_comparison_records(reports, settings)
    position = 0
    for run in sorted(reports):
        own = [record for record in records if record.n == run]
        record_success(experiment, cells[run], own, start=position)
        position += len(own)
    return sort_records(experiment.records())
