"""
Result rows and their file formats: one CSV per experiment and plot-ready
``n value`` series per (metric, scenario).
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
from django.db import models
from django.utils.text import slugify

from .exceptions import DatasetError, OutputError

logger = logging.getLogger(__name__)

BASELINE = 'baseline'
CSV_COLUMNS = ['dataset', 'model', 'scenario', 'n', 'seed', 'metric', 'value', 'p_value', 'significant']
SCENARIO_ORDER = {BASELINE: 0, 'beginning': 1, 'middle': 2, 'end': 3}


class ReportFormat(models.TextChoices):
    CSV = 'csv', 'CSV'
    PLOTDATA = 'plotdata', 'Plot data'


@dataclass(frozen=True)
class ResultRecord:
    dataset: str
    model: str
    scenario: str
    n: int
    seed: int
    metric: str
    value: float
    p_value: float = None
    significant: bool = None

    @property
    def key(self):
        return (self.dataset, self.model, self.scenario, self.n, self.seed, self.metric)


def format_number(value):
    if value is None:
        return ''
    if math.isnan(value):
        return 'nan'
    return f"{value:.6g}"


def format_flag(flag):
    if flag is None:
        return ''
    return 'true' if flag else 'false'


def _check_unique(records):
    seen = set()
    for record in records:
        if record.key in seen:
            raise OutputError(f"duplicate result row for {record.key}")
        seen.add(record.key)


def write_csv(records, path):
    path = Path(path)
    _check_unique(records)
    frame = pd.DataFrame(
        [
            [
                r.dataset, r.model, r.scenario, str(r.n), str(r.seed), r.metric,
                format_number(r.value), format_number(r.p_value), format_flag(r.significant),
            ]
            for r in records
        ],
        columns=CSV_COLUMNS,
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


def _parse_flag(text):
    return {'': None, 'true': True, 'false': False}[text]


def read_csv(path):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetError(f"cannot read results from {path}: {exc}") from None
    if list(frame.columns) != CSV_COLUMNS:
        raise DatasetError(f"{path}: unexpected header {','.join(frame.columns)}")
    return [
        ResultRecord(
            dataset=row.dataset,
            model=row.model,
            scenario=row.scenario,
            n=int(row.n),
            seed=int(row.seed),
            metric=row.metric,
            value=float(row.value),
            p_value=float(row.p_value) if row.p_value else None,
            significant=_parse_flag(row.significant),
        )
        for row in frame.itertuples(index=False)
    ]


def plot_series(records):
    """
    Group records into ``{(dataset, model, metric, scenario): {seed: [(n, value), ...]}}``.

    Baseline records become a constant series over the removal counts present in
    the perturbed records of the same metric, drawn as a horizontal line.
    """
    series = defaultdict(lambda: defaultdict(list))
    n_values = defaultdict(set)
    for r in records:
        if r.scenario != BASELINE:
            series[(r.dataset, r.model, r.metric, r.scenario)][r.seed].append((r.n, r.value))
            n_values[(r.dataset, r.model, r.metric)].add(r.n)

    for r in records:
        if r.scenario == BASELINE and r.n == 0:
            for n in sorted(n_values.get((r.dataset, r.model, r.metric), ())):
                series[(r.dataset, r.model, r.metric, BASELINE)][r.seed].append((n, r.value))

    return {
        key: {seed: sorted(points) for seed, points in sorted(by_seed.items())}
        for key, by_seed in series.items()
    }


def plot_filename(dataset, model, metric, scenario):
    return '_'.join(slugify(part) for part in (dataset, model, metric, scenario)) + '.dat'


def write_plotdata(records, output_dir):
    output_dir = Path(output_dir)
    paths = []
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        for (dataset, model, metric, scenario), by_seed in sorted(plot_series(records).items()):
            path = output_dir / plot_filename(dataset, model, metric, scenario)
            with path.open('w', encoding='utf-8', newline='\n') as handle:
                handle.write(f"# {dataset} {model} {metric} {scenario}\n")
                blocks = []
                for seed, points in by_seed.items():
                    lines = [f"# seed {seed}"] + [f"{n} {format_number(value)}" for n, value in points]
                    blocks.append('\n'.join(lines) + '\n')
                # blank lines separate seeds so gnuplot can address them with ``index``
                handle.write('\n\n'.join(blocks))
            paths.append(path)
    except OSError as exc:
        raise OutputError(f"cannot write plot data to {output_dir}: {exc.strerror or exc}") from None
    return paths


def emit_report(records, fmt, output_dir, name='results'):
    """Write ``records`` in the requested format below ``output_dir`` and return the written paths"""
    records = list(records)
    if not records:
        raise OutputError("no result rows to report")
    if fmt == ReportFormat.CSV:
        paths = [write_csv(records, Path(output_dir) / f"{name}.csv")]
    elif fmt == ReportFormat.PLOTDATA:
        paths = write_plotdata(records, Path(output_dir) / 'plotdata')
    else:
        raise OutputError(f"unknown report format {fmt!r}")
    logger.info("Wrote %d %s file(s) to %s", len(paths), fmt, output_dir)
    return paths


def sort_records(records):
    """Canonical order: baseline first, then scenarios in sequence order, by n and seed"""
    return sorted(
        records,
        key=lambda r: (r.dataset, r.model, SCENARIO_ORDER.get(r.scenario, len(SCENARIO_ORDER)), r.scenario, r.n, r.seed),
    )
