"""
Experiment configuration: a YAML file validated into dataclasses, with
command-line overrides applied on top.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml
from django.conf import settings

from .corpus import MAX_REMOVAL, MIN_SEQUENCE_LENGTH, DatasetSourceKind, PerturbationSpec, Scenario, load_dataset
from .exceptions import ConfigurationError, RobustnessError
from .recommenders import RecommenderConfig
from .ranksim import SimilarityConfig


@dataclass(frozen=True)
class ColumnsConfig:
    user: int = 0
    item: int = 1
    timestamp: int = -1


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 500
    n_items: int = 200
    seq_len_min: int = 20
    seq_len_max: int = 60
    n_phases: int = 4
    drift: float = 0.2
    seed: int = 0
    cluster_size: int = 10


@dataclass(frozen=True)
class DatasetSource:
    source: str = DatasetSourceKind.SYNTHETIC
    path: str = None
    min_length: int = MIN_SEQUENCE_LENGTH
    columns: ColumnsConfig = field(default_factory=ColumnsConfig)
    encoding: str = 'latin-1'
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        if self.source not in DatasetSourceKind.values:
            raise ConfigurationError(
                f"dataset.source must be one of {', '.join(DatasetSourceKind.values)}, got {self.source!r}"
            )
        if self.source != DatasetSourceKind.SYNTHETIC and not self.path:
            raise ConfigurationError(f"dataset.path is required for source {self.source!r}")

    @property
    def resolved_path(self):
        path = Path(self.path)
        if not path.is_absolute() and not path.exists():
            path = Path(settings.DATA_ROOT) / path
        return path

    def load(self):
        if self.source == DatasetSourceKind.SYNTHETIC:
            return load_dataset(self)
        return load_dataset(replace(self, path=str(self.resolved_path)))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSource
    model: RecommenderConfig
    p: float
    k: int
    scenarios: tuple
    n_values: tuple
    seeds: tuple
    eval_seed: int = 0
    eval_negatives: int = 100
    significance: float = 1e-3
    output_dir: str = None
    workers: int = 1

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigurationError("at least one scenario is required")
        if not self.n_values:
            raise ConfigurationError("at least one removal count is required")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        unknown = [s for s in self.scenarios if s not in Scenario.values]
        if unknown:
            raise ConfigurationError(f"unknown scenario(s): {', '.join(map(str, unknown))}")
        out_of_range = [n for n in self.n_values if not 1 <= n <= MAX_REMOVAL]
        if out_of_range:
            raise ConfigurationError(f"n_values must lie in 1..{MAX_REMOVAL}, got {out_of_range}")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    def similarity(self, n_items):
        return SimilarityConfig(n_items=n_items, p=self.p, k=self.k)

    def perturbations(self):
        """Every perturbed (scenario, n) cell of the grid, in a fixed order"""
        return [PerturbationSpec(scenario=s, n=n) for s in self.scenarios for n in self.n_values]

    @property
    def results_dir(self):
        return Path(self.output_dir or Path(settings.RESULTS_ROOT) / self.name)

    def as_dict(self):
        """Plain JSON-ready form, stored alongside the experiment's results"""
        data = asdict(self)
        data['scenarios'] = [str(s) for s in self.scenarios]
        data['n_values'] = list(self.n_values)
        data['seeds'] = list(self.seeds)
        return data


MODEL_KEYS = {
    'kind': 'model_kind',
    'embedding_dim': 'embedding_dim',
    'window': 'window',
    'decay': 'decay',
    'lr': 'lr',
    'n_negatives_train': 'n_negatives_train',
    'max_epochs': 'max_epochs',
    'patience': 'patience',
    'batch_size': 'batch_size',
    'optimizer': 'optimizer',
    'valid_seed': 'valid_seed',
    'valid_negatives': 'valid_negatives',
}
TOP_LEVEL_KEYS = {
    'name', 'dataset', 'model', 'similarity', 'scenarios', 'n_values', 'seeds',
    'eval_seed', 'eval_negatives', 'output_dir', 'workers',
}


def _check_keys(section, allowed, prefix):
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigurationError(f"{prefix or 'configuration'} must be a mapping")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        dotted = ', '.join(f"{prefix}.{key}" if prefix else key for key in unknown)
        raise ConfigurationError(f"unknown configuration key(s): {dotted}")
    return section


def _section(cls, data, prefix):
    names = {f.name for f in fields(cls)}
    return cls(**_check_keys(data, names, prefix))


def _as_tuple(value, key):
    if value is None:
        return None
    if isinstance(value, (int, str)):
        return (value,)
    if not isinstance(value, (list, tuple)):
        raise ConfigurationError(f"{key} must be a list")
    return tuple(value)


def apply_overrides(data, overrides):
    """Set dotted keys (``model.lr``) on a nested mapping; ``None`` values are skipped"""
    data = dict(data)
    for dotted, value in overrides.items():
        if value is None:
            continue
        keys = dotted.split('.')
        target = data
        for key in keys[:-1]:
            nested = target.get(key)
            target[key] = dict(nested) if isinstance(nested, dict) else {}
            target = target[key]
        target[keys[-1]] = value
    return data


def parse_override(text):
    """``key.path=value`` with the value parsed as YAML"""
    key, sep, value = text.partition('=')
    if not sep or not key.strip():
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    return key.strip(), yaml.safe_load(value)


def build_config(data):
    data = _check_keys(data, TOP_LEVEL_KEYS, '')
    if not data.get('name'):
        raise ConfigurationError("an experiment needs a name")

    dataset = dict(_check_keys(data.get('dataset'), {f.name for f in fields(DatasetSource)}, 'dataset'))
    if 'columns' in dataset:
        dataset['columns'] = _section(ColumnsConfig, dataset['columns'], 'dataset.columns')
    if 'synthetic' in dataset:
        dataset['synthetic'] = _section(SyntheticConfig, dataset['synthetic'], 'dataset.synthetic')

    model = _check_keys(data.get('model'), MODEL_KEYS, 'model')
    similarity = _check_keys(data.get('similarity'), {'p', 'k'}, 'similarity')

    try:
        return ExperimentConfig(
            name=str(data['name']),
            dataset=DatasetSource(**dataset),
            model=RecommenderConfig(**{MODEL_KEYS[key]: value for key, value in model.items()}),
            p=float(similarity.get('p', settings.RLS_PERSISTENCE)),
            k=int(similarity.get('k', settings.RANK_CUTOFF)),
            scenarios=_as_tuple(data.get('scenarios'), 'scenarios') or tuple(Scenario.values),
            n_values=_as_tuple(data.get('n_values'), 'n_values') or tuple(range(1, MAX_REMOVAL + 1)),
            seeds=_as_tuple(data.get('seeds'), 'seeds') or (0, 1),
            eval_seed=int(data.get('eval_seed', 0)),
            eval_negatives=int(data.get('eval_negatives', settings.EVAL_NEGATIVES)),
            significance=settings.SIGNIFICANCE_LEVEL,
            output_dir=data.get('output_dir'),
            workers=int(data.get('workers', settings.SWEEP_WORKERS)),
        )
    except ConfigurationError:
        raise
    except (RobustnessError, TypeError) as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(path, overrides=None):
    path = Path(path)
    try:
        with path.open(encoding='utf-8') as handle:
            data = yaml.safe_load(handle) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping at top level")
    data.setdefault('name', path.stem)
    return build_config(apply_overrides(data, overrides or {}))
