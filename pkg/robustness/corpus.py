"""
Interaction data: ingestion, filtering, leave-one-out splits and the three
positional removal operators.

Every dataset leaves this module with items re-indexed densely to 0..n_items-1 and
each user's interactions sorted by timestamp (ties keep file order).
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from django.db import models

from .exceptions import DatasetError, PerturbationError

logger = logging.getLogger(__name__)

MIN_SEQUENCE_LENGTH = 11
MAX_REMOVAL = 10

MOVIELENS_SEPARATORS = {
    'ml100k': '\t',
    'ml1m': '::',
}

# Raw check-in timestamps of the public Foursquare dumps
FOURSQUARE_TIME_FORMAT = '%a %b %d %H:%M:%S %z %Y'


class Scenario(models.TextChoices):
    BEGINNING = 'beginning', 'Beginning'
    MIDDLE = 'middle', 'Middle'
    END = 'end', 'End'


@dataclass(frozen=True)
class UserSequence:
    user_id: int
    items: tuple
    timestamps: tuple = None

    def __post_init__(self):
        if not self.items:
            raise DatasetError(f"user {self.user_id} has no interactions")
        if self.timestamps is not None:
            if len(self.timestamps) != len(self.items):
                raise DatasetError(f"user {self.user_id}: timestamps and items differ in length")
            if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
                raise DatasetError(f"user {self.user_id}: timestamps are not chronological")

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class Dataset:
    users: tuple
    n_items: int
    name: str = ''

    def __post_init__(self):
        user_ids = [user.user_id for user in self.users]
        if len(set(user_ids)) != len(user_ids):
            raise DatasetError(f"dataset {self.name!r} contains duplicate user ids")

    @property
    def n_interactions(self):
        return sum(len(user) for user in self.users)


@dataclass(frozen=True)
class DatasetStats:
    users: int
    items: int
    interactions: int
    mean_length: float
    median_length: float

    def __str__(self):
        return (
            f"{self.users} users, {self.items} items, {self.interactions} interactions, "
            f"{self.mean_length:.0f} mean / {self.median_length:.0f} median actions per user"
        )


@dataclass(frozen=True)
class PerturbationSpec:
    scenario: str = Scenario.END
    n: int = 0

    def __post_init__(self):
        if self.scenario not in Scenario.values:
            raise PerturbationError(f"unknown scenario {self.scenario!r}")
        if not 0 <= self.n <= MAX_REMOVAL:
            raise PerturbationError(f"removal count n={self.n} must lie in [0, {MAX_REMOVAL}]")

    @property
    def is_baseline(self):
        return self.n == 0


@dataclass(frozen=True)
class UserSplit:
    user_id: int
    train_items: tuple
    valid_target: int
    test_target: int
    test_context: tuple

    @property
    def items(self):
        """The full unperturbed sequence, test target included"""
        return self.test_context + (self.test_target,)


@dataclass(frozen=True)
class SplitDataset:
    users: tuple
    n_items: int
    name: str
    spec: PerturbationSpec

    def __len__(self):
        return len(self.users)


def dataset_stats(ds):
    lengths = np.array([len(user) for user in ds.users])
    return DatasetStats(
        users=len(ds.users),
        items=ds.n_items,
        interactions=int(lengths.sum()),
        mean_length=float(lengths.mean()),
        median_length=float(np.median(lengths)),
    )


def _build_dataset(frame, name):
    """Group a (user, item, timestamp, row) frame into a densely indexed Dataset"""
    if frame.empty:
        raise DatasetError(f"dataset {name!r} has no interactions")
    frame = frame.sort_values(['user', 'timestamp', 'row'], kind='stable')
    codes, _ = pd.factorize(frame['item'], sort=True)
    frame = frame.assign(item=codes)

    users = tuple(
        UserSequence(
            user_id=int(user_id),
            items=tuple(int(i) for i in group['item']),
            timestamps=tuple(int(t) for t in group['timestamp']),
        )
        for user_id, group in frame.groupby('user', sort=True)
    )
    ds = Dataset(users=users, n_items=int(codes.max()) + 1, name=name)
    logger.info("Loaded %s: %s", name, dataset_stats(ds))
    return ds


def _read_delimited(path, sep, encoding='utf-8'):
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path} does not exist")
    try:
        frame = pd.read_csv(
            path,
            sep=sep,
            header=None,
            dtype=str,
            engine='python' if len(sep) > 1 else 'c',
            encoding=encoding,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path} is empty") from None
    except pd.errors.ParserError as exc:
        raise DatasetError(f"{path}: {exc}") from None

    # with blank lines kept, row i of the frame is line i + 1 of the file
    frame.index = frame.index + 1
    frame = frame.dropna(how='all')
    if frame.empty:
        raise DatasetError(f"{path} is empty")
    return frame


def _integer_column(frame, column, label):
    values = pd.to_numeric(frame[column], errors='coerce')
    bad = values.isna() | (values != values.round())
    if bad.any():
        line = int(bad.idxmax())
        raise DatasetError(f"malformed {label} {frame.at[line, column]!r}", line=line)
    return values.astype('int64')


def _interaction_frame(frame, user_col, item_col, timestamps):
    return pd.DataFrame({
        'user': _integer_column(frame, user_col, 'user id'),
        'item': frame[item_col].str.strip(),
        'timestamp': timestamps,
        'row': frame.index,
    })


def parse_movielens(path, variant):
    """MovieLens ratings as implicit feedback; the rating column is discarded"""
    if variant not in MOVIELENS_SEPARATORS:
        raise DatasetError(f"unknown MovieLens variant {variant!r}")
    frame = _read_delimited(path, MOVIELENS_SEPARATORS[variant])
    if frame.shape[1] != 4:
        raise DatasetError(f"{path}: expected 4 columns (user item rating timestamp), found {frame.shape[1]}")

    incomplete = frame.isna().any(axis=1)
    if incomplete.any():
        raise DatasetError("expected 4 fields", line=int(incomplete.idxmax()))

    timestamps = _integer_column(frame, 3, 'timestamp')
    # item ids stay integers so dense re-indexing follows the numeric order
    items = _integer_column(frame, 1, 'item id')
    interactions = _interaction_frame(frame, 0, 1, timestamps).assign(item=items)
    return _build_dataset(interactions, name=variant)


def _foursquare_timestamps(frame, column):
    raw = frame[column].str.strip()
    numeric = pd.to_numeric(raw, errors='coerce')
    if numeric.notna().all():
        return numeric.astype('int64')

    parsed = pd.to_datetime(raw, format=FOURSQUARE_TIME_FORMAT, utc=True, errors='coerce')
    if parsed.isna().any():
        line = int(parsed.isna().idxmax())
        raise DatasetError(f"malformed timestamp {frame.at[line, column]!r}", line=line)
    return (parsed - pd.Timestamp(0, tz='UTC')) // pd.Timedelta(seconds=1)


def parse_foursquare(path, user_col=0, item_col=1, timestamp_col=-1, encoding='latin-1', name='foursquare'):
    """Foursquare check-ins (TSV); venue ids become items"""
    frame = _read_delimited(path, '\t', encoding=encoding)
    columns = list(frame.columns)
    try:
        user_col, item_col, timestamp_col = (columns[c] for c in (user_col, item_col, timestamp_col))
    except IndexError:
        raise DatasetError(f"{path}: only {len(columns)} columns present") from None

    incomplete = frame[[user_col, item_col, timestamp_col]].isna().any(axis=1)
    if incomplete.any():
        raise DatasetError("missing user, venue or timestamp", line=int(incomplete.idxmax()))

    timestamps = _foursquare_timestamps(frame, timestamp_col)
    interactions = _interaction_frame(frame, user_col, item_col, timestamps)
    return _build_dataset(interactions, name=name)


def read_canonical(path, name=None):
    """Read the canonical ``user_id,item_id,timestamp`` format"""
    frame = _read_delimited(path, ',')
    if frame.shape[1] != 3:
        raise DatasetError(f"{path}: expected user_id,item_id,timestamp rows, found {frame.shape[1]} columns")
    incomplete = frame.isna().any(axis=1)
    if incomplete.any():
        raise DatasetError("expected 3 fields", line=int(incomplete.idxmax()))
    interactions = pd.DataFrame({
        'user': _integer_column(frame, 0, 'user id'),
        'item': _integer_column(frame, 1, 'item id'),
        'timestamp': _integer_column(frame, 2, 'timestamp'),
        'row': frame.index,
    })
    return _build_dataset(interactions, name=name or Path(path).stem)


def write_canonical(ds, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='\n') as handle:
        for user in sorted(ds.users, key=lambda u: u.user_id):
            timestamps = user.timestamps if user.timestamps is not None else range(len(user))
            for item, timestamp in zip(user.items, timestamps):
                handle.write(f"{user.user_id},{item},{timestamp}\n")
    return path


def _reindex(users, name):
    live_items = sorted({item for user in users for item in user.items})
    mapping = {item: index for index, item in enumerate(live_items)}
    users = tuple(
        UserSequence(
            user_id=user.user_id,
            items=tuple(mapping[item] for item in user.items),
            timestamps=user.timestamps,
        )
        for user in users
    )
    return Dataset(users=users, n_items=len(live_items), name=name)


def filter_min_length(ds, min_len=MIN_SEQUENCE_LENGTH):
    """Drop users with fewer than ``min_len`` interactions and re-index the surviving items"""
    kept = [user for user in ds.users if len(user) >= min_len]
    if not kept:
        raise DatasetError(f"no user of {ds.name!r} has at least {min_len} interactions")

    filtered = _reindex(kept, ds.name)
    logger.info(
        "Filtered %s to L_u >= %d: %d of %d users kept; %s",
        ds.name, min_len, len(kept), len(ds.users), dataset_stats(filtered),
    )
    return filtered


def perturb(seq, spec):
    """
    Remove ``spec.n`` items from a training prefix at the scenario's position.

    Middle removal drops one contiguous block of exactly n items starting at the
    1-based index ⌊(m - n) / 2⌋ + 1, m being the prefix length.
    """
    seq = tuple(seq)
    n = spec.n
    if n >= len(seq):
        raise PerturbationError(
            f"removing {n} items from a training prefix of length {len(seq)} leaves nothing to train on"
        )
    if n == 0:
        return seq

    if spec.scenario == Scenario.BEGINNING:
        return seq[n:]
    if spec.scenario == Scenario.END:
        return seq[:len(seq) - n]
    start = (len(seq) - n) // 2
    return seq[:start] + seq[start + n:]


def split_leave_one_out(ds, spec):
    """Reserve each user's last item for testing and perturb the remaining training prefix"""
    users = []
    for user in ds.users:
        context = user.items[:-1]
        try:
            train_items = perturb(context, spec)
        except PerturbationError as exc:
            raise PerturbationError(f"user {user.user_id}: {exc}") from None
        users.append(UserSplit(
            user_id=user.user_id,
            train_items=train_items,
            valid_target=train_items[-1],
            test_target=user.items[-1],
            test_context=context,
        ))
    return SplitDataset(users=tuple(users), n_items=ds.n_items, name=ds.name, spec=spec)


def gen_synthetic(n_users, n_items, seq_len_range, n_phases, drift, seed, cluster_size=10, name='synthetic'):
    """
    Users whose interests drift through ``n_phases`` consecutive phases.

    The catalogue is cut into one block per phase and each block into clusters of
    about ``cluster_size`` items. In phase j a user draws from one cluster of block j
    with probability 1 - drift * u (u uniform per phase), otherwise from the whole
    catalogue, so the latest phase carries the signal for the held-out item.
    """
    min_len, max_len = seq_len_range
    if n_users < 1 or n_phases < 1:
        raise DatasetError("gen_synthetic needs at least one user and one phase")
    if n_items < 2 * n_phases:
        raise DatasetError(f"n_items={n_items} must be at least twice n_phases={n_phases}")
    if min_len <= 10 or max_len < min_len:
        raise DatasetError(f"sequence lengths {seq_len_range} must satisfy 10 < min <= max")
    if not 0.0 <= drift <= 1.0:
        raise DatasetError(f"drift={drift} must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    blocks = np.array_split(np.arange(n_items), n_phases)
    clusters = [np.array_split(block, max(1, len(block) // cluster_size)) for block in blocks]

    users = []
    for user_id in range(n_users):
        length = int(rng.integers(min_len, max_len + 1))
        items = []
        for phase, positions in enumerate(np.array_split(np.arange(length), n_phases)):
            cluster = clusters[phase][rng.integers(len(clusters[phase]))]
            keep_probability = 1.0 - drift * rng.random()
            from_cluster = rng.random(len(positions)) < keep_probability
            preferred = rng.choice(cluster, size=len(positions))
            anywhere = rng.integers(0, n_items, size=len(positions))
            items.extend(np.where(from_cluster, preferred, anywhere).tolist())
        users.append(UserSequence(
            user_id=user_id,
            items=tuple(items),
            timestamps=tuple(range(length)),
        ))
    return _reindex(users, name)


class DatasetSourceKind(models.TextChoices):
    ML100K = 'ml100k', 'MovieLens 100K'
    ML1M = 'ml1m', 'MovieLens 1M'
    FOURSQUARE = 'foursquare', 'Foursquare check-ins'
    CANONICAL = 'canonical', 'Canonical user,item,timestamp file'
    SYNTHETIC = 'synthetic', 'Synthetic interest drift'


def load_dataset(source):
    """Build and length-filter the Dataset an experiment's ``dataset`` section describes"""
    kind = source.source
    if kind in MOVIELENS_SEPARATORS:
        ds = parse_movielens(source.path, kind)
    elif kind == DatasetSourceKind.FOURSQUARE:
        columns = source.columns
        ds = parse_foursquare(
            source.path,
            user_col=columns.user,
            item_col=columns.item,
            timestamp_col=columns.timestamp,
            encoding=source.encoding,
        )
    elif kind == DatasetSourceKind.CANONICAL:
        ds = read_canonical(source.path)
    elif kind == DatasetSourceKind.SYNTHETIC:
        synthetic = source.synthetic
        ds = gen_synthetic(
            n_users=synthetic.n_users,
            n_items=synthetic.n_items,
            seq_len_range=(synthetic.seq_len_min, synthetic.seq_len_max),
            n_phases=synthetic.n_phases,
            drift=synthetic.drift,
            seed=synthetic.seed,
            cluster_size=synthetic.cluster_size,
        )
    else:
        raise DatasetError(f"unknown dataset source {kind!r}")
    return filter_min_length(ds, source.min_length)
