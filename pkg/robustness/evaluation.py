"""
Sampled top-k evaluation, rank list sensitivity reports and paired significance tests.

Each test user's held-out item is ranked against a fixed sample of negatives that
depends only on (user, eval_seed), so two runs evaluated with the same eval seed
see identical candidate sets and their rankings can be compared position by position.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.db import models
from scipy.special import betaln

from .exceptions import DatasetError, DegenerateTestError, DomainError, MalformedRankingError
from .ranksim import RankingListPair, SimilarityKind, rls
from .recommenders import rank_order

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 20
DEFAULT_NEGATIVES = 100
DEFAULT_SIGNIFICANCE = 1e-3
BETA_CF_TOLERANCE = 1e-12
BETA_CF_MAX_ITERATIONS = 10_000
_TINY = 1e-300


class Metric(models.TextChoices):
    PRECISION = 'precision', 'Precision'
    RECALL = 'recall', 'Recall'
    MRR = 'mrr', 'MRR'
    NDCG = 'ndcg', 'NDCG'


@dataclass(frozen=True)
class MetricValues:
    precision: float
    recall: float
    mrr: float
    ndcg: float


@dataclass
class EvalReport:
    dataset: str
    model: str
    scenario: str
    n: int
    seed: int
    k: int
    eval_seed: int
    user_ids: tuple
    ranks: np.ndarray
    per_user: dict
    rankings: tuple = field(repr=False, default=())

    def mean(self, metric):
        # fixed user-id order keeps the reduction reproducible
        return math.fsum(self.per_user[metric]) / len(self.user_ids)

    @property
    def means(self):
        return {metric: self.mean(metric) for metric in Metric.values}


@dataclass
class RlsReport:
    dataset: str
    model: str
    scenario: str
    n: int
    seed: int
    baseline_seed: int
    results: dict

    def mean(self, kind):
        return self.results[kind].mean


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_value: float
    significant: bool


def sample_negatives(user, n_items, count=DEFAULT_NEGATIVES, eval_seed=0):
    """``count`` distinct items the user never interacted with, fixed per (user, eval_seed)"""
    eligible = np.setdiff1d(np.arange(n_items), np.asarray(user.items, dtype=np.int64))
    if len(eligible) < count:
        raise DatasetError(
            f"user {user.user_id}: only {len(eligible)} unseen items, cannot sample {count} negatives"
        )
    rng = np.random.default_rng([eval_seed, user.user_id])
    return tuple(int(item) for item in rng.choice(eligible, size=count, replace=False))


def metric_at_k(rank, k):
    if rank < 1:
        raise DomainError(f"rank must be at least 1, got {rank}")
    if rank > k:
        return MetricValues(0.0, 0.0, 0.0, 0.0)
    return MetricValues(1.0 / k, 1.0, 1.0 / rank, 1.0 / math.log2(rank + 1))


def ndcg_at_k(ranks, k):
    ranks = np.asarray(ranks, dtype=np.float64)
    return np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)


def metrics_at_k(ranks, k):
    """Per-user metric arrays for an array of positive ranks"""
    ranks = np.asarray(ranks, dtype=np.float64)
    hit = (ranks <= k).astype(np.float64)
    return {
        Metric.PRECISION: hit / k,
        Metric.RECALL: hit,
        Metric.MRR: hit / ranks,
        Metric.NDCG: ndcg_at_k(ranks, k),
    }


def evaluate(model, split, k=DEFAULT_CUTOFF, eval_seed=0, n_negatives=DEFAULT_NEGATIVES):
    users = sorted(split.users, key=lambda u: u.user_id)
    ranks = np.empty(len(users), dtype=np.int64)
    rankings = []
    for index, user in enumerate(users):
        negatives = sample_negatives(user, split.n_items, n_negatives, eval_seed)
        candidates = np.asarray((user.test_target,) + negatives, dtype=np.int64)
        scores = model.score(user.test_context, candidates)
        order = rank_order(scores, candidates)
        ranks[index] = int(np.flatnonzero(order == 0)[0]) + 1
        rankings.append(tuple(int(item) for item in candidates[order[:k]]))

    report = EvalReport(
        dataset=split.name,
        model=str(model.kind),
        scenario=str(split.spec.scenario),
        n=split.spec.n,
        seed=model.config.seed,
        k=k,
        eval_seed=eval_seed,
        user_ids=tuple(user.user_id for user in users),
        ranks=ranks,
        per_user={str(metric): values for metric, values in metrics_at_k(ranks, k).items()},
        rankings=tuple(rankings),
    )
    logger.debug(
        "Evaluated %s/%s %s n=%d seed %d: NDCG@%d %.5f",
        report.dataset, report.model, report.scenario, report.n, report.seed, k, report.mean(Metric.NDCG),
    )
    return report


def rls_report(baseline, perturbed, cfg, kinds=(SimilarityKind.JAC, SimilarityKind.FRBO_SIMPLE)):
    """Compare the rankings of two evaluations that share users and eval seed"""
    if baseline.user_ids != perturbed.user_ids:
        raise MalformedRankingError("baseline and perturbed evaluations cover different users")
    if baseline.eval_seed != perturbed.eval_seed:
        raise MalformedRankingError(
            f"evaluations used different negative samples (eval seeds {baseline.eval_seed} and {perturbed.eval_seed})"
        )
    pair = RankingListPair(baseline=baseline.rankings, perturbed=perturbed.rankings)
    return RlsReport(
        dataset=perturbed.dataset,
        model=perturbed.model,
        scenario=perturbed.scenario,
        n=perturbed.n,
        seed=perturbed.seed,
        baseline_seed=baseline.seed,
        results={str(kind): rls(pair, cfg.with_kind(kind)) for kind in kinds},
    )


def _beta_continued_fraction(a, b, x, tol=BETA_CF_TOLERANCE):
    """Continued fraction of the incomplete beta function, evaluated with the modified Lentz method"""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETA_CF_MAX_ITERATIONS + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise DomainError(f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def incomplete_beta(a, b, x):
    """Regularised incomplete beta I_x(a, b)"""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"incomplete beta needs 0 <= x <= 1, got {x}")
    if a <= 0 or b <= 0:
        raise DomainError(f"incomplete beta needs a, b > 0, got a={a}, b={b}")
    if x == 0.0 or x == 1.0:
        return x
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - betaln(a, b))
    # the fraction converges fastest below the mean of the beta distribution
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided(t, df):
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b, alpha=DEFAULT_SIGNIFICANCE):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DegenerateTestError(f"paired samples differ in size: {a.shape} vs {b.shape}")
    if a.ndim != 1 or len(a) < 2:
        raise DegenerateTestError("a paired t-test needs at least two pairs")

    diff = a - b
    if np.ptp(diff) == 0.0:
        raise DegenerateTestError("all paired differences are identical; the t statistic is undefined")
    sd = diff.std(ddof=1)
    n = len(diff)
    t = float(diff.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p_value = min(1.0, max(0.0, student_t_two_sided(t, df)))
    return TTestResult(t=t, df=df, p_value=p_value, significant=p_value < alpha)


def percentage_variation(perturbed, baseline):
    """100 * (perturbed - baseline) / baseline; NaN when the baseline is zero"""
    if baseline == 0:
        return math.nan
    return 100.0 * (perturbed - baseline) / baseline
