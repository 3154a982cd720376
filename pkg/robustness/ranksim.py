"""
Ranking similarities for comparing top-k recommendation lists.

Truncated rank-biased overlap never reaches 1 for two identical finite lists, and
never reaches 0 for two lists drawn from a small item universe. The finite variant
(FRBO) rescales RBO@k with its exact minimum and maximum so identical lists score 1
and the most dissimilar achievable lists score 0.

Every function here is pure; rankings are plain sequences of integer item ids.
"""
import math
from dataclasses import dataclass, replace
from pathlib import Path

from django.db import models

from .exceptions import DomainError, MalformedRankingError


class SimilarityKind(models.TextChoices):
    JAC = 'jac', 'Jaccard'
    RBO = 'rbo', 'RBO@k'
    FRBO_FULL = 'frbo_full', 'FRBO@k (min/max normalised)'
    FRBO_SIMPLE = 'frbo_simple', 'FRBO@k (max normalised)'


LERCH_TOLERANCE = 1e-14


@dataclass(frozen=True)
class SimilarityConfig:
    n_items: int
    p: float = 0.9
    k: int = 20
    kind: str = SimilarityKind.FRBO_SIMPLE

    def __post_init__(self):
        _check_persistence(self.p)
        if not 1 <= self.k <= self.n_items:
            raise DomainError(f"cut-off k={self.k} must lie in [1, n_items={self.n_items}]")
        if self.kind not in SimilarityKind.values:
            raise DomainError(f"unknown similarity kind {self.kind!r}")

    def with_kind(self, kind):
        return replace(self, kind=kind)


@dataclass(frozen=True)
class RankingListPair:
    """Baseline and perturbed rankings, aligned so position i is the same user"""
    baseline: tuple
    perturbed: tuple

    def __post_init__(self):
        if not self.baseline or not self.perturbed:
            raise MalformedRankingError("ranking lists must be non-empty")
        if len(self.baseline) != len(self.perturbed):
            raise MalformedRankingError(
                f"ranking lists are misaligned: {len(self.baseline)} vs {len(self.perturbed)} users"
            )


@dataclass(frozen=True)
class RlsResult:
    mean: float
    values: tuple


def _check_persistence(p):
    if not 0.0 < p < 1.0:
        raise DomainError(f"persistence p={p} must lie strictly between 0 and 1")


def _check_distinct(ranking):
    if len(set(ranking)) != len(ranking):
        raise MalformedRankingError("a ranking must not contain duplicate items")


def jaccard(x, y):
    """Intersection over union of the item sets; two empty rankings count as identical"""
    set_x, set_y = set(x), set(y)
    union = set_x | set_y
    if not union:
        return 1.0
    return len(set_x & set_y) / len(union)


def prefix_overlaps(x, y):
    """Yield |x[1:d] ∩ y[1:d]| for d = 1..k, updating the overlap incrementally"""
    seen_x, seen_y = set(), set()
    overlap = 0
    for a, b in zip(x, y):
        if a == b:
            overlap += 1
        else:
            if a in seen_y:
                overlap += 1
            if b in seen_x:
                overlap += 1
        seen_x.add(a)
        seen_y.add(b)
        yield overlap


def rbo_at_k(x, y, p):
    """RBO truncated at k = len(x) = len(y)"""
    if len(x) != len(y):
        raise MalformedRankingError(f"rankings of different length: {len(x)} vs {len(y)}")
    _check_persistence(p)
    _check_distinct(x)
    _check_distinct(y)
    terms = (p ** d * overlap / (d + 1) for d, overlap in enumerate(prefix_overlaps(x, y)))
    return (1.0 - p) * math.fsum(terms)


def max_rbo(p, k):
    """Largest RBO@k over all ranking pairs, attained by identical rankings"""
    _check_persistence(p)
    return 1.0 - p ** k


def lerch_phi(z, s, alpha, tol=LERCH_TOLERANCE):
    """
    Lerch transcendent Φ(z, s, α) = Σ_{n≥0} z^n / (n + α)^s for 0 < z < 1.

    Summation stops once the geometric tail bound
    z^{n+1} / ((n + 1 + α)^s (1 - z)) drops below ``tol``.
    """
    if not 0.0 < z < 1.0:
        raise DomainError(f"lerch_phi needs 0 < z < 1, got z={z}")
    if s <= 0 or alpha <= 0:
        raise DomainError(f"lerch_phi needs s > 0 and alpha > 0, got s={s}, alpha={alpha}")

    terms = []
    n = 0
    while True:
        terms.append(z ** n / (n + alpha) ** s)
        tail = z ** (n + 1) / ((n + 1 + alpha) ** s * (1.0 - z))
        if tail < tol:
            break
        n += 1
    return math.fsum(terms)


def min_rbo(p, k, n_items):
    """
    Smallest RBO@k over all ranking pairs drawn from ``n_items`` items.

    Zero while two disjoint rankings fit in the universe. Past that point every depth
    d > ⌊N/2⌋ shares at least 2d - N items, and the sum of those forced overlaps has a
    closed form in terms of the Lerch transcendent. The closed form sums all the way
    to N, so it only depends on k through the branch condition.
    """
    _check_persistence(p)
    if k < 1 or k > n_items:
        raise DomainError(f"cut-off k={k} must lie in [1, n_items={n_items}]")

    half = n_items // 2
    if k <= half:
        return 0.0
    ell = p ** half * lerch_phi(p, 1, half + 1) - p ** n_items * lerch_phi(p, 1, n_items + 1)
    return (1.0 - p) * (2.0 * (p ** half - p ** n_items) / (1.0 - p) - n_items * ell)


def frbo_at_k(x, y, cfg):
    if len(x) != cfg.k or len(y) != cfg.k:
        raise MalformedRankingError(
            f"rankings must have length k={cfg.k}, got {len(x)} and {len(y)}"
        )
    rbo = rbo_at_k(x, y, cfg.p)
    upper = max_rbo(cfg.p, cfg.k)

    if cfg.kind == SimilarityKind.FRBO_SIMPLE:
        return rbo / upper
    if cfg.kind != SimilarityKind.FRBO_FULL:
        raise DomainError(f"frbo_at_k does not compute {cfg.kind!r}")

    lower = min_rbo(cfg.p, cfg.k, cfg.n_items)
    if upper - lower <= 0.0:
        raise DomainError(
            f"FRBO is undefined when min and max RBO coincide (k={cfg.k}, n_items={cfg.n_items})"
        )
    return (rbo - lower) / (upper - lower)


def similarity(x, y, cfg):
    if cfg.kind == SimilarityKind.JAC:
        return jaccard(x, y)
    if cfg.kind == SimilarityKind.RBO:
        return rbo_at_k(x, y, cfg.p)
    return frbo_at_k(x, y, cfg)


def rls(pair, cfg):
    """Rank list sensitivity: mean similarity of aligned ranking pairs, plus the per-user values"""
    values = tuple(similarity(x, y, cfg) for x, y in zip(pair.baseline, pair.perturbed))
    return RlsResult(mean=math.fsum(values) / len(values), values=values)


def read_ranking(path):
    """One item id per line; blank lines are ignored"""
    items = []
    for line_number, line in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            items.append(int(line))
        except ValueError:
            raise MalformedRankingError(f"{path}, line {line_number}: not an item id: {line!r}") from None
    if not items:
        raise MalformedRankingError(f"{path}: empty ranking")
    _check_distinct(items)
    return tuple(items)
