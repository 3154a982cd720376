"""
Next-item recommenders trained on a SplitDataset.

Three reference models share the ``Recommender`` interface:

- ``PopularityModel``: item frequencies, context is ignored.
- ``MarkovModel``: first-order transitions with Laplace smoothing.
- ``EmbeddingSeqModel``: input/output item embeddings; the context is a
  recency-decayed mean of the last ``window`` input embeddings, trained with a
  sampled-softmax cross-entropy and early stopping on validation NDCG@20.
"""
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from django.db import models
from scipy import sparse

from .exceptions import ModelError

logger = logging.getLogger(__name__)

LAPLACE_ALPHA = 1.0
INIT_STD = 0.01
MODEL_FORMAT_VERSION = 1


class ModelKind(models.TextChoices):
    POPULARITY = 'popularity', 'Popularity'
    MARKOV = 'markov', 'First-order Markov'
    EMBEDDING_SEQ = 'embedding_seq', 'Embedding sequence model'


class Optimizer(models.TextChoices):
    SGD = 'sgd', 'SGD'
    ADAM = 'adam', 'Adam'


@dataclass(frozen=True)
class RecommenderConfig:
    model_kind: str = ModelKind.EMBEDDING_SEQ
    embedding_dim: int = 64
    window: int = 10
    decay: float = 0.8
    lr: float = 5e-4
    n_negatives_train: int = 100
    max_epochs: int = 300
    patience: int = 50
    seed: int = 0
    batch_size: int = 1
    optimizer: str = Optimizer.SGD
    valid_seed: int = 0
    valid_negatives: int = 100
    valid_k: int = 20

    def __post_init__(self):
        if self.model_kind not in ModelKind.values:
            raise ModelError(f"unknown model kind {self.model_kind!r}")
        if self.optimizer not in Optimizer.values:
            raise ModelError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0:
            raise ModelError(f"learning rate must be positive, got {self.lr}")
        if self.patience >= self.max_epochs:
            raise ModelError(f"patience={self.patience} must be smaller than max_epochs={self.max_epochs}")
        if self.embedding_dim < 1 or self.window < 1 or self.batch_size < 1:
            raise ModelError("embedding_dim, window and batch_size must be at least 1")
        if not 0.0 < self.decay <= 1.0:
            raise ModelError(f"decay must lie in (0, 1], got {self.decay}")
        if self.n_negatives_train < 1:
            raise ModelError("n_negatives_train must be at least 1")

    def with_seed(self, seed):
        return RecommenderConfig(**{**asdict(self), 'seed': seed})


@dataclass
class TrainingSummary:
    seed: int
    epochs_run: int = 0
    best_epoch: int = 0
    best_valid_ndcg: float = None
    valid_curve: list = field(default_factory=list)
    loss_curve: list = field(default_factory=list)


class Recommender(ABC):
    kind = None

    def __init__(self, n_items, config, summary=None):
        self.n_items = n_items
        self.config = config
        self.summary = summary or TrainingSummary(seed=config.seed)

    def _check_items(self, items, label):
        items = np.asarray(items, dtype=np.int64)
        if items.ndim != 1 or items.size == 0:
            raise ModelError(f"{label} list must not be empty")
        if items.min() < 0 or items.max() >= self.n_items:
            unknown = items[(items < 0) | (items >= self.n_items)][0]
            raise ModelError(f"unknown {label} id {unknown} (catalogue has {self.n_items} items)")
        return items

    def score(self, context, candidates):
        """One finite score per candidate; higher means more likely next"""
        context = self._check_items(context, 'context')
        candidates = self._check_items(candidates, 'candidate')
        return self._score(context, candidates)

    @abstractmethod
    def _score(self, context, candidates):
        ...

    def arrays(self):
        return {}


class PopularityModel(Recommender):
    kind = ModelKind.POPULARITY

    def __init__(self, n_items, config, counts, summary=None):
        super().__init__(n_items, config, summary)
        self.counts = counts

    @classmethod
    def train(cls, split, cfg):
        items = np.concatenate([np.asarray(u.train_items, dtype=np.int64) for u in split.users])
        return cls(split.n_items, cfg, np.bincount(items, minlength=split.n_items).astype(np.float64))

    def _score(self, context, candidates):
        return self.counts[candidates]

    def arrays(self):
        return {'counts': self.counts}


class MarkovModel(Recommender):
    kind = ModelKind.MARKOV

    def __init__(self, n_items, config, transitions, summary=None):
        super().__init__(n_items, config, summary)
        self.transitions = transitions.tocsr()
        self.row_sums = np.asarray(self.transitions.sum(axis=1)).ravel()

    @classmethod
    def train(cls, split, cfg):
        sources, targets = [], []
        for user in split.users:
            seq = np.asarray(user.train_items, dtype=np.int64)
            sources.append(seq[:-1])
            targets.append(seq[1:])
        sources = np.concatenate(sources)
        targets = np.concatenate(targets)
        # duplicate (i, j) pairs are summed on conversion
        counts = sparse.coo_matrix(
            (np.ones(len(sources)), (sources, targets)),
            shape=(split.n_items, split.n_items),
        )
        return cls(split.n_items, cfg, counts)

    def transition_count(self, source, target):
        return self.transitions[source, target]

    def transition_probabilities(self, source):
        row = self.transitions[source].toarray().ravel()
        return (row + LAPLACE_ALPHA) / (self.row_sums[source] + LAPLACE_ALPHA * self.n_items)

    def _score(self, context, candidates):
        last = context[-1]
        counts = self.transitions[last, candidates].toarray().ravel()
        return (counts + LAPLACE_ALPHA) / (self.row_sums[last] + LAPLACE_ALPHA * self.n_items)

    def arrays(self):
        return {
            'data': self.transitions.data,
            'indices': self.transitions.indices,
            'indptr': self.transitions.indptr,
        }


def recency_weights(length, window, decay):
    """Normalised weights for the last ``min(length, window)`` items, oldest first"""
    size = min(length, window)
    weights = decay ** np.arange(size - 1, -1, -1, dtype=np.float64)
    return weights / weights.sum()


def sampled_softmax_loss(item_in, item_out, ctx_idx, ctx_w, candidates):
    """
    Mean cross-entropy of the first candidate against the others.

    ``ctx_idx``/``ctx_w`` are (batch, window) context rows and weights (zero weight
    for padding), ``candidates`` is (batch, 1 + negatives) with the positive first.
    Gradients come back as (rows, row_gradients) pairs for each embedding table.
    """
    batch = len(candidates)
    ctx_emb = item_in[ctx_idx]
    context = np.einsum('bw,bwd->bd', ctx_w, ctx_emb)
    cand_emb = item_out[candidates]
    logits = np.einsum('bd,bcd->bc', context, cand_emb)

    logits = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits).sum(axis=1))
    loss = float(np.mean(log_norm - logits[:, 0]))

    grad_logits = np.exp(logits - log_norm[:, None])
    grad_logits[:, 0] -= 1.0
    grad_logits /= batch

    grad_out = grad_logits[:, :, None] * context[:, None, :]
    grad_context = np.einsum('bc,bcd->bd', grad_logits, cand_emb)
    grad_in = ctx_w[:, :, None] * grad_context[:, None, :]

    dim = item_in.shape[1]
    return (
        loss,
        (ctx_idx.ravel(), grad_in.reshape(-1, dim)),
        (candidates.ravel(), grad_out.reshape(-1, dim)),
    )


def _merge_rows(rows, grads):
    unique, inverse = np.unique(rows, return_inverse=True)
    merged = np.zeros((len(unique), grads.shape[1]))
    np.add.at(merged, inverse, grads)
    return unique, merged


class SparseSGD:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr

    def step(self, grads):
        for param, (rows, row_grads) in zip(self.params, grads):
            np.add.at(param, rows, -self.lr * row_grads)


class SparseAdam:
    """Adam that only touches the rows present in the gradient, in the manner of torch's SparseAdam"""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for param, m, v, (rows, row_grads) in zip(self.params, self.m, self.v, grads):
            rows, g = _merge_rows(rows, row_grads)
            m[rows] = self.beta1 * m[rows] + (1.0 - self.beta1) * g
            v[rows] = self.beta2 * v[rows] + (1.0 - self.beta2) * g * g
            param[rows] -= self.lr * (m[rows] / correction1) / (np.sqrt(v[rows] / correction2) + self.eps)


class EmbeddingSeqModel(Recommender):
    kind = ModelKind.EMBEDDING_SEQ

    def __init__(self, n_items, config, item_in, item_out, summary=None):
        super().__init__(n_items, config, summary)
        self.item_in = item_in
        self.item_out = item_out

    def context_vector(self, context):
        recent = np.asarray(context[-self.config.window:], dtype=np.int64)
        weights = recency_weights(len(recent), self.config.window, self.config.decay)
        return weights @ self.item_in[recent]

    def _score(self, context, candidates):
        return self.item_out[candidates] @ self.context_vector(context)

    def arrays(self):
        return {'item_in': self.item_in, 'item_out': self.item_out}

    @classmethod
    def train(cls, split, cfg):
        return _EmbeddingTrainer(split, cfg).run()


def _context_rows(sequences, window, decay):
    """Pad contexts to ``window`` columns, most recent item last"""
    idx = np.zeros((len(sequences), window), dtype=np.int64)
    weights = np.zeros((len(sequences), window))
    for row, context in enumerate(sequences):
        recent = context[-window:]
        idx[row, window - len(recent):] = recent
        weights[row, window - len(recent):] = recency_weights(len(recent), window, decay)
    return idx, weights


class _EmbeddingTrainer:
    def __init__(self, split, cfg):
        from .evaluation import sample_negatives

        self.split = split
        self.cfg = cfg
        self.n_items = split.n_items

        contexts, targets, owners = [], [], []
        valid_contexts, valid_candidates = [], []
        for index, user in enumerate(split.users):
            seq = user.train_items
            # the last training item is the validation target and stays out of the loss
            for position in range(1, len(seq) - 1):
                contexts.append(seq[:position])
                targets.append(seq[position])
                owners.append(index)
            if len(seq) >= 2:
                negatives = sample_negatives(user, self.n_items, cfg.valid_negatives, cfg.valid_seed)
                valid_contexts.append(seq[:-1])
                valid_candidates.append((user.valid_target,) + negatives)

        if not targets:
            raise ModelError(f"no training sequence of {split.name!r} is long enough to learn from")

        self.ctx_idx, self.ctx_w = _context_rows(contexts, cfg.window, cfg.decay)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.owners = np.asarray(owners, dtype=np.int64)
        self.valid_idx, self.valid_w = _context_rows(valid_contexts, cfg.window, cfg.decay)
        self.valid_candidates = np.asarray(valid_candidates, dtype=np.int64)

        history = {(i, item) for i, user in enumerate(split.users) for item in user.train_items}
        self.history_keys = np.sort(np.fromiter((i * self.n_items + item for i, item in history), dtype=np.int64))
        if any(len(set(user.train_items)) >= self.n_items for user in split.users):
            raise ModelError("a training sequence covers the whole catalogue; no negatives left to sample")

    def _in_history(self, owners, items):
        keys = owners * self.n_items + items
        pos = np.minimum(np.searchsorted(self.history_keys, keys), len(self.history_keys) - 1)
        return self.history_keys[pos] == keys

    def _sample_negatives(self, rng, owners):
        """Uniform negatives outside each owner's training sequence"""
        negatives = rng.integers(0, self.n_items, size=(len(owners), self.cfg.n_negatives_train))
        owners = np.broadcast_to(owners[:, None], negatives.shape)
        clash = self._in_history(owners, negatives)
        while clash.any():
            negatives[clash] = rng.integers(0, self.n_items, size=int(clash.sum()))
            clash = self._in_history(owners, negatives)
        return negatives

    def validation_ndcg(self, item_in, item_out):
        from .evaluation import ndcg_at_k

        context = np.einsum('bw,bwd->bd', self.valid_w, item_in[self.valid_idx])
        scores = np.einsum('bd,bcd->bc', context, item_out[self.valid_candidates])
        ranks = positive_ranks(scores, self.valid_candidates)
        return float(ndcg_at_k(ranks, self.cfg.valid_k).mean())

    def run(self):
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        item_in = rng.normal(0.0, INIT_STD, size=(self.n_items, cfg.embedding_dim))
        item_out = rng.normal(0.0, INIT_STD, size=(self.n_items, cfg.embedding_dim))
        optimizer_cls = SparseAdam if cfg.optimizer == Optimizer.ADAM else SparseSGD
        optimizer = optimizer_cls([item_in, item_out], cfg.lr)

        summary = TrainingSummary(seed=cfg.seed)
        best = (item_in.copy(), item_out.copy())
        stale = 0
        n_examples = len(self.targets)

        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n_examples)
            total_loss = 0.0
            for start in range(0, n_examples, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                negatives = self._sample_negatives(rng, self.owners[batch])
                candidates = np.concatenate([self.targets[batch, None], negatives], axis=1)
                loss, grad_in, grad_out = sampled_softmax_loss(
                    item_in, item_out, self.ctx_idx[batch], self.ctx_w[batch], candidates,
                )
                optimizer.step([grad_in, grad_out])
                total_loss += loss * len(batch)

            ndcg = self.validation_ndcg(item_in, item_out)
            summary.loss_curve.append(total_loss / n_examples)
            summary.valid_curve.append(ndcg)
            summary.epochs_run = epoch
            logger.debug("epoch %d: loss %.5f, valid NDCG@%d %.5f", epoch, summary.loss_curve[-1], cfg.valid_k, ndcg)

            if summary.best_valid_ndcg is None or ndcg > summary.best_valid_ndcg:
                summary.best_valid_ndcg = ndcg
                summary.best_epoch = epoch
                best = (item_in.copy(), item_out.copy())
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info(
                        "Early stopping at epoch %d, best valid NDCG@%d %.5f at epoch %d",
                        epoch, cfg.valid_k, summary.best_valid_ndcg, summary.best_epoch,
                    )
                    break

        return EmbeddingSeqModel(self.n_items, cfg, best[0], best[1], summary)


MODEL_CLASSES = {
    ModelKind.POPULARITY: PopularityModel,
    ModelKind.MARKOV: MarkovModel,
    ModelKind.EMBEDDING_SEQ: EmbeddingSeqModel,
}


def fit(split, cfg):
    if not split.users:
        raise ModelError("cannot fit a recommender on an empty split")
    if any(not user.train_items for user in split.users):
        raise ModelError("every training sequence must be non-empty")
    model = MODEL_CLASSES[cfg.model_kind].train(split, cfg)
    logger.info("Fitted %s on %s (%s, seed %d)", cfg.model_kind, split.name, split.spec, cfg.seed)
    return model


def score(model, context, candidates):
    return model.score(context, candidates)


def rank_order(scores, candidates):
    """Indices sorting by descending score, ties by ascending item id"""
    return np.lexsort((np.asarray(candidates), -np.asarray(scores)))


def positive_ranks(scores, candidates):
    """1-based rank of column 0 in each row under the rank_top_k ordering"""
    positive = scores[:, :1]
    positive_id = candidates[:, :1]
    ahead = (scores > positive) | ((scores == positive) & (candidates < positive_id))
    return 1 + ahead[:, 1:].sum(axis=1)


def rank_top_k(model, context, candidates, k):
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(candidates) < k:
        raise ModelError(f"need at least k={k} candidates, got {len(candidates)}")
    scores = model.score(context, candidates)
    order = rank_order(scores, candidates)
    return tuple(int(item) for item in candidates[order[:k]])


def save_model(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as handle:
        np.savez(
            handle,
            format_version=MODEL_FORMAT_VERSION,
            kind=model.kind.value,
            n_items=model.n_items,
            config=json.dumps(asdict(model.config)),
            summary=json.dumps(asdict(model.summary)),
            **model.arrays(),
        )
    return path


def load_model(path):
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive['format_version'])
        if version != MODEL_FORMAT_VERSION:
            raise ModelError(f"{path}: unsupported model format version {version}")
        kind = str(archive['kind'])
        n_items = int(archive['n_items'])
        cfg = RecommenderConfig(**json.loads(str(archive['config'])))
        summary = TrainingSummary(**json.loads(str(archive['summary'])))

        if kind == ModelKind.POPULARITY:
            return PopularityModel(n_items, cfg, archive['counts'], summary)
        if kind == ModelKind.MARKOV:
            transitions = sparse.csr_matrix(
                (archive['data'], archive['indices'], archive['indptr']), shape=(n_items, n_items),
            )
            return MarkovModel(n_items, cfg, transitions, summary)
        if kind == ModelKind.EMBEDDING_SEQ:
            return EmbeddingSeqModel(n_items, cfg, archive['item_in'], archive['item_out'], summary)
    raise ModelError(f"{path}: unknown model kind {kind!r}")
