"""Segment sampling, the contrastive training loop, and evaluation.

Training draws a handful of segment pairs from every training signal pair
per iteration, each aligned with probability one half, and takes one Adam
step on the mean binary cross entropy of the scores. Evaluation samples a
balanced set of aligned/misaligned segments and reports the fraction
classified correctly by the sign of the score; the concurrence coefficient
rescales that accuracy to [0, 1].

Randomness is organized in named substreams keyed by (base seed, phase,
iteration, position) so results do not depend on how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, adam_step, bce_with_logits, zero_grad
from .network import ConcurrenceModel, EncoderConfig, build_model, pscs_batch
from .signals import Dataset, SignalPair

__all__ = [
    "SegmentPair",
    "TrainConfig",
    "sample_segment_pair",
    "classification_accuracy",
    "train",
    "evaluate",
    "concurrence_coefficient",
    "cross_validate",
    "split_indices",
]

_EVAL_CHUNK = 512  # segments per eval-mode forward, bounds peak memory


@dataclass
class SegmentPair:
    """One classification sample: two segments and their alignment label."""

    x_seg: np.ndarray
    y_seg: np.ndarray
    label: int
    t: int
    t_prime: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if (self.label == 1) != (self.t == self.t_prime):
            raise ValueError("label 1 requires t == t_prime, label 0 requires t != t_prime")


@dataclass
class TrainConfig:
    """Knobs for the training loop and for evaluation sampling."""

    w: int = 400
    segments_per_pair: int = 4
    iterations: int = 100
    train_fraction: float = 0.8
    early_stop: bool = False
    val_fraction: float = 0.2
    patience: int = 10
    eval_segments: int = 20
    seed: int = 0
    chunk_size: int | None = None  # segment pairs per forward; None = whole batch

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.w < 1:
            raise ValueError("w must be positive")
        if self.eval_segments < 2 or self.eval_segments % 2 != 0:
            raise ValueError("eval_segments must be even (balanced labels)")
        if self.segments_per_pair < 1:
            raise ValueError("segments_per_pair must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def sample_segment_pair(pair: SignalPair, w: int, label: int,
                        rng: np.random.Generator) -> SegmentPair:
    """Cut one aligned (label 1) or misaligned (label 0) segment pair.

    The start t is uniform on [0, T-w]; for label 0 the second start is
    uniform on the same range excluding t.
    """
    t_total = pair.length
    if t_total < w:
        raise ValueError(f"signal shorter than segment: T={t_total} < w={w}")
    n_starts = t_total - w + 1
    t = int(rng.integers(0, n_starts))
    if label == 1:
        t_prime = t
    elif label == 0:
        if n_starts < 2:
            raise ValueError("no misaligned start available: T == w")
        u = int(rng.integers(0, n_starts - 1))
        t_prime = u if u < t else u + 1
    else:
        raise ValueError("label must be 0 or 1")
    return SegmentPair(
        x_seg=pair.x[:, t:t + w],
        y_seg=pair.y[:, t_prime:t_prime + w],
        label=label,
        t=t,
        t_prime=t_prime,
    )


def classification_accuracy(scores, labels) -> float:
    """Fraction of segments where (score > 0) matches (label == 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be nonempty and equal-length")
    return float(np.mean((scores > 0.0) == (labels == 1)))


def concurrence_coefficient(accuracy: float) -> float:
    """Rescale held-out accuracy to [0, 1]: 2*max(accuracy, 0.5) - 1."""
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
    return 2.0 * max(float(accuracy), 0.5) - 1.0


def _resolve_base_seed(train_config: TrainConfig, rng: np.random.Generator | None) -> int:
    if rng is None:
        return int(train_config.seed)
    return int(rng.integers(0, 2 ** 62))


def _draw_minibatch(dataset: Dataset, indices, w: int, per_pair: int,
                    base: int, iteration: int):
    xs, ys, labels = [], [], []
    for pos, idx in enumerate(indices):
        r = np.random.default_rng([base, 1, iteration, pos])
        for _ in range(per_pair):
            label = 1 if r.random() < 0.5 else 0
            seg = sample_segment_pair(dataset.pairs[idx], w, label, r)
            xs.append(seg.x_seg)
            ys.append(seg.y_seg)
            labels.append(label)
    return np.stack(xs), np.stack(ys), np.array(labels, dtype=np.float64)


def _batch_loss(model, x_batch, y_batch, labels, rng, chunk_size):
    """Forward/backward over one minibatch, optionally in accumulation chunks.

    Chunked mode recomputes batch statistics per chunk; gradients still sum
    to the gradient of the chunkwise loss mean.
    """
    total = x_batch.shape[0]
    size = total if chunk_size is None else max(1, int(chunk_size))
    loss_sum = 0.0
    for start in range(0, total, size):
        stop = min(start + size, total)
        scores = pscs_batch(model, x_batch[start:stop], y_batch[start:stop], "train", rng)
        chunk = bce_with_logits(scores, labels[start:stop]).sum() * (1.0 / total)
        chunk.backward()
        loss_sum += float(chunk.data)
    return loss_sum


def _model_snapshot(model: ConcurrenceModel):
    return [arr.copy() for _, arr in model.named_arrays()]


def _model_restore(model: ConcurrenceModel, snapshot) -> None:
    for (_, arr), saved in zip(model.named_arrays(), snapshot):
        arr[:] = saved


def train(dataset: Dataset, model_config: EncoderConfig, train_config: TrainConfig,
          rng: np.random.Generator | None = None, indices=None):
    """Train a concurrence model; returns (model, per-iteration loss history).

    ``indices`` restricts training to a subset of the dataset's pairs (the
    caller owns the train/test split). With ``early_stop`` on, a fraction of
    the training pairs is held aside and the loop stops once the validation
    accuracy has not improved for ``patience`` iterations, restoring the
    best snapshot.
    """
    indices = list(range(len(dataset))) if indices is None else [int(i) for i in indices]
    if not indices:
        raise ValueError("training requires at least one signal pair")
    w = train_config.w
    if dataset.length < w:
        raise ValueError(f"signals of length {dataset.length} are shorter than w={w}")
    base = _resolve_base_seed(train_config, rng)

    val_indices: list[int] = []
    if train_config.early_stop:
        n_val = max(1, int(round(train_config.val_fraction * len(indices))))
        if n_val >= len(indices):
            raise ValueError("validation split leaves no training pairs")
        val_indices = indices[-n_val:]
        indices = indices[:-n_val]

    model = build_model(model_config, dataset.kx, dataset.ky, w,
                        np.random.default_rng([base, 0]))
    params = model.trainable_parameters()
    opt = AdamState(params, lr=model_config.learning_rate)

    losses: list[float] = []
    best_val, best_snapshot, since_best = -np.inf, None, 0
    for iteration in range(train_config.iterations):
        x_batch, y_batch, labels = _draw_minibatch(
            dataset, indices, w, train_config.segments_per_pair, base, iteration)
        zero_grad(params)
        forward_rng = np.random.default_rng([base, 2, iteration])
        loss = _batch_loss(model, x_batch, y_batch, labels, forward_rng,
                           train_config.chunk_size)
        adam_step(params, opt)
        losses.append(loss)

        if train_config.early_stop:
            val_acc, _ = evaluate(model, dataset, train_config, indices=val_indices,
                                  _base=base + 1)
            if val_acc > best_val:
                best_val, since_best = val_acc, 0
                best_snapshot = _model_snapshot(model)
            else:
                since_best += 1
                if since_best >= train_config.patience:
                    _model_restore(model, best_snapshot)
                    break
    return model, losses


def evaluate(model: ConcurrenceModel, dataset: Dataset, train_config: TrainConfig,
             rng: np.random.Generator | None = None, indices=None, _base=None):
    """Score balanced segment samples in eval mode.

    Per signal pair, draws ``eval_segments`` segments, exactly half aligned.
    Returns (accuracy, records) where records is a list of
    (SegmentPair, score) in pair-major order. The caller must keep the
    evaluated pairs disjoint from the pairs the model was trained on.
    """
    indices = list(range(len(dataset))) if indices is None else [int(i) for i in indices]
    if not indices:
        raise ValueError("evaluation requires at least one signal pair")
    base = _resolve_base_seed(train_config, rng) if _base is None else int(_base)
    w, m = train_config.w, train_config.eval_segments

    segments: list[SegmentPair] = []
    for pos, idx in enumerate(indices):
        r = np.random.default_rng([base, 3, pos])
        for k in range(m):
            label = 1 if k < m // 2 else 0
            segments.append(sample_segment_pair(dataset.pairs[idx], w, label, r))

    scores = np.empty(len(segments))
    for start in range(0, len(segments), _EVAL_CHUNK):
        chunk = segments[start:start + _EVAL_CHUNK]
        x_batch = np.stack([s.x_seg for s in chunk])
        y_batch = np.stack([s.y_seg for s in chunk])
        scores[start:start + len(chunk)] = pscs_batch(model, x_batch, y_batch, "eval").data

    labels = np.array([s.label for s in segments])
    accuracy = classification_accuracy(scores, labels)
    return accuracy, list(zip(segments, scores.tolist()))


def split_indices(n_pairs: int, train_fraction: float, seed: int):
    """Deterministic disjoint train/test pair indices."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    perm = np.random.default_rng([int(seed), 4]).permutation(n_pairs)
    n_train = int(round(train_fraction * n_pairs))
    n_train = min(max(n_train, 1), n_pairs - 1)
    train = sorted(int(i) for i in perm[:n_train])
    test = sorted(int(i) for i in perm[n_train:])
    assert not set(train) & set(test)
    return train, test


def cross_validate(dataset: Dataset, folds: int, model_config: EncoderConfig,
                   train_config: TrainConfig, rng: np.random.Generator | None = None,
                   fold_assignment=None):
    """K-fold coefficients with pair-disjoint folds; returns (per-fold, mean).

    Each pair lands in exactly one test fold. Every fold reuses the same
    seed-derived substreams (keyed by position, not by pair identity), so
    folds with identical data produce identical coefficients.
    """
    n = len(dataset)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > n:
        raise ValueError(f"cannot make {folds} folds from {n} pairs")
    base = _resolve_base_seed(train_config, rng)
    if fold_assignment is None:
        perm = np.random.default_rng([base, 5]).permutation(n)
        fold_assignment = [int(perm[i]) % folds for i in range(n)]
    fold_assignment = [int(f) for f in fold_assignment]
    if sorted(set(fold_assignment)) != list(range(folds)):
        raise ValueError("fold assignment must use every fold id in 0..folds-1")

    coefficients = []
    for k in range(folds):
        test_idx = [i for i, f in enumerate(fold_assignment) if f == k]
        train_idx = [i for i, f in enumerate(fold_assignment) if f != k]
        assert not set(train_idx) & set(test_idx)
        model, _ = train(dataset, model_config, train_config, indices=train_idx,
                         rng=np.random.default_rng([base, 6]))
        accuracy, _ = evaluate(model, dataset, train_config, indices=test_idx,
                               _base=base)
        coefficients.append(concurrence_coefficient(accuracy))
    return coefficients, float(np.mean(coefficients))
