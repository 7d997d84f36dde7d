"""Class-forgetting methods: boundary shifting plus reference baselines.

Each method maps (trained model, forget split, config) to an UnlearnResult
holding the unlearned model and its wall-clock cost. The boundary methods
and the forget-set baselines read only the forget partition of the split;
retraining and the retain-finetune baseline read only the retain partition.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import clone

from .network import DenseClassifier, SGDConfig

__all__ = [
    "ShrinkConfig",
    "UnlearnResult",
    "neighbor_search",
    "nearest_incorrect_labels",
    "boundary_shrink",
    "boundary_expanding",
    "retrain",
    "finetune_baseline",
    "random_labels_baseline",
    "negative_gradient_baseline",
    "METHODS",
]

# Canonical method names, in the order reports list them.
METHODS = (
    "retrain",
    "finetune",
    "negative_gradient",
    "random_labels",
    "boundary_shrink",
    "boundary_expanding",
)


def _default_finetune():
    return SGDConfig(learning_rate=1e-5, momentum=0.9, batch_size=64, epochs=10)


@dataclass(frozen=True)
class ShrinkConfig:
    """Settings for boundary shrinking.

    epsilon is the perturbation bound of the neighbor search, in
    standardized feature units. When refresh_labels_each_epoch is set the
    perturbed samples and their replacement labels are recomputed against
    the current model at each epoch start (optimizer state restarts with
    each refresh); by default they are computed once from the frozen
    original model.
    """

    epsilon: float = 0.5
    finetune: SGDConfig = field(default_factory=_default_finetune)
    refresh_labels_each_epoch: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class UnlearnResult:
    """An unlearned model plus timing and loss provenance."""

    model: DenseClassifier
    method: str
    wall_clock_seconds: float
    per_epoch_loss: list


def neighbor_search(model, X, label, epsilon):
    """Perturb samples across the nearest decision boundary.

    Each sample moves one step of size epsilon along the sign of the
    gradient of its loss with respect to the input; coordinates with zero
    gradient stay put. No projection or clipping is applied.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.full(X.shape[0], label, dtype=np.int64)
    grads = model.input_gradients(X, labels)
    return X + epsilon * np.sign(grads)


def nearest_incorrect_labels(model, X, forget_class):
    """Highest-scoring class other than forget_class for each sample.

    Ties break toward the lowest index. The model must still have its
    original output width.
    """
    if getattr(model, "expanded_", False):
        raise ValueError("nearest_incorrect_labels requires an unexpanded model")
    n_classes = len(model.classes_)
    if n_classes < 2:
        raise RuntimeError("need at least 2 classes to pick an incorrect label")
    if not 0 <= forget_class < n_classes:
        raise ValueError(f"forget_class {forget_class} out of range [0, {n_classes})")
    logits = model.decision_function(np.atleast_2d(X)).copy()
    logits[:, forget_class] = -np.inf
    return np.argmax(logits, axis=1)


def boundary_shrink(original, split, config=None):
    """Unlearn by relabeling forget samples with their nearest incorrect class.

    Perturbed copies of the forget samples are classified by the frozen
    original model to find each sample's nearest incorrect label, and a
    copy of the model is finetuned on the relabeled forget set. The retain
    partition is never read.
    """
    if config is None:
        config = ShrinkConfig()
    start = time.perf_counter()
    X_f = split.X_forget
    t = split.forget_class
    if config.refresh_labels_each_epoch:
        model = original
        losses = []
        for epoch in range(config.finetune.epochs):
            crosses = neighbor_search(model, X_f, t, config.epsilon)
            labels = nearest_incorrect_labels(model, crosses, t)
            step = replace(config.finetune, epochs=1,
                           seed=_subseed(config.finetune.seed, epoch))
            model = model.finetune(X_f, labels, step)
            losses.extend(model.loss_curve_)
    else:
        crosses = neighbor_search(original, X_f, t, config.epsilon)
        labels = nearest_incorrect_labels(original, crosses, t)
        model = original.finetune(X_f, labels, config.finetune)
        losses = model.loss_curve_
    wall = time.perf_counter() - start
    return UnlearnResult(model, "boundary_shrink", wall, losses)


def boundary_expanding(original, split, config=None):
    """Unlearn by remapping forget samples onto a temporary shadow class.

    The output layer grows one zero-initialized neuron, the whole expanded
    network is finetuned with every forget sample assigned to the new
    class, and the neuron is then pruned away. With zero finetune epochs
    the round trip returns the original parameters exactly.

    ``config`` is the finetune schedule itself (an SGDConfig); expanding
    has no neighbor search, so it needs none of the other shrink settings.
    """
    if config is None:
        config = _default_finetune()
    start = time.perf_counter()
    X_f = split.X_forget
    shadow = len(original.classes_)
    expanded = original.expand_output()
    labels = np.full(X_f.shape[0], shadow, dtype=np.int64)
    tuned = expanded.finetune(X_f, labels, config)
    model = tuned.prune_output(shadow)
    wall = time.perf_counter() - start
    return UnlearnResult(model, "boundary_expanding", wall, tuned.loss_curve_)


def retrain(split, template):
    """Train a fresh model on the retain partition only.

    ``template`` supplies the architecture and training hyperparameters;
    its fitted state, if any, is discarded. The result is the reference
    model every other method is compared against.
    """
    start = time.perf_counter()
    model = clone(template)
    model.set_params(n_classes=split.n_classes)
    model.fit(split.X_retain, split.y_retain)
    wall = time.perf_counter() - start
    return UnlearnResult(model, "retrain", wall, model.loss_curve_)


def finetune_baseline(original, split, config):
    """Finetune on the retain partition, relying on catastrophic forgetting."""
    start = time.perf_counter()
    model = original.finetune(split.X_retain, split.y_retain, config)
    wall = time.perf_counter() - start
    return UnlearnResult(model, "finetune", wall, model.loss_curve_)


def random_labels_baseline(original, split, config, seed=0):
    """Finetune on the forget samples relabeled uniformly at random.

    Replacement labels are drawn independently per sample from the classes
    other than the forgetting class; the draw is deterministic in ``seed``.
    """
    start = time.perf_counter()
    X_f = split.X_forget
    t = split.forget_class
    k = split.n_classes
    if k < 2:
        raise RuntimeError("need at least 2 classes to relabel away from the target")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    labels = rng.integers(0, k - 1, size=X_f.shape[0])
    labels = labels + (labels >= t)  # skip over the forgetting class
    model = original.finetune(X_f, labels, config)
    wall = time.perf_counter() - start
    return UnlearnResult(model, "random_labels", wall, model.loss_curve_)


def negative_gradient_baseline(original, split, config):
    """Finetune on the forget samples with the loss gradient negated (ascent)."""
    start = time.perf_counter()
    X_f = split.X_forget
    labels = np.full(X_f.shape[0], split.forget_class, dtype=np.int64)
    model = original.finetune(X_f, labels, config, ascent=True)
    wall = time.perf_counter() - start
    return UnlearnResult(model, "negative_gradient", wall, model.loss_curve_)


def _subseed(seed, index):
    """Stable derived seed for the index-th refresh epoch."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
