"""Dense ReLU classifier with hand-rolled backpropagation and momentum SGD.

Everything is computed in float64 numpy. The estimator follows scikit-learn
conventions (``fit``/``predict``/``predict_proba``/``get_params``) but keeps
explicit access to its weight matrices, to the gradient of the loss with
respect to inputs, and to output-layer surgery (adding and pruning an output
neuron), all of which the unlearning methods rely on.
"""

import copy
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .validation import as_features, as_labels, check_finite

__all__ = ["SGDConfig", "DenseClassifier", "softmax", "cross_entropy"]


def softmax(logits):
    """Row-wise softmax with max-subtraction for overflow safety.

    Accepts a single logit vector or a (n, k) matrix and returns
    probabilities of the same shape.
    """
    z = np.asarray(logits, dtype=np.float64)
    check_finite(z, name="logits")
    single = z.ndim == 1
    if single:
        z = z.reshape(1, -1)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def cross_entropy(logits, labels):
    """Softmax cross-entropy, computed stably as logsumexp(z) - z[label].

    For a single logit vector and integer label returns a float; for a
    (n, k) matrix and label vector returns per-example losses.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z.reshape(1, -1)
    y = as_labels(labels, n_classes=z.shape[1], name="labels")
    if y.shape[0] != z.shape[0]:
        raise ValueError(f"got {z.shape[0]} logit rows but {y.shape[0]} labels")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + z.max(axis=1)
    losses = lse - z[np.arange(z.shape[0]), y]
    return float(losses[0]) if single else losses


@dataclass(frozen=True)
class SGDConfig:
    """Mini-batch momentum SGD settings (fixed learning rate, no decay)."""

    learning_rate: float
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


class DenseClassifier(BaseEstimator, ClassifierMixin):
    """Fully-connected ReLU network trained with momentum SGD.

    Parameters
    ----------
    hidden_layers : tuple of int
        Widths of the hidden layers.
    n_classes : int or None
        Number of output classes. When None, inferred from the labels at
        fit time as max(y) + 1. Pass it explicitly when the training labels
        do not cover every class.
    learning_rate, momentum, batch_size, epochs, seed
        Training hyperparameters; see SGDConfig. Training is bit-deterministic
        for a fixed seed.

    Fitted attributes: ``weights_`` (list of (out, in) arrays), ``biases_``,
    ``classes_``, ``n_features_in_``, ``expanded_``, ``loss_curve_``.
    """

    def __init__(self, hidden_layers=(64, 64), n_classes=None, learning_rate=0.1,
                 momentum=0.9, batch_size=64, epochs=30, seed=0):
        self.hidden_layers = hidden_layers
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    # ------------------------------------------------------------------ #
    # fitting                                                             #
    # ------------------------------------------------------------------ #

    def fit(self, X, y):
        """Initialize parameters from the seed and train for self.epochs."""
        X = as_features(X)
        n_classes = self.n_classes
        y = as_labels(y, n_classes=n_classes)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different numbers of examples")
        if y.shape[0] == 0:
            raise ValueError("cannot fit on an empty dataset")
        if n_classes is None:
            n_classes = int(y.max()) + 1
        if n_classes < 1:
            raise ValueError("need at least one class")

        init_seq, shuffle_seq = np.random.SeedSequence(self.seed).spawn(2)
        rng = np.random.default_rng(init_seq)

        dims = [X.shape[1], *self.hidden_layers, n_classes]
        self.weights_ = []
        self.biases_ = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights_.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            self.biases_.append(np.zeros(fan_out))

        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(n_classes)
        self.expanded_ = False
        cfg = SGDConfig(self.learning_rate, self.momentum, self.batch_size,
                        self.epochs, self.seed)
        self.loss_curve_ = self._sgd(X, y, cfg, rng=np.random.default_rng(shuffle_seq))
        return self

    def finetune(self, X, y, config, ascent=False):
        """Return a copy of this fitted model trained further on (X, y).

        The copy starts from the current parameters with fresh optimizer
        state; the original model is left untouched. With config.epochs == 0
        the returned parameters are bit-identical to the current ones.
        ``ascent=True`` negates the loss gradient (gradient ascent).
        """
        self._check_fitted()
        model = self.copy()
        X = as_features(X, n_features=model.n_features_in_)
        y = as_labels(y, n_classes=model.output_width_)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different numbers of examples")
        if y.shape[0] == 0:
            raise ValueError("cannot finetune on an empty dataset")
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
        model.loss_curve_ = model._sgd(X, y, config, rng=rng, ascent=ascent)
        return model

    def _sgd(self, X, y, config, rng, ascent=False):
        """Run mini-batch momentum SGD in place; returns per-epoch mean loss."""
        n = X.shape[0]
        velocity_w = [np.zeros_like(w) for w in self.weights_]
        velocity_b = [np.zeros_like(b) for b in self.biases_]
        sign = -1.0 if ascent else 1.0
        losses = []
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                grads_w, grads_b = self._param_gradients(X[idx], y[idx])
                for i in range(len(self.weights_)):
                    velocity_w[i] = config.momentum * velocity_w[i] \
                        - config.learning_rate * sign * grads_w[i]
                    velocity_b[i] = config.momentum * velocity_b[i] \
                        - config.learning_rate * sign * grads_b[i]
                    self.weights_[i] += velocity_w[i]
                    self.biases_[i] += velocity_b[i]
            losses.append(self.loss(X, y))
        return losses

    # ------------------------------------------------------------------ #
    # forward / prediction                                                #
    # ------------------------------------------------------------------ #

    def decision_function(self, X):
        """Pre-softmax logits, shape (n, output width)."""
        self._check_fitted()
        X = as_features(X, n_features=self.n_features_in_)
        return self._forward(X)[-1]

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        """Argmax class per example; ties broken by the lowest index."""
        return np.argmax(self.decision_function(X), axis=1)

    def loss(self, X, y):
        """Mean softmax cross-entropy over the given examples."""
        self._check_fitted()
        X = as_features(X, n_features=self.n_features_in_)
        y = as_labels(y, n_classes=self.output_width_)
        if X.shape[0] == 0:
            raise ValueError("loss of an empty batch is undefined")
        return float(np.mean(cross_entropy(self._forward(X)[-1], y)))

    def _forward(self, X):
        """Per-layer activations: [input, hidden..., logits]."""
        acts = [X]
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            z = acts[-1] @ w.T + b
            if i < len(self.weights_) - 1:
                z = np.maximum(z, 0.0)
            acts.append(z)
        return acts

    # ------------------------------------------------------------------ #
    # gradients                                                           #
    # ------------------------------------------------------------------ #

    def loss_gradients(self, X, y):
        """Mean-over-batch gradient of the cross-entropy loss.

        Returns a list of (dW, db) pairs, one per layer, shaped like the
        parameters.
        """
        self._check_fitted()
        X = as_features(X, n_features=self.n_features_in_)
        y = as_labels(y, n_classes=self.output_width_)
        if X.shape[0] == 0:
            raise ValueError("gradient of an empty batch is undefined")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different numbers of examples")
        grads_w, grads_b = self._param_gradients(X, y)
        return list(zip(grads_w, grads_b))

    def input_gradients(self, X, y):
        """Per-example gradient of the cross-entropy with respect to the input."""
        self._check_fitted()
        X = as_features(X, n_features=self.n_features_in_)
        y = as_labels(y, n_classes=self.output_width_)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different numbers of examples")
        acts = self._forward(X)
        delta = self._output_delta(acts[-1], y)
        for i in range(len(self.weights_) - 1, 0, -1):
            delta = (delta @ self.weights_[i]) * (acts[i] > 0)
        return delta @ self.weights_[0]

    @staticmethod
    def _output_delta(logits, y):
        probs = softmax(logits)
        probs[np.arange(logits.shape[0]), y] -= 1.0
        return probs

    def _param_gradients(self, X, y):
        """Backprop for the mean cross-entropy over the batch."""
        acts = self._forward(X)
        delta = self._output_delta(acts[-1], y) / X.shape[0]
        grads_w = [None] * len(self.weights_)
        grads_b = [None] * len(self.weights_)
        for i in range(len(self.weights_) - 1, -1, -1):
            grads_w[i] = delta.T @ acts[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights_[i]) * (acts[i] > 0)
        return grads_w, grads_b

    # ------------------------------------------------------------------ #
    # output-layer surgery                                                #
    # ------------------------------------------------------------------ #

    def expand_output(self):
        """Return a copy with one extra output neuron, zero-initialized.

        The new row and bias are zero, so the first K logits are unchanged
        and the new logit is exactly 0 for every input.
        """
        self._check_fitted()
        if self.expanded_:
            raise RuntimeError("model output layer is already expanded")
        model = self.copy()
        last_w = model.weights_[-1]
        model.weights_[-1] = np.vstack([last_w, np.zeros((1, last_w.shape[1]))])
        model.biases_[-1] = np.append(model.biases_[-1], 0.0)
        model.expanded_ = True
        return model

    def prune_output(self, index):
        """Return a copy with the extra output neuron removed.

        Only the appended neuron (index == K) may be pruned; the remaining
        rows and biases are bit-identical to their pre-prune values.
        """
        self._check_fitted()
        if not self.expanded_:
            raise ValueError("cannot prune: model output layer is not expanded")
        k = len(self.classes_)
        if index != k:
            raise ValueError(f"only the appended neuron (index {k}) may be pruned, got {index}")
        model = self.copy()
        model.weights_[-1] = model.weights_[-1][:k, :].copy()
        model.biases_[-1] = model.biases_[-1][:k].copy()
        model.expanded_ = False
        return model

    # ------------------------------------------------------------------ #
    # plumbing                                                            #
    # ------------------------------------------------------------------ #

    @property
    def output_width_(self):
        return len(self.classes_) + (1 if self.expanded_ else 0)

    def copy(self):
        """Deep copy; the clone shares no parameter arrays with the original."""
        return copy.deepcopy(self)

    def parameter_vector(self):
        """All parameters flattened into one array (per layer: weights, bias)."""
        self._check_fitted()
        parts = []
        for w, b in zip(self.weights_, self.biases_):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def layer_dims(self):
        """List of (in, out) sizes per layer."""
        self._check_fitted()
        return [(w.shape[1], w.shape[0]) for w in self.weights_]

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise RuntimeError("model is not fitted yet; call fit() first")
