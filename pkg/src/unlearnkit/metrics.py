"""Evaluation suite: accuracies, prediction entropy, entropy-threshold
membership inference, exact 2D decision-region analysis, and the
all-methods comparison used by the experiment harness.
"""

from dataclasses import dataclass

import numpy as np

from .validation import as_features, as_labels

__all__ = [
    "accuracy",
    "output_entropy",
    "MIAConfig",
    "MiaResult",
    "mia_asr",
    "RegionRaster",
    "decision_region_area",
    "region_bounds",
    "on_boundary",
    "EvalReport",
    "compare_methods",
]

_RASTER_CHUNK = 65536  # grid rows per forward pass, bounds peak memory


def accuracy(model, X, y):
    """Fraction of examples whose argmax logit matches the label."""
    X = as_features(X)
    y = as_labels(y)
    if X.shape[0] == 0:
        raise ValueError("accuracy of an empty example set is undefined")
    return float(np.mean(model.predict(X) == y))


def output_entropy(model, X):
    """Shannon entropy (natural log) of the softmax output, per example.

    Values lie in [0, ln K] where K is the model's output width.
    """
    X = as_features(X)
    if X.shape[0] == 0:
        raise ValueError("entropy of an empty example set is undefined")
    probs = model.predict_proba(X)
    plogp = np.zeros_like(probs)
    mask = probs > 0
    plogp[mask] = probs[mask] * np.log(probs[mask])
    return -plogp.sum(axis=1)


@dataclass(frozen=True)
class MIAConfig:
    """Entropy-threshold membership inference settings.

    The attack thresholds the target model's prediction entropy; the
    threshold is chosen to maximize balanced accuracy at separating
    retain-train examples (members) from retain-test examples
    (non-members).
    """

    feature: str = "entropy"

    def __post_init__(self):
        if self.feature != "entropy":
            raise ValueError(f"unsupported attack feature {self.feature!r}")


@dataclass(frozen=True)
class MiaResult:
    """Attack success rate on the forget set plus the fitted threshold."""

    asr: float
    threshold: float
    balanced_accuracy: float
    degenerate: bool


def mia_asr(target, split, config=None):
    """Membership inference against the forget set of ``target``.

    Member scores are the target's entropies on retain-train data,
    non-member scores its entropies on retain-test data. An example counts
    as a member when its entropy is <= the threshold; the ASR is the member
    fraction of the forget set. When every calibration entropy is identical
    the result is flagged degenerate (the tie-break still classifies
    everything at or below the shared value as a member).
    """
    if config is None:
        config = MIAConfig()
    for name in ("X_forget", "X_retain", "X_forget_test", "X_retain_test"):
        if getattr(split, name).shape[0] == 0:
            raise ValueError(f"membership inference needs a nonempty {name}")
    members = output_entropy(target, split.X_retain)
    non_members = output_entropy(target, split.X_retain_test)
    threshold, balanced, degenerate = _fit_threshold(members, non_members)
    forget_entropy = output_entropy(target, split.X_forget)
    asr = float(np.mean(forget_entropy <= threshold))
    return MiaResult(asr, threshold, balanced, degenerate)


def _fit_threshold(members, non_members):
    """Lowest threshold maximizing balanced member/non-member accuracy."""
    candidates = np.unique(np.concatenate([members, non_members]))
    members = np.sort(members)
    non_members = np.sort(non_members)
    member_rate = np.searchsorted(members, candidates, side="right") / members.size
    reject_rate = 1.0 - np.searchsorted(non_members, candidates, side="right") / non_members.size
    balanced = 0.5 * (member_rate + reject_rate)
    best = int(np.argmax(balanced))  # first maximum = lowest threshold
    return float(candidates[best]), float(balanced[best]), candidates.size == 1


@dataclass
class RegionRaster:
    """Class-index grid over a 2D box plus per-class area fractions.

    Row 0 of ``class_grid`` corresponds to the top of the box (max y),
    matching image conventions.
    """

    area_fractions: np.ndarray
    class_grid: np.ndarray
    bounds: tuple
    resolution: int


def region_bounds(X, inflate=0.2):
    """Bounding box of the points, each half-range grown by ``inflate``."""
    X = as_features(X, n_features=2)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + inflate)
    return (
        float(center[0] - half[0]), float(center[0] + half[0]),
        float(center[1] - half[1]), float(center[1] + half[1]),
    )


def decision_region_area(model, bounds, resolution=512):
    """Evaluate the predicted class on a uniform grid over a 2D box.

    Returns a RegionRaster whose area fractions (cells per class divided
    by total cells) sum to 1.
    """
    if model.n_features_in_ != 2:
        raise ValueError(
            f"decision regions need a 2-feature model, got {model.n_features_in_}"
        )
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    xmin, xmax, ymin, ymax = bounds
    if not (xmin < xmax and ymin < ymax):
        raise ValueError(f"invalid bounds {bounds}")
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymax, ymin, resolution)  # top row first
    grid_x, grid_y = np.meshgrid(xs, ys)
    points = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    classes = np.empty(points.shape[0], dtype=np.int64)
    for start in range(0, points.shape[0], _RASTER_CHUNK):
        chunk = points[start:start + _RASTER_CHUNK]
        classes[start:start + _RASTER_CHUNK] = model.predict(chunk)
    n_classes = model.output_width_
    counts = np.bincount(classes, minlength=n_classes)
    fractions = counts / classes.size
    return RegionRaster(fractions, classes.reshape(resolution, resolution),
                        bounds, resolution)


def on_boundary(model, x, i, j, tol=1e-3):
    """Whether x lies on the decision boundary between classes i and j.

    True iff the two logits agree within tol and no other class exceeds
    them by more than tol.
    """
    width = model.output_width_
    if i == j:
        raise ValueError("boundary requires two distinct classes")
    if not (0 <= i < width and 0 <= j < width):
        raise ValueError(f"class pair ({i}, {j}) out of range [0, {width})")
    logits = model.decision_function(x)[0]
    pair_max = max(logits[i], logits[j])
    return bool(abs(logits[i] - logits[j]) <= tol and logits.max() <= pair_max + tol)


@dataclass
class EvalReport:
    """All metrics for one method's model."""

    method: str
    acc_retain: float
    acc_forget: float
    acc_retain_test: float
    acc_forget_test: float
    asr: float
    asr_threshold: float
    asr_degenerate: bool
    entropy: dict
    wall_clock_seconds: float
    speedup_vs_retrain: float
    region_area: list = None
    raster: RegionRaster = None


def compare_methods(results, retrain_ref, split, mia_config=None,
                    raster_resolution=512):
    """Evaluate every result with the full metric suite.

    ``results`` is a list of UnlearnResult-like objects (an entry for the
    original model may be included with method "original"); ``retrain_ref``
    provides the wall-clock reference for speedups. All models must share
    the input width and class count. Decision-region rasters are computed
    only for 2-feature models.
    """
    models = [r.model for r in results]
    widths = {len(m.classes_) for m in models}
    dims = {m.n_features_in_ for m in models}
    if len(widths) > 1 or len(dims) > 1:
        raise ValueError(
            f"mixed architectures: class counts {sorted(widths)}, "
            f"feature dims {sorted(dims)}"
        )
    two_d = dims == {2}
    if two_d:
        train_points = np.vstack([split.X_retain, split.X_forget])
        bounds = region_bounds(train_points)
    reports = []
    for result in results:
        model = result.model
        entropy = {
            "retain_train": output_entropy(model, split.X_retain).tolist(),
            "forget_train": output_entropy(model, split.X_forget).tolist(),
            "retain_test": output_entropy(model, split.X_retain_test).tolist(),
            "forget_test": output_entropy(model, split.X_forget_test).tolist(),
        }
        mia = mia_asr(model, split, mia_config)
        raster = None
        area = None
        if two_d:
            raster = decision_region_area(model, bounds, raster_resolution)
            area = raster.area_fractions.tolist()
        reports.append(EvalReport(
            method=result.method,
            acc_retain=accuracy(model, split.X_retain, split.y_retain),
            acc_forget=accuracy(model, split.X_forget, split.y_forget),
            acc_retain_test=accuracy(model, split.X_retain_test, split.y_retain_test),
            acc_forget_test=accuracy(model, split.X_forget_test, split.y_forget_test),
            asr=mia.asr,
            asr_threshold=mia.threshold,
            asr_degenerate=mia.degenerate,
            entropy=entropy,
            wall_clock_seconds=result.wall_clock_seconds,
            speedup_vs_retrain=retrain_ref.wall_clock_seconds
            / max(result.wall_clock_seconds, 1e-12),
            region_area=area,
            raster=raster,
        ))
    return reports
