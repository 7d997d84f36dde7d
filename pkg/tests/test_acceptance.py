"""Acceptance gate for the whole package.

Eight criteria, each a single test that prints one PASS or FAIL line with
its measured quantities. The benchmark is the default desk experiment
(10-class 2D blobs, a 2 -> 64 -> 64 -> 10 network) run over five seeds:
seed 0 through the full artifact pipeline, seeds 1-4 in memory.

Trend criteria (membership inference, entropy, timing) tolerate one
contrary seed out of five; numerical criteria use fixed tolerances.
"""

import gc
import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from unlearnkit.checkpoint import load_checkpoint, save_checkpoint
from unlearnkit.datasets import CountingSplit, forget_split, make_blobs
from unlearnkit.experiment import (
    ExperimentConfig,
    _evaluate,
    _unlearn_sgd,
    build_dataset,
    run_experiment,
    run_method,
    train_original,
)
from unlearnkit.network import DenseClassifier, SGDConfig
from unlearnkit.unlearn import (
    METHODS,
    ShrinkConfig,
    boundary_expanding,
    boundary_shrink,
    finetune_baseline,
    nearest_incorrect_labels,
    negative_gradient_baseline,
    neighbor_search,
    random_labels_baseline,
    retrain,
)

from test_network import input_grad_fd, make_model, max_rel_err, param_grad_fd

SEEDS = (0, 1, 2, 3, 4)


_capman = None


@pytest.fixture(scope="session", autouse=True)
def _grab_capture_manager(request):
    # pytest captures at the fd level, so even sys.__stdout__ is swallowed.
    # The capture manager can suspend that around our one-line reports.
    global _capman
    _capman = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _capman = None


def announce(num, ok, detail):
    """One visible pass/fail line per criterion, bypassing pytest capture."""
    line = f"[criterion {num}] {'PASS' if ok else 'FAIL'} - {detail}"
    if _capman is not None:
        with _capman.global_and_fixture_disabled():
            sys.stdout.write("\n" + line + "\n")
            sys.stdout.flush()
    else:
        sys.stdout.write("\n" + line + "\n")
        sys.stdout.flush()
    return ok


@dataclass
class SeedRun:
    cfg: ExperimentConfig
    doc: dict
    walls: dict
    split: object
    original: DenseClassifier


def _run_in_memory(seed):
    cfg = ExperimentConfig(seed=seed)
    split = forget_split(build_dataset(cfg), cfg.forget_class)
    results = {"original": train_original(cfg, split)}
    for name in cfg.methods:
        results[name] = run_method(name, cfg, results["original"].model, split)
    doc, _ = _evaluate(cfg, results, split)
    walls = {name: res.wall_clock_seconds for name, res in results.items()}
    return SeedRun(cfg=cfg, doc=doc, walls=walls, split=split,
                   original=results["original"].model)


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    out0 = tmp_path_factory.mktemp("acceptance") / "seed0"
    cfg0 = ExperimentConfig()
    start = time.perf_counter()
    output0 = run_experiment(cfg0, out0)
    pipeline_wall = time.perf_counter() - start

    split0 = forget_split(build_dataset(cfg0), cfg0.forget_class)
    original0, _ = load_checkpoint(out0 / "checkpoints" / "original.ckpt")
    runs = {0: SeedRun(cfg=cfg0, doc=output0.results, walls=output0.wall_clocks,
                       split=split0, original=original0)}
    for seed in SEEDS[1:]:
        runs[seed] = _run_in_memory(seed)
    return {"runs": runs, "pipeline_wall": pipeline_wall, "out_dir": out0}


def _acc(run, method, key):
    return run.doc["reports"][method][key]


def _median_forget_entropy(run, method):
    return float(np.median(run.doc["reports"][method]["entropy"]["forget_train"]))


# --------------------------------------------------------------------- #
# 1. numerical core                                                      #
# --------------------------------------------------------------------- #

def test_criterion_1_gradients_and_softmax():
    rng = np.random.default_rng(20240817)
    start = time.perf_counter()
    worst = 0.0
    worst_softmax = 0.0
    for trial in range(100):
        n_hidden = int(rng.integers(0, 3))  # up to 3 weight layers total
        dims = [int(rng.integers(1, 9))]
        dims += [int(rng.integers(1, 17)) for _ in range(n_hidden)]
        dims.append(int(rng.integers(2, 17)))
        model = make_model(dims, seed=trial)
        X = rng.normal(size=(int(rng.integers(1, 6)), dims[0]))
        y = rng.integers(0, dims[-1], size=X.shape[0])

        exact = model.loss_gradients(X, y)
        fd_w, fd_b = param_grad_fd(model, X, y, step=1e-5)
        for (gw, gb), fw, fb in zip(exact, fd_w, fd_b):
            worst = max(worst, max_rel_err(gw, fw), max_rel_err(gb, fb))
        input_exact = model.input_gradients(X, y)
        for row in range(X.shape[0]):
            fd_row = input_grad_fd(model, X[row], int(y[row]), step=1e-5)
            worst = max(worst, max_rel_err(input_exact[row], fd_row))

        sums = model.predict_proba(X).sum(axis=1)
        worst_softmax = max(worst_softmax, float(np.max(np.abs(sums - 1.0))))
    elapsed = time.perf_counter() - start

    ok = worst < 1e-4 and worst_softmax <= 1e-9 and elapsed < 10.0
    assert announce(1, ok,
                    f"max grad rel err {worst:.3e} (<1e-4), softmax sum dev "
                    f"{worst_softmax:.3e} (<=1e-9), 100 models in {elapsed:.2f}s (<10s)")


# --------------------------------------------------------------------- #
# 2. surgery identity                                                    #
# --------------------------------------------------------------------- #

def test_criterion_2_surgery_identity():
    start = time.perf_counter()
    ds = make_blobs(n_classes=6, per_class=20, spread=0.4, seed=2)
    split = forget_split(ds, 0)
    model = DenseClassifier(hidden_layers=(16, 8), n_classes=6,
                            learning_rate=0.1, epochs=5, seed=3)
    model.fit(ds.X_train, ds.y_train)

    round_trip = model.expand_output().prune_output(6)
    params_ok = round_trip.parameter_vector().tobytes() == \
        model.parameter_vector().tobytes()
    X = np.random.default_rng(0).normal(size=(50, 2))
    logits_ok = np.array_equal(round_trip.decision_function(X),
                               model.decision_function(X))

    zero = boundary_expanding(model, split, SGDConfig(learning_rate=0.1, epochs=0))
    expand_ok = zero.model.parameter_vector().tobytes() == \
        model.parameter_vector().tobytes()
    elapsed = time.perf_counter() - start

    ok = params_ok and logits_ok and expand_ok and elapsed < 1.0
    assert announce(2, ok,
                    f"params bit-identical {params_ok}, logits identical {logits_ok}, "
                    f"0-epoch expanding is identity {expand_ok}, {elapsed:.3f}s (<1s)")


# --------------------------------------------------------------------- #
# 3. utility trend                                                       #
# --------------------------------------------------------------------- #

def test_criterion_3_utility_trend(suite):
    run = suite["runs"][0]
    orig_r = _acc(run, "original", "acc_retain_train")
    orig_f = _acc(run, "original", "acc_forget_train")
    shrink_r = _acc(run, "boundary_shrink", "acc_retain_train")
    shrink_f = _acc(run, "boundary_shrink", "acc_forget_train")
    expand_r = _acc(run, "boundary_expanding", "acc_retain_train")
    expand_f = _acc(run, "boundary_expanding", "acc_forget_train")
    retrain_f = _acc(run, "retrain", "acc_forget_train")
    wall = suite["pipeline_wall"]

    ok = (orig_r >= 0.99 and orig_f >= 0.99
          and shrink_f <= 0.10 and shrink_r >= orig_r - 0.02
          and expand_f <= 0.15 and expand_r >= orig_r - 0.03
          and retrain_f <= 0.05
          and wall < 300.0)
    assert announce(3, ok,
                    f"original retain/forget {orig_r:.4f}/{orig_f:.4f} (>=0.99), "
                    f"shrink forget {shrink_f:.4f} (<=0.10) retain {shrink_r:.4f} "
                    f"(>= orig-0.02), expanding forget {expand_f:.4f} (<=0.15) retain "
                    f"{expand_r:.4f} (>= orig-0.03), retrain forget {retrain_f:.4f} "
                    f"(<=0.05), pipeline {wall:.1f}s (<300s)")


# --------------------------------------------------------------------- #
# 4. privacy trend                                                       #
# --------------------------------------------------------------------- #

def test_criterion_4_privacy_trend(suite):
    good = []
    details = []
    for seed in SEEDS:
        run = suite["runs"][seed]
        asr = {m: run.doc["reports"][m]["asr"]
               for m in ("original", "retrain", "finetune", "boundary_shrink")}
        holds = (asr["original"] > asr["retrain"]
                 and abs(asr["boundary_shrink"] - asr["retrain"])
                 < abs(asr["original"] - asr["retrain"])
                 and asr["finetune"] > asr["boundary_shrink"])
        good.append(holds)
        details.append(f"s{seed}:o={asr['original']:.2f},r={asr['retrain']:.2f},"
                       f"b={asr['boundary_shrink']:.2f},f={asr['finetune']:.2f}")
    ok = sum(good) >= 4
    assert announce(4, ok,
                    f"attack-rate orderings hold on {sum(good)}/5 seeds (>=4) "
                    f"[{'; '.join(details)}]")


# --------------------------------------------------------------------- #
# 5. entropy (Streisand) check                                           #
# --------------------------------------------------------------------- #

def test_criterion_5_entropy_increase(suite):
    increases = []
    jumps = []
    for seed in SEEDS:
        run = suite["runs"][seed]
        base = _median_forget_entropy(run, "original")
        shrink = _median_forget_entropy(run, "boundary_shrink")
        expand = _median_forget_entropy(run, "boundary_expanding")
        random_l = _median_forget_entropy(run, "random_labels")
        increases.append(shrink > base and expand > base)
        jumps.append(random_l - base > shrink - base)
    run0 = suite["runs"][0]
    ok = (increases[0] and sum(increases) >= 4 and sum(jumps) >= 4)
    assert announce(5, ok,
                    f"median forget-entropy rises on {sum(increases)}/5 seeds "
                    f"(seed0 orig {_median_forget_entropy(run0, 'original'):.3f} -> "
                    f"shrink {_median_forget_entropy(run0, 'boundary_shrink'):.3f}, "
                    f"expanding {_median_forget_entropy(run0, 'boundary_expanding'):.3f}); "
                    f"random-labels jump larger on {sum(jumps)}/5 seeds (>=4)")


# --------------------------------------------------------------------- #
# 6. timing trend                                                        #
# --------------------------------------------------------------------- #

def test_criterion_6_timing_trend(suite):
    med = {m: float(np.median([suite["runs"][s].walls[m] for s in SEEDS]))
           for m in ("retrain", "boundary_shrink", "boundary_expanding")}
    shrink_speedup = med["retrain"] / med["boundary_shrink"]
    expand_speedup = med["retrain"] / med["boundary_expanding"]

    # Both boundary methods run in milliseconds here, so the expanding vs
    # shrinking comparison needs a low-noise wall-clock estimate: scheduler
    # and GC pauses only ever add time, so low order statistics over many
    # runs approach each method's true cost. BLAS thread pools are pinned
    # to one thread to remove sync jitter on tiny matrices, run order is
    # randomized within each pair to break alignment with periodic system
    # load, and the 5th-smallest wall is compared instead of the absolute
    # minimum so a single lucky reading cannot decide the outcome.
    run0 = suite["runs"][0]
    shrink_cfg = ShrinkConfig(
        epsilon=run0.cfg.epsilon,
        finetune=_unlearn_sgd(run0.cfg, "unlearn.boundary_shrink"))
    expand_sgd = _unlearn_sgd(run0.cfg, "unlearn.boundary_expanding")

    def timed_shrink():
        return boundary_shrink(run0.original, run0.split,
                               shrink_cfg).wall_clock_seconds

    def timed_expand():
        return boundary_expanding(run0.original, run0.split,
                                  expand_sgd).wall_clock_seconds

    rng = np.random.default_rng(0)
    shrink_walls, expand_walls = [], []
    with threadpool_limits(limits=1):
        for _ in range(3):  # warmup
            timed_shrink()
            timed_expand()
        gc.disable()
        try:
            for _ in range(300):
                if rng.integers(2):
                    shrink_walls.append(timed_shrink())
                    expand_walls.append(timed_expand())
                else:
                    expand_walls.append(timed_expand())
                    shrink_walls.append(timed_shrink())
        finally:
            gc.enable()
    shrink_floor = float(np.sort(shrink_walls)[4])
    expand_floor = float(np.sort(expand_walls)[4])

    ok = (shrink_speedup >= 3.0 and expand_speedup >= 3.0
          and expand_floor <= shrink_floor)
    assert announce(6, ok,
                    f"median walls: retrain {med['retrain']:.3f}s, shrink "
                    f"{med['boundary_shrink']:.4f}s ({shrink_speedup:.1f}x, >=3x), "
                    f"expanding {med['boundary_expanding']:.4f}s "
                    f"({expand_speedup:.1f}x, >=3x); 5th-smallest of 300 walls: "
                    f"expanding {expand_floor * 1e3:.3f}ms <= shrink "
                    f"{shrink_floor * 1e3:.3f}ms")


# --------------------------------------------------------------------- #
# 7. decision-space trend                                                #
# --------------------------------------------------------------------- #

def test_criterion_7_decision_regions(suite):
    run = suite["runs"][0]
    t = run.cfg.forget_class
    area_orig = run.doc["reports"]["original"]["region_area"][t]
    area_shrink = run.doc["reports"]["boundary_shrink"]["region_area"][t]
    area_ok = area_shrink <= 0.5 * area_orig

    violations = 0
    total = 0
    for seed in SEEDS:
        r = suite["runs"][seed]
        crossed = neighbor_search(r.original, r.split.X_forget, t, r.cfg.epsilon)
        labels = nearest_incorrect_labels(r.original, crossed, t)
        violations += int(np.sum(labels == t))
        total += labels.size
    ok = area_ok and violations == 0
    assert announce(7, ok,
                    f"forget-class region area {area_orig:.4f} -> {area_shrink:.4f} "
                    f"(<=50%), replacement label != target for {total - violations}"
                    f"/{total} samples (need 100%)")


# --------------------------------------------------------------------- #
# 8. determinism, persistence, access discipline                         #
# --------------------------------------------------------------------- #

def test_criterion_8_determinism_and_discipline(suite, tmp_path):
    out0 = suite["out_dir"]
    rerun = run_experiment(ExperimentConfig(), tmp_path / "rerun")
    results_ok = (out0 / "results.json").read_bytes() == \
        (tmp_path / "rerun" / "results.json").read_bytes()

    ckpt = out0 / "checkpoints" / "original.ckpt"
    model, prov = load_checkpoint(ckpt)
    again = tmp_path / "roundtrip.ckpt"
    save_checkpoint(model, {k: v for k, v in prov.items() if k != "expanded"}, again)
    ckpt_ok = ckpt.read_bytes() == again.read_bytes()

    ds = make_blobs(n_classes=4, per_class=20, spread=0.4, seed=6)
    split = forget_split(ds, 0)
    original = DenseClassifier(hidden_layers=(8,), n_classes=4, learning_rate=0.1,
                               epochs=10, seed=0)
    original.fit(ds.X_train, ds.y_train)
    sgd = SGDConfig(learning_rate=1e-3, epochs=1, seed=0)
    template = DenseClassifier(hidden_layers=(8,), n_classes=4, epochs=1, seed=1)
    calls = {
        "retrain": (lambda s: retrain(s, template), {"X_retain", "y_retain"}),
        "finetune": (lambda s: finetune_baseline(original, s, sgd),
                     {"X_retain", "y_retain"}),
        "negative_gradient": (lambda s: negative_gradient_baseline(original, s, sgd),
                              {"X_forget", "y_forget"}),
        "random_labels": (lambda s: random_labels_baseline(original, s, sgd),
                          {"X_forget", "y_forget"}),
        "boundary_shrink": (lambda s: boundary_shrink(
            original, s, ShrinkConfig(finetune=sgd)), {"X_forget", "y_forget"}),
        "boundary_expanding": (lambda s: boundary_expanding(original, s, sgd),
                               {"X_forget", "y_forget"}),
    }
    discipline_ok = True
    for name in METHODS:
        func, allowed = calls[name]
        counted = CountingSplit(split)
        func(counted)
        try:
            counted.assert_only_read(allowed)
        except AssertionError:
            discipline_ok = False

    ok = results_ok and ckpt_ok and discipline_ok
    assert announce(8, ok,
                    f"rerun results.json bit-identical {results_ok}, checkpoint "
                    f"round-trip byte-identical {ckpt_ok}, access discipline over "
                    f"{len(METHODS)} methods {discipline_ok}")
