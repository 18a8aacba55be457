"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/python
Run:                      python python/smoke_test.py
"""

import math
import os
import tempfile

import pslosses as ps


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_recall_example():
    p = ps.Propensities.uniform(3, 1.0 / 3.0)
    rows = {(): 0.0, (1,): 0.0, (0,): 3.0, (0, 1): -1.5}
    for observed, want in rows.items():
        assert close(ps.ps_recall(p, list(observed), [0]), want), observed
    expectation = ps.mask_expectation(lambda y: ps.ps_recall(p, y, [0]), p, [0, 1])
    assert close(expectation, 0.5), expectation


def check_binary():
    p, s = 0.25, 0.3
    clean = ps.binary_loss("bce", "vanilla", 1.0, True, s)
    unbiased = p * ps.binary_loss("bce", "unbiased", p, True, s) + (1 - p) * ps.binary_loss("bce", "unbiased", p, False, s)
    assert close(unbiased, clean), (unbiased, clean)
    h = 1e-6
    fd = (ps.binary_loss("se", "upper_bound", p, True, s + h) - ps.binary_loss("se", "upper_bound", p, True, s - h)) / (2 * h)
    assert abs(fd - ps.binary_gradient("se", "upper_bound", p, True, s)) < 1e-6


def check_general_and_reductions():
    p = ps.Propensities([0.3, 0.6, 0.9, 0.45])
    table = {}

    def f(labels, scores):
        key = tuple(labels)
        table.setdefault(key, math.sin(len(table) + 1.0))
        return table[key]

    truth = [0, 2, 3]
    expectation = ps.mask_expectation(lambda y: ps.unbiased_general(f, p, y, [0.0] * 4), p, truth)
    assert close(expectation, f(truth, None), 1e-10), expectation

    r = ps.Reduction("ova-bce/unbiased")
    vanilla = ps.Reduction("ova-bce/vanilla")
    scores = [0.2, 0.7, 0.4, 0.9]
    direct = r.loss(p, [1, 3], scores)
    via_general = ps.unbiased_general(lambda y, s: vanilla.loss(p, y, s), p, [1, 3], scores)
    assert close(direct, via_general, 1e-10)
    assert len(r.gradient(p, [1, 3], scores)) == 4
    assert str(r) == "ova-bce/unbiased"

    try:
        ps.unbiased_general(lambda y, s: 1 / 0, p, [0], scores)
    except ZeroDivisionError:
        pass
    else:
        raise AssertionError("python errors must propagate")
    try:
        ps.Reduction("nope-bce")
    except ValueError:
        pass
    else:
        raise AssertionError("bad specs must raise ValueError")


def check_metrics_and_simulation():
    assert ps.precision_at_k([0, 2], [0.9, 0.1, 0.8], 2) == 1.0
    assert ps.recall_at_k([0, 2], [0.9, 0.1, 0.8], 1) == 0.5
    rows = ps.simulate_recall([0.5, 1.0], reps=4, num_labels=10, num_examples=200)
    assert len(rows) == 6
    at_one = [r for r in rows if r["p"] == 1.0]
    assert len({r["mean"] for r in at_one}) == 1


def check_training():
    features = [[(0, 1.0), (1, float(i % 2))] for i in range(40)]
    labels = [[0] + ([1] if i % 2 else []) for i in range(40)]
    data = ps.Dataset(2, 2, features, labels)
    p = ps.Propensities.linear_inverse(data.label_counts(), 1.0, 2.0)
    model = ps.train(data, p, loss="ova-se/unbiased", epochs_phase1=40, lr_phase1=0.05, batch_size=8)
    assert model.num_features == 2 and model.num_labels == 2
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.bin")
        model.save(path)
        again = ps.LinearModel.load(path)
        assert again.weights == model.weights and again.bias == model.bias
    try:
        ps.train(data, p, loss="ova-bce/unbiased", lr_phase1=1e308, epochs_phase1=2)
    except ps.DivergenceError:
        pass
    else:
        raise AssertionError("expected divergence")


if __name__ == "__main__":
    for check in [check_recall_example, check_binary, check_general_and_reductions, check_metrics_and_simulation, check_training]:
        check()
        print(f"ok {check.__name__}")
    print(f"pslosses {ps.__version__}: all smoke checks passed")
