import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fershape.errors import (
    LabelError,
    LengthMismatchError,
    SingleClassError,
    TooFewSamplesError,
    TooFewSubjectsError,
)
from fershape.evaluation import (
    EvalConfig,
    FoldPlan,
    confusion,
    cross_validate,
    evaluate,
    fold_model,
    grid_search,
    make_folds,
)
from fershape.labels import CLASSES
from fershape.pipeline import build_feature_matrix
from fershape.synth import write_synthetic_dataset


def _clusters(seed=0, per=20):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]], float)
    X = np.vstack([c + rng.normal(0, 0.5, (per, 3)) for c in centers])
    labels = [lab for lab in ("AN", "HA", "SU") for _ in range(per)]
    return X, labels


# ---- folds ----

def test_1610_samples_five_folds():
    labels = [CLASSES[i % 7] for i in range(1610)]
    plan = make_folds(labels, k=5, seed=0)
    assert plan.sizes() == [322] * 5


def test_ten_samples():
    plan = make_folds(["HA", "SA"] * 5, k=5)
    assert plan.sizes() == [2] * 5


def test_too_few_subjects():
    with pytest.raises(TooFewSubjectsError):
        make_folds(["HA"] * 9, ["a", "b", "c"] * 3, k=5, mode="subject_independent")


def test_too_few_samples():
    with pytest.raises(TooFewSamplesError):
        make_folds(["HA", "SA", "AN"], k=5)


def test_stratified_per_class_balance():
    labels = ["AN"] * 23 + ["HA"] * 17 + ["SU"] * 30
    plan = make_folds(labels, k=5, seed=3)
    lab = np.array(labels)
    for c in ("AN", "HA", "SU"):
        counts = np.bincount(plan.assignments[lab == c], minlength=5)
        assert counts.max() - counts.min() <= 1


def test_folds_deterministic():
    labels = [CLASSES[i % 7] for i in range(100)]
    a = make_folds(labels, k=5, seed=11)
    b = make_folds(labels, k=5, seed=11)
    assert np.array_equal(a.assignments, b.assignments)


metadata = st.integers(10, 120).flatmap(
    lambda n: st.tuples(
        st.lists(st.sampled_from(CLASSES), min_size=n, max_size=n),
        st.lists(st.integers(0, 14), min_size=n, max_size=n),
        st.integers(2, 7),
        st.integers(0, 2**32 - 1),
    )
)


@settings(max_examples=100, deadline=None)
@given(metadata)
def test_partition_property(meta):
    labels, subjects, k, seed = meta
    plan = make_folds(labels, k=k, seed=seed)
    assert sorted(np.concatenate([te for _, te in plan.splits()]).tolist()) == list(range(len(labels)))
    sizes = plan.sizes()
    assert max(sizes) - min(sizes) <= 1
    subjects = [f"s{s}" for s in subjects]
    if len(set(subjects)) < k:
        with pytest.raises(TooFewSubjectsError):
            make_folds(labels, subjects, k, "subject_independent", seed)
        return
    plan = make_folds(labels, subjects, k, "subject_independent", seed)
    assert sorted(np.concatenate([te for _, te in plan.splits()]).tolist()) == list(range(len(labels)))
    owner = {}
    for s, f in zip(subjects, plan.assignments):
        assert owner.setdefault(s, f) == f


# ---- confusion ----

def test_all_correct():
    labels = ["AN", "HA", "SU"] * 4
    cm = confusion(labels, labels)
    assert cm.tp_rates().tolist() == [100.0] * 3
    assert cm.fn_rates().tolist() == [0.0] * 3
    assert cm.accuracy == 1.0


def test_happy_row():
    true = ["HA"] * 10 + ["SA"] * 5
    pred = ["HA"] * 10 + ["HA", "SA", "SA", "SA", "SA"]
    cm = confusion(true, pred)
    assert cm.classes == ("HA", "SA")
    assert cm.tp_rates()[0] == 100.0 and cm.fn_rates()[0] == 0.0


def test_anger_row_percentages():
    true = ["AN"] * 33
    pred = ["AN"] * 28 + ["DI"] * 4 + ["FE"]
    cm = confusion(true, pred, CLASSES)
    exact = cm.percentages(decimals=None)[0]
    row = cm.percentages()[0]
    cols = [CLASSES.index(c) for c in ("AN", "DI", "FE")]
    np.testing.assert_allclose(exact[cols], [84.8, 12.1, 3.0], atol=0.05)
    # rounded cells stay within 0.1 of the exact value and the row sums to 100
    np.testing.assert_allclose(row[cols], [84.8, 12.1, 3.0], atol=0.1 + 1e-9)
    assert row.sum() == pytest.approx(100.0)
    assert cm.counts[0].sum() == 33


def test_confusion_errors():
    with pytest.raises(LengthMismatchError):
        confusion(["AN", "HA"], ["AN"])
    with pytest.raises(LabelError):
        confusion(["AN", "XX"], ["AN", "AN"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(CLASSES), st.sampled_from(CLASSES)), min_size=1, max_size=300))
def test_percentage_rows_sum_to_100(pairs):
    true, pred = zip(*pairs)
    cm = confusion(true, pred, CLASSES)
    pct = cm.percentages()
    present = cm.counts.sum(axis=1) > 0
    assert np.all(np.abs(pct[present].sum(axis=1) - 100.0) <= 0.1)
    assert np.all(np.abs(pct - cm.percentages(decimals=None)) < 0.1 + 1e-9)
    np.testing.assert_array_equal(cm.counts.sum(axis=1), [true.count(c) for c in CLASSES])


def test_confusion_table_and_csv():
    cm = confusion(["AN", "HA", "HA"], ["AN", "HA", "AN"])
    table = cm.format_table()
    assert "TP" in table and "FN" in table and "50.0" in table
    assert cm.to_csv().splitlines() == ["true\\predicted,AN,HA", "AN,1,0", "HA,1,1"]


# ---- cross-validation and grid search ----

def test_no_test_fold_leakage():
    X, labels = _clusters(seed=1)
    plan = make_folds(labels, k=5, seed=2)
    train, test = next(plan.splits())
    base = fold_model(X, labels, train, 1.0, 0.5)
    X2 = X.copy()
    X2[test] += np.random.default_rng(3).normal(0, 50, X2[test].shape)
    other = fold_model(X2, labels, train, 1.0, 0.5)
    assert np.array_equal(base.standardizer.mean, other.standardizer.mean)
    for a, b in zip(base.binary_models, other.binary_models):
        assert np.array_equal(a.dual_coef, b.dual_coef) and a.bias == b.bias
    cv = cross_validate(X, labels, plan, 1.0, 0.5)
    assert [cv.predictions[i] for i in test] == base.predict(X[test])


def test_grid_single_cell():
    X, labels = _clusters()
    plan = make_folds(labels, k=5)
    g = grid_search(X, labels, plan, [2.0], [0.25])
    assert (g.best.C, g.best.gamma) == (2.0, 0.25)
    assert len(g.cells) == 1
    assert g.best.accuracy == cross_validate(X, labels, plan, 2.0, 0.25).mean_accuracy


def test_grid_separable():
    X, labels = _clusters()
    g = grid_search(X, labels, make_folds(labels, k=5), [1, 10], [0.1, 1])
    assert g.best.accuracy == 1.0
    # every cell is perfect here, so the tie rule picks the smallest C and gamma
    assert (g.best.C, g.best.gamma) == (1, 0.1)
    assert g.to_csv().splitlines()[0] == "C,gamma,cv_accuracy,failed"


def test_grid_failed_cell_scores_zero():
    X, labels = _clusters(per=5)
    # fold 0 holds every HA and SU sample, so its training rows are a single class
    assign = np.array([1, 2, 3, 4, 1] + [0] * 10)
    plan = FoldPlan(5, assign, "stratified", 0)
    g = grid_search(X, labels, plan, [1.0], [0.5, 1.0])
    assert all(c.failed and c.accuracy == 0.0 for c in g.cells)
    assert "SingleClassError" in g.cells[0].error


def test_grid_rejects_empty():
    X, labels = _clusters()
    with pytest.raises(ValueError):
        grid_search(X, labels, make_folds(labels, k=5), [], [1.0])


# ---- evaluate ----

@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    return build_feature_matrix(write_synthetic_dataset(out, per_class=10, noise=0.5, seed=5))


SMALL_GRID = EvalConfig(C_grid=(1.0, 8.0), gamma_grid=(2.0**-9, 2.0**-7), seed=4)


def test_evaluate_report_sections(small_dataset, tmp_path):
    report = evaluate(small_dataset, SMALL_GRID)
    assert report.seven.confusion.classes == CLASSES
    assert report.six.confusion.classes == tuple(c for c in CLASSES if c != "NE")
    assert report.six.confusion.total == 60
    out = report.write(tmp_path / "r")
    for name in ("report.txt", "confusion.csv", "grid.csv", "metrics.json"):
        assert (out / name).is_file()
    text = (out / "report.txt").read_text()
    assert "seed: 4" in text and "Six-class" in text


def test_evaluate_reproducible(small_dataset, tmp_path):
    a = evaluate(small_dataset, SMALL_GRID).write(tmp_path / "a")
    b = evaluate(small_dataset, SMALL_GRID).write(tmp_path / "b")
    for f in sorted(p.name for p in a.iterdir()):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_evaluate_single_class(small_dataset):
    rows = [i for i, lab in enumerate(small_dataset.labels) if lab == "HA"]
    with pytest.raises(SingleClassError):
        evaluate(small_dataset.subset(rows), SMALL_GRID)


def test_evaluate_subject_independent(small_dataset):
    cfg = EvalConfig(mode="subject_independent", C_grid=(4.0,), gamma_grid=(2.0**-9,), six_class=False)
    report = evaluate(small_dataset, cfg)
    assert report.six is None
    assert report.seven.confusion.total == len(small_dataset)
