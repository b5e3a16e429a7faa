"""
Property-based tests for the SMO classifier, K-fold splitting and grid search.

Geometric oracles (two-point bisector, maximum-margin direction on a
lattice) check the solver; the validation tests check fold bookkeeping
and grid-order determinism.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.models.cohort import OutcomeEnum
from app.services.svm import (
    CvReport,
    FeatureMismatchError,
    GridSearchFailedError,
    KernelKindEnum,
    KernelSpec,
    KTooLargeError,
    LabeledDataset,
    ParameterGrid,
    SingleClassError,
    Standardizer,
    SvmModel,
    ZeroVarianceFeatureError,
    cross_validate,
    decision_function,
    grid_search_cv,
    kernel_matrix,
    kfold_split,
    log2_grid,
    predict,
    predict_many,
    standardize_fit,
    train_svm,
)
from app.services.svm.kernels import KernelError
from app.services.svm.smo import DEFAULT_TOLERANCE, _smo_solve

seed_strategy = st.integers(min_value=0, max_value=2**32 - 1)
point_strategy = st.tuples(
    st.floats(min_value=-5.0, max_value=5.0), st.floats(min_value=-5.0, max_value=5.0)
)


def _blobs(seed: int, n_pos: int, n_neg: int, separation: float = 6.0, spread: float = 0.5) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    positive = rng.normal(separation / 2.0, spread, (n_pos, 2))
    negative = rng.normal(-separation / 2.0, spread, (n_neg, 2))
    return LabeledDataset(
        x=np.vstack([positive, negative]),
        y=np.array([1] * n_pos + [-1] * n_neg),
        feature_names=("f1", "f2"),
    )


def _one_feature(seed: int, n_pos: int, n_neg: int) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    values = np.concatenate([rng.uniform(2.0, 3.0, n_pos), rng.uniform(-3.0, -2.0, n_neg)])
    labels = [OutcomeEnum.IMPROVED] * n_pos + [OutcomeEnum.NONIMPROVED] * n_neg
    return LabeledDataset.from_labels(values[:, None], labels, ["gd1k"])


def _gap(direction: np.ndarray, data: LabeledDataset) -> float:
    """Width of the empty slab between the classes along a unit direction."""
    projected = data.x @ direction
    return float(projected[data.y > 0].min() - projected[data.y < 0].max())


class TestKernels:
    """Sigmoid and linear kernels."""

    def test_sigmoid_value(self) -> None:
        spec = KernelSpec.sigmoid(0.5, -1.0)
        assert spec.value(np.array([1.0, 2.0]), np.array([3.0, 1.0])) == pytest.approx(math.tanh(1.5))

    def test_linear_matrix(self) -> None:
        a = np.array([[1.0, 2.0], [0.0, 1.0]])
        assert np.array_equal(kernel_matrix(KernelSpec.linear(), a, a), a @ a.T)

    def test_sigmoid_needs_positive_gamma(self) -> None:
        with pytest.raises(KernelError):
            KernelSpec.sigmoid(0.0)

    def test_round_trip(self) -> None:
        spec = KernelSpec.from_dict(KernelSpec.sigmoid(0.25, -1.0).to_dict())
        assert spec.kind is KernelKindEnum.SIGMOID
        assert (spec.gamma, spec.coef0) == (0.25, -1.0)


class TestStandardizer:
    """Per-feature z-scoring from training rows."""

    @settings(max_examples=50, deadline=None)
    @given(seed=seed_strategy, n=st.integers(min_value=2, max_value=40))
    def test_training_rows_have_zero_mean_unit_sd(self, seed: int, n: int) -> None:
        rows = np.random.default_rng(seed).normal(3.0, 2.0, (n, 3))
        z = standardize_fit(rows).apply(rows)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-10)
        assert np.allclose(z.std(axis=0), 1.0, rtol=1e-10)

    def test_zero_variance_feature(self) -> None:
        rows = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        with pytest.raises(ZeroVarianceFeatureError) as e:
            standardize_fit(rows, ["energy", "gd1k"])
        assert e.value.details["features"] == ["gd1k"]

    def test_invert(self) -> None:
        rows = np.random.default_rng(1).standard_normal((5, 2))
        standardizer = standardize_fit(rows)
        assert np.allclose(standardizer.invert(standardizer.apply(rows)), rows)


class TestTraining:
    """Dual solutions of the soft-margin problem."""

    @settings(max_examples=50, deadline=None)
    @given(p=point_strategy, q=point_strategy)
    def test_two_points_split_on_bisector(
        self, p: tuple[float, float], q: tuple[float, float]
    ) -> None:
        """Two points of opposite class: the boundary is their perpendicular bisector."""
        p_arr, q_arr = np.array(p), np.array(q)
        diff = p_arr - q_arr
        if np.linalg.norm(diff) < 0.1:
            return
        data = LabeledDataset(x=np.vstack([p_arr, q_arr]), y=np.array([1, -1]), feature_names=("a", "b"))

        model = train_svm(data, 1e6, KernelSpec.linear(), standardize=False)

        midpoint = (p_arr + q_arr) / 2.0
        along = midpoint + 3.0 * np.array([-diff[1], diff[0]])
        values = decision_function(model, np.vstack([p_arr, q_arr, midpoint, along]))
        assert np.allclose(values, [1.0, -1.0, 0.0, 0.0], atol=1e-6)

    def test_separable_blobs_reach_maximum_margin(self) -> None:
        """The learned direction's class gap matches the best direction on a 1 degree lattice."""
        data = _blobs(3, 20, 20)
        model = train_svm(data, 1e3, KernelSpec.linear(), tol=1e-6, standardize=False)
        w = model.dual_coefs @ model.support_vectors

        angles = np.deg2rad(np.arange(360))
        lattice_best = max(_gap(np.array([math.cos(a), math.sin(a)]), data) for a in angles)

        assert lattice_best > 0.0
        assert _gap(w / np.linalg.norm(w), data) >= 0.99 * lattice_best
        assert 2.0 / np.linalg.norm(w) == pytest.approx(_gap(w / np.linalg.norm(w), data), rel=1e-2)

    def test_xor_with_shifted_sigmoid(self) -> None:
        """XOR is separable by tanh(<u, v> - 1)."""
        x = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        data = LabeledDataset(x=x, y=np.array([1, 1, -1, -1]), feature_names=("a", "b"))

        model = train_svm(data, 10.0, KernelSpec.sigmoid(1.0, -1.0))

        assert model.converged
        assert predict_many(model, x).tolist() == [1, 1, -1, -1]

    @settings(max_examples=30, deadline=None)
    @given(seed=seed_strategy, c=st.sampled_from([0.1, 1.0, 10.0]))
    def test_kkt_conditions_at_termination(self, seed: int, c: float) -> None:
        """Margins satisfy the KKT conditions of their dual variables within the tolerance."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((30, 2))
        y = np.where(x[:, 0] + 0.8 * rng.standard_normal(30) > 0, 1.0, -1.0)
        if abs(y.sum()) == 30:
            return
        kernel = x @ x.T

        result = _smo_solve(kernel, y, c)

        assert result.converged
        assert abs(float(np.dot(result.alpha, y))) <= 1e-9 * max(1.0, c)
        margins = y * (kernel @ (result.alpha * y) + result.bias)
        slack = DEFAULT_TOLERANCE + 1e-9
        at_zero = result.alpha <= 0.0
        at_c = result.alpha >= c
        free = ~at_zero & ~at_c
        assert np.all(margins[at_zero] >= 1.0 - slack)
        assert np.all(margins[at_c] <= 1.0 + slack)
        assert np.all(np.abs(margins[free] - 1.0) <= slack)
        assert np.all((result.alpha >= 0.0) & (result.alpha <= c))

    @settings(max_examples=15, deadline=None)
    @given(seed=seed_strategy, gamma=st.sampled_from([0.1, 0.5, 2.0]))
    def test_decision_matches_naive_sum(self, seed: int, gamma: float) -> None:
        data = _blobs(seed, 8, 9, separation=1.0)
        model = train_svm(data, 2.0, KernelSpec.sigmoid(gamma))
        queries = np.random.default_rng(seed).normal(0.0, 2.0, (6, 2))

        expected = []
        for query in queries:
            z = (query - model.standardizer.mean) / model.standardizer.scale
            total = model.bias
            for coef, vector in zip(model.dual_coefs, model.support_vectors):
                total += coef * math.tanh(gamma * float(np.dot(vector, z)))
            expected.append(total)

        assert np.allclose(decision_function(model, queries), expected, rtol=1e-10, atol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(seed=seed_strategy)
    def test_row_order_does_not_change_the_model(self, seed: int) -> None:
        data = _blobs(seed, 7, 6, separation=1.0)
        shuffled = data.take(np.random.default_rng(seed).permutation(data.n_rows))
        queries = np.random.default_rng(seed + 1).normal(0.0, 2.0, (5, 2))

        first = train_svm(data, 1.0, KernelSpec.sigmoid(0.5))
        second = train_svm(shuffled, 1.0, KernelSpec.sigmoid(0.5))

        assert np.array_equal(decision_function(first, queries), decision_function(second, queries))

    def test_single_class_rejected(self) -> None:
        data = LabeledDataset(x=np.array([[1.0], [2.0]]), y=np.array([1, 1]), feature_names=("a",))
        with pytest.raises(SingleClassError):
            train_svm(data, 1.0, KernelSpec.sigmoid(1.0))

    def test_serialized_model_decides_identically(self) -> None:
        model = train_svm(_blobs(2, 6, 6, separation=1.0), 1.0, KernelSpec.sigmoid(0.5))
        restored = SvmModel.from_dict(model.to_dict())
        queries = np.random.default_rng(0).standard_normal((4, 2))
        assert np.allclose(decision_function(restored, queries), decision_function(model, queries))


class TestPredict:
    """Single-vector classification."""

    def test_mapping_input(self) -> None:
        model = train_svm(_one_feature(1, 5, 5), 1.0, KernelSpec.sigmoid(1.0))
        assert predict(model, {"gd1k": 2.5})[0] is OutcomeEnum.IMPROVED
        assert predict(model, {"gd1k": -2.5})[0] is OutcomeEnum.NONIMPROVED

    def test_missing_feature(self) -> None:
        model = train_svm(_one_feature(1, 5, 5), 1.0, KernelSpec.sigmoid(1.0))
        with pytest.raises(FeatureMismatchError):
            predict(model, {"gd2k": 2.5})

    def test_wrong_width(self) -> None:
        model = train_svm(_one_feature(1, 5, 5), 1.0, KernelSpec.sigmoid(1.0))
        with pytest.raises(FeatureMismatchError):
            predict(model, [1.0, 2.0])

    def test_zero_decision_is_nonimproved(self) -> None:
        model = SvmModel(
            support_vectors=np.zeros((0, 1)),
            dual_coefs=np.zeros(0),
            bias=0.0,
            kernel=KernelSpec.sigmoid(1.0),
            standardizer=Standardizer.identity(1),
            feature_names=("gd1k",),
            c=1.0,
        )
        assert predict(model, [0.3]) == (OutcomeEnum.NONIMPROVED, 0.0)


class TestKfoldSplit:
    """Fold partitioning."""

    def test_study_sized_stratified_split(self) -> None:
        """14 improved and 16 nonimproved ears give five folds of six, 2-3 improved each."""
        labels = np.array([1] * 14 + [-1] * 16)
        folds = kfold_split(30, 5, seed=0, labels=labels)
        assert [fold.size for fold in folds] == [6] * 5
        assert all(2 <= int(np.sum(labels[fold] == 1)) <= 3 for fold in folds)

    def test_leave_one_out(self) -> None:
        folds = kfold_split(7, 7, seed=1)
        assert sorted(int(fold[0]) for fold in folds) == list(range(7))
        assert all(fold.size == 1 for fold in folds)

    @settings(max_examples=100, deadline=None)
    @given(
        n=st.integers(min_value=4, max_value=60),
        data=st.data(),
        seed=seed_strategy,
        stratified=st.booleans(),
    )
    def test_folds_partition_rows(self, n: int, data: st.DataObject, seed: int, stratified: bool) -> None:
        labels = None
        if stratified:
            k = data.draw(st.integers(min_value=2, max_value=n // 2))
            n_improved = data.draw(st.integers(min_value=k, max_value=n - k))
            labels = np.random.default_rng(seed).permutation([1] * n_improved + [-1] * (n - n_improved))
        else:
            k = data.draw(st.integers(min_value=2, max_value=n))

        folds = kfold_split(n, k, seed, labels)

        joined = np.concatenate(folds)
        assert sorted(joined.tolist()) == list(range(n))
        sizes = [fold.size for fold in folds]
        assert max(sizes) - min(sizes) <= 1
        if labels is not None:
            for value in (-1, 1):
                share = np.sum(labels == value) / k
                counts = [int(np.sum(labels[fold] == value)) for fold in folds]
                assert all(abs(count - share) < 1.0 + 1e-9 for count in counts)

    def test_same_seed_same_folds(self) -> None:
        first = kfold_split(20, 4, seed=9)
        second = kfold_split(20, 4, seed=9)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    @pytest.mark.parametrize("n,k", [(4, 5), (4, 1), (0, 2)])
    def test_invalid_k(self, n: int, k: int) -> None:
        with pytest.raises(KTooLargeError):
            kfold_split(n, k)

    def test_class_smaller_than_k(self) -> None:
        """Three improved rows cannot be spread over five stratified folds."""
        labels = np.array([1] * 3 + [-1] * 12)
        with pytest.raises(KTooLargeError) as excinfo:
            kfold_split(15, 5, seed=0, labels=labels)
        assert excinfo.value.code == "k-too-large"
        assert excinfo.value.details["class_size"] == 3
        assert len(kfold_split(15, 5, seed=0)) == 5


class TestGridSearch:
    """(C, gamma) search with shared folds."""

    def test_default_log2_axis(self) -> None:
        grid = log2_grid()
        assert grid.size == 121
        assert grid[0] == 2.0**-6 and grid[-1] == 2.0**6
        assert grid[60] == 1.0

    def test_single_cell_equals_cross_validate(self) -> None:
        data = _blobs(4, 8, 9, separation=1.0)
        grid_report = grid_search_cv(data, ParameterGrid.single(0.5, 0.25), k=4, seed=3)
        cv_report = cross_validate(data, 0.5, KernelSpec.sigmoid(0.25), k=4, seed=3)
        assert grid_report.fold_accuracies == cv_report.fold_accuracies
        assert grid_report.mean_accuracy == cv_report.mean_accuracy

    def test_separable_data_is_fully_accurate(self) -> None:
        report = grid_search_cv(_one_feature(5, 10, 10), ParameterGrid.log2(-2.0, 2.0, 1.0), k=5, seed=0)
        assert report.mean_accuracy == 1.0
        assert report.fold_accuracies == [1.0] * 5

    def test_first_maximum_wins(self) -> None:
        """Every cell scores 100% here, so the smallest C and gamma are reported."""
        report = grid_search_cv(_one_feature(5, 10, 10), ParameterGrid.log2(-2.0, 2.0, 1.0), k=5, seed=0)
        assert all(accuracy == 1.0 for accuracy in report.grid_results.values())
        assert (report.best_c, report.best_gamma) == (0.25, 0.25)

    def test_deterministic_across_runs_and_workers(self) -> None:
        data = _blobs(6, 9, 8, separation=1.0)
        grid = ParameterGrid.log2(-3.0, 3.0, 1.5)
        serial = grid_search_cv(data, grid, k=3, seed=11)
        again = grid_search_cv(data, grid, k=3, seed=11)
        parallel = grid_search_cv(data, grid, k=3, seed=11, n_jobs=2)
        assert serial.to_dict() == again.to_dict() == parallel.to_dict()

    def test_report_round_trip(self) -> None:
        report = grid_search_cv(_blobs(6, 9, 8, separation=1.0), ParameterGrid.log2(-1.0, 1.0, 1.0), k=3, seed=2)
        restored = CvReport.from_dict(report.to_dict())
        assert restored.grid_results == report.grid_results
        assert (restored.best_c, restored.best_gamma) == (report.best_c, report.best_gamma)

    def test_all_cells_failing(self) -> None:
        """A training fold holding one class makes every cell fail."""
        data = LabeledDataset(
            x=np.array([[0.0], [1.0], [2.0], [3.0]]),
            y=np.array([-1, 1, 1, 1]),
            feature_names=("a",),
        )
        with pytest.raises(GridSearchFailedError):
            grid_search_cv(data, ParameterGrid.single(1.0, 1.0), k=2, seed=0, stratified=False)

    def test_constant_training_fold_fails_every_cell(self) -> None:
        """Leaving out the only nonzero row leaves a constant training column."""
        data = LabeledDataset(
            x=np.array([[0.0], [0.0], [0.0], [0.0], [5.0], [0.0]]),
            y=np.array([-1, -1, -1, 1, 1, 1]),
            feature_names=("a",),
        )
        grid = ParameterGrid.log2(-1.0, 1.0, 1.0)
        with pytest.raises(GridSearchFailedError) as excinfo:
            grid_search_cv(data, grid, k=6, seed=0, stratified=False)
        failures = excinfo.value.details["failures"]
        assert len(failures) == grid.size
        assert set(failures.values()) == {"zero-variance-feature"}

    def test_single_class_dataset(self) -> None:
        data = LabeledDataset(x=np.array([[0.0], [1.0], [2.0]]), y=np.array([1, 1, 1]), feature_names=("a",))
        with pytest.raises(SingleClassError):
            grid_search_cv(data, ParameterGrid.single(1.0, 1.0), k=2)

    def test_k_larger_than_rows(self) -> None:
        with pytest.raises(KTooLargeError):
            grid_search_cv(_one_feature(1, 2, 2), ParameterGrid.single(1.0, 1.0), k=5)
