import numpy as np
import pytest
from scipy.optimize import minimize

from scatmir.classify import (ConfusionMatrix, OvoModel, SvmModel, Track, assign_folds,
                              classify_track, confusion, cross_validate, gaussian_kernel,
                              kkt_violations, load_model, ovo_train, save_model, svm_train,
                              track_split)
from scatmir.errors import EvaluationError, InvalidInputError, TrainingError


def blobs(n, centers, spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    x = np.vstack([c + spread * rng.standard_normal((n, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n)
    return x, y


def dual_oracle(x, y, C, gamma):
    """Soft-margin dual solved by a generic constrained optimizer."""
    K = gaussian_kernel(x, x, gamma)
    Q = (y[:, None] * y[None, :]) * K
    res = minimize(lambda a: 0.5 * a @ Q @ a - a.sum(), np.zeros(y.size),
                   jac=lambda a: Q @ a - 1.0, method="SLSQP", bounds=[(0, C)] * y.size,
                   constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
                   options={"ftol": 1e-12, "maxiter": 1000})
    a = res.x
    g = Q @ a - 1.0
    free = (a > 1e-6) & (a < C - 1e-6)
    b = float(np.mean(-y[free] * g[free])) if np.any(free) else 0.0
    return lambda z: gaussian_kernel(z, x, gamma) @ (a * y) + b


class TestKernel:
    def test_values(self):
        a = np.array([[0.0, 0.0], [1.0, 2.0]])
        K = gaussian_kernel(a, a, 0.5)
        np.testing.assert_allclose(K, [[1, np.exp(-2.5)], [np.exp(-2.5), 1]])

    @pytest.mark.parametrize("seed", range(3))
    def test_psd(self, seed):
        x = np.random.default_rng(seed).standard_normal((30, 4))
        K = gaussian_kernel(x, x, 0.7)
        np.testing.assert_allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8


class TestBinary:
    def test_separable(self):
        x, y = blobs(20, [(-2, -2), (2, 2)])
        y = np.where(y == 0, 1, -1)
        m = svm_train(x, y, C=10, gamma=0.5)
        assert np.all(m.predict(x) == y)
        assert np.all(y * m.decision(x) > 0)

    def test_xor(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([1, 1, -1, -1])
        m = svm_train(x, y, C=10, gamma=1.0)
        assert np.all(m.predict(x) == y)

    @pytest.mark.parametrize("seed", range(3))
    def test_against_qp_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((20, 2))
        y = np.where(x[:, 0] + 0.5 * rng.standard_normal(20) > 0, 1.0, -1.0)
        m = svm_train(x, y, C=1.0, gamma=0.5, tol=1e-6)
        oracle = dual_oracle(x, y, 1.0, 0.5)
        z = rng.standard_normal((50, 2))
        np.testing.assert_allclose(m.decision(z), oracle(z), atol=1e-3)

    @pytest.mark.parametrize("seed", range(3))
    def test_kkt(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((60, 3))
        y = np.where(np.sum(x ** 2, axis=1) > 2.5, 1, -1)
        m = svm_train(x, y, C=1.0, gamma=0.5, tol=1e-3)
        assert kkt_violations(m, x, y).max() <= 1e-3
        assert np.all(np.abs(m.dual_coef) <= m.C + 1e-12)

    def test_scale_gamma_invariance(self):
        x, y = blobs(15, [(-1, 0), (1, 0)], spread=0.8, seed=3)
        y = np.where(y == 0, 1, -1)
        a = svm_train(x, y, C=1.0, gamma=1.0, tol=1e-6)
        b = svm_train(2 * x, y, C=1.0, gamma=0.25, tol=1e-6)
        z = np.random.default_rng(4).standard_normal((20, 2))
        np.testing.assert_allclose(a.decision(z), b.decision(2 * z), atol=1e-9)

    def test_single_class(self):
        with pytest.raises(TrainingError):
            svm_train(np.zeros((3, 2)), [1, 1, 1])

    def test_bad_labels(self):
        with pytest.raises(TrainingError):
            svm_train(np.zeros((2, 2)), [0, 1])

    def test_bad_params(self):
        with pytest.raises(TrainingError):
            svm_train(np.eye(2), [1, -1], C=0)


class TestOvo:
    def test_three_clusters(self):
        centers = [(0, 0), (4, 0), (0, 4)]
        x, y = blobs(40, centers)
        m = ovo_train(x, y, C=10, gamma=0.5)
        assert len(m.models) == 3
        xt, yt = blobs(100, centers, seed=1)
        assert np.mean(np.array(m.predict(xt)) == yt) >= 0.99

    def test_two_classes_match_binary(self):
        x, y = blobs(15, [(-1, 0), (1, 0)], spread=0.8, seed=5)
        m = ovo_train(x, y, C=1.0, gamma=0.5)
        b = svm_train(x, np.where(y == 0, 1, -1), C=1.0, gamma=0.5)
        z = np.random.default_rng(6).standard_normal((40, 2))
        expect = np.where(b.predict(z) == 1, 0, 1)
        np.testing.assert_array_equal(m.predict(z), expect)

    def test_identical_vectors_deterministic(self):
        x = np.ones((6, 2))
        y = ["a", "a", "b", "b", "c", "c"]
        m = ovo_train(x, y, C=1.0, gamma=1.0)
        p = m.predict(np.ones((3, 2)))
        assert p == m.predict(np.ones((3, 2)))
        assert len(set(p)) == 1

    def test_missing_class(self):
        with pytest.raises(TrainingError):
            ovo_train(np.eye(2), ["a", "b"], classes=("a", "b", "c"))

    def test_one_class(self):
        with pytest.raises(TrainingError):
            ovo_train(np.eye(2), ["a", "a"])

    def test_serialisation(self):
        x, y = blobs(10, [(0, 0), (3, 0), (0, 3)])
        m = ovo_train(x, [f"I{v}" for v in y], C=1.0, gamma=0.5, standardize=True)
        data = save_model(m)
        back = load_model(data)
        z = np.random.default_rng(7).standard_normal((20, 2))
        assert back.predict(z) == m.predict(z)
        np.testing.assert_array_equal(back.votes(z)[1], m.votes(z)[1])
        assert save_model(back) == data

    def test_bad_container(self):
        with pytest.raises(InvalidInputError):
            load_model(b"nope")


def constant_model(winners):
    """Three-class ovo model whose pair decisions are fixed constants."""
    models = tuple(SvmModel(np.zeros((0, 1)), np.zeros(0), float(d), 1.0, 1.0)
                   for d in winners)
    return OvoModel(("I1", "I2", "I3"), ((0, 1), (0, 2), (1, 2)), models)


class TestTrackVote:
    def test_unanimous(self):
        m = constant_model([-1.0, -1.0, -1.0])
        assert classify_track(m, np.zeros((5, 1))) == "I3"

    def test_plurality(self):
        x, y = blobs(20, [(-3,), (3,)])
        m = ovo_train(x, ["I1" if v == 0 else "I2" for v in y], C=10, gamma=0.5)
        frames = np.vstack([np.full((6, 1), -3.0), np.full((4, 1), 3.0)])
        assert classify_track(m, frames) == "I1"

    def test_tie_branches(self):
        # each class wins one pair with equal votes; strength decides
        strong_i2 = constant_model([0.5, -0.5, 2.0])
        assert classify_track(strong_i2, np.zeros((1, 1))) == "I2"
        strong_i3 = constant_model([0.5, -0.5, -2.0])
        assert classify_track(strong_i3, np.zeros((1, 1))) == "I3"
        even = constant_model([1.0, -1.0, 1.0])
        # votes I1:1, I2:1, I3:1 with equal strength -> lowest index
        assert classify_track(even, np.zeros((1, 1))) == "I1"

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            classify_track(constant_model([1, 1, 1]), np.zeros((0, 1)))


class TestConfusion:
    def test_diagonal(self):
        cm = confusion(["a", "b", "b"], ["a", "b", "b"])
        np.testing.assert_array_equal(cm.counts, [[1, 0], [0, 2]])
        assert cm.error_rate == 0

    def test_one_error(self):
        cm = confusion(["I1"] * 10, ["I2"] + ["I1"] * 9, ("I1", "I2"))
        assert cm.counts[0, 1] == 1 and cm.counts[0, 0] == 9
        np.testing.assert_allclose(cm.per_class_error, [0.1, 0.0])
        np.testing.assert_allclose(np.diag(cm.normalized()), [0.9, 0.0])

    def test_tables(self):
        cm = ConfusionMatrix(("a", "b"), np.array([[3, 1], [0, 2]]))
        rows = cm.error_table_csv().splitlines()
        assert rows[0] == "class,n_test,n_correct,error_rate"
        assert rows[1].startswith("a,4,3,") and rows[-1].startswith("all,6,5,")
        assert cm.to_csv().splitlines()[1] == "a,3,1"

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            confusion(["a"], [])


def toy_tracks(n_classes, per_class, frames=3, dim=4, spread=0.2, seed=0):
    rng = np.random.default_rng(seed)
    centers = 3.0 * rng.standard_normal((n_classes, dim))
    out = []
    for c in range(n_classes):
        for k in range(per_class):
            f = centers[c] + spread * rng.standard_normal((frames, dim))
            out.append(Track(f"c{c}-{k:03d}", f"c{c}", f))
    return out


class TestCrossValidate:
    grid = dict(grid_C=(1.0, 10.0), grid_gamma=(0.1, 1.0))

    def test_separable(self):
        rep = cross_validate(toy_tracks(3, 10), seed=1, **self.grid)
        assert rep.error_rate == 0
        assert all(v == 0 for v in rep.cv_errors.values())

    def test_split_is_track_level(self):
        tracks = toy_tracks(3, 10)
        train, test = track_split(tracks, 0.3, np.random.default_rng(0))
        assert not {t.track_id for t in train} & {t.track_id for t in test}
        assert len(test) == 9 and len(train) == 21

    def test_row_sums(self):
        rep = cross_validate(toy_tracks(4, 10, spread=3.0), seed=2, **self.grid)
        assert rep.confusion.counts.sum(axis=1).tolist() == [3] * 4
        np.testing.assert_allclose(np.diag(rep.confusion.normalized()),
                                   1 - rep.confusion.per_class_error)

    def test_deterministic(self):
        a = cross_validate(toy_tracks(3, 10, spread=2.0), seed=3, **self.grid)
        b = cross_validate(toy_tracks(3, 10, spread=2.0), seed=3, **self.grid)
        assert a.to_json() == b.to_json()

    def test_folds_stratified(self):
        tracks = toy_tracks(2, 10)
        f = assign_folds(tracks, 5, np.random.default_rng(0))
        for c in ("c0", "c1"):
            counts = np.bincount([f[t.track_id] for t in tracks if t.label == c])
            assert counts.tolist() == [2] * 5

    def test_too_few_tracks(self):
        with pytest.raises(EvaluationError):
            cross_validate(toy_tracks(2, 4), seed=0, **self.grid)

    def test_one_class(self):
        with pytest.raises(EvaluationError):
            cross_validate(toy_tracks(1, 10), seed=0, **self.grid)

    def test_permuted_labels_chance(self):
        errors = []
        for seed in range(3):
            tracks = toy_tracks(8, 60, seed=seed)
            labels = np.random.default_rng(100 + seed).permutation([t.label for t in tracks])
            shuffled = [Track(t.track_id, lab, t.frames) for t, lab in zip(tracks, labels)]
            errors.append(cross_validate(shuffled, seed=seed, **self.grid).error_rate)
        assert abs(np.mean(errors) - 0.875) <= 0.05
