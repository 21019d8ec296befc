import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cfx_certify.estimators import ReluMLPClassifier, RobustCounterfactualExplainer
from cfx_certify.network import classify_batch


def _blobs(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = np.clip(np.where(y[:, None] == 1, 0.7, 0.3) + rng.normal(0, 0.1, (n, 2)), 0, 1)
    return X, np.where(y == 1, "yes", "no")


def test_params_roundtrip():
    clf = ReluMLPClassifier(hidden_size=4, epochs=3)
    assert clf.get_params()["hidden_size"] == 4
    assert clone(clf).get_params() == clf.get_params()


def test_fit_predict_with_string_labels():
    X, y = _blobs(200, 0)
    clf = ReluMLPClassifier(hidden_size=6, epochs=50).fit(X, y)
    assert clf.classes_.tolist() == ["no", "yes"]
    assert clf.score(X, y) > 0.9
    proba = clf.predict_proba(X[:5])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert clf.predict(X[:5]).tolist() == clf.classes_[proba.argmax(axis=1)].tolist()


def test_fit_is_deterministic():
    X, y = _blobs(100, 1)
    a = ReluMLPClassifier(hidden_size=4, epochs=10).fit(X, y)
    b = ReluMLPClassifier(hidden_size=4, epochs=10).fit(X, y)
    assert a.model_ == b.model_


def test_partial_fit():
    X, y = _blobs(100, 2)
    clf = ReluMLPClassifier(hidden_size=4, epochs=10).fit(X, y)
    before = clf.model_
    clf.partial_fit(X[:20], y[:20])
    assert clf.model_ != before
    with pytest.raises(ValueError):
        clf.partial_fit(X[:2], ["maybe", "no"])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ReluMLPClassifier().predict([[0.0, 0.0]])


def test_explainer_transform_and_verify():
    X, y = _blobs(200, 3)
    clf = ReluMLPClassifier(hidden_size=6, epochs=50).fit(X, y)
    exp = RobustCounterfactualExplainer(clf, delta=0.01).fit()
    queries = np.array([[0.3, 0.3], [0.7, 0.7]])
    out = exp.transform(queries)
    assert out.shape == queries.shape
    found = ~np.isnan(out).any(axis=1)
    assert found.any()
    assert (classify_batch(clf.model_, out[found]) != classify_batch(clf.model_, queries[found])).all()
    assert exp.verify(queries, out).tolist() == found.tolist()


def test_explainer_plain_mode_and_errors():
    X, y = _blobs(100, 4)
    clf = ReluMLPClassifier(hidden_size=4, epochs=30).fit(X, y)
    with pytest.raises(ValueError):
        RobustCounterfactualExplainer(clf).fit()
    exp = RobustCounterfactualExplainer(clf, robust=False).fit()
    assert exp.transform([[0.3, 0.3]]).shape == (1, 2)
    with pytest.raises(ValueError):
        exp.verify([[0.3, 0.3]], [[0.7, 0.7]])
    with pytest.raises(ValueError):
        exp.transform([[0.3, 0.3, 0.3]])
    with pytest.raises(TypeError):
        RobustCounterfactualExplainer("model", delta=0.1).fit()
