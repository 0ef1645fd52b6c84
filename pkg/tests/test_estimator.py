import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from regret_clarify.estimator import RegretClarificationModel
from regret_clarify.scenario import CATEGORIES, CONDITIONS
from regret_clarify.validation import check_conditions, check_counts, check_responses

from _helpers import simulate_counts

QUICK = dict(chains=2, warmup=200, draws=200, seed=1)


@pytest.fixture(scope="module")
def counts():
    return simulate_counts(seed=5)


@pytest.fixture(scope="module")
def model(counts):
    return RegretClarificationModel(**QUICK).fit(counts)


def test_params_api():
    est = RegretClarificationModel(model="eer", draws=500)
    params = est.get_params()
    assert params["model"] == "eer" and params["draws"] == 500 and params["warmup"] == 3000
    twin = clone(est).set_params(seed=3)
    assert twin.seed == 3 and est.seed == 0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        RegretClarificationModel().predict_proba()


def test_fit_attributes(model, counts):
    assert model.samples_.draws.shape == (2, 200, 7)
    assert set(model.report_.params) == set(model.samples_.param_names)
    assert model.counts_ is counts
    assert list(model.classes_) == list(CATEGORIES)


def test_predict_proba(model):
    proba = model.predict_proba()
    assert proba.shape == (4, 4)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    one = model.predict_proba(["low-small"])
    np.testing.assert_allclose(one[0], proba[3])
    assert model.predict(["high-large"])[0] == "cq"


def test_fit_from_trials_matches_counts(counts, model):
    conds, ys = [], []
    for cond, row in zip(CONDITIONS, counts.counts):
        for cat, k in zip(CATEGORIES, row):
            conds += [(cond.uncertainty.value, cond.option_space.value)] * int(k)
            ys += [cat] * int(k)
    other = RegretClarificationModel(**QUICK).fit(np.array(conds), ys)
    assert np.array_equal(other.counts_.counts, counts.counts)
    assert np.array_equal(other.samples_.draws, model.samples_.draws)


def test_score(model):
    loo_score = model.score()
    assert loo_score == pytest.approx(model.loo().elpd / model.counts_.total_n)
    s = model.score(["high-large", "low-small"], ["cq", "ms_preferred"])
    assert np.isfinite(s) and s < 0
    with pytest.raises(ValueError):
        model.score(["high-large"], ["cq", "cq"])


def test_bpppv(model):
    assert 0.0 <= model.bpppv("multinomial") <= 1.0


def test_validation_helpers():
    assert check_conditions(None) == CONDITIONS
    assert check_conditions([0, "low-large", ("HIGH", "small")]) == CONDITIONS[:3]
    with pytest.raises(ValueError):
        check_conditions([7])
    assert check_responses(["ms_dispreferred", "exh"]).tolist() == [3, 1]
    with pytest.raises(ValueError):
        check_responses(["shrug"])
    with pytest.raises(ValueError):
        check_counts(np.zeros((2, 4)))
