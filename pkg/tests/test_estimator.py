import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hyenarec.data import synth_copy_task
from hyenarec.errors import DataError, ParameterError
from hyenarec.estimator import HyenaRecommender


def small(**kw):
    base = dict(d_model=8, max_len=12, num_layers=1, basis_size=4, dropout=0.0, max_steps=4,
                eval_interval=4, batch_size=16, mask_seen=False)
    base.update(kw)
    return HyenaRecommender(**base)


@pytest.fixture(scope="module")
def seqs():
    return synth_copy_task(40, 10, 1, 9, seed=0).sequences


def test_params_round_trip():
    est = small(lr=3e-3)
    assert clone(est).get_params() == est.get_params()
    assert est.set_params(d_model=16).d_model == 16


def test_unfitted():
    with pytest.raises(NotFittedError):
        small().predict([[1, 2, 3]])


def test_fit_predict_shapes(seqs):
    est = small().fit(seqs)
    assert est.n_items_ == 9 and est.n_steps_ == 4 and len(est.history_) == 1
    top = est.predict([s[:-1] for s in seqs[:5]], k=3)
    assert top.shape == (5, 3)
    z = est.decision_function([s[:-1] for s in seqs[:5]])
    assert z.shape == (5, 9)
    np.testing.assert_array_equal(top[:, 0], z.argmax(axis=1))


def test_score_in_unit_interval(seqs):
    est = small().fit(seqs)
    s = est.score([q[:-1] for q in seqs], [q[-1] for q in seqs], k=5)
    assert 0.0 <= s <= 1.0


def test_same_seed_same_scores(seqs):
    a = small(dropout=0.3).fit(seqs).decision_function([seqs[0]])
    b = small(dropout=0.3).fit(seqs).decision_function([seqs[0]])
    np.testing.assert_array_equal(a, b)


def test_rejects_bad_input(seqs):
    with pytest.raises(DataError):
        small().fit([[0]])
    with pytest.raises(DataError):
        small(num_items=5).fit([[0, 7, 1]])
    with pytest.raises(DataError):
        small().fit([[0.5, 1.0, 2.0]])
    est = small().fit(seqs)
    with pytest.raises(ParameterError):
        est.predict([seqs[0]], k=0)
    with pytest.raises(DataError):
        est.score([seqs[0]], [1, 2])
