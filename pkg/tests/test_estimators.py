import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cka_distill.estimators import DistilledStudentClassifier, ToyLALMClassifier
from cka_distill.numeric import Rng
from cka_distill.toy.data import generate_dataset


@pytest.fixture(scope="module")
def data():
    d = generate_dataset(3, 40, 8, 2, 0.1, Rng(0), feature_dim=8)
    Xtr, ytr = d.train_arrays()
    Xte, yte = d.test_arrays()
    names = np.array(["angry", "happy", "sad"])
    return Xtr, names[ytr], Xte, names[yte]


@pytest.fixture(scope="module")
def teacher(data):
    Xtr, ytr, Xte, yte = data
    return ToyLALMClassifier(embed_dim=16, heads=2, max_steps=1500, eval_every=25).fit(Xtr, ytr, eval_set=(Xte, yte))


def test_teacher_api(teacher, data):
    _, _, Xte, yte = data
    assert list(teacher.classes_) == ["angry", "happy", "sad"]
    assert teacher.score(Xte, yte) >= 0.9
    proba = teacher.predict_proba(Xte)
    np.testing.assert_allclose(proba.sum(1), 1.0)
    assert np.array_equal(teacher.classes_[proba.argmax(1)], teacher.predict(Xte))
    w = teacher.attention_weights(Xte)
    assert w.shape == (len(Xte), 8) and np.allclose(w.sum(1), 1)
    assert teacher.embed(Xte).shape == (len(Xte), 8, 16)


def test_params_and_clone(teacher):
    params = teacher.get_params()
    assert params["embed_dim"] == 16 and params["random_state"] == 0
    c = clone(teacher)
    assert not hasattr(c, "params_") and c.get_params() == params
    c.set_params(lr=0.01)
    assert c.lr == 0.01


def test_student_strategies(teacher, data):
    Xtr, ytr, Xte, yte = data
    for strategy in ("SFT", "ReverseKL", "PLDistill"):
        s = DistilledStudentClassifier(teacher, strategy=strategy, steps=30, batch_size=8, grad_accum=1, lr=3e-3)
        s.fit(Xtr, ytr)
        assert len(s.history_) == 30 and set(s.predict(Xte)) <= set(teacher.classes_)
        np.testing.assert_array_equal(s.params_["encoder.weight"], teacher.encoder_)
        assert 0 <= s.score(Xte, yte) <= 1


def test_validation_errors(teacher, data):
    Xtr, ytr, _, _ = data
    with pytest.raises(NotFittedError):
        ToyLALMClassifier().predict(Xtr)
    with pytest.raises(ValueError, match="feature_dim"):
        teacher.predict(Xtr[..., :4])
    with pytest.raises(ValueError, match="n_samples, audio_len, feature_dim"):
        ToyLALMClassifier().fit(Xtr[:, 0], ytr)
    with pytest.raises(ValueError, match="not seen"):
        DistilledStudentClassifier(teacher, steps=1).fit(Xtr, np.where(ytr == "sad", "calm", ytr))
    with pytest.raises(ValueError, match="teacher"):
        DistilledStudentClassifier(None).fit(Xtr, ytr)
    with pytest.raises(ValueError):
        ToyLALMClassifier().fit(Xtr, np.full(len(Xtr), "one"))
