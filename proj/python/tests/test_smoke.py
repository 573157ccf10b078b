import os
import pathlib

import numpy as np
import pytest

import topicbot

FIXTURES = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def toy_qa():
    return topicbot.read_qa_jsonl(str(FIXTURES / "toy_qa.jsonl"))


def toy_topics():
    docs = (FIXTURES / "toy_topics.txt").read_text().splitlines()
    stop = (FIXTURES / "toy_stopwords.txt").read_text().split()
    return topicbot.build_topic_model([d for d in docs if d.strip()], rank=3, membership_k=8,
                                      seed=1, stopwords=stop)


def test_tokenize_and_corpus():
    assert topicbot.tokenize("Hello, World!") == ["hello", ",", "world", "!"]
    qa = toy_qa()
    assert len(qa) == 10
    assert qa[0] == ("do you like dogs ?", "yes , dogs are loyal pets .")


def test_nmf_recovers_a_planted_factorization():
    rng = np.random.default_rng(0)
    X = rng.random((20, 4)) @ rng.random((4, 30))
    r = topicbot.nmf_factorize(X, rank=4, max_iters=2000, tol=0.0)
    err = np.linalg.norm(X - r["W"] @ r["H"]) / np.linalg.norm(X)
    assert err <= 1e-3
    assert r["W"].min() >= 0 and r["H"].min() >= 0
    assert all(b <= a + 1e-10 for a, b in zip(r["objective"], r["objective"][1:]))
    with pytest.raises(ValueError):
        topicbot.nmf_factorize(-X, rank=2)


def test_topic_model(tmp_path):
    tm = toy_topics()
    assert tm.rank == 3
    assert tm.W.shape == (tm.vocab_size, 3)
    assert len(tm.top_words(0)) == 10
    assert all(len(s) == 8 for s in tm.word_sets)
    words = {w for t in range(3) for w in tm.top_words(t, 5)}
    assert {"rain", "pizza"} & words
    path = tmp_path / "toy.topics"
    tm.save(str(path))
    assert topicbot.TopicModel.load(str(path)) == tm


def test_train_reply_and_round_trip(tmp_path):
    losses = []
    bundle = topicbot.train_bundle(toy_qa(), toy_topics(), hidden=16, attention=16,
                                   max_question_len=10, max_answer_len=10, dropout=0.0,
                                   sigmoid_scores=False, batch_size=10, iterations=300,
                                   learning_rate=0.1, seed=1,
                                   on_iteration=lambda it, loss: losses.append(loss))
    assert len(losses) == 300
    assert losses[-1] < losses[0]
    assert bundle.final_loss == pytest.approx(bundle.evaluate(toy_qa()), abs=1e-9)
    assert bundle.config["topics"] == 3
    assert bundle.topics is not None

    out = bundle.reply("do you like dogs ?")
    assert out["reply"]
    assert len(out["topic_code"]) == 3
    assert out["topic_attention"].shape[1] == 3
    assert np.allclose(out["message_attention"].sum(axis=1), 1.0)
    assert set(out["topic_words_used"]) <= set(out["reply"].split())

    path = tmp_path / "toy.bundle"
    bundle.save(str(path))
    loaded = topicbot.Bundle.load(str(path))
    for q, _ in toy_qa():
        assert loaded.reply(q)["ids"] == bundle.reply(q)["ids"]
        assert loaded.reply(q, mode="mh", seed=4)["ids"] == bundle.reply(q, mode="mh", seed=4)["ids"]
    with pytest.raises(ValueError):
        bundle.reply("hi", mode="beam")

    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(RuntimeError):
        topicbot.Bundle.load(str(path))


def test_non_topic_bundle():
    bundle = topicbot.train_bundle(toy_qa(), None, hidden=8, attention=8, max_question_len=10,
                                   max_answer_len=10, batch_size=5, iterations=5)
    assert bundle.topics is None
    out = bundle.reply("what do cats eat ?")
    assert len(out["topic_code"]) == 0
    assert out["topic_words_used"] == []
