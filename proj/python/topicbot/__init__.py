"""Topic-aware chatbot: NMF topic models, a GRU encoder-decoder with topic
attention, and greedy or Metropolis-Hastings response generation."""

from ._core import (
    Bundle,
    TopicModel,
    build_topic_model,
    nmf_factorize,
    read_qa_jsonl,
    tokenize,
    train_bundle,
)

__all__ = [
    "Bundle",
    "TopicModel",
    "build_topic_model",
    "nmf_factorize",
    "read_qa_jsonl",
    "tokenize",
    "train_bundle",
]
