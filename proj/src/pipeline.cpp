#include "topicbot/pipeline.hpp"

#include "topicbot/hash.hpp"

#include <stdexcept>

namespace topicbot {

TopicsBuildResult build_topic_model(const std::vector<Document>& docs,
                                    const TopicsBuildOptions& options) {
  if (docs.empty()) throw std::invalid_argument("topic corpus is empty");
  std::vector<Tokens> streams;
  std::vector<std::string> ids;
  Fnv1a fingerprint;
  for (const auto& d : docs) {
    streams.push_back(remove_stopwords(tokenize(d.text), options.stopwords));
    ids.push_back(d.id);
    fingerprint.update(d.text);
    fingerprint.update("\n");
  }
  const Vocabulary vocab = build_vocabulary(streams, options.vocab_cap);
  if (vocab.size() <= kReservedCount) {
    throw std::invalid_argument("topic corpus has no words");
  }
  const DocTermMatrix dtm = build_doc_term_matrix(streams, vocab, ids);
  const SparseMatrix X = tfidf_transform(dtm.counts);

  NmfOptions nmf;
  nmf.rank = options.rank;
  nmf.max_iters = options.max_iters;
  nmf.tol = options.tol;
  nmf.seed = options.seed;
  NmfResult result = nmf_factorize(X, nmf);
  TopicModel model(result.W, vocab.tokens(), options.membership_k, to_hex(fingerprint.digest()));
  return {std::move(model), std::move(result), docs.size()};
}

Vocabulary build_qa_vocabulary(const std::vector<QAText>& corpus, std::size_t cap) {
  std::vector<Tokens> streams;
  streams.reserve(corpus.size() * 2);
  for (const auto& qa : corpus) {
    streams.push_back(tokenize(qa.question));
    streams.push_back(tokenize(qa.answer));
  }
  return build_vocabulary(streams, cap);
}

BundleBuildResult build_bundle(const std::vector<QAText>& corpus,
                               const std::optional<TopicModel>& topics,
                               const BundleBuildOptions& options, const TrainHooks& hooks) {
  if (corpus.empty()) throw std::invalid_argument("QA corpus is empty");
  options.train.validate();
  Vocabulary vocab = build_qa_vocabulary(corpus, options.vocab_cap);

  ModelConfig config = options.model;
  config.vocab_size = static_cast<Index>(vocab.size());
  std::optional<TopicModel> aligned;
  if (topics) {
    aligned = align_topics(*topics, vocab);
    config.topics = aligned->rank();
    config.membership_k = aligned->membership_k();
  } else {
    config.topics = 0;
  }
  config.validate();

  std::vector<QAPair> dataset =
      encode_qa_pairs(corpus, vocab, config.max_question_len, config.max_answer_len);
  TrainResult trained = train(dataset, std::move(aligned), config, options.train, hooks);

  BundleManifest manifest;
  manifest.seed = options.train.seed;
  manifest.qa_corpus_hash = options.qa_corpus_hash;
  manifest.topic_corpus_hash = topics ? topics->source() : "";
  manifest.train_config = options.train.to_json();
  manifest.final_loss = trained.report.final_loss;

  ProposalTable proposal =
      build_proposal_table(dataset, vocab.size(), config.max_answer_len);
  ModelBundle bundle{std::move(trained.model), std::move(vocab), std::move(proposal),
                     std::move(manifest)};
  return {std::move(bundle), std::move(trained.report), std::move(dataset)};
}

}  // namespace topicbot
