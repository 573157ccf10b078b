#include "topicbot/nmf.hpp"

#include "topicbot/blobfile.hpp"
#include "topicbot/hash.hpp"
#include "topicbot/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace topicbot {

namespace {

// Exact residual when the dense product fits comfortably in memory,
// otherwise ‖X‖² − 2⟨X, WH⟩ + ⟨WᵀW, HHᵀ⟩ accumulated over the nonzeros.
double frobenius_objective(const SparseMatrix& X, const Matrix& W, const Matrix& H) {
  const double cells = static_cast<double>(X.rows()) * static_cast<double>(X.cols());
  if (cells <= 4.0e6) {
    Matrix R = W * H;
    R -= Matrix(X);
    return R.squaredNorm();
  }
  double nz_resid = 0.0;
  double nz_fit = 0.0;
  for (Index d = 0; d < X.outerSize(); ++d) {
    for (SparseMatrix::InnerIterator it(X, d); it; ++it) {
      const double fit = W.row(it.row()).dot(H.col(d));
      nz_resid += (it.value() - fit) * (it.value() - fit);
      nz_fit += fit * fit;
    }
  }
  const double all_fit = ((W.transpose() * W).cwiseProduct(H * H.transpose())).sum();
  return std::max(0.0, nz_resid - nz_fit + all_fit);
}

void validate_input(const SparseMatrix& X, Index rank) {
  for (Index d = 0; d < X.outerSize(); ++d) {
    for (SparseMatrix::InnerIterator it(X, d); it; ++it) {
      if (!(it.value() >= 0.0)) {
        throw std::invalid_argument("nmf_factorize: X has a negative or NaN entry at (" +
                                    std::to_string(it.row()) + ", " + std::to_string(d) + ")");
      }
    }
  }
  const Index limit = std::min(X.rows(), X.cols());
  if (rank < 1 || rank > limit) {
    throw std::invalid_argument("nmf_factorize: rank " + std::to_string(rank) +
                                " outside [1, " + std::to_string(limit) + "]");
  }
}

}  // namespace

NmfResult nmf_factorize(const SparseMatrix& X, const NmfOptions& opt) {
  validate_input(X, opt.rank);
  if (opt.inner_updates < 1) throw std::invalid_argument("nmf_factorize: inner_updates must be >= 1");
  const int inner = opt.inner_updates;
  const Index V = X.rows();
  const Index n = X.cols();
  const Index r = opt.rank;

  const double mean = X.sum() / (static_cast<double>(V) * static_cast<double>(n));
  const double scale = std::sqrt(mean / static_cast<double>(r));
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  NmfResult res;
  res.W.resize(V, r);
  res.H.resize(r, n);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < V; ++i) res.W(i, j) = unit(rng) * scale;
  }
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < r; ++i) res.H(i, j) = unit(rng) * scale;
  }

  const SparseMatrix Xt = X.transpose();
  res.objective.push_back(frobenius_objective(X, res.W, res.H));
  for (int it = 0; it < opt.max_iters; ++it) {
    {
      const Matrix numer = (Xt * res.W).transpose();  // WᵀX
      const Matrix gram = res.W.transpose() * res.W;
      for (int k = 0; k < inner; ++k) {
        const Matrix denom = gram * res.H;
        res.H = res.H.cwiseProduct(numer.cwiseQuotient((denom.array() + opt.eps).matrix()));
        if (opt.on_update) opt.on_update(res.W, res.H);
      }
    }
    {
      const Matrix numer = X * res.H.transpose();  // XHᵀ
      const Matrix gram = res.H * res.H.transpose();
      for (int k = 0; k < inner; ++k) {
        const Matrix denom = res.W * gram;
        res.W = res.W.cwiseProduct(numer.cwiseQuotient((denom.array() + opt.eps).matrix()));
        if (opt.on_update) opt.on_update(res.W, res.H);
      }
    }

    const double prev = res.objective.back();
    const double cur = frobenius_objective(X, res.W, res.H);
    res.objective.push_back(cur);
    res.iterations = it + 1;
    const double rel = prev > 0.0 ? (prev - cur) / prev : 0.0;
    if (rel < opt.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

NmfResult nmf_factorize(const Matrix& X, const NmfOptions& options) {
  for (Index j = 0; j < X.cols(); ++j) {
    for (Index i = 0; i < X.rows(); ++i) {
      if (!(X(i, j) >= 0.0)) {
        throw std::invalid_argument("nmf_factorize: X has a negative or NaN entry at (" +
                                    std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  return nmf_factorize(SparseMatrix(X.sparseView()), options);
}

double relative_error(const Matrix& X, const Matrix& W, const Matrix& H) {
  const double denom = X.norm();
  const double num = (X - W * H).norm();
  return denom > 0.0 ? num / denom : num;
}

std::vector<TokenId> top_word_ids(const Matrix& W, Index j, std::size_t k) {
  if (j < 0 || j >= W.cols()) {
    throw std::out_of_range("topic index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(W.cols()) + ")");
  }
  std::vector<TokenId> ids;
  for (Index i = 0; i < W.rows(); ++i) {
    if (W(i, j) > 0.0) ids.push_back(static_cast<TokenId>(i));
  }
  const std::size_t keep = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                    [&](TokenId a, TokenId b) {
                      const double wa = W(a, j);
                      const double wb = W(b, j);
                      return wa != wb ? wa > wb : a < b;
                    });
  ids.resize(keep);
  return ids;
}

TopicModel::TopicModel(Matrix W, std::vector<std::string> vocab_tokens,
                       std::size_t membership_k, std::string source)
    : W_(std::move(W)),
      vocab_tokens_(std::move(vocab_tokens)),
      membership_k_(membership_k),
      source_(std::move(source)) {
  if (static_cast<Index>(vocab_tokens_.size()) != W_.rows()) {
    throw std::invalid_argument("TopicModel: W has " + std::to_string(W_.rows()) +
                                " rows but the vocabulary has " +
                                std::to_string(vocab_tokens_.size()) + " tokens");
  }
  if (W_.size() > 0 && !(W_.minCoeff() >= 0.0)) {
    throw std::invalid_argument("TopicModel: W must be nonnegative");
  }
  any_topic_.assign(static_cast<std::size_t>(W_.rows()), 0);
  for (Index j = 0; j < W_.cols(); ++j) {
    auto ids = top_word_ids(W_, j, membership_k_);
    std::sort(ids.begin(), ids.end());
    for (TokenId id : ids) any_topic_[static_cast<std::size_t>(id)] = 1;
    word_sets_.push_back(std::move(ids));
  }
}

std::uint64_t TopicModel::vocab_hash() const {
  return Vocabulary::from_tokens(vocab_tokens_).hash();
}

std::uint64_t TopicModel::content_hash() const {
  Fnv1a h;
  h.update(to_hex(vocab_hash()));
  h.update(source_);
  h.update(std::to_string(membership_k_));
  h.update(std::string_view(reinterpret_cast<const char*>(W_.data()),
                            static_cast<std::size_t>(W_.size()) * sizeof(double)));
  return h.digest();
}

bool TopicModel::in_topic(TokenId word, Index topic) const {
  const auto& set = word_sets_.at(static_cast<std::size_t>(topic));
  return std::binary_search(set.begin(), set.end(), word);
}

bool TopicModel::in_any_topic(TokenId word) const {
  return word >= 0 && static_cast<std::size_t>(word) < any_topic_.size() &&
         any_topic_[static_cast<std::size_t>(word)] != 0;
}

Vector TopicModel::bias_vector(const TopicCode& code) const {
  if (code.k.size() != rank()) {
    throw std::invalid_argument("bias_vector: code length differs from topic count");
  }
  Vector bias = Vector::Zero(W_.rows());
  for (Index j = 0; j < rank(); ++j) {
    if (code.k[j] == 0.0) continue;
    for (TokenId id : word_sets_[static_cast<std::size_t>(j)]) bias[id] += code.k[j];
  }
  return bias;
}

bool TopicModel::operator==(const TopicModel& other) const {
  return W_.rows() == other.W_.rows() && W_.cols() == other.W_.cols() && W_ == other.W_ &&
         vocab_tokens_ == other.vocab_tokens_ && membership_k_ == other.membership_k_ &&
         source_ == other.source_ && word_sets_ == other.word_sets_;
}

std::vector<std::string> top_words(const TopicModel& model, Index j, std::size_t k) {
  std::vector<std::string> out;
  for (TokenId id : top_word_ids(model.W(), j, k)) {
    out.push_back(model.vocab_tokens()[static_cast<std::size_t>(id)]);
  }
  return out;
}

TopicCode topic_code(const Vector& q_bow, const TopicModel& model, bool normalize) {
  if (q_bow.size() != model.vocab_size()) {
    throw std::invalid_argument("topic_code: question vector has length " +
                                std::to_string(q_bow.size()) + ", expected " +
                                std::to_string(model.vocab_size()));
  }
  TopicCode code;
  code.k = model.W().transpose() * q_bow;
  code.normalized = normalize;
  if (normalize) {
    const double total = code.k.sum();
    if (total > 0.0) code.k /= total;
  }
  return code;
}

SparseCodeResult sparse_code(const Vector& q, const Matrix& W, double lambda, int max_iters,
                             double tol) {
  if (q.size() != W.rows()) {
    throw std::invalid_argument("sparse_code: q has length " + std::to_string(q.size()) +
                                ", W has " + std::to_string(W.rows()) + " rows");
  }
  if (lambda < 0.0) throw std::invalid_argument("sparse_code: lambda must be >= 0");
  const Index r = W.cols();
  SparseCodeResult res;
  res.k = Vector::Zero(r);
  Vector residual = q;  // q − Wk
  const Vector col_sq = W.colwise().squaredNorm().transpose();
  auto objective = [&] { return residual.squaredNorm() + lambda * res.k.lpNorm<1>(); };
  res.objective.push_back(objective());
  for (int sweep = 0; sweep < max_iters; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < r; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double old = res.k[j];
      const double rho = W.col(j).dot(residual) + col_sq[j] * old;
      // Soft-threshold at λ/2, then project onto k ≥ 0.
      const double updated = std::max(0.0, rho - 0.5 * lambda) / col_sq[j];
      if (updated != old) {
        residual.noalias() -= (updated - old) * W.col(j);
        res.k[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    res.objective.push_back(objective());
    res.sweeps = sweep + 1;
    if (max_change <= tol) break;
  }
  return res;
}

TopicModel align_topics(const TopicModel& model, const Vocabulary& target) {
  Matrix W = Matrix::Zero(static_cast<Index>(target.size()), model.rank());
  std::unordered_map<std::string_view, Index> source_rows;
  for (std::size_t i = kReservedCount; i < model.vocab_tokens().size(); ++i) {
    source_rows.emplace(model.vocab_tokens()[i], static_cast<Index>(i));
  }
  std::size_t shared = 0;
  for (std::size_t i = kReservedCount; i < target.size(); ++i) {
    auto it = source_rows.find(target.tokens()[i]);
    if (it == source_rows.end()) continue;
    W.row(static_cast<Index>(i)) = model.W().row(it->second);
    ++shared;
  }
  if (shared == 0 && model.rank() > 0) {
    log_warning("align_topics: topic vocabulary '" + model.source() +
                "' shares no words with the chatbot vocabulary; all topics are empty");
  }
  return TopicModel(std::move(W), target.tokens(), model.membership_k(), model.source());
}

nlohmann::json topic_model_meta(const TopicModel& model) {
  return {{"V", model.vocab_size()},
          {"r", model.rank()},
          {"K", model.membership_k()},
          {"source", model.source()},
          {"vocab_hash", to_hex(model.vocab_hash())},
          {"vocab", model.vocab_tokens()},
          {"topic_word_sets", model.topic_word_sets()}};
}

TopicModel topic_model_from_meta(const nlohmann::json& meta, Matrix W) {
  const auto V = meta.at("V").get<Index>();
  const auto r = meta.at("r").get<Index>();
  if (W.rows() != V || W.cols() != r) {
    throw std::runtime_error("topic model W has shape " + std::to_string(W.rows()) + "x" +
                             std::to_string(W.cols()) + ", header says " + std::to_string(V) +
                             "x" + std::to_string(r));
  }
  TopicModel model(std::move(W), meta.at("vocab").get<std::vector<std::string>>(),
                   meta.at("K").get<std::size_t>(), meta.at("source").get<std::string>());
  if (to_hex(model.vocab_hash()) != meta.at("vocab_hash").get<std::string>()) {
    throw std::runtime_error("topic model vocabulary hash mismatch");
  }
  if (model.topic_word_sets() !=
      meta.at("topic_word_sets").get<std::vector<std::vector<TokenId>>>()) {
    throw std::runtime_error("topic model word sets disagree with W");
  }
  return model;
}

void save_topic_model(const TopicModel& model, const std::filesystem::path& path) {
  BlobFile file;
  file.kind = "topic-model";
  file.meta = topic_model_meta(model);
  file.blobs.emplace_back("W", model.W());
  save_blob_file(file, path);
}

TopicModel load_topic_model(const std::filesystem::path& path) {
  const BlobFile file = load_blob_file(path, "topic-model");
  try {
    return topic_model_from_meta(file.meta, file.blob("W"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed topic model header: " + e.what());
  }
}

}  // namespace topicbot
