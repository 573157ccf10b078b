#include "topicbot/bundle.hpp"

#include "topicbot/blobfile.hpp"
#include "topicbot/hash.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topicbot {

namespace {
constexpr const char* kKind = "chatbot-bundle";
}

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Fnv1a h;
  h.update(ss.str());
  return to_hex(h.digest());
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
  BlobFile file;
  file.kind = kKind;
  const TopicModel* topics = b.model.topics();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : b.model.params().entries()) params.push_back(e.name);
  file.meta = {{"version", b.manifest.version},
               {"seed", b.manifest.seed},
               {"config", b.model.config().to_json()},
               {"train_config", b.manifest.train_config},
               {"final_loss", b.manifest.final_loss},
               {"qa_corpus_hash", b.manifest.qa_corpus_hash},
               {"vocab", b.vocab.tokens()},
               {"vocab_hash", to_hex(b.vocab.hash())},
               {"params", params},
               {"topic_model", topics ? topic_model_meta(*topics) : nlohmann::json()},
               {"topic_model_hash", topics ? to_hex(topics->content_hash()) : ""},
               {"topic_corpus_hash", b.manifest.topic_corpus_hash}};
  if (b.manifest.created_unix) file.meta["created_unix"] = *b.manifest.created_unix;
  for (const auto& e : b.model.params().entries()) {
    file.blobs.emplace_back("param/" + e.name, e.value);
  }
  if (topics) file.blobs.emplace_back("topics/W", topics->W());
  file.blobs.emplace_back("proposal", Matrix(b.proposal.rows));
  save_blob_file(file, path);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  const BlobFile file = load_blob_file(path, kKind);
  const auto& m = file.meta;
  try {
    const int version = m.at("version").get<int>();
    if (version != kBundleVersion) {
      throw std::runtime_error("bundle version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kBundleVersion) + ")");
    }
    Vocabulary vocab = Vocabulary::from_tokens(m.at("vocab").get<std::vector<std::string>>());
    if (to_hex(vocab.hash()) != m.at("vocab_hash").get<std::string>()) {
      throw std::runtime_error("vocabulary hash mismatch");
    }
    const ModelConfig config = ModelConfig::from_json(m.at("config"));
    if (config.vocab_size != static_cast<Index>(vocab.size())) {
      throw std::runtime_error("configured vocabulary size differs from the stored vocabulary");
    }

    std::optional<TopicModel> topics;
    if (!m.at("topic_model").is_null()) {
      topics = topic_model_from_meta(m.at("topic_model"), file.blob("topics/W"));
      if (to_hex(topics->content_hash()) != m.at("topic_model_hash").get<std::string>()) {
        throw std::runtime_error("topic model hash mismatch");
      }
      if (topics->vocab_tokens() != vocab.tokens()) {
        throw std::runtime_error("topic model is not aligned to the bundle vocabulary");
      }
    }

    ParamStore params;
    params.set_seed(m.at("seed").get<std::uint64_t>());
    for (const auto& name : m.at("params")) {
      const auto n = name.get<std::string>();
      const Matrix& value = file.blob("param/" + n);
      params.add(n, value.rows(), value.cols()) = value;
    }

    ModelBundle b{Seq2SeqModel(config, std::move(params), std::move(topics)), std::move(vocab),
                  ProposalTable{}, BundleManifest{}};
    b.proposal.rows = file.blob("proposal");
    if (b.proposal.rows.cols() != config.vocab_size) {
      throw std::runtime_error("proposal table width differs from the vocabulary");
    }
    b.manifest.version = version;
    b.manifest.seed = m.at("seed").get<std::uint64_t>();
    b.manifest.qa_corpus_hash = m.at("qa_corpus_hash").get<std::string>();
    b.manifest.topic_corpus_hash = m.at("topic_corpus_hash").get<std::string>();
    b.manifest.train_config = m.at("train_config");
    b.manifest.final_loss = m.at("final_loss").get<double>();
    if (m.contains("created_unix")) b.manifest.created_unix = m.at("created_unix").get<std::int64_t>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed bundle manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": inconsistent bundle: " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace topicbot
