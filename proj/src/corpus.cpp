#include "topicbot/corpus.hpp"

#include "topicbot/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace topicbot {

namespace {

const std::vector<std::string> kReserved = {"<pad>", "<unk>", "<sos>", "<eos>"};

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

}  // namespace

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

Tokens remove_stopwords(const Tokens& tokens, const std::unordered_set<std::string>& stop) {
  if (stop.empty()) return tokens;
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (!stop.contains(t)) out.push_back(t);
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(from_tokens(kReserved)) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedCount ||
      !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
    throw std::invalid_argument("vocabulary must start with <pad>, <unk>, <sos>, <eos>");
  }
  Vocabulary v{Empty{}};
  v.tokens_ = std::move(tokens);
  v.index_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + v.tokens_[i]);
    }
  }
  return v;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

std::uint64_t Vocabulary::hash() const {
  Fnv1a h;
  for (const auto& t : tokens_) {
    h.update(t);
    h.update(std::string_view("\n"));
  }
  return h.digest();
}

Vocabulary build_vocabulary(const std::vector<Tokens>& streams, std::size_t cap) {
  if (cap < kReservedCount) {
    throw std::invalid_argument("vocabulary cap must be at least 4");
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& s : streams) {
    for (const auto& t : s) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  // freq is already lexicographic, so a stable sort on count breaks ties by token.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = kReserved;
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= cap) break;
    tokens.push_back(tok);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  out << nlohmann::json(vocab.tokens()).dump() << '\n';
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  const auto j = nlohmann::json::parse(in);
  return Vocabulary::from_tokens(j.get<std::vector<std::string>>());
}

std::vector<TokenId> encode_sentence(const Tokens& tokens, const Vocabulary& vocab,
                                     std::size_t max_len, bool append_eos) {
  if (max_len == 0) throw std::invalid_argument("encode_sentence: max_len must be >= 1");
  const std::size_t capacity = append_eos ? max_len - 1 : max_len;
  std::vector<TokenId> ids;
  ids.reserve(max_len);
  for (std::size_t i = 0; i < tokens.size() && i < capacity; ++i) {
    ids.push_back(vocab.id(tokens[i]));
  }
  if (append_eos) ids.push_back(kEos);
  ids.resize(max_len, kPad);
  return ids;
}

Tokens decode_ids(std::span<const TokenId> ids, const Vocabulary& vocab) {
  Tokens out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vector bag_of_words(const Tokens& doc, const Vocabulary& vocab) {
  Vector counts = Vector::Zero(static_cast<Index>(vocab.size()));
  for (const auto& t : doc) {
    const TokenId id = vocab.id(t);
    if (id >= static_cast<TokenId>(kReservedCount)) counts[id] += 1.0;
  }
  return counts;
}

DocTermMatrix build_doc_term_matrix(const std::vector<Tokens>& docs, const Vocabulary& vocab,
                                    std::vector<std::string> doc_ids) {
  if (doc_ids.empty()) {
    for (std::size_t i = 0; i < docs.size(); ++i) doc_ids.push_back(std::to_string(i));
  }
  if (doc_ids.size() != docs.size()) {
    throw std::invalid_argument("build_doc_term_matrix: doc id count mismatch");
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& t : docs[d]) {
      const TokenId id = vocab.id(t);
      if (id >= static_cast<TokenId>(kReservedCount)) {
        triplets.emplace_back(id, static_cast<int>(d), 1.0);
      }
    }
  }
  DocTermMatrix out;
  out.counts.resize(static_cast<Index>(vocab.size()), static_cast<Index>(docs.size()));
  out.counts.setFromTriplets(triplets.begin(), triplets.end());  // duplicates summed
  out.counts.makeCompressed();
  out.doc_ids = std::move(doc_ids);
  return out;
}

SparseMatrix tfidf_transform(const SparseMatrix& counts) {
  const Index n = counts.cols();
  if (n < 1) throw std::invalid_argument("tfidf_transform: need at least one document");
  std::vector<double> df(static_cast<std::size_t>(counts.rows()), 0.0);
  for (Index d = 0; d < n; ++d) {
    for (SparseMatrix::InnerIterator it(counts, d); it; ++it) {
      if (it.value() < 0.0) throw std::invalid_argument("tfidf_transform: negative count");
      if (it.value() > 0.0) df[static_cast<std::size_t>(it.row())] += 1.0;
    }
  }
  SparseMatrix out = counts;
  const double nd = static_cast<double>(n);
  for (Index d = 0; d < n; ++d) {
    double sq = 0.0;
    for (SparseMatrix::InnerIterator it(out, d); it; ++it) {
      const double idf = std::log((1.0 + nd) / (1.0 + df[static_cast<std::size_t>(it.row())])) + 1.0;
      it.valueRef() *= idf;
      sq += it.value() * it.value();
    }
    if (sq > 0.0) {
      const double norm = std::sqrt(sq);
      for (SparseMatrix::InnerIterator it(out, d); it; ++it) it.valueRef() /= norm;
    }
  }
  return out;
}

QAPair make_qa_pair(const Tokens& question, const Tokens& answer, const Vocabulary& vocab,
                    std::size_t max_question_len, std::size_t max_answer_len) {
  QAPair p;
  p.question = encode_sentence(question, vocab, max_question_len, true);
  p.answer = encode_sentence(answer, vocab, max_answer_len, true);
  p.question_length = std::min(question.size(), max_question_len - 1);
  p.answer_length = std::min(answer.size(), max_answer_len - 1);
  return p;
}

std::vector<QAText> read_qa_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read QA corpus " + path.string());
  std::vector<QAText> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(),
                    [](char c) { return is_space(static_cast<unsigned char>(c)); })) {
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw std::runtime_error(where + ": expected a JSON object");
    for (const char* key : {"q", "a"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw std::runtime_error(where + ": missing string field \"" + key + "\"");
      }
    }
    out.push_back({j["q"].get<std::string>(), j["a"].get<std::string>()});
  }
  return out;
}

std::vector<QAPair> encode_qa_pairs(const std::vector<QAText>& texts, const Vocabulary& vocab,
                                    std::size_t max_question_len, std::size_t max_answer_len) {
  std::vector<QAPair> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    out.push_back(make_qa_pair(tokenize(t.question), tokenize(t.answer), vocab,
                               max_question_len, max_answer_len));
  }
  return out;
}

std::vector<QAPair> load_qa_pairs(const std::filesystem::path& path, const Vocabulary& vocab,
                                  std::size_t max_question_len, std::size_t max_answer_len) {
  return encode_qa_pairs(read_qa_jsonl(path), vocab, max_question_len, max_answer_len);
}

std::vector<Document> load_documents(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<Document> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      if (!in) throw std::runtime_error("cannot read document " + f.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      docs.push_back({f.filename().string(), ss.str()});
    }
    return docs;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read topic corpus " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(),
                    [](char c) { return is_space(static_cast<unsigned char>(c)); })) {
      continue;
    }
    docs.push_back({"line:" + std::to_string(lineno), line});
  }
  return docs;
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read stop-word list " + path.string());
  std::unordered_set<std::string> out;
  std::string word;
  while (in >> word) {
    for (auto& t : tokenize(word)) out.insert(t);
  }
  return out;
}

}  // namespace topicbot
