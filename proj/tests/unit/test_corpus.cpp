#include "topicbot/corpus.hpp"

#include "desk_corpus.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace topicbot;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "topicbot_corpus_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << content;
  return p;
}

Vocabulary vocab_of(std::initializer_list<const char*> words) {
  std::vector<std::string> t{"<pad>", "<unk>", "<sos>", "<eos>"};
  for (const char* w : words) t.emplace_back(w);
  return Vocabulary::from_tokens(t);
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("What is your name?") == Tokens{"what", "is", "your", "name", "?"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("I lost something at the airport") ==
        Tokens{"i", "lost", "something", "at", "the", "airport"});
  CHECK(tokenize("  don't,STOP!\tnow\n") == Tokens{"don", "'", "t", ",", "stop", "!", "now"});
  CHECK(tokenize("caf\xc3\xa9 ok") == Tokens{"caf\xc3\xa9", "ok"});
}

TEST_CASE("remove_stopwords") {
  CHECK(remove_stopwords({"the", "cat", "the", "sat"}, {"the"}) == Tokens{"cat", "sat"});
  CHECK(remove_stopwords({"a", "b"}, {}) == Tokens{"a", "b"});
}

TEST_CASE("vocabulary construction") {
  const Vocabulary v = build_vocabulary({{"a", "b", "a", "c"}, {"a", "b"}}, 6);
  CHECK(v.size() == 6);
  CHECK(v.token(4) == "a");
  CHECK(v.token(5) == "b");
  CHECK(v.id("c") == kUnk);
  CHECK(v.id("<eos>") == kEos);

  const Vocabulary only_reserved = build_vocabulary({{"x", "y"}}, 4);
  CHECK(only_reserved.size() == 4);
  CHECK(only_reserved.id("x") == kUnk);
  CHECK(build_vocabulary({}, 100).size() == 4);
  CHECK_THROWS_AS(build_vocabulary({}, 3), std::invalid_argument);

  // Ties break lexicographically, independent of first appearance.
  const Vocabulary ties = build_vocabulary({{"zeta", "alpha", "mid", "mid"}}, 10);
  CHECK(ties.tokens() == std::vector<std::string>{"<pad>", "<unk>", "<sos>", "<eos>", "mid",
                                                  "alpha", "zeta"});
  CHECK(build_vocabulary({{"zeta", "alpha", "mid", "mid"}}, 10) == ties);
  CHECK(ties.hash() == build_vocabulary({{"mid", "zeta", "mid", "alpha"}}, 10).hash());
  CHECK(ties.hash() != v.hash());

  CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::from_tokens({"<pad>", "<unk>", "<sos>", "<eos>", "x", "x"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(v.token(99), std::out_of_range);

  const auto path = temp_file("vocab.json", "");
  save_vocabulary(ties, path);
  CHECK(load_vocabulary(path) == ties);
}

TEST_CASE("encode_sentence padding, truncation and UNK") {
  const Vocabulary v = vocab_of({"hello", "world"});
  CHECK(encode_sentence({"hello"}, v, 4, true) == std::vector<TokenId>{4, kEos, kPad, kPad});
  CHECK(encode_sentence({"zzzunknownzzz"}, v, 3, true) ==
        std::vector<TokenId>{kUnk, kEos, kPad});
  CHECK(encode_sentence({"hello", "world"}, v, 2, false) == std::vector<TokenId>{4, 5});

  Tokens thirty(30, "world");
  thirty[0] = "hello";
  const auto ids = encode_sentence(thirty, v, 25, true);
  REQUIRE(ids.size() == 25);
  CHECK(ids[0] == 4);
  for (std::size_t i = 1; i < 24; ++i) CHECK(ids[i] == 5);
  CHECK(ids[24] == kEos);
  CHECK_THROWS_AS(encode_sentence({}, v, 0, true), std::invalid_argument);

  CHECK(decode_ids(std::vector<TokenId>{4, kPad, 5, kEos, 4}, v) == Tokens{"hello", "world"});
  CHECK(join_tokens({"a", "b", "?"}) == "a b ?");
}

TEST_CASE("bag_of_words") {
  const Vocabulary v = vocab_of({"a", "b"});
  const Vector c = bag_of_words({"a", "b", "a", "zz", "<eos>"}, v);
  REQUIRE(c.size() == 6);
  CHECK(c[4] == 2.0);
  CHECK(c[5] == 1.0);
  CHECK(c.head(4).isZero(0.0));
  CHECK(bag_of_words({}, v).isZero(0.0));
}

TEST_CASE("TF-IDF matches the hand-computed 3x3 oracle") {
  const Vocabulary v = vocab_of({"x", "y", "z"});
  const auto dtm = build_doc_term_matrix({{"x", "x", "y"}, {"x", "z", "z", "z"}, {"y"}}, v);
  CHECK(dtm.counts.rows() == 7);
  CHECK(dtm.counts.coeff(4, 0) == 2.0);
  CHECK(dtm.doc_ids == std::vector<std::string>{"0", "1", "2"});
  const Matrix t = Matrix(tfidf_transform(dtm.counts));

  // df(x)=2, df(y)=2, df(z)=1, n=3.
  const double a = std::log(4.0 / 3.0) + 1.0;
  const double b = std::log(2.0) + 1.0;
  CHECK(t(4, 0) == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-14));
  CHECK(t(5, 0) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-14));
  const double n1 = std::sqrt(a * a + 9.0 * b * b);
  CHECK(t(4, 1) == doctest::Approx(a / n1).epsilon(1e-14));
  CHECK(t(6, 1) == doctest::Approx(3.0 * b / n1).epsilon(1e-14));
  CHECK(t(5, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(t(6, 0) == 0.0);
}

TEST_CASE("TF-IDF edge cases") {
  const Vocabulary v = vocab_of({"x", "y"});
  // Present everywhere → idf 1, so columns are just normalized counts.
  const Matrix all = Matrix(tfidf_transform(build_doc_term_matrix({{"x", "y", "y"}, {"y", "x"}}, v).counts));
  CHECK(all(4, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(all(5, 0) / all(4, 0) == doctest::Approx(2.0));
  // Empty document keeps a zero column.
  const Matrix with_empty = Matrix(tfidf_transform(build_doc_term_matrix({{"x"}, {}}, v).counts));
  CHECK(with_empty.col(1).isZero(0.0));
  CHECK_THROWS_AS(build_doc_term_matrix({{"x"}}, v, {"a", "b"}), std::invalid_argument);
}

TEST_CASE("QA corpus loading") {
  const auto path = temp_file("one.jsonl", "{\"q\":\"hi\",\"a\":\"hello\"}\n\n");
  const Vocabulary v = vocab_of({"hi", "hello"});
  const auto pairs = load_qa_pairs(path, v, 4, 4);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].question == std::vector<TokenId>{4, kEos, kPad, kPad});
  CHECK(pairs[0].answer == std::vector<TokenId>{5, kEos, kPad, kPad});
  CHECK(pairs[0].question_length == 1);
  CHECK(pairs[0].answer_length == 1);

  CHECK(load_qa_pairs(temp_file("empty.jsonl", ""), v, 4, 4).empty());

  const auto bad = temp_file("bad.jsonl", "{\"q\":\"a\",\"a\":\"b\"}\n{oops\n");
  try {
    read_qa_jsonl(bad);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
  }
  const auto missing = temp_file("missing.jsonl", "{\"q\":\"a\"}\n");
  try {
    read_qa_jsonl(missing);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("\"a\"") != std::string::npos);
  }
  CHECK_THROWS_AS(read_qa_jsonl("/nonexistent/qa.jsonl"), std::runtime_error);
}

TEST_CASE("toy fixture round-trips through encode and decode") {
  const auto texts = read_qa_jsonl(testing::fixture_path("toy_qa.jsonl"));
  REQUIRE(texts.size() == 10);
  std::vector<Tokens> streams;
  for (const auto& t : texts) {
    streams.push_back(tokenize(t.question));
    streams.push_back(tokenize(t.answer));
  }
  const Vocabulary v = build_vocabulary(streams, 1000);
  const auto pairs = encode_qa_pairs(texts, v, 25, 25);
  REQUIRE(pairs.size() == 10);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(decode_ids(pairs[i].question, v) == tokenize(texts[i].question));
    CHECK(decode_ids(pairs[i].answer, v) == tokenize(texts[i].answer));
    CHECK(pairs[i].answer[pairs[i].answer_length] == kEos);
  }
}

TEST_CASE("documents and stop words") {
  const auto file = temp_file("docs.txt", "first doc\n\n  \nsecond doc\n");
  const auto docs = load_documents(file);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "line:1");
  CHECK(docs[1].id == "line:4");
  CHECK(docs[1].text == "second doc");

  const fs::path dir = fs::temp_directory_path() / "topicbot_corpus_test" / "docdir";
  fs::create_directories(dir);
  std::ofstream(dir / "b.txt") << "bee";
  std::ofstream(dir / "a.txt") << "ay\nmore";
  std::ofstream(dir / "skip.md") << "no";
  const auto dd = load_documents(dir);
  REQUIRE(dd.size() == 2);
  CHECK(dd[0].id == "a.txt");
  CHECK(dd[0].text == "ay\nmore");
  CHECK_THROWS_AS(load_documents("/nonexistent/corpus.txt"), std::runtime_error);

  const auto stop = load_stopwords(testing::fixture_path("toy_stopwords.txt"));
  CHECK(stop.contains("the"));
  CHECK(stop.size() == 4);
}
