// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion names
// as arguments to run a subset.

#include "topicbot/bundle.hpp"
#include "topicbot/generation.hpp"
#include "topicbot/gradcheck.hpp"
#include "topicbot/nmf.hpp"
#include "topicbot/pipeline.hpp"
#include "topicbot/training.hpp"

#include "api_contract.hpp"
#include "desk_corpus.hpp"
#include "process.hpp"
#include "reference_model.hpp"
#include "tiny_model.hpp"
#include "toy_bundle.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

using namespace topicbot;
using namespace topicbot::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "topicbot_acceptance";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix uniform(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Vector random_vector(Index n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

// Topic-aware vs non-topic model on the planted-topic desk corpus.
Outcome ordering() {
  const auto t0 = Clock::now();
  const DeskCorpus desk = make_desk_corpus();
  TopicsBuildOptions topic_opts;
  topic_opts.rank = 10;
  topic_opts.membership_k = 20;
  topic_opts.seed = 1;
  const TopicModel topics = build_topic_model(desk.topic_docs, topic_opts).model;

  BundleBuildOptions opts;
  opts.model.hidden = 64;
  opts.model.attention = 64;
  opts.model.max_question_len = 10;
  opts.model.max_answer_len = 10;
  opts.train.batch_size = 64;
  opts.train.iterations = 5000;
  opts.train.seed = 1;
  const auto with = build_bundle(desk.qa, topics, opts);
  const auto without = build_bundle(desk.qa, std::nullopt, opts);
  const double elapsed = seconds_since(t0);
  const double a = with.report.final_loss;
  const double b = without.report.final_loss;
  const std::size_t V = with.bundle.vocab.size();
  const bool pass = desk.qa.size() >= 500 && V <= 1000 && a <= b && elapsed <= 20 * 60;
  return {pass, "pairs=" + std::to_string(desk.qa.size()) + " V=" + std::to_string(V) +
                    " topic-aware final loss " + fmt(a, 6) + " <= non-topic " + fmt(b, 6) +
                    " (" + fmt(elapsed, 4) + " s, limit 1200 s)"};
}

Outcome nmf_correctness() {
  double worst_err = 0.0, worst_time = 0.0;
  bool monotone = true, nonneg = true, full = true;
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    const Matrix X = uniform(20, 4, 2 * inst + 1) * uniform(4, 30, 2 * inst + 2);
    NmfOptions o;
    o.rank = 4;
    o.max_iters = 2000;
    o.tol = 0.0;
    o.seed = inst;
    o.on_update = [&](const Matrix& W, const Matrix& H) {
      nonneg = nonneg && W.minCoeff() >= 0.0 && H.minCoeff() >= 0.0;
    };
    const auto t0 = Clock::now();
    const NmfResult r = nmf_factorize(X, o);
    worst_time = std::max(worst_time, seconds_since(t0));
    full = full && r.iterations <= 2000;
    for (std::size_t i = 1; i < r.objective.size(); ++i) {
      monotone = monotone && r.objective[i] <= r.objective[i - 1] + 1e-10;
    }
    worst_err = std::max(worst_err, relative_error(X, r.W, r.H));
  }
  const bool pass = worst_err <= 1e-3 && monotone && nonneg && full && worst_time <= 5.0;
  return {pass, "5 planted 20x30 rank-4 instances: worst relative error " + fmt(worst_err) +
                    " (<= 1e-3 in 2000 iterations), monotone=" + (monotone ? "yes" : "no") +
                    ", nonnegative after every update=" + (nonneg ? "yes" : "no") +
                    ", slowest " + fmt(worst_time, 3) + " s (limit 5 s)"};
}

// Central differences of an extended-precision scalar re-implementation of
// the loss against the model's reverse-mode gradients, every coordinate.
Outcome gradient_fidelity() {
  struct Variant {
    std::string name;
    Index topics;
    bool sigmoid_scores;
    bool topic_bias;
    bool feed_distribution;
    double dropout;
  };
  const Variant variants[] = {
      {"default", 2, true, true, false, 0.0},   {"logit scores", 2, false, true, false, 0.0},
      {"no bias", 2, true, false, false, 0.0},  {"non-topic", 0, true, true, false, 0.0},
      {"feed p-hat", 2, true, true, true, 0.0}, {"dropout", 2, true, true, false, 0.1},
  };
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t coords = 0;
  std::string where;
  for (const auto& v : variants) {
    ModelConfig c = tiny_config(20, 8, v.topics, 4);
    c.sigmoid_scores = v.sigmoid_scores;
    c.topic_bias = v.topic_bias;
    c.feed_distribution = v.feed_distribution;
    c.dropout = v.dropout;
    std::optional<TopicModel> tm;
    if (v.topics > 0) tm = random_topics(20, v.topics, 5, 130);
    Seq2SeqModel m = Seq2SeqModel::initialize(c, tm, 3);
    const auto pairs = random_pairs(2, 20, 4, 4, 31);
    const bool train = v.dropout > 0.0;
    const std::optional<std::uint64_t> mask_seed =
        train ? std::optional<std::uint64_t>(77) : std::nullopt;
    std::mt19937_64 rng(77);
    Seq2SeqModel::TrainOptions opt;
    opt.train = train;
    opt.rng = &rng;
    m.params().zero_grad();
    m.batch_loss(pointers(pairs), opt, true);
    const long double base = reference_loss(m, pairs, mask_seed);
    const auto report = fd_gradient_check(
        [&](const ParamStore&) {
          return static_cast<double>(reference_loss(m, pairs, mask_seed) - base);
        },
        m.params(), 1e-5, m.params().parameter_count(), 0);
    coords += report.coords_checked;
    if (report.max_rel_error >= worst) {
      worst = report.max_rel_error;
      where = v.name + ":" + report.worst_param;
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-4 && elapsed <= 60.0,
          "2 pairs, l=l'=4, d=8, V=20, r=2; 6 variants, " + std::to_string(coords) +
              " coordinates (all), h=1e-5: max relative error " + fmt(worst) + " at " + where +
              " (<= 1e-4), " + fmt(elapsed, 3) + " s (limit 60 s)"};
}

Outcome distribution_invariants() {
  std::mt19937_64 rng(2024);
  std::size_t steps = 0;
  double worst_sum = 0.0;
  bool positive = true;
  while (steps < 1000) {
    const Index V = 10 + static_cast<Index>(rng() % 40);
    const Index d = 4 + static_cast<Index>(rng() % 8);
    const Index r = static_cast<Index>(rng() % 4);
    ModelConfig c = tiny_config(V, d, r, 6);
    c.sigmoid_scores = rng() % 2 == 0;
    c.feed_distribution = rng() % 4 == 0;
    std::optional<TopicModel> tm;
    if (r > 0) tm = random_topics(V, r, 1 + rng() % 6, rng());
    Seq2SeqModel m = Seq2SeqModel::initialize(c, tm, rng());
    randomize(m.params(), 1.5, rng());
    const auto q = random_pairs(1, V, 6, 2, rng())[0].question;
    DecodeState st = m.start(q);
    TokenId prev = kSos;
    Vector prev_dist;
    for (std::size_t t = 0; t < 6 && steps < 1000; ++t, ++steps) {
      const bool dense = c.feed_distribution && t > 0;
      const DecodeStep s = m.step(st, prev, dense ? &prev_dist : nullptr);
      worst_sum = std::max(worst_sum, std::abs(s.dist.probs.sum() - 1.0));
      worst_sum = std::max(worst_sum, std::abs(s.message_weights.sum() - 1.0));
      if (r > 0) worst_sum = std::max(worst_sum, std::abs(s.topic_weights.sum() - 1.0));
      positive = positive && s.dist.probs.minCoeff() > 0.0 && s.message_weights.minCoeff() >= 0.0;
      prev = static_cast<TokenId>(rng() % static_cast<std::uint64_t>(V));
      prev_dist = s.dist.probs;
    }
  }

  // Zero code against the same network with the bias term removed.
  std::size_t compared = 0;
  bool identical = true;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    ModelConfig c = tiny_config(24, 8, 3, 6);
    c.sigmoid_scores = inst % 2 == 0;
    TopicModel base = random_topics(24, 3, 5, 500 + inst);
    Matrix W = base.W();
    W.bottomRows(10).setZero();  // words 14..23 belong to no topic
    const TopicModel tm(W, base.vocab_tokens(), 5, "zero-tail");
    Seq2SeqModel with = Seq2SeqModel::initialize(c, tm, inst);
    randomize(with.params(), 1.0, 900 + inst);
    Seq2SeqModel without = with;
    without.mutable_config().topic_bias = false;

    std::vector<QAPair> pairs = random_pairs(4, 24, 6, 6, 40 + inst);
    for (auto& p : pairs) {
      for (std::size_t i = 0; i < p.question_length; ++i) p.question[i] = 14 + static_cast<TokenId>(rng() % 10);
    }
    for (const auto& p : pairs) {
      if (!with.code_for(p.question).k.isZero(0.0)) identical = false;
      DecodeState a = with.start(p.question), b = without.start(p.question);
      TokenId prev = kSos;
      for (std::size_t t = 0; t < 6; ++t) {
        const DecodeStep x = with.step(a, prev), y = without.step(b, prev);
        identical = identical && x.dist.probs == y.dist.probs &&
                    x.dist.unnormalized == y.dist.unnormalized &&
                    x.topic_weights == y.topic_weights && x.message_weights == y.message_weights;
        ++compared;
        prev = p.answer[t] == kPad ? kEos : p.answer[t];
      }
    }
    identical = identical && with.batch_loss(pointers(pairs), {}).loss_sum ==
                                 without.batch_loss(pointers(pairs), {}).loss_sum;
  }
  const bool pass = worst_sum <= 1e-9 && positive && identical;
  return {pass, std::to_string(steps) + " random steps: max |sum-1| " + fmt(worst_sum) +
                    " over p-hat and both attentions (<= 1e-9), all probabilities > 0=" +
                    (positive ? "yes" : "no") + "; zero code vs bias-free network over " +
                    std::to_string(compared) + " steps and 20 teacher-forced losses: " +
                    (identical ? "bit-identical" : "DIFFERENT")};
}

Outcome monotone_biasing() {
  std::mt19937_64 rng(77);
  std::size_t comparisons = 0, violations = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const Index V = 12 + static_cast<Index>(rng() % 40);
    const Index d = 4 + static_cast<Index>(rng() % 6);
    const Index r = 1 + static_cast<Index>(rng() % 4);
    ModelConfig c = tiny_config(V, d, r, 4);
    c.sigmoid_scores = inst % 2 == 0;
    const TopicModel tm = random_topics(V, r, 2 + rng() % 5, rng());
    Seq2SeqModel m = Seq2SeqModel::initialize(c, tm, rng());
    randomize(m.params(), 1.0, rng());
    const Vector s = random_vector(d, rng, -1.0, 1.0);
    const Vector prev = one_hot(V, static_cast<TokenId>(rng() % static_cast<std::uint64_t>(V)));
    const Vector ctx = random_vector(d, rng, -1.0, 1.0);
    Vector o = random_vector(V, rng, 0.0, 1.0);
    o /= o.sum();
    TopicCode code;
    code.k = random_vector(r, rng, 0.0, 1.0);
    if (rng() % 3 == 0) code.k[static_cast<Index>(rng() % static_cast<std::uint64_t>(r))] = 0.0;
    const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(r));
    TopicCode raised = code;
    raised.k[j] += 0.5;
    const auto before = predict_distribution(s, prev, ctx, o, &code, &tm, c, m.params());
    const auto after = predict_distribution(s, prev, ctx, o, &raised, &tm, c, m.params());
    for (Index w = 0; w < V; ++w) {
      if (!tm.in_topic(static_cast<TokenId>(w), j)) continue;
      for (Index u = 0; u < V; ++u) {
        if (tm.in_any_topic(static_cast<TokenId>(u))) continue;
        ++comparisons;
        if (!(after.probs[w] / after.probs[u] > before.probs[w] / before.probs[u])) ++violations;
      }
    }
  }
  return {violations == 0 && comparisons > 0,
          "100 instances, " + std::to_string(comparisons) + " (topic word, non-topic word) pairs: " +
              std::to_string(violations) + " violations"};
}

Outcome mh_sampler() {
  const auto t0 = Clock::now();
  ModelConfig c = tiny_config(10, 8, 2, 4);
  Seq2SeqModel m = Seq2SeqModel::initialize(c, random_topics(10, 2, 3, 5), 6);
  randomize(m.params(), 1.0, 7);
  DecodeState st = m.start(random_pairs(1, 10, 4, 4, 8)[0].question);
  const PredictedDistribution target = m.step(st, kSos).dist;
  const ProposalTable table = build_proposal_table(random_pairs(40, 10, 4, 4, 9), 10, 4);

  std::vector<double> psi(target.unnormalized.data(), target.unnormalized.data() + 10);
  double z = 0.0;
  for (double x : psi) z += x;
  std::vector<double> exact;
  for (double x : psi) exact.push_back(x / z);

  MhChain chain(psi, table.row(0), static_cast<TokenId>(argmax(psi)));
  std::mt19937_64 rng(11);
  bool lambda_ok = true;
  auto advance = [&] {
    const TokenId s = chain.step(rng);
    lambda_ok = lambda_ok && chain.last_acceptance() >= 0.0 && chain.last_acceptance() <= 1.0;
    return s;
  };
  for (int i = 0; i < 100; ++i) advance();
  std::vector<double> freq(10, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[static_cast<std::size_t>(advance())] += 1.0 / n;
  double tv = 0.0;
  for (std::size_t i = 0; i < 10; ++i) tv += std::abs(freq[i] - exact[i]) / 2.0;
  const double elapsed = seconds_since(t0);
  return {tv <= 0.02 && lambda_ok && elapsed <= 10.0,
          "V=10 model step, positional proposal: TV " + fmt(tv) + " (<= 0.02) over 100000 states " +
              "after 100 burn-in, lambda in [0,1] on all steps=" + (lambda_ok ? "yes" : "no") +
              ", acceptance rate " + fmt(static_cast<double>(chain.accepted()) / (n + 100), 3) +
              ", " + fmt(elapsed, 3) + " s (limit 10 s)"};
}

Outcome memorization() {
  const auto t0 = Clock::now();
  const auto corpus = read_qa_jsonl(fixture_path("toy_qa.jsonl"));
  BundleBuildOptions opts;
  opts.model.hidden = 32;
  opts.model.attention = 32;
  opts.model.max_question_len = 10;
  opts.model.max_answer_len = 10;
  opts.model.dropout = 0.0;
  opts.model.sigmoid_scores = false;
  opts.train.batch_size = 10;
  opts.train.iterations = 2000;
  opts.train.learning_rate = 0.1;
  opts.train.seed = 1;
  const auto built = build_bundle(corpus, std::nullopt, opts);
  const auto& b = built.bundle;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto g = generate_greedy(b.model, b.vocab, corpus[i].question);
    const auto& target = built.dataset[i];
    const std::vector<TokenId> expected(target.answer.begin(),
                                        target.answer.begin() + static_cast<long>(target.answer_length));
    exact += g.ids == expected && g.text == join_tokens(tokenize(corpus[i].answer));
  }
  const double elapsed = seconds_since(t0);
  const double V = static_cast<double>(b.vocab.size());
  return {corpus.size() == 10 && built.report.final_loss <= 0.05 && exact == 10 && elapsed <= 300,
          "10 pairs, d=32, 2000 iterations, logit output scores: final loss " +
              fmt(built.report.final_loss) + " (<= 0.05), greedy exact " + std::to_string(exact) +
              "/10, " + fmt(elapsed, 3) + " s (limit 300 s); sigmoid scores bound the loss below by ln(1+(V-1)/e) = " +
              fmt(std::log(1.0 + (V - 1.0) / std::exp(1.0)))};
}

Outcome determinism_and_persistence() {
  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  const auto questions = [] {
    std::vector<std::string> q;
    for (const auto& qa : read_qa_jsonl(fixture_path("toy_qa.jsonl"))) q.push_back(qa.question);
    q.push_back("an unseen question about rain and dogs");
    return q;
  }();

  // Library: identical seeds, identical bytes; round trip keeps transcripts.
  const fs::path a = scratch("toy_a.bundle"), b = scratch("toy_b.bundle");
  const ModelBundle toy = build_toy_bundle(1, 300).bundle;
  save_bundle(toy, a);
  save_bundle(build_toy_bundle(1, 300).bundle, b);
  expect(slurp(a) == slurp(b), "same seed gives byte-identical bundles");
  const ModelBundle loaded = load_bundle(a);
  std::size_t same = 0;
  for (const auto& q : questions) {
    std::mt19937_64 r1(5), r2(5);
    const bool greedy = generate_greedy(toy.model, toy.vocab, q).ids ==
                        generate_greedy(loaded.model, loaded.vocab, q).ids;
    const bool mh = generate_mh(toy.model, toy.vocab, toy.proposal, q, 50, r1).ids ==
                    generate_mh(loaded.model, loaded.vocab, loaded.proposal, q, 50, r2).ids;
    same += greedy && mh;
  }
  expect(same == questions.size(), "round trip keeps greedy and seeded mh transcripts");

#ifdef TOPICBOT_CLI
  auto cli = [](std::vector<std::string> args, const std::string& input = "") {
    args.insert(args.begin(), TOPICBOT_CLI);
    return run_command(args, input);
  };
  const fs::path topics = scratch("toy.topics");
  const auto tb = cli({"topics-build", "--corpus", fixture_path("toy_topics.txt"), "--rank", "3",
                       "--membership-k", "8", "--stopwords", fixture_path("toy_stopwords.txt"),
                       "--out", topics.string()});
  expect(tb.exit_code == 0, "topics-build exits 0: " + tb.output);

  auto train_args = [&](const fs::path& out) {
    return std::vector<std::string>{"train", "--qa", fixture_path("toy_qa.jsonl"), "--topics",
                                    topics.string(), "--out", out.string(), "--iterations", "300",
                                    "--batch-size", "10", "--hidden", "16", "--attention", "16",
                                    "--max-question-len", "10", "--max-answer-len", "10",
                                    "--dropout", "0", "--learning-rate", "0.1", "--logit-scores",
                                    "--seed", "1"};
  };
  const fs::path c1 = scratch("cli_1.bundle"), c2 = scratch("cli_2.bundle");
  const auto t1 = cli(train_args(c1));
  const auto t2 = cli(train_args(c2));
  expect(t1.exit_code == 0 && t2.exit_code == 0, "train exits 0: " + t1.output);
  expect(slurp(c1) == slurp(c2), "cli train with the same seed gives byte-identical bundles");

  const fs::path plain = scratch("cli_plain.bundle");
  auto plain_args = train_args(plain);
  plain_args[3] = "--no-topics";
  plain_args.erase(plain_args.begin() + 4);
  plain_args.insert(plain_args.end(), {"--metrics", scratch("plain.jsonl").string()});
  const auto tp = cli(plain_args);
  expect(tp.exit_code == 0, "train --no-topics exits 0: " + tp.output);

  const auto ev = cli({"eval", "--bundle", plain.string(), "--qa", fixture_path("toy_qa.jsonl")});
  expect(ev.exit_code == 0, "eval exits 0: " + ev.output);
  if (ev.exit_code == 0 && tp.exit_code == 0) {
    std::istringstream log(slurp(scratch("plain.jsonl")));
    std::string line, last;
    while (std::getline(log, line)) last = line;
    const double logged = nlohmann::json::parse(last).at("final_loss");
    const double evaluated = nlohmann::json::parse(ev.output).at("loss");
    expect(std::abs(logged - evaluated) <= 1e-9, "eval reproduces the logged final loss");
  }

  std::string input;
  for (const auto& q : questions) input += q + "\n";
  const ModelBundle cli_bundle = load_bundle(c1);
  const auto chat = cli({"chat", "--bundle", c1.string()}, input);
  expect(chat.exit_code == 0, "chat exits 0: " + chat.output);
  std::istringstream replies(chat.output);
  std::size_t matched = 0;
  for (const auto& q : questions) {
    std::string reply;
    std::getline(replies, reply);
    matched += reply == generate_greedy(cli_bundle.model, cli_bundle.vocab, q).text;
  }
  expect(matched == questions.size(), "chat replies equal library greedy decoding");
  const auto mh1 = cli({"chat", "--bundle", c1.string(), "--mode", "mh", "--seed", "3"}, input);
  const auto mh2 = cli({"chat", "--bundle", c1.string(), "--mode", "mh", "--seed", "3"}, input);
  expect(mh1.exit_code == 0 && mh1.output == mh2.output, "chat --mode mh is seeded");

  {
    BackgroundProcess server({TOPICBOT_CLI, "serve", "--bundle", "toy=" + c1.string(), "--bundle",
                              "plain=" + plain.string(), "--port", "0"},
                             scratch("serve.log"));
    const auto line = server.wait_for("listening on", std::chrono::seconds(60));
    expect(line.has_value(), "serve starts: " + server.log_text());
    if (line) {
      const int port = std::stoi(line->substr(line->rfind(':') + 1));
      const ModelBundle plain_bundle = load_bundle(plain);
      for (const auto& f : check_api_contract("127.0.0.1", port,
                                              {{"toy", &cli_bundle}, {"plain", &plain_bundle}})) {
        expect(false, "api: " + f);
      }
    }
    expect(server.running(), "serve keeps running");
  }
#else
  expect(false, "command-line tool not built");
#endif

  std::string detail = problems.empty()
                           ? "bit-identical bundles (library and cli), round-trip transcripts for " +
                                 std::to_string(questions.size()) +
                                 " questions, topics-build/train/eval/chat/serve succeed, API contract " +
                                 "holds on a live server"
                           : "";
  for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"ordering", ordering},
      {"nmf", nmf_correctness},
      {"gradient", gradient_fidelity},
      {"distribution", distribution_invariants},
      {"biasing", monotone_biasing},
      {"mh", mh_sampler},
      {"memorization", memorization},
      {"determinism", determinism_and_persistence},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failures += !out.pass;
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << " [" << fmt(seconds_since(t0), 3)
              << " s] " << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
