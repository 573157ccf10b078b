// topicbot: build topic models, train, evaluate, chat with and serve
// topic-aware chatbot bundles.

#include "topicbot/bundle.hpp"
#include "topicbot/generation.hpp"
#include "topicbot/hash.hpp"
#include "topicbot/pipeline.hpp"
#include "topicbot/service.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace topicbot;

namespace {

struct TopicsBuildArgs {
  std::string corpus;
  std::string out;
  std::string stopwords;
  TopicsBuildOptions opts;
};

struct TrainArgs {
  std::string qa;
  std::string topics;
  bool no_topics = false;
  std::string out;
  std::string metrics;
  std::size_t checkpoint_every = 0;
  bool logit_scores = false;
  bool no_topic_bias = false;
  bool feed_distribution = false;
  bool raw_code = false;
  bool stamp_time = false;
  BundleBuildOptions opts;
};

struct EvalArgs {
  std::string bundle;
  std::string qa;
};

struct ChatArgs {
  std::string bundle;
  std::string mode = "greedy";
  std::size_t mh_steps = 50;
  std::uint64_t seed = 0;
  bool show_topics = false;
};

struct ServeArgs {
  std::vector<std::string> bundles;
  std::string address = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
};

std::string fmt_vec(const Vector& v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << "[";
  for (Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  out << "]";
  return out.str();
}

nlohmann::json describe(const CLI::App& app) {
  nlohmann::json j = {{"name", app.get_name()}, {"description", app.get_description()}};
  nlohmann::json opts = nlohmann::json::array();
  for (const CLI::Option* o : app.get_options()) {
    if (o->get_lnames().empty()) continue;
    opts.push_back({{"name", "--" + o->get_lnames().front()},
                    {"description", o->get_description()},
                    {"required", o->get_required()},
                    {"flag", o->get_expected_max() == 0},
                    {"type", o->get_type_name()},
                    {"default", o->get_default_str()}});
  }
  j["options"] = opts;
  nlohmann::json subs = nlohmann::json::array();
  for (const CLI::App* s : app.get_subcommands({})) subs.push_back(describe(*s));
  if (!subs.empty()) j["subcommands"] = subs;
  return j;
}

int run_topics_build(const TopicsBuildArgs& a) {
  TopicsBuildOptions opts = a.opts;
  if (!a.stopwords.empty()) opts.stopwords = load_stopwords(a.stopwords);
  const auto docs = load_documents(a.corpus);
  TopicsBuildResult built = build_topic_model(docs, opts);
  save_topic_model(built.model, a.out);
  std::cout << "topic model: " << built.documents << " documents, V=" << built.model.vocab_size()
            << ", r=" << built.model.rank() << ", " << built.nmf.iterations
            << " NMF iterations, objective " << built.nmf.objective.back() << "\n";
  for (Index j = 0; j < built.model.rank(); ++j) {
    std::cout << "topic " << j << ":";
    for (const auto& w : top_words(built.model, j, 10)) std::cout << " " << w;
    std::cout << "\n";
  }
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

int run_train(TrainArgs a) {
  if (a.no_topics == !a.topics.empty()) {
    throw CLI::ValidationError("--topics/--no-topics", "give exactly one of --topics PATH or --no-topics");
  }
  auto& mc = a.opts.model;
  mc.sigmoid_scores = !a.logit_scores;
  mc.topic_bias = !a.no_topic_bias;
  mc.feed_distribution = a.feed_distribution;
  mc.normalize_code = !a.raw_code;

  const auto corpus = read_qa_jsonl(a.qa);
  a.opts.qa_corpus_hash = file_fingerprint(a.qa);
  std::optional<TopicModel> topics;
  if (!a.no_topics) topics = load_topic_model(a.topics);

  std::unique_ptr<std::ofstream> metrics;
  if (!a.metrics.empty()) {
    metrics = std::make_unique<std::ofstream>(a.metrics);
    if (!*metrics) throw std::runtime_error("cannot write " + a.metrics);
  }

  // Checkpoints reuse the vocabulary and proposal table the final bundle
  // will carry; both depend on the corpus alone.
  const Vocabulary vocab = build_qa_vocabulary(corpus, a.opts.vocab_cap);
  std::optional<ProposalTable> proposal;

  TrainHooks hooks;
  hooks.on_iteration = [&](std::size_t iter, double loss, double elapsed) {
    if (metrics) {
      *metrics << nlohmann::json{{"iter", iter}, {"loss", loss}, {"elapsed_s", elapsed}}.dump()
               << "\n";
    }
    if (iter % 100 == 0 || iter == 1) {
      std::cerr << "iter " << iter << " loss " << loss << " (" << elapsed << " s)\n";
    }
  };
  hooks.checkpoint_every = a.checkpoint_every;
  hooks.on_checkpoint = [&](std::size_t iter, const Seq2SeqModel& model) {
    if (!proposal) {
      const auto pairs = encode_qa_pairs(corpus, vocab, mc.max_question_len, mc.max_answer_len);
      proposal = build_proposal_table(pairs, vocab.size(), mc.max_answer_len);
    }
    BundleManifest manifest;
    manifest.seed = a.opts.train.seed;
    manifest.qa_corpus_hash = a.opts.qa_corpus_hash;
    manifest.topic_corpus_hash = topics ? topics->source() : "";
    manifest.train_config = a.opts.train.to_json();
    ModelBundle ckpt{model, vocab, *proposal, manifest};
    const std::string path = a.out + ".ckpt" + std::to_string(iter);
    save_bundle(ckpt, path);
    std::cerr << "checkpoint " << path << "\n";
  };

  BundleBuildResult built = build_bundle(corpus, topics, a.opts, hooks);
  if (a.stamp_time) {
    built.bundle.manifest.created_unix =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
  }
  save_bundle(built.bundle, a.out);
  if (metrics) {
    *metrics << nlohmann::json{{"final_loss", built.report.final_loss},
                               {"wall_seconds", built.report.wall_seconds}}
                    .dump()
             << "\n";
  }
  std::cout << "final loss " << std::setprecision(17) << built.report.final_loss << "\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  const ModelBundle b = load_bundle(a.bundle);
  const auto& c = b.model.config();
  const auto pairs = load_qa_pairs(a.qa, b.vocab, c.max_question_len, c.max_answer_len);
  if (pairs.empty()) throw std::runtime_error(a.qa + ": no QA pairs");
  const double loss = evaluate(b.model, pairs);
  std::cout << nlohmann::json{{"loss", loss}, {"pairs", pairs.size()}}.dump() << "\n";
  return 0;
}

int run_chat(const ChatArgs& a) {
  const ModelBundle b = load_bundle(a.bundle);
  GenerationOptions gen;
  gen.mode = a.mode == "mh" ? DecodeMode::kMetropolisHastings : DecodeMode::kGreedy;
  gen.mh_steps = a.mh_steps;
  std::mt19937_64 rng = session_rng(a.seed, "cli");
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line == "/quit" || line == "/exit") break;
    const GenerationResult r = generate(b.model, b.vocab, b.proposal, line, gen, rng);
    std::cout << r.text << "\n";
    if (a.show_topics && b.model.topics()) {
      std::cout << "  topic code " << fmt_vec(r.code.k) << "\n";
      for (std::size_t t = 0; t < r.topic_weights.size(); ++t) {
        std::cout << "  step " << t << " topic attention " << fmt_vec(r.topic_weights[t]) << "\n";
      }
    }
    std::cout.flush();
  }
  return 0;
}

int run_serve(const ServeArgs& a) {
  ChatService service(a.seed);
  for (const auto& spec : a.bundles) {
    std::string name;
    std::string path;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      path = spec;
      name = fs::path(spec).stem().string();
    }
    service.add_bundle(name, std::make_shared<const ModelBundle>(load_bundle(path)));
    std::cerr << "loaded bundle " << name << " from " << path << "\n";
  }
  HttpChatServer server(service);
  const int port = server.bind(a.address, a.port);
  std::cout << "listening on http://" << a.address << ":" << port << std::endl;
  server.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-aware chatbot: NMF topics, GRU seq2seq training, generation and serving"};
  app.require_subcommand(0, 1);
  bool help_json = false;
  app.add_flag("--help-json", help_json, "Print every command and option as JSON and exit");

  TopicsBuildArgs tb;
  auto* cmd_tb = app.add_subcommand("topics-build", "Learn a topic model from a text corpus by NMF");
  cmd_tb->add_option("--corpus", tb.corpus, "Text file (one document per line) or directory of .txt files")
      ->required();
  cmd_tb->add_option("--out", tb.out, "Output topic model file")->required();
  cmd_tb->add_option("--rank", tb.opts.rank, "Number of topics r")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_tb->add_option("--membership-k", tb.opts.membership_k, "Words per topic word set K")
      ->capture_default_str()->check(CLI::PositiveNumber);
  cmd_tb->add_option("--seed", tb.opts.seed, "NMF initialization seed")->capture_default_str();
  cmd_tb->add_option("--max-iters", tb.opts.max_iters, "NMF iteration cap")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_tb->add_option("--tol", tb.opts.tol, "Relative objective decrease to stop at")
      ->capture_default_str();
  cmd_tb->add_option("--vocab-cap", tb.opts.vocab_cap, "Vocabulary size including reserved tokens")
      ->capture_default_str();
  cmd_tb->add_option("--stopwords", tb.stopwords, "Stop-word list, one word per line");

  TrainArgs tr;
  auto& mc = tr.opts.model;
  auto& tc = tr.opts.train;
  auto* cmd_tr = app.add_subcommand("train", "Train a chatbot bundle on a JSONL QA corpus");
  cmd_tr->add_option("--qa", tr.qa, "QA corpus, one {\"q\":..., \"a\":...} object per line")->required();
  cmd_tr->add_option("--topics", tr.topics, "Topic model file from topics-build");
  cmd_tr->add_flag("--no-topics", tr.no_topics, "Train the non-topic model");
  cmd_tr->add_option("--out", tr.out, "Output bundle file")->required();
  cmd_tr->add_option("--metrics", tr.metrics, "Per-iteration metrics log (JSONL)");
  cmd_tr->add_option("--checkpoint-every", tr.checkpoint_every,
                     "Write OUT.ckptN every N iterations (0 disables)")->capture_default_str();
  cmd_tr->add_option("--batch-size", tc.batch_size, "Pairs per batch")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_tr->add_option("--iterations", tc.iterations, "Training batches")->capture_default_str();
  cmd_tr->add_option("--learning-rate", tc.learning_rate, "Adagrad learning rate")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd_tr->add_option("--adagrad-eps", tc.adagrad_eps, "Adagrad epsilon")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_tr->add_option("--teacher-forcing", tc.teacher_forcing, "Teacher forcing rate")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  cmd_tr->add_option("--clip-norm", tc.clip_norm, "Global gradient norm clip (0 disables)")
      ->capture_default_str();
  cmd_tr->add_option("--seed", tc.seed, "Initialization, batch order and dropout seed")
      ->capture_default_str();
  cmd_tr->add_option("--hidden", mc.hidden, "Embedding and hidden width d")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_tr->add_option("--attention", mc.attention, "Attention width")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_tr->add_option("--dropout", mc.dropout, "Dropout rate")->capture_default_str()
      ->check(CLI::Range(0.0, 0.999999));
  cmd_tr->add_option("--max-question-len", mc.max_question_len, "Question length l")
      ->capture_default_str()
      ->check(CLI::Range(2, 100000));
  cmd_tr->add_option("--max-answer-len", mc.max_answer_len, "Answer length l'")->capture_default_str()
      ->check(CLI::Range(2, 100000));
  cmd_tr->add_option("--vocab-cap", tr.opts.vocab_cap, "Vocabulary size including reserved tokens")
      ->capture_default_str();
  cmd_tr->add_flag("--logit-scores", tr.logit_scores, "Use raw affine output scores instead of sigmoid");
  cmd_tr->add_flag("--no-topic-bias", tr.no_topic_bias, "Keep topic attention but drop the output bias");
  cmd_tr->add_flag("--feed-distribution", tr.feed_distribution,
                   "Feed the previous predicted distribution to the decoder");
  cmd_tr->add_flag("--raw-code", tr.raw_code, "Do not normalize topic codes to sum to one");
  cmd_tr->add_flag("--stamp-time", tr.stamp_time, "Record the creation time in the bundle");

  EvalArgs ev;
  auto* cmd_ev = app.add_subcommand("eval", "Mean per-word loss of a bundle on a QA corpus");
  cmd_ev->add_option("--bundle", ev.bundle, "Bundle file")->required();
  cmd_ev->add_option("--qa", ev.qa, "QA corpus (JSONL)")->required();

  ChatArgs ch;
  auto* cmd_ch = app.add_subcommand("chat", "Read questions from stdin and print replies");
  cmd_ch->add_option("--bundle", ch.bundle, "Bundle file")->required();
  cmd_ch->add_option("--mode", ch.mode, "Decoding mode")->capture_default_str()
      ->check(CLI::IsMember({"greedy", "mh"}));
  cmd_ch->add_option("--mh-steps", ch.mh_steps, "Chain steps per word in mh mode")->capture_default_str();
  cmd_ch->add_option("--seed", ch.seed, "Sampling seed")->capture_default_str();
  cmd_ch->add_flag("--show-topics", ch.show_topics, "Print the topic code and topic attention");

  ServeArgs sv;
  auto* cmd_sv = app.add_subcommand("serve", "Serve the chat HTTP API");
  cmd_sv->add_option("--bundle", sv.bundles, "Bundle file, optionally NAME=PATH (repeatable)")->required();
  cmd_sv->add_option("--address", sv.address, "Listen address")->capture_default_str();
  cmd_sv->add_option("--port", sv.port, "Listen port (0 picks a free one)")->capture_default_str();
  cmd_sv->add_option("--seed", sv.seed, "Default session seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (help_json) {
    std::cout << describe(app).dump(2) << "\n";
    return 0;
  }

  try {
    if (cmd_tb->parsed()) return run_topics_build(tb);
    if (cmd_tr->parsed()) return run_train(tr);
    if (cmd_ev->parsed()) return run_eval(ev);
    if (cmd_ch->parsed()) return run_chat(ch);
    if (cmd_sv->parsed()) return run_serve(sv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << app.help();
  return 0;
}
