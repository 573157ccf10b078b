#include "topicbot/bundle.hpp"
#include "topicbot/generation.hpp"
#include "topicbot/pipeline.hpp"
#include "topicbot/service.hpp"
#include "topicbot/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

namespace py = pybind11;
using namespace topicbot;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<QAText> to_qa(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<QAText> out;
  out.reserve(pairs.size());
  for (const auto& [q, a] : pairs) out.push_back({q, a});
  return out;
}

Matrix stack_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = rows[i].transpose();
  return m;
}

using BundlePtr = std::shared_ptr<ModelBundle>;

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Topic-aware chatbot core";

  m.def("tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"));

  m.def(
      "read_qa_jsonl",
      [](const std::string& path) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& qa : read_qa_jsonl(path)) out.emplace_back(qa.question, qa.answer);
        return out;
      },
      py::arg("path"), "Reads a JSONL QA corpus into (question, answer) tuples.");

  m.def(
      "nmf_factorize",
      [](const Matrix& X, Index rank, int max_iters, double tol, std::uint64_t seed,
         int inner_updates) {
        NmfOptions o;
        o.rank = rank;
        o.max_iters = max_iters;
        o.tol = tol;
        o.seed = seed;
        o.inner_updates = inner_updates;
        NmfResult r;
        {
          py::gil_scoped_release release;
          r = nmf_factorize(X, o);
        }
        py::dict out;
        out["W"] = r.W;
        out["H"] = r.H;
        out["objective"] = r.objective;
        out["iterations"] = r.iterations;
        out["converged"] = r.converged;
        return out;
      },
      py::arg("X"), py::arg("rank"), py::arg("max_iters") = 500, py::arg("tol") = 1e-6,
      py::arg("seed") = 0, py::arg("inner_updates") = 20,
      "Nonnegative factorization X ~ W H; returns a dict with W, H, objective, iterations.");

  py::class_<TopicModel>(m, "TopicModel")
      .def_property_readonly("rank", &TopicModel::rank)
      .def_property_readonly("vocab_size", &TopicModel::vocab_size)
      .def_property_readonly("membership_k", &TopicModel::membership_k)
      .def_property_readonly("source", &TopicModel::source)
      .def_property_readonly("vocab", &TopicModel::vocab_tokens)
      .def_property_readonly("W", [](const TopicModel& t) { return Matrix(t.W()); })
      .def("top_words", &top_words, py::arg("topic"), py::arg("k") = 10)
      .def_property_readonly("word_sets",
                             [](const TopicModel& t) {
                               std::vector<std::vector<std::string>> out;
                               for (const auto& set : t.topic_word_sets()) {
                                 std::vector<std::string> words;
                                 for (TokenId id : set) {
                                   words.push_back(t.vocab_tokens()[static_cast<std::size_t>(id)]);
                                 }
                                 out.push_back(std::move(words));
                               }
                               return out;
                             })
      .def("save", [](const TopicModel& t, const std::string& path) { save_topic_model(t, path); })
      .def_static("load", [](const std::string& path) { return load_topic_model(path); })
      .def("__eq__", [](const TopicModel& a, const TopicModel& b) { return a == b; });

  m.def(
      "build_topic_model",
      [](const std::vector<std::string>& docs, Index rank, std::size_t membership_k,
         std::uint64_t seed, int max_iters, double tol, const std::vector<std::string>& stopwords,
         std::size_t vocab_cap) {
        std::vector<Document> documents;
        for (std::size_t i = 0; i < docs.size(); ++i) {
          documents.push_back({"doc" + std::to_string(i), docs[i]});
        }
        TopicsBuildOptions o;
        o.rank = rank;
        o.membership_k = membership_k;
        o.seed = seed;
        o.max_iters = max_iters;
        o.tol = tol;
        o.vocab_cap = vocab_cap;
        o.stopwords.insert(stopwords.begin(), stopwords.end());
        py::gil_scoped_release release;
        return build_topic_model(documents, o).model;
      },
      py::arg("docs"), py::arg("rank") = 10, py::arg("membership_k") = 100, py::arg("seed") = 0,
      py::arg("max_iters") = 500, py::arg("tol") = 1e-6,
      py::arg("stopwords") = std::vector<std::string>{}, py::arg("vocab_cap") = 18004,
      "tokenize, TF-IDF and NMF over the documents; returns the topic model.");

  py::class_<ModelBundle, BundlePtr>(m, "Bundle")
      .def_static(
          "load", [](const std::string& path) { return std::make_shared<ModelBundle>(load_bundle(path)); },
          py::arg("path"))
      .def("save", [](const ModelBundle& b, const std::string& path) { save_bundle(b, path); },
           py::arg("path"))
      .def_property_readonly("config", [](const ModelBundle& b) { return to_python(b.model.config().to_json()); })
      .def_property_readonly("train_config", [](const ModelBundle& b) { return to_python(b.manifest.train_config); })
      .def_property_readonly("final_loss", [](const ModelBundle& b) { return b.manifest.final_loss; })
      .def_property_readonly("vocab", [](const ModelBundle& b) { return b.vocab.tokens(); })
      .def_property_readonly("topics",
                             [](const ModelBundle& b) -> std::optional<TopicModel> {
                               if (const TopicModel* t = b.model.topics()) return *t;
                               return std::nullopt;
                             })
      .def(
          "evaluate",
          [](const ModelBundle& b, const std::vector<std::pair<std::string, std::string>>& qa) {
            const auto& c = b.model.config();
            const auto pairs = encode_qa_pairs(to_qa(qa), b.vocab, c.max_question_len, c.max_answer_len);
            py::gil_scoped_release release;
            return evaluate(b.model, pairs);
          },
          py::arg("qa"), "Mean teacher-forced loss per answer word.")
      .def(
          "reply",
          [](const ModelBundle& b, const std::string& question, const std::string& mode,
             std::size_t mh_steps, std::uint64_t seed) {
            if (mode != "greedy" && mode != "mh") {
              throw py::value_error("mode must be 'greedy' or 'mh'");
            }
            GenerationOptions opts;
            opts.mode = mode == "mh" ? DecodeMode::kMetropolisHastings : DecodeMode::kGreedy;
            opts.mh_steps = mh_steps;
            std::mt19937_64 rng(seed);
            GenerationResult r;
            {
              py::gil_scoped_release release;
              r = generate(b.model, b.vocab, b.proposal, question, opts, rng);
            }
            py::dict out;
            out["reply"] = r.text;
            out["ids"] = r.ids;
            out["topic_code"] = Vector(r.code.k);
            out["topic_words_used"] = topic_words_used(r, b);
            out["message_attention"] = stack_rows(r.message_weights);
            out["topic_attention"] = b.model.topics() ? stack_rows(r.topic_weights) : Matrix(0, 0);
            return out;
          },
          py::arg("question"), py::arg("mode") = "greedy", py::arg("mh_steps") = 50,
          py::arg("seed") = 0);

  m.def(
      "train_bundle",
      [](const std::vector<std::pair<std::string, std::string>>& qa,
         const std::optional<TopicModel>& topics, Index hidden, Index attention,
         std::size_t max_question_len, std::size_t max_answer_len, double dropout,
         bool sigmoid_scores, bool topic_bias, bool feed_distribution, std::size_t batch_size,
         std::size_t iterations, double learning_rate, double clip_norm, double teacher_forcing,
         std::uint64_t seed, std::size_t vocab_cap,
         const std::function<void(std::size_t, double)>& on_iteration) {
        BundleBuildOptions o;
        o.model.hidden = hidden;
        o.model.attention = attention;
        o.model.max_question_len = max_question_len;
        o.model.max_answer_len = max_answer_len;
        o.model.dropout = dropout;
        o.model.sigmoid_scores = sigmoid_scores;
        o.model.topic_bias = topic_bias;
        o.model.feed_distribution = feed_distribution;
        o.train.batch_size = batch_size;
        o.train.iterations = iterations;
        o.train.learning_rate = learning_rate;
        o.train.clip_norm = clip_norm;
        o.train.teacher_forcing = teacher_forcing;
        o.train.seed = seed;
        o.vocab_cap = vocab_cap;
        TrainHooks hooks;
        if (on_iteration) {
          hooks.on_iteration = [&](std::size_t iter, double loss, double) {
            py::gil_scoped_acquire acquire;
            on_iteration(iter, loss);
          };
        }
        const auto corpus = to_qa(qa);
        py::gil_scoped_release release;
        return std::make_shared<ModelBundle>(build_bundle(corpus, topics, o, hooks).bundle);
      },
      py::arg("qa"), py::arg("topics") = py::none(), py::arg("hidden") = 64,
      py::arg("attention") = 64, py::arg("max_question_len") = 25,
      py::arg("max_answer_len") = 25, py::arg("dropout") = 0.1, py::arg("sigmoid_scores") = true,
      py::arg("topic_bias") = true, py::arg("feed_distribution") = false,
      py::arg("batch_size") = 64, py::arg("iterations") = 1000, py::arg("learning_rate") = 0.01,
      py::arg("clip_norm") = 5.0, py::arg("teacher_forcing") = 1.0, py::arg("seed") = 0,
      py::arg("vocab_cap") = 18004, py::arg("on_iteration") = nullptr,
      "Builds the vocabulary, aligns the topic model, trains and returns a Bundle.");

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const TrainingError& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });
}
