#include "topicbot/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace topicbot {

namespace {

constexpr double kProbFloor = 1e-300;

double score(double z, bool use_sigmoid) { return use_sigmoid ? sigmoid(z) : z; }

// Pointers to every parameter tensor, either the values or the gradients.
template <typename M>
struct Slots {
  M* embedding = nullptr;
  M *enc_Wz, *enc_Uz, *enc_bz, *enc_Wr, *enc_Ur, *enc_br, *enc_Ws, *enc_Us, *enc_bs;
  M *attc_A, *attc_B, *attc_b, *attc_v;
  M *atto_A = nullptr, *atto_C = nullptr, *atto_P = nullptr, *atto_D = nullptr,
    *atto_b = nullptr, *atto_v = nullptr;
  M *dec_Wp, *dec_Ws, *dec_Wc, *dec_Wo = nullptr, *dec_b;
  M *outc_Ws, *outc_Wp, *outc_Wc, *outc_b;
  M *outo_Ws = nullptr, *outo_Wp = nullptr, *outo_Wo = nullptr, *outo_b = nullptr;
};

template <typename M, typename Get>
Slots<M> make_slots(bool with_topics, Get&& get) {
  Slots<M> s;
  s.embedding = get("embedding");
  s.enc_Wz = get("enc.W_z");
  s.enc_Uz = get("enc.U_z");
  s.enc_bz = get("enc.b_z");
  s.enc_Wr = get("enc.W_r");
  s.enc_Ur = get("enc.U_r");
  s.enc_br = get("enc.b_r");
  s.enc_Ws = get("enc.W_s");
  s.enc_Us = get("enc.U_s");
  s.enc_bs = get("enc.b_s");
  s.attc_A = get("att_c.A");
  s.attc_B = get("att_c.B");
  s.attc_b = get("att_c.b");
  s.attc_v = get("att_c.v");
  s.dec_Wp = get("dec.W_p");
  s.dec_Ws = get("dec.W_s");
  s.dec_Wc = get("dec.W_c");
  s.dec_b = get("dec.b");
  s.outc_Ws = get("out_c.W_s");
  s.outc_Wp = get("out_c.W_p");
  s.outc_Wc = get("out_c.W_c");
  s.outc_b = get("out_c.b");
  if (with_topics) {
    s.atto_A = get("att_o.A");
    s.atto_C = get("att_o.C");
    s.atto_P = get("att_o.P");
    s.atto_D = get("att_o.D");
    s.atto_b = get("att_o.b");
    s.atto_v = get("att_o.v");
    s.dec_Wo = get("dec.W_o");
    s.outo_Ws = get("out_o.W_s");
    s.outo_Wp = get("out_o.W_p");
    s.outo_Wo = get("out_o.W_o");
    s.outo_b = get("out_o.b");
  }
  return s;
}

Slots<const Matrix> value_slots(const ParamStore& p, bool with_topics) {
  return make_slots<const Matrix>(with_topics, [&](const char* n) { return &p.value(n); });
}

Slots<Matrix> grad_slots(ParamStore& p, bool with_topics) {
  return make_slots<Matrix>(with_topics, [&](const char* n) { return &p.grad(n); });
}

// Column access for one-hot inputs: W · e_id.
auto col(const Matrix& m, TokenId id) { return m.col(id); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(vocab_size > static_cast<Index>(kReservedCount),
          "vocab_size must exceed the 4 reserved tokens");
  require(hidden >= 1, "hidden must be >= 1");
  require(attention >= 1, "attention must be >= 1");
  require(max_question_len >= 1, "max_question_len must be >= 1");
  require(max_answer_len >= 1, "max_answer_len must be >= 1");
  require(topics >= 0, "topics must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"hidden", hidden},
          {"max_question_len", max_question_len},
          {"max_answer_len", max_answer_len},
          {"topics", topics},
          {"attention", attention},
          {"dropout", dropout},
          {"membership_k", membership_k},
          {"topic_bias", topic_bias},
          {"sigmoid_scores", sigmoid_scores},
          {"feed_distribution", feed_distribution},
          {"normalize_code", normalize_code}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<Index>();
  c.hidden = j.at("hidden").get<Index>();
  c.max_question_len = j.at("max_question_len").get<std::size_t>();
  c.max_answer_len = j.at("max_answer_len").get<std::size_t>();
  c.topics = j.at("topics").get<Index>();
  c.attention = j.at("attention").get<Index>();
  c.dropout = j.at("dropout").get<double>();
  c.membership_k = j.at("membership_k").get<std::size_t>();
  c.topic_bias = j.at("topic_bias").get<bool>();
  c.sigmoid_scores = j.at("sigmoid_scores").get<bool>();
  c.feed_distribution = j.at("feed_distribution").get<bool>();
  c.normalize_code = j.at("normalize_code").get<bool>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Single-step forms

Vector gru_step(const Vector& x, const Vector& h_prev, const ParamStore& p) {
  const Index d = p.value("enc.U_z").rows();
  if (x.size() != p.value("enc.W_z").cols() || h_prev.size() != d) {
    throw std::invalid_argument("gru_step: input or state has the wrong dimension");
  }
  const Vector z = sigmoid(Vector(p.value("enc.W_z") * x + p.value("enc.U_z") * h_prev +
                                  p.value("enc.b_z").col(0)));
  const Vector r = sigmoid(Vector(p.value("enc.W_r") * x + p.value("enc.U_r") * h_prev +
                                  p.value("enc.b_r").col(0)));
  const Vector s = tanh(Vector(p.value("enc.W_s") * x +
                               p.value("enc.U_s") * h_prev.cwiseProduct(r) +
                               p.value("enc.b_s").col(0)));
  return (Vector::Ones(d) - z).cwiseProduct(s) + z.cwiseProduct(h_prev);
}

AttentionResult message_attention(const Vector& s_prev, const std::vector<Vector>& states,
                                  const ParamStore& p) {
  const Matrix& A = p.value("att_c.A");
  const Matrix& B = p.value("att_c.B");
  const Vector b = p.value("att_c.b").col(0);
  const Vector v = p.value("att_c.v").col(0);
  Vector xi(static_cast<Index>(states.size()));
  const Vector query = A * s_prev;
  for (std::size_t j = 0; j < states.size(); ++j) {
    xi[static_cast<Index>(j)] = v.dot(tanh(Vector(query + B * states[j] + b)));
  }
  AttentionResult out;
  out.weights = softmax(xi);
  out.context = Vector::Zero(s_prev.size());
  for (std::size_t j = 0; j < states.size(); ++j) {
    out.context += out.weights[static_cast<Index>(j)] * states[j];
  }
  return out;
}

AttentionResult topic_attention(const Vector& s_prev, const Matrix& topics,
                                const Vector& h_last, const ParamStore& p) {
  const Matrix& A = p.value("att_o.A");
  const Matrix& C = p.value("att_o.C");
  const Matrix& P = p.value("att_o.P");
  const Matrix& D = p.value("att_o.D");
  const Vector b = p.value("att_o.b").col(0);
  const Vector v = p.value("att_o.v").col(0);
  const Vector base = A * s_prev + D * h_last + b;
  Vector xi(topics.cols());
  for (Index j = 0; j < topics.cols(); ++j) {
    const Vector projected = P * topics.col(j);
    xi[j] = v.dot(tanh(Vector(base + C * projected)));
  }
  AttentionResult out;
  out.weights = softmax(xi);
  out.context = Vector::Zero(topics.rows());
  for (Index j = 0; j < topics.cols(); ++j) out.context += out.weights[j] * topics.col(j);
  return out;
}

Vector decoder_step(const Vector& prev_output, const Vector& s_prev, const Vector& context,
                    const Vector& topic_context, const ParamStore& p) {
  Vector pre = p.value("dec.W_p") * prev_output + p.value("dec.W_s") * s_prev +
               p.value("dec.W_c") * context;
  if (topic_context.size() > 0) pre += p.value("dec.W_o") * topic_context;
  pre += p.value("dec.b").col(0);
  return sigmoid(pre);
}

PredictedDistribution predict_distribution(const Vector& s, const Vector& prev_output,
                                           const Vector& context, const Vector& topic_context,
                                           const TopicCode* code, const TopicModel* topics,
                                           const ModelConfig& config, const ParamStore& p) {
  const Index V = config.vocab_size;
  Vector zc = p.value("out_c.W_s") * s + p.value("out_c.W_p") * prev_output +
              p.value("out_c.W_c") * context + p.value("out_c.b").col(0);
  Vector psi_c(V);
  for (Index w = 0; w < V; ++w) psi_c[w] = score(zc[w], config.sigmoid_scores);

  Vector bias = Vector::Zero(V);
  Vector psi_o = Vector::Zero(V);
  if (code && topics && config.topic_bias && topics->rank() > 0) {
    if (code->k.size() != topics->rank()) {
      throw std::invalid_argument("predict_distribution: code length differs from r");
    }
    bias = topics->bias_vector(*code);
    Vector zo = p.value("out_o.W_s") * s + p.value("out_o.W_p") * prev_output +
                p.value("out_o.W_o") * topic_context + p.value("out_o.b").col(0);
    for (Index w = 0; w < V; ++w) psi_o[w] = score(zo[w], config.sigmoid_scores);
  }

  double m = psi_c.maxCoeff();
  for (Index w = 0; w < V; ++w) {
    if (bias[w] > 0.0) m = std::max(m, psi_o[w]);
  }
  PredictedDistribution out;
  out.log_scale = m;
  out.unnormalized.resize(V);
  for (Index w = 0; w < V; ++w) {
    double u = std::exp(psi_c[w] - m);
    if (bias[w] > 0.0) u += bias[w] * std::exp(psi_o[w] - m);
    out.unnormalized[w] = u;
  }
  out.probs = out.unnormalized / out.unnormalized.sum();
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct Seq2SeqModel::Impl {
  // Parameter-only products reused by every sample of a batch.
  struct Projections {
    Matrix Q;   // P W, a × r
    Matrix CQ;  // C_o P W, a × r
    Matrix Ms;  // W_o^(s) W, d × r
    Matrix Mo;  // W_o^(o) W, V × r
  };

  struct EncoderTrace {
    Matrix x;      // d × ℓ, embeddings after dropout
    Matrix x_mask; // d × ℓ, empty without dropout
    Matrix z, r, n;
    Matrix h;      // d × (ℓ+1), column 0 is h_0 = 0
  };

  struct StepTrace {
    TokenId prev_id = -1;
    Vector prev_dist;  // used when prev_id < 0
    Vector s_prev;
    Matrix u_c;
    Vector alpha_c;
    Vector c;
    Matrix u_o;
    Vector alpha_o;
    Vector s;
    Vector s_mask;  // empty without dropout
    Vector s_tilde;
    Vector psi_c, psi_o;
    Vector exp_c, exp_o;
    Vector unnorm;
    double sum = 0.0;
    double log_scale = 0.0;
    TokenId target = -1;
  };

  struct SampleContext {
    Matrix H;     // d × ℓ
    Matrix keys;  // a × ℓ
    Vector topic_query;
    Vector bias;  // empty when inactive
  };

  struct SampleTrace {
    EncoderTrace enc;
    SampleContext ctx;
    std::vector<StepTrace> steps;
  };

  static Projections project(const Seq2SeqModel& m, const Slots<const Matrix>& w) {
    Projections pr;
    if (!m.topics_) return pr;
    const Matrix& W = m.topics_->W();
    pr.Q = *w.atto_P * W;
    pr.CQ = *w.atto_C * pr.Q;
    pr.Ms = *w.dec_Wo * W;
    pr.Mo = *w.outo_Wo * W;
    return pr;
  }

  static Vector dropout_mask(Index n, double rate, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - rate);
    Vector mask(n);
    const double scale = 1.0 / (1.0 - rate);
    for (Index i = 0; i < n; ++i) mask[i] = keep(rng) ? scale : 0.0;
    return mask;
  }

  static void run_encoder(const Seq2SeqModel& m, const Slots<const Matrix>& w,
                          std::span<const TokenId> q, double dropout, std::mt19937_64* rng,
                          EncoderTrace& tr) {
    const Index d = m.config_.hidden;
    const Index L = static_cast<Index>(q.size());
    tr.x.resize(d, L);
    tr.z.resize(d, L);
    tr.r.resize(d, L);
    tr.n.resize(d, L);
    tr.h.resize(d, L + 1);
    tr.h.col(0).setZero();
    if (dropout > 0.0 && rng) tr.x_mask.resize(d, L);
    for (Index i = 0; i < L; ++i) {
      Vector x = w.embedding->row(q[static_cast<std::size_t>(i)]).transpose();
      if (tr.x_mask.size() > 0) {
        tr.x_mask.col(i) = dropout_mask(d, dropout, *rng);
        x = x.cwiseProduct(tr.x_mask.col(i));
      }
      tr.x.col(i) = x;
      const Vector h = tr.h.col(i);
      Vector z = *w.enc_Wz * x + *w.enc_Uz * h + w.enc_bz->col(0);
      Vector r = *w.enc_Wr * x + *w.enc_Ur * h + w.enc_br->col(0);
      for (Index k = 0; k < d; ++k) {
        z[k] = sigmoid(z[k]);
        r[k] = sigmoid(r[k]);
      }
      Vector n = *w.enc_Ws * x + *w.enc_Us * h.cwiseProduct(r) + w.enc_bs->col(0);
      for (Index k = 0; k < d; ++k) n[k] = std::tanh(n[k]);
      tr.z.col(i) = z;
      tr.r.col(i) = r;
      tr.n.col(i) = n;
      tr.h.col(i + 1) = (Vector::Ones(d) - z).cwiseProduct(n) + z.cwiseProduct(h);
    }
  }

  static SampleContext make_context(const Seq2SeqModel& m, const Slots<const Matrix>& w,
                                    const Matrix& h_all, std::span<const TokenId> q) {
    SampleContext ctx;
    const Index L = h_all.cols() - 1;
    ctx.H = h_all.rightCols(L);
    ctx.keys = *w.attc_B * ctx.H;
    if (m.topics_) {
      ctx.topic_query = *w.atto_D * ctx.H.col(L - 1);
      if (m.config_.topic_bias) {
        ctx.bias = m.topics_->bias_vector(m.code_for(q));
        if (!(ctx.bias.array() > 0.0).any()) ctx.bias.resize(0);
      }
    }
    return ctx;
  }

  // One decoder step: attention from s_prev, new state, output distribution.
  static void run_step(const Seq2SeqModel& m, const Slots<const Matrix>& w,
                       const Projections& pr, const SampleContext& ctx, double dropout,
                       std::mt19937_64* rng, StepTrace& st) {
    const ModelConfig& cfg = m.config_;
    const Index V = cfg.vocab_size;
    const bool one_hot = st.prev_id >= 0;

    // Message attention.
    {
      const Vector q = *w.attc_A * st.s_prev + w.attc_b->col(0);
      st.u_c = (ctx.keys.colwise() + q).array().tanh().matrix();
      const Vector xi = st.u_c.transpose() * w.attc_v->col(0);
      st.alpha_c = softmax(xi);
      st.c = ctx.H * st.alpha_c;
    }
    // Topic attention, kept as weights; o_t = W α enters through Ms and Mo.
    if (m.topics_) {
      const Vector q = *w.atto_A * st.s_prev + ctx.topic_query + w.atto_b->col(0);
      st.u_o = (pr.CQ.colwise() + q).array().tanh().matrix();
      const Vector xi = st.u_o.transpose() * w.atto_v->col(0);
      st.alpha_o = softmax(xi);
    }

    Vector pre_s = one_hot ? Vector(col(*w.dec_Wp, st.prev_id)) : Vector(*w.dec_Wp * st.prev_dist);
    pre_s += *w.dec_Ws * st.s_prev;
    pre_s += *w.dec_Wc * st.c;
    if (m.topics_) pre_s += pr.Ms * st.alpha_o;
    pre_s += w.dec_b->col(0);
    st.s = sigmoid(pre_s);

    if (dropout > 0.0 && rng) {
      st.s_mask = dropout_mask(st.s.size(), dropout, *rng);
      st.s_tilde = st.s.cwiseProduct(st.s_mask);
    } else {
      st.s_tilde = st.s;
    }

    Vector zc = *w.outc_Ws * st.s_tilde;
    zc += one_hot ? Vector(col(*w.outc_Wp, st.prev_id)) : Vector(*w.outc_Wp * st.prev_dist);
    zc += *w.outc_Wc * st.c;
    zc += w.outc_b->col(0);
    st.psi_c.resize(V);
    for (Index k = 0; k < V; ++k) st.psi_c[k] = score(zc[k], cfg.sigmoid_scores);

    const bool biased = ctx.bias.size() > 0;
    double mx = st.psi_c.maxCoeff();
    if (biased) {
      Vector zo = *w.outo_Ws * st.s_tilde;
      zo += one_hot ? Vector(col(*w.outo_Wp, st.prev_id)) : Vector(*w.outo_Wp * st.prev_dist);
      zo += pr.Mo * st.alpha_o;
      zo += w.outo_b->col(0);
      st.psi_o.resize(V);
      for (Index k = 0; k < V; ++k) {
        st.psi_o[k] = score(zo[k], cfg.sigmoid_scores);
        if (ctx.bias[k] > 0.0) mx = std::max(mx, st.psi_o[k]);
      }
    }
    st.log_scale = mx;
    st.exp_c.resize(V);
    st.unnorm.resize(V);
    if (biased) st.exp_o = Vector::Zero(V);
    for (Index k = 0; k < V; ++k) {
      st.exp_c[k] = std::exp(st.psi_c[k] - mx);
      double u = st.exp_c[k];
      if (biased && ctx.bias[k] > 0.0) {
        st.exp_o[k] = std::exp(st.psi_o[k] - mx);
        u += ctx.bias[k] * st.exp_o[k];
      }
      st.unnorm[k] = u;
    }
    st.sum = st.unnorm.sum();
  }

  static double step_loss(const StepTrace& st) {
    return std::log(st.sum) - std::log(std::max(st.unnorm[st.target], kProbFloor));
  }

  static TokenId argmax_prediction(const StepTrace& st) {
    return static_cast<TokenId>(argmax({st.unnorm.data(), static_cast<std::size_t>(st.unnorm.size())}));
  }

  // Teacher-forced forward pass of one pair. Returns the summed loss.
  static double forward(const Seq2SeqModel& m, const Slots<const Matrix>& w,
                        const Projections& pr, const QAPair& pair, const TrainOptions& opt,
                        SampleTrace& tr) {
    const ModelConfig& cfg = m.config_;
    const double dropout = opt.train ? cfg.dropout : 0.0;
    std::mt19937_64* rng = opt.train ? opt.rng : nullptr;
    m.check_question(pair.question);
    run_encoder(m, w, pair.question, dropout, rng, tr.enc);
    tr.ctx = make_context(m, w, tr.enc.h, pair.question);

    const std::size_t T = std::min(pair.answer_length + 1, pair.answer.size());
    tr.steps.assign(T, StepTrace{});
    double loss = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      StepTrace& st = tr.steps[t];
      st.s_prev = t == 0 ? Vector(tr.enc.h.rightCols(1)) : tr.steps[t - 1].s;
      if (t == 0) {
        st.prev_id = kSos;
      } else if (cfg.feed_distribution) {
        const StepTrace& last = tr.steps[t - 1];
        st.prev_dist = last.unnorm / last.sum;
      } else {
        st.prev_id = pair.answer[t - 1];
        if (opt.train && opt.teacher_forcing < 1.0 && rng) {
          std::bernoulli_distribution use_truth(opt.teacher_forcing);
          if (!use_truth(*rng)) st.prev_id = argmax_prediction(tr.steps[t - 1]);
        }
      }
      st.target = pair.answer[t];
      if (st.target < 0 || st.target >= cfg.vocab_size) {
        throw std::invalid_argument("answer id out of range");
      }
      run_step(m, w, pr, tr.ctx, dropout, rng, st);
      loss += step_loss(st);
    }
    return loss;
  }

  struct BatchGrads {
    Matrix dMs, dMo, dCQ;
  };

  // Reverse accumulation through the unrolled pair; `scale` multiplies the
  // per-position loss gradient (1 / number of targets in the batch).
  static void backward(const Seq2SeqModel& m, const Slots<const Matrix>& w,
                       const Slots<Matrix>& g, const Projections& pr, const QAPair& pair,
                       const SampleTrace& tr, double scale, BatchGrads& bg) {
    const ModelConfig& cfg = m.config_;
    const Index d = cfg.hidden;
    const Index L = tr.ctx.H.cols();
    const bool topics = m.topics_.has_value();
    const bool biased = tr.ctx.bias.size() > 0;

    Matrix dH = Matrix::Zero(d, L);
    Matrix dkeys = Matrix::Zero(cfg.attention, L);
    Vector dtopic_query;
    if (topics) dtopic_query = Vector::Zero(cfg.attention);
    Vector ds_next = Vector::Zero(d);       // ∂L/∂s_t arriving from step t+1
    Vector dprev_next;                      // ∂L/∂p̂_t arriving from step t+1

    for (std::size_t t = tr.steps.size(); t-- > 0;) {
      const StepTrace& st = tr.steps[t];
      const bool one_hot = st.prev_id >= 0;

      // ∂L/∂ψ̃ for the scaled scores ψ̃ = unnorm.
      Vector gpsi = Vector::Constant(st.unnorm.size(), scale / st.sum);
      gpsi[st.target] -= scale / std::max(st.unnorm[st.target], kProbFloor);
      if (dprev_next.size() > 0) {
        const Vector p = st.unnorm / st.sum;
        gpsi += (dprev_next.array() - p.dot(dprev_next)).matrix() / st.sum;
      }

      Vector dzc = gpsi.cwiseProduct(st.exp_c);
      if (cfg.sigmoid_scores) {
        dzc = dzc.cwiseProduct(st.psi_c.cwiseProduct((1.0 - st.psi_c.array()).matrix()));
      }
      Vector dzo;
      if (biased) {
        dzo = gpsi.cwiseProduct(tr.ctx.bias).cwiseProduct(st.exp_o);
        if (cfg.sigmoid_scores) {
          dzo = dzo.cwiseProduct(st.psi_o.cwiseProduct((1.0 - st.psi_o.array()).matrix()));
        }
      }

      Vector dc = Vector::Zero(d);
      Vector dalpha_o;
      if (topics) dalpha_o = Vector::Zero(st.alpha_o.size());
      Vector dprev;  // only for distribution inputs
      if (!one_hot && cfg.feed_distribution && t > 0) dprev = Vector::Zero(st.unnorm.size());

      // Output layer, message side.
      Vector ds_tilde = w.outc_Ws->transpose() * dzc;
      g.outc_Ws->noalias() += dzc * st.s_tilde.transpose();
      if (one_hot) {
        g.outc_Wp->col(st.prev_id) += dzc;
      } else {
        g.outc_Wp->noalias() += dzc * st.prev_dist.transpose();
        if (dprev.size() > 0) dprev.noalias() += w.outc_Wp->transpose() * dzc;
      }
      g.outc_Wc->noalias() += dzc * st.c.transpose();
      dc.noalias() += w.outc_Wc->transpose() * dzc;
      g.outc_b->col(0) += dzc;

      // Output layer, topic side.
      if (biased) {
        ds_tilde.noalias() += w.outo_Ws->transpose() * dzo;
        g.outo_Ws->noalias() += dzo * st.s_tilde.transpose();
        if (one_hot) {
          g.outo_Wp->col(st.prev_id) += dzo;
        } else {
          g.outo_Wp->noalias() += dzo * st.prev_dist.transpose();
          if (dprev.size() > 0) dprev.noalias() += w.outo_Wp->transpose() * dzo;
        }
        bg.dMo.noalias() += dzo * st.alpha_o.transpose();
        dalpha_o.noalias() += pr.Mo.transpose() * dzo;
        g.outo_b->col(0) += dzo;
      }

      // Decoder state.
      Vector ds = st.s_mask.size() > 0 ? Vector(ds_tilde.cwiseProduct(st.s_mask)) : ds_tilde;
      ds += ds_next;
      const Vector dpre_s = ds.cwiseProduct(st.s.cwiseProduct((1.0 - st.s.array()).matrix()));
      if (one_hot) {
        g.dec_Wp->col(st.prev_id) += dpre_s;
      } else {
        g.dec_Wp->noalias() += dpre_s * st.prev_dist.transpose();
        if (dprev.size() > 0) dprev.noalias() += w.dec_Wp->transpose() * dpre_s;
      }
      g.dec_Ws->noalias() += dpre_s * st.s_prev.transpose();
      Vector ds_prev = w.dec_Ws->transpose() * dpre_s;
      g.dec_Wc->noalias() += dpre_s * st.c.transpose();
      dc.noalias() += w.dec_Wc->transpose() * dpre_s;
      if (topics) {
        bg.dMs.noalias() += dpre_s * st.alpha_o.transpose();
        dalpha_o.noalias() += pr.Ms.transpose() * dpre_s;
      }
      g.dec_b->col(0) += dpre_s;

      // Topic attention.
      if (topics) {
        const Vector& a = st.alpha_o;
        const Vector dxi = a.cwiseProduct((dalpha_o.array() - a.dot(dalpha_o)).matrix());
        g.atto_v->col(0).noalias() += st.u_o * dxi;
        const Matrix dpre =
            (w.atto_v->col(0) * dxi.transpose()).cwiseProduct(
                (1.0 - st.u_o.array().square()).matrix());
        const Vector dq = dpre.rowwise().sum();
        g.atto_A->noalias() += dq * st.s_prev.transpose();
        ds_prev.noalias() += w.atto_A->transpose() * dq;
        dtopic_query += dq;
        g.atto_b->col(0) += dq;
        bg.dCQ += dpre;
      }

      // Message attention.
      {
        const Vector& a = st.alpha_c;
        const Vector dalpha = tr.ctx.H.transpose() * dc;
        dH.noalias() += dc * a.transpose();
        const Vector dxi = a.cwiseProduct((dalpha.array() - a.dot(dalpha)).matrix());
        g.attc_v->col(0).noalias() += st.u_c * dxi;
        const Matrix dpre =
            (w.attc_v->col(0) * dxi.transpose()).cwiseProduct(
                (1.0 - st.u_c.array().square()).matrix());
        const Vector dq = dpre.rowwise().sum();
        g.attc_A->noalias() += dq * st.s_prev.transpose();
        ds_prev.noalias() += w.attc_A->transpose() * dq;
        g.attc_b->col(0) += dq;
        dkeys += dpre;
      }

      ds_next = ds_prev;
      dprev_next = dprev;
    }

    // s_0 = h_ℓ.
    dH.col(L - 1) += ds_next;
    g.attc_B->noalias() += dkeys * tr.ctx.H.transpose();
    dH.noalias() += w.attc_B->transpose() * dkeys;
    if (topics) {
      g.atto_D->noalias() += dtopic_query * tr.ctx.H.col(L - 1).transpose();
      dH.col(L - 1).noalias() += w.atto_D->transpose() * dtopic_query;
    }

    // Encoder, back through time.
    const EncoderTrace& e = tr.enc;
    Vector dh_carry = Vector::Zero(d);
    for (Index i = L; i-- > 0;) {
      const Vector dh = dH.col(i) + dh_carry;
      const auto z = e.z.col(i);
      const auto r = e.r.col(i);
      const auto n = e.n.col(i);
      const Vector h = e.h.col(i);
      const auto x = e.x.col(i);

      const Vector dn = dh.cwiseProduct((1.0 - z.array()).matrix());
      const Vector dz = dh.cwiseProduct(h - n);
      Vector dh_prev = dh.cwiseProduct(z);

      const Vector da_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
      const Vector hr = h.cwiseProduct(r);
      g.enc_Ws->noalias() += da_n * x.transpose();
      g.enc_Us->noalias() += da_n * hr.transpose();
      g.enc_bs->col(0) += da_n;
      Vector dx = w.enc_Ws->transpose() * da_n;
      const Vector dhr = w.enc_Us->transpose() * da_n;
      dh_prev += dhr.cwiseProduct(r);
      const Vector dr = dhr.cwiseProduct(h);

      const Vector da_r = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
      g.enc_Wr->noalias() += da_r * x.transpose();
      g.enc_Ur->noalias() += da_r * h.transpose();
      g.enc_br->col(0) += da_r;
      dx.noalias() += w.enc_Wr->transpose() * da_r;
      dh_prev.noalias() += w.enc_Ur->transpose() * da_r;

      const Vector da_z = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
      g.enc_Wz->noalias() += da_z * x.transpose();
      g.enc_Uz->noalias() += da_z * h.transpose();
      g.enc_bz->col(0) += da_z;
      dx.noalias() += w.enc_Wz->transpose() * da_z;
      dh_prev.noalias() += w.enc_Uz->transpose() * da_z;

      if (e.x_mask.size() > 0) dx = dx.cwiseProduct(e.x_mask.col(i));
      g.embedding->row(pair.question[static_cast<std::size_t>(i)]) += dx.transpose();
      dh_carry = dh_prev;
    }
  }

  static void finish_batch(const Seq2SeqModel& m, const Slots<const Matrix>& w,
                           const Slots<Matrix>& g, const Projections& pr,
                           const BatchGrads& bg) {
    if (!m.topics_) return;
    const Matrix& W = m.topics_->W();
    g.dec_Wo->noalias() += bg.dMs * W.transpose();
    g.outo_Wo->noalias() += bg.dMo * W.transpose();
    g.atto_C->noalias() += bg.dCQ * pr.Q.transpose();
    const Matrix dQ = w.atto_C->transpose() * bg.dCQ;
    g.atto_P->noalias() += dQ * W.transpose();
  }
};

Seq2SeqModel::Seq2SeqModel(ModelConfig config, ParamStore params,
                           std::optional<TopicModel> topics)
    : config_(std::move(config)), params_(std::move(params)), topics_(std::move(topics)) {
  config_.validate();
  if (config_.topics > 0) {
    if (!topics_) throw std::invalid_argument("topic model required when topics > 0");
    if (topics_->rank() != config_.topics || topics_->vocab_size() != config_.vocab_size) {
      throw std::invalid_argument("topic model shape differs from the model configuration");
    }
  } else if (topics_) {
    throw std::invalid_argument("topic model given but the configuration has topics = 0");
  }
  const auto specs = param_specs(config_);
  if (specs.size() != params_.entries().size()) {
    throw std::invalid_argument("parameter store does not match the model configuration");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& e = params_.entries()[i];
    if (e.name != specs[i].name || e.value.rows() != specs[i].rows ||
        e.value.cols() != specs[i].cols) {
      throw std::invalid_argument("parameter " + e.name + " does not match the configuration");
    }
  }
}

std::vector<ParamSpec> Seq2SeqModel::param_specs(const ModelConfig& c) {
  const Index V = c.vocab_size;
  const Index d = c.hidden;
  const Index a = c.attention;
  using K = ParamKind;
  std::vector<ParamSpec> s = {
      {"embedding", V, d, K::kWeight},
      {"enc.W_z", d, d, K::kWeight}, {"enc.U_z", d, d, K::kWeight}, {"enc.b_z", d, 1, K::kBias},
      {"enc.W_r", d, d, K::kWeight}, {"enc.U_r", d, d, K::kWeight}, {"enc.b_r", d, 1, K::kBias},
      {"enc.W_s", d, d, K::kWeight}, {"enc.U_s", d, d, K::kWeight}, {"enc.b_s", d, 1, K::kBias},
      {"att_c.A", a, d, K::kWeight}, {"att_c.B", a, d, K::kWeight},
      {"att_c.b", a, 1, K::kBias},   {"att_c.v", a, 1, K::kWeight},
      {"dec.W_p", d, V, K::kWeight}, {"dec.W_s", d, d, K::kWeight},
      {"dec.W_c", d, d, K::kWeight}, {"dec.b", d, 1, K::kBias},
      {"out_c.W_s", V, d, K::kWeight}, {"out_c.W_p", V, V, K::kWeight},
      {"out_c.W_c", V, d, K::kWeight}, {"out_c.b", V, 1, K::kBias},
  };
  if (c.topics > 0) {
    std::vector<ParamSpec> t = {
        {"att_o.A", a, d, K::kWeight}, {"att_o.C", a, a, K::kWeight},
        {"att_o.P", a, V, K::kWeight}, {"att_o.D", a, d, K::kWeight},
        {"att_o.b", a, 1, K::kBias},   {"att_o.v", a, 1, K::kWeight},
        {"dec.W_o", d, V, K::kWeight},
        {"out_o.W_s", V, d, K::kWeight}, {"out_o.W_p", V, V, K::kWeight},
        {"out_o.W_o", V, V, K::kWeight}, {"out_o.b", V, 1, K::kBias},
    };
    s.insert(s.end(), t.begin(), t.end());
  }
  return s;
}

Seq2SeqModel Seq2SeqModel::initialize(ModelConfig config, std::optional<TopicModel> topics,
                                      std::uint64_t seed) {
  config.validate();
  ParamStore params = init_params(param_specs(config), seed);
  return Seq2SeqModel(std::move(config), std::move(params), std::move(topics));
}

void Seq2SeqModel::check_question(std::span<const TokenId> question) const {
  if (question.empty()) throw std::invalid_argument("question must not be empty");
  for (TokenId id : question) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::invalid_argument("question id " + std::to_string(id) +
                                  " outside the vocabulary of size " +
                                  std::to_string(config_.vocab_size));
    }
  }
}

TopicCode Seq2SeqModel::code_for(std::span<const TokenId> question) const {
  if (!topics_) return TopicCode{Vector(), config_.normalize_code};
  Vector bow = Vector::Zero(config_.vocab_size);
  for (TokenId id : question) {
    if (id >= static_cast<TokenId>(kReservedCount) && id < config_.vocab_size) bow[id] += 1.0;
  }
  return topic_code(bow, *topics_, config_.normalize_code);
}

EncoderOutput Seq2SeqModel::encode(std::span<const TokenId> question) const {
  check_question(question);
  const auto w = value_slots(params_, topics_.has_value());
  Impl::EncoderTrace tr;
  Impl::run_encoder(*this, w, question, 0.0, nullptr, tr);
  EncoderOutput out;
  for (Index i = 1; i < tr.h.cols(); ++i) out.states.emplace_back(tr.h.col(i));
  return out;
}

DecodeState Seq2SeqModel::start(std::span<const TokenId> question) const {
  check_question(question);
  const auto w = value_slots(params_, topics_.has_value());
  Impl::EncoderTrace tr;
  Impl::run_encoder(*this, w, question, 0.0, nullptr, tr);
  auto ctx = Impl::make_context(*this, w, tr.h, question);
  DecodeState st;
  st.states = std::move(ctx.H);
  st.keys = std::move(ctx.keys);
  st.topic_query = std::move(ctx.topic_query);
  st.bias = std::move(ctx.bias);
  st.s = st.states.col(st.states.cols() - 1);
  st.code = code_for(question);
  Impl::Projections pr = Impl::project(*this, w);
  st.topic_keys = std::move(pr.CQ);
  st.topic_state = std::move(pr.Ms);
  st.topic_out = std::move(pr.Mo);
  return st;
}

DecodeStep Seq2SeqModel::step(DecodeState& state, TokenId prev, const Vector* prev_dist) const {
  const auto w = value_slots(params_, topics_.has_value());
  Impl::Projections pr{Matrix(), state.topic_keys, state.topic_state, state.topic_out};
  Impl::SampleContext ctx{state.states, state.keys, state.topic_query, state.bias};
  Impl::StepTrace st;
  st.s_prev = state.s;
  if (prev_dist) {
    st.prev_dist = *prev_dist;
  } else {
    if (prev < 0 || prev >= config_.vocab_size) throw std::invalid_argument("bad previous word");
    st.prev_id = prev;
  }
  Impl::run_step(*this, w, pr, ctx, 0.0, nullptr, st);
  state.s = st.s;
  ++state.step;
  DecodeStep out;
  out.dist.unnormalized = st.unnorm;
  out.dist.log_scale = st.log_scale;
  out.dist.probs = st.unnorm / st.sum;
  out.message_weights = st.alpha_c;
  out.topic_weights = st.alpha_o;
  return out;
}

Seq2SeqModel::BatchResult Seq2SeqModel::batch_loss(std::span<const QAPair* const> batch,
                                                   const TrainOptions& options) const {
  const auto w = value_slots(params_, topics_.has_value());
  const Impl::Projections pr = Impl::project(*this, w);
  BatchResult res;
  Impl::SampleTrace tr;
  for (const QAPair* pair : batch) {
    res.loss_sum += Impl::forward(*this, w, pr, *pair, options, tr);
    res.target_count += tr.steps.size();
  }
  return res;
}

Seq2SeqModel::BatchResult Seq2SeqModel::batch_loss(std::span<const QAPair* const> batch,
                                                   const TrainOptions& options,
                                                   bool accumulate_grad) {
  if (!accumulate_grad) return std::as_const(*this).batch_loss(batch, options);
  const bool with_topics = topics_.has_value();
  const auto w = value_slots(params_, with_topics);
  const auto g = grad_slots(params_, with_topics);
  const Impl::Projections pr = Impl::project(*this, w);

  std::size_t targets = 0;
  for (const QAPair* pair : batch) {
    targets += std::min(pair->answer_length + 1, pair->answer.size());
  }
  BatchResult res;
  if (targets == 0) return res;
  const double scale = 1.0 / static_cast<double>(targets);

  Impl::BatchGrads bg;
  if (with_topics) {
    bg.dMs = Matrix::Zero(config_.hidden, config_.topics);
    bg.dMo = Matrix::Zero(config_.vocab_size, config_.topics);
    bg.dCQ = Matrix::Zero(config_.attention, config_.topics);
  }
  Impl::SampleTrace tr;
  for (const QAPair* pair : batch) {
    res.loss_sum += Impl::forward(*this, w, pr, *pair, options, tr);
    res.target_count += tr.steps.size();
    Impl::backward(*this, w, g, pr, *pair, tr, scale, bg);
  }
  Impl::finish_batch(*this, w, g, pr, bg);
  return res;
}

}  // namespace topicbot
