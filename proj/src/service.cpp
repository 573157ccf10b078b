#include "topicbot/service.hpp"

#include "topicbot/hash.hpp"

#include <httplib.h>

#include <chrono>
#include <set>
#include <stdexcept>

namespace topicbot {

namespace {

ApiResponse error(int status, const std::string& message) {
  return {status, {{"error", {{"status", status}, {"message", message}}}}};
}

nlohmann::json matrix_rows(const std::vector<Vector>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  return out;
}

std::int64_t now_unix() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::mt19937_64 session_rng(std::uint64_t seed, const std::string& session_id) {
  Fnv1a h;
  h.update(session_id);
  const std::uint64_t key = h.digest();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::string> topic_words_used(const GenerationResult& result,
                                          const ModelBundle& bundle) {
  std::vector<std::string> out;
  std::set<TokenId> seen;
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    if (result.topic_word[i] && seen.insert(result.ids[i]).second) {
      out.push_back(bundle.vocab.token(result.ids[i]));
    }
  }
  return out;
}

void ChatService::add_bundle(const std::string& name, std::shared_ptr<const ModelBundle> bundle) {
  for (const auto& [n, b] : bundles_) {
    if (n == name) throw std::invalid_argument("bundle name already loaded: " + name);
  }
  bundles_.emplace_back(name, std::move(bundle));
}

std::vector<std::string> ChatService::bundle_names() const {
  std::vector<std::string> out;
  for (const auto& [n, b] : bundles_) out.push_back(n);
  return out;
}

std::size_t ChatService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<const ModelBundle> ChatService::find_bundle(
    const std::optional<std::string>& name, std::string* resolved) const {
  if (bundles_.empty()) return nullptr;
  if (!name) {
    if (resolved) *resolved = bundles_.front().first;
    return bundles_.front().second;
  }
  for (const auto& [n, b] : bundles_) {
    if (n == *name) {
      if (resolved) *resolved = n;
      return b;
    }
  }
  return nullptr;
}

std::shared_ptr<ChatSession> ChatService::session_for(const std::optional<std::string>& id,
                                                      std::uint64_t seed, bool* found) {
  std::lock_guard lock(sessions_mutex_);
  if (id) {
    auto it = sessions_.find(*id);
    *found = it != sessions_.end();
    return *found ? it->second : nullptr;
  }
  *found = true;
  auto s = std::make_shared<ChatSession>();
  std::mt19937_64 salt(default_seed_ ^ next_session_);
  s->id = "s" + std::to_string(next_session_++) + "-" + to_hex(salt()).substr(0, 8);
  s->created_unix = now_unix();
  s->rng = session_rng(seed, s->id);
  sessions_.emplace(s->id, s);
  return s;
}

ApiResponse ChatService::chat(const std::string& body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error(400, std::string("malformed JSON body: ") + e.what());
  }
  if (!req.is_object()) return error(400, "request body must be a JSON object");
  if (!req.contains("message") || !req["message"].is_string()) {
    return error(400, "field 'message' must be a string");
  }
  std::optional<std::string> session_id;
  if (req.contains("session_id") && !req["session_id"].is_null()) {
    if (!req["session_id"].is_string()) return error(400, "field 'session_id' must be a string or null");
    session_id = req["session_id"].get<std::string>();
  }
  std::optional<std::string> bundle_name;
  if (req.contains("bundle") && !req["bundle"].is_null()) {
    if (!req["bundle"].is_string()) return error(400, "field 'bundle' must be a string or null");
    bundle_name = req["bundle"].get<std::string>();
  }
  GenerationOptions gen;
  if (req.contains("mode") && !req["mode"].is_null()) {
    const auto mode = req["mode"].is_string() ? req["mode"].get<std::string>() : "";
    if (mode == "greedy") {
      gen.mode = DecodeMode::kGreedy;
    } else if (mode == "mh") {
      gen.mode = DecodeMode::kMetropolisHastings;
    } else {
      return error(400, "field 'mode' must be \"greedy\" or \"mh\"");
    }
  }
  std::optional<std::uint64_t> seed;
  if (req.contains("seed") && !req["seed"].is_null()) {
    if (!req["seed"].is_number_integer()) return error(400, "field 'seed' must be an integer or null");
    seed = req["seed"].get<std::uint64_t>();
  }

  std::string resolved;
  auto bundle = find_bundle(bundle_name, &resolved);
  if (!bundle) {
    return error(404, bundle_name ? "unknown bundle: " + *bundle_name : "no bundle loaded");
  }
  bool found = false;
  auto session = session_for(session_id, seed.value_or(default_seed_), &found);
  if (!found) return error(404, "unknown session: " + *session_id);

  std::lock_guard lock(session->mutex);
  if (seed && session_id) session->rng = session_rng(*seed, session->id);
  const std::string message = req["message"].get<std::string>();
  GenerationResult result;
  try {
    result = generate(bundle->model, bundle->vocab, bundle->proposal, message, gen, session->rng);
  } catch (const std::exception& e) {
    return error(500, std::string("generation failed: ") + e.what());
  }

  ApiResponse res;
  res.body = {{"session_id", session->id},
              {"bundle", resolved},
              {"reply", result.text},
              {"topic_code", std::vector<double>(result.code.k.data(),
                                                 result.code.k.data() + result.code.k.size())},
              {"topic_words_used", topic_words_used(result, *bundle)},
              {"attention",
               {{"message", matrix_rows(result.message_weights)},
                {"topic", bundle->model.topics() ? matrix_rows(result.topic_weights)
                                                 : nlohmann::json::array()}}}};
  session->transcript.push_back({resolved, message, std::move(result)});
  return res;
}

ApiResponse ChatService::topics(const std::optional<std::string>& name) const {
  std::string resolved;
  auto bundle = find_bundle(name, &resolved);
  if (!bundle) return error(404, name ? "unknown bundle: " + *name : "no bundle loaded");
  nlohmann::json list = nlohmann::json::array();
  const TopicModel* tm = bundle->model.topics();
  const Index r = tm ? tm->rank() : 0;
  for (Index j = 0; j < r; ++j) {
    list.push_back({{"id", j}, {"top_words", top_words(*tm, j, 10)}});
  }
  return {200, {{"bundle", resolved}, {"r", r}, {"topics", list}}};
}

ApiResponse ChatService::bundles() const {
  return {200, nlohmann::json(bundle_names())};
}

HttpChatServer::HttpChatServer(ChatService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  // Address reuse only: a port held by another server must fail to bind.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  auto reply = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
  };
  server_->Post("/api/chat", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.chat(req.body));
  });
  server_->Get("/api/topics", [this, reply](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> name;
    if (req.has_param("bundle")) name = req.get_param_value("bundle");
    reply(res, service_.topics(name));
  });
  server_->Get("/api/bundles", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.bundles());
  });
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpChatServer::~HttpChatServer() { stop(); }

int HttpChatServer::bind(const std::string& address, int port) {
  int bound = -1;
  if (port == 0) {
    bound = server_->bind_to_any_port(address);
  } else {
    bound = server_->bind_to_port(address, port) ? port : -1;
  }
  if (bound < 0) {
    throw std::runtime_error("cannot bind " + address + ":" + std::to_string(port) +
                             " (address in use or not available)");
  }
  return bound;
}

void HttpChatServer::run() { server_->listen_after_bind(); }

void HttpChatServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace topicbot
