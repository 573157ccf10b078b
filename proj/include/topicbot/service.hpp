#pragma once

// HTTP chat API over one or more loaded bundles.

#include "topicbot/bundle.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace topicbot {

struct ChatTurn {
  std::string bundle;
  std::string question;
  GenerationResult result;
};

struct ChatSession {
  std::string id;
  std::int64_t created_unix = 0;
  std::vector<ChatTurn> transcript;
  std::mt19937_64 rng;
  std::mutex mutex;  // one generation in flight per session
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Request handling independent of the transport. Bundles are shared
/// read-only; sessions live in memory only.
class ChatService {
 public:
  explicit ChatService(std::uint64_t default_seed = 0) : default_seed_(default_seed) {}

  /// The first bundle added becomes the default.
  void add_bundle(const std::string& name, std::shared_ptr<const ModelBundle> bundle);
  std::vector<std::string> bundle_names() const;

  /// POST /api/chat
  ApiResponse chat(const std::string& body);
  /// GET /api/topics?bundle=NAME
  ApiResponse topics(const std::optional<std::string>& bundle) const;
  /// GET /api/bundles
  ApiResponse bundles() const;

  std::size_t session_count() const;

 private:
  std::shared_ptr<const ModelBundle> find_bundle(const std::optional<std::string>& name,
                                                 std::string* resolved) const;
  std::shared_ptr<ChatSession> session_for(const std::optional<std::string>& id,
                                           std::uint64_t seed, bool* found);

  std::uint64_t default_seed_;
  std::vector<std::pair<std::string, std::shared_ptr<const ModelBundle>>> bundles_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<ChatSession>> sessions_;
  std::uint64_t next_session_ = 1;
};

/// Seeds a session RNG stream from (seed, session id).
std::mt19937_64 session_rng(std::uint64_t seed, const std::string& session_id);

/// Unique words of the reply that belong to some topic word set, in order.
std::vector<std::string> topic_words_used(const GenerationResult& result,
                                          const ModelBundle& bundle);

class HttpChatServer {
 public:
  explicit HttpChatServer(ChatService& service);
  ~HttpChatServer();
  HttpChatServer(const HttpChatServer&) = delete;
  HttpChatServer& operator=(const HttpChatServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port. Throws std::runtime_error when the address cannot be bound.
  int bind(const std::string& address, int port);
  /// Serves until stop() is called. Requires a successful bind().
  void run();
  void stop();

 private:
  ChatService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace topicbot
