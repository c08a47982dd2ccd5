#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/errors.hpp"

namespace cotscope {

struct ChatMessage {
  std::string role;
  std::string text;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  double top_p = 1.0;
  std::optional<int> max_tokens;

  /// Throws ValidationError for an empty message list or out-of-range sampling knobs.
  void validate() const;
  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

/// Serialized form with sorted keys and no insignificant whitespace.
std::string canonical_json(const ChatRequest& req);
/// Inverse of canonical_json; accepts any key order.
ChatRequest parse_chat_request(std::string_view json_text);

std::string sha256_hex(std::string_view data);
/// SHA-256 of the canonical request plus the sample index.
std::string cache_key(const ChatRequest& req, int sample_index);

/// Content-addressed response store: <dir>/<key[0:2]>/<key>.json. Entries are
/// written via temp-file + rename so concurrent writers never expose partial files.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const ChatRequest& req, int sample_index, std::string_view response) const;
  std::filesystem::path entry_path(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Retryable transport failure (timeouts, 429, 5xx).
class TransientError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatRequest& req) = 0;
};

/// OpenAI-style chat-completions endpoint: POST {model, messages, temperature,
/// top_p, max_tokens} and read choices[0].message.content.
class HttpChatTransport : public ChatTransport {
 public:
  HttpChatTransport(std::string endpoint_url, std::string api_key,
                    std::chrono::seconds timeout = std::chrono::seconds(600));
  std::string complete(const ChatRequest& req) override;

  /// Body sent for `req`; exposed for adapter tests.
  static std::string request_body(const ChatRequest& req);
  /// Extracts the assistant text from a provider response body.
  static std::string parse_response_body(std::string_view body);

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
};

struct ClientConfig {
  std::filesystem::path cache_dir;
  bool offline = false;
  std::size_t max_concurrency = 4;
  RetryPolicy retry;
  /// Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

class LlmClient {
 public:
  struct BatchItem {
    ChatRequest request;
    int sample_index = 0;
  };

  struct BatchResult {
    std::optional<std::string> text;
    std::string error;
    bool replay_miss = false;
    bool ok() const { return text.has_value(); }
  };

  /// `transport` may be null in offline mode.
  LlmClient(ClientConfig config, std::shared_ptr<ChatTransport> transport);

  /// Cached response if present; otherwise (live mode only) a network call with
  /// retries, whose result is written to the cache. Offline misses throw ReplayMissError.
  std::string send(const ChatRequest& req, int sample_index = 0);

  /// Results in input order; at most max_concurrency requests in flight. A
  /// failing item is reported in its slot and never aborts its siblings.
  std::vector<BatchResult> send_batch(const std::vector<BatchItem>& items);
  std::vector<BatchResult> send_batch(const std::vector<ChatRequest>& reqs);

  bool offline() const { return config_.offline; }
  const ResponseCache& cache() const { return cache_; }
  std::size_t network_calls() const { return network_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  ClientConfig config_;
  ResponseCache cache_;
  std::shared_ptr<ChatTransport> transport_;
  std::atomic<std::size_t> network_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace cotscope
