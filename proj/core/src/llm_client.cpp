#include "cotscope/llm_client.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <thread>

#include "io.hpp"

namespace cotscope {

using io::json;

void ChatRequest::validate() const {
  if (messages.empty()) throw ValidationError("chat request has no messages");
  if (!(temperature >= 0.0 && temperature <= 1.0)) throw ValidationError("temperature outside [0,1]");
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw ValidationError("top_p outside [0,1]");
  if (max_tokens && *max_tokens <= 0) throw ValidationError("max_tokens must be positive");
}

namespace {

json to_json(const ChatRequest& req) {
  json j;
  j["model_id"] = req.model_id;
  j["temperature"] = req.temperature;
  j["top_p"] = req.top_p;
  j["max_tokens"] = req.max_tokens ? json(*req.max_tokens) : json(nullptr);
  json msgs = json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"text", m.text}});
  j["messages"] = std::move(msgs);
  return j;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string canonical_json(const ChatRequest& req) { return io::dump(to_json(req)); }

ChatRequest parse_chat_request(std::string_view json_text) {
  const json j = json::parse(json_text);
  ChatRequest req;
  req.model_id = j.at("model_id").get<std::string>();
  req.temperature = j.at("temperature").get<double>();
  req.top_p = j.at("top_p").get<double>();
  if (auto it = j.find("max_tokens"); it != j.end() && !it->is_null()) req.max_tokens = it->get<int>();
  for (const auto& m : j.at("messages")) {
    req.messages.push_back({m.at("role").get<std::string>(), m.at("text").get<std::string>()});
  }
  return req;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string cache_key(const ChatRequest& req, int sample_index) {
  return sha256_hex(canonical_json(req) + "\n#sample=" + std::to_string(sample_index));
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = entry_path(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  const json j = json::parse(io::read_file(path));
  return j.at("response_text").get<std::string>();
}

void ResponseCache::put(const std::string& key, const ChatRequest& req, int sample_index,
                        std::string_view response) const {
  json j;
  j["key"] = key;
  j["request"] = to_json(req);
  j["sample_index"] = sample_index;
  j["response_text"] = std::string(response);
  j["timestamp"] = utc_timestamp();
  io::write_file_atomic(entry_path(key), j.dump(1, ' ', false, json::error_handler_t::replace) + "\n");
}

LlmClient::LlmClient(ClientConfig config, std::shared_ptr<ChatTransport> transport)
    : config_(std::move(config)), cache_(config_.cache_dir), transport_(std::move(transport)) {
  if (!config_.sleep) config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.max_concurrency == 0) config_.max_concurrency = 1;
  if (!config_.offline && !transport_) throw ValidationError("live mode requires a chat transport");
}

std::string LlmClient::send(const ChatRequest& req, int sample_index) {
  req.validate();
  const std::string key = cache_key(req, sample_index);
  if (auto hit = cache_.get(key)) {
    ++cache_hits_;
    return *hit;
  }
  if (config_.offline) throw ReplayMissError(key);

  auto delay = config_.retry.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      ++network_calls_;
      std::string text = transport_->complete(req);
      cache_.put(key, req, sample_index, text);
      return text;
    } catch (const TransientError& e) {
      if (attempt >= config_.retry.max_attempts)
        throw ProviderError(std::string("giving up after ") + std::to_string(attempt) + " attempts: " + e.what());
      config_.sleep(delay);
      delay = std::min(delay * 2, config_.retry.max_delay);
    }
  }
}

std::vector<LlmClient::BatchResult> LlmClient::send_batch(const std::vector<BatchItem>& items) {
  std::vector<BatchResult> results(items.size());
  if (items.empty()) return results;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        results[i].text = send(items[i].request, items[i].sample_index);
      } catch (const ReplayMissError& e) {
        results[i].error = e.what();
        results[i].replay_miss = true;
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::min(config_.max_concurrency, items.size());
  if (n_threads <= 1) {
    worker();
    return results;
  }
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

std::vector<LlmClient::BatchResult> LlmClient::send_batch(const std::vector<ChatRequest>& reqs) {
  std::vector<BatchItem> items;
  items.reserve(reqs.size());
  for (const auto& r : reqs) items.push_back({r, 0});
  return send_batch(items);
}

}  // namespace cotscope
