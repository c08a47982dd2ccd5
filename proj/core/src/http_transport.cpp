#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "cotscope/llm_client.hpp"
#include "io.hpp"

namespace cotscope {

using io::json;

HttpChatTransport::HttpChatTransport(std::string endpoint_url, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  // Split "https://host:port/path" into the client base and the request path.
  const auto scheme_end = endpoint_url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: " + endpoint_url);
  const auto path_start = endpoint_url.find('/', scheme_end + 3);
  scheme_host_port_ = endpoint_url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : endpoint_url.substr(path_start);
}

std::string HttpChatTransport::request_body(const ChatRequest& req) {
  json body;
  body["model"] = req.model_id;
  body["temperature"] = req.temperature;
  body["top_p"] = req.top_p;
  if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
  json msgs = json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.text}});
  body["messages"] = std::move(msgs);
  return io::dump(body);
}

std::string HttpChatTransport::parse_response_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProviderError(std::string("unparseable provider response: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Some providers return content as a list of typed parts.
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  } catch (const json::exception&) {
    throw ProviderError("provider response has no choices[0].message.content");
  }
}

std::string HttpChatTransport::complete(const ChatRequest& req) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(30);
  client.set_read_timeout(timeout_.count());
  client.set_write_timeout(60);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path_, headers, request_body(req), "application/json");
  if (!res) throw TransientError("transport error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransientError("provider returned HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
  return parse_response_body(res->body);
}

}  // namespace cotscope
