#include <cstdlib>

#include "phantom/collect.hpp"
#include "phantom/error.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace phantom::collect {

HttpChatClient::HttpChatClient(EndpointConfig config) : config_(std::move(config)) {
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers{{"X-Request-Id", std::to_string(request.index)}};
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const auto res = client.Post(config_.path, headers, request_body(request), "application/json");
  if (!res) {
    throw TransportError("request failed: " + httplib::to_string(res.error()), 0);
  }
  if (res->status == 401 || res->status == 403) {
    throw TransportError("HTTP " + std::to_string(res->status) + " (authentication)", res->status);
  }
  if (res->status != 200) {
    throw TransportError("HTTP " + std::to_string(res->status), res->status);
  }
  return extract_content(res->body);
}

}  // namespace phantom::collect
