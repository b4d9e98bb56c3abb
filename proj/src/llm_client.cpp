// Eigen before httplib: <resolv.h> defines a `_res` macro that collides with
// Eigen parameter names.
#include "geoprompt/knowledge.hpp"

#include <httplib.h>
#include <json.hpp>

namespace geoprompt {

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::InvalidConfig, "endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpTransport::HttpTransport(LlmClientConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.endpoint.empty()) throw Error(ErrorKind::InvalidConfig, "LLM endpoint is not set");
}

std::string HttpTransport::extract_completion(const std::string& body, const std::string& json_pointer) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& node = j.at(nlohmann::json::json_pointer(json_pointer));
    if (!node.is_string()) throw Error(ErrorKind::ParseError, "completion at " + json_pointer + " is not a string");
    return node.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("completion response: ") + e.what());
  }
}

std::string HttpTransport::complete(const CompletionRequest& request) {
  const SplitUrl url = split_url(config_.endpoint);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto res = client.Post(url.path, headers, config_.request_body(request.prompt), "application/json");
  if (!res) {
    throw Error(ErrorKind::NetworkError, "POST " + config_.endpoint + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    const auto kind = retryable_status(res->status) ? ErrorKind::NetworkError : ErrorKind::InvalidConfig;
    throw Error(kind, "POST " + config_.endpoint + ": HTTP " + std::to_string(res->status));
  }
  return extract_completion(res->body, config_.completion_path);
}

}  // namespace geoprompt
