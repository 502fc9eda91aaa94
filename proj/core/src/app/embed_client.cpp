#include "jam/app/embed_client.hpp"

#include <chrono>
#include <cmath>

#include "httplib.h"
#include "jam/error.hpp"
#include "json.hpp"

namespace jam::app {

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    fail(ErrorKind::Usage, "embedding provider url must start with http://, got '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpEmbedProvider::HttpEmbedProvider(std::string url, std::size_t expected_dim, double timeout_s)
    : dim_(expected_dim), timeout_s_(timeout_s) {
  std::tie(origin_, path_) = split_url(url);
}

std::vector<float> HttpEmbedProvider::embed(const std::string& text) const {
  httplib::Client client(origin_);
  const auto timeout = std::chrono::duration<double>(timeout_s_);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  const std::string body = nlohmann::json{{"text", text}}.dump();
  const auto res = client.Post(path_, body, "application/json");
  if (!res) {
    fail(ErrorKind::Provider, "embedding provider unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorKind::Provider, "embedding provider returned HTTP " + std::to_string(res->status));
  }
  return parse_embedding_reply(res->body, dim_);
}

std::vector<float> embed_query(const std::string& url, const std::string& text,
                               std::size_t expected_dim, double timeout_s) {
  return HttpEmbedProvider(url, expected_dim, timeout_s).embed(text);
}

std::vector<float> parse_embedding_reply(std::string_view body, std::size_t expected_dim) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Data, "embedding provider reply is not JSON");
  }
  if (!j.is_object() || !j.contains("vector") || !j["vector"].is_array()) {
    fail(ErrorKind::Data, "embedding provider reply lacks a \"vector\" array");
  }
  const auto& arr = j["vector"];
  if (arr.size() != expected_dim) {
    fail(ErrorKind::Data, "embedding provider returned dim " + std::to_string(arr.size()) +
                              ", query table has dim " + std::to_string(expected_dim));
  }
  std::vector<float> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    // NaN/Infinity are not JSON; providers that emit them as null or strings land here too.
    if (!v.is_number()) fail(ErrorKind::Data, "embedding provider returned a non-numeric entry");
    const double x = v.get<double>();
    if (!std::isfinite(x) || !std::isfinite(static_cast<float>(x))) {
      fail(ErrorKind::Data, "embedding provider returned a non-finite entry");
    }
    out.push_back(static_cast<float>(x));
  }
  return out;
}

}  // namespace jam::app
