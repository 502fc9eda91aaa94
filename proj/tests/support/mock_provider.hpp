#pragma once

#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

namespace jam::testing {

/// Local embedding provider speaking {"text"} -> {"vector"}. The vector is a
/// simple function of the text length so replies are predictable.
class MockProviderServer {
 public:
  explicit MockProviderServer(std::size_t dim, int status = 200) {
    server_.Post("/embed", [dim, status](const httplib::Request& req, httplib::Response& res) {
      const auto text = nlohmann::json::parse(req.body).at("text").get<std::string>();
      std::vector<float> v(dim);
      for (std::size_t i = 0; i < dim; ++i) v[i] = float(text.size() % 3) + 0.25f * float(i);
      res.status = status;
      res.set_content(nlohmann::json{{"vector", v}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockProviderServer() {
    server_.stop();
    thread_.join();
  }
  MockProviderServer(const MockProviderServer&) = delete;
  MockProviderServer& operator=(const MockProviderServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/embed"; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace jam::testing
