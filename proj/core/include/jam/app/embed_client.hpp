#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace jam::app {

/// Turns raw query text into a query-table-compatible vector.
class EmbedProvider {
 public:
  virtual ~EmbedProvider() = default;
  virtual std::vector<float> embed(const std::string& text) const = 0;
};

/// POST {"text": ...} to `url`, expecting {"vector": [float...]}.
/// Network failures and non-2xx replies throw Error(Provider); a reply with
/// the wrong dimension or non-finite entries throws Error(Data).
class HttpEmbedProvider final : public EmbedProvider {
 public:
  HttpEmbedProvider(std::string url, std::size_t expected_dim, double timeout_s = 5.0);
  std::vector<float> embed(const std::string& text) const override;

 private:
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::size_t dim_;
  double timeout_s_;
};

std::vector<float> embed_query(const std::string& url, const std::string& text,
                               std::size_t expected_dim, double timeout_s = 5.0);

/// Validates a provider reply body.
std::vector<float> parse_embedding_reply(std::string_view body, std::size_t expected_dim);

}  // namespace jam::app
