#include "jam/linalg.hpp"

#include <algorithm>

namespace jam {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Format: return "format";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Data: return "data";
    case ErrorKind::Config: return "config";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Provider: return "provider";
  }
  return "unknown";
}

std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax: empty input");
  double max_logit = kMaskedLogit;
  for (double x : logits) {
    if (std::isnan(x)) fail(ErrorKind::Contract, "softmax: NaN logit");
    max_logit = std::max(max_logit, x);
  }
  if (max_logit == kMaskedLogit) fail(ErrorKind::Contract, "empty support");

  std::vector<double> out(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] == kMaskedLogit) continue;
    out[i] = std::exp(logits[i] - max_logit);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

double softplus(double x) noexcept {
  // log1p(exp(x)) for x <= 0; x + log1p(exp(-x)) otherwise.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_sigmoid(double x) noexcept { return -softplus(-x); }

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace jam
