#include "jam/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace jam {

namespace {

void check_relevant(std::span<const std::uint32_t> relevant) {
  if (relevant.empty()) fail(ErrorKind::Contract, "metric: empty relevant set");
}

bool is_relevant(std::span<const std::uint32_t> relevant, std::uint32_t item) {
  return std::binary_search(relevant.begin(), relevant.end(), item);
}

}  // namespace

double recall_at_k(const RankedList& ranked, std::span<const std::uint32_t> relevant,
                   std::size_t k) {
  check_relevant(relevant);
  const std::size_t depth = std::min(k, ranked.items.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) hits += is_relevant(relevant, ranked.items[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(const RankedList& ranked, std::span<const std::uint32_t> relevant,
                 std::size_t k) {
  check_relevant(relevant);
  const std::size_t depth = std::min(k, ranked.items.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (is_relevant(relevant, ranked.items[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  const std::size_t ideal = std::min(relevant.size(), k);
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

}  // namespace jam
