#pragma once

// Reference Recall/NDCG written straight from the definitions, with no code
// shared with the library: linear membership scans, ranks counted from 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace jam::oracle {

inline bool contains(const std::vector<std::uint32_t>& set, std::uint32_t x) {
  for (auto v : set) {
    if (v == x) return true;
  }
  return false;
}

inline double recall(const std::vector<std::uint32_t>& ranked, const std::vector<std::uint32_t>& relevant,
                     std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.size() && r < k; ++r) {
    if (contains(relevant, ranked[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

inline double ndcg(const std::vector<std::uint32_t>& ranked, const std::vector<std::uint32_t>& relevant,
                   std::size_t k) {
  long double dcg = 0.0L;
  for (std::size_t r = 0; r < ranked.size() && r < k; ++r) {
    if (contains(relevant, ranked[r])) dcg += 1.0L / std::log2(static_cast<long double>(r + 2));
  }
  long double ideal = 0.0L;
  const std::size_t n_ideal = std::min(relevant.size(), k);
  for (std::size_t r = 0; r < n_ideal; ++r) ideal += 1.0L / std::log2(static_cast<long double>(r + 2));
  return static_cast<double>(dcg / ideal);
}

}  // namespace jam::oracle
