#pragma once

#include <cstdint>
#include <span>

#include "jam/ranking.hpp"

namespace jam {

// Both metrics take the relevant set as a sorted, duplicate-free span and
// treat a ranked list shorter than k as an exhausted catalog.

/// |top-k ∩ relevant| / |relevant|. The denominator is the full relevant-set
/// size, so with |relevant| > k the value cannot reach 1.
double recall_at_k(const RankedList& ranked, std::span<const std::uint32_t> relevant,
                   std::size_t k);

/// Binary-relevance NDCG: DCG = sum over hits at rank r <= k of 1/log2(r+1),
/// normalised by the ideal DCG over min(|relevant|, k) positions.
double ndcg_at_k(const RankedList& ranked, std::span<const std::uint32_t> relevant,
                 std::size_t k);

}  // namespace jam
