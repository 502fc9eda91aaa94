#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "jam/embedding_table.hpp"

namespace jam {

/// One (user, query) interaction and the set of items relevant to it.
struct TripletRecord {
  std::uint32_t user_idx = 0;
  std::uint32_t query_idx = 0;
  std::vector<std::uint32_t> relevant_items;  // sorted, unique, nonempty
  std::int64_t timestamp = 0;                 // seconds since the Unix epoch
  std::optional<std::string> query_text;

  bool operator==(const TripletRecord&) const = default;
};

enum class SplitTag { Full, Train, Val, Test };
const char* to_string(SplitTag tag) noexcept;

struct TripletDataset {
  std::vector<TripletRecord> records;
  SplitTag tag = SplitTag::Full;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

/// Sorts and de-duplicates the relevant set; throws if it ends up empty.
TripletRecord make_record(std::uint32_t user, std::uint32_t query,
                          std::vector<std::uint32_t> items, std::int64_t timestamp,
                          std::optional<std::string> query_text = std::nullopt);

/// Checks record invariants against table sizes (indices in range, relevant
/// set nonempty/sorted/unique).
void validate(const TripletDataset& ds, std::size_t n_users, std::size_t n_queries,
              std::size_t n_items);

/// JSON-lines, one object per record:
///   {"user_id": str, "query_id": str, "item_ids": [str...], "timestamp": int,
///    "query_text": optional str}
/// Unresolvable ids are a hard error.
TripletDataset load_triplets(const std::filesystem::path& path, const EmbeddingTable& users,
                             const EmbeddingTable& queries, const Catalog& catalog);
void save_triplets(const std::filesystem::path& path, const TripletDataset& ds,
                   const EmbeddingTable& users, const EmbeddingTable& queries,
                   const Catalog& catalog);

/// UTC calendar day index (floor division, correct for negative timestamps).
std::int64_t utc_day(std::int64_t timestamp) noexcept;

struct SplitResult {
  TripletDataset train;
  TripletDataset val;
  TripletDataset test;
};

/// test = last UTC day present, val = the day before it (in the set of days
/// present), train = everything earlier. Record order is preserved within each
/// partition. Throws Error(Data, "insufficient temporal span") for < 3 days.
SplitResult chronological_split(const TripletDataset& ds);

}  // namespace jam
