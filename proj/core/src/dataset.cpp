#include "jam/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace jam {

const char* to_string(SplitTag tag) noexcept {
  switch (tag) {
    case SplitTag::Full: return "full";
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "unknown";
}

TripletRecord make_record(std::uint32_t user, std::uint32_t query,
                          std::vector<std::uint32_t> items, std::int64_t timestamp,
                          std::optional<std::string> query_text) {
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  if (items.empty()) fail(ErrorKind::Data, "triplet record has no relevant items");
  return TripletRecord{user, query, std::move(items), timestamp, std::move(query_text)};
}

void validate(const TripletDataset& ds, std::size_t n_users, std::size_t n_queries,
              std::size_t n_items) {
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    const std::string where = "record " + std::to_string(i);
    if (r.user_idx >= n_users) fail(ErrorKind::Data, where + ": user index out of range");
    if (r.query_idx >= n_queries) fail(ErrorKind::Data, where + ": query index out of range");
    if (r.relevant_items.empty()) fail(ErrorKind::Data, where + ": empty relevant set");
    for (std::size_t j = 0; j < r.relevant_items.size(); ++j) {
      if (r.relevant_items[j] >= n_items) fail(ErrorKind::Data, where + ": item out of range");
      if (j > 0 && r.relevant_items[j] <= r.relevant_items[j - 1]) {
        fail(ErrorKind::Data, where + ": relevant set not sorted/unique");
      }
    }
  }
}

TripletDataset load_triplets(const std::filesystem::path& path, const EmbeddingTable& users,
                             const EmbeddingTable& queries, const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Data, "cannot open " + path.string());
  TripletDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, where + ": " + e.what());
    }
    try {
      auto resolve = [&](auto&& lookup, const std::string& id, const char* kind) {
        auto idx = lookup(id);
        if (!idx) fail(ErrorKind::Data, where + ": unresolvable " + kind + " id '" + id + "'");
        return static_cast<std::uint32_t>(*idx);
      };
      const auto user = resolve([&](const std::string& id) { return users.find(id); },
                                obj.at("user_id").get<std::string>(), "user");
      const auto query = resolve([&](const std::string& id) { return queries.find(id); },
                                 obj.at("query_id").get<std::string>(), "query");
      std::vector<std::uint32_t> items;
      for (const auto& id : obj.at("item_ids")) {
        items.push_back(resolve([&](const std::string& s) { return catalog.find(s); },
                                id.get<std::string>(), "item"));
      }
      std::optional<std::string> text;
      if (auto it = obj.find("query_text"); it != obj.end() && !it->is_null()) {
        text = it->get<std::string>();
      }
      if (items.empty()) fail(ErrorKind::Data, where + ": empty item_ids");
      ds.records.push_back(make_record(user, query, std::move(items),
                                       obj.at("timestamp").get<std::int64_t>(), std::move(text)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, where + ": " + e.what());
    }
  }
  return ds;
}

void save_triplets(const std::filesystem::path& path, const TripletDataset& ds,
                   const EmbeddingTable& users, const EmbeddingTable& queries,
                   const Catalog& catalog) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  for (const auto& r : ds.records) {
    nlohmann::json obj;
    obj["user_id"] = users.ids().at(r.user_idx);
    obj["query_id"] = queries.ids().at(r.query_idx);
    auto items = nlohmann::json::array();
    for (auto i : r.relevant_items) items.push_back(catalog.item_ids().at(i));
    obj["item_ids"] = std::move(items);
    obj["timestamp"] = r.timestamp;
    if (r.query_text) obj["query_text"] = *r.query_text;
    out << obj.dump() << '\n';
  }
}

std::int64_t utc_day(std::int64_t timestamp) noexcept {
  constexpr std::int64_t kDay = 86400;
  std::int64_t q = timestamp / kDay;
  if (timestamp % kDay != 0 && timestamp < 0) --q;
  return q;
}

SplitResult chronological_split(const TripletDataset& ds) {
  std::set<std::int64_t> days;
  for (const auto& r : ds.records) days.insert(utc_day(r.timestamp));
  if (days.size() < 3) fail(ErrorKind::Data, "insufficient temporal span");

  const std::int64_t test_day = *days.rbegin();
  const std::int64_t val_day = *std::next(days.rbegin());

  SplitResult out;
  out.train.tag = SplitTag::Train;
  out.val.tag = SplitTag::Val;
  out.test.tag = SplitTag::Test;
  for (const auto& r : ds.records) {
    const std::int64_t day = utc_day(r.timestamp);
    if (day == test_day) {
      out.test.records.push_back(r);
    } else if (day == val_day) {
      out.val.records.push_back(r);
    } else {
      out.train.records.push_back(r);
    }
  }
  return out;
}

}  // namespace jam
