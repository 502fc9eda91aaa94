#include "jam/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "jam/rng.hpp"
#include "json.hpp"

namespace jam {

namespace {

std::size_t index_of_k(const std::vector<std::size_t>& ks, std::size_t k) {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) fail(ErrorKind::Contract, "metric cutoff @" + std::to_string(k) + " not computed");
  return static_cast<std::size_t>(it - ks.begin());
}

MetricValues zeros(const std::vector<std::size_t>& ks) {
  MetricValues v;
  v.ks = ks;
  v.recall.assign(ks.size(), 0.0);
  v.ndcg.assign(ks.size(), 0.0);
  return v;
}

}  // namespace

double MetricValues::recall_at(std::size_t k) const { return recall[index_of_k(ks, k)]; }
double MetricValues::ndcg_at(std::size_t k) const { return ndcg[index_of_k(ks, k)]; }

std::uint64_t record_salt(const TripletRecord& r, std::uint64_t salt) {
  std::uint64_t h = hash_combine(salt, r.user_idx);
  h = hash_combine(h, r.query_idx);
  return hash_combine(h, static_cast<std::uint64_t>(r.timestamp));
}

MetricValues evaluate(const Recommender& model, const TripletDataset& test,
                      const EmbeddingTable& users, const EmbeddingTable& queries,
                      const EvalOptions& options) {
  if (test.empty()) fail(ErrorKind::Contract, "evaluate: empty test set");
  if (options.ks.empty()) fail(ErrorKind::Contract, "evaluate: no cutoffs");
  const std::size_t depth = *std::max_element(options.ks.begin(), options.ks.end());
  const std::size_t n = test.records.size();
  const std::size_t n_k = options.ks.size();

  // Per-record values, reduced afterwards in record order.
  std::vector<double> recall(n * n_k), ndcg(n * n_k);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = test.records[i];
      RankQuery q{users.row(r.user_idx), queries.row(r.query_idx), record_salt(r, options.salt)};
      const RankedList ranked = model.rank(q, depth);
      for (std::size_t j = 0; j < n_k; ++j) {
        recall[i * n_k + j] = recall_at_k(ranked, r.relevant_items, options.ks[j]);
        ndcg[i * n_k + j] = ndcg_at_k(ranked, r.relevant_items, options.ks[j]);
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, n);
  if (threads == 1) {
    work(0, n);
  } else {
    const std::size_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  MetricValues out = zeros(options.ks);
  out.n_records = n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_k; ++j) {
      out.recall[j] += recall[i * n_k + j];
      out.ndcg[j] += ndcg[i * n_k + j];
    }
  }
  for (std::size_t j = 0; j < n_k; ++j) {
    out.recall[j] /= static_cast<double>(n);
    out.ndcg[j] /= static_cast<double>(n);
  }
  return out;
}

Coverage compute_coverage(const TripletDataset& train, const TripletDataset& test) {
  std::unordered_set<std::uint32_t> train_users, train_items;
  for (const auto& r : train.records) {
    train_users.insert(r.user_idx);
    train_items.insert(r.relevant_items.begin(), r.relevant_items.end());
  }
  Coverage c;
  c.test_records = test.records.size();
  std::size_t users_seen = 0, items_total = 0, items_seen = 0;
  for (const auto& r : test.records) {
    users_seen += train_users.count(r.user_idx);
    for (auto item : r.relevant_items) {
      ++items_total;
      items_seen += train_items.count(item);
    }
  }
  if (c.test_records > 0) c.users_seen_in_train = double(users_seen) / double(c.test_records);
  if (items_total > 0) c.items_seen_in_train = double(items_seen) / double(items_total);
  return c;
}

MetricsReport aggregate(std::string method, bool uses_query, bool uses_user,
                        std::vector<std::uint64_t> seeds, std::vector<MetricValues> per_seed,
                        Coverage coverage) {
  if (per_seed.empty()) fail(ErrorKind::Contract, "aggregate: no runs");
  MetricsReport rep;
  rep.method = std::move(method);
  rep.uses_query = uses_query;
  rep.uses_user = uses_user;
  rep.seeds = std::move(seeds);
  rep.coverage = coverage;
  const auto& ks = per_seed.front().ks;
  rep.mean = zeros(ks);
  rep.stddev = zeros(ks);
  rep.mean.n_records = per_seed.front().n_records;
  rep.stddev.n_records = rep.mean.n_records;
  const double n = static_cast<double>(per_seed.size());
  for (const auto& v : per_seed) {
    if (v.ks != ks) fail(ErrorKind::Contract, "aggregate: runs use different cutoffs");
    for (std::size_t j = 0; j < ks.size(); ++j) {
      rep.mean.recall[j] += v.recall[j] / n;
      rep.mean.ndcg[j] += v.ndcg[j] / n;
    }
  }
  for (const auto& v : per_seed) {
    for (std::size_t j = 0; j < ks.size(); ++j) {
      rep.stddev.recall[j] += (v.recall[j] - rep.mean.recall[j]) * (v.recall[j] - rep.mean.recall[j]) / n;
      rep.stddev.ndcg[j] += (v.ndcg[j] - rep.mean.ndcg[j]) * (v.ndcg[j] - rep.mean.ndcg[j]) / n;
    }
  }
  for (std::size_t j = 0; j < ks.size(); ++j) {
    rep.stddev.recall[j] = std::sqrt(rep.stddev.recall[j]);
    rep.stddev.ndcg[j] = std::sqrt(rep.stddev.ndcg[j]);
  }
  rep.per_seed = std::move(per_seed);
  return rep;
}

namespace {

std::string three_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
  return s;
}

nlohmann::json values_to_json(const MetricValues& v) {
  nlohmann::json j;
  for (std::size_t i = 0; i < v.ks.size(); ++i) {
    j["recall@" + std::to_string(v.ks[i])] = v.recall[i];
    j["ndcg@" + std::to_string(v.ks[i])] = v.ndcg[i];
  }
  j["n_records"] = v.n_records;
  return j;
}

MetricValues values_from_json(const nlohmann::json& j, const std::vector<std::size_t>& ks) {
  MetricValues v = zeros(ks);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    v.recall[i] = j.at("recall@" + std::to_string(ks[i])).get<double>();
    v.ndcg[i] = j.at("ndcg@" + std::to_string(ks[i])).get<double>();
  }
  v.n_records = j.value("n_records", std::size_t{0});
  return v;
}

}  // namespace

std::string format_mean_std(double mean, double stddev) {
  return three_decimals(mean) + "_{" + three_decimals(stddev) + "}";
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["uses_query"] = r.uses_query;
  j["uses_user"] = r.uses_user;
  j["averaging"] = r.averaging;
  j["ks"] = r.mean.ks;
  j["seeds"] = r.seeds;
  j["per_seed"] = nlohmann::json::array();
  for (const auto& v : r.per_seed) j["per_seed"].push_back(values_to_json(v));
  j["mean"] = values_to_json(r.mean);
  j["std"] = values_to_json(r.stddev);
  nlohmann::json formatted;
  for (std::size_t i = 0; i < r.mean.ks.size(); ++i) {
    const auto k = std::to_string(r.mean.ks[i]);
    formatted["recall@" + k] = format_mean_std(r.mean.recall[i], r.stddev.recall[i]);
    formatted["ndcg@" + k] = format_mean_std(r.mean.ndcg[i], r.stddev.ndcg[i]);
  }
  j["formatted"] = formatted;
  j["coverage"] = {{"test_records", r.coverage.test_records},
                   {"users_seen_in_train", r.coverage.users_seen_in_train},
                   {"items_seen_in_train", r.coverage.items_seen_in_train}};
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    MetricsReport r;
    r.method = j.at("method").get<std::string>();
    r.uses_query = j.at("uses_query").get<bool>();
    r.uses_user = j.at("uses_user").get<bool>();
    r.averaging = j.value("averaging", std::string("per-record"));
    const auto ks = j.at("ks").get<std::vector<std::size_t>>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& v : j.at("per_seed")) r.per_seed.push_back(values_from_json(v, ks));
    r.mean = values_from_json(j.at("mean"), ks);
    r.stddev = values_from_json(j.at("std"), ks);
    const auto& c = j.at("coverage");
    r.coverage.test_records = c.at("test_records").get<std::size_t>();
    r.coverage.users_seen_in_train = c.at("users_seen_in_train").get<double>();
    r.coverage.items_seen_in_train = c.at("items_seen_in_train").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("metrics report: ") + e.what());
  }
}

std::string format_table(const std::vector<MetricsReport>& reports) {
  const std::vector<std::pair<const char*, std::size_t>> columns = {
      {"Recall@10", 10}, {"Recall@100", 100}, {"NDCG@10", 10}, {"NDCG@100", 100}};
  std::size_t name_width = 6;
  for (const auto& r : reports) name_width = std::max(name_width, r.method.size());
  constexpr int kCell = 13;

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "method" << "  q  u";
  for (const auto& [title, k] : columns) out << "  " << std::setw(kCell) << title;
  out << '\n';
  for (const auto& r : reports) {
    out << std::setw(static_cast<int>(name_width)) << r.method << "  " << (r.uses_query ? "v" : "x")
        << "  " << (r.uses_user ? "v" : "x");
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::size_t k = columns[c].second;
      const bool is_recall = c < 2;
      std::string cell = "-";
      if (std::find(r.mean.ks.begin(), r.mean.ks.end(), k) != r.mean.ks.end()) {
        cell = is_recall ? format_mean_std(r.mean.recall_at(k), r.stddev.recall_at(k))
                         : format_mean_std(r.mean.ndcg_at(k), r.stddev.ndcg_at(k));
      }
      out << "  " << std::setw(kCell) << cell;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace jam
