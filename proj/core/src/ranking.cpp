#include "jam/ranking.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "jam/kernel.hpp"

namespace jam {

namespace {

struct Candidate {
  double score;
  std::uint32_t item;
};

bool better(const Candidate& a, const Candidate& b) {
  return ranks_before(a.score, a.item, b.score, b.item);
}

void select_top(std::vector<Candidate>& cands, std::size_t k) {
  k = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(),
                    better);
  cands.resize(k);
}

RankedList to_list(const std::vector<Candidate>& cands) {
  RankedList out;
  out.items.reserve(cands.size());
  out.scores.reserve(cands.size());
  for (const auto& c : cands) {
    out.items.push_back(c.item);
    out.scores.push_back(c.score);
  }
  return out;
}

}  // namespace

RankedList top_k(std::span<const double> scores, std::size_t k) {
  std::vector<Candidate> cands(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    cands[i] = {scores[i], static_cast<std::uint32_t>(i)};
  }
  select_top(cands, k);
  return to_list(cands);
}

RankedList parallel_top_k(std::size_t n, std::size_t k, std::size_t threads,
                          const std::function<void(std::size_t, std::size_t, std::span<double>)>&
                              score_range) {
  std::vector<double> scores(n);
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  if (threads == 1) {
    score_range(0, n, scores);
    return top_k(scores, k);
  }

  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::vector<Candidate>> partial(threads);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, t * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    workers.emplace_back([&, t, begin, end] {
      std::span<double> out(scores.data() + begin, end - begin);
      score_range(begin, end, out);
      auto& cands = partial[t];
      cands.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        cands.push_back({scores[i], static_cast<std::uint32_t>(i)});
      }
      select_top(cands, k);
    });
  }
  for (auto& w : workers) w.join();

  std::vector<Candidate> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  select_top(merged, k);
  return to_list(merged);
}

JamRanker::JamRanker(const JamParams& params, const Catalog& catalog, std::size_t threads)
    : params_(params), catalog_(catalog), threads_(std::max<std::size_t>(1, threads)) {
  validate_params(params_);
  if (catalog_.n_modalities() != params_.n_modalities()) {
    fail(ErrorKind::Contract, "catalog has " + std::to_string(catalog_.n_modalities()) +
                                  " modalities, model expects " +
                                  std::to_string(params_.n_modalities()));
  }
  for (std::size_t i = 0; i < params_.n_modalities(); ++i) {
    if (catalog_.modality_dim(i) != params_.item[i].cols()) {
      fail(ErrorKind::Contract, "catalog modality " + std::to_string(i) + " has dim " +
                                    std::to_string(catalog_.modality_dim(i)) + ", model expects " +
                                    std::to_string(params_.item[i].cols()));
    }
  }
}

std::vector<double> JamRanker::score_all(const RankQuery& query) const {
  const auto ctx = kernel::make_context(params_, query.user, query.query, /*with_noise=*/false);
  const std::size_t n_mod = params_.n_modalities();
  std::vector<double> scores(catalog_.size());
  std::vector<double> scratch;
  std::vector<std::span<const float>> raw(n_mod);
  for (std::size_t item = 0; item < catalog_.size(); ++item) {
    for (std::size_t m = 0; m < n_mod; ++m) raw[m] = catalog_.raw(m, item);
    scores[item] = kernel::score_item(params_, ctx, raw, scratch);
  }
  return scores;
}

RankedList JamRanker::rank(const RankQuery& query, std::size_t k) const {
  if (catalog_.size() == 0) fail(ErrorKind::Contract, "rank: empty catalog");
  require(k >= 1, "rank: k must be >= 1");
  const auto ctx = kernel::make_context(params_, query.user, query.query, /*with_noise=*/false);
  const std::size_t n_mod = params_.n_modalities();
  return parallel_top_k(catalog_.size(), k, threads_,
                        [&](std::size_t begin, std::size_t end, std::span<double> out) {
                          std::vector<double> scratch;
                          std::vector<std::span<const float>> raw(n_mod);
                          for (std::size_t item = begin; item < end; ++item) {
                            for (std::size_t m = 0; m < n_mod; ++m) raw[m] = catalog_.raw(m, item);
                            out[item - begin] = kernel::score_item(params_, ctx, raw, scratch);
                          }
                        });
}

RankedList rank_catalog(const JamParams& params, const Catalog& catalog,
                        std::span<const float> raw_user, std::span<const float> raw_query,
                        std::size_t k, std::size_t threads) {
  JamRanker ranker(params, catalog, threads);
  return ranker.rank(RankQuery{raw_user, raw_query, 0}, k);
}

}  // namespace jam
