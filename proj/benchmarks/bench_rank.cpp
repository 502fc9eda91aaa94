#include <benchmark/benchmark.h>

#include <map>

#include "jam/kernel.hpp"
#include "jam/ranking.hpp"
#include "jam/synth.hpp"
#include "jam/train.hpp"

namespace {

using namespace jam;

const SynthWorld& world(std::size_t n_items) {
  static std::map<std::size_t, SynthWorld> cache;
  auto it = cache.find(n_items);
  if (it == cache.end()) {
    SynthConfig sc;
    sc.n_items = n_items;
    it = cache.emplace(n_items, synth_generate(sc)).first;
  }
  return it->second;
}

MixerKind mixer_of(int code) {
  switch (code) {
    case 0: return MixerKind::avg();
    case 1: return MixerKind::cross();
    default: return MixerKind::moe(2);
  }
}

// Full-catalog top-100. Args: mixer (0 avg, 1 cross, 2 moe-k2), catalog size, threads.
void BM_RankCatalog(benchmark::State& state) {
  const auto mixer = mixer_of(int(state.range(0)));
  const auto& w = world(std::size_t(state.range(1)));
  SeededRng rng(1);
  const auto p = init_params(ModelShape{128, 0, w.users.dim(), w.queries.dim(), w.catalog.modality_dims(), false},
                             mixer, rng);
  std::size_t q = 0;
  for (auto _ : state) {
    auto r = rank_catalog(p, w.catalog, w.users.row(q % w.users.size()), w.queries.row(q % w.queries.size()),
                          100, std::size_t(state.range(2)));
    benchmark::DoNotOptimize(r.items.data());
    ++q;
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
  state.SetLabel(mixer.name());
}
BENCHMARK(BM_RankCatalog)
    ->ArgsProduct({{0, 1, 2}, {2000, 20000}, {1}})
    ->Args({1, 20000, 2})
    ->Unit(benchmark::kMicrosecond);

// Raw-space context construction: the per-request cost before item scoring.
void BM_MakeContext(benchmark::State& state) {
  const auto mixer = mixer_of(int(state.range(0)));
  const auto& w = world(2000);
  SeededRng rng(2);
  const auto p = init_params(ModelShape{128, 0, w.users.dim(), w.queries.dim(), w.catalog.modality_dims(), false},
                             mixer, rng);
  for (auto _ : state) {
    auto ctx = kernel::make_context(p, w.users.row(0), w.queries.row(0), false);
    benchmark::DoNotOptimize(ctx.x.data());
  }
  state.SetLabel(mixer.name());
}
BENCHMARK(BM_MakeContext)->DenseRange(0, 2);

// One BPR batch: forward, backward and AdamW for 512 triplets with 4 negatives.
void BM_TrainStep(benchmark::State& state) {
  const auto mixer = mixer_of(int(state.range(0)));
  const auto& w = world(2000);
  const auto split = chronological_split(w.triplets);
  const TrainData data{split.train, w.catalog, w.users, w.queries};
  SeededRng init(3);
  JamTrainable model(init_params(ModelShape{128, 0, w.users.dim(), w.queries.dim(), w.catalog.modality_dims(), false},
                                 mixer, init));
  const auto triplets = expand_triplets(split.train);
  const std::span<const TrainTriplet> batch_t(triplets.data(), std::min<std::size_t>(512, triplets.size()));
  SeededRng neg_rng(4), noise(5);
  std::vector<std::vector<std::uint32_t>> negs;
  for (const auto& t : batch_t) {
    negs.push_back(sample_negatives(neg_rng, w.catalog.size(), split.train.records[t.record].relevant_items, 4));
  }
  AdamWState opt;
  std::vector<Matrix<double>> grads;
  for (auto _ : state) {
    const double loss = model.batch_loss(data, Batch{batch_t, negs, noise}, grads);
    const auto params = model.parameters();
    adamw_step(params, grads, opt, 1e-3, 1e-2);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(batch_t.size()));
  state.SetLabel(mixer.name());
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
