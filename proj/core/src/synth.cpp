#include "jam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "jam/rng.hpp"

namespace jam {

namespace {

enum Stream : std::uint64_t {
  kStreamUsers = 1,
  kStreamQueries,
  kStreamMaps,
  kStreamPairs,
  kStreamItems,
  kStreamRecords,
  kStreamNoise,
  kStreamPermutation,
};

Matrix<double> gaussian(SeededRng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix<double> m(rows, cols);
  for (double& x : m.values()) x = scale * rng.normal();
  return m;
}

std::vector<double> unit_gaussian(SeededRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::string padded_id(char prefix, std::size_t i, std::size_t count) {
  const int width = std::max(3, static_cast<int>(std::to_string(count).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

/// Affine image A*latent + offset plus isotropic noise of total scale sigma.
void observe(const Matrix<double>& map, std::span<const double> offset,
             std::span<const double> latent, double sigma, SeededRng& noise,
             std::span<float> out) {
  const double noise_scale = sigma / std::sqrt(static_cast<double>(out.size()));
  for (std::size_t r = 0; r < map.rows(); ++r) {
    double v = dot(map.row(r), latent);
    if (!offset.empty()) v += offset[r];
    out[r] = static_cast<float>(v + noise_scale * noise.normal());
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 1 || n_queries < 1 || n_items < 1 || latent_dim < 1 || n_mod < 1) {
    fail(ErrorKind::Config, "synth: counts must be >= 1");
  }
  if (!(noise_sigma >= 0.0)) fail(ErrorKind::Config, "synth: noise_sigma must be >= 0");
  if (!(distractor_overlap >= 0.0 && distractor_overlap <= 1.0)) {
    fail(ErrorKind::Config, "synth: distractor_overlap must be in [0,1]");
  }
  if (!(planted_fraction > 0.0 && planted_fraction <= 1.0)) {
    fail(ErrorKind::Config, "synth: planted_fraction must be in (0,1]");
  }
  if (n_days < 3) fail(ErrorKind::Config, "synth: n_days must be >= 3");
}

SynthWorld synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const SeededRng root(cfg.seed);
  const std::size_t L = cfg.latent_dim;
  const double latent_scale = 1.0 / std::sqrt(static_cast<double>(L));

  SynthWorld world;
  {
    SeededRng r = root.fork(kStreamUsers);
    world.user_latents = gaussian(r, cfg.n_users, L, latent_scale);
  }
  {
    SeededRng r = root.fork(kStreamQueries);
    world.query_latents = gaussian(r, cfg.n_queries, L, latent_scale);
  }

  // Observation maps into raw spaces of differing widths.
  const std::size_t user_dim = L + 16;
  const std::size_t query_dim = L + 32;
  const std::size_t group_dims = cfg.n_mod > 1 ? cfg.n_mod : 0;
  std::vector<std::size_t> mod_dims(cfg.n_mod);
  for (std::size_t i = 0; i < cfg.n_mod; ++i) mod_dims[i] = L + 8 * (i + 1);

  SeededRng maps = root.fork(kStreamMaps);
  const Matrix<double> user_map = gaussian(maps, user_dim, L, latent_scale);
  const Matrix<double> query_map = gaussian(maps, query_dim, L, latent_scale);
  std::vector<Matrix<double>> mod_maps;
  std::vector<std::vector<double>> mod_offsets;
  for (std::size_t i = 0; i < cfg.n_mod; ++i) {
    mod_maps.push_back(gaussian(maps, mod_dims[i], L, latent_scale));
    std::vector<double> offset(mod_dims[i]);
    const double s = 1.0 / std::sqrt(static_cast<double>(mod_dims[i]));
    for (double& x : offset) x = s * maps.normal();
    mod_offsets.push_back(std::move(offset));
  }

  // Distinct planted (user, query) pairs.
  const std::size_t n_pairs_total = cfg.n_users * cfg.n_queries;
  std::size_t n_planted = static_cast<std::size_t>(
      std::llround(cfg.planted_fraction * static_cast<double>(cfg.n_items)));
  n_planted = std::clamp<std::size_t>(n_planted, 1, std::min(cfg.n_items, n_pairs_total));
  std::vector<std::uint64_t> pairs;
  {
    SeededRng r = root.fork(kStreamPairs);
    if (n_pairs_total <= 4 * n_planted) {
      pairs.resize(n_pairs_total);
      std::iota(pairs.begin(), pairs.end(), std::uint64_t{0});
      r.shuffle(pairs);
      pairs.resize(n_planted);
    } else {
      std::unordered_set<std::uint64_t> seen;
      while (pairs.size() < n_planted) {
        const std::uint64_t p = r.uniform_index(n_pairs_total);
        if (seen.insert(p).second) pairs.push_back(p);
      }
    }
  }
  auto pair_user = [&](std::uint64_t p) { return static_cast<std::uint32_t>(p / cfg.n_queries); };
  auto pair_query = [&](std::uint64_t p) { return static_cast<std::uint32_t>(p % cfg.n_queries); };

  // Item slots are permuted so planted items are spread over the index range.
  std::vector<std::uint32_t> slot(cfg.n_items);
  std::iota(slot.begin(), slot.end(), 0u);
  {
    SeededRng r = root.fork(kStreamPermutation);
    r.shuffle(slot);
  }

  world.item_latents = Matrix<double>(cfg.n_items, L);
  std::vector<DenseMatrix> raw_mods;
  for (std::size_t i = 0; i < cfg.n_mod; ++i) raw_mods.emplace_back(cfg.n_items, mod_dims[i]);

  SeededRng item_rng = root.fork(kStreamItems);
  SeededRng noise = root.fork(kStreamNoise);
  for (std::size_t j = 0; j < cfg.n_items; ++j) {
    const std::uint32_t item = slot[j];
    std::vector<double> latent;
    std::ptrdiff_t preferred = -1;
    if (j < n_planted) {
      const auto u = world.user_latents.row(pair_user(pairs[j]));
      const auto q = world.query_latents.row(pair_query(pairs[j]));
      latent.resize(L);
      double norm = 0.0;
      for (std::size_t k = 0; k < L; ++k) {
        latent[k] = u[k] + q[k];
        norm += latent[k] * latent[k];
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        latent = unit_gaussian(item_rng, L);
      } else {
        for (double& x : latent) x /= norm;
      }
      preferred = static_cast<std::ptrdiff_t>(pair_query(pairs[j]) % cfg.n_mod);
    } else {
      latent = unit_gaussian(item_rng, L);
    }
    std::copy(latent.begin(), latent.end(), world.item_latents.row(item).begin());

    for (std::size_t m = 0; m < cfg.n_mod; ++m) {
      std::vector<double> content = latent;
      if (preferred >= 0 && cfg.n_mod > 1 && static_cast<std::ptrdiff_t>(m) != preferred &&
          item_rng.uniform() < cfg.distractor_overlap) {
        content = unit_gaussian(item_rng, L);
      }
      observe(mod_maps[m], mod_offsets[m], content, cfg.noise_sigma, noise,
              raw_mods[m].row(item));
    }
  }

  DenseMatrix user_raw(cfg.n_users, user_dim);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    observe(user_map, {}, world.user_latents.row(u), cfg.noise_sigma, noise, user_raw.row(u));
  }
  DenseMatrix query_raw(cfg.n_queries, query_dim + group_dims);
  for (std::size_t q = 0; q < cfg.n_queries; ++q) {
    auto row = query_raw.row(q);
    observe(query_map, {}, world.query_latents.row(q), cfg.noise_sigma, noise,
            row.subspan(0, query_dim));
    if (group_dims > 0) {
      const double noise_scale = cfg.noise_sigma / std::sqrt(double(row.size()));
      for (std::size_t g = 0; g < group_dims; ++g) {
        const double indicator = (q % cfg.n_mod == g) ? 1.0 : 0.0;
        row[query_dim + g] = static_cast<float>(indicator + noise_scale * noise.normal());
      }
    }
  }

  std::vector<std::string> user_ids, query_ids, item_ids;
  for (std::size_t u = 0; u < cfg.n_users; ++u) user_ids.push_back(padded_id('u', u, cfg.n_users));
  for (std::size_t q = 0; q < cfg.n_queries; ++q) {
    query_ids.push_back(padded_id('q', q, cfg.n_queries));
  }
  for (std::size_t t = 0; t < cfg.n_items; ++t) item_ids.push_back(padded_id('t', t, cfg.n_items));

  static const char* kNames[] = {"audio", "lyrics", "cf"};
  std::vector<std::string> names;
  for (std::size_t m = 0; m < cfg.n_mod; ++m) {
    names.push_back(m < 3 ? kNames[m] : "mod" + std::to_string(m));
  }

  world.catalog = Catalog(std::move(item_ids), std::move(names), std::move(raw_mods));
  world.users = EmbeddingTable(std::move(user_ids), std::move(user_raw));
  world.queries = EmbeddingTable(std::move(query_ids), std::move(query_raw));

  // Records: every day gets at least one record, then uniform days.
  const std::size_t n_records = cfg.n_records > 0 ? cfg.n_records : 3 * cfg.n_items;
  struct Draft {
    std::int64_t ts;
    std::size_t pair;
  };
  std::vector<Draft> drafts;
  drafts.reserve(n_records);
  SeededRng rec_rng = root.fork(kStreamRecords);
  for (std::size_t r = 0; r < std::max(n_records, cfg.n_days); ++r) {
    const std::size_t day = r < cfg.n_days ? r : rec_rng.uniform_index(cfg.n_days);
    const std::int64_t ts = cfg.start_timestamp + static_cast<std::int64_t>(day) * 86400 +
                            static_cast<std::int64_t>(rec_rng.uniform_index(86400));
    drafts.push_back({ts, static_cast<std::size_t>(rec_rng.uniform_index(n_planted))});
  }
  std::stable_sort(drafts.begin(), drafts.end(),
                   [](const Draft& a, const Draft& b) { return a.ts < b.ts; });

  world.triplets.tag = SplitTag::Full;
  for (const auto& d : drafts) {
    const std::uint64_t p = pairs[d.pair];
    const std::uint32_t item = slot[d.pair];
    world.triplets.records.push_back(make_record(pair_user(p), pair_query(p), {item}, d.ts));
    world.planted_item.push_back(item);
  }
  return world;
}

void save_world(const SynthWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_catalog(world.catalog, dir / "catalog.json");
  save_embedding_table(world.users, dir / "users.jamb", dir / "users.ids");
  save_embedding_table(world.queries, dir / "queries.jamb", dir / "queries.ids");
  save_triplets(dir / "triplets.jsonl", world.triplets, world.users, world.queries,
                world.catalog);
}

}  // namespace jam
