#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "jam/kernel.hpp"
#include "jam/model.hpp"

namespace jam {
namespace {

// Straight-line forward pass in double, written from the model definition.
struct OracleOut {
  std::vector<double> alpha;
  double score = 0.0;
};

std::vector<double> apply(const DenseMatrix& w, std::span<const float> x) {
  std::vector<double> out(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) out[r] += double(w(r, c)) * double(x[c]);
  }
  return out;
}

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

OracleOut oracle_forward(const JamParams& p, std::span<const float> user, std::span<const float> query,
                         const std::vector<std::span<const float>>& items) {
  const std::size_t n = items.size();
  auto u = apply(p.user, user);
  auto q = apply(p.query, query);
  std::vector<std::vector<double>> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = apply(p.item[i], items[i]);
    if (p.use_bias) {
      for (std::size_t r = 0; r < p.d; ++r) t[i][r] += p.item_bias[i](r, 0);
    }
  }
  if (p.use_bias) {
    for (std::size_t r = 0; r < p.d; ++r) {
      u[r] += p.user_bias(r, 0);
      q[r] += p.query_bias(r, 0);
    }
  }
  std::vector<double> logits(n, 0.0);
  OracleOut out;
  switch (p.mixer.type) {
    case MixerType::Avg:
      out.alpha.assign(n, 1.0 / n);
      break;
    case MixerType::Cross: {
      const auto qq = apply(p.attn_query, query);
      for (std::size_t i = 0; i < n; ++i) {
        logits[i] = vdot(apply(p.attn_key[i], items[i]), qq) / std::sqrt(double(p.d));
      }
      break;
    }
    case MixerType::MoE: {
      const auto gq = apply(p.gate_query, query);
      for (std::size_t i = 0; i < n; ++i) logits[i] = vdot(apply(p.gate_item[i], items[i]), gq);
      break;
    }
  }
  if (p.mixer.type != MixerType::Avg) {
    std::vector<bool> keep(n, true);
    if (p.mixer.type == MixerType::MoE) {
      // Keep the k largest; among equals the lower index wins.
      keep.assign(n, false);
      for (std::size_t round = 0; round < p.mixer.k; ++round) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (!keep[i] && (best == n || logits[i] > logits[best])) best = i;
        }
        keep[best] = true;
      }
    }
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) mx = std::max(mx, logits[i]);
    }
    double z = 0.0;
    out.alpha.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) z += out.alpha[i] = std::exp(logits[i] - mx);
    }
    for (auto& a : out.alpha) a /= z;
  }
  std::vector<double> mixed(p.d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < p.d; ++r) mixed[r] += out.alpha[i] * t[i][r];
  }
  for (std::size_t r = 0; r < p.d; ++r) out.score += (u[r] + q[r]) * mixed[r];
  return out;
}

struct Case {
  MixerKind mixer;
  bool bias;

  friend void PrintTo(const Case& c, std::ostream* os) {
    *os << c.mixer.name() << (c.bias ? "+bias" : "");
  }
};

class ForwardTest : public ::testing::TestWithParam<Case> {};

TEST_P(ForwardTest, LatentRouteMatchesOracle) {
  const auto [mixer, bias] = GetParam();
  const auto w = testing::tiny_world(12, {5, 3, 7}, 4, 6, 21);
  ModelShape shape{6, 0, 4, 6, {5, 3, 7}, bias};
  SeededRng rng(2);
  const auto p = init_params(shape, mixer, rng);

  for (std::size_t item = 0; item < w.catalog.size(); ++item) {
    const auto views = testing::item_views(w.catalog, item);
    const auto user = w.users.row(item % w.users.size());
    const auto query = w.queries.row(item % w.queries.size());
    const auto expect = oracle_forward(p, user, query, views);

    const auto latents = project_items(p, views);
    const auto mixed = mix(p, views, query, latents);
    const auto u = project_user(p, user);
    const auto q = project_query(p, query);
    ASSERT_EQ(mixed.weights.alpha.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(mixed.weights.alpha[i], expect.alpha[i], 1e-6);
    EXPECT_NEAR(score(u, q, mixed.mixed), expect.score, 1e-5 * (1.0 + std::abs(expect.score)));
  }
}

TEST_P(ForwardTest, KernelRouteMatchesLatentRoute) {
  const auto [mixer, bias] = GetParam();
  const auto w = testing::tiny_world(10, {5, 3, 7}, 4, 6, 22);
  ModelShape shape{8, 0, 4, 6, {5, 3, 7}, bias};
  SeededRng rng(3);
  const auto p = init_params(shape, mixer, rng);

  for (std::size_t item = 0; item < w.catalog.size(); ++item) {
    const auto views = testing::item_views(w.catalog, item);
    const auto user = w.users.row(item % w.users.size());
    const auto query = w.queries.row(item % w.queries.size());
    const auto expect = oracle_forward(p, user, query, views);

    const auto ctx = kernel::make_context(p, user, query, false);
    kernel::ItemEval ev;
    kernel::eval_item(p, ctx, std::span<const std::span<const float>>(views), {}, nullptr, ev);
    EXPECT_NEAR(ev.score, expect.score, 1e-5 * (1.0 + std::abs(expect.score)));
    std::vector<double> scratch;
    EXPECT_NEAR(kernel::score_item(p, ctx, views, scratch), ev.score, 1e-9 * (1.0 + std::abs(ev.score)));
  }
}

INSTANTIATE_TEST_SUITE_P(Mixers, ForwardTest,
                         ::testing::Values(Case{MixerKind::avg(), false}, Case{MixerKind::avg(), true},
                                           Case{MixerKind::cross(), false}, Case{MixerKind::cross(), true},
                                           Case{MixerKind::moe(1, false), false},
                                           Case{MixerKind::moe(2, false), true},
                                           Case{MixerKind::moe(3, false), false}),
                         [](const auto& info) {
                           std::string n = info.param.mixer.name() + (info.param.bias ? "_bias" : "");
                           for (auto& c : n) {
                             if (c == '-') c = '_';
                           }
                           return n;
                         });

TEST(Model, AnonymousUserIsTheOrigin) {
  const auto w = testing::tiny_world(4, {3, 3}, 4, 5, 30);
  SeededRng rng(4);
  const auto p = init_params(ModelShape{6, 0, 4, 5, {3, 3}, false}, MixerKind::avg(), rng);
  const auto views = testing::item_views(w.catalog, 1);
  const auto ctx = kernel::make_context(p, std::span<const float>{}, w.queries.row(0), false);
  std::vector<double> scratch;
  const auto q = project_query(p, w.queries.row(0));
  const auto t = mix_avg(project_items(p, views)).mixed;
  const std::vector<float> zero(6, 0.0f);
  EXPECT_NEAR(kernel::score_item(p, ctx, views, scratch), score(zero, q, t), 1e-6);
}

TEST(Model, InitIsUniformWithinFanInBound) {
  SeededRng rng(5);
  const auto p = init_params(ModelShape{16, 0, 25, 9, {4, 100}, false}, MixerKind::cross(), rng);
  auto check = [](const DenseMatrix& m) {
    const double bound = 1.0 / std::sqrt(double(m.cols()));
    double mx = 0.0;
    for (float v : m.values()) mx = std::max(mx, std::abs(double(v)));
    EXPECT_LE(mx, bound);
    EXPECT_GT(mx, 0.8 * bound);
  };
  check(p.user);
  check(p.query);
  check(p.item[1]);
  check(p.attn_key[0]);
  EXPECT_TRUE(p.gate_query.empty());
  EXPECT_NO_THROW(validate_params(p));
}

TEST(Model, OnlyMixerTensorsArePopulated) {
  SeededRng rng(6);
  const ModelShape shape{4, 3, 2, 2, {2, 2, 2}, false};
  auto names = [](const JamParams& p) {
    std::vector<std::string> out;
    p.for_each_tensor([&](const std::string& n, const DenseMatrix&) { out.push_back(n); });
    return out;
  };
  EXPECT_EQ(names(init_params(shape, MixerKind::avg(), rng)).size(), 5u);
  const auto moe = init_params(shape, MixerKind::moe(2), rng);
  EXPECT_EQ(names(moe).size(), 5u + 4u + 4u);
  EXPECT_EQ(moe.gate_dim(), 3u);
  EXPECT_EQ(names(init_params(shape, MixerKind::moe(2, false), rng)).size(), 5u + 4u);
}

TEST(Model, KeepTopKBreaksTiesByIndex) {
  std::vector<double> l{1.0, 3.0, 3.0, 3.0, 0.5};
  EXPECT_EQ(keep_top_k(l, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(l[3], kMaskedLogit);
  EXPECT_EQ(l[0], kMaskedLogit);
  std::vector<double> m{2.0, 1.0};
  EXPECT_THROW(keep_top_k(m, 3), Error);
  EXPECT_THROW(keep_top_k(m, 0), Error);
}

TEST(Model, NoisyGatingDrawsOnlyWithGenerator) {
  const auto w = testing::tiny_world(2, {3, 3, 3}, 2, 2, 31);
  SeededRng init(7);
  const auto p = init_params(ModelShape{4, 0, 2, 2, {3, 3, 3}, false}, MixerKind::moe(1), init);
  const auto views = testing::item_views(w.catalog, 0);
  const auto latents = project_items(p, views);
  const auto clean1 = mix_moe(p, views, w.queries.row(0), latents);
  const auto clean2 = mix_moe(p, views, w.queries.row(0), latents);
  EXPECT_EQ(clean1.weights.alpha, clean2.weights.alpha);
  SeededRng noise(1);
  bool changed = false;
  for (int i = 0; i < 50 && !changed; ++i) {
    changed = mix_moe(p, views, w.queries.row(0), latents, &noise).weights.gate_logits !=
              clean1.weights.gate_logits;
  }
  EXPECT_TRUE(changed);
}

TEST(Model, MixerNamesRoundTrip) {
  for (auto m : {MixerKind::avg(), MixerKind::cross(), MixerKind::moe(1), MixerKind::moe(2, false),
                 MixerKind::moe(3)}) {
    EXPECT_EQ(MixerKind::parse(m.name()), m);
  }
  EXPECT_EQ(MixerKind::parse("moe"), MixerKind::moe(2));
  EXPECT_THROW(MixerKind::parse("moe-kx"), Error);
  EXPECT_THROW(MixerKind::parse("sum"), Error);
}

TEST(Model, ScoreChecksDimensions) {
  const std::vector<float> a(3), b(3), c(2);
  EXPECT_THROW(score(a, b, c), Error);
}

}  // namespace
}  // namespace jam
