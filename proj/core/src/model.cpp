#include "jam/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace jam {

std::string MixerKind::name() const {
  switch (type) {
    case MixerType::Avg: return "avg";
    case MixerType::Cross: return "cross";
    case MixerType::MoE: {
      std::string s = "moe-k" + std::to_string(k);
      if (!noise_enabled) s += "-nonoise";
      return s;
    }
  }
  return "unknown";
}

MixerKind MixerKind::parse(std::string_view text) {
  if (text == "avg") return avg();
  if (text == "cross") return cross();
  if (text == "moe") return moe(2);
  if (text.rfind("moe-k", 0) == 0) {
    std::string_view rest = text.substr(5);
    bool noise = true;
    if (auto pos = rest.find("-nonoise"); pos != std::string_view::npos) {
      if (pos + 8 != rest.size()) fail(ErrorKind::Usage, "unknown mixer '" + std::string(text) + "'");
      noise = false;
      rest = rest.substr(0, pos);
    }
    if (rest.empty() || !std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      fail(ErrorKind::Usage, "unknown mixer '" + std::string(text) + "'");
    }
    return moe(static_cast<std::size_t>(std::stoul(std::string(rest))), noise);
  }
  fail(ErrorKind::Usage, "unknown mixer '" + std::string(text) + "' (expected avg|cross|moe-kN)");
}

template <typename T>
ModelShape JamParamsT<T>::shape() const {
  ModelShape s;
  s.d = d;
  s.gate_dim = gate_query.rows();
  s.user_dim = user.cols();
  s.query_dim = query.cols();
  for (const auto& m : item) s.item_dims.push_back(m.cols());
  s.use_bias = use_bias;
  return s;
}

template struct JamParamsT<float>;
template struct JamParamsT<double>;

namespace {

DenseMatrix uniform_init(std::size_t rows, std::size_t cols, SeededRng& rng,
                         std::size_t fan_in) {
  DenseMatrix m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (float& x : m.values()) x = static_cast<float>(rng.uniform(-bound, bound));
  return m;
}

void check_shape(const auto& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::Config, "params: '" + name + "' is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  }
}

}  // namespace

JamParams init_params(const ModelShape& shape, const MixerKind& mixer, SeededRng& rng) {
  if (shape.d == 0 || shape.user_dim == 0 || shape.query_dim == 0 || shape.item_dims.empty()) {
    fail(ErrorKind::Config, "init_params: empty shape");
  }
  const std::size_t n_mod = shape.item_dims.size();
  if (mixer.type == MixerType::MoE && (mixer.k < 1 || mixer.k > n_mod)) {
    fail(ErrorKind::Config, "MoE k must be in [1, " + std::to_string(n_mod) + "], got " +
                                std::to_string(mixer.k));
  }
  const std::size_t dg = shape.gate_dim == 0 ? shape.d : shape.gate_dim;

  JamParams p;
  p.d = shape.d;
  p.mixer = mixer;
  p.use_bias = shape.use_bias;
  p.user = uniform_init(shape.d, shape.user_dim, rng, shape.user_dim);
  p.query = uniform_init(shape.d, shape.query_dim, rng, shape.query_dim);
  for (auto dim : shape.item_dims) p.item.push_back(uniform_init(shape.d, dim, rng, dim));
  if (shape.use_bias) {
    p.user_bias = uniform_init(shape.d, 1, rng, shape.user_dim);
    p.query_bias = uniform_init(shape.d, 1, rng, shape.query_dim);
    for (auto dim : shape.item_dims) p.item_bias.push_back(uniform_init(shape.d, 1, rng, dim));
  }
  if (mixer.type == MixerType::Cross) {
    for (auto dim : shape.item_dims) p.attn_key.push_back(uniform_init(shape.d, dim, rng, dim));
    p.attn_query = uniform_init(shape.d, shape.query_dim, rng, shape.query_dim);
  }
  if (mixer.type == MixerType::MoE) {
    for (auto dim : shape.item_dims) p.gate_item.push_back(uniform_init(dg, dim, rng, dim));
    p.gate_query = uniform_init(dg, shape.query_dim, rng, shape.query_dim);
    if (mixer.noise_enabled) {
      for (auto dim : shape.item_dims) p.noise_item.push_back(uniform_init(dg, dim, rng, dim));
      p.noise_query = uniform_init(dg, shape.query_dim, rng, shape.query_dim);
    }
  }
  return p;
}

template <typename T>
void validate_params(const JamParamsT<T>& p) {
  const std::size_t n_mod = p.item.size();
  if (p.d == 0 || n_mod == 0) fail(ErrorKind::Config, "params: empty model");
  check_shape(p.user, p.d, p.user.cols(), "user");
  check_shape(p.query, p.d, p.query.cols(), "query");
  if (p.user.cols() == 0 || p.query.cols() == 0) fail(ErrorKind::Config, "params: empty projection");
  for (std::size_t i = 0; i < n_mod; ++i) check_shape(p.item[i], p.d, p.item[i].cols(), "item");
  if (p.use_bias) {
    check_shape(p.user_bias, p.d, 1, "user_bias");
    check_shape(p.query_bias, p.d, 1, "query_bias");
    if (p.item_bias.size() != n_mod) fail(ErrorKind::Config, "params: item_bias count");
    for (const auto& b : p.item_bias) check_shape(b, p.d, 1, "item_bias");
  }
  switch (p.mixer.type) {
    case MixerType::Avg: break;
    case MixerType::Cross:
      if (p.attn_key.size() != n_mod) fail(ErrorKind::Config, "params: attention keys missing");
      for (std::size_t i = 0; i < n_mod; ++i) {
        check_shape(p.attn_key[i], p.d, p.item[i].cols(), "attn_key");
      }
      check_shape(p.attn_query, p.d, p.query.cols(), "attn_query");
      break;
    case MixerType::MoE: {
      if (p.mixer.k < 1 || p.mixer.k > n_mod) {
        fail(ErrorKind::Config, "MoE k must be in [1, " + std::to_string(n_mod) + "]");
      }
      if (p.gate_item.size() != n_mod) fail(ErrorKind::Config, "params: gate matrices missing");
      const std::size_t dg = p.gate_query.rows();
      if (dg == 0) fail(ErrorKind::Config, "params: gate_query missing");
      for (std::size_t i = 0; i < n_mod; ++i) {
        check_shape(p.gate_item[i], dg, p.item[i].cols(), "gate_item");
      }
      check_shape(p.gate_query, dg, p.query.cols(), "gate_query");
      if (p.mixer.noise_enabled) {
        if (p.noise_item.size() != n_mod) fail(ErrorKind::Config, "params: noise matrices missing");
        for (std::size_t i = 0; i < n_mod; ++i) {
          check_shape(p.noise_item[i], dg, p.item[i].cols(), "noise_item");
        }
        check_shape(p.noise_query, dg, p.query.cols(), "noise_query");
      }
      break;
    }
  }
  p.for_each_tensor([](const std::string& name, const Matrix<T>& m) {
    if (!all_finite(m.values())) fail(ErrorKind::Data, "params: non-finite entry in " + name);
  });
}

template void validate_params(const JamParamsT<float>&);
template void validate_params(const JamParamsT<double>&);

namespace {

DenseVector add_bias(DenseVector v, const DenseMatrix& bias) {
  if (bias.empty()) return v;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bias(i, 0);
  return v;
}

void check_raw_items(const JamParams& p, std::span<const std::span<const float>> raw_items) {
  if (raw_items.size() != p.n_modalities()) {
    fail(ErrorKind::Contract, "expected " + std::to_string(p.n_modalities()) +
                                  " modality embeddings, got " + std::to_string(raw_items.size()));
  }
}

DenseVector combine(const ItemLatents& items, const std::vector<double>& alpha) {
  const std::size_t d = items.per_modality.front().size();
  std::vector<double> acc(d, 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    const auto& t = items.per_modality[i];
    if (t.size() != d) fail(ErrorKind::Contract, "mix: modality latents differ in dimension");
    for (std::size_t c = 0; c < d; ++c) acc[c] += alpha[i] * t[c];
  }
  return DenseVector(acc.begin(), acc.end());
}

/// (A a) . (B b) for the bilinear gate/attention logits.
double bilinear(const DenseMatrix& a_map, std::span<const float> a, const DenseMatrix& b_map,
                std::span<const float> b) {
  const auto left = matvec(a_map, a);
  const auto right = matvec(b_map, b);
  return dot(std::span<const float>(left), std::span<const float>(right));
}

}  // namespace

DenseVector project_user(const JamParams& p, std::span<const float> raw_user) {
  return add_bias(matvec(p.user, raw_user), p.user_bias);
}

DenseVector project_query(const JamParams& p, std::span<const float> raw_query) {
  return add_bias(matvec(p.query, raw_query), p.query_bias);
}

DenseVector project_item(const JamParams& p, std::size_t modality, std::span<const float> raw) {
  if (modality >= p.item.size()) fail(ErrorKind::Contract, "project_item: modality out of range");
  return add_bias(matvec(p.item[modality], raw),
                  p.item_bias.empty() ? DenseMatrix{} : p.item_bias[modality]);
}

ItemLatents project_items(const JamParams& p, std::span<const std::span<const float>> raw_items) {
  check_raw_items(p, raw_items);
  ItemLatents out;
  for (std::size_t i = 0; i < raw_items.size(); ++i) {
    out.per_modality.push_back(project_item(p, i, raw_items[i]));
  }
  return out;
}

MixResult mix_avg(const ItemLatents& items) {
  require(!items.per_modality.empty(), "mix_avg: no modalities");
  const std::size_t n = items.per_modality.size();
  MixResult r;
  r.weights.alpha.assign(n, 1.0 / static_cast<double>(n));
  r.mixed = combine(items, r.weights.alpha);
  return r;
}

MixResult mix_cross(const JamParams& p, std::span<const std::span<const float>> raw_items,
                    std::span<const float> raw_query, const ItemLatents& items) {
  check_raw_items(p, raw_items);
  if (p.attn_key.size() != p.n_modalities() || p.attn_query.empty()) {
    fail(ErrorKind::Config, "mix_cross: attention matrices not populated");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.d));
  std::vector<double> logits(raw_items.size());
  for (std::size_t i = 0; i < raw_items.size(); ++i) {
    logits[i] = bilinear(p.attn_key[i], raw_items[i], p.attn_query, raw_query) * scale;
  }
  MixResult r;
  r.weights.alpha = softmax(logits);
  r.weights.gate_logits = logits;
  r.mixed = combine(items, r.weights.alpha);
  return r;
}

std::vector<std::size_t> keep_top_k(std::vector<double>& logits, std::size_t k) {
  const std::size_t n = logits.size();
  if (k < 1 || k > n) {
    fail(ErrorKind::Config, "top-k: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(n) + "]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(kept.begin(), kept.end());
  std::vector<bool> keep(n, false);
  for (auto i : kept) keep[i] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) logits[i] = kMaskedLogit;
  }
  return kept;
}

MixResult mix_moe(const JamParams& p, std::span<const std::span<const float>> raw_items,
                  std::span<const float> raw_query, const ItemLatents& items,
                  SeededRng* noise_rng) {
  check_raw_items(p, raw_items);
  if (p.mixer.type != MixerType::MoE) fail(ErrorKind::Config, "mix_moe: mixer is not MoE");
  const std::size_t n = raw_items.size();
  if (p.mixer.k < 1 || p.mixer.k > n) {
    fail(ErrorKind::Config, "MoE k must be in [1, " + std::to_string(n) + "]");
  }
  if (p.gate_item.size() != n || p.gate_query.empty()) {
    fail(ErrorKind::Config, "mix_moe: gate matrices not populated");
  }
  const bool noisy = p.mixer.noise_enabled && noise_rng != nullptr;
  if (noisy && (p.noise_item.size() != n || p.noise_query.empty())) {
    fail(ErrorKind::Config, "mix_moe: noise matrices not populated");
  }
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = bilinear(p.gate_item[i], raw_items[i], p.gate_query, raw_query);
    if (noisy) {
      const double x_noise = bilinear(p.noise_item[i], raw_items[i], p.noise_query, raw_query);
      h[i] += noise_rng->normal() * softplus(x_noise);
    }
  }
  MixResult r;
  r.weights.gate_logits = h;
  std::vector<double> masked = h;
  r.weights.kept = keep_top_k(masked, p.mixer.k);
  r.weights.alpha = softmax(masked);
  r.mixed = combine(items, r.weights.alpha);
  return r;
}

MixResult mix(const JamParams& p, std::span<const std::span<const float>> raw_items,
              std::span<const float> raw_query, const ItemLatents& items, SeededRng* noise_rng) {
  switch (p.mixer.type) {
    case MixerType::Avg: return mix_avg(items);
    case MixerType::Cross: return mix_cross(p, raw_items, raw_query, items);
    case MixerType::MoE: return mix_moe(p, raw_items, raw_query, items, noise_rng);
  }
  fail(ErrorKind::Config, "unknown mixer");
}

double score(std::span<const float> u, std::span<const float> q, std::span<const float> t_hat) {
  if (u.size() != q.size() || q.size() != t_hat.size()) {
    fail(ErrorKind::Contract, "score: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < t_hat.size(); ++i) {
    acc += (double(u[i]) + double(q[i])) * double(t_hat[i]);
  }
  return acc;
}

}  // namespace jam
