#pragma once

// JAM forward model. Users, queries and each item modality are projected into
// a shared d-dimensional space; a query acts as a translation of the user
// point, and an item is scored by dot(u + q, t_hat) where t_hat mixes the
// item's projected modality vectors.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jam/linalg.hpp"
#include "jam/rng.hpp"

namespace jam {

enum class MixerType { Avg, Cross, MoE };

struct MixerKind {
  MixerType type = MixerType::Avg;
  std::size_t k = 2;            // MoE only: experts kept per item
  bool noise_enabled = true;    // MoE only: noisy gating during training

  static MixerKind avg() { return {MixerType::Avg, 0, false}; }
  static MixerKind cross() { return {MixerType::Cross, 0, false}; }
  static MixerKind moe(std::size_t k, bool noise = true) { return {MixerType::MoE, k, noise}; }

  /// "avg", "cross", "moe-k2", "moe-k1-nonoise", ...
  std::string name() const;
  /// Parses the strings produced by name(); also accepts "moe" (k=2).
  static MixerKind parse(std::string_view text);

  bool operator==(const MixerKind&) const = default;
};

struct ModelShape {
  std::size_t d = 128;
  std::size_t gate_dim = 0;  // 0 means d
  std::size_t user_dim = 0;
  std::size_t query_dim = 0;
  std::vector<std::size_t> item_dims;
  bool use_bias = false;
};

/// Trainable matrices. Only the matrices the active mixer needs are
/// populated; the rest stay empty (0x0).
template <typename T>
struct JamParamsT {
  std::size_t d = 0;
  MixerKind mixer;
  bool use_bias = false;

  Matrix<T> user;                 // d x dim_user
  Matrix<T> query;                // d x dim_query
  std::vector<Matrix<T>> item;    // d x dim_item[i]
  Matrix<T> user_bias;            // d x 1, only with use_bias
  Matrix<T> query_bias;
  std::vector<Matrix<T>> item_bias;

  std::vector<Matrix<T>> attn_key;  // Cross: d x dim_item[i]
  Matrix<T> attn_query;             // Cross: d x dim_query

  std::vector<Matrix<T>> gate_item;   // MoE: d_g x dim_item[i]
  Matrix<T> gate_query;               // MoE: d_g x dim_query
  std::vector<Matrix<T>> noise_item;  // MoE with noise: d_g x dim_item[i]
  Matrix<T> noise_query;

  std::size_t n_modalities() const noexcept { return item.size(); }
  std::size_t user_dim() const noexcept { return user.cols(); }
  std::size_t query_dim() const noexcept { return query.cols(); }
  std::size_t gate_dim() const noexcept { return gate_query.rows(); }
  ModelShape shape() const;

  /// Visits every populated matrix in a fixed order with a stable name.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit_impl(*this, f);
  }

  template <typename U>
  JamParamsT<U> cast() const;

  bool operator==(const JamParamsT&) const = default;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f);
};

using JamParams = JamParamsT<float>;
using JamGradients = JamParamsT<double>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation of every matrix
/// the mixer needs.
JamParams init_params(const ModelShape& shape, const MixerKind& mixer, SeededRng& rng);

/// Same layout as `p`, all zeros, in type U.
template <typename U, typename T>
JamParamsT<U> zeros_like(const JamParamsT<T>& p);

/// Throws Error(Config) if the mixer's matrices are missing or mis-shaped.
template <typename T>
void validate_params(const JamParamsT<T>& p);

/// Per-modality projected vectors t^i.
struct ItemLatents {
  std::vector<DenseVector> per_modality;
};

struct MixWeights {
  std::vector<double> alpha;                      // convex weights over modalities
  std::optional<std::vector<double>> gate_logits; // MoE: H before masking; Cross: scaled logits
  std::vector<std::size_t> kept;                  // MoE: modalities kept by top-k
};

struct MixResult {
  DenseVector mixed;  // t_hat
  MixWeights weights;
};

DenseVector project_user(const JamParams& p, std::span<const float> raw_user);
DenseVector project_query(const JamParams& p, std::span<const float> raw_query);
DenseVector project_item(const JamParams& p, std::size_t modality, std::span<const float> raw);
ItemLatents project_items(const JamParams& p, std::span<const std::span<const float>> raw_items);

/// Uniform average of the modality vectors.
MixResult mix_avg(const ItemLatents& items);

/// Scaled dot-product attention over raw modality embeddings:
/// logit_i = (K_i t~_i) . (Q q~) / sqrt(d), alpha = softmax(logits).
MixResult mix_cross(const JamParams& p, std::span<const std::span<const float>> raw_items,
                    std::span<const float> raw_query, const ItemLatents& items);

/// Noisy top-k gating. Gate noise is drawn from `noise_rng` only when the
/// mixer has noise enabled and a generator is supplied.
MixResult mix_moe(const JamParams& p, std::span<const std::span<const float>> raw_items,
                  std::span<const float> raw_query, const ItemLatents& items,
                  SeededRng* noise_rng = nullptr);

/// Dispatches on p.mixer.
MixResult mix(const JamParams& p, std::span<const std::span<const float>> raw_items,
              std::span<const float> raw_query, const ItemLatents& items,
              SeededRng* noise_rng = nullptr);

/// Replaces all but the k largest logits with kMaskedLogit. Ties are kept in
/// ascending index order. Returns kept indices, ascending.
std::vector<std::size_t> keep_top_k(std::vector<double>& logits, std::size_t k);

/// (u + q) . t_hat
double score(std::span<const float> u, std::span<const float> q, std::span<const float> t_hat);

// ---------------------------------------------------------------------------

template <typename T>
template <typename Self, typename F>
void JamParamsT<T>::visit_impl(Self& self, F& f) {
  auto one = [&](const std::string& name, auto& m) {
    if (!m.empty()) f(name, m);
  };
  auto many = [&](const std::string& name, auto& ms) {
    for (std::size_t i = 0; i < ms.size(); ++i) one(name + "." + std::to_string(i), ms[i]);
  };
  one("user", self.user);
  one("query", self.query);
  many("item", self.item);
  one("user_bias", self.user_bias);
  one("query_bias", self.query_bias);
  many("item_bias", self.item_bias);
  many("attn_key", self.attn_key);
  one("attn_query", self.attn_query);
  many("gate_item", self.gate_item);
  one("gate_query", self.gate_query);
  many("noise_item", self.noise_item);
  one("noise_query", self.noise_query);
}

template <typename T>
template <typename U>
JamParamsT<U> JamParamsT<T>::cast() const {
  JamParamsT<U> out;
  out.d = d;
  out.mixer = mixer;
  out.use_bias = use_bias;
  auto conv = [](const auto& ms) {
    std::vector<Matrix<U>> r;
    for (const auto& m : ms) r.push_back(m.template cast<U>());
    return r;
  };
  out.user = user.template cast<U>();
  out.query = query.template cast<U>();
  out.item = conv(item);
  out.user_bias = user_bias.template cast<U>();
  out.query_bias = query_bias.template cast<U>();
  out.item_bias = conv(item_bias);
  out.attn_key = conv(attn_key);
  out.attn_query = attn_query.template cast<U>();
  out.gate_item = conv(gate_item);
  out.gate_query = gate_query.template cast<U>();
  out.noise_item = conv(noise_item);
  out.noise_query = noise_query.template cast<U>();
  return out;
}

template <typename U, typename T>
JamParamsT<U> zeros_like(const JamParamsT<T>& p) {
  JamParamsT<U> out = p.template cast<U>();
  out.for_each_tensor([](const std::string&, Matrix<U>& m) { m.fill(U(0)); });
  return out;
}

}  // namespace jam
