#pragma once

// Raw-space evaluation of the JAM score and its gradient.
//
// Every quantity the mixers need is a bilinear form in a raw item embedding,
// so per (user, query) we fold the projections into direction vectors in each
// modality's raw space:
//   x . t^i            = (W_i^T x) . t~_i + x . b_i
//   cross logit_i      = (K_i^T Q q~ / sqrt(d)) . t~_i
//   MoE gate/noise_i   = (G_i^T G_q q~) . t~_i
// Scoring an item then costs one dot per modality in its raw width instead of
// a d x dim projection. model.hpp keeps the direct latent-space route; the two
// are checked against each other in the tests.

#include <cstdint>
#include <span>
#include <vector>

#include "jam/model.hpp"

namespace jam::kernel {

struct QueryContext {
  std::vector<double> x;                             // u + q (d)
  std::vector<std::vector<double>> score_dirs;       // W_i^T x
  std::vector<double> score_offsets;                 // x . b_i
  std::vector<double> attn_query;                    // Q q~
  std::vector<std::vector<double>> attn_dirs;        // K_i^T Q q~ / sqrt(d)
  std::vector<double> gate_query;                    // G_q q~
  std::vector<std::vector<double>> gate_dirs;        // G_i^T G_q q~
  std::vector<double> noise_query;                   // N_q q~
  std::vector<std::vector<double>> noise_dirs;       // N_i^T N_q q~
  bool noisy = false;
};

/// `raw_user` may be empty: the user point is then the origin.
template <typename T, typename R>
QueryContext make_context(const JamParamsT<T>& p, std::span<const R> raw_user,
                          std::span<const R> raw_query, bool with_noise);

struct ItemEval {
  std::vector<double> modality_scores;  // x . t^i
  std::vector<double> logits;           // Cross: scaled logits; MoE: H (pre-mask)
  std::vector<double> noise_logits;     // MoE: x^noise
  std::vector<double> eps;              // MoE: standard normal draws (0 when noise off)
  std::vector<std::uint8_t> kept;       // MoE: top-k mask
  std::vector<double> alpha;
  double score = 0.0;
};

/// Evaluates one item. `eps` supplies MoE noise (required when ctx.noisy);
/// `forced_mask`, when non-null, replaces the top-k selection.
template <typename T, typename R>
void eval_item(const JamParamsT<T>& p, const QueryContext& ctx,
               std::span<const std::span<const R>> raw_item, std::span<const double> eps,
               const std::vector<std::uint8_t>* forced_mask, ItemEval& out);

/// Score-only fast path for ranking (no noise, no bookkeeping).
template <typename T>
double score_item(const JamParamsT<T>& p, const QueryContext& ctx,
                  std::span<const std::span<const float>> raw_item, std::vector<double>& scratch);

/// Accumulates d(sum_j dscore[j] * score_j)/d(params) into `grads` for one
/// (user, query) and its scored items.
template <typename T, typename R>
void accumulate_gradients(const JamParamsT<T>& p, const QueryContext& ctx,
                          std::span<const R> raw_user, std::span<const R> raw_query,
                          std::span<const std::vector<std::span<const R>>> raw_items,
                          std::span<const ItemEval> evals, std::span<const double> dscore,
                          JamGradients& grads);

/// BPR loss sum_n softplus(s_n - s_0) and its derivative wrt each score
/// (index 0 = positive).
double bpr_loss_and_dscores(std::span<const double> scores, std::vector<double>& dscores);

}  // namespace jam::kernel
