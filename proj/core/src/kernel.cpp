#include "jam/kernel.hpp"

#include <cmath>

namespace jam::kernel {

namespace {

template <typename T, typename R>
std::vector<double> project(const Matrix<T>& m, std::span<const R> v) {
  if (m.cols() != v.size()) {
    fail(ErrorKind::Contract, "projection expects dim " + std::to_string(m.cols()) + ", got " +
                                  std::to_string(v.size()));
  }
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v);
  return out;
}

template <typename T>
std::vector<double> transposed(const Matrix<T>& m, const std::vector<double>& v,
                               double scale = 1.0) {
  auto out = matvec_transposed(m, std::span<const double>(v));
  if (scale != 1.0) {
    for (double& x : out) x *= scale;
  }
  return out;
}

template <typename R>
inline double raw_dot(const std::vector<double>& dir, std::span<const R> raw) {
  double acc = 0.0;
  const std::size_t n = raw.size();
  const double* a = dir.data();
  const R* b = raw.data();
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * double(b[i]);
  return acc;
}

/// acc += s * v
template <typename R>
inline void axpy(std::vector<double>& acc, double s, std::span<const R> v) {
  if (s == 0.0) return;
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += s * double(v[i]);
}

/// acc += m * v (m is rows x cols, v has cols entries)
template <typename T>
void add_matvec(std::vector<double>& acc, const Matrix<T>& m, const std::vector<double>& v,
                double scale = 1.0) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    acc[r] += scale * dot(m.row(r), std::span<const double>(v));
  }
}

void softmax_inplace(std::vector<double>& logits, std::vector<double>& alpha) {
  alpha = softmax(std::span<const double>(logits));
}

}  // namespace

template <typename T, typename R>
QueryContext make_context(const JamParamsT<T>& p, std::span<const R> raw_user,
                          std::span<const R> raw_query, bool with_noise) {
  QueryContext ctx;
  ctx.x = project(p.query, raw_query);
  if (!raw_user.empty()) {
    const auto u = project(p.user, raw_user);
    for (std::size_t i = 0; i < u.size(); ++i) ctx.x[i] += u[i];
    if (p.use_bias) {
      for (std::size_t i = 0; i < p.d; ++i) ctx.x[i] += double(p.user_bias(i, 0));
    }
  }
  if (p.use_bias) {
    for (std::size_t i = 0; i < p.d; ++i) ctx.x[i] += double(p.query_bias(i, 0));
  }

  const std::size_t n_mod = p.n_modalities();
  ctx.score_dirs.resize(n_mod);
  ctx.score_offsets.assign(n_mod, 0.0);
  for (std::size_t i = 0; i < n_mod; ++i) {
    ctx.score_dirs[i] = transposed(p.item[i], ctx.x);
    if (p.use_bias) {
      ctx.score_offsets[i] = dot(p.item_bias[i].values(), std::span<const double>(ctx.x));
    }
  }

  switch (p.mixer.type) {
    case MixerType::Avg: break;
    case MixerType::Cross: {
      ctx.attn_query = project(p.attn_query, raw_query);
      const double scale = 1.0 / std::sqrt(static_cast<double>(p.d));
      for (std::size_t i = 0; i < n_mod; ++i) {
        ctx.attn_dirs.push_back(transposed(p.attn_key[i], ctx.attn_query, scale));
      }
      break;
    }
    case MixerType::MoE: {
      ctx.gate_query = project(p.gate_query, raw_query);
      for (std::size_t i = 0; i < n_mod; ++i) {
        ctx.gate_dirs.push_back(transposed(p.gate_item[i], ctx.gate_query));
      }
      ctx.noisy = with_noise && p.mixer.noise_enabled;
      if (ctx.noisy) {
        ctx.noise_query = project(p.noise_query, raw_query);
        for (std::size_t i = 0; i < n_mod; ++i) {
          ctx.noise_dirs.push_back(transposed(p.noise_item[i], ctx.noise_query));
        }
      }
      break;
    }
  }
  return ctx;
}

template <typename T, typename R>
void eval_item(const JamParamsT<T>& p, const QueryContext& ctx,
               std::span<const std::span<const R>> raw_item, std::span<const double> eps,
               const std::vector<std::uint8_t>* forced_mask, ItemEval& out) {
  const std::size_t n_mod = p.n_modalities();
  if (raw_item.size() != n_mod) fail(ErrorKind::Contract, "eval_item: modality count mismatch");
  out.modality_scores.resize(n_mod);
  for (std::size_t i = 0; i < n_mod; ++i) {
    if (raw_item[i].size() != ctx.score_dirs[i].size()) {
      fail(ErrorKind::Contract, "eval_item: raw modality dim mismatch");
    }
    out.modality_scores[i] = raw_dot(ctx.score_dirs[i], raw_item[i]) + ctx.score_offsets[i];
  }

  switch (p.mixer.type) {
    case MixerType::Avg:
      out.alpha.assign(n_mod, 1.0 / static_cast<double>(n_mod));
      break;
    case MixerType::Cross:
      out.logits.resize(n_mod);
      for (std::size_t i = 0; i < n_mod; ++i) out.logits[i] = raw_dot(ctx.attn_dirs[i], raw_item[i]);
      softmax_inplace(out.logits, out.alpha);
      break;
    case MixerType::MoE: {
      out.logits.resize(n_mod);
      out.eps.assign(n_mod, 0.0);
      out.noise_logits.assign(n_mod, 0.0);
      for (std::size_t i = 0; i < n_mod; ++i) {
        out.logits[i] = raw_dot(ctx.gate_dirs[i], raw_item[i]);
        if (ctx.noisy) {
          if (eps.size() != n_mod) fail(ErrorKind::Contract, "eval_item: noise draws missing");
          out.eps[i] = eps[i];
          out.noise_logits[i] = raw_dot(ctx.noise_dirs[i], raw_item[i]);
          out.logits[i] += eps[i] * softplus(out.noise_logits[i]);
        }
      }
      std::vector<double> masked = out.logits;
      if (forced_mask != nullptr) {
        out.kept = *forced_mask;
        for (std::size_t i = 0; i < n_mod; ++i) {
          if (!out.kept[i]) masked[i] = kMaskedLogit;
        }
      } else {
        const auto kept = keep_top_k(masked, p.mixer.k);
        out.kept.assign(n_mod, 0);
        for (auto i : kept) out.kept[i] = 1;
      }
      softmax_inplace(masked, out.alpha);
      break;
    }
  }
  out.score = 0.0;
  for (std::size_t i = 0; i < n_mod; ++i) out.score += out.alpha[i] * out.modality_scores[i];
}

template <typename T>
double score_item(const JamParamsT<T>& p, const QueryContext& ctx,
                  std::span<const std::span<const float>> raw_item, std::vector<double>& scratch) {
  const std::size_t n_mod = p.n_modalities();
  scratch.resize(2 * n_mod);
  double* s = scratch.data();
  double* l = scratch.data() + n_mod;
  for (std::size_t i = 0; i < n_mod; ++i) {
    s[i] = raw_dot(ctx.score_dirs[i], raw_item[i]) + ctx.score_offsets[i];
  }
  if (p.mixer.type == MixerType::Avg) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_mod; ++i) acc += s[i];
    return acc / static_cast<double>(n_mod);
  }
  const auto& dirs = p.mixer.type == MixerType::Cross ? ctx.attn_dirs : ctx.gate_dirs;
  for (std::size_t i = 0; i < n_mod; ++i) l[i] = raw_dot(dirs[i], raw_item[i]);
  if (p.mixer.type == MixerType::MoE && p.mixer.k < n_mod) {
    require(n_mod <= 64, "score_item: at most 64 modalities");
    // Same rule as keep_top_k: rank by value, ties to the lower index.
    std::uint64_t drop = 0;
    for (std::size_t i = 0; i < n_mod; ++i) {
      std::size_t better = 0;
      for (std::size_t j = 0; j < n_mod; ++j) {
        if (l[j] > l[i] || (l[j] == l[i] && j < i)) ++better;
      }
      if (better >= p.mixer.k) drop |= (std::uint64_t{1} << i);
    }
    for (std::size_t i = 0; i < n_mod; ++i) {
      if (drop & (std::uint64_t{1} << i)) l[i] = kMaskedLogit;
    }
  }
  double max_logit = kMaskedLogit;
  for (std::size_t i = 0; i < n_mod; ++i) max_logit = std::max(max_logit, l[i]);
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n_mod; ++i) {
    if (l[i] == kMaskedLogit) continue;
    const double w = std::exp(l[i] - max_logit);
    total += w;
    acc += w * s[i];
  }
  return acc / total;
}

template <typename T, typename R>
void accumulate_gradients(const JamParamsT<T>& p, const QueryContext& ctx,
                          std::span<const R> raw_user, std::span<const R> raw_query,
                          std::span<const std::vector<std::span<const R>>> raw_items,
                          std::span<const ItemEval> evals, std::span<const double> dscore,
                          JamGradients& g) {
  const std::size_t n_mod = p.n_modalities();
  const std::size_t n_items = evals.size();
  const std::span<const double> x(ctx.x);

  // Translation path: s_ji = x . (W_i t~_ji + b_i).
  std::vector<double> dx(p.d, 0.0);
  for (std::size_t i = 0; i < n_mod; ++i) {
    std::vector<double> a(p.item[i].cols(), 0.0);
    double c = 0.0;
    for (std::size_t j = 0; j < n_items; ++j) {
      const double w = dscore[j] * evals[j].alpha[i];
      axpy(a, w, raw_items[j][i]);
      c += w;
    }
    add_outer(g.item[i], x, std::span<const double>(a));
    add_matvec(dx, p.item[i], a);
    if (p.use_bias) {
      auto gb = g.item_bias[i].values();
      for (std::size_t r = 0; r < p.d; ++r) {
        gb[r] += c * x[r];
        dx[r] += c * double(p.item_bias[i](r, 0));
      }
    }
  }
  add_outer(g.query, std::span<const double>(dx), raw_query);
  if (!raw_user.empty()) add_outer(g.user, std::span<const double>(dx), raw_user);
  if (p.use_bias) {
    for (std::size_t r = 0; r < p.d; ++r) {
      g.query_bias(r, 0) += dx[r];
      if (!raw_user.empty()) g.user_bias(r, 0) += dx[r];
    }
  }
  if (p.mixer.type == MixerType::Avg) return;

  // Mixing-weight path: dlogit_ji = alpha_ji (dalpha_ji - sum_k alpha_jk dalpha_jk),
  // dalpha_ji = dscore_j * s_ji. Masked experts have alpha = 0 and get nothing.
  std::vector<std::vector<double>> dlogits(n_items, std::vector<double>(n_mod, 0.0));
  for (std::size_t j = 0; j < n_items; ++j) {
    const auto& e = evals[j];
    double mean = 0.0;
    for (std::size_t i = 0; i < n_mod; ++i) mean += e.alpha[i] * e.modality_scores[i];
    for (std::size_t i = 0; i < n_mod; ++i) {
      dlogits[j][i] = dscore[j] * e.alpha[i] * (e.modality_scores[i] - mean);
    }
  }

  if (p.mixer.type == MixerType::Cross) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.d));
    std::vector<double> dq(p.attn_query.rows(), 0.0);
    for (std::size_t i = 0; i < n_mod; ++i) {
      std::vector<double> b(p.attn_key[i].cols(), 0.0);
      for (std::size_t j = 0; j < n_items; ++j) axpy(b, dlogits[j][i], raw_items[j][i]);
      add_outer(g.attn_key[i], std::span<const double>(ctx.attn_query), std::span<const double>(b),
                scale);
      add_matvec(dq, p.attn_key[i], b, scale);
    }
    add_outer(g.attn_query, std::span<const double>(dq), raw_query);
    return;
  }

  // MoE: H_ji = x^gate_ji + eps_ji * softplus(x^noise_ji).
  std::vector<double> dgate_q(p.gate_query.rows(), 0.0);
  std::vector<double> dnoise_q(ctx.noisy ? p.noise_query.rows() : 0, 0.0);
  for (std::size_t i = 0; i < n_mod; ++i) {
    std::vector<double> bg(p.gate_item[i].cols(), 0.0);
    std::vector<double> bn(ctx.noisy ? p.noise_item[i].cols() : 0, 0.0);
    for (std::size_t j = 0; j < n_items; ++j) {
      axpy(bg, dlogits[j][i], raw_items[j][i]);
      if (ctx.noisy) {
        const double dn = dlogits[j][i] * evals[j].eps[i] * sigmoid(evals[j].noise_logits[i]);
        axpy(bn, dn, raw_items[j][i]);
      }
    }
    add_outer(g.gate_item[i], std::span<const double>(ctx.gate_query), std::span<const double>(bg));
    add_matvec(dgate_q, p.gate_item[i], bg);
    if (ctx.noisy) {
      add_outer(g.noise_item[i], std::span<const double>(ctx.noise_query),
                std::span<const double>(bn));
      add_matvec(dnoise_q, p.noise_item[i], bn);
    }
  }
  add_outer(g.gate_query, std::span<const double>(dgate_q), raw_query);
  if (ctx.noisy) add_outer(g.noise_query, std::span<const double>(dnoise_q), raw_query);
}

double bpr_loss_and_dscores(std::span<const double> scores, std::vector<double>& dscores) {
  require(!scores.empty(), "bpr: no scores");
  dscores.assign(scores.size(), 0.0);
  double loss = 0.0;
  for (std::size_t n = 1; n < scores.size(); ++n) {
    const double diff = scores[n] - scores[0];
    loss += softplus(diff);
    const double s = sigmoid(diff);
    dscores[n] = s;
    dscores[0] -= s;
  }
  return loss;
}

#define JAM_KERNEL_INSTANTIATE(T, R)                                                          \
  template QueryContext make_context<T, R>(const JamParamsT<T>&, std::span<const R>,           \
                                           std::span<const R>, bool);                          \
  template void eval_item<T, R>(const JamParamsT<T>&, const QueryContext&,                     \
                                std::span<const std::span<const R>>, std::span<const double>,  \
                                const std::vector<std::uint8_t>*, ItemEval&);                  \
  template void accumulate_gradients<T, R>(                                                    \
      const JamParamsT<T>&, const QueryContext&, std::span<const R>, std::span<const R>,       \
      std::span<const std::vector<std::span<const R>>>, std::span<const ItemEval>,             \
      std::span<const double>, JamGradients&);

JAM_KERNEL_INSTANTIATE(float, float)
JAM_KERNEL_INSTANTIATE(double, double)
#undef JAM_KERNEL_INSTANTIATE

template double score_item<float>(const JamParamsT<float>&, const QueryContext&,
                                  std::span<const std::span<const float>>, std::vector<double>&);

}  // namespace jam::kernel
