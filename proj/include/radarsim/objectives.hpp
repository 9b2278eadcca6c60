#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "radarsim/grid.hpp"
#include "radarsim/nn/tensor.hpp"

namespace radarsim {

// Trade-off weights of the combined generator objective; the forward
// adversarial term carries an implicit weight of 1.
struct LossWeights {
  double lambda_gw = 1.0;
  double lambda_cx = 10.0;
  double lambda_cw = 10.0;
  double lambda_aw = 10.0;

  void validate() const {
    if (lambda_gw < 0 || lambda_cx < 0 || lambda_cw < 0 || lambda_aw < 0)
      throw std::invalid_argument("LossWeights: weights must be non-negative");
  }
};

enum class Term { a_x, a_w, g_x, g_w, c_x, c_w };

struct LossBreakdown {
  std::optional<double> a_x, a_w, g_x, g_w, c_x, c_w, d_x, d_w;
  double total = 0.0;
};

// Least-squares discriminator objective: mean (s-1)^2 over real patches plus
// mean s^2 over fake patches, the two expectation terms summed without a 1/2
// factor.
inline double lsgan_discriminator_loss(std::span<const float> real_scores,
                                       std::span<const float> fake_scores) {
  if (real_scores.empty() || fake_scores.empty())
    throw std::invalid_argument("lsgan_discriminator_loss: empty scores");
  double lr = 0, lf = 0;
  for (float s : real_scores) lr += (s - 1.0) * (s - 1.0);
  for (float s : fake_scores) lf += static_cast<double>(s) * s;
  return lr / static_cast<double>(real_scores.size()) + lf / static_cast<double>(fake_scores.size());
}

// Least-squares generator objective: mean (s-1)^2 over fake patches.
inline double lsgan_generator_loss(std::span<const float> fake_scores) {
  if (fake_scores.empty()) throw std::invalid_argument("lsgan_generator_loss: empty scores");
  double l = 0;
  for (float s : fake_scores) l += (s - 1.0) * (s - 1.0);
  return l / static_cast<double>(fake_scores.size());
}

// d(loss)/d(score) companions; same normalization as the scalar ops.
inline void lsgan_generator_loss_grad(std::span<const float> fake_scores, float scale,
                                      std::span<float> grad_out) {
  const float n = static_cast<float>(fake_scores.size());
  for (size_t k = 0; k < fake_scores.size(); ++k)
    grad_out[k] = scale * 2.0f * (fake_scores[k] - 1.0f) / n;
}

inline void lsgan_discriminator_loss_grad(std::span<const float> real_scores,
                                          std::span<const float> fake_scores,
                                          std::span<float> grad_real_out,
                                          std::span<float> grad_fake_out) {
  const float nr = static_cast<float>(real_scores.size());
  const float nf = static_cast<float>(fake_scores.size());
  for (size_t k = 0; k < real_scores.size(); ++k)
    grad_real_out[k] = 2.0f * (real_scores[k] - 1.0f) / nr;
  for (size_t k = 0; k < fake_scores.size(); ++k) grad_fake_out[k] = 2.0f * fake_scores[k] / nf;
}

// Mean absolute difference over all cells. The norm of the source objective
// is realized as a per-cell mean so weights keep their meaning across grid
// sizes.
inline double l1_mean(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("l1_mean: shape mismatch or empty");
  double s = 0;
  for (size_t k = 0; k < a.size(); ++k) s += std::abs(static_cast<double>(a[k]) - b[k]);
  return s / static_cast<double>(a.size());
}

// d/da of l1_mean(a, b), scaled; sign(0) treated as 0.
inline void l1_mean_grad(std::span<const float> a, std::span<const float> b, float scale,
                         std::span<float> grad_out) {
  const float n = static_cast<float>(a.size());
  for (size_t k = 0; k < a.size(); ++k) {
    const float d = a[k] - b[k];
    grad_out[k] = d > 0 ? scale / n : (d < 0 ? -scale / n : 0.0f);
  }
}

inline double cycle_consistency_loss(const Grid& original, const Grid& reconstructed) {
  if (original.rows != reconstructed.rows || original.cols != reconstructed.cols)
    throw std::invalid_argument("cycle_consistency_loss: shape mismatch");
  return l1_mean(original.v, reconstructed.v);
}

// Mean absolute difference over measured cells only; 0 when nothing is
// measured.
inline double masked_l1_mean(std::span<const float> pred, std::span<const float> y,
                             std::span<const float> mask) {
  if (pred.size() != y.size() || pred.size() != mask.size())
    throw std::invalid_argument("masked_l1_mean: shape mismatch");
  double s = 0;
  size_t n = 0;
  for (size_t k = 0; k < pred.size(); ++k) {
    if (mask[k] != 0.0f) {
      s += std::abs(static_cast<double>(pred[k]) - y[k]);
      ++n;
    }
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

inline void masked_l1_mean_grad(std::span<const float> pred, std::span<const float> y,
                                std::span<const float> mask, float scale,
                                std::span<float> grad_out) {
  size_t n = 0;
  for (size_t k = 0; k < mask.size(); ++k)
    if (mask[k] != 0.0f) ++n;
  for (size_t k = 0; k < pred.size(); ++k) {
    if (mask[k] == 0.0f || n == 0) {
      grad_out[k] = 0.0f;
      continue;
    }
    const float d = pred[k] - y[k];
    grad_out[k] = d > 0 ? scale / n : (d < 0 ? -scale / n : 0.0f);
  }
}

inline double masked_alignment_loss(const ElevationMap& pred, const PartialElevationMap& y) {
  if (pred.heights.rows != y.heights.rows || pred.heights.cols != y.heights.cols)
    throw std::invalid_argument("masked_alignment_loss: shape mismatch");
  return masked_l1_mean(pred.heights.v, y.heights.v, y.mask.v);
}

// Paired MAE between simulated and real radar; the regression objective of
// the aligned ablations.
inline double paired_regression_loss(const RadarFrame& x_sim, const RadarFrame& x_real) {
  if (x_sim.power.rows != x_real.power.rows || x_sim.power.cols != x_real.power.cols)
    throw std::invalid_argument("paired_regression_loss: shape mismatch");
  return l1_mean(x_sim.power.v, x_real.power.v);
}

// total = G_x + lambda_gw*G_w + lambda_cx*C_x + lambda_cw*C_w + lambda_aw*A_w,
// restricted to the active terms; A_x (aligned ablations only) enters with
// unit weight. Inactive terms contribute exactly 0.
inline LossBreakdown combined_generator_objective(const LossBreakdown& parts,
                                                  const LossWeights& weights,
                                                  const std::set<Term>& active_terms) {
  weights.validate();
  LossBreakdown out = parts;
  auto need = [&](Term t, const std::optional<double>& part, const char* name) -> double {
    if (!active_terms.count(t)) return 0.0;
    if (!part) throw std::invalid_argument(std::string("combined objective: missing part ") + name);
    return *part;
  };
  out.total = need(Term::a_x, parts.a_x, "a_x") + need(Term::g_x, parts.g_x, "g_x") +
              weights.lambda_gw * need(Term::g_w, parts.g_w, "g_w") +
              weights.lambda_cx * need(Term::c_x, parts.c_x, "c_x") +
              weights.lambda_cw * need(Term::c_w, parts.c_w, "c_w") +
              weights.lambda_aw * need(Term::a_w, parts.a_w, "a_w");
  return out;
}

// Mean over cells of weight(label) * (-log softmax(logits)[label]); all three
// classes are supervised targets. Weights indexed by Occupancy value.
inline double weighted_cross_entropy(const nn::Tensor<float>& logits,
                                     const std::vector<const OccupancyGrid*>& labels,
                                     const double class_weights[3]) {
  if (logits.c != 3 || static_cast<size_t>(logits.n) != labels.size())
    throw std::invalid_argument("weighted_cross_entropy: shape mismatch");
  for (int k = 0; k < 3; ++k)
    if (!(class_weights[k] > 0))
      throw std::invalid_argument("weighted_cross_entropy: weights must be positive");
  double total = 0;
  const size_t plane = static_cast<size_t>(logits.h) * logits.w;
  for (int in = 0; in < logits.n; ++in) {
    const OccupancyGrid& lab = *labels[in];
    if (lab.rows != logits.h || lab.cols != logits.w)
      throw std::invalid_argument("weighted_cross_entropy: label shape mismatch");
    const float* l0 = logits.plane(in, 0);
    const float* l1 = logits.plane(in, 1);
    const float* l2 = logits.plane(in, 2);
    for (size_t k = 0; k < plane; ++k) {
      const double m = std::max(l0[k], std::max(l1[k], l2[k]));
      const double z =
          std::exp(l0[k] - m) + std::exp(l1[k] - m) + std::exp(l2[k] - m);
      const int cls = static_cast<int>(lab.labels[k]);
      const double logit = cls == 0 ? l0[k] : (cls == 1 ? l1[k] : l2[k]);
      total += class_weights[cls] * (std::log(z) - (logit - m));
    }
  }
  return total / (static_cast<double>(logits.n) * plane);
}

inline double weighted_cross_entropy(const nn::Tensor<float>& logits, const OccupancyGrid& labels,
                                     const double class_weights[3]) {
  std::vector<const OccupancyGrid*> ls{&labels};
  return weighted_cross_entropy(logits, ls, class_weights);
}

// d(loss)/d(logits): weight(label) * (softmax - onehot(label)) / cell count.
inline nn::Tensor<float> weighted_cross_entropy_grad(const nn::Tensor<float>& logits,
                                                     const std::vector<const OccupancyGrid*>& labels,
                                                     const double class_weights[3]) {
  nn::Tensor<float> g(logits.n, logits.c, logits.h, logits.w);
  const size_t plane = static_cast<size_t>(logits.h) * logits.w;
  const double inv_n = 1.0 / (static_cast<double>(logits.n) * plane);
  for (int in = 0; in < logits.n; ++in) {
    const OccupancyGrid& lab = *labels[in];
    const float* l[3] = {logits.plane(in, 0), logits.plane(in, 1), logits.plane(in, 2)};
    float* go[3] = {g.plane(in, 0), g.plane(in, 1), g.plane(in, 2)};
    for (size_t k = 0; k < plane; ++k) {
      const double m = std::max(l[0][k], std::max(l[1][k], l[2][k]));
      double e[3], z = 0;
      for (int c = 0; c < 3; ++c) {
        e[c] = std::exp(l[c][k] - m);
        z += e[c];
      }
      const int cls = static_cast<int>(lab.labels[k]);
      const double wgt = class_weights[cls] * inv_n;
      for (int c = 0; c < 3; ++c)
        go[c][k] = static_cast<float>(wgt * (e[c] / z - (c == cls ? 1.0 : 0.0)));
    }
  }
  return g;
}

}  // namespace radarsim
