// SPDX-License-Identifier: Apache-2.0
#include "emod/losses.hpp"

#include <algorithm>
#include <cmath>

namespace emod {

namespace {
// Large enough that exp(x - max) underflows to exactly 0.0 in double for any
// realistic similarity scale, keeping masked terms out of the denominator.
constexpr double kMaskLogit = -1e9;
}  // namespace

LossVariant loss_variant_from_string(const std::string& name) {
  if (name == "softva") return LossVariant::SoftVA;
  if (name == "hardva") return LossVariant::HardVA;
  if (name == "augment") return LossVariant::Augment;
  if (name == "supcon") return LossVariant::SupCon;
  if (name == "crossentropy") return LossVariant::CrossEntropy;
  throw ConfigError("unknown loss variant '" + name + "'");
}

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::SoftVA: return "softva";
    case LossVariant::HardVA: return "hardva";
    case LossVariant::Augment: return "augment";
    case LossVariant::SupCon: return "supcon";
    case LossVariant::CrossEntropy: return "crossentropy";
  }
  return "?";
}

void LossConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("loss config: temperature must be > 0");
  if (!(max_distance > 0)) throw ConfigError("loss config: max_distance must be > 0");
}

WeightMatrix soft_weights(const std::vector<VaPoint>& va, double max_distance) {
  if (!(max_distance > 0)) throw ConfigError("soft_weights: max_distance must be > 0");
  const auto n = static_cast<Eigen::Index>(va.size());
  WeightMatrix out;
  out.w = Eigen::MatrixXd::Zero(n, n);
  out.d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = va_distance(va[static_cast<std::size_t>(i)], va[static_cast<std::size_t>(j)]);
      const double w = std::max(0.0, 1.0 - dist / max_distance);
      out.d(i, j) = out.d(j, i) = dist;
      out.w(i, j) = out.w(j, i) = w;
    }
  return out;
}

template <typename S>
Tensor<S> weighted_contrastive_loss(const Tensor<S>& z, const Eigen::MatrixXd& weights,
                                    double temperature) {
  if (!(temperature > 0)) throw ConfigError("contrastive loss: temperature must be > 0");
  if (z.rank() != 2) throw ShapeError("contrastive loss: embeddings must be [B, D]");
  const Index b = z.dim(0);
  if (b < 2) throw DegenerateBatchError("contrastive loss: need at least 2 samples");
  if (weights.rows() != b || weights.cols() != b)
    throw ShapeError("contrastive loss: weight matrix must be B x B");

  ArrayX<S> row_inv_mass(b);
  int active = 0;
  for (Index i = 0; i < b; ++i) {
    double mass = 0.0;
    for (Index j = 0; j < b; ++j)
      if (j != i) mass += weights(i, j);
    if (mass > 0.0) {
      row_inv_mass[i] = static_cast<S>(1.0 / mass);
      ++active;
    } else {
      row_inv_mass[i] = S(0);
    }
  }
  if (active == 0)
    throw DegenerateBatchError("contrastive loss: every anchor has zero positive mass");

  auto sim = scale(matmul(z, transpose(z)), static_cast<S>(1.0 / temperature));
  ArrayX<S> mask_values = ArrayX<S>::Zero(b * b);
  for (Index i = 0; i < b; ++i) mask_values[i * b + i] = static_cast<S>(kMaskLogit);
  auto masked = add(sim, Tensor<S>::from_array({b, b}, std::move(mask_values)));

  // stable log-sum-exp: the shift is a constant, so gradients stay exact
  ArrayX<S> row_max(b);
  for (Index i = 0; i < b; ++i) {
    S m = masked.values()[i * b];
    for (Index j = 1; j < b; ++j) m = std::max(m, masked.values()[i * b + j]);
    row_max[i] = m;
  }
  auto shift = Tensor<S>::from_array({b, 1}, std::move(row_max));
  auto lse = add(log(sum(exp(sub(masked, shift)), -1, true)), shift);  // [B,1]
  auto log_prob = sub(masked, lse);                                    // [B,B]

  ArrayX<S> w_values(b * b);
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j)
      w_values[i * b + j] = i == j ? S(0) : static_cast<S>(weights(i, j));
  auto weighted = mul(log_prob, Tensor<S>::from_array({b, b}, std::move(w_values)));
  auto per_anchor = mul(sum(weighted, -1), Tensor<S>::from_array({b}, std::move(row_inv_mass)));
  return scale(sum_all(per_anchor), static_cast<S>(-1.0 / active));
}

template <typename S>
Tensor<S> va_contrastive_loss(const Tensor<S>& z, const WeightMatrix& weights,
                              double temperature) {
  return weighted_contrastive_loss(z, weights.w, temperature);
}

template <typename S>
Tensor<S> supcon_loss(const Tensor<S>& z, const std::vector<int>& classes, double temperature) {
  const auto b = static_cast<Eigen::Index>(classes.size());
  if (z.dim(0) != b) throw ShapeError("supcon: one class per embedding row required");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j)
      if (i != j && classes[static_cast<std::size_t>(i)] == classes[static_cast<std::size_t>(j)])
        w(i, j) = 1.0;
  return weighted_contrastive_loss(z, w, temperature);
}

template <typename S>
Tensor<S> hard_va_loss(const Tensor<S>& z, const std::vector<VaPoint>& va, double max_distance,
                       double temperature) {
  if (!(max_distance > 0)) throw ConfigError("hard_va_loss: max_distance must be > 0");
  const auto b = static_cast<Eigen::Index>(va.size());
  if (z.dim(0) != b) throw ShapeError("hard_va_loss: one V-A point per embedding row required");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j)
      if (i != j &&
          va_distance(va[static_cast<std::size_t>(i)], va[static_cast<std::size_t>(j)]) <
              max_distance)
        w(i, j) = 1.0;
  return weighted_contrastive_loss(z, w, temperature);
}

template <typename S>
Tensor<S> nt_xent_loss(const Tensor<S>& z_views, double temperature) {
  const Index rows = z_views.dim(0);
  if (rows < 4 || rows % 2 != 0)
    throw DegenerateBatchError("nt_xent: need two views of at least 2 samples");
  const Index b = rows / 2;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(rows, rows);
  for (Index i = 0; i < b; ++i) {
    w(i, i + b) = 1.0;
    w(i + b, i) = 1.0;
  }
  return weighted_contrastive_loss(z_views, w, temperature);
}

template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B, K]");
  const Index b = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(targets.size()) != b)
    throw ShapeError("cross_entropy: one target per row required");
  ArrayX<S> onehot = ArrayX<S>::Zero(b * k);
  for (Index i = 0; i < b; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= k)
      throw DomainError("cross_entropy: target " + std::to_string(t) + " out of range [0," +
                        std::to_string(k) + ")");
    onehot[i * k + t] = S(1);
  }
  ArrayX<S> row_max(b);
  for (Index i = 0; i < b; ++i) {
    S m = logits.values()[i * k];
    for (Index j = 1; j < k; ++j) m = std::max(m, logits.values()[i * k + j]);
    row_max[i] = m;
  }
  auto shift = Tensor<S>::from_array({b, 1}, std::move(row_max));
  auto lse = add(log(sum(exp(sub(logits, shift)), -1, true)), shift);
  auto log_prob = sub(logits, lse);
  auto picked = mul(log_prob, Tensor<S>::from_array({b, k}, std::move(onehot)));
  return scale(sum_all(picked), static_cast<S>(-1.0 / static_cast<double>(b)));
}

#define EMOD_INSTANTIATE_LOSSES(S)                                                              \
  template Tensor<S> weighted_contrastive_loss<S>(const Tensor<S>&, const Eigen::MatrixXd&,    \
                                                  double);                                      \
  template Tensor<S> va_contrastive_loss<S>(const Tensor<S>&, const WeightMatrix&, double);    \
  template Tensor<S> supcon_loss<S>(const Tensor<S>&, const std::vector<int>&, double);        \
  template Tensor<S> hard_va_loss<S>(const Tensor<S>&, const std::vector<VaPoint>&, double,    \
                                     double);                                                  \
  template Tensor<S> nt_xent_loss<S>(const Tensor<S>&, double);                                \
  template Tensor<S> cross_entropy<S>(const Tensor<S>&, const std::vector<int>&);

EMOD_INSTANTIATE_LOSSES(float)
EMOD_INSTANTIATE_LOSSES(double)
#undef EMOD_INSTANTIATE_LOSSES

}  // namespace emod
