// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: the distance-weighted contrastive loss over the
// unified affective space, its binary-positive variant, class-supervised
// contrastive loss, two-view instance discrimination, and cross-entropy.
#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "emod/tensor.hpp"
#include "emod/va_space.hpp"

namespace emod {

enum class LossVariant { SoftVA, HardVA, Augment, SupCon, CrossEntropy };

LossVariant loss_variant_from_string(const std::string& name);
std::string to_string(LossVariant variant);

struct LossConfig {
  double temperature = 0.07;
  double max_distance = 5.0;  // affective radius beyond which pairs are negatives
  LossVariant variant = LossVariant::SoftVA;

  void validate() const;
};

// Pairwise soft weights w_ij = max(0, 1 - d_ij / max_distance) with zero
// diagonal, plus the distance matrix they came from.
struct WeightMatrix {
  Eigen::MatrixXd w;
  Eigen::MatrixXd d;
};

WeightMatrix soft_weights(const std::vector<VaPoint>& va, double max_distance);

// Shared core: per anchor i, -1/sum_j(w_ij) * sum_j w_ij * log softmax_j
// (z_i.z_j / tau) over j != i, averaged over anchors with positive weight
// mass; anchors with zero mass are skipped. Throws DegenerateBatchError when
// every anchor is skipped. Differentiable w.r.t. z.
template <typename S>
Tensor<S> weighted_contrastive_loss(const Tensor<S>& z, const Eigen::MatrixXd& weights,
                                    double temperature);

template <typename S>
Tensor<S> va_contrastive_loss(const Tensor<S>& z, const WeightMatrix& weights, double temperature);

template <typename S>
Tensor<S> supcon_loss(const Tensor<S>& z, const std::vector<int>& classes, double temperature);

template <typename S>
Tensor<S> hard_va_loss(const Tensor<S>& z, const std::vector<VaPoint>& va, double max_distance,
                       double temperature);

// Two-view instance discrimination (NT-Xent): rows [0,B) and [B,2B) hold the
// two augmented views; the positive of row i is its partner view.
template <typename S>
Tensor<S> nt_xent_loss(const Tensor<S>& z_views, double temperature);

// Mean of -log softmax(logits)[target], numerically stable.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets);

}  // namespace emod
