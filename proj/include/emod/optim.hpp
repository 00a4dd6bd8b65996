// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay, cosine annealing, and global-norm
// gradient clipping.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "emod/tensor.hpp"

namespace emod {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <typename S>
class AdamW {
 public:
  using Params = std::vector<std::pair<std::string, Tensor<S>>>;

  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long steps() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

  // One update over all parameters; a parameter without a populated gradient
  // is treated as having zero gradient.
  void step(Params& params);

 private:
  struct Slot {
    ArrayX<S> m, v;
  };
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  long step_ = 0;
};

// lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi * step / total_steps)).
double cosine_lr(long step, long total_steps, double lr_max, double lr_min);

// Scales every gradient by max_norm / norm when the global L2 norm exceeds
// max_norm; returns the pre-clip norm.
template <typename S>
double clip_gradients(std::vector<std::pair<std::string, Tensor<S>>>& params, double max_norm);

}  // namespace emod
