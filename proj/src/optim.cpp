// SPDX-License-Identifier: Apache-2.0
#include "emod/optim.hpp"

#include <cmath>

namespace emod {

template <typename S>
void AdamW<S>::step(Params& params) {
  if (slots_.empty()) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots_[i].m = ArrayX<S>::Zero(params[i].second.size());
      slots_[i].v = ArrayX<S>::Zero(params[i].second.size());
    }
  }
  if (slots_.size() != params.size())
    throw ShapeError("adamw: parameter list changed size mid-training");
  ++step_;
  const S lr = static_cast<S>(cfg_.lr);
  const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
  const S eps = static_cast<S>(cfg_.eps);
  const S bc1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(step_)));
  const S bc2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(step_)));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].second;
    auto& slot = slots_[i];
    if (slot.m.size() != tensor.size())
      throw ShapeError("adamw: parameter '" + params[i].first + "' changed shape");
    auto& theta = tensor.values_mut();
    // decoupled decay, applied independently of the adaptive step
    if (cfg_.weight_decay != 0.0) theta *= (S(1) - lr * static_cast<S>(cfg_.weight_decay));
    if (!tensor.has_grad()) continue;
    const auto& g = tensor.grad();
    slot.m = b1 * slot.m + (S(1) - b1) * g;
    slot.v = b2 * slot.v + (S(1) - b2) * g * g;
    theta -= lr * (slot.m / bc1) / ((slot.v / bc2).sqrt() + eps);
  }
}

template class AdamW<float>;
template class AdamW<double>;

double cosine_lr(long step, long total_steps, double lr_max, double lr_min) {
  if (total_steps < 1) throw ConfigError("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0," +
                      std::to_string(total_steps) + "]");
  const double phase = 3.141592653589793238462643383279502884 * static_cast<double>(step) /
                       static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

template <typename S>
double clip_gradients(std::vector<std::pair<std::string, Tensor<S>>>& params, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (auto& [name, t] : params)
    if (t.has_grad()) sq += static_cast<double>(t.grad().template cast<double>().square().sum());
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto& [name, t] : params)
      if (t.has_grad()) {
        auto& node = *t.node();
        node.grad *= factor;
      }
  }
  return norm;
}

template double clip_gradients<float>(std::vector<std::pair<std::string, Tensor<float>>>&, double);
template double clip_gradients<double>(std::vector<std::pair<std::string, Tensor<double>>>&,
                                       double);

}  // namespace emod
