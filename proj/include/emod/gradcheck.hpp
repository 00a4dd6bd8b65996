// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of reverse-mode gradients. The
// reference direction only ever evaluates the forward pass, so it stays
// independent of the backward implementation it checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "emod/tensor.hpp"

namespace emod {

struct GradCheckReport {
  long checks = 0;
  long failures = 0;
  double worst_rel = 0.0;
  std::vector<std::string> messages;

  bool ok() const { return failures == 0; }
  void merge(const GradCheckReport& other) {
    checks += other.checks;
    failures += other.failures;
    worst_rel = std::max(worst_rel, other.worst_rel);
    messages.insert(messages.end(), other.messages.begin(), other.messages.end());
  }
};

// Rebuilds the loss via `forward`, backpropagates once, then compares the
// analytic gradient of every listed leaf entry against a central difference.
// Entries pass when |fd - bp| <= atol or the relative error is below rtol.
inline GradCheckReport check_gradients(const std::function<Tensor<double>()>& forward,
                                       std::vector<Tensor<double>> leaves,
                                       const std::string& label, double h = 1e-5,
                                       double rtol = 1e-4, double atol = 1e-7,
                                       long max_entries_per_leaf = 0) {
  GradCheckReport report;
  for (auto& leaf : leaves) leaf.zero_grad();
  auto loss = forward();
  backward(loss);
  std::vector<ArrayX<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves)
    analytic.push_back(leaf.has_grad() ? leaf.grad() : ArrayX<double>::Zero(leaf.size()));

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const Index n = leaf.size();
    const Index step =
        (max_entries_per_leaf > 0 && n > max_entries_per_leaf) ? n / max_entries_per_leaf : 1;
    for (Index i = 0; i < n; i += step) {
      const double orig = leaf.values_mut()[i];
      leaf.values_mut()[i] = orig + h;
      const double fp = forward().scalar_value();
      leaf.values_mut()[i] = orig - h;
      const double fm = forward().scalar_value();
      leaf.values_mut()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double bp = analytic[li][i];
      const double diff = std::abs(fd - bp);
      const double rel = diff / std::max({std::abs(fd), std::abs(bp), 1e-12});
      ++report.checks;
      if (diff > atol && rel > rtol) {
        ++report.failures;
        report.messages.push_back(label + ": leaf " + std::to_string(li) + " entry " +
                                  std::to_string(i) + " fd=" + std::to_string(fd) +
                                  " bp=" + std::to_string(bp) + " rel=" + std::to_string(rel));
      }
      if (diff > atol) report.worst_rel = std::max(report.worst_rel, rel);
    }
  }
  return report;
}

// Finite-difference suite over every differentiable primitive and composite,
// repeated across seeds with randomized shapes and values.
GradCheckReport run_op_gradient_suite(std::uint64_t base_seed, int n_seeds);

// End-to-end check: full encoder plus the distance-weighted contrastive loss
// on a small batch, sampling entries of randomly chosen parameters.
GradCheckReport run_end_to_end_gradcheck(std::uint64_t seed, int params_to_check = 32);

}  // namespace emod
