// SPDX-License-Identifier: Apache-2.0
//
// Scalar reference implementations of the training objectives, written as
// plain loops over Eigen vectors. They share no code with the tensor-graph
// implementations they are used to verify.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace emod::oracle {

inline double weighted_contrastive(const std::vector<Eigen::VectorXd>& z,
                                   const Eigen::MatrixXd& w, double tau) {
  const int b = static_cast<int>(z.size());
  double total = 0.0;
  int active = 0;
  for (int i = 0; i < b; ++i) {
    double mass = 0.0;
    for (int j = 0; j < b; ++j)
      if (j != i) mass += w(i, j);
    if (mass <= 0.0) continue;
    ++active;
    double denom = 0.0;
    for (int k = 0; k < b; ++k)
      if (k != i) denom += std::exp(z[i].dot(z[k]) / tau);
    double inner = 0.0;
    for (int j = 0; j < b; ++j)
      if (j != i) inner += w(i, j) * std::log(std::exp(z[i].dot(z[j]) / tau) / denom);
    total += -inner / mass;
  }
  return total / active;
}

inline double supcon(const std::vector<Eigen::VectorXd>& z, const std::vector<int>& classes,
                     double tau) {
  const int b = static_cast<int>(z.size());
  double total = 0.0;
  int active = 0;
  for (int i = 0; i < b; ++i) {
    std::vector<int> positives;
    for (int p = 0; p < b; ++p)
      if (p != i && classes[p] == classes[i]) positives.push_back(p);
    if (positives.empty()) continue;
    ++active;
    double denom = 0.0;
    for (int a = 0; a < b; ++a)
      if (a != i) denom += std::exp(z[i].dot(z[a]) / tau);
    double inner = 0.0;
    for (int p : positives) inner += std::log(std::exp(z[i].dot(z[p]) / tau) / denom);
    total += -inner / static_cast<double>(positives.size());
  }
  return total / active;
}

inline double nt_xent(const std::vector<Eigen::VectorXd>& views, double tau) {
  const int n = static_cast<int>(views.size());
  const int b = n / 2;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int partner = i < b ? i + b : i - b;
    double denom = 0.0;
    for (int k = 0; k < n; ++k)
      if (k != i) denom += std::exp(views[i].dot(views[k]) / tau);
    total += -std::log(std::exp(views[i].dot(views[partner]) / tau) / denom);
  }
  return total / n;
}

inline double cross_entropy(const std::vector<Eigen::VectorXd>& logits,
                            const std::vector<int>& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double denom = 0.0;
    for (Eigen::Index k = 0; k < logits[i].size(); ++k) denom += std::exp(logits[i][k]);
    total += -std::log(std::exp(logits[i][targets[i]]) / denom);
  }
  return total / static_cast<double>(logits.size());
}

}  // namespace emod::oracle
