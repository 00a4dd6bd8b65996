// SPDX-License-Identifier: Apache-2.0
//
// Classification metrics (balanced accuracy, Cohen's kappa, weighted F1) and
// the embedding-quality Spearman probe.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "emod/errors.hpp"
#include "emod/va_space.hpp"

namespace emod {

// K x K counts; rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);
  static ConfusionMatrix from_predictions(const std::vector<int>& truth,
                                          const std::vector<int>& predicted, int classes);

  void add(int truth, int predicted, long long count = 1);
  long long at(int truth, int predicted) const;
  long long total() const;
  long long row_sum(int truth) const;
  long long col_sum(int predicted) const;
  int classes() const { return k_; }

 private:
  int k_;
  std::vector<long long> counts_;
};

// Mean per-class recall. Classes without true samples are excluded and noted
// in *warnings when provided.
double bacc(const ConfusionMatrix& cm, std::vector<std::string>* warnings = nullptr);

// (p_o - p_e) / (1 - p_e); returns 0 with a warning when p_e == 1.
double kappa(const ConfusionMatrix& cm, std::vector<std::string>* warnings = nullptr);

// Support-weighted mean of per-class F1; zero-denominator terms contribute 0.
double weighted_f1(const ConfusionMatrix& cm, std::vector<std::string>* warnings = nullptr);

struct MetricsReport {
  double bacc = 0.0;
  double kappa = 0.0;
  double wf1 = 0.0;
  long long n = 0;
  struct PerClass {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    long long support = 0;
  };
  std::vector<PerClass> per_class;
  std::vector<std::string> warnings;
};

MetricsReport evaluate(const ConfusionMatrix& cm);
std::string metrics_report_json(const MetricsReport& report);

// Spearman rank correlation between pairwise embedding distances
// (1 - z_i . z_j, rows assumed unit norm) and pairwise V-A distances, with
// average-rank tie handling. Needs at least 10 samples.
double spearman_probe(const std::vector<Eigen::VectorXd>& embeddings,
                      const std::vector<VaPoint>& va);

// Spearman correlation of two equally long value sequences (average ranks).
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace emod
