// SPDX-License-Identifier: Apache-2.0
#include "emod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace emod {

ConfusionMatrix::ConfusionMatrix(int classes) : k_(classes) {
  if (classes < 1) throw ConfigError("confusion matrix: need at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

ConfusionMatrix ConfusionMatrix::from_predictions(const std::vector<int>& truth,
                                                  const std::vector<int>& predicted, int classes) {
  if (truth.size() != predicted.size())
    throw ShapeError("confusion matrix: truth/prediction length mismatch");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted, long long count) {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_)
    throw DomainError("confusion matrix: class index out of range");
  if (count < 0) throw DomainError("confusion matrix: negative count");
  counts_[static_cast<std::size_t>(truth) * k_ + predicted] += count;
}

long long ConfusionMatrix::at(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth) * k_ + predicted];
}

long long ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), 0LL);
}

long long ConfusionMatrix::row_sum(int truth) const {
  long long s = 0;
  for (int j = 0; j < k_; ++j) s += at(truth, j);
  return s;
}

long long ConfusionMatrix::col_sum(int predicted) const {
  long long s = 0;
  for (int i = 0; i < k_; ++i) s += at(i, predicted);
  return s;
}

namespace {
void require_nonempty(const ConfusionMatrix& cm, const char* what) {
  if (cm.total() == 0) throw DomainError(std::string(what) + ": empty confusion matrix");
}
}  // namespace

double bacc(const ConfusionMatrix& cm, std::vector<std::string>* warnings) {
  require_nonempty(cm, "bacc");
  double acc = 0.0;
  int counted = 0;
  for (int c = 0; c < cm.classes(); ++c) {
    const long long support = cm.row_sum(c);
    if (support == 0) {
      if (warnings)
        warnings->push_back("bacc: class " + std::to_string(c) + " has no true samples, excluded");
      continue;
    }
    acc += static_cast<double>(cm.at(c, c)) / static_cast<double>(support);
    ++counted;
  }
  if (counted == 0) throw DomainError("bacc: no class has true samples");
  return acc / counted;
}

double kappa(const ConfusionMatrix& cm, std::vector<std::string>* warnings) {
  require_nonempty(cm, "kappa");
  const double total = static_cast<double>(cm.total());
  double po = 0.0, pe = 0.0;
  for (int c = 0; c < cm.classes(); ++c) {
    po += static_cast<double>(cm.at(c, c));
    pe += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c));
  }
  po /= total;
  pe /= total * total;
  if (pe >= 1.0) {
    if (warnings) warnings->push_back("kappa: degenerate agreement (p_e = 1), returning 0");
    return 0.0;
  }
  return (po - pe) / (1.0 - pe);
}

double weighted_f1(const ConfusionMatrix& cm, std::vector<std::string>* warnings) {
  require_nonempty(cm, "weighted_f1");
  const double total = static_cast<double>(cm.total());
  double wf1 = 0.0;
  for (int c = 0; c < cm.classes(); ++c) {
    const long long support = cm.row_sum(c);
    if (support == 0) continue;
    const long long predicted = cm.col_sum(c);
    const double tp = static_cast<double>(cm.at(c, c));
    const double precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    const double recall = tp / static_cast<double>(support);
    double f1 = 0.0;
    if (precision + recall > 0.0) {
      f1 = 2.0 * precision * recall / (precision + recall);
    } else if (warnings) {
      warnings->push_back("weighted_f1: class " + std::to_string(c) +
                          " has zero precision+recall, contributing 0");
    }
    wf1 += static_cast<double>(support) / total * f1;
  }
  return wf1;
}

MetricsReport evaluate(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.n = cm.total();
  r.bacc = bacc(cm, &r.warnings);
  r.kappa = kappa(cm, &r.warnings);
  r.wf1 = weighted_f1(cm, &r.warnings);
  for (int c = 0; c < cm.classes(); ++c) {
    MetricsReport::PerClass pc;
    pc.support = cm.row_sum(c);
    const long long predicted = cm.col_sum(c);
    const double tp = static_cast<double>(cm.at(c, c));
    pc.recall = pc.support > 0 ? tp / static_cast<double>(pc.support) : 0.0;
    pc.precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    pc.f1 = (pc.precision + pc.recall) > 0.0
                ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                : 0.0;
    r.per_class.push_back(pc);
  }
  return r;
}

std::string metrics_report_json(const MetricsReport& report) {
  nlohmann::json j;
  j["bacc"] = report.bacc;
  j["kappa"] = report.kappa;
  j["wf1"] = report.wf1;
  j["n"] = report.n;
  j["per_class"] = nlohmann::json::array();
  for (const auto& pc : report.per_class)
    j["per_class"].push_back({{"recall", pc.recall},
                              {"precision", pc.precision},
                              {"f1", pc.f1},
                              {"support", pc.support}});
  if (!report.warnings.empty()) j["warnings"] = report.warnings;
  return j.dump(2);
}

namespace {

// Average ranks (1-based) with ties sharing the mean rank of their run.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2) throw ConfigError("spearman: need at least 2 values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma, db = rb[i] - mb;
    num += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return num / std::sqrt(va * vb);
}

double spearman_probe(const std::vector<Eigen::VectorXd>& embeddings,
                      const std::vector<VaPoint>& va) {
  if (embeddings.size() != va.size()) throw ShapeError("spearman_probe: length mismatch");
  if (embeddings.size() < 10) throw ConfigError("spearman_probe: need at least 10 samples");
  std::vector<double> zd, vd;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      zd.push_back(1.0 - embeddings[i].dot(embeddings[j]));
      vd.push_back(va_distance(va[i], va[j]));
    }
  return spearman_correlation(zd, vd);
}

}  // namespace emod
