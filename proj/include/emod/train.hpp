// SPDX-License-Identifier: Apache-2.0
//
// Training loops: region-balanced contrastive pretraining over multiple
// datasets, full-model fine-tuning with a linear head, and a linear probe for
// representation quality.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emod/dataio.hpp"
#include "emod/losses.hpp"
#include "emod/metrics.hpp"
#include "emod/model.hpp"
#include "emod/optim.hpp"

namespace emod {

struct TrainConfig {
  double lr_max = 5e-4;
  double lr_min = 1e-7;
  double weight_decay = 1e-4;
  double clip_norm = 3.0;
  int epochs = 100;
  int steps_per_epoch = 0;  // 0 = ceil(training segments / batch size)
  int rounds_m = 4;         // sampling rounds per dataset and region
  LossConfig loss;
  int probe_size = 48;  // held-out segments for the epoch-wise Spearman probe
  std::uint64_t seed = 1;
  int degenerate_limit = 25;

  double finetune_lr = 1e-4;
  int finetune_epochs = 30;
  int finetune_batch = 32;
  double val_fraction = 0.2;

  static TrainConfig desk_profile();
  static TrainConfig paper_profile();
  void validate() const;
  // Applies JSON overrides onto *this; unknown fields raise ConfigError
  // naming the offending field.
  void apply_json_file(const std::string& path);
};

struct AugmentConfig {
  double min_crop_fraction = 0.8;   // random time crop-and-resize
  double noise_sigma_fraction = 0.05;  // Gaussian noise, fraction of signal std
  double channel_dropout_p = 0.1;
};

// One stochastic view of a segment for instance discrimination.
Eigen::MatrixXf augment_view(const Eigen::MatrixXf& data, const AugmentConfig& cfg, Rng& rng);

struct PretrainResult {
  std::vector<double> loss_per_step;
  std::vector<double> lr_per_epoch;
  std::vector<double> spearman_per_epoch;
  long steps = 0;
  double max_post_clip_norm = 0.0;
};

// Registers every dataset's channels, holds out a probe set, then runs the
// sampled contrastive loop: encode batch, variant loss, backward, clip,
// AdamW, cosine schedule per epoch. Writes NDJSON lines
// {step, epoch, lr, loss, spearman, wall_ms} to *log when given.
template <typename S>
PretrainResult pretrain(EmodModel<S>& model, std::vector<Dataset>& datasets,
                        const TrainConfig& cfg, std::ostream* log = nullptr);

struct FinetuneResult {
  int n_classes = 0;
  int best_epoch = -1;  // -1 = the untrained head was never improved on
  MetricsReport best;
  std::vector<MetricsReport> per_epoch;
};

// Class labels for one dataset: discrete categories by manifest order, or the
// V-A quadrant for continuous labels.
std::vector<int> dataset_classes(const Dataset& ds, int* n_classes);

// Appends a linear head and optimizes the whole model with cross-entropy on a
// deterministic train/validation split; model selection by validation kappa.
template <typename S>
FinetuneResult finetune(EmodModel<S>& model, Dataset& dataset, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

// Multinomial logistic regression on frozen pooled features; returns
// validation metrics. Split and seeding mirror finetune.
template <typename S>
MetricsReport linear_probe(EmodModel<S>& model, Dataset& dataset, const TrainConfig& cfg);

// Unit-norm contrastive embeddings for every segment (evaluation mode).
template <typename S>
std::vector<Eigen::VectorXd> extract_embeddings(EmodModel<S>& model, const Dataset& dataset);

// ---------------------------------------------------------------------------
// trained-model bundle: checkpoint + sidecar JSON describing config, channel
// registry, and head metadata
// ---------------------------------------------------------------------------

struct BundleInfo {
  ModelConfig config;
  std::vector<std::string> channels;
  int head_classes = 0;
  std::string task;  // "quadrant" or "categories"
  std::vector<std::string> categories;
};

template <typename S>
void save_model_bundle(const EmodModel<S>& model, const std::string& dir, const std::string& task,
                       const std::vector<std::string>& categories);

BundleInfo read_bundle_info(const std::string& dir);

template <typename S>
EmodModel<S> load_model_bundle(const std::string& dir);

}  // namespace emod
