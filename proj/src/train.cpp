// SPDX-License-Identifier: Apache-2.0
#include "emod/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "emod/checkpoint.hpp"
#include "emod/sampler.hpp"

namespace emod {

namespace fs = std::filesystem;
using nlohmann::json;

TrainConfig TrainConfig::desk_profile() {
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.steps_per_epoch = 4;
  cfg.rounds_m = 2;
  cfg.probe_size = 48;
  cfg.finetune_epochs = 20;
  return cfg;
}

TrainConfig TrainConfig::paper_profile() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (!(lr_min < lr_max)) throw ConfigError("train config: lr_min must be < lr_max");
  if (!(clip_norm > 0)) throw ConfigError("train config: clip_norm must be > 0");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (rounds_m < 1) throw ConfigError("train config: rounds_m must be >= 1");
  if (steps_per_epoch < 0) throw ConfigError("train config: steps_per_epoch must be >= 0");
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw ConfigError("train config: val_fraction must be in (0,1)");
  if (finetune_batch < 1) throw ConfigError("train config: finetune_batch must be >= 1");
  loss.validate();
}

void TrainConfig::apply_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("train config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("train config: invalid JSON: " + std::string(e.what()));
  }
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr_max") lr_max = value.get<double>();
      else if (key == "lr_min") lr_min = value.get<double>();
      else if (key == "weight_decay") weight_decay = value.get<double>();
      else if (key == "clip_norm") clip_norm = value.get<double>();
      else if (key == "epochs") epochs = value.get<int>();
      else if (key == "steps_per_epoch") steps_per_epoch = value.get<int>();
      else if (key == "rounds_m") rounds_m = value.get<int>();
      else if (key == "temperature") loss.temperature = value.get<double>();
      else if (key == "max_distance") loss.max_distance = value.get<double>();
      else if (key == "probe_size") probe_size = value.get<int>();
      else if (key == "seed") seed = value.get<std::uint64_t>();
      else if (key == "degenerate_limit") degenerate_limit = value.get<int>();
      else if (key == "finetune_lr") finetune_lr = value.get<double>();
      else if (key == "finetune_epochs") finetune_epochs = value.get<int>();
      else if (key == "finetune_batch") finetune_batch = value.get<int>();
      else if (key == "val_fraction") val_fraction = value.get<double>();
      else throw ConfigError("train config: unknown field '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("train config: field '" + key + "': " + e.what());
    }
  }
  validate();
}

Eigen::MatrixXf augment_view(const Eigen::MatrixXf& data, const AugmentConfig& cfg, Rng& rng) {
  const Eigen::Index c = data.rows(), t = data.cols();
  // random crop-and-resize along time
  const auto min_len = static_cast<Eigen::Index>(cfg.min_crop_fraction * static_cast<double>(t));
  const Eigen::Index len = min_len + rng.uniform_index(t - min_len + 1);
  const Eigen::Index start = rng.uniform_index(t - len + 1);
  Eigen::MatrixXf out(c, t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double src = static_cast<double>(i) * static_cast<double>(len - 1) /
                       static_cast<double>(t - 1);
    const auto lo = static_cast<Eigen::Index>(src);
    const auto hi = std::min(lo + 1, len - 1);
    const float frac = static_cast<float>(src - static_cast<double>(lo));
    for (Eigen::Index ch = 0; ch < c; ++ch)
      out(ch, i) = (1.0f - frac) * data(ch, start + lo) + frac * data(ch, start + hi);
  }
  // Gaussian noise scaled to the signal spread
  const double std_all = std::sqrt((data.array() - data.mean()).square().mean());
  const float sigma = static_cast<float>(cfg.noise_sigma_fraction * std_all);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out.data()[i] += sigma * static_cast<float>(rng.normal());
  // channel dropout
  for (Eigen::Index ch = 0; ch < c; ++ch)
    if (rng.uniform() < cfg.channel_dropout_p) out.row(ch).setZero();
  return out;
}

namespace {

struct SegmentRef {
  int dataset;
  int segment;
};

template <typename S>
class InputCache {
 public:
  InputCache(EmodModel<S>& model, const std::vector<Dataset>& datasets)
      : model_(model), cache_(datasets.size()) {
    for (std::size_t d = 0; d < datasets.size(); ++d)
      cache_[d].resize(datasets[d].segments.size());
  }

  const SegmentInput<S>& get(const std::vector<Dataset>& datasets, int d, int s) {
    auto& slot = cache_[static_cast<std::size_t>(d)][static_cast<std::size_t>(s)];
    if (!slot.has_value()) {
      const auto& ds = datasets[static_cast<std::size_t>(d)];
      std::vector<Index> ids(ds.channel_ids.begin(), ds.channel_ids.end());
      slot = model_.prepare(ds.segments[static_cast<std::size_t>(s)].data, ids);
    }
    return *slot;
  }

 private:
  EmodModel<S>& model_;
  std::vector<std::vector<std::optional<SegmentInput<S>>>> cache_;
};

double epoch_lr(const TrainConfig& cfg, int epoch) {
  if (cfg.epochs == 1) return cfg.lr_max;
  return cosine_lr(epoch, cfg.epochs - 1, cfg.lr_max, cfg.lr_min);
}

void log_line(std::ostream* log, long step, int epoch, double lr, double loss,
              std::optional<double> spearman, double wall_ms) {
  if (!log) return;
  json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["loss"] = loss;
  j["spearman"] = spearman.has_value() ? json(*spearman) : json(nullptr);
  j["wall_ms"] = wall_ms;
  *log << j.dump() << '\n';
}

}  // namespace

template <typename S>
PretrainResult pretrain(EmodModel<S>& model, std::vector<Dataset>& datasets,
                        const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (datasets.empty()) throw ConfigError("pretrain: no datasets");
  if (cfg.loss.variant == LossVariant::CrossEntropy || cfg.loss.variant == LossVariant::SupCon)
    throw ConfigError("pretrain: variant '" + to_string(cfg.loss.variant) +
                      "' is not a pretraining arm");

  for (auto& ds : datasets) ds.channel_ids = model.registry().register_all(ds.manifest.channels);

  Rng master(cfg.seed);
  Rng probe_rng = master.fork(1);
  Rng sampler_rng = master.fork(2);
  Rng augment_rng = master.fork(3);
  Rng dropout_rng = master.fork(4);

  // Hold out the probe set round-robin across datasets.
  std::vector<SegmentRef> probe_refs;
  std::vector<std::vector<char>> held(datasets.size());
  for (std::size_t d = 0; d < datasets.size(); ++d)
    held[d].assign(datasets[d].segments.size(), 0);
  long total_segments = 0;
  for (const auto& ds : datasets) total_segments += static_cast<long>(ds.segments.size());
  const int probe_target = std::min<long>(cfg.probe_size, total_segments / 2);
  int tries = 0;
  while (static_cast<int>(probe_refs.size()) < probe_target && tries < probe_target * 50) {
    ++tries;
    const int d = static_cast<int>(probe_rng.uniform_index(static_cast<std::int64_t>(datasets.size())));
    const auto n = static_cast<std::int64_t>(datasets[static_cast<std::size_t>(d)].segments.size());
    const int s = static_cast<int>(probe_rng.uniform_index(n));
    if (held[static_cast<std::size_t>(d)][static_cast<std::size_t>(s)]) continue;
    held[static_cast<std::size_t>(d)][static_cast<std::size_t>(s)] = 1;
    probe_refs.push_back({d, s});
  }

  // Region index over the remaining segments, with id remapping.
  std::vector<std::vector<VaPoint>> train_va(datasets.size());
  std::vector<std::vector<int>> remap(datasets.size());
  std::vector<SegmentRef> train_pool;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (std::size_t s = 0; s < datasets[d].segments.size(); ++s) {
      if (held[d][s]) continue;
      train_va[d].push_back(datasets[d].va[s]);
      remap[d].push_back(static_cast<int>(s));
      train_pool.push_back({static_cast<int>(d), static_cast<int>(s)});
    }
  }
  SampleIndex index = build_index(train_va);

  InputCache<S> cache(model, datasets);
  const int n = static_cast<int>(datasets.size());
  const long batch_size = static_cast<long>(n) * 9 * cfg.rounds_m;
  const int steps_per_epoch =
      cfg.steps_per_epoch > 0
          ? cfg.steps_per_epoch
          : static_cast<int>((static_cast<long>(train_pool.size()) + batch_size - 1) / batch_size);

  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr_max;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW<S> optimizer(opt_cfg);

  PretrainResult result;
  long global_step = 0;
  int consecutive_degenerate = 0;
  const AugmentConfig aug_cfg;

  auto probe_spearman = [&]() -> std::optional<double> {
    if (probe_refs.size() < 10) return std::nullopt;
    std::vector<Eigen::VectorXd> z;
    std::vector<VaPoint> va;
    Rng dummy(0);
    for (const auto& ref : probe_refs) {
      const auto& input = cache.get(datasets, ref.dataset, ref.segment);
      auto enc = model.encode(input, false, dummy);
      Eigen::VectorXd v(enc.embedding.size());
      for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<double>(enc.embedding.values()[i]);
      z.push_back(std::move(v));
      va.push_back(datasets[static_cast<std::size_t>(ref.dataset)]
                       .va[static_cast<std::size_t>(ref.segment)]);
    }
    return spearman_probe(z, va);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch_lr(cfg, epoch);
    optimizer.set_lr(lr);
    result.lr_per_epoch.push_back(lr);
    for (int step = 0; step < steps_per_epoch; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      Tensor<S> loss;
      try {
        if (cfg.loss.variant == LossVariant::Augment) {
          const long pairs = std::max<long>(2, batch_size / 2);
          std::vector<Tensor<S>> first_views, second_views;
          for (long i = 0; i < pairs; ++i) {
            const auto& ref = train_pool[static_cast<std::size_t>(
                augment_rng.uniform_index(static_cast<std::int64_t>(train_pool.size())))];
            const auto& ds = datasets[static_cast<std::size_t>(ref.dataset)];
            std::vector<Index> ids(ds.channel_ids.begin(), ds.channel_ids.end());
            const auto& data = ds.segments[static_cast<std::size_t>(ref.segment)].data;
            for (auto* views : {&first_views, &second_views}) {
              auto input = model.prepare(augment_view(data, aug_cfg, augment_rng), ids);
              views->push_back(model.encode(input, true, dropout_rng).embedding);
            }
          }
          std::vector<Tensor<S>> all = first_views;
          all.insert(all.end(), second_views.begin(), second_views.end());
          loss = nt_xent_loss(concat_axis0(all), cfg.loss.temperature);
        } else {
          ContrastBatch batch = next_batch(index, cfg.rounds_m, sampler_rng);
          std::vector<Tensor<S>> embeddings;
          std::vector<VaPoint> va;
          embeddings.reserve(batch.size());
          for (const auto& item : batch) {
            const int orig = remap[static_cast<std::size_t>(item.dataset)]
                                  [static_cast<std::size_t>(item.segment)];
            embeddings.push_back(
                model.encode(cache.get(datasets, item.dataset, orig), true, dropout_rng)
                    .embedding);
            va.push_back(item.va);
          }
          auto z = concat_axis0(embeddings);
          if (cfg.loss.variant == LossVariant::SoftVA) {
            loss = va_contrastive_loss(z, soft_weights(va, cfg.loss.max_distance),
                                       cfg.loss.temperature);
          } else {
            loss = hard_va_loss(z, va, cfg.loss.max_distance, cfg.loss.temperature);
          }
        }
      } catch (const DegenerateBatchError&) {
        if (++consecutive_degenerate > cfg.degenerate_limit) throw;
        continue;
      }
      consecutive_degenerate = 0;
      backward(loss);
      clip_gradients(model.parameters(), cfg.clip_norm);
      double post_sq = 0.0;
      for (auto& [name, t] : model.parameters())
        if (t.has_grad()) post_sq += static_cast<double>(t.grad().template cast<double>().square().sum());
      result.max_post_clip_norm = std::max(result.max_post_clip_norm, std::sqrt(post_sq));
      optimizer.step(model.parameters());
      model.zero_grad();

      const double loss_value = static_cast<double>(loss.scalar_value());
      result.loss_per_step.push_back(loss_value);
      ++global_step;
      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const bool last_of_epoch = step == steps_per_epoch - 1;
      std::optional<double> rho;
      if (last_of_epoch) {
        rho = probe_spearman();
        if (rho.has_value()) result.spearman_per_epoch.push_back(*rho);
      }
      log_line(log, global_step, epoch, lr, loss_value, rho, wall_ms);
    }
  }
  result.steps = global_step;
  return result;
}

std::vector<int> dataset_classes(const Dataset& ds, int* n_classes) {
  std::vector<int> classes;
  classes.reserve(ds.segments.size());
  if (ds.manifest.scheme.type == LabelScheme::Type::Discrete) {
    for (const auto& seg : ds.segments) {
      const auto& lab = std::get<DiscreteLabel>(seg.label);
      const auto& cats = ds.manifest.scheme.categories;
      const auto it = std::find(cats.begin(), cats.end(), lab.category);
      if (it == cats.end())
        throw DataError("dataset '" + ds.manifest.name + "': category '" + lab.category +
                        "' missing from the manifest");
      classes.push_back(static_cast<int>(it - cats.begin()));
    }
    if (n_classes) *n_classes = static_cast<int>(ds.manifest.scheme.categories.size());
  } else {
    for (const auto& va : ds.va) classes.push_back(quadrant_class(va));
    if (n_classes) *n_classes = 4;
  }
  return classes;
}

namespace {

// Deterministic shuffled train/validation split shared by finetune and the
// linear probe.
void split_indices(std::size_t n, double val_fraction, std::uint64_t seed,
                   std::vector<int>* train, std::vector<int>* val) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x5eed51177ull);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_index(
                  static_cast<std::int64_t>(i)))]);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(val_fraction * n));
  val->assign(order.begin(), order.begin() + static_cast<long>(n_val));
  train->assign(order.begin() + static_cast<long>(n_val), order.end());
}

template <typename S>
MetricsReport evaluate_head(EmodModel<S>& model, const Dataset& ds,
                            const std::vector<SegmentInput<S>>& inputs,
                            const std::vector<int>& classes, const std::vector<int>& subset,
                            int n_classes) {
  Rng dummy(0);
  std::vector<int> truth, predicted;
  for (int idx : subset) {
    auto enc = model.encode(inputs[static_cast<std::size_t>(idx)], false, dummy);
    auto logits = model.classify(enc.pooled);
    Index best = 0;
    for (Index k = 1; k < logits.size(); ++k)
      if (logits.values()[k] > logits.values()[best]) best = k;
    predicted.push_back(static_cast<int>(best));
    truth.push_back(classes[static_cast<std::size_t>(idx)]);
  }
  (void)ds;
  return evaluate(ConfusionMatrix::from_predictions(truth, predicted, n_classes));
}

}  // namespace

template <typename S>
FinetuneResult finetune(EmodModel<S>& model, Dataset& dataset, const TrainConfig& cfg,
                        std::ostream* log) {
  cfg.validate();
  dataset.channel_ids = model.registry().register_all(dataset.manifest.channels);
  int n_classes = 0;
  const std::vector<int> classes = dataset_classes(dataset, &n_classes);
  model.attach_head(n_classes);

  std::vector<SegmentInput<S>> inputs;
  inputs.reserve(dataset.segments.size());
  {
    std::vector<Index> ids(dataset.channel_ids.begin(), dataset.channel_ids.end());
    for (const auto& seg : dataset.segments) inputs.push_back(model.prepare(seg.data, ids));
  }

  std::vector<int> train_idx, val_idx;
  split_indices(dataset.segments.size(), cfg.val_fraction, cfg.seed, &train_idx, &val_idx);

  FinetuneResult result;
  result.n_classes = n_classes;
  result.best = evaluate_head(model, dataset, inputs, classes, val_idx, n_classes);
  result.best_epoch = -1;

  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.finetune_lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW<S> optimizer(opt_cfg);
  Rng master(cfg.seed);
  Rng shuffle_rng = master.fork(11);
  Rng dropout_rng = master.fork(12);

  std::vector<ArrayX<S>> best_values;
  auto snapshot = [&]() {
    best_values.clear();
    for (const auto& [name, t] : model.parameters()) best_values.push_back(t.values());
  };
  snapshot();

  long global_step = 0;
  for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    std::vector<int> order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_index(
                    static_cast<std::int64_t>(i)))]);
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg.finetune_batch)) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto end = std::min(order.size(), off + static_cast<std::size_t>(cfg.finetune_batch));
      std::vector<Tensor<S>> pooled;
      std::vector<int> targets;
      for (std::size_t i = off; i < end; ++i) {
        pooled.push_back(
            model.encode(inputs[static_cast<std::size_t>(order[i])], true, dropout_rng).pooled);
        targets.push_back(classes[static_cast<std::size_t>(order[i])]);
      }
      auto logits = model.classify(concat_axis0(pooled));
      auto loss = cross_entropy(logits, targets);
      backward(loss);
      clip_gradients(model.parameters(), cfg.clip_norm);
      optimizer.step(model.parameters());
      model.zero_grad();
      ++global_step;
      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      log_line(log, global_step, epoch, cfg.finetune_lr,
               static_cast<double>(loss.scalar_value()), std::nullopt, wall_ms);
    }
    auto report = evaluate_head(model, dataset, inputs, classes, val_idx, n_classes);
    result.per_epoch.push_back(report);
    if (report.kappa > result.best.kappa) {
      result.best = report;
      result.best_epoch = epoch;
      snapshot();
    }
  }
  // restore the kappa-selected parameters
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].second.values_mut() = best_values[i];
  return result;
}

template <typename S>
MetricsReport linear_probe(EmodModel<S>& model, Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  dataset.channel_ids = model.registry().register_all(dataset.manifest.channels);
  int n_classes = 0;
  const std::vector<int> classes = dataset_classes(dataset, &n_classes);

  const Index d = model.config().embed_dim;
  Rng dummy(0);
  std::vector<Index> ids(dataset.channel_ids.begin(), dataset.channel_ids.end());
  ArrayX<double> features(static_cast<Index>(dataset.segments.size()) * d);
  for (std::size_t s = 0; s < dataset.segments.size(); ++s) {
    auto enc = model.encode(model.prepare(dataset.segments[s].data, ids), false, dummy);
    for (Index k = 0; k < d; ++k)
      features[static_cast<Index>(s) * d + k] = static_cast<double>(enc.pooled.values()[k]);
  }

  std::vector<int> train_idx, val_idx;
  split_indices(dataset.segments.size(), cfg.val_fraction, cfg.seed, &train_idx, &val_idx);

  auto gather_features = [&](const std::vector<int>& subset) {
    ArrayX<double> out(static_cast<Index>(subset.size()) * d);
    for (std::size_t i = 0; i < subset.size(); ++i)
      out.segment(static_cast<Index>(i) * d, d) =
          features.segment(static_cast<Index>(subset[i]) * d, d);
    return Tensor<double>::from_array({static_cast<Index>(subset.size()), d}, std::move(out));
  };
  auto x_train = gather_features(train_idx);
  std::vector<int> y_train;
  for (int idx : train_idx) y_train.push_back(classes[static_cast<std::size_t>(idx)]);

  auto w = Tensor<double>::zeros({d, n_classes});
  auto b = Tensor<double>::zeros({n_classes});
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor<double>>> params = {{"w", w}, {"b", b}};
  AdamWConfig opt_cfg;
  opt_cfg.lr = 0.05;
  opt_cfg.weight_decay = 1e-4;
  AdamW<double> optimizer(opt_cfg);
  for (int it = 0; it < 300; ++it) {
    auto loss = cross_entropy(linear(x_train, w, b), y_train);
    backward(loss);
    optimizer.step(params);
    w.zero_grad();
    b.zero_grad();
  }

  auto x_val = gather_features(val_idx);
  auto logits = linear(x_val, w, b);
  std::vector<int> truth, predicted;
  for (std::size_t i = 0; i < val_idx.size(); ++i) {
    Index best = 0;
    for (Index k = 1; k < n_classes; ++k)
      if (logits.values()[static_cast<Index>(i) * n_classes + k] >
          logits.values()[static_cast<Index>(i) * n_classes + best])
        best = k;
    predicted.push_back(static_cast<int>(best));
    truth.push_back(classes[static_cast<std::size_t>(val_idx[i])]);
  }
  return evaluate(ConfusionMatrix::from_predictions(truth, predicted, n_classes));
}

template <typename S>
std::vector<Eigen::VectorXd> extract_embeddings(EmodModel<S>& model, const Dataset& dataset) {
  std::vector<Index> ids;
  if (!dataset.channel_ids.empty()) {
    ids.assign(dataset.channel_ids.begin(), dataset.channel_ids.end());
  } else {
    for (const auto& name : dataset.manifest.channels)
      ids.push_back(model.registry().id_of(name));
  }
  Rng dummy(0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(dataset.segments.size());
  for (const auto& seg : dataset.segments) {
    auto enc = model.encode(model.prepare(seg.data, ids), false, dummy);
    Eigen::VectorXd v(enc.embedding.size());
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<double>(enc.embedding.values()[i]);
    out.push_back(std::move(v));
  }
  return out;
}

template <typename S>
void save_model_bundle(const EmodModel<S>& model, const std::string& dir, const std::string& task,
                       const std::vector<std::string>& categories) {
  fs::create_directories(dir);
  json j;
  j["config"] = json::parse(model.config().to_json());
  j["channels"] = model.registry().names();
  j["head_classes"] = model.head_classes();
  j["task"] = task;
  j["categories"] = categories;
  std::ofstream out(fs::path(dir) / "model.json");
  if (!out) throw DataError("bundle: cannot write model.json in " + dir);
  out << j.dump(2) << '\n';
  save_checkpoint((fs::path(dir) / "model.ckpt").string(), model.parameters());
}

BundleInfo read_bundle_info(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "model.json");
  if (!in) throw DataError("bundle: cannot open model.json in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("bundle: invalid model.json: " + std::string(e.what()));
  }
  BundleInfo info;
  info.config = ModelConfig::from_json(j.at("config").dump());
  info.channels = j.at("channels").get<std::vector<std::string>>();
  info.head_classes = j.value("head_classes", 0);
  info.task = j.value("task", std::string());
  info.categories = j.value("categories", std::vector<std::string>());
  return info;
}

template <typename S>
EmodModel<S> load_model_bundle(const std::string& dir) {
  BundleInfo info = read_bundle_info(dir);
  EmodModel<S> model(info.config, 0);
  model.registry().register_all(info.channels);
  if (info.head_classes > 0) model.attach_head(info.head_classes);
  load_checkpoint((fs::path(dir) / "model.ckpt").string(), model.parameters());
  return model;
}

#define EMOD_INSTANTIATE_TRAIN(S)                                                              \
  template PretrainResult pretrain<S>(EmodModel<S>&, std::vector<Dataset>&, const TrainConfig&, \
                                      std::ostream*);                                          \
  template FinetuneResult finetune<S>(EmodModel<S>&, Dataset&, const TrainConfig&,             \
                                      std::ostream*);                                          \
  template MetricsReport linear_probe<S>(EmodModel<S>&, Dataset&, const TrainConfig&);         \
  template std::vector<Eigen::VectorXd> extract_embeddings<S>(EmodModel<S>&, const Dataset&);  \
  template void save_model_bundle<S>(const EmodModel<S>&, const std::string&,                  \
                                     const std::string&, const std::vector<std::string>&);     \
  template EmodModel<S> load_model_bundle<S>(const std::string&);

EMOD_INSTANTIATE_TRAIN(float)
EMOD_INSTANTIATE_TRAIN(double)
#undef EMOD_INSTANTIATE_TRAIN

}  // namespace emod
