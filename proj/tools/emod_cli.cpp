// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synthetic dataset generation, contrastive
// pretraining, fine-tuning, evaluation, embedding export, and the gradient
// verification suite.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "emod/checkpoint.hpp"
#include "emod/dataio.hpp"
#include "emod/gradcheck.hpp"
#include "emod/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string profile = "desk";
  std::string variant = "softva";
  std::optional<std::uint64_t> seed;
  std::string config_path;
};

emod::ModelConfig model_config_for(const std::string& profile) {
  if (profile == "desk") return emod::ModelConfig::desk_profile();
  if (profile == "paper") return emod::ModelConfig::paper_profile();
  throw emod::ConfigError("profile must be 'desk' or 'paper', got '" + profile + "'");
}

emod::TrainConfig train_config_for(const CommonOpts& opts) {
  emod::TrainConfig cfg = opts.profile == "paper" ? emod::TrainConfig::paper_profile()
                                                  : emod::TrainConfig::desk_profile();
  (void)model_config_for(opts.profile);  // validates the profile name
  if (!opts.config_path.empty()) cfg.apply_json_file(opts.config_path);
  if (opts.seed.has_value()) cfg.seed = *opts.seed;
  return cfg;
}

std::string task_for(const emod::Dataset& ds) {
  return ds.manifest.scheme.type == emod::LabelScheme::Type::Discrete ? "categories" : "quadrant";
}

int run_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
  emod::SyntheticSpec spec = emod::synthetic_spec_from_json_file(config_path);
  if (seed.has_value()) spec.seed = *seed;
  auto result = emod::generate_synthetic(spec);
  const auto manifest = emod::write_synthetic(result, out_dir);
  std::cout << "wrote " << result.segments.size() << " segments to " << manifest << "\n";
  return 0;
}

int run_pretrain(const std::vector<std::string>& manifests, const std::string& out_dir,
                 const CommonOpts& opts, const std::string& log_path) {
  emod::TrainConfig cfg = train_config_for(opts);
  emod::EmodModel<float> model(model_config_for(opts.profile), cfg.seed);

  std::vector<emod::Dataset> datasets;
  for (const auto& path : manifests) datasets.push_back(emod::load_dataset(path));

  if (opts.variant == "scratch") {
    for (auto& ds : datasets)
      ds.channel_ids = model.registry().register_all(ds.manifest.channels);
    emod::save_model_bundle(model, out_dir, "", {});
    std::cout << "scratch: saved randomly initialized model to " << out_dir << "\n";
    return 0;
  }
  cfg.loss.variant = emod::loss_variant_from_string(opts.variant);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw emod::DataError("cannot open log file " + log_path);
  }
  auto result = emod::pretrain(model, datasets, cfg, log.is_open() ? &log : nullptr);
  emod::save_model_bundle(model, out_dir, "", {});
  std::cout << "pretrained " << result.steps << " steps";
  if (!result.spearman_per_epoch.empty())
    std::cout << ", final probe spearman " << result.spearman_per_epoch.back();
  std::cout << ", saved to " << out_dir << "\n";
  return 0;
}

int run_finetune(const std::string& manifest, const std::string& checkpoint_dir,
                 const std::string& out_dir, const CommonOpts& opts, const std::string& log_path) {
  emod::TrainConfig cfg = train_config_for(opts);
  auto model = emod::load_model_bundle<float>(checkpoint_dir);
  emod::Dataset ds = emod::load_dataset(manifest);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw emod::DataError("cannot open log file " + log_path);
  }
  auto result = emod::finetune(model, ds, cfg, log.is_open() ? &log : nullptr);
  emod::save_model_bundle(model, out_dir, task_for(ds), ds.manifest.scheme.categories);

  json j;
  j["best_epoch"] = result.best_epoch;
  j["n_classes"] = result.n_classes;
  j["best"] = json::parse(emod::metrics_report_json(result.best));
  j["per_epoch"] = json::array();
  for (const auto& r : result.per_epoch)
    j["per_epoch"].push_back(json::parse(emod::metrics_report_json(r)));
  fs::create_directories(out_dir);
  std::ofstream mout(fs::path(out_dir) / "finetune_metrics.json");
  mout << j.dump(2) << '\n';
  std::cout << "finetune best epoch " << result.best_epoch << " kappa " << result.best.kappa
            << " bacc " << result.best.bacc << ", saved to " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& manifest, const std::string& checkpoint_dir,
             const std::string& out_path, bool stub_diagonal) {
  emod::Dataset ds = emod::load_dataset(manifest);
  int n_classes = 0;
  const std::vector<int> truth = emod::dataset_classes(ds, &n_classes);

  std::vector<int> predicted;
  if (stub_diagonal) {
    predicted = truth;  // reporting-path self-test
  } else {
    auto model = emod::load_model_bundle<float>(checkpoint_dir);
    if (!model.has_head())
      throw emod::ConfigError("eval: checkpoint has no classifier head; fine-tune first");
    if (model.head_classes() != n_classes)
      throw emod::ConfigError("eval: head has " + std::to_string(model.head_classes()) +
                              " classes but the dataset defines " + std::to_string(n_classes));
    ds.channel_ids = model.registry().register_all(ds.manifest.channels);
    std::vector<emod::Index> ids(ds.channel_ids.begin(), ds.channel_ids.end());
    emod::Rng dummy(0);
    for (const auto& seg : ds.segments) {
      auto enc = model.encode(model.prepare(seg.data, ids), false, dummy);
      auto logits = model.classify(enc.pooled);
      emod::Index best = 0;
      for (emod::Index k = 1; k < logits.size(); ++k)
        if (logits.values()[k] > logits.values()[best]) best = k;
      predicted.push_back(static_cast<int>(best));
    }
  }
  auto report =
      emod::evaluate(emod::ConfusionMatrix::from_predictions(truth, predicted, n_classes));
  const std::string text = emod::metrics_report_json(report);
  if (out_path.empty() || out_path == "-") {
    std::cout << text << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw emod::DataError("cannot write " + out_path);
    out << text << '\n';
    std::cout << "bacc " << report.bacc << " kappa " << report.kappa << " wf1 " << report.wf1
              << " -> " << out_path << "\n";
  }
  return 0;
}

int run_embed(const std::string& manifest, const std::string& checkpoint_dir,
              const std::string& out_path) {
  auto model = emod::load_model_bundle<float>(checkpoint_dir);
  emod::Dataset ds = emod::load_dataset(manifest);
  ds.channel_ids = model.registry().register_all(ds.manifest.channels);
  auto embeddings = emod::extract_embeddings(model, ds);

  std::ofstream out(out_path);
  if (!out) throw emod::DataError("cannot write " + out_path);
  const auto dim = embeddings.empty() ? 0 : embeddings[0].size();
  out << "id,subject,valence,arousal";
  for (Eigen::Index k = 0; k < dim; ++k) out << ",z" << k;
  out << "\n";
  out.precision(9);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    out << i << ',' << ds.segments[i].subject_id << ',' << ds.va[i].valence << ','
        << ds.va[i].arousal;
    for (Eigen::Index k = 0; k < dim; ++k) out << ',' << embeddings[i][k];
    out << "\n";
  }
  std::cout << "wrote " << embeddings.size() << " embeddings to " << out_path << "\n";
  return 0;
}

int run_gradcheck(int seeds) {
  auto op = emod::run_op_gradient_suite(20260101, seeds);
  std::cout << "op suite: " << op.checks << " checks over " << seeds << " seeds, " << op.failures
            << " failures\n";
  emod::GradCheckReport e2e;
  for (int s = 0; s < seeds; ++s) e2e.merge(emod::run_end_to_end_gradcheck(777 + s, 32));
  std::cout << "end-to-end: " << e2e.checks << " checks over " << seeds << " seeds, "
            << e2e.failures << " failures\n";
  for (const auto& m : op.messages) std::cerr << m << "\n";
  for (const auto& m : e2e.messages) std::cerr << m << "\n";
  if (!op.ok() || !e2e.ok()) {
    std::cerr << "gradient check FAILED\n";
    return 1;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG emotion representation pretraining toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "synthetic spec JSON")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "seed override");

  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining over datasets");
  std::vector<std::string> pre_manifests;
  std::string pre_out, pre_log;
  pre->add_option("--manifest", pre_manifests, "dataset manifest(s)")->required()->expected(-1);
  pre->add_option("--out", pre_out, "output bundle directory")->required();
  pre->add_option("--profile", opts.profile, "desk or paper");
  pre->add_option("--variant", opts.variant, "softva, hardva, augment, or scratch");
  pre->add_option("--seed", opts.seed, "training seed");
  pre->add_option("--config", opts.config_path, "training config overrides (JSON)");
  pre->add_option("--log", pre_log, "NDJSON training log path");

  auto* fine = app.add_subcommand("finetune", "supervised fine-tuning with a linear head");
  std::string fine_manifest, fine_ckpt, fine_out, fine_log;
  fine->add_option("--manifest", fine_manifest, "dataset manifest")->required();
  fine->add_option("--checkpoint", fine_ckpt, "pretrained bundle directory")->required();
  fine->add_option("--out", fine_out, "output bundle directory")->required();
  fine->add_option("--profile", opts.profile, "desk or paper");
  fine->add_option("--seed", opts.seed, "seed");
  fine->add_option("--config", opts.config_path, "training config overrides (JSON)");
  fine->add_option("--log", fine_log, "NDJSON training log path");

  auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned model");
  std::string eval_manifest, eval_ckpt, eval_out;
  bool stub_diagonal = false;
  ev->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  ev->add_option("--checkpoint", eval_ckpt, "fine-tuned bundle directory");
  ev->add_option("--out", eval_out, "metrics JSON path ('-' for stdout)");
  ev->add_flag("--stub-diagonal", stub_diagonal,
               "score perfect predictions (reporting-path self-test)");

  auto* emb = app.add_subcommand("embed", "export contrastive embeddings as CSV");
  std::string emb_manifest, emb_ckpt, emb_out;
  emb->add_option("--manifest", emb_manifest, "dataset manifest")->required();
  emb->add_option("--checkpoint", emb_ckpt, "bundle directory")->required();
  emb->add_option("--out", emb_out, "CSV output path")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  int gc_seeds = 100;
  gc->add_option("--seeds", gc_seeds, "number of random seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_config, synth_out, synth_seed);
    if (pre->parsed()) return run_pretrain(pre_manifests, pre_out, opts, pre_log);
    if (fine->parsed()) return run_finetune(fine_manifest, fine_ckpt, fine_out, opts, fine_log);
    if (ev->parsed()) {
      if (!stub_diagonal && eval_ckpt.empty())
        throw emod::ConfigError("eval: --checkpoint is required unless --stub-diagonal is set");
      return run_eval(eval_manifest, eval_ckpt, eval_out, stub_diagonal);
    }
    if (emb->parsed()) return run_embed(emb_manifest, emb_ckpt, emb_out);
    if (gc->parsed()) return run_gradcheck(gc_seeds);
  } catch (const emod::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const emod::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
