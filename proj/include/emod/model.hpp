// SPDX-License-Identifier: Apache-2.0
//
// Encoder backbone: a triple-domain tokenizer (raw-waveform and FFT-magnitude
// convolutions per patch plus a learnable per-electrode embedding) followed by
// an axial transformer that alternates attention across channels and across
// time, the temporal pass carrying a learned Toeplitz relative-offset bias.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emod/signal.hpp"
#include "emod/tensor.hpp"

namespace emod {

struct ModelConfig {
  int embed_dim = 128;       // token embedding width d
  int heads = 16;            // attention heads per axial pass
  int layers = 3;            // transformer depth
  int ffn_hidden = 512;      // feed-forward hidden width
  int conv_channels = 128;   // tokenizer conv output channels
  int conv_kernel = 25;      // tokenizer conv kernel (1 x k), stride k
  int gn_groups = 4;         // group norm groups in the tokenizer
  int patch_length = 200;    // samples per temporal token
  int max_channels = 128;    // channel embedding capacity
  int max_tokens = 16;       // longest supported token sequence
  int projection_dim = 64;   // contrastive embedding width
  double dropout = 0.1;

  static ModelConfig paper_profile();
  static ModelConfig desk_profile();
  void validate() const;

  int fft_bins() const { return patch_length / 2 + 1; }
  int conv_positions_temporal() const { return (patch_length - conv_kernel) / conv_kernel + 1; }
  int conv_positions_spectral() const { return (fft_bins() - conv_kernel) / conv_kernel + 1; }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Global electrode identity registry: datasets sharing an electrode name
// share the embedding row.
class ChannelRegistry {
 public:
  explicit ChannelRegistry(int capacity) : capacity_(capacity) {}

  int register_channel(const std::string& name);
  std::vector<int> register_all(const std::vector<std::string>& names);
  int id_of(const std::string& name) const;  // throws ConfigError when absent
  bool contains(const std::string& name) const { return ids_.count(name) > 0; }
  int size() const { return static_cast<int>(names_.size()); }
  int capacity() const { return capacity_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  int capacity_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

// Patch constants derived from one segment: raw patches and their FFT
// magnitudes, ready to enter the graph. Reusable across training steps.
template <typename S>
struct SegmentInput {
  std::vector<Tensor<S>> raw;       // per token: [1, C, patch]
  std::vector<Tensor<S>> spectral;  // per token: [1, C, fft_bins]
  std::vector<Index> channel_ids;
  Index channels = 0;
  Index t_prime = 0;
};

// Token stages: time-major [T', C, d] throughout.
template <typename S>
struct TokenGrid {
  Tensor<S> temporal;
  Tensor<S> spectral;
  Tensor<S> fused;
  Tensor<S> tokens;  // after channel embedding
  std::vector<Index> channel_ids;
  Index channels = 0;
  Index t_prime = 0;
};

template <typename S>
struct EncodeResult {
  Tensor<S> tokens;     // [C, T', d]
  Tensor<S> pooled;     // [1, d]
  Tensor<S> embedding;  // [1, projection_dim], unit L2 norm
};

template <typename S>
class EmodModel {
 public:
  using Param = std::pair<std::string, Tensor<S>>;

  EmodModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ChannelRegistry& registry() { return registry_; }
  const ChannelRegistry& registry() const { return registry_; }

  SegmentInput<S> prepare(const Eigen::MatrixXf& data,
                          const std::vector<Index>& channel_ids) const;
  SegmentInput<S> prepare(const EegSegment& segment,
                          const std::vector<std::string>& channel_names) const;

  TokenGrid<S> tokenize(const SegmentInput<S>& input) const;
  void fuse(TokenGrid<S>& grid) const;
  void add_channel_embedding(TokenGrid<S>& grid) const;

  // Attention across channels at each time step; x: [T', C, d].
  Tensor<S> spatial_attention(const Tensor<S>& x, int layer, bool training, Rng& rng) const;
  // Attention across time within each channel with the relative-offset bias
  // added to the logits; x: [C, T', d].
  Tensor<S> temporal_attention(const Tensor<S>& x, int layer, bool training, Rng& rng) const;

  EncodeResult<S> encode(const SegmentInput<S>& input, bool training, Rng& rng) const;

  // Linear head over the pooled backbone feature.
  void attach_head(int n_classes);
  bool has_head() const { return head_classes_ > 0; }
  int head_classes() const { return head_classes_; }
  Tensor<S> classify(const Tensor<S>& pooled) const;

  // Realized temporal bias matrix [t, t] for one layer (Toeplitz by
  // construction from the per-offset parameter vector).
  Tensor<S> relative_bias(int layer, Index t) const;

  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }
  Tensor<S> parameter(const std::string& name) const;
  long parameter_count() const;
  void zero_grad();

 private:
  struct Attention {
    Tensor<S> ln_gamma, ln_beta;
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Layer {
    Attention spatial;
    Attention temporal;
    Tensor<S> rel_bias;  // [2 * max_tokens - 1]
    Tensor<S> ffn_ln_gamma, ffn_ln_beta;
    Tensor<S> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  Tensor<S> add_param(const std::string& name, Tensor<S> t);
  Tensor<S> attention_pass(const Tensor<S>& x, const Attention& p, const Tensor<S>* bias,
                           bool training, Rng& rng) const;

  ModelConfig cfg_;
  ChannelRegistry registry_;
  std::vector<Param> params_;

  Tensor<S> conv_t_w_, gn_t_gamma_, gn_t_beta_, map_t_w_, map_t_b_;
  Tensor<S> conv_f_w_, gn_f_gamma_, gn_f_beta_, map_f_w_, map_f_b_;
  Tensor<S> fuse_w_, fuse_b_;
  Tensor<S> channel_embedding_;
  std::vector<Layer> layers_;
  Tensor<S> proj_w1_, proj_b1_, proj_w2_, proj_b2_;
  Tensor<S> head_w_, head_b_;
  int head_classes_ = 0;
};

using EmodModelF = EmodModel<float>;
using EmodModelD = EmodModel<double>;

}  // namespace emod
