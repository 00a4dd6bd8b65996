// SPDX-License-Identifier: Apache-2.0
#include "emod/model.hpp"

#include <cmath>

#include <json.hpp>

#include "emod/fft.hpp"

namespace emod {

using nlohmann::json;

ModelConfig ModelConfig::paper_profile() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_profile() {
  ModelConfig cfg;
  cfg.embed_dim = 32;
  cfg.heads = 4;
  cfg.layers = 2;
  cfg.ffn_hidden = 128;
  cfg.conv_channels = 16;
  cfg.conv_kernel = 16;
  cfg.gn_groups = 4;
  cfg.patch_length = 64;
  cfg.max_channels = 128;
  cfg.max_tokens = 16;
  cfg.projection_dim = 16;
  cfg.dropout = 0.0;
  return cfg;
}

void ModelConfig::validate() const {
  if (embed_dim < 1 || heads < 1 || layers < 1)
    throw ConfigError("model config: embed_dim, heads and layers must be positive");
  if (embed_dim % heads != 0) throw ConfigError("model config: embed_dim must divide into heads");
  if (conv_channels % gn_groups != 0)
    throw ConfigError("model config: conv_channels must divide into gn_groups");
  if (patch_length < conv_kernel)
    throw ConfigError("model config: patch_length must be >= conv_kernel");
  if (fft_bins() < conv_kernel)
    throw ConfigError("model config: patch_length/2+1 must be >= conv_kernel (spectral branch)");
  if (max_tokens < 1 || max_channels < 1 || projection_dim < 1 || ffn_hidden < 1)
    throw ConfigError("model config: capacities must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0,1)");
}

std::string ModelConfig::to_json() const {
  json j;
  j["embed_dim"] = embed_dim;
  j["heads"] = heads;
  j["layers"] = layers;
  j["ffn_hidden"] = ffn_hidden;
  j["conv_channels"] = conv_channels;
  j["conv_kernel"] = conv_kernel;
  j["gn_groups"] = gn_groups;
  j["patch_length"] = patch_length;
  j["max_channels"] = max_channels;
  j["max_tokens"] = max_tokens;
  j["projection_dim"] = projection_dim;
  j["dropout"] = dropout;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
  }
  ModelConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "embed_dim") cfg.embed_dim = value.get<int>();
      else if (key == "heads") cfg.heads = value.get<int>();
      else if (key == "layers") cfg.layers = value.get<int>();
      else if (key == "ffn_hidden") cfg.ffn_hidden = value.get<int>();
      else if (key == "conv_channels") cfg.conv_channels = value.get<int>();
      else if (key == "conv_kernel") cfg.conv_kernel = value.get<int>();
      else if (key == "gn_groups") cfg.gn_groups = value.get<int>();
      else if (key == "patch_length") cfg.patch_length = value.get<int>();
      else if (key == "max_channels") cfg.max_channels = value.get<int>();
      else if (key == "max_tokens") cfg.max_tokens = value.get<int>();
      else if (key == "projection_dim") cfg.projection_dim = value.get<int>();
      else if (key == "dropout") cfg.dropout = value.get<double>();
      else throw ConfigError("model config: unknown field '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("model config: field '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

int ChannelRegistry::register_channel(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  if (size() >= capacity_)
    throw ConfigError("channel registry: capacity " + std::to_string(capacity_) + " exceeded");
  const int id = size();
  names_.push_back(name);
  ids_[name] = id;
  return id;
}

std::vector<int> ChannelRegistry::register_all(const std::vector<std::string>& names) {
  std::vector<int> ids;
  ids.reserve(names.size());
  for (const auto& n : names) ids.push_back(register_channel(n));
  return ids;
}

int ChannelRegistry::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw ConfigError("channel registry: unregistered channel '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------

namespace {

// Column-wise concatenation of two equally tall rank-2 tensors.
template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  std::vector<Tensor<S>> parts = {transpose(a), transpose(b)};
  return transpose(concat_axis0(parts));
}

}  // namespace

template <typename S>
Tensor<S> EmodModel<S>::add_param(const std::string& name, Tensor<S> t) {
  t.set_requires_grad(true);
  params_.emplace_back(name, t);
  return t;
}

template <typename S>
EmodModel<S>::EmodModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), registry_(cfg.max_channels) {
  cfg_.validate();
  Rng rng(seed);
  const Index d = cfg_.embed_dim;
  const Index co = cfg_.conv_channels;
  const Index k = cfg_.conv_kernel;
  const Index pos_t = cfg_.conv_positions_temporal();
  const Index pos_f = cfg_.conv_positions_spectral();

  auto dense = [&](const std::string& name, Index in, Index out) {
    return add_param(name, Tensor<S>::randn({in, out}, rng, 1.0 / std::sqrt(double(in))));
  };
  auto bias = [&](const std::string& name, Index n) {
    return add_param(name, Tensor<S>::zeros({n}));
  };

  conv_t_w_ = add_param("tok.temporal.conv.w",
                        Tensor<S>::randn({co, 1, 1, k}, rng, 1.0 / std::sqrt(double(k))));
  gn_t_gamma_ = add_param("tok.temporal.gn.gamma", Tensor<S>::ones({co}));
  gn_t_beta_ = bias("tok.temporal.gn.beta", co);
  map_t_w_ = dense("tok.temporal.map.w", co * pos_t, d);
  map_t_b_ = bias("tok.temporal.map.b", d);

  conv_f_w_ = add_param("tok.spectral.conv.w",
                        Tensor<S>::randn({co, 1, 1, k}, rng, 1.0 / std::sqrt(double(k))));
  gn_f_gamma_ = add_param("tok.spectral.gn.gamma", Tensor<S>::ones({co}));
  gn_f_beta_ = bias("tok.spectral.gn.beta", co);
  map_f_w_ = dense("tok.spectral.map.w", co * pos_f, d);
  map_f_b_ = bias("tok.spectral.map.b", d);

  fuse_w_ = dense("fuse.w", 2 * d, d);
  fuse_b_ = bias("fuse.b", d);

  channel_embedding_ =
      add_param("channel_embedding", Tensor<S>::randn({cfg_.max_channels, d}, rng, 0.02));

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    Layer layer;
    auto attention = [&](const std::string& sub) {
      Attention a;
      a.ln_gamma = add_param(prefix + sub + ".ln.gamma", Tensor<S>::ones({d}));
      a.ln_beta = bias(prefix + sub + ".ln.beta", d);
      a.wq = dense(prefix + sub + ".wq", d, d);
      a.bq = bias(prefix + sub + ".bq", d);
      a.wk = dense(prefix + sub + ".wk", d, d);
      a.bk = bias(prefix + sub + ".bk", d);
      a.wv = dense(prefix + sub + ".wv", d, d);
      a.bv = bias(prefix + sub + ".bv", d);
      a.wo = dense(prefix + sub + ".wo", d, d);
      a.bo = bias(prefix + sub + ".bo", d);
      return a;
    };
    layer.spatial = attention("spatial");
    layer.temporal = attention("temporal");
    layer.rel_bias = bias(prefix + "temporal.rel_bias", 2 * cfg_.max_tokens - 1);
    layer.ffn_ln_gamma = add_param(prefix + "ffn.ln.gamma", Tensor<S>::ones({d}));
    layer.ffn_ln_beta = bias(prefix + "ffn.ln.beta", d);
    layer.ffn_w1 = dense(prefix + "ffn.w1", d, cfg_.ffn_hidden);
    layer.ffn_b1 = bias(prefix + "ffn.b1", cfg_.ffn_hidden);
    layer.ffn_w2 = dense(prefix + "ffn.w2", cfg_.ffn_hidden, d);
    layer.ffn_b2 = bias(prefix + "ffn.b2", d);
    layers_.push_back(std::move(layer));
  }

  proj_w1_ = dense("proj.w1", d, d);
  proj_b1_ = bias("proj.b1", d);
  proj_w2_ = dense("proj.w2", d, cfg_.projection_dim);
  proj_b2_ = bias("proj.b2", cfg_.projection_dim);
}

template <typename S>
void EmodModel<S>::attach_head(int n_classes) {
  if (n_classes < 2) throw ConfigError("attach_head: need at least 2 classes");
  if (head_classes_ == n_classes) return;
  if (head_classes_ > 0) throw ConfigError("attach_head: head already attached");
  // zero init keeps an untrained head exactly at chance
  head_w_ = add_param("head.w", Tensor<S>::zeros({cfg_.embed_dim, n_classes}));
  head_b_ = add_param("head.b", Tensor<S>::zeros({n_classes}));
  head_classes_ = n_classes;
}

template <typename S>
Tensor<S> EmodModel<S>::classify(const Tensor<S>& pooled) const {
  if (head_classes_ == 0) throw ConfigError("classify: no head attached");
  if (pooled.dim(-1) != cfg_.embed_dim) throw ShapeError("classify: pooled feature width mismatch");
  return linear(pooled, head_w_, head_b_);
}

template <typename S>
Tensor<S> EmodModel<S>::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename S>
long EmodModel<S>::parameter_count() const {
  long n = 0;
  for (const auto& [name, t] : params_) n += static_cast<long>(t.size());
  return n;
}

template <typename S>
void EmodModel<S>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template <typename S>
SegmentInput<S> EmodModel<S>::prepare(const Eigen::MatrixXf& data,
                                      const std::vector<Index>& channel_ids) const {
  const Index c = data.rows();
  const Index t_total = data.cols();
  const Index p = cfg_.patch_length;
  if (static_cast<Index>(channel_ids.size()) != c)
    throw ShapeError("prepare: one channel id per data row required");
  for (Index id : channel_ids)
    if (id < 0 || id >= registry_.size())
      throw ConfigError("prepare: unregistered channel id " + std::to_string(id));
  const Index t_prime = t_total / p;
  if (t_prime < 1)
    throw ConfigError("prepare: segment too short, " + std::to_string(t_total) + " samples < " +
                      std::to_string(p));
  if (t_prime > cfg_.max_tokens)
    throw ConfigError("prepare: sequence too long, " + std::to_string(t_prime) + " tokens > " +
                      std::to_string(cfg_.max_tokens));

  SegmentInput<S> input;
  input.channel_ids = channel_ids;
  input.channels = c;
  input.t_prime = t_prime;
  const Index bins = cfg_.fft_bins();
  for (Index t = 0; t < t_prime; ++t) {
    ArrayX<S> raw(c * p);
    ArrayX<S> spec(c * bins);
    for (Index ch = 0; ch < c; ++ch) {
      Eigen::VectorXd patch = data.row(ch).segment(t * p, p).cast<double>().transpose();
      for (Index i = 0; i < p; ++i) raw[ch * p + i] = static_cast<S>(patch[i]);
      Eigen::VectorXd mag = window_fft_magnitude(patch);
      for (Index i = 0; i < bins; ++i) spec[ch * bins + i] = static_cast<S>(mag[i]);
    }
    input.raw.push_back(Tensor<S>::from_array({1, c, p}, std::move(raw)));
    input.spectral.push_back(Tensor<S>::from_array({1, c, bins}, std::move(spec)));
  }
  return input;
}

template <typename S>
SegmentInput<S> EmodModel<S>::prepare(const EegSegment& segment,
                                      const std::vector<std::string>& channel_names) const {
  std::vector<Index> ids;
  ids.reserve(channel_names.size());
  for (const auto& name : channel_names) ids.push_back(registry_.id_of(name));
  return prepare(segment.data, ids);
}

template <typename S>
TokenGrid<S> EmodModel<S>::tokenize(const SegmentInput<S>& input) const {
  TokenGrid<S> grid;
  grid.channel_ids = input.channel_ids;
  grid.channels = input.channels;
  grid.t_prime = input.t_prime;
  const Index c = input.channels;
  const Index k = cfg_.conv_kernel;

  auto branch = [&](const std::vector<Tensor<S>>& patches, const Tensor<S>& conv_w,
                    const Tensor<S>& gn_gamma, const Tensor<S>& gn_beta, const Tensor<S>& map_w,
                    const Tensor<S>& map_b) {
    std::vector<Tensor<S>> tokens;
    tokens.reserve(patches.size());
    for (const auto& patch : patches) {
      auto features = gelu(group_norm(conv2d(patch, conv_w, 1, k), cfg_.gn_groups, gn_gamma,
                                      gn_beta));  // [co, C, pos]
      auto per_channel = reshape(swap_axes01(features), {c, -1});
      tokens.push_back(reshape(linear(per_channel, map_w, map_b), {1, c, cfg_.embed_dim}));
    }
    return concat_axis0(tokens);  // [T', C, d]
  };
  grid.temporal = branch(input.raw, conv_t_w_, gn_t_gamma_, gn_t_beta_, map_t_w_, map_t_b_);
  grid.spectral = branch(input.spectral, conv_f_w_, gn_f_gamma_, gn_f_beta_, map_f_w_, map_f_b_);
  return grid;
}

template <typename S>
void EmodModel<S>::fuse(TokenGrid<S>& grid) const {
  if (!grid.temporal.defined() || !grid.spectral.defined())
    throw ShapeError("fuse: tokenizer outputs missing");
  if (grid.temporal.shape() != grid.spectral.shape())
    throw ShapeError("fuse: temporal/spectral token shapes differ");
  const Index d = cfg_.embed_dim;
  auto flat_t = reshape(grid.temporal, {-1, d});
  auto flat_f = reshape(grid.spectral, {-1, d});
  auto fused = linear(concat_cols(flat_t, flat_f), fuse_w_, fuse_b_);
  grid.fused = reshape(fused, {grid.t_prime, grid.channels, d});
}

template <typename S>
void EmodModel<S>::add_channel_embedding(TokenGrid<S>& grid) const {
  if (!grid.fused.defined()) throw ShapeError("add_channel_embedding: fused tokens missing");
  auto rows = gather_rows(channel_embedding_, grid.channel_ids);  // [C, d]
  grid.tokens = add(grid.fused, reshape(rows, {1, grid.channels, cfg_.embed_dim}));
}

template <typename S>
Tensor<S> EmodModel<S>::relative_bias(int layer, Index t) const {
  if (layer < 0 || layer >= cfg_.layers) throw ConfigError("relative_bias: layer out of range");
  if (t > cfg_.max_tokens) throw ConfigError("relative_bias: sequence too long");
  std::vector<Index> idx(static_cast<std::size_t>(t * t));
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < t; ++j) idx[static_cast<std::size_t>(i * t + j)] = i - j + cfg_.max_tokens - 1;
  auto col = reshape(layers_[static_cast<std::size_t>(layer)].rel_bias, {2 * cfg_.max_tokens - 1, 1});
  return reshape(gather_rows(col, idx), {t, t});
}

// Multi-head attention over the middle axis of x: [B, L, d], independently per
// leading block; optional additive logit bias [L, L] shared across blocks and
// heads.
template <typename S>
Tensor<S> EmodModel<S>::attention_pass(const Tensor<S>& x, const Attention& p,
                                       const Tensor<S>* bias, bool training, Rng& rng) const {
  const Index blocks = x.dim(0), len = x.dim(1), d = x.dim(2);
  const Index heads = cfg_.heads, dh = d / heads;
  const S scale_factor = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  auto flat = reshape(x, {blocks * len, d});
  auto q = linear(flat, p.wq, p.bq);
  auto k = linear(flat, p.wk, p.bk);
  auto v = linear(flat, p.wv, p.bv);

  std::vector<Tensor<S>> block_outputs;
  block_outputs.reserve(static_cast<std::size_t>(blocks));
  for (Index b = 0; b < blocks; ++b) {
    auto qb = slice_axis0(q, b * len, (b + 1) * len);
    auto kb = slice_axis0(k, b * len, (b + 1) * len);
    auto vb = slice_axis0(v, b * len, (b + 1) * len);
    std::vector<Tensor<S>> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    for (Index h = 0; h < heads; ++h) {
      auto qh = slice_cols(qb, h * dh, (h + 1) * dh);
      auto kh = slice_cols(kb, h * dh, (h + 1) * dh);
      auto vh = slice_cols(vb, h * dh, (h + 1) * dh);
      auto logits = scale(matmul(qh, transpose(kh)), scale_factor);
      if (bias) logits = add(logits, *bias);
      head_outputs.push_back(matmul(softmax(logits, -1), vh));
    }
    Tensor<S> merged = head_outputs[0];
    for (std::size_t h = 1; h < head_outputs.size(); ++h)
      merged = concat_cols(merged, head_outputs[h]);
    block_outputs.push_back(merged);
  }
  auto out = linear(concat_axis0(block_outputs), p.wo, p.bo);
  out = dropout(out, cfg_.dropout, rng, training);
  return reshape(out, {blocks, len, d});
}

template <typename S>
Tensor<S> EmodModel<S>::spatial_attention(const Tensor<S>& x, int layer, bool training,
                                          Rng& rng) const {
  if (layer < 0 || layer >= cfg_.layers) throw ConfigError("spatial_attention: layer out of range");
  return attention_pass(x, layers_[static_cast<std::size_t>(layer)].spatial, nullptr, training,
                        rng);
}

template <typename S>
Tensor<S> EmodModel<S>::temporal_attention(const Tensor<S>& x, int layer, bool training,
                                           Rng& rng) const {
  if (layer < 0 || layer >= cfg_.layers)
    throw ConfigError("temporal_attention: layer out of range");
  auto bias = relative_bias(layer, x.dim(1));
  return attention_pass(x, layers_[static_cast<std::size_t>(layer)].temporal, &bias, training, rng);
}

template <typename S>
EncodeResult<S> EmodModel<S>::encode(const SegmentInput<S>& input, bool training, Rng& rng) const {
  TokenGrid<S> grid = tokenize(input);
  fuse(grid);
  add_channel_embedding(grid);

  Tensor<S> x = grid.tokens;  // [T', C, d]
  for (int l = 0; l < cfg_.layers; ++l) {
    const Layer& layer = layers_[static_cast<std::size_t>(l)];
    auto normed_s = layer_norm(x, layer.spatial.ln_gamma, layer.spatial.ln_beta);
    x = add(x, spatial_attention(normed_s, l, training, rng));
    auto xc = swap_axes01(x);  // [C, T', d]
    auto normed_t = layer_norm(xc, layer.temporal.ln_gamma, layer.temporal.ln_beta);
    xc = add(xc, temporal_attention(normed_t, l, training, rng));
    x = swap_axes01(xc);
    // position-wise feed-forward
    auto normed_f = layer_norm(x, layer.ffn_ln_gamma, layer.ffn_ln_beta);
    auto flat = reshape(normed_f, {-1, cfg_.embed_dim});
    auto hidden = gelu(linear(flat, layer.ffn_w1, layer.ffn_b1));
    auto ff = dropout(linear(hidden, layer.ffn_w2, layer.ffn_b2), cfg_.dropout, rng, training);
    x = add(x, reshape(ff, x.shape()));
  }

  EncodeResult<S> out;
  out.tokens = swap_axes01(x);  // [C, T', d]
  out.pooled = reshape(mean(mean(x, 0), 0), {1, cfg_.embed_dim});
  auto hidden = gelu(linear(out.pooled, proj_w1_, proj_b1_));
  out.embedding = l2_normalize_rows(linear(hidden, proj_w2_, proj_b2_));
  return out;
}

template class EmodModel<float>;
template class EmodModel<double>;

}  // namespace emod
