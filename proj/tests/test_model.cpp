// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "emod/model.hpp"

using namespace emod;
using TensorD = emod::Tensor<double>;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg = ModelConfig::desk_profile();
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.ffn_hidden = 24;
  cfg.conv_channels = 8;
  cfg.conv_kernel = 16;
  cfg.patch_length = 64;
  cfg.projection_dim = 8;
  cfg.max_tokens = 8;
  return cfg;
}

Eigen::MatrixXf random_segment_data(int channels, int samples, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXf data(channels, samples);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    data.data()[i] = static_cast<float>(rng.normal());
  return data;
}

std::vector<Index> register_channels(EmodModel<double>& model, int count,
                                     const std::string& prefix = "CH") {
  std::vector<Index> ids;
  for (int i = 0; i < count; ++i)
    ids.push_back(model.registry().register_channel(prefix + std::to_string(i)));
  return ids;
}

}  // namespace

TEST_CASE("token count follows floor(T / patch_length)") {
  ModelConfig cfg = tiny_config();
  cfg.patch_length = 200;
  cfg.conv_kernel = 25;
  cfg.max_tokens = 16;
  EmodModel<double> model(cfg, 1);
  std::vector<Index> ids;
  for (int i = 0; i < 3; ++i) ids.push_back(model.registry().register_channel("E" + std::to_string(i)));
  auto input = model.prepare(random_segment_data(3, 2000, 7), ids);
  CHECK(input.t_prime == 10);
  auto grid = model.tokenize(input);
  CHECK(grid.temporal.shape() == Shape{10, 3, 16});
  CHECK(grid.spectral.shape() == Shape{10, 3, 16});

  CHECK_THROWS_AS(model.prepare(random_segment_data(3, 150, 7), ids), ConfigError);
}

TEST_CASE("all-zero segments give identical tokens across patches") {
  EmodModel<double> model(tiny_config(), 2);
  auto ids = register_channels(model, 4);
  Eigen::MatrixXf zeros = Eigen::MatrixXf::Zero(4, 256);
  auto grid = model.tokenize(model.prepare(zeros, ids));
  REQUIRE(grid.t_prime == 4);
  const Index block = 4 * 16;
  for (Index t = 1; t < 4; ++t) {
    CHECK((grid.temporal.values().segment(t * block, block) -
           grid.temporal.values().segment(0, block))
              .abs()
              .maxCoeff() < 1e-12);
    CHECK((grid.spectral.values().segment(t * block, block) -
           grid.spectral.values().segment(0, block))
              .abs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("channel reordering permutes tokens identically") {
  EmodModel<double> model(tiny_config(), 3);
  auto ids = register_channels(model, 5);
  auto data = random_segment_data(5, 128, 11);
  auto grid = model.tokenize(model.prepare(data, ids));

  std::vector<int> perm = {3, 1, 4, 0, 2};
  Eigen::MatrixXf pdata(5, 128);
  std::vector<Index> pids(5);
  for (int i = 0; i < 5; ++i) {
    pdata.row(i) = data.row(perm[i]);
    pids[i] = ids[perm[i]];
  }
  auto pgrid = model.tokenize(model.prepare(pdata, pids));
  const Index d = 16;
  for (Index t = 0; t < grid.t_prime; ++t)
    for (int c = 0; c < 5; ++c) {
      auto expect = grid.temporal.values().segment((t * 5 + perm[c]) * d, d);
      auto got = pgrid.temporal.values().segment((t * 5 + c) * d, d);
      CHECK((expect - got).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("fusion with selector weights picks one branch") {
  EmodModel<double> model(tiny_config(), 4);
  auto ids = register_channels(model, 3);
  auto grid = model.tokenize(model.prepare(random_segment_data(3, 128, 13), ids));

  auto fuse_w = model.parameter("fuse.w");
  auto fuse_b = model.parameter("fuse.b");
  fuse_b.values_mut().setZero();
  const Index d = 16;
  fuse_w.values_mut().setZero();
  for (Index i = 0; i < d; ++i) fuse_w.values_mut()[i * d + i] = 1.0;  // [I_d | 0]
  model.fuse(grid);
  CHECK((grid.fused.values() - grid.temporal.values()).abs().maxCoeff() < 1e-12);

  fuse_w.values_mut().setZero();
  for (Index i = 0; i < d; ++i) fuse_w.values_mut()[(d + i) * d + i] = 1.0;  // [0 | I_d]
  model.fuse(grid);
  CHECK((grid.fused.values() - grid.spectral.values()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fusion gradient matches finite differences") {
  EmodModel<double> model(tiny_config(), 5);
  auto ids = register_channels(model, 2);
  auto input = model.prepare(random_segment_data(2, 128, 17), ids);
  auto fuse_w = model.parameter("fuse.w");
  Rng wrng(23);
  auto w = TensorD::randn({input.t_prime, 2, 16}, wrng);
  auto f = [&] {
    auto grid = model.tokenize(input);
    model.fuse(grid);
    return sum_all(mul(grid.fused, w));
  };
  model.zero_grad();
  backward(f());
  for (Index i = 0; i < fuse_w.size(); i += 7) {
    const double orig = fuse_w.values_mut()[i];
    fuse_w.values_mut()[i] = orig + 1e-5;
    const double fp = f().scalar_value();
    fuse_w.values_mut()[i] = orig - 1e-5;
    const double fm = f().scalar_value();
    fuse_w.values_mut()[i] = orig;
    const double fd = (fp - fm) / 2e-5;
    CHECK(std::abs(fd - fuse_w.grad()[i]) /
              std::max({std::abs(fd), std::abs(fuse_w.grad()[i]), 1e-8}) < 1e-5);
  }
}

TEST_CASE("channel embedding is broadcast along time and shared by identity") {
  EmodModel<double> model(tiny_config(), 6);
  auto ids = register_channels(model, 3);
  auto grid = model.tokenize(model.prepare(random_segment_data(3, 192, 19), ids));
  model.fuse(grid);

  auto table = model.parameter("channel_embedding");
  ArrayX<double> saved = table.values_mut();
  table.values_mut().setZero();
  model.add_channel_embedding(grid);
  CHECK((grid.tokens.values() - grid.fused.values()).abs().maxCoeff() < 1e-12);

  table.values_mut() = saved;
  model.add_channel_embedding(grid);
  const Index d = 16;
  // H[c][t1] - X[c][t1] equals H[c][t2] - X[c][t2]
  for (int c = 0; c < 3; ++c) {
    ArrayX<double> delta0 = grid.tokens.values().segment((0 * 3 + c) * d, d) -
                            grid.fused.values().segment((0 * 3 + c) * d, d);
    for (Index t = 1; t < grid.t_prime; ++t) {
      ArrayX<double> dt = grid.tokens.values().segment((t * 3 + c) * d, d) -
                          grid.fused.values().segment((t * 3 + c) * d, d);
      CHECK((dt - delta0).abs().maxCoeff() < 1e-12);
    }
    // the broadcast row is exactly the registry row for this channel id
    ArrayX<double> row = table.values().segment(ids[c] * d, d);
    CHECK((delta0 - row).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("datasets sharing an electrode name share the embedding row") {
  EmodModel<double> model(tiny_config(), 7);
  auto a = model.registry().register_all({"Fp1", "Cz", "O2"});
  auto b = model.registry().register_all({"Cz", "T7"});
  CHECK(a[1] == b[0]);
  CHECK(model.registry().size() == 4);
  CHECK(model.registry().id_of("Cz") == a[1]);
}

TEST_CASE("registry rejects unknown channels and capacity overflows") {
  ModelConfig cfg = tiny_config();
  cfg.max_channels = 2;
  EmodModel<double> model(cfg, 8);
  model.registry().register_all({"A", "B"});
  CHECK_THROWS_AS(model.registry().register_channel("C"), ConfigError);
  CHECK_THROWS_AS(model.registry().id_of("missing"), ConfigError);
}

TEST_CASE("spatial attention on a single channel is the value path") {
  EmodModel<double> model(tiny_config(), 9);
  Rng rng(5), dummy(0);
  auto x = TensorD::randn({3, 1, 16}, rng);  // T'=3, C=1
  auto out = model.spatial_attention(x, 0, false, dummy);
  auto flat = reshape(x, {3, 16});
  auto expect = linear(linear(flat, model.parameter("layer0.spatial.wv"),
                              model.parameter("layer0.spatial.bv")),
                       model.parameter("layer0.spatial.wo"), model.parameter("layer0.spatial.bo"));
  CHECK((out.values() - expect.values()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("identical tokens across channels give identical attention outputs") {
  EmodModel<double> model(tiny_config(), 10);
  Rng rng(7), dummy(0);
  auto row = TensorD::randn({1, 1, 16}, rng);
  std::vector<TensorD> copies(5, row);
  auto x = concat_axis0(copies);        // [5,1,16] -> want [1,5,16]
  auto xt = swap_axes01(x);             // [1,5,16]
  auto out = model.spatial_attention(xt, 0, false, dummy);
  const Index d = 16;
  for (int c = 1; c < 5; ++c)
    CHECK((out.values().segment(c * d, d) - out.values().segment(0, d)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("spatial attention is permutation equivariant") {
  EmodModel<double> model(tiny_config(), 11);
  Rng rng(9), dummy(0);
  const int c = 6;
  auto x = TensorD::randn({2, c, 16}, rng);
  auto out = model.spatial_attention(x, 1, false, dummy);
  std::vector<int> perm = {5, 2, 0, 4, 1, 3};
  ArrayX<double> pvals(x.size());
  const Index d = 16;
  for (Index t = 0; t < 2; ++t)
    for (int i = 0; i < c; ++i)
      pvals.segment((t * c + i) * d, d) = x.values().segment((t * c + perm[i]) * d, d);
  auto pout = model.spatial_attention(TensorD::from_array({2, c, 16}, std::move(pvals)), 1, false,
                                      dummy);
  for (Index t = 0; t < 2; ++t)
    for (int i = 0; i < c; ++i) {
      auto expect = out.values().segment((t * c + perm[i]) * d, d);
      auto got = pout.values().segment((t * c + i) * d, d);
      CHECK((expect - got).abs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("zero relative bias reduces temporal attention to plain attention") {
  EmodModel<double> model(tiny_config(), 12);
  // rel_bias is zero initialized; realized R must be exactly zero
  auto bias = model.relative_bias(0, 5);
  CHECK(bias.values().abs().maxCoeff() == 0.0);
}

TEST_CASE("dominant self-offset bias makes attention mix only the token itself") {
  EmodModel<double> model(tiny_config(), 13);
  auto rel = model.parameter("layer0.temporal.rel_bias");
  rel.values_mut().setConstant(-10.0);
  rel.values_mut()[tiny_config().max_tokens - 1] = 10.0;  // offset zero slot
  // near-zero queries/keys so logits are dominated by the bias
  model.parameter("layer0.temporal.wq").values_mut() *= 1e-6;
  model.parameter("layer0.temporal.wk").values_mut() *= 1e-6;
  Rng rng(11), dummy(0);
  auto x = TensorD::randn({2, 4, 16}, rng);  // C=2, T'=4
  auto out = model.temporal_attention(x, 0, false, dummy);
  auto flat = reshape(x, {8, 16});
  auto expect = linear(linear(flat, model.parameter("layer0.temporal.wv"),
                              model.parameter("layer0.temporal.bv")),
                       model.parameter("layer0.temporal.wo"), model.parameter("layer0.temporal.bo"));
  CHECK((out.values() - expect.values()).abs().maxCoeff() < 1e-6);
}

TEST_CASE("relative bias realization is Toeplitz and offset-stable") {
  EmodModel<double> model(tiny_config(), 14);
  auto rel = model.parameter("layer1.temporal.rel_bias");
  Rng rng(13);
  for (Index i = 0; i < rel.size(); ++i) rel.values_mut()[i] = rng.normal();
  auto r5 = model.relative_bias(1, 5);
  for (Index i = 0; i + 1 < 5; ++i)
    for (Index j = 0; j + 1 < 5; ++j)
      CHECK(r5.at({i, j}) == r5.at({i + 1, j + 1}));
  // shorter sequences read the same offsets
  auto r3 = model.relative_bias(1, 3);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(r3.at({i, j}) == r5.at({i, j}));

  CHECK_THROWS_AS(model.relative_bias(1, 100), ConfigError);
}

TEST_CASE("temporal bias gradient matches finite differences") {
  EmodModel<double> model(tiny_config(), 15);
  auto rel = model.parameter("layer0.temporal.rel_bias");
  Rng rng(17), dummy(0);
  auto x = TensorD::randn({2, 4, 16}, rng);
  auto w = TensorD::randn({2, 4, 16}, rng);
  auto f = [&] { return sum_all(mul(model.temporal_attention(x, 0, false, dummy), w)); };
  model.zero_grad();
  backward(f());
  for (Index i = 0; i < rel.size(); ++i) {
    const double orig = rel.values_mut()[i];
    rel.values_mut()[i] = orig + 1e-5;
    const double fp = f().scalar_value();
    rel.values_mut()[i] = orig - 1e-5;
    const double fm = f().scalar_value();
    rel.values_mut()[i] = orig;
    const double fd = (fp - fm) / 2e-5;
    const double bp = rel.grad()[i];
    CHECK(std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-8}) < 1e-4);
  }
}

TEST_CASE("encode produces unit embeddings for variable channel counts") {
  ModelConfig cfg = tiny_config();
  cfg.max_channels = 80;
  EmodModel<double> model(cfg, 16);
  auto ids14 = register_channels(model, 14, "A");
  std::vector<Index> ids62;
  for (int i = 0; i < 62; ++i)
    ids62.push_back(model.registry().register_channel("B" + std::to_string(i)));
  Rng dummy(0);
  auto r14 = model.encode(model.prepare(random_segment_data(14, 128, 21), ids14), false, dummy);
  auto r62 = model.encode(model.prepare(random_segment_data(62, 128, 23), ids62), false, dummy);
  CHECK(std::abs(std::sqrt(r14.embedding.values().square().sum()) - 1.0) < 1e-5);
  CHECK(std::abs(std::sqrt(r62.embedding.values().square().sum()) - 1.0) < 1e-5);
  CHECK(r14.tokens.shape() == Shape{14, 2, 16});
  CHECK(r62.tokens.shape() == Shape{62, 2, 16});
}

TEST_CASE("paper-profile parameter count sits in the expected band") {
  EmodModel<float> model(ModelConfig::paper_profile(), 1);
  const long count = model.parameter_count();
  CHECK(count >= 500000);
  CHECK(count <= 1500000);
}

TEST_CASE("channel permutation leaves the embedding unchanged") {
  EmodModel<float> model(ModelConfig::desk_profile(), 17);
  std::vector<Index> ids;
  for (int i = 0; i < 6; ++i)
    ids.push_back(model.registry().register_channel("P" + std::to_string(i)));
  Eigen::MatrixXf data = random_segment_data(6, 256, 29);
  Rng dummy(0);
  auto base = model.encode(model.prepare(data, ids), false, dummy);

  std::vector<int> perm = {4, 0, 5, 2, 1, 3};
  Eigen::MatrixXf pdata(6, 256);
  std::vector<Index> pids(6);
  for (int i = 0; i < 6; ++i) {
    pdata.row(i) = data.row(perm[i]);
    pids[i] = ids[perm[i]];
  }
  auto permuted = model.encode(model.prepare(pdata, pids), false, dummy);
  CHECK((base.embedding.values() - permuted.embedding.values()).abs().maxCoeff() < 1e-5f);

  // per-channel token outputs permute identically
  const Index d = model.config().embed_dim;
  const Index t = base.tokens.dim(1);
  for (int c = 0; c < 6; ++c) {
    auto expect = base.tokens.values().segment(perm[c] * t * d, t * d);
    auto got = permuted.tokens.values().segment(c * t * d, t * d);
    CHECK((expect - got).abs().maxCoeff() < 1e-4f);
  }
}

TEST_CASE("forward pass stays finite for large-amplitude inputs") {
  EmodModel<float> model(ModelConfig::desk_profile(), 18);
  std::vector<Index> ids;
  for (int i = 0; i < 4; ++i)
    ids.push_back(model.registry().register_channel("L" + std::to_string(i)));
  Eigen::MatrixXf data = random_segment_data(4, 256, 31) * 100.0f;
  Rng dummy(0);
  auto result = model.encode(model.prepare(data, ids), false, dummy);
  CHECK(result.tokens.values().isFinite().all());
  CHECK(result.embedding.values().isFinite().all());
}

TEST_CASE("classifier head: zero init is uniform, shapes and gradient check out") {
  EmodModel<double> model(tiny_config(), 19);
  model.attach_head(3);
  Rng rng(37);
  auto pooled = TensorD::randn({1, 16}, rng);
  auto logits = model.classify(pooled);
  CHECK(logits.shape() == Shape{1, 3});
  auto probs = softmax(logits, -1);
  for (Index i = 0; i < 3; ++i) CHECK(probs.values()[i] == doctest::Approx(1.0 / 3.0));

  auto head_w = model.parameter("head.w");
  auto w = TensorD::randn({1, 3}, rng);
  auto f = [&] { return sum_all(mul(model.classify(pooled), w)); };
  model.zero_grad();
  backward(f());
  for (Index i = 0; i < head_w.size(); ++i) {
    const double orig = head_w.values_mut()[i];
    head_w.values_mut()[i] = orig + 1e-5;
    const double fp = f().scalar_value();
    head_w.values_mut()[i] = orig - 1e-5;
    const double fm = f().scalar_value();
    head_w.values_mut()[i] = orig;
    const double fd = (fp - fm) / 2e-5;
    CHECK(std::abs(fd - head_w.grad()[i]) /
              std::max({std::abs(fd), std::abs(head_w.grad()[i]), 1e-8}) < 1e-5);
  }
  CHECK_THROWS_AS(model.attach_head(5), ConfigError);
}

TEST_CASE("encode is bit-deterministic for identical inputs") {
  EmodModel<double> model(tiny_config(), 20);
  auto ids = register_channels(model, 3);
  auto data = random_segment_data(3, 128, 41);
  Rng d1(0), d2(0);
  auto a = model.encode(model.prepare(data, ids), false, d1);
  auto b = model.encode(model.prepare(data, ids), false, d2);
  CHECK((a.embedding.values() == b.embedding.values()).all());
}

TEST_CASE("model config json round trip and validation") {
  auto cfg = ModelConfig::desk_profile();
  auto text = cfg.to_json();
  auto back = ModelConfig::from_json(text);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.patch_length == cfg.patch_length);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"bogus\": 1}"), ConfigError);

  ModelConfig bad = cfg;
  bad.embed_dim = 30;  // not divisible by 4 heads
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
