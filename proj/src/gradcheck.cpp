// SPDX-License-Identifier: Apache-2.0
#include "emod/gradcheck.hpp"

#include <functional>

#include "emod/losses.hpp"
#include "emod/model.hpp"

namespace emod {

namespace {

using T = Tensor<double>;

// Scalarizes the op output against a weight tensor drawn once, so repeated
// forward evaluations see the same function.
GradCheckReport check_op(const std::string& label, Rng& rng, const std::function<T()>& op,
                         std::vector<T> leaves, double rtol = 1e-4) {
  auto probe = op();
  auto w = T::randn(probe.shape(), rng);
  auto forward = [&] { return sum_all(mul(op(), w)); };
  return check_gradients(forward, std::move(leaves), label, 1e-5, rtol);
}

}  // namespace

GradCheckReport run_op_gradient_suite(std::uint64_t base_seed, int n_seeds) {
  GradCheckReport report;
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(base_seed + static_cast<std::uint64_t>(s) * 7919);
    const Index p = 2 + rng.uniform_index(3);
    const Index q = 2 + rng.uniform_index(3);
    const Index r = 2 + rng.uniform_index(3);

    {
      auto a = T::randn({p, q}, rng).set_requires_grad(true);
      auto b = T::randn({q, r}, rng).set_requires_grad(true);
      report.merge(check_op("matmul", rng, [&] { return matmul(a, b); }, {a, b}));
    }
    {
      auto a = T::randn({3, p, q}, rng).set_requires_grad(true);
      auto b = T::randn({q, r}, rng).set_requires_grad(true);
      report.merge(check_op("matmul batched", rng, [&] { return matmul(a, b); }, {a, b}));
    }
    {
      auto a = T::randn({p, q}, rng).set_requires_grad(true);
      auto b = T::randn({q}, rng).set_requires_grad(true);
      report.merge(check_op("add broadcast", rng, [&] { return add(a, b); }, {a, b}));
      report.merge(check_op("sub broadcast", rng, [&] { return sub(a, b); }, {a, b}));
      report.merge(check_op("mul broadcast", rng, [&] { return mul(a, b); }, {a, b}));
      auto c = T::uniform({q}, rng, 0.5, 2.0).set_requires_grad(true);
      report.merge(check_op("div broadcast", rng, [&] { return div(a, c); }, {a, c}));
    }
    {
      auto x = T::randn({p, q}, rng).set_requires_grad(true);
      report.merge(check_op("exp", rng, [&] { return exp(x); }, {x}));
      report.merge(check_op("gelu", rng, [&] { return gelu(x); }, {x}));
      report.merge(check_op("neg", rng, [&] { return neg(x); }, {x}));
      report.merge(check_op("scale", rng, [&] { return scale(x, 1.7); }, {x}));
      report.merge(check_op("add_scalar", rng, [&] { return add_scalar(x, -0.3); }, {x}));
      report.merge(check_op("max_scalar", rng, [&] { return max_scalar(x, 0.1); }, {x}));
      auto pos = T::uniform({p, q}, rng, 0.5, 3.0).set_requires_grad(true);
      report.merge(check_op("log", rng, [&] { return log(pos); }, {pos}));
      report.merge(check_op("sqrt", rng, [&] { return sqrt(pos); }, {pos}));
    }
    {
      auto x = T::randn({p, q}, rng).set_requires_grad(true);
      report.merge(check_op("softmax axis0", rng, [&] { return softmax(x, 0); }, {x}));
      report.merge(check_op("softmax axis-1", rng, [&] { return softmax(x, -1); }, {x}));
      report.merge(check_op("sum axis0", rng, [&] { return sum(x, 0); }, {x}));
      report.merge(check_op("mean keepdims", rng, [&] { return mean(x, 1, true); }, {x}));
      report.merge(check_gradients([&] { return sum_all(x); }, {x}, "sum_all"));
      report.merge(check_gradients([&] { return mean_all(mul(x, x)); }, {x}, "mean_all"));
    }
    {
      auto x = T::randn({p, q, r}, rng).set_requires_grad(true);
      report.merge(check_op("reshape", rng, [&] { return reshape(x, {p * q, r}); }, {x}));
      report.merge(check_op("swap_axes01", rng, [&] { return swap_axes01(x); }, {x}));
      report.merge(
          check_op("transpose", rng, [&] { return transpose(reshape(x, {p, q * r})); }, {x}));
      report.merge(check_op("slice_axis0", rng, [&] { return slice_axis0(x, 0, p - 1); }, {x}));
      report.merge(check_op(
          "slice_cols", rng, [&] { return slice_cols(reshape(x, {p, q * r}), 1, q * r - 1); },
          {x}));
      report.merge(check_op(
          "concat_axis0", rng,
          [&] {
            std::vector<T> parts = {x, mul(x, x)};
            return concat_axis0(parts);
          },
          {x}));
    }
    {
      auto table = T::randn({5, q}, rng).set_requires_grad(true);
      std::vector<Index> idx = {4, 1, 1, 0, 2, 4};
      report.merge(check_op("gather_rows", rng, [&] { return gather_rows(table, idx); }, {table}));
    }
    {
      auto x = T::randn({2, 4, 9}, rng).set_requires_grad(true);
      auto k = T::randn({3, 2, 2, 3}, rng).set_requires_grad(true);
      report.merge(check_op("conv2d", rng, [&] { return conv2d(x, k, 1, 2); }, {x, k}));
    }
    {
      auto x = T::randn({4, 6}, rng).set_requires_grad(true);
      auto gamma = T::uniform({4}, rng, 0.5, 1.5).set_requires_grad(true);
      auto beta = T::randn({4}, rng).set_requires_grad(true);
      report.merge(check_op("group_norm", rng, [&] { return group_norm(x, 2, gamma, beta); },
                            {x, gamma, beta}));
      auto lg = T::uniform({6}, rng, 0.5, 1.5).set_requires_grad(true);
      auto lb = T::randn({6}, rng).set_requires_grad(true);
      report.merge(
          check_op("layer_norm", rng, [&] { return layer_norm(x, lg, lb); }, {x, lg, lb}));
      report.merge(check_op("l2_normalize", rng, [&] { return l2_normalize_rows(x); }, {x}));
    }
  }
  return report;
}

GradCheckReport run_end_to_end_gradcheck(std::uint64_t seed, int params_to_check) {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.ffn_hidden = 12;
  cfg.conv_channels = 4;
  cfg.conv_kernel = 16;
  cfg.gn_groups = 2;
  cfg.patch_length = 64;
  cfg.max_channels = 8;
  cfg.max_tokens = 4;
  cfg.projection_dim = 6;
  cfg.dropout = 0.0;

  EmodModel<double> model(cfg, seed);
  std::vector<Index> ids;
  for (int i = 0; i < 2; ++i)
    ids.push_back(model.registry().register_channel("G" + std::to_string(i)));

  Rng rng(seed ^ 0xabcdef);
  std::vector<SegmentInput<double>> inputs;
  std::vector<VaPoint> va;
  for (int s = 0; s < 6; ++s) {
    Eigen::MatrixXf data(2, 128);
    for (Eigen::Index i = 0; i < data.size(); ++i)
      data.data()[i] = static_cast<float>(rng.normal());
    inputs.push_back(model.prepare(data, ids));
    va.push_back({rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)});
  }
  const auto weights = soft_weights(va, 5.0);

  Rng dummy(0);
  auto forward = [&]() {
    std::vector<Tensor<double>> embeddings;
    for (const auto& input : inputs)
      embeddings.push_back(model.encode(input, false, dummy).embedding);
    return va_contrastive_loss(concat_axis0(embeddings), weights, 0.07);
  };

  model.zero_grad();
  auto loss = forward();
  backward(loss);

  GradCheckReport report;
  Rng pick(seed ^ 0x5151);
  const auto& params = model.parameters();
  for (int c = 0; c < params_to_check; ++c) {
    const auto& [name, tensor] =
        params[static_cast<std::size_t>(pick.uniform_index(static_cast<std::int64_t>(params.size())))];
    const Index entry = pick.uniform_index(tensor.size());
    auto t = tensor;
    const double bp = t.has_grad() ? t.grad()[entry] : 0.0;
    const double orig = t.values_mut()[entry];
    t.values_mut()[entry] = orig + 1e-5;
    const double fp = forward().scalar_value();
    t.values_mut()[entry] = orig - 1e-5;
    const double fm = forward().scalar_value();
    t.values_mut()[entry] = orig;
    const double fd = (fp - fm) / 2e-5;
    const double diff = std::abs(fd - bp);
    const double rel = diff / std::max({std::abs(fd), std::abs(bp), 1e-12});
    ++report.checks;
    if (diff > 1e-7 && rel > 1e-4) {
      ++report.failures;
      report.messages.push_back("end-to-end: " + name + "[" + std::to_string(entry) +
                                "] fd=" + std::to_string(fd) + " bp=" + std::to_string(bp));
    }
    if (diff > 1e-7) report.worst_rel = std::max(report.worst_rel, rel);
  }
  return report;
}

}  // namespace emod
