#include "sko/gradcheck.hpp"

#include "sko/ops.hpp"
#include "sko/random.hpp"
#include "sko/ultraspherical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace sko {

double GradCheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport gradcheck(const std::function<Tensor<double>()>& loss,
                          const std::vector<NamedParam<double>>& params,
                          const GradCheckOptions& options) {
  for (auto p : params) p.tensor.zero_grad();
  std::vector<Buffer<double>> analytic;
  {
    Tape<double> tape;
    tape.backward(loss());
    for (const auto& p : params)
      analytic.push_back(p.tensor.has_grad() ? p.tensor.grad() : Buffer<double>::Zero(p.tensor.numel()));
  }
  for (auto p : params) p.tensor.zero_grad();

  NoGradScope<double> no_grad;
  const double h = options.step;
  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto tensor = params[pi].tensor;
    auto& values = tensor.mutable_values();
    GradCheckEntry e;
    e.name = params[pi].name;
    e.elements = values.size();
    for (Index i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return loss().item();
      };
      // fourth-order central stencil
      const double numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      values[i] = saved;
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric);
      const double mag = std::max(std::abs(a), std::abs(numeric));
      e.max_abs_error = std::max(e.max_abs_error, err);
      e.max_abs_grad = std::max(e.max_abs_grad, std::abs(a));
      if (mag > options.grad_floor) e.max_rel_error = std::max(e.max_rel_error, err / mag);
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

namespace {

using T = Tensor<double>;

T param(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  auto t = uniform_tensor<double>(std::move(shape), lo, hi, rng);
  t.set_requires_grad(true);
  return t;
}

// Values bounded away from zero with random sign.
T nonzero_param(Shape shape, Rng& rng) {
  auto t = param(std::move(shape), rng, 0.5, 2.0);
  std::bernoulli_distribution flip(0.5);
  for (Index i = 0; i < t.numel(); ++i)
    if (flip(rng)) t.mutable_values()[i] = -t.mutable_values()[i];
  return t;
}

// sum(y * r) with r drawn once, so gradients differ per element.
std::function<T(const T&)> projector(Rng& rng) {
  auto cache = std::make_shared<std::vector<T>>();
  auto gen = std::make_shared<Rng>(rng());
  return [cache, gen](const T& y) {
    for (const auto& r : *cache)
      if (r.shape() == y.shape()) return sum(mul(y, r));
    cache->push_back(uniform_tensor<double>(y.shape(), -1, 1, *gen));
    return sum(mul(y, cache->back()));
  };
}

void append(GradCheckReport& into, const std::string& prefix, const GradCheckReport& from) {
  for (auto e : from.entries) {
    e.name = prefix + "/" + e.name;
    into.entries.push_back(std::move(e));
  }
}

}  // namespace

GradCheckReport gradcheck_ops(std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(seed);
  auto proj = projector(rng);
  GradCheckReport report;
  auto check = [&](const std::string& op, std::vector<NamedParam<double>> params,
                   std::function<T()> f) {
    append(report, op, gradcheck([&] { return proj(f()); }, params, options));
  };

  {
    auto a = param({3, 4}, rng), b = param({4, 2}, rng);
    check("matmul", {{"a", a}, {"b", b}}, [=] { return matmul(a, b); });
  }
  {
    auto a = param({2, 3, 4}, rng), b = param({2, 4, 2}, rng);
    check("matmul_batched", {{"a", a}, {"b", b}}, [=] { return matmul(a, b); });
  }
  {
    auto a = param({2, 1, 3, 4}, rng), b = param({3, 4, 2}, rng);
    check("matmul_broadcast", {{"a", a}, {"b", b}}, [=] { return matmul(a, b); });
  }
  {
    auto x = param({3, 4}, rng);
    check("transpose", {{"x", x}}, [=] { return transpose(x); });
    check("reshape", {{"x", x}}, [=] { return reshape(x, Shape{2, 6}); });
    check("scale", {{"x", x}}, [=] { return scale(x, 1.7); });
    check("add_scalar", {{"x", x}}, [=] { return mul(add_scalar(x, 0.3), x); });
    check("gelu", {{"x", x}}, [=] { return gelu(x); });
    check("softmax_rows", {{"x", x}}, [=] { return softmax_rows(x); });
    check("l2_normalize_rows", {{"x", x}}, [=] { return l2_normalize_rows(x); });
    check("sum", {{"x", x}}, [=] { return mul(sum(x), sum(x)); });
    check("mean", {{"x", x}}, [=] { return mul(mean(x), sum(x)); });
  }
  {
    auto x = param({2, 3, 4}, rng);
    check("split_heads", {{"x", x}}, [=] { return split_heads(x, 2); });
    auto y = param({2, 2, 3, 2}, rng);
    check("merge_heads", {{"x", y}}, [=] { return merge_heads(y); });
  }
  {
    auto a = param({3, 4}, rng), b = param({4}, rng), c = param({3, 4}, rng);
    check("add", {{"a", a}, {"b", b}}, [=] { return add(a, b); });
    check("sub", {{"a", a}, {"b", b}}, [=] { return sub(a, b); });
    check("mul", {{"a", a}, {"c", c}}, [=] { return mul(a, c); });
    auto d = nonzero_param({3, 4}, rng);
    check("div", {{"a", a}, {"d", d}}, [=] { return div(a, d); });
  }
  {
    auto x = param({4, 4}, rng, -2, 2);
    for (Index i = 0; i < x.numel(); ++i) {
      double& v = x.mutable_values()[i];
      if (std::abs(v) < 0.01) v += 0.05;
      if (std::abs(v - 1) < 0.01) v += 0.05;
    }
    check("clamp", {{"x", x}}, [=] { return clamp(x, 0.0, 1.0); });
  }
  {
    auto x = param({2, 3, 4}, rng), m = param({3}, rng, 1.0, 3.0);
    check("divide_rows", {{"x", x}, {"m", m}}, [=] { return divide_rows(x, m); });
  }
  {
    auto x = param({3, 4}, rng), g = param({4}, rng, 0.5, 1.5);
    check("rmsnorm", {{"x", x}, {"gain", g}}, [=] { return rmsnorm(x, g, 1e-6); });
  }
  {
    auto x = param({2, 3, 3}, rng);
    check("tril_mask", {{"x", x}}, [=] { return tril_mask(x, 0.0); });
  }
  {
    auto logits = param({2, 3, 5}, rng, -2, 2);
    const std::vector<std::int32_t> targets{0, 4, 2, 1, 3, 3};
    append(report, "cross_entropy",
           gradcheck([=] { return cross_entropy(logits, targets); }, {{"logits", logits}}, options));
  }
  {
    auto table = param({5, 3}, rng);
    const std::vector<std::int32_t> ids{1, 4, 1, 0};
    check("embedding", {{"table", table}}, [=] { return embedding(table, ids, Shape{2, 2}); });
  }
  {
    auto x = param({2, 3, 3}, rng, -0.95, 0.95);
    auto kp = KernelParams<double>::create(8, {2.5, 1.5}, true);
    for (Index i = 0; i < kp.weights.numel(); ++i) kp.weights.mutable_values()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
    check("eval_kernel", {{"x", x}, {"weights", kp.weights}, {"degrees", kp.degrees}},
          [=] { return eval_kernel(x, kp); });
  }
  return report;
}

GradCheckReport gradcheck_sko_layer(std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(seed);
  AttentionSpec spec;
  spec.d_model = 8;
  spec.heads = 2;
  spec.q = 16;
  spec.degrees = {2.5, 1.5};
  spec.learn_degrees = true;
  spec.init_std = 0.4;
  auto layer = SkoAttentionLayer<double>::create(spec, rng);
  for (Index i = 0; i < layer.kernel.weights.numel(); ++i)
    layer.kernel.weights.mutable_values()[i] = std::uniform_real_distribution<double>(0.2, 1.5)(rng);
  for (Index i = 0; i < layer.rms_gain.numel(); ++i)
    layer.rms_gain.mutable_values()[i] = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  auto x = param({2, 4, 8}, rng);
  auto proj = projector(rng);
  auto params = layer.parameters("");
  params.push_back({"x", x, false});
  return gradcheck([&] { return proj(sko_forward(x, layer)); }, params, options);
}

ModelConfig micro_config(Mechanism mechanism) {
  ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 8;
  c.seq_len = 4;
  c.heads = 2;
  c.layers = 1;
  c.q = 16;
  c.degrees = {2, 3};
  c.mechanism = mechanism;
  return c;
}

GradCheckReport gradcheck_model(const ModelConfig& config, std::uint64_t seed,
                                const GradCheckOptions& options) {
  ModelConfig c = config;
  c.seed = seed;
  LanguageModel<double> model(c);
  Rng rng(seed ^ 0x5eedull);
  // Larger weights than the default init so every gradient is well above the floor.
  for (auto p : model.parameters()) {
    if (p.name.find("degrees") != std::string::npos) continue;
    auto& v = p.tensor.mutable_values();
    if (p.name.find("gain") != std::string::npos || p.name.find("kernel_weights") != std::string::npos) {
      for (Index i = 0; i < v.size(); ++i) v[i] = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    } else {
      for (Index i = 0; i < v.size(); ++i) v[i] = std::normal_distribution<double>(0.0, 0.3)(rng);
    }
  }
  std::uniform_int_distribution<std::int32_t> tok(0, std::int32_t(c.vocab_size - 1));
  TokenBatch batch{2, c.seq_len, {}};
  std::vector<std::int32_t> targets;
  for (Index i = 0; i < batch.batch * batch.length; ++i) {
    batch.ids.push_back(tok(rng));
    targets.push_back(tok(rng));
  }
  return gradcheck([&] { return model.loss(batch, targets); }, model.parameters(), options);
}

void write_gradcheck_csv(std::ostream& os, const GradCheckReport& report) {
  os << "parameter,elements,max_abs_error,max_rel_error\n";
  char buf[64];
  for (const auto& e : report.entries) {
    os << e.name << ',' << e.elements << ',';
    std::snprintf(buf, sizeof buf, "%.3e,%.3e\n", e.max_abs_error, e.max_rel_error);
    os << buf;
  }
}

}  // namespace sko
