#include "sko/selftest.hpp"

#include "sko/attention.hpp"
#include "sko/gradcheck.hpp"
#include "sko/model.hpp"
#include "sko/ops.hpp"
#include "sko/optim.hpp"
#include "sko/oracle_bridge.hpp"
#include "sko/oracles.hpp"
#include "sko/random.hpp"
#include "sko/trainer.hpp"
#include "sko/ultraspherical.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sko {

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& property) {
  if (!ok) throw Failure(property);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void suite_ultraspherical() {
  const int kmax = 12;
  std::vector<double> grid(1001);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = -1.0 + 2.0 * double(i) / 1000.0;
  const auto x = Tensor<double>::from_vector(Shape{Index(grid.size())}, grid);

  const auto legendre = eval_polynomials(x, lambda_for(2), kmax);
  double err = 0;
  for (int k = 0; k <= kmax; ++k)
    for (size_t i = 0; i < grid.size(); ++i)
      err = std::max(err, std::abs(legendre[size_t(k)][Index(i)] - oracle::legendre(k, grid[i])));
  expect(err < 1e-10, "R_k at q=2 matches Legendre (max err " + fmt(err) + ")");

  for (double lambda : {0.5, 1.0, 31.5, 63.5}) {
    const auto r = eval_polynomials(x, lambda, kmax);
    double rel = 0, bound = 0, ends = 0;
    for (int k = 0; k <= kmax; ++k) {
      const double c1 = oracle::gegenbauer_at_one(k, lambda);
      for (size_t i = 0; i < grid.size(); ++i) {
        const double ref = oracle::gegenbauer(k, lambda, grid[i]);
        const double got = r[size_t(k)][Index(i)] * c1;
        rel = std::max(rel, std::abs(got - ref) / std::max(1.0, std::abs(ref)));
        bound = std::max(bound, std::abs(r[size_t(k)][Index(i)]));
      }
      ends = std::max(ends, std::abs(r[size_t(k)][Index(grid.size() - 1)] - 1.0));
      ends = std::max(ends, std::abs(r[size_t(k)][0] - (k % 2 ? -1.0 : 1.0)));
      if (k >= 2) {
        const auto c = recurrence_coeffs(k, lambda);
        expect(std::abs(c.c1 - c.c2 - 1.0) < 1e-12, "c1 - c2 = 1 at lambda " + fmt(lambda));
      }
    }
    expect(rel < 1e-10, "R_k C_k(1) matches Gegenbauer at lambda " + fmt(lambda) + " (err " + fmt(rel) + ")");
    expect(bound <= 1 + 1e-9, "|R_k| <= 1 at lambda " + fmt(lambda));
    expect(ends < 1e-12, "R_k(1) = 1 and R_k(-1) = (-1)^k at lambda " + fmt(lambda));
  }

  // Fractional-degree kernel against the oracle.
  auto params = KernelParams<double>::create(5, {2.5, 0.7});
  Rng rng(3);
  for (Index i = 0; i < params.weights.numel(); ++i)
    params.weights.mutable_values()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto s = uniform_tensor<double>(Shape{2, 4, 4}, -1, 1, rng);
  const auto phi = eval_kernel(s, params);
  double kerr = 0;
  for (Index h = 0; h < 2; ++h) {
    std::vector<double> w(params.weights.data().begin() + h * 4, params.weights.data().begin() + (h + 1) * 4);
    for (Index i = 0; i < 16; ++i)
      kerr = std::max(kerr, std::abs(phi[h * 16 + i] - oracle::kernel(s[h * 16 + i], params.lambda(),
                                                                         params.degrees[h], w)));
  }
  expect(kerr < 1e-12, "gated kernel matches oracle (err " + fmt(kerr) + ")");
}

void suite_attention_oracle() {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    AttentionSpec spec;
    spec.d_model = 16;
    spec.heads = 2;
    spec.degrees = {2, 3};
    spec.init_std = 0.3;
    const auto layer = SkoAttentionLayer<double>::create(spec, rng);
    const auto x = normal_tensor<double>(Shape{2, 8, 16}, 1.0, rng);
    const auto y = sko_forward(x, layer);
    const auto w = oracle::sko_weights(layer);
    double err = 0;
    for (Index b = 0; b < 2; ++b) {
      const auto ref = oracle::sko_attention(oracle::to_mat(x, b), w);
      const auto got = oracle::to_mat(y, b);
      for (size_t i = 0; i < ref.data.size(); ++i) err = std::max(err, std::abs(ref.data[i] - got.data[i]));
    }
    expect(err < 1e-10, "sko layer matches per-position loop (seed " + std::to_string(seed) +
                            ", err " + fmt(err) + ")");
  }
}

void suite_causality() {
  for (Mechanism mech : {Mechanism::Sko, Mechanism::Baseline}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      ModelConfig c = micro_config(mech);
      c.seed = seed;
      LanguageModel<double> model(c);
      Rng rng(seed + 100);
      std::uniform_int_distribution<std::int32_t> tok(0, 15);
      TokenBatch batch{1, 4, {}};
      for (int i = 0; i < 4; ++i) batch.ids.push_back(tok(rng));
      const auto base = model.forward(batch);
      for (Index j = 1; j < 4; ++j) {
        TokenBatch p = batch;
        p.ids[size_t(j)] = (p.ids[size_t(j)] + 1) % 16;
        const auto out = model.forward(p);
        for (Index i = 0; i < j * 16; ++i)
          expect(out[i] == base[i], to_string(mech) + " logits before position " + std::to_string(j) +
                                        " unchanged by perturbing it");
      }
    }
    // Gradient form on the attention layer alone.
    Rng rng(7);
    AttentionSpec spec;
    spec.d_model = 8;
    spec.heads = 2;
    spec.degrees = {2, 3};
    spec.init_std = 0.3;
    const auto layer = AttentionLayer<double>::create(mech, spec, rng);
    for (Index i = 0; i < 4; ++i) {
      auto x = normal_tensor<double>(Shape{1, 5, 8}, 1.0, rng, true);
      Tape<double> tape;
      const auto y = layer.forward(x);
      std::vector<double> mask(size_t(y.numel()), 0.0);
      for (Index t = 0; t <= i; ++t)
        for (Index d = 0; d < 8; ++d) mask[size_t(t * 8 + d)] = 1.0;
      tape.backward(sum(mul(y, Tensor<double>::from_vector(y.shape(), mask))));
      for (Index t = i + 1; t < 5; ++t)
        for (Index d = 0; d < 8; ++d)
          expect(x.grad()[t * 8 + d] == 0.0, to_string(mech) + " gradient of outputs <= " + std::to_string(i) +
                                                 " w.r.t. later input is zero");
      for (auto p : layer.parameters("")) p.tensor.zero_grad();
    }
  }
}

void suite_gradcheck() {
  const auto ops = gradcheck_ops(11);
  for (const auto& e : ops.entries)
    expect(e.max_rel_error < 1e-6, "op gradient " + e.name + " (rel err " + fmt(e.max_rel_error) + ")");
  const auto layer = gradcheck_sko_layer(12);
  for (const auto& e : layer.entries)
    expect(e.max_rel_error < 1e-5, "sko layer gradient " + e.name + " (rel err " + fmt(e.max_rel_error) + ")");
  for (Mechanism m : {Mechanism::Sko, Mechanism::Baseline}) {
    const auto model = gradcheck_model(micro_config(m), 13);
    for (const auto& e : model.entries)
      expect(e.max_rel_error < 1e-5, to_string(m) + " model gradient " + e.name + " (rel err " +
                                         fmt(e.max_rel_error) + ")");
  }
}

void suite_rmsnorm_invariance() {
  Rng rng(5);
  AttentionSpec spec;
  spec.d_model = 16;
  spec.heads = 2;
  spec.degrees = {2, 3};
  spec.init_std = 1.0;
  const auto layer = SkoAttentionLayer<double>::create(spec, rng);
  const auto x = normal_tensor<double>(Shape{2, 8, 16}, 30.0, rng);
  for (double alpha : {1e-3, 1.0, 7.3}) {
    const auto r = density_invariance_check(layer, x, alpha);
    expect(r.max_rel_diff < 1e-3, "RMSNorm removes a positive scale alpha = " + fmt(alpha) +
                                      " (rel diff " + fmt(r.max_rel_diff) + ")");
  }
  const auto unit = density_invariance_check(layer, x, 1.0);
  expect(unit.max_abs_diff == 0.0, "alpha = 1 reproduces the output exactly");
}

void suite_optimizer() {
  expect(std::abs(cosine_lr(0, 100, 6e-4, 1e-5) - 6e-4) < 1e-18, "cosine schedule starts at lr_base");
  expect(std::abs(cosine_lr(100, 100, 6e-4, 1e-5) - 1e-5) < 1e-18, "cosine schedule ends at lr_min");
  double prev = cosine_lr(0, 100, 6e-4, 1e-5);
  for (Index s = 1; s <= 100; ++s) {
    const double lr = cosine_lr(s, 100, 6e-4, 1e-5);
    expect(lr <= prev, "cosine schedule is non-increasing");
    prev = lr;
  }
  auto p = Tensor<double>::from_vector(Shape{1}, {0.7}, true);
  AdamW<double> opt({{"p", p, true}}, {0.9, 0.999, 1e-8, 0.1});
  oracle::ScalarAdam ref;
  double expected = 0.7;
  const double grads[] = {1.0, -0.5, 0.25, 2.0};
  for (double g : grads) {
    p.node()->grad_buffer()[0] = g;
    opt.step(0.1);
    p.zero_grad();
    expected = ref.step(expected, g, 0.1, 0.9, 0.999, 1e-8, 0.1);
  }
  expect(std::abs(p[0] - expected) < 1e-14, "AdamW matches the scalar reference");
}

void suite_resume_invariance() {
  ModelConfig c = micro_config(Mechanism::Sko);
  c.seq_len = 8;
  std::vector<std::int32_t> tokens;
  Rng rng(9);
  std::uniform_int_distribution<std::int32_t> tok(0, 15);
  for (int i = 0; i < 600; ++i) tokens.push_back(tok(rng));
  const DataSplit data = split_tokens(tokens, 0.25);
  TrainConfig t;
  t.total_steps = 20;
  t.eval_interval = 5;
  t.batch_size = 2;
  t.eval_batches = 2;
  t.lr_base = 1e-2;

  const auto root = std::filesystem::temp_directory_path() /
                    ("sko_selftest_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() { std::filesystem::remove_all(p); }
  } cleanup{root};

  LanguageModel<double> straight(c);
  TrainOptions a;
  a.out_dir = root / "straight";
  const auto full = train(straight, t, data, a);

  LanguageModel<double> first(c);
  TrainOptions b;
  b.out_dir = root / "split";
  b.stop_after = 10;
  train(first, t, data, b);
  LanguageModel<double> second(c);
  TrainOptions r;
  r.out_dir = root / "split";
  r.resume_from = root / "split" / "checkpoints" / "step_10.ckpt";
  const auto resumed = train(second, t, data, r);

  expect(full.rows.size() == resumed.rows.size(), "resumed run has the same number of eval rows");
  for (size_t i = 0; i < full.rows.size(); ++i) {
    const auto &x = full.rows[i], &y = resumed.rows[i];
    expect(x.step == y.step && x.train_loss == y.train_loss && x.val_loss == y.val_loss && x.lr == y.lr,
           "resumed metrics equal uninterrupted metrics at step " + std::to_string(x.step));
  }
  const auto pa = straight.parameters(), pb = second.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    expect((pa[i].tensor.values() == pb[i].tensor.values()).all(),
           "resumed parameters equal uninterrupted parameters (" + pa[i].name + ")");
}

const std::vector<std::pair<std::string, std::function<void()>>>& registry() {
  static const std::vector<std::pair<std::string, std::function<void()>>> suites = {
      {"ultraspherical", suite_ultraspherical},
      {"attention-oracle", suite_attention_oracle},
      {"causality", suite_causality},
      {"gradcheck", suite_gradcheck},
      {"rmsnorm-invariance", suite_rmsnorm_invariance},
      {"optimizer", suite_optimizer},
      {"resume-invariance", suite_resume_invariance},
  };
  return suites;
}

}  // namespace

std::vector<std::string> selftest_suites() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

std::vector<SuiteResult> run_selftest(std::ostream& os, const std::vector<std::string>& only) {
  for (const auto& name : only) {
    bool known = false;
    for (const auto& [n, fn] : registry()) known = known || n == name;
    if (!known) throw std::invalid_argument("selftest: unknown suite '" + name + "'");
  }
  std::vector<SuiteResult> results;
  for (const auto& [name, fn] : registry()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    SuiteResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
      r.passed = true;
    } catch (const std::exception& e) {
      r.failure = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[96];
    std::snprintf(line, sizeof line, "[%s] %-20s %7.2fs", r.passed ? "PASS" : "FAIL", name.c_str(), r.seconds);
    os << line;
    if (!r.passed) os << "  " << r.failure;
    os << '\n';
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace sko
