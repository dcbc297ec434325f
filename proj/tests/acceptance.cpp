// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--skip 9] [--out-dir DIR]
//
// Exit status is 0 only if every selected criterion passes.

#include "sko/bench.hpp"
#include "sko/checkpoint.hpp"
#include "sko/compare.hpp"
#include "sko/config.hpp"
#include "sko/gradcheck.hpp"
#include "sko/model.hpp"
#include "sko/ops.hpp"
#include "sko/oracle_bridge.hpp"
#include "sko/oracles.hpp"
#include "sko/random.hpp"
#include "sko/tokenizer.hpp"
#include "sko/trainer.hpp"
#include "sko/ultraspherical.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace sko;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && passed) {
      passed = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

fs::path g_out = "acceptance_out";

// ---------------------------------------------------------------- 1

const double kLambdas[] = {0.5, 1.0, 31.5};

std::vector<double> grid_1001() {
  std::vector<double> g(1001);
  for (int i = 0; i <= 1000; ++i) g[size_t(i)] = -1.0 + 2.0 * i / 1000.0;
  return g;
}

Outcome polynomial_oracles() {
  Outcome o;
  const auto g = grid_1001();
  const auto x = Tensor<double>::from_vector({1001}, g);
  double worst = 0;
  for (double lambda : kLambdas) {
    const auto R = eval_polynomials(x, lambda, 12);
    for (int k = 0; k <= 12; ++k) {
      const double c1 = oracle::gegenbauer_at_one(k, lambda);
      for (size_t i = 0; i < g.size(); ++i) {
        const double r = R[size_t(k)][Index(i)];
        const double ref = oracle::gegenbauer(k, lambda, g[i]);
        // absolute below unit magnitude, relative above
        const double e = std::abs(r * c1 - ref) / std::max(1.0, std::abs(ref));
        worst = std::max(worst, e);
        if (lambda == 0.5) worst = std::max(worst, std::abs(r - oracle::legendre(k, g[i])));
      }
    }
  }
  o.require(worst < 1e-10, "max error " + fmt("%.3e", worst));
  o.detail = o.passed ? "max abs/rel error " + fmt("%.3e", worst) + " (k <= 12, 1001 points, lambda 0.5/1/31.5)"
                      : o.detail;
  return o;
}

// ---------------------------------------------------------------- 2

Outcome recurrence_identities() {
  Outcome o;
  const auto g = grid_1001();
  const auto x = Tensor<double>::from_vector({1001}, g);
  double worst_end = 0, worst_bound = 0, worst_c = 0;
  for (double lambda : kLambdas) {
    const auto R = eval_polynomials(x, lambda, 12);
    for (int k = 0; k <= 12; ++k) {
      worst_end = std::max(worst_end, std::abs(R[size_t(k)][1000] - 1.0));
      worst_end = std::max(worst_end, std::abs(R[size_t(k)][0] - (k % 2 ? -1.0 : 1.0)));
      worst_bound = std::max(worst_bound, R[size_t(k)].values().abs().maxCoeff());
      if (k >= 2) {
        const auto c = recurrence_coeffs(k, lambda);
        worst_c = std::max(worst_c, std::abs(c.c1 - c.c2 - 1.0));
      }
    }
  }
  o.require(worst_end < 1e-12, "endpoint error " + fmt("%.3e", worst_end));
  o.require(worst_bound <= 1 + 1e-9, "max |R_k| " + fmt("%.17g", worst_bound));
  o.require(worst_c < 1e-14, "c1 - c2 - 1 = " + fmt("%.3e", worst_c));
  if (o.passed)
    o.detail = "endpoint err " + fmt("%.1e", worst_end) + ", max |R_k| " + fmt("%.12f", worst_bound) +
               ", |c1-c2-1| " + fmt("%.1e", worst_c);
  return o;
}

// ---------------------------------------------------------------- 3

Outcome attention_oracle() {
  Outcome o;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    AttentionSpec spec;
    spec.d_model = 16;
    spec.heads = 2;
    spec.degrees = {2, 3};
    spec.init_std = 0.3;
    auto layer = SkoAttentionLayer<double>::create(spec, rng);
    // non-trivial kernel weights
    layer.kernel.weights = normal_tensor<double>(layer.kernel.weights.shape(), 1.0, rng);
    const auto x = normal_tensor<double>({2, 8, 16}, 1.0, rng);
    const auto y = sko_forward(x, layer);
    const auto w = oracle::sko_weights(layer);
    for (Index b = 0; b < 2; ++b) {
      const auto ref = oracle::sko_attention(oracle::to_mat(x, b), w);
      const auto got = oracle::to_mat(y, b);
      for (size_t i = 0; i < ref.data.size(); ++i) worst = std::max(worst, std::abs(ref.data[i] - got.data[i]));
    }
  }
  o.require(worst < 1e-10, "max abs diff " + fmt("%.3e", worst));
  if (o.passed) o.detail = "max abs diff " + fmt("%.3e", worst) + " over 20 seeds";
  return o;
}

// ---------------------------------------------------------------- 4

Outcome causality() {
  Outcome o;
  Index checks = 0;
  for (Mechanism mech : {Mechanism::Sko, Mechanism::Baseline}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ModelConfig c = micro_config(mech);
      c.seed = seed;
      c.init_std = 0.3;
      LanguageModel<double> model(c);
      const Index N = c.seq_len, V = c.vocab_size;
      Rng rng(seed + 77);
      std::uniform_int_distribution<std::int32_t> tok(0, std::int32_t(V - 1));
      TokenBatch batch{1, N, {}};
      for (Index i = 0; i < N; ++i) batch.ids.push_back(tok(rng));
      const auto base = model.forward(batch);
      // perturbation
      for (Index j = 0; j < N; ++j) {
        TokenBatch p = batch;
        p.ids[size_t(j)] = std::int32_t((p.ids[size_t(j)] + 1 + Index(seed)) % V);
        const auto out = model.forward(p);
        double change = 0;
        for (Index i = 0; i < j * V; ++i) change = std::max(change, std::abs(out[i] - base[i]));
        o.require(change == 0.0, to_string(mech) + " seed " + std::to_string(seed) + ": position " +
                                     std::to_string(j) + " changes earlier logits by " + fmt("%.3e", change));
        ++checks;
      }
      // gradient: d(logits at <= i) / d(position embedding row j > i) is exactly zero
      for (Index i = 0; i < N; ++i) {
        for (auto& p : model.parameters()) p.tensor.zero_grad();
        Tape<double> tape;
        const auto logits = model.forward(batch);
        std::vector<double> mask(size_t(logits.numel()), 0.0);
        for (Index t = 0; t <= i; ++t)
          for (Index v = 0; v < V; ++v) mask[size_t(t * V + v)] = std::sin(double(t * V + v) + 1.0);
        tape.backward(sum(mul(logits, Tensor<double>::from_vector(logits.shape(), mask))));
        const auto& g = model.position_embedding().grad();
        const Index D = c.d_model;
        double leak = 0, own = 0;
        for (Index t = 0; t < N; ++t)
          for (Index d = 0; d < D; ++d) {
            double& slot = t > i ? leak : own;
            slot = std::max(slot, std::abs(g[t * D + d]));
          }
        o.require(leak == 0.0, to_string(mech) + " seed " + std::to_string(seed) + ": gradient leaks from future (" +
                                   fmt("%.3e", leak) + ")");
        o.require(own > 0.0, "gradient test is vacuous");
        ++checks;
      }
      for (auto& p : model.parameters()) p.tensor.zero_grad();
    }
  }
  if (o.passed) o.detail = std::to_string(checks) + " perturbation/gradient checks, all exactly zero";
  return o;
}

// ---------------------------------------------------------------- 5

Outcome gradient_checks() {
  Outcome o;
  double ops = 0, layer = 0, model = 0;
  bool degree_checked = false;
  for (const auto& e : gradcheck_ops(5).entries) {
    ops = std::max(ops, e.max_rel_error);
    o.require(e.max_rel_error < 1e-5, "op " + e.name + " rel err " + fmt("%.3e", e.max_rel_error));
  }
  for (const auto& e : gradcheck_sko_layer(6).entries) {
    layer = std::max(layer, e.max_rel_error);
    degree_checked |= e.name.find("degrees") != std::string::npos;
    o.require(e.max_rel_error < 1e-5, "layer " + e.name + " rel err " + fmt("%.3e", e.max_rel_error));
  }
  for (Mechanism m : {Mechanism::Sko, Mechanism::Baseline})
    for (const auto& e : gradcheck_model(micro_config(m), 7).entries) {
      model = std::max(model, e.max_rel_error);
      o.require(e.max_rel_error < 1e-5,
                to_string(m) + " model " + e.name + " rel err " + fmt("%.3e", e.max_rel_error));
    }
  o.require(degree_checked, "degree gradient not covered");
  if (o.passed)
    o.detail = "max rel err: ops " + fmt("%.2e", ops) + ", layer (n = 2.5, 1.5) " + fmt("%.2e", layer) +
               ", model " + fmt("%.2e", model);
  return o;
}

// ---------------------------------------------------------------- 6

Outcome density_decoupling() {
  Outcome o;
  Rng rng(60);
  AttentionSpec spec;
  spec.d_model = 16;
  spec.heads = 2;
  spec.degrees = {2, 3};
  spec.init_std = 1.0;
  spec.rms_eps = 1e-6;
  const auto layer = SkoAttentionLayer<double>::create(spec, rng);
  // O_raw mean square must dominate eps / alpha^2 for the smallest alpha.
  const auto x = normal_tensor<double>({2, 8, 16}, 30.0, rng);
  std::ostringstream detail;
  for (double alpha : {1e-3, 1.0, 7.3}) {
    const auto r = density_invariance_check(layer, x, alpha);
    o.require(r.max_rel_diff < 1e-3, "alpha " + fmt("%g", alpha) + " rel diff " + fmt("%.3e", r.max_rel_diff));
    detail << "alpha " << alpha << ": " << fmt("%.2e", r.max_rel_diff) << " (predicted "
           << fmt("%.2e", r.predicted_rel_bound) << ")  ";
  }
  if (o.passed) o.detail = detail.str();
  return o;
}

// ---------------------------------------------------------------- 7

Outcome complexity() {
  Outcome o;
  BenchSpec n_sweep;
  n_sweep.mechanism = Mechanism::Sko;
  n_sweep.axis = SweepAxis::N;
  n_sweep.values = {64, 128, 256, 512};
  n_sweep.repetitions = 7;
  n_sweep.backward = false;
  const auto rn = time_scaling(n_sweep);

  BenchSpec d_sweep = n_sweep;
  d_sweep.axis = SweepAxis::Degree;
  d_sweep.values = {2, 4, 8, 16};
  const auto rd = time_scaling(d_sweep);

  fs::create_directories(g_out);
  {
    std::ofstream os(g_out / "bench_N.csv");
    write_bench_csv(os, rn);
    std::ofstream od(g_out / "bench_n_max.csv");
    write_bench_csv(od, rd);
  }

  const double slope = rn.loglog_forward.slope;
  const double r2 = rd.affine_forward.r2;
  o.require(slope >= 1.7 && slope <= 2.3, "N exponent " + fmt("%.3f", slope) + " outside [1.7, 2.3]");
  o.require(r2 > 0.95, "time vs n_max affine R^2 " + fmt("%.4f", r2));

  Index inference_max = 0;
  std::vector<double> ns, counts;
  for (int n : {2, 4, 5, 8, 10, 16}) {
    inference_max = std::max(inference_max, memory_probe(128, n, false).retained_buffers);
    ns.push_back(n);
    counts.push_back(double(memory_probe(128, n, true).retained_buffers));
  }
  const auto fit = fit_line(ns, counts);
  const double t5 = counts[2], t10 = counts[4];
  o.require(inference_max <= 3, "inference retains " + std::to_string(inference_max) + " N x N buffers");
  o.require(fit.slope > 0 && fit.r2 > 0.999, "training buffers not linear in n_max (R^2 " + fmt("%.4f", fit.r2) + ")");
  o.require(std::abs(t10 - 2 * t5) <= 1, "training n=10 vs n=5: " + fmt("%g", t10) + " vs " + fmt("%g", t5));
  if (o.passed) {
    std::ostringstream d;
    d << "N exponent " << fmt("%.3f", slope) << ", n_max affine R^2 " << fmt("%.4f", r2) << ", inference buffers <= "
      << inference_max << ", training buffers " << t5 << " (n=5) / " << t10 << " (n=10)";
    o.detail = d.str();
  }
  return o;
}

// ---------------------------------------------------------------- 8

Outcome training_sanity() {
  Outcome o;
  // Memorisation: a periodic random corpus of 512 tokens, train == validation.
  ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 16;
  c.seq_len = 32;
  c.heads = 2;
  c.layers = 1;
  c.degrees = {2, 3};
  c.mechanism = Mechanism::Sko;
  Rng rng(8);
  std::uniform_int_distribution<std::int32_t> tok(0, 15);
  std::vector<std::int32_t> period(64);
  for (auto& t : period) t = tok(rng);
  std::vector<std::int32_t> corpus;
  while (corpus.size() < 512) corpus.insert(corpus.end(), period.begin(), period.end());
  corpus.resize(512);
  const auto data = shared_split(corpus);

  TrainConfig t;
  t.total_steps = 300;
  t.eval_interval = 50;
  t.batch_size = 8;
  t.eval_batches = 4;
  t.lr_base = 1e-2;
  t.lr_min = 1e-4;
  t.weight_decay = 0.0;
  t.precision = Precision::F64;

  LanguageModel<double> model(c);
  const auto vb = validation_batches(data, t.eval_batches, t.batch_size, c.seq_len);
  const double init = evaluate(model, vb);
  const double ln_v = std::log(16.0);
  o.require(std::abs(init - ln_v) < 0.05 * ln_v, "initial loss " + fmt("%.4f", init) + " vs ln(16)");

  TrainOptions opts;
  opts.out_dir = g_out / "overfit";
  opts.allow_shared_split = true;
  fs::remove_all(opts.out_dir);
  const auto r = train(model, t, data, opts);
  const double final_train = r.step_losses.back();
  const double final_eval = r.rows.back().val_loss;
  o.require(final_train < 0.1 * ln_v, "train loss after 300 steps " + fmt("%.4f", final_train));

  // Resume: 20 steps straight vs 10 + resume, 64-bit.
  ModelConfig rc = c;
  rc.mechanism = Mechanism::Sko;
  TrainConfig rt = t;
  rt.total_steps = 20;
  rt.eval_interval = 10;
  const auto split = split_tokens(corpus, 0.25);
  LanguageModel<double> a(rc), b(rc), b2(rc);
  TrainOptions oa, ob, ob2;
  oa.out_dir = g_out / "resume_full";
  ob.out_dir = g_out / "resume_part";
  ob.stop_after = 10;
  ob2.out_dir = g_out / "resume_rest";
  ob2.resume_from = ob.out_dir / "checkpoints" / "step_10.ckpt";
  for (const auto* d : {&oa.out_dir, &ob.out_dir, &ob2.out_dir}) fs::remove_all(*d);
  const auto ra = train(a, rt, split, oa);
  train(b, rt, split, ob);
  const auto rb = train(b2, rt, split, ob2);
  bool exact = ra.rows.size() == rb.rows.size();
  for (size_t i = 0; exact && i < ra.rows.size(); ++i)
    exact = ra.rows[i].train_loss == rb.rows[i].train_loss && ra.rows[i].val_loss == rb.rows[i].val_loss;
  const auto pa = a.parameters(), pb = b2.parameters();
  for (size_t i = 0; exact && i < pa.size(); ++i) exact = (pa[i].tensor.values() == pb[i].tensor.values()).all();
  o.require(exact, "resumed run differs from the uninterrupted run");
  if (o.passed)
    o.detail = "init loss " + fmt("%.4f", init) + " (ln 16 = " + fmt("%.4f", ln_v) + "), train loss at step 300 " +
               fmt("%.4f", final_train) + " (eval " + fmt("%.4f", final_eval) + ", threshold " +
               fmt("%.4f", 0.1 * ln_v) + "), resume bit-exact";
  return o;
}

// ---------------------------------------------------------------- 9

Outcome desk_comparison() {
  Outcome o;
  const fs::path cfg_path = fs::path(SKO_SOURCE_DIR) / "configs" / "desk_compare.cfg";
  KeyValues kv = read_key_values(cfg_path);
  std::vector<Index> seeds{0, 1, 2};
  kv.erase("compare.seeds");
  kv["train.dataset"] = (fs::path(SKO_SOURCE_DIR) / "data" / "sample.txt").string();
  const RunConfig rc = resolve_config(kv);
  const auto tok = Tokenizer::from_scheme(rc.train.tokenizer, rc.train.vocab_file, rc.train.merges_file);
  const auto data = split_tokens(tokenize_corpus(rc.train.dataset, tok), rc.train.val_fraction);
  const double ln_v = std::log(double(rc.model.vocab_size));
  const fs::path root = g_out / "desk";
  fs::create_directories(root);

  std::ostringstream detail;
  detail << std::fixed;
  detail.precision(4);
  for (Index seed : seeds) {
    std::vector<MetricsRow> rows[2];
    for (Mechanism m : {Mechanism::Baseline, Mechanism::Sko}) {
      RunConfig run = rc;
      run.model.mechanism = m;
      run.model.seed = std::uint64_t(seed);
      run.train.seed = std::uint64_t(seed);
      TrainOptions opts;
      opts.out_dir = root / ("seed" + std::to_string(seed)) / to_string(m);
      fs::remove_all(opts.out_dir);
      fs::create_directories(opts.out_dir);
      std::ofstream(opts.out_dir / "resolved.cfg") << format_key_values(to_key_values(run));
      TrainResult r;
      if (run.train.precision == Precision::F32) {
        LanguageModel<float> model(run.model);
        r = train(model, run.train, data, opts);
      } else {
        LanguageModel<double> model(run.model);
        r = train(model, run.train, data, opts);
      }
      rows[m == Mechanism::Sko] = r.rows;
      const double final_loss = r.rows.back().val_loss;
      o.require(final_loss <= 0.75 * ln_v, to_string(m) + " seed " + std::to_string(seed) + " final val loss " +
                                               fmt("%.4f", final_loss) + " not 25% below ln(V)");
    }
    const auto cmp = compare_runs(rows[0], rows[1]);
    const std::string tag = "_seed" + std::to_string(seed);
    std::ofstream csv(root / ("table1" + tag + ".csv"));
    write_comparison_csv(csv, cmp);
    std::ofstream dat(root / ("curves" + tag + ".dat"));
    write_comparison_dat(dat, cmp);
    std::ofstream sum(root / ("summary" + tag + ".txt"));
    write_comparison_summary(sum, cmp);
    o.require(cmp.rows.size() == size_t(rc.train.total_steps / rc.train.eval_interval), "comparison row count");
    detail << "seed " << seed << ": baseline " << cmp.rows.back().baseline_val_loss << ", sko "
           << cmp.rows.back().sko_val_loss << " (delta " << cmp.rows.back().delta_loss << "); ";
  }
  if (o.passed) o.detail = detail.str() + "threshold " + fmt("%.4f", 0.75 * ln_v) + ", tables in " + root.string();
  return o;
}

// ---------------------------------------------------------------- 10

Outcome reference_param_count() {
  Outcome o;
  ModelConfig c;
  c.vocab_size = 50257;
  c.d_model = 256;
  c.seq_len = 256;
  c.heads = 4;
  c.layers = 4;
  const auto tied = param_count(c);
  c.tie_embeddings = false;
  const auto untied = param_count(c);
  const double reference = 17.59e6;
  std::cout << "  reference configuration (vocab 50257, D 256, N 256, H 4, L 4, n = 2,3,4,5):\n";
  for (const auto& [name, n] : tied.components) std::cout << "    " << name << ": " << n << "\n";
  std::cout << "    total (tied embeddings):   " << tied.total << "\n"
            << "    total (untied embeddings): " << untied.total << "\n"
            << "    reported: approximately 17.59e6\n";
  const double delta = double(tied.total) - reference;
  // The gap is documented in the README next to this number.
  std::ifstream readme(fs::path(SKO_SOURCE_DIR) / "README.md");
  std::stringstream ss;
  ss << readme.rdbuf();
  o.require(tied.total > 0, "parameter count is zero");
  o.require(ss.str().find(std::to_string(tied.total)) != std::string::npos,
            "README does not document the count " + std::to_string(tied.total));
  if (o.passed)
    o.detail = "tied " + std::to_string(tied.total) + " vs approximately 17590000 (delta " + fmt("%+.0f", delta) +
               ", " + fmt("%+.1f", 100 * delta / reference) + "%); untied " + std::to_string(untied.total);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
  double time_limit_s;  // 0: none stated
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only, skip;
  std::string out = g_out.string();
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--skip", skip, "skip these criteria")->delimiter(',');
  app.add_option("--out-dir", out, "where bench tables and training runs go");
  CLI11_PARSE(app, argc, argv);
  g_out = out;

  const std::vector<Criterion> criteria{
      {1, "polynomial oracle equivalence", polynomial_oracles, 1},
      {2, "recurrence identities", recurrence_identities, 1},
      {3, "attention oracle", attention_oracle, 10},
      {4, "causality", causality, 0},
      {5, "gradient checks", gradient_checks, 0},
      {6, "density decoupling", density_decoupling, 0},
      {7, "complexity scaling", complexity, 300},
      {8, "training sanity", training_sanity, 300},
      {9, "desk-scale comparison", desk_comparison, 7200},
      {10, "reference parameter report", reference_param_count, 0},
  };
  const std::set<int> only_set(only.begin(), only.end()), skip_set(skip.begin(), skip.end());
  int failed = 0;
  for (const auto& c : criteria) {
    if ((!only_set.empty() && !only_set.contains(c.id)) || skip_set.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.passed && c.time_limit_s > 0 && secs >= c.time_limit_s)
      r.require(false, "runtime " + fmt("%.1f", secs) + " s exceeds " + fmt("%.0f", c.time_limit_s) + " s");
    failed += !r.passed;
    std::printf("%s %2d %-32s %8.2fs  %s\n", r.passed ? "PASS" : "FAIL", c.id, c.name, secs, r.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
