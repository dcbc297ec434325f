// Command-line front end: train, eval, generate, bench, kernel-dump,
// gradcheck, selftest, compare.
//
// Exit codes: 0 success, 1 test failure, 2 usage/config/IO error, 3 numeric abort.

#include "sko/bench.hpp"
#include "sko/checkpoint.hpp"
#include "sko/compare.hpp"
#include "sko/config.hpp"
#include "sko/gradcheck.hpp"
#include "sko/model.hpp"
#include "sko/selftest.hpp"
#include "sko/tokenizer.hpp"
#include "sko/trainer.hpp"
#include "sko/ultraspherical.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sko;

namespace {

enum Exit { kOk = 0, kTestFailure = 1, kUsage = 2, kNumeric = 3 };

/// Configuration error raised by a command after argument parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  cmd->add_option("-c,--config", c.config, "key = value configuration file");
  cmd->add_option("-s,--set", c.overrides, "dotted override key=value (repeatable)");
  c.out_dir = default_out;
  cmd->add_option("-o,--out-dir", c.out_dir, "output directory")->capture_default_str();
}

// Defaults, then the config file, then --set overrides.
KeyValues gather(const KeyValues& defaults, const Common& c) {
  KeyValues kv = defaults;
  if (!c.config.empty())
    for (const auto& [k, v] : read_key_values(c.config)) kv[k] = v;
  for (const auto& o : c.overrides) apply_override(kv, o);
  return kv;
}

// Removes keys under `prefix` from kv, rejecting any not listed in `known`.
KeyValues take_section(KeyValues& kv, const std::string& prefix, const KeyValues& known) {
  KeyValues out = known;
  for (auto it = kv.begin(); it != kv.end();) {
    if (it->first.starts_with(prefix)) {
      if (!known.contains(it->first)) throw ConfigError("config: unknown key '" + it->first + "'");
      out[it->first] = it->second;
      it = kv.erase(it);
    } else {
      ++it;
    }
  }
  return out;
}

void reject_rest(const KeyValues& kv) {
  if (!kv.empty()) throw ConfigError("config: unknown key '" + kv.begin()->first + "'");
}

fs::path prepare_out(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

void write_resolved(const fs::path& out, const KeyValues& kv) {
  std::ofstream os(out / "resolved.cfg", std::ios::trunc);
  if (!os) throw UsageError("cannot write " + (out / "resolved.cfg").string());
  os << format_key_values(kv);
}

std::int64_t as_int(const KeyValues& kv, const std::string& key) {
  try {
    size_t used = 0;
    const auto v = std::stoll(kv.at(key), &used);
    if (used != kv.at(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + kv.at(key) + "'");
  }
}

bool as_bool(const KeyValues& kv, const std::string& key) {
  const auto& v = kv.at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<Index> as_int_list(const KeyValues& kv, const std::string& key) {
  std::vector<Index> out;
  std::stringstream ss(kv.at(key));
  for (std::string part; std::getline(ss, part, ',');) {
    KeyValues one{{key, part}};
    out.push_back(as_int(one, key));
  }
  return out;
}

Tokenizer tokenizer_for(const TrainConfig& t) {
  return Tokenizer::from_scheme(t.tokenizer, t.vocab_file, t.merges_file);
}

DataSplit load_data(const RunConfig& rc, const Tokenizer& tok) {
  if (!fs::is_regular_file(rc.train.dataset))
    throw UsageError("corpus not found: " + rc.train.dataset);
  if (rc.model.vocab_size < tok.vocab_size())
    throw ConfigError("config: model.vocab_size = " + std::to_string(rc.model.vocab_size) +
                      " is smaller than the " + tok.scheme() + " tokenizer vocabulary (" +
                      std::to_string(tok.vocab_size()) + ")");
  return split_tokens(tokenize_corpus(rc.train.dataset, tok), rc.train.val_fraction);
}

// ------------------------------------------------------------------ train

template <typename Scalar>
void train_with(const RunConfig& rc, const DataSplit& data, const fs::path& out, const std::string& resume) {
  LanguageModel<Scalar> model(rc.model);
  TrainOptions opts;
  opts.out_dir = out;
  opts.resume_from = resume;
  opts.log = &std::cout;
  const auto result = train(model, rc.train, data, opts);
  std::cout << "finished at step " << result.final_step << "; metrics in " << (out / "metrics.csv").string()
            << "\n";
}

int cmd_train(const Common& c, const std::string& resume) {
  KeyValues kv = gather({}, c);
  const RunConfig rc = resolve_config(kv);
  const fs::path out = prepare_out(c.out_dir);
  write_resolved(out, to_key_values(rc));
  const auto tok = tokenizer_for(rc.train);
  const auto data = load_data(rc, tok);
  const auto pc = param_count(rc.model);
  std::cout << to_string(rc.model.mechanism) << " model, " << pc.total << " parameters, "
            << data.train_size() << " train / " << data.val_size() << " val tokens\n";
  if (rc.train.precision == Precision::F32)
    train_with<float>(rc, data, out, resume);
  else
    train_with<double>(rc, data, out, resume);
  return kOk;
}

// ------------------------------------------------------------------- eval

// Model and train keys stored in a checkpoint, then the user's file and overrides.
RunConfig config_from_checkpoint(const KeyValues& header, const Common& c, KeyValues& resolved) {
  KeyValues base;
  for (const auto& [k, v] : header)
    if (k.starts_with("model.") || k.starts_with("train.")) base[k] = v;
  resolved = gather(base, c);
  return resolve_config(resolved);
}

template <typename Scalar>
double eval_with(const std::string& ckpt_path, const RunConfig& rc, const DataSplit& data) {
  const auto ckpt = read_checkpoint<Scalar>(ckpt_path);
  LanguageModel<Scalar> model(rc.model);
  load_parameters(model, ckpt);
  return evaluate(model, validation_batches(data, rc.train.eval_batches, rc.train.batch_size, rc.model.seq_len));
}

int cmd_eval(const Common& c, const std::string& checkpoint) {
  const auto header = read_checkpoint<double>(checkpoint).header;
  KeyValues resolved;
  const RunConfig rc = config_from_checkpoint(header, c, resolved);
  const fs::path out = prepare_out(c.out_dir);
  write_resolved(out, to_key_values(rc));
  const auto data = load_data(rc, tokenizer_for(rc.train));
  const double loss = rc.train.precision == Precision::F32 ? eval_with<float>(checkpoint, rc, data)
                                                           : eval_with<double>(checkpoint, rc, data);
  std::ofstream os(out / "eval.csv", std::ios::trunc);
  char line[256];
  std::snprintf(line, sizeof line, "%.17g,%.17g", loss, std::exp(loss));
  os << "checkpoint,val_loss,val_ppl\n" << checkpoint << ',' << line << '\n';
  std::cout << "val_loss " << loss << "  val_ppl " << std::exp(loss) << "\n";
  return kOk;
}

// --------------------------------------------------------------- generate

const KeyValues kGenerateKeys = {{"generate.prompt", "The "},
                                 {"generate.steps", "64"},
                                 {"generate.temperature", "0"},
                                 {"generate.seed", "0"}};

template <typename Scalar>
std::string generate_with(const std::string& ckpt_path, const RunConfig& rc, const KeyValues& g) {
  const auto ckpt = read_checkpoint<Scalar>(ckpt_path);
  LanguageModel<Scalar> model(rc.model);
  load_parameters(model, ckpt);
  const auto tok = tokenizer_for(rc.train);
  const auto prompt = tok.encode(g.at("generate.prompt"));
  const double temperature = parse_double(g.at("generate.temperature"), "generate.temperature");
  const auto ids = model.generate(prompt, as_int(g, "generate.steps"), temperature,
                                  std::uint64_t(as_int(g, "generate.seed")));
  return tok.decode(ids);
}

int cmd_generate(const Common& c, const std::string& checkpoint) {
  const auto header = read_checkpoint<double>(checkpoint).header;
  KeyValues base;
  for (const auto& [k, v] : header)
    if (k.starts_with("model.") || k.starts_with("train.")) base[k] = v;
  KeyValues kv = gather(base, c);
  const KeyValues g = take_section(kv, "generate.", kGenerateKeys);
  const RunConfig rc = resolve_config(kv);
  const fs::path out = prepare_out(c.out_dir);
  KeyValues resolved = to_key_values(rc);
  resolved.insert(g.begin(), g.end());
  write_resolved(out, resolved);
  const std::string text = rc.train.precision == Precision::F32 ? generate_with<float>(checkpoint, rc, g)
                                                                : generate_with<double>(checkpoint, rc, g);
  std::ofstream(out / "generation.txt", std::ios::trunc) << text;
  std::cout << text << "\n";
  return kOk;
}

// ------------------------------------------------------------------ bench

const KeyValues kBenchKeys = {
    {"bench.mechanism", "both"}, {"bench.sweep", "N"},      {"bench.values", "64,128,256,512"},
    {"bench.batch", "1"},        {"bench.N", "256"},        {"bench.D", "32"},
    {"bench.H", "2"},            {"bench.n_max", "4"},      {"bench.q", "16"},
    {"bench.repetitions", "5"},  {"bench.warmups", "2"},    {"bench.backward", "true"},
    {"bench.precision", "f64"},  {"bench.memory", "true"},  {"bench.seed", "0"},
    {"bench.min_sample_seconds", "0.05"},
};

int cmd_bench(const Common& c) {
  KeyValues kv = gather({}, c);
  const KeyValues b = take_section(kv, "bench.", kBenchKeys);
  reject_rest(kv);
  BenchSpec spec;
  try {
    spec.axis = parse_sweep_axis(b.at("bench.sweep"));
    spec.precision = parse_precision(b.at("bench.precision"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  spec.values = as_int_list(b, "bench.values");
  spec.batch = as_int(b, "bench.batch");
  spec.seq_len = as_int(b, "bench.N");
  spec.d_model = as_int(b, "bench.D");
  spec.heads = as_int(b, "bench.H");
  spec.n_max = int(as_int(b, "bench.n_max"));
  spec.q = int(as_int(b, "bench.q"));
  spec.repetitions = int(as_int(b, "bench.repetitions"));
  spec.warmups = int(as_int(b, "bench.warmups"));
  spec.backward = as_bool(b, "bench.backward");
  spec.min_sample_seconds = parse_double(b.at("bench.min_sample_seconds"), "bench.min_sample_seconds");
  spec.seed = std::uint64_t(as_int(b, "bench.seed"));
  std::vector<Mechanism> mechs;
  const auto& m = b.at("bench.mechanism");
  if (m == "both")
    mechs = {Mechanism::Sko, Mechanism::Baseline};
  else
    try {
      mechs = {parse_mechanism(m)};
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  if (spec.values.size() < 2) throw ConfigError("config: bench.values needs at least two values");
  if (spec.repetitions < 5) throw ConfigError("config: bench.repetitions must be >= 5");

  const fs::path out = prepare_out(c.out_dir);
  write_resolved(out, b);
  std::vector<BenchReport> reports;
  for (Mechanism mech : mechs) {
    spec.mechanism = mech;
    reports.push_back(time_scaling(spec));
    const auto& r = reports.back();
    std::ofstream os(out / ("bench_" + to_string(mech) + "_" + to_string(spec.axis) + ".csv"), std::ios::trunc);
    write_bench_csv(os, r);
    write_bench_summary(std::cout, r);
  }
  if (reports.size() == 2) {
    std::cout << "sko / baseline forward time ratio per point:";
    for (size_t i = 0; i < reports[0].points.size(); ++i)
      std::cout << ' ' << reports[0].points[i].forward_s / reports[1].points[i].forward_s;
    std::cout << "\n";
  }
  if (as_bool(b, "bench.memory")) {
    std::vector<MemoryProbe> probes;
    for (bool training : {false, true})
      for (int n : {2, 4, 5, 8, 10, 16}) probes.push_back(memory_probe(spec.seq_len, n, training, spec.heads, spec.precision));
    std::ofstream os(out / "memory.csv", std::ios::trunc);
    write_memory_csv(os, probes);
    write_memory_csv(std::cout, probes);
  }
  return kOk;
}

// ------------------------------------------------------------ kernel-dump

const KeyValues kDumpKeys = {{"dump.head", "0"}, {"dump.grid", "201"}, {"dump.layer", "0"}};

int cmd_kernel_dump(const Common& c, const std::string& checkpoint) {
  KeyValues base;
  if (!checkpoint.empty())
    for (const auto& [k, v] : read_checkpoint<double>(checkpoint).header)
      if (k.starts_with("model.") || k.starts_with("train.")) base[k] = v;
  KeyValues kv = gather(base, c);
  const KeyValues d = take_section(kv, "dump.", kDumpKeys);
  const RunConfig rc = resolve_config(kv);
  const Index head = as_int(d, "dump.head"), grid = as_int(d, "dump.grid"), layer = as_int(d, "dump.layer");
  if (head < 0 || head >= rc.model.heads)
    throw ConfigError("config: dump.head " + std::to_string(head) + " out of range [0, " +
                      std::to_string(rc.model.heads) + ")");
  if (grid < 2) throw ConfigError("config: dump.grid must be >= 2");

  auto params = KernelParams<double>::create(rc.model.q, rc.model.degrees, false, rc.model.kernel_init);
  if (!checkpoint.empty()) {
    const auto ckpt = read_checkpoint<double>(checkpoint);
    const std::string pre = "blocks." + std::to_string(layer) + ".attn.";
    auto w = ckpt.tensors.find(pre + "kernel_weights");
    if (w == ckpt.tensors.end()) throw UsageError("checkpoint has no " + pre + "kernel_weights");
    params.weights.mutable_values() = w->second.values();
    if (auto n = ckpt.tensors.find(pre + "kernel_degrees"); n != ckpt.tensors.end())
      params.degrees.mutable_values() = n->second.values();
  }
  const fs::path out = prepare_out(c.out_dir);
  KeyValues resolved = to_key_values(rc);
  resolved.insert(d.begin(), d.end());
  write_resolved(out, resolved);
  const auto profile = kernel_profile(params, head, grid);
  const auto path = out / ("kernel_head" + std::to_string(head) + ".csv");
  std::ofstream os(path, std::ios::trunc);
  write_profile_csv(os, profile);
  std::cout << "wrote " << profile.size() << " points to " << path.string() << "\n";
  return kOk;
}

// -------------------------------------------------------------- gradcheck

const KeyValues kGradKeys = {{"gradcheck.scale", "all"}, {"gradcheck.seed", "0"}, {"gradcheck.tolerance", "1e-5"}};

int cmd_gradcheck(const Common& c) {
  KeyValues kv = gather({}, c);
  const KeyValues g = take_section(kv, "gradcheck.", kGradKeys);
  reject_rest(kv);
  const auto& scale = g.at("gradcheck.scale");
  const auto seed = std::uint64_t(as_int(g, "gradcheck.seed"));
  const double tol = parse_double(g.at("gradcheck.tolerance"), "gradcheck.tolerance");
  if (scale != "ops" && scale != "layer" && scale != "model" && scale != "all")
    throw ConfigError("config: gradcheck.scale must be ops, layer, model or all");
  const fs::path out = prepare_out(c.out_dir);
  write_resolved(out, g);

  GradCheckReport report;
  auto add = [&](const std::string& prefix, const GradCheckReport& r) {
    for (auto e : r.entries) {
      e.name = prefix + e.name;
      report.entries.push_back(std::move(e));
    }
  };
  if (scale == "ops" || scale == "all") add("op:", gradcheck_ops(seed));
  if (scale == "layer" || scale == "all") add("sko_layer:", gradcheck_sko_layer(seed));
  if (scale == "model" || scale == "all") {
    add("sko_model:", gradcheck_model(micro_config(Mechanism::Sko), seed));
    add("baseline_model:", gradcheck_model(micro_config(Mechanism::Baseline), seed));
  }
  std::ofstream os(out / "gradcheck.csv", std::ios::trunc);
  write_gradcheck_csv(os, report);
  write_gradcheck_csv(std::cout, report);
  const bool ok = report.passed(tol);
  std::cout << (ok ? "all" : "NOT all") << " relative errors below " << tol << " (max "
            << report.max_rel_error() << ")\n";
  return ok ? kOk : kTestFailure;
}

// --------------------------------------------------------------- selftest

int cmd_selftest(const std::vector<std::string>& suites, const std::string& out_dir) {
  if (!out_dir.empty()) {
    std::string joined;
    for (const auto& s : suites) joined += (joined.empty() ? "" : ",") + s;
    write_resolved(prepare_out(out_dir), {{"selftest.suites", joined.empty() ? "all" : joined}});
  }
  const auto results = run_selftest(std::cout, suites);
  int failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << results.size() - size_t(failed) << "/" << results.size() << " suites passed\n";
  return failed ? kTestFailure : kOk;
}

// ---------------------------------------------------------------- compare

const KeyValues kCompareKeys = {{"compare.baseline", ""},
                                {"compare.sko", ""},
                                {"compare.seeds", "0"},
                                {"compare.reference_step", "1000"}};

void write_comparison(const fs::path& dir, const std::string& tag, const Comparison& cmp) {
  std::ofstream csv(dir / ("table1" + tag + ".csv"), std::ios::trunc);
  write_comparison_csv(csv, cmp);
  std::ofstream dat(dir / ("curves" + tag + ".dat"), std::ios::trunc);
  write_comparison_dat(dat, cmp);
  std::ofstream sum(dir / ("summary" + tag + ".txt"), std::ios::trunc);
  write_comparison_summary(sum, cmp);
  write_comparison_summary(std::cout, cmp);
}

int cmd_compare(const Common& c) {
  KeyValues kv = gather({}, c);
  const KeyValues cm = take_section(kv, "compare.", kCompareKeys);
  const Index ref_step = as_int(cm, "compare.reference_step");
  const fs::path out = prepare_out(c.out_dir);

  if (!cm.at("compare.baseline").empty() || !cm.at("compare.sko").empty()) {
    reject_rest(kv);
    if (cm.at("compare.baseline").empty() || cm.at("compare.sko").empty())
      throw ConfigError("config: compare needs both compare.baseline and compare.sko");
    write_resolved(out, cm);
    for (const auto& key : {"compare.baseline", "compare.sko"})
      if (!fs::is_regular_file(cm.at(key))) throw UsageError(std::string(key) + " not found: " + cm.at(key));
    const auto cmp = compare_runs(read_metrics_csv(cm.at("compare.baseline")), read_metrics_csv(cm.at("compare.sko")),
                                  ref_step);
    write_comparison(out, "", cmp);
    return kOk;
  }

  // Train both mechanisms for each seed, then compare.
  RunConfig rc = resolve_config(kv);
  KeyValues resolved = to_key_values(rc);
  resolved.insert(cm.begin(), cm.end());
  write_resolved(out, resolved);
  const auto tok = tokenizer_for(rc.train);
  const auto data = load_data(rc, tok);
  for (Index seed : as_int_list(cm, "compare.seeds")) {
    std::vector<MetricsRow> rows[2];
    for (Mechanism m : {Mechanism::Baseline, Mechanism::Sko}) {
      RunConfig run = rc;
      run.model.mechanism = m;
      run.model.seed = std::uint64_t(seed);
      run.train.seed = std::uint64_t(seed);
      const fs::path dir = out / ("seed" + std::to_string(seed)) / to_string(m);
      fs::create_directories(dir);
      write_resolved(dir, to_key_values(run));
      std::cout << "== seed " << seed << ", " << to_string(m) << "\n";
      if (run.train.precision == Precision::F32)
        train_with<float>(run, data, dir, "");
      else
        train_with<double>(run, data, dir, "");
      rows[m == Mechanism::Sko] = read_metrics_csv(dir / "metrics.csv");
    }
    write_comparison(out, "_seed" + std::to_string(seed), compare_runs(rows[0], rows[1], ref_step));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spherical kernel attention: training, evaluation and verification tools"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common train_c, eval_c, gen_c, bench_c, dump_c, grad_c, cmp_c;
  std::string resume, eval_ckpt, gen_ckpt, dump_ckpt, selftest_out;
  std::vector<std::string> suites;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, train_c, "runs/train");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval_cmd = app.add_subcommand("eval", "validation loss of a checkpoint");
  add_common(eval_cmd, eval_c, "runs/eval");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();

  auto* gen_cmd = app.add_subcommand("generate", "sample text from a checkpoint");
  add_common(gen_cmd, gen_c, "runs/generate");
  gen_cmd->add_option("--checkpoint", gen_ckpt, "checkpoint file")->required();
  std::string prompt, steps, temperature, gen_seed;
  gen_cmd->add_option("--prompt", prompt, "prompt text");
  gen_cmd->add_option("--steps", steps, "tokens to generate");
  gen_cmd->add_option("--temperature", temperature, "0 for greedy decoding");
  gen_cmd->add_option("--seed", gen_seed, "sampling seed");

  auto* bench_cmd = app.add_subcommand("bench", "timing sweeps and memory audit");
  add_common(bench_cmd, bench_c, "runs/bench");
  std::string sweep, values, mech;
  bench_cmd->add_option("--sweep", sweep, "N, D or n_max");
  bench_cmd->add_option("--values", values, "comma-separated sweep values");
  bench_cmd->add_option("--mechanism", mech, "sko, baseline or both");

  auto* dump_cmd = app.add_subcommand("kernel-dump", "tabulate one head's kernel over [-1, 1]");
  add_common(dump_cmd, dump_c, "runs/kernel");
  dump_cmd->add_option("--checkpoint", dump_ckpt, "take kernel weights from a checkpoint");
  std::string head, grid;
  dump_cmd->add_option("--head", head, "head index");
  dump_cmd->add_option("--grid", grid, "grid points");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(grad_cmd, grad_c, "runs/gradcheck");
  std::string scale;
  grad_cmd->add_option("--scale", scale, "ops, layer, model or all");

  auto* self_cmd = app.add_subcommand("selftest", "run invariant suites");
  self_cmd->add_option("--suite", suites, "restrict to named suites (repeatable)");
  self_cmd->add_option("-o,--out-dir", selftest_out, "write resolved.cfg here");
  self_cmd->add_flag_callback("--list", [] {
    for (const auto& s : selftest_suites()) std::cout << s << "\n";
    std::exit(0);
  }, "list suite names");

  auto* cmp_cmd = app.add_subcommand("compare", "baseline vs sko validation curves");
  add_common(cmp_cmd, cmp_c, "runs/compare");
  std::string cmp_base, cmp_sko, seeds;
  cmp_cmd->add_option("--baseline", cmp_base, "baseline metrics.csv");
  cmp_cmd->add_option("--sko", cmp_sko, "sko metrics.csv");
  cmp_cmd->add_option("--seeds", seeds, "train both mechanisms for these seeds, e.g. 0,1,2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto flag = [](Common& c, const std::string& key, const std::string& value) {
    if (!value.empty()) c.overrides.push_back(key + "=" + value);
  };
  try {
    if (*train_cmd) return cmd_train(train_c, resume);
    if (*eval_cmd) return cmd_eval(eval_c, eval_ckpt);
    if (*gen_cmd) {
      flag(gen_c, "generate.prompt", prompt);
      flag(gen_c, "generate.steps", steps);
      flag(gen_c, "generate.temperature", temperature);
      flag(gen_c, "generate.seed", gen_seed);
      return cmd_generate(gen_c, gen_ckpt);
    }
    if (*bench_cmd) {
      flag(bench_c, "bench.sweep", sweep);
      flag(bench_c, "bench.values", values);
      flag(bench_c, "bench.mechanism", mech);
      return cmd_bench(bench_c);
    }
    if (*dump_cmd) {
      flag(dump_c, "dump.head", head);
      flag(dump_c, "dump.grid", grid);
      return cmd_kernel_dump(dump_c, dump_ckpt);
    }
    if (*grad_cmd) {
      flag(grad_c, "gradcheck.scale", scale);
      return cmd_gradcheck(grad_c);
    }
    if (*self_cmd) return cmd_selftest(suites, selftest_out);
    if (*cmp_cmd) {
      flag(cmp_c, "compare.baseline", cmp_base);
      flag(cmp_c, "compare.sko", cmp_sko);
      flag(cmp_c, "compare.seeds", seeds);
      return cmd_compare(cmp_c);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
