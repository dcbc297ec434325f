#include "sko/trainer.hpp"

#include "sko/checkpoint.hpp"
#include "sko/config.hpp"
#include "sko/ops.hpp"
#include "sko/optim.hpp"
#include "sko/random.hpp"
#include "sko/serialize.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace sko {

std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::F32;
  if (text == "f64") return Precision::F64;
  throw std::invalid_argument("unknown precision '" + std::string(text) + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(lr_base > 0) || !(lr_min >= 0)) fail("learning rates must be positive");
  if (lr_min > lr_base) fail("lr_min must not exceed lr_base");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (eval_interval <= 0) fail("eval_interval must be > 0");
  if (total_steps > 0 && eval_interval > total_steps) fail("eval_interval must not exceed total_steps");
  if (batch_size <= 0) fail("batch_size must be > 0");
  if (!(grad_clip >= 0)) fail("grad_clip must be >= 0");
  if (!(val_fraction > 0 && val_fraction < 1)) fail("val_fraction must lie in (0, 1)");
  if (eval_batches <= 0) fail("eval_batches must be > 0");
  if (tokenizer != "byte" && tokenizer != "bpe") fail("tokenizer must be byte or bpe");
}

DataSplit split_tokens(std::vector<std::int32_t> tokens, double val_fraction) {
  if (!(val_fraction > 0 && val_fraction < 1))
    throw std::invalid_argument("split: val_fraction must lie in (0, 1)");
  const Index n = Index(tokens.size());
  const Index val = std::llround(double(n) * val_fraction);
  if (val <= 0 || val >= n) throw std::invalid_argument("split: corpus too small to split");
  DataSplit d;
  d.tokens = std::move(tokens);
  d.train_begin = 0;
  d.train_end = n - val;
  d.val_begin = n - val;
  d.val_end = n;
  return d;
}

DataSplit shared_split(std::vector<std::int32_t> tokens) {
  DataSplit d;
  const Index n = Index(tokens.size());
  d.tokens = std::move(tokens);
  d.train_end = d.val_end = n;
  return d;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Batch make_batch(const DataSplit& data, const std::vector<Index>& starts, Index length) {
  Batch b;
  b.inputs.batch = Index(starts.size());
  b.inputs.length = length;
  b.starts = starts;
  b.inputs.ids.reserve(size_t(b.inputs.batch * length));
  b.targets.reserve(b.inputs.ids.capacity());
  for (Index s : starts)
    for (Index i = 0; i < length; ++i) {
      b.inputs.ids.push_back(data.tokens[size_t(s + i)]);
      b.targets.push_back(data.tokens[size_t(s + i + 1)]);
    }
  return b;
}

}  // namespace

Batch sample_train_batch(const DataSplit& data, Index batch_size, Index length, std::uint64_t seed,
                         Index step) {
  if (data.train_size() < length + 1)
    throw std::invalid_argument("training split has " + std::to_string(data.train_size()) +
                                " tokens, need at least " + std::to_string(length + 1));
  Rng rng(splitmix64(seed ^ splitmix64(std::uint64_t(step))));
  std::uniform_int_distribution<Index> pick(data.train_begin, data.train_end - length - 1);
  std::vector<Index> starts(static_cast<size_t>(batch_size));
  for (auto& s : starts) s = pick(rng);
  return make_batch(data, starts, length);
}

std::vector<Batch> validation_batches(const DataSplit& data, Index count, Index batch_size,
                                      Index length) {
  if (data.val_size() < length + 1)
    throw std::invalid_argument("validation split has " + std::to_string(data.val_size()) +
                                " tokens, need at least " + std::to_string(length + 1));
  const Index windows = count * batch_size;
  const Index span = data.val_size() - length - 1;
  std::vector<Batch> out;
  for (Index b = 0; b < count; ++b) {
    std::vector<Index> starts;
    for (Index j = 0; j < batch_size; ++j) {
      const Index w = b * batch_size + j;
      starts.push_back(data.val_begin + (windows > 1 ? w * span / (windows - 1) : 0));
    }
    out.push_back(make_batch(data, starts, length));
  }
  return out;
}

Index validation_overlap(const DataSplit& data, const std::vector<Batch>& val_batches, Index length) {
  std::vector<bool> seen(data.tokens.size(), false);
  for (const auto& b : val_batches)
    for (Index s : b.starts)
      for (Index i = 0; i <= length; ++i) seen[size_t(s + i)] = true;
  Index overlap = 0;
  for (Index i = data.train_begin; i < data.train_end; ++i) overlap += seen[size_t(i)];
  return overlap;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.6f\n",
                  static_cast<long long>(r.step), r.train_loss, r.val_loss, r.val_ppl, r.lr,
                  r.wall_time);
    os << line;
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_metrics_csv(os, rows);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error(path.string() + ": unexpected metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &step, &r.train_loss, &r.val_loss,
                    &r.val_ppl, &r.lr, &r.wall_time) != 6)
      throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    r.step = step;
    rows.push_back(r);
  }
  return rows;
}

template <typename Scalar>
double evaluate(const LanguageModel<Scalar>& model, const std::vector<Batch>& batches) {
  NoGradScope<Scalar> no_grad;
  double total = 0;
  for (const auto& b : batches) total += double(model.loss(b.inputs, b.targets).item());
  return batches.empty() ? 0.0 : total / double(batches.size());
}

namespace {

struct LoopState {
  Index step = 0;
  double loss_sum = 0;
  Index loss_count = 0;
  double wall_time = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<MetricsRow> rows;
};

std::string format_row(const MetricsRow& r) {
  return std::to_string(r.step) + "," + format_double(r.train_loss) + "," + format_double(r.val_loss) +
         "," + format_double(r.val_ppl) + "," + format_double(r.lr) + "," + format_double(r.wall_time);
}

MetricsRow parse_row(const std::string& text) {
  MetricsRow r;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  if (parts.size() != 6) throw FormatError("checkpoint: malformed metrics entry '" + text + "'");
  r.step = std::stoll(parts[0]);
  r.train_loss = parse_double(parts[1], "metrics");
  r.val_loss = parse_double(parts[2], "metrics");
  r.val_ppl = parse_double(parts[3], "metrics");
  r.lr = parse_double(parts[4], "metrics");
  r.wall_time = parse_double(parts[5], "metrics");
  return r;
}

template <typename Scalar>
Checkpoint<Scalar> training_checkpoint(const LanguageModel<Scalar>& model, const TrainConfig& config,
                                       const AdamW<Scalar>& opt, const LoopState& st) {
  Checkpoint<Scalar> ckpt = model_checkpoint(model);
  for (auto& [k, v] : to_key_values(RunConfig{model.config(), config}))
    if (k.starts_with("train.")) ckpt.header[k] = v;
  ckpt.header["state.step"] = std::to_string(st.step);
  ckpt.header["state.adam_steps"] = std::to_string(opt.steps());
  ckpt.header["state.loss_sum"] = format_double(st.loss_sum);
  ckpt.header["state.loss_count"] = std::to_string(st.loss_count);
  ckpt.header["state.wall_time"] = format_double(st.wall_time);
  ckpt.header["state.best_val_loss"] = format_double(st.best_val_loss);
  ckpt.header["metrics.count"] = std::to_string(st.rows.size());
  for (size_t i = 0; i < st.rows.size(); ++i)
    ckpt.header["metrics." + std::to_string(i)] = format_row(st.rows[i]);
  for (const auto& [name, mom] : opt.moments()) {
    ckpt.tensors.emplace("opt.m." + name, Tensor<Scalar>::from_buffer(Shape{mom.m.size()}, mom.m));
    ckpt.tensors.emplace("opt.v." + name, Tensor<Scalar>::from_buffer(Shape{mom.v.size()}, mom.v));
  }
  return ckpt;
}

const std::string& header_value(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint: missing header key " + key);
  return it->second;
}

template <typename Scalar>
LoopState restore(LanguageModel<Scalar>& model, AdamW<Scalar>& opt, const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint<Scalar>(path);
  const auto expected = model_key_values(model.config());
  for (const auto& [k, v] : expected)
    if (header_value(ckpt.header, k) != v)
      throw FormatError("checkpoint: " + k + " = " + header_value(ckpt.header, k) +
                        " does not match the model (" + v + ")");
  load_parameters(model, ckpt);
  for (auto& [name, mom] : opt.moments()) {
    auto m = ckpt.tensors.find("opt.m." + name);
    auto v = ckpt.tensors.find("opt.v." + name);
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end())
      throw FormatError("checkpoint: missing optimizer state for " + name);
    if (m->second.numel() != mom.m.size() || v->second.numel() != mom.v.size())
      throw FormatError("checkpoint: optimizer state size mismatch for " + name);
    mom.m = m->second.values();
    mom.v = v->second.values();
  }
  LoopState st;
  st.step = std::stoll(header_value(ckpt.header, "state.step"));
  opt.set_steps(std::stoll(header_value(ckpt.header, "state.adam_steps")));
  st.loss_sum = parse_double(header_value(ckpt.header, "state.loss_sum"), "state.loss_sum");
  st.loss_count = std::stoll(header_value(ckpt.header, "state.loss_count"));
  st.wall_time = parse_double(header_value(ckpt.header, "state.wall_time"), "state.wall_time");
  st.best_val_loss = parse_double(header_value(ckpt.header, "state.best_val_loss"), "state.best_val_loss");
  const Index rows = std::stoll(header_value(ckpt.header, "metrics.count"));
  for (Index i = 0; i < rows; ++i)
    st.rows.push_back(parse_row(header_value(ckpt.header, "metrics." + std::to_string(i))));
  return st;
}

template <typename Scalar>
[[noreturn]] void abort_training(const std::filesystem::path& out_dir, Index step, double lr,
                                 double loss, const std::vector<NamedParam<Scalar>>& params,
                                 const std::string& reason) {
  std::ostringstream ss;
  ss << "training aborted: " << reason << "\n";
  ss << "step = " << step << "\nlr = " << format_double(lr) << "\nloss = " << format_double(loss) << "\n";
  ss << "grad norms:\n";
  for (const auto& p : params) {
    const double n = p.tensor.has_grad() ? std::sqrt(p.tensor.grad().template cast<double>().square().sum())
                                         : 0.0;
    ss << "  " << p.name << " = " << format_double(n) << "\n";
  }
  if (!out_dir.empty()) {
    std::ofstream os(out_dir / "abort_diagnostic.txt", std::ios::trunc);
    os << ss.str();
  }
  throw TrainingAborted(ss.str());
}

}  // namespace

template <typename Scalar>
TrainResult train(LanguageModel<Scalar>& model, const TrainConfig& config, const DataSplit& data,
                  const TrainOptions& options) {
  config.validate();
  if (!options.allow_shared_split && !data.disjoint())
    throw std::logic_error("train: training and validation ranges overlap");
  const Index N = model.config().seq_len;
  const auto val = validation_batches(data, config.eval_batches, config.batch_size, N);
  if (!options.allow_shared_split && validation_overlap(data, val, N) != 0)
    throw std::logic_error("train: validation batches read training tokens");
  if (data.train_size() < N + 1)
    throw std::invalid_argument("training split is shorter than one window of N + 1 tokens");

  const auto params = model.parameters();
  AdamW<Scalar> opt(params, {config.beta1, config.beta2, config.adam_eps, config.weight_decay});
  LoopState st;
  if (!options.resume_from.empty()) st = restore(model, opt, options.resume_from);

  const auto& out = options.out_dir;
  if (!out.empty()) std::filesystem::create_directories(out / "checkpoints");
  auto save = [&](const std::filesystem::path& path) {
    if (!out.empty()) write_checkpoint(path, training_checkpoint(model, config, opt, st));
  };

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const double wall_offset = st.wall_time;
  auto elapsed = [&] {
    return wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const Index total = config.total_steps;
  while (st.step < total) {
    const Index s = st.step;
    const Batch batch = sample_train_batch(data, config.batch_size, N, config.seed, s);
    const double lr = cosine_lr(s, total, config.lr_base, config.lr_min);
    double loss_value = 0;
    try {
      Tape<Scalar> tape;
      const auto loss = model.loss(batch.inputs, batch.targets);
      loss_value = double(loss.item());
      tape.backward(loss);
    } catch (const NumericError& e) {
      abort_training(out, s, lr, std::numeric_limits<double>::quiet_NaN(), params, e.what());
    }
    if (!std::isfinite(loss_value)) abort_training(out, s, lr, loss_value, params, "non-finite loss");
    if (config.grad_clip > 0)
      clip_grad_norm(params, config.grad_clip);
    try {
      opt.step(lr);
    } catch (const NumericError& e) {
      abort_training(out, s, lr, loss_value, params, e.what());
    }
    zero_grads(params);
    model.after_update();

    st.loss_sum += loss_value;
    ++st.loss_count;
    result.step_losses.push_back(loss_value);
    st.step = s + 1;
    st.wall_time = elapsed();

    const bool eval_now = st.step % config.eval_interval == 0 || st.step == total;
    if (eval_now) {
      MetricsRow row;
      row.step = st.step;
      row.train_loss = st.loss_sum / double(st.loss_count);
      row.val_loss = evaluate(model, val);
      row.val_ppl = std::exp(row.val_loss);
      row.lr = lr;
      row.wall_time = st.wall_time;
      if (!std::isfinite(row.val_loss))
        abort_training(out, s, lr, row.val_loss, params, "non-finite validation loss");
      st.best_val_loss = std::min(st.best_val_loss, row.val_loss);
      st.rows.push_back(row);
      st.loss_sum = 0;
      st.loss_count = 0;
      if (options.log)
        *options.log << "step " << row.step << "  train " << row.train_loss << "  val " << row.val_loss
                     << "  ppl " << row.val_ppl << "  lr " << row.lr << "  " << row.wall_time << "s\n";
      if (!out.empty()) write_metrics_csv(out / "metrics.csv", st.rows);
      save(out / "checkpoints" / ("step_" + std::to_string(st.step) + ".ckpt"));
    }
    if (options.stop_after >= 0 && st.step >= options.stop_after) {
      if (!eval_now) save(out / "checkpoints" / ("step_" + std::to_string(st.step) + ".ckpt"));
      result.rows = st.rows;
      result.final_step = st.step;
      return result;
    }
  }
  if (!out.empty()) {
    write_metrics_csv(out / "metrics.csv", st.rows);
    save(out / "final.ckpt");
  }
  result.rows = st.rows;
  result.final_step = st.step;
  return result;
}

#define SKO_INSTANTIATE(S)                                                                   \
  template TrainResult train<S>(LanguageModel<S>&, const TrainConfig&, const DataSplit&,     \
                                const TrainOptions&);                                        \
  template double evaluate<S>(const LanguageModel<S>&, const std::vector<Batch>&);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
