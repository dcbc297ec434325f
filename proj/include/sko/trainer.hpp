#pragma once

// Training pipeline: contiguous train/validation split, seeded batch sampling,
// AdamW under a cosine schedule, fixed validation batches, CSV metrics and
// resumable checkpoints.

#include "sko/model.hpp"
#include "sko/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sko {

enum class Precision { F32, F64 };

std::string to_string(Precision p);
/// Accepts "f32" or "f64".
Precision parse_precision(std::string_view text);

struct TrainConfig {
  double lr_base = 6e-4;
  double lr_min = 1e-5;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  Index total_steps = 2000;
  Index eval_interval = 500;
  Index batch_size = 8;
  double grad_clip = 1.0;  // 0 disables clipping
  std::uint64_t seed = 0;
  std::string dataset = "data/sample.txt";
  double val_fraction = 0.1;
  std::string tokenizer = "byte";
  std::string vocab_file;
  std::string merges_file;
  Index eval_batches = 20;
  Precision precision = Precision::F64;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// One token stream with half-open train and validation ranges.
struct DataSplit {
  std::vector<std::int32_t> tokens;
  Index train_begin = 0, train_end = 0;
  Index val_begin = 0, val_end = 0;

  Index train_size() const { return train_end - train_begin; }
  Index val_size() const { return val_end - val_begin; }
  bool disjoint() const { return train_end <= val_begin || val_end <= train_begin; }
};

/// Last round(fraction * n) tokens become validation; the rest is training.
DataSplit split_tokens(std::vector<std::int32_t> tokens, double val_fraction);
/// Train and validation both cover the whole stream (memorisation checks only).
DataSplit shared_split(std::vector<std::int32_t> tokens);

struct Batch {
  TokenBatch inputs;
  std::vector<std::int32_t> targets;
  std::vector<Index> starts;  // absolute offset of each window
};

/// Windows of length+1 tokens drawn uniformly from the training range with an
/// RNG derived from (seed, step) alone.
Batch sample_train_batch(const DataSplit& data, Index batch_size, Index length,
                         std::uint64_t seed, Index step);

/// `count` batches of evenly spaced windows over the validation range.
std::vector<Batch> validation_batches(const DataSplit& data, Index count, Index batch_size,
                                      Index length);

/// Number of token positions read by the validation batches that lie in the
/// training range.
Index validation_overlap(const DataSplit& data, const std::vector<Batch>& val_batches,
                         Index length);

struct MetricsRow {
  Index step = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_ppl = 0;
  double lr = 0;
  double wall_time = 0;
};

inline constexpr std::string_view kMetricsHeader = "step,train_loss,val_loss,val_ppl,lr,wall_time";

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// Non-finite loss or gradient during training; what() carries the diagnostic.
class TrainingAborted : public NumericError {
 public:
  using NumericError::NumericError;
};

struct TrainOptions {
  std::filesystem::path out_dir;      // empty: no files written
  std::filesystem::path resume_from;  // checkpoint written by an earlier run
  Index stop_after = -1;              // stop (with checkpoint) once this step completes
  bool allow_shared_split = false;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<MetricsRow> rows;  // full history, including rows restored on resume
  std::vector<double> step_losses;  // losses of the steps run by this call
  Index final_step = 0;
};

/// Trains in place. Writes metrics.csv, checkpoints/step_<S>.ckpt at every
/// evaluation and final.ckpt under out_dir.
template <typename Scalar>
TrainResult train(LanguageModel<Scalar>& model, const TrainConfig& config, const DataSplit& data,
                  const TrainOptions& options = {});

/// Mean loss over the given batches, without recording.
template <typename Scalar>
double evaluate(const LanguageModel<Scalar>& model, const std::vector<Batch>& batches);

}  // namespace sko
