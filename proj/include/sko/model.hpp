#pragma once

// Decoder-only language model: token + learned position embeddings, L pre-norm
// blocks {RMSNorm, attention, RMSNorm, GELU MLP} with residual connections, a
// final RMSNorm and an LM head tied to the token embedding by default.

#include "sko/attention.hpp"
#include "sko/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sko {

struct ModelConfig {
  Index vocab_size = 256;
  Index d_model = 64;    // D
  Index seq_len = 128;   // N
  Index heads = 4;       // H
  Index layers = 2;      // L
  int q = 16;
  std::vector<double> degrees{2, 3, 4, 5};
  Mechanism mechanism = Mechanism::Sko;
  bool tie_embeddings = true;
  Index mlp_ratio = 4;
  double rms_eps = 1e-6;
  std::uint64_t seed = 0;
  bool learn_degrees = false;
  double kernel_init = 1.0;
  double init_std = 0.02;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
  AttentionSpec attention_spec() const;
  int max_degree() const;
};

/// Row-major [batch, length] token ids.
struct TokenBatch {
  Index batch = 0;
  Index length = 0;
  std::vector<std::int32_t> ids;

  Shape shape() const { return {batch, length}; }
};

struct ParamCount {
  std::vector<std::pair<std::string, Index>> components;
  Index total = 0;
};

/// Trainable scalars per component, computed from the configuration alone.
ParamCount param_count(const ModelConfig& config);

template <typename Scalar>
struct TransformerBlock {
  Tensor<Scalar> norm1_gain;
  AttentionLayer<Scalar> attention;
  Tensor<Scalar> norm2_gain;
  Tensor<Scalar> fc_w, fc_b;      // [D, rD], [rD]
  Tensor<Scalar> proj_w, proj_b;  // [rD, D], [D]
};

template <typename Scalar>
class LanguageModel {
 public:
  explicit LanguageModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Logits [B, N, vocab]. Throws std::out_of_range for ids outside the vocabulary.
  Tensor<Scalar> forward(const TokenBatch& tokens) const;
  /// Mean cross-entropy of `targets` (same layout as inputs).
  Tensor<Scalar> loss(const TokenBatch& inputs, std::span<const std::int32_t> targets) const;

  /// Greedy when temperature == 0, seeded categorical sampling otherwise.
  std::vector<std::int32_t> generate(std::span<const std::int32_t> prompt, Index steps,
                                     double temperature, std::uint64_t seed = 0) const;

  /// Every trainable tensor with a stable dotted name.
  std::vector<NamedParam<Scalar>> parameters() const;
  /// Re-imposes parameter constraints after an optimizer update.
  void after_update();

  const std::vector<TransformerBlock<Scalar>>& blocks() const { return blocks_; }
  const Tensor<Scalar>& token_embedding() const { return token_embedding_; }
  const Tensor<Scalar>& position_embedding() const { return position_embedding_; }
  const Tensor<Scalar>& final_gain() const { return final_gain_; }

 private:
  ModelConfig config_;
  Tensor<Scalar> token_embedding_;     // [V, D]
  Tensor<Scalar> position_embedding_;  // [N, D]
  std::vector<TransformerBlock<Scalar>> blocks_;
  Tensor<Scalar> final_gain_;          // [D]
  Tensor<Scalar> lm_head_;             // [D, V], only when untied
};

}  // namespace sko
