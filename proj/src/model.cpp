#include "sko/model.hpp"

#include "sko/ops.hpp"
#include "sko/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sko {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (d_model <= 0 || seq_len <= 0 || heads <= 0 || layers < 0 || mlp_ratio <= 0)
    fail("dimensions must be positive");
  if (d_model % heads != 0) fail("D must be divisible by H");
  if (Index(degrees.size()) != heads) fail("degrees must list one value per head");
  for (double n : degrees)
    if (!(n >= 0) || !std::isfinite(n)) fail("degrees must be finite and >= 0");
  if (q < 2) fail("q must be >= 2");
  if (!(rms_eps >= 0)) fail("rms_eps must be >= 0");
}

AttentionSpec ModelConfig::attention_spec() const {
  AttentionSpec s;
  s.d_model = d_model;
  s.heads = heads;
  s.q = q;
  s.degrees = degrees;
  s.learn_degrees = learn_degrees;
  s.kernel_init = kernel_init;
  s.rms_eps = rms_eps;
  s.init_std = init_std;
  return s;
}

int ModelConfig::max_degree() const {
  double m = 0;
  for (double n : degrees) m = std::max(m, n);
  return static_cast<int>(std::ceil(m));
}

ParamCount param_count(const ModelConfig& c) {
  c.validate();
  const Index D = c.d_model, hidden = c.mlp_ratio * c.d_model;
  ParamCount p;
  p.components.emplace_back("token_embedding", c.vocab_size * D);
  p.components.emplace_back("position_embedding", c.seq_len * D);
  Index attention = 4 * D * D;
  if (c.mechanism == Mechanism::Sko) {
    attention += c.heads * (c.max_degree() + 1) + D;
    if (c.learn_degrees) attention += c.heads;
  }
  p.components.emplace_back("attention", c.layers * attention);
  p.components.emplace_back("mlp", c.layers * (D * hidden + hidden + hidden * D + D));
  p.components.emplace_back("block_norms", c.layers * 2 * D);
  p.components.emplace_back("final_norm", D);
  p.components.emplace_back("lm_head", c.tie_embeddings ? 0 : D * c.vocab_size);
  for (const auto& [name, n] : p.components) p.total += n;
  return p;
}

template <typename Scalar>
LanguageModel<Scalar>::LanguageModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const Index D = config_.d_model, V = config_.vocab_size, hidden = config_.mlp_ratio * D;
  const double sd = config_.init_std;
  token_embedding_ = normal_tensor<Scalar>(Shape{V, D}, sd, rng, true);
  position_embedding_ = normal_tensor<Scalar>(Shape{config_.seq_len, D}, sd, rng, true);
  const AttentionSpec spec = config_.attention_spec();
  for (Index l = 0; l < config_.layers; ++l) {
    TransformerBlock<Scalar> b;
    b.norm1_gain = Tensor<Scalar>::ones(Shape{D}, true);
    b.attention = AttentionLayer<Scalar>::create(config_.mechanism, spec, rng);
    b.norm2_gain = Tensor<Scalar>::ones(Shape{D}, true);
    b.fc_w = normal_tensor<Scalar>(Shape{D, hidden}, sd, rng, true);
    b.fc_b = Tensor<Scalar>::zeros(Shape{hidden}, true);
    b.proj_w = normal_tensor<Scalar>(Shape{hidden, D}, sd, rng, true);
    b.proj_b = Tensor<Scalar>::zeros(Shape{D}, true);
    blocks_.push_back(std::move(b));
  }
  final_gain_ = Tensor<Scalar>::ones(Shape{D}, true);
  if (!config_.tie_embeddings) lm_head_ = normal_tensor<Scalar>(Shape{D, V}, sd, rng, true);
}

template <typename Scalar>
Tensor<Scalar> LanguageModel<Scalar>::forward(const TokenBatch& tokens) const {
  if (tokens.batch <= 0 || tokens.length <= 0 ||
      Index(tokens.ids.size()) != tokens.batch * tokens.length)
    throw DimensionError("model: malformed token batch");
  if (tokens.length > config_.seq_len)
    throw DimensionError("model: sequence length " + std::to_string(tokens.length) +
                         " exceeds N = " + std::to_string(config_.seq_len));
  const Scalar eps = Scalar(config_.rms_eps);
  std::vector<std::int32_t> positions(size_t(tokens.length));
  for (Index i = 0; i < tokens.length; ++i) positions[size_t(i)] = std::int32_t(i);

  Tensor<Scalar> x = add(embedding(token_embedding_, tokens.ids, tokens.shape()),
                         embedding(position_embedding_, positions, Shape{tokens.length}));
  for (const auto& b : blocks_) {
    x = add(x, b.attention.forward(rmsnorm(x, b.norm1_gain, eps)));
    const auto hidden = gelu(add(matmul(rmsnorm(x, b.norm2_gain, eps), b.fc_w), b.fc_b));
    x = add(x, add(matmul(hidden, b.proj_w), b.proj_b));
  }
  x = rmsnorm(x, final_gain_, eps);
  if (config_.tie_embeddings) return matmul(x, transpose(token_embedding_));
  return matmul(x, lm_head_);
}

template <typename Scalar>
Tensor<Scalar> LanguageModel<Scalar>::loss(const TokenBatch& inputs,
                                           std::span<const std::int32_t> targets) const {
  return cross_entropy(forward(inputs), targets);
}

template <typename Scalar>
std::vector<std::int32_t> LanguageModel<Scalar>::generate(std::span<const std::int32_t> prompt,
                                                          Index steps, double temperature,
                                                          std::uint64_t seed) const {
  if (steps < 0) throw std::invalid_argument("generate: steps must be >= 0");
  if (!(temperature >= 0)) throw std::invalid_argument("generate: temperature must be >= 0");
  if (Index(prompt.size()) + steps > config_.seq_len)
    throw std::length_error("generate: prompt length " + std::to_string(prompt.size()) + " + " +
                            std::to_string(steps) + " steps exceeds N = " +
                            std::to_string(config_.seq_len));
  std::vector<std::int32_t> out(prompt.begin(), prompt.end());
  if (steps == 0) return out;
  if (out.empty()) throw std::invalid_argument("generate: empty prompt");

  NoGradScope<Scalar> no_grad;
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index V = config_.vocab_size;
  for (Index s = 0; s < steps; ++s) {
    const TokenBatch batch{1, Index(out.size()), out};
    const Tensor<Scalar> logits = forward(batch);
    const Index base = (Index(out.size()) - 1) * V;
    Eigen::ArrayXd last = logits.values().segment(base, V).template cast<double>();
    Index next = 0;
    if (temperature == 0) {
      last.maxCoeff(&next);
    } else {
      last = ((last - last.maxCoeff()) / temperature).exp();
      const double u = unit(rng) * last.sum();
      double acc = 0;
      next = V - 1;
      for (Index v = 0; v < V; ++v) {
        acc += last[v];
        if (u < acc) {
          next = v;
          break;
        }
      }
    }
    out.push_back(std::int32_t(next));
  }
  return out;
}

template <typename Scalar>
std::vector<NamedParam<Scalar>> LanguageModel<Scalar>::parameters() const {
  std::vector<NamedParam<Scalar>> p;
  p.push_back({"token_embedding", token_embedding_, true});
  p.push_back({"position_embedding", position_embedding_, true});
  for (size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    p.push_back({pre + "norm1_gain", b.norm1_gain, false});
    for (auto& a : b.attention.parameters(pre + "attn.")) p.push_back(std::move(a));
    p.push_back({pre + "norm2_gain", b.norm2_gain, false});
    p.push_back({pre + "mlp.fc_w", b.fc_w, true});
    p.push_back({pre + "mlp.fc_b", b.fc_b, false});
    p.push_back({pre + "mlp.proj_w", b.proj_w, true});
    p.push_back({pre + "mlp.proj_b", b.proj_b, false});
  }
  p.push_back({"final_gain", final_gain_, false});
  if (!config_.tie_embeddings) p.push_back({"lm_head", lm_head_, true});
  return p;
}

template <typename Scalar>
void LanguageModel<Scalar>::after_update() {
  for (auto& b : blocks_)
    if (auto* s = b.attention.sko(); s && s->kernel.learn_degrees()) s->kernel.clamp_degrees();
}

template class LanguageModel<float>;
template class LanguageModel<double>;

}  // namespace sko
