#pragma once

// Copies library parameters into the plain structures the oracles consume.

#include "sko/attention.hpp"
#include "sko/model.hpp"
#include "sko/oracles.hpp"

#include <stdexcept>

namespace sko::oracle {

/// Rank-2 tensor, or slice `batch` of a rank-3 tensor.
inline Mat to_mat(const Tensor<double>& t, Index batch = 0) {
  if (t.rank() == 2) return Mat{int(t.dim(0)), int(t.dim(1)), Vec(t.data().begin(), t.data().end())};
  if (t.rank() != 3) throw std::invalid_argument("to_mat: expected rank 2 or 3");
  const Index rows = t.dim(1), cols = t.dim(2), off = batch * rows * cols;
  return Mat{int(rows), int(cols), Vec(t.data().begin() + off, t.data().begin() + off + rows * cols)};
}

inline Vec to_vec(const Tensor<double>& t) { return Vec(t.data().begin(), t.data().end()); }

inline SkoWeights sko_weights(const SkoAttentionLayer<double>& l) {
  SkoWeights w;
  w.w_q = to_mat(l.w_q);
  w.w_k = to_mat(l.w_k);
  w.w_v = to_mat(l.w_v);
  w.w_o = to_mat(l.w_o);
  w.heads = int(l.heads);
  w.q = l.kernel.q;
  w.degrees = to_vec(l.kernel.degrees);
  const Mat kw = to_mat(l.kernel.weights);
  for (int h = 0; h < kw.rows; ++h)
    w.kernel_weights.emplace_back(kw.data.begin() + h * kw.cols, kw.data.begin() + (h + 1) * kw.cols);
  w.rms_gain = to_vec(l.rms_gain);
  w.rms_eps = double(l.rms_eps);
  return w;
}

inline SoftmaxWeights softmax_weights(const BaselineAttentionLayer<double>& l) {
  return SoftmaxWeights{to_mat(l.w_q), to_mat(l.w_k), to_mat(l.w_v), to_mat(l.w_o), int(l.heads)};
}

inline LmWeights lm_weights(const LanguageModel<double>& m) {
  LmWeights w;
  w.token_embedding = to_mat(m.token_embedding());
  w.position_embedding = to_mat(m.position_embedding());
  w.final_gain = to_vec(m.final_gain());
  w.rms_eps = m.config().rms_eps;
  for (const auto& b : m.blocks()) {
    BlockWeights bw;
    bw.norm1_gain = to_vec(b.norm1_gain);
    bw.norm2_gain = to_vec(b.norm2_gain);
    if (const auto* s = b.attention.sko()) {
      bw.sko = sko_weights(*s);
      bw.use_sko = true;
    } else {
      bw.softmax = softmax_weights(*b.attention.baseline());
      bw.use_sko = false;
    }
    bw.fc_w = to_mat(b.fc_w);
    bw.fc_b = to_vec(b.fc_b);
    bw.proj_w = to_mat(b.proj_w);
    bw.proj_b = to_vec(b.proj_b);
    w.blocks.push_back(std::move(bw));
  }
  for (const auto& p : m.parameters())
    if (p.name == "lm_head") w.lm_head = to_mat(p.tensor);
  return w;
}

}  // namespace sko::oracle
