#pragma once

// Reference implementations written against plain std::vector<double> with
// explicit loops. They share no code with the tensor library and serve as
// independent expected values in tests and the self-test.

#include <cstdint>
#include <vector>

namespace sko::oracle {

using Vec = std::vector<double>;

/// Legendre P_k(x) by Bonnet's recurrence k P_k = (2k - 1) x P_{k-1} - (k - 1) P_{k-2}.
double legendre(int k, double x);

/// Gegenbauer C_k^lambda(x) by
/// k C_k = 2 (k + lambda - 1) x C_{k-1} - (k + 2 lambda - 2) C_{k-2}, C_0 = 1, C_1 = 2 lambda x.
double gegenbauer(int k, double lambda, double x);

/// C_k^lambda(1) = prod_{j<k} (2 lambda + j) / (j + 1).
double gegenbauer_at_one(int k, double lambda);

/// sum_k w_k clamp(n - k + 1, 0, 1) C_k^lambda(x) / C_k^lambda(1)
double kernel(double x, double lambda, double n, const Vec& weights);

/// Row-major dense matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec data;

  double operator()(int r, int c) const { return data[size_t(r) * size_t(cols) + size_t(c)]; }
  double& operator()(int r, int c) { return data[size_t(r) * size_t(cols) + size_t(c)]; }
};

Mat matmul(const Mat& a, const Mat& b);

struct SkoWeights {
  Mat w_q, w_k, w_v, w_o;            // D x D
  int heads = 1;
  int q = 2;
  Vec degrees;                       // [H]
  std::vector<Vec> kernel_weights;   // [H][K + 1]
  Vec rms_gain;                      // [D]
  double rms_eps = 1e-6;
};

struct SoftmaxWeights {
  Mat w_q, w_k, w_v, w_o;
  int heads = 1;
};

/// Per-position loop: o_i = sum_{j <= i} phi(q~_i . k~_j) v_j / (i + 1), heads
/// concatenated. `x` is one sequence [N x D].
Mat sko_aggregate(const Mat& x, const SkoWeights& w);
/// RMSNorm(sko_aggregate(x)) W_O
Mat sko_attention(const Mat& x, const SkoWeights& w);
/// Causal softmax(q_i . k_j / sqrt(d)) attention followed by W_O.
Mat softmax_attention(const Mat& x, const SoftmaxWeights& w);

Vec rmsnorm(const Vec& row, const Vec& gain, double eps);
double gelu(double x);

struct BlockWeights {
  Vec norm1_gain;
  SkoWeights sko;
  SoftmaxWeights softmax;
  bool use_sko = true;
  Vec norm2_gain;
  Mat fc_w;  // D x rD
  Vec fc_b;
  Mat proj_w;  // rD x D
  Vec proj_b;
};

struct LmWeights {
  Mat token_embedding;     // V x D
  Mat position_embedding;  // N x D
  std::vector<BlockWeights> blocks;
  Vec final_gain;
  double rms_eps = 1e-6;
  Mat lm_head;  // D x V; empty when tied
};

/// Logits [n x V] for one token sequence, one pre-norm block at a time.
Mat lm_logits(const std::vector<std::int32_t>& tokens, const LmWeights& w);

/// Mean negative log-likelihood of targets under row-wise logits.
double cross_entropy(const Mat& logits, const std::vector<std::int32_t>& targets);

/// One AdamW step on a single scalar, decay applied before the moment update.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double param, double grad, double lr, double beta1, double beta2, double eps,
              double weight_decay);
};

}  // namespace sko::oracle
