#include "sko/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sko::oracle {

double legendre(int k, double x) {
  if (k == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int j = 2; j <= k; ++j) {
    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

double gegenbauer(int k, double lambda, double x) {
  if (k == 0) return 1.0;
  double c0 = 1.0, c1 = 2.0 * lambda * x;
  for (int j = 2; j <= k; ++j) {
    const double c2 = (2.0 * (j + lambda - 1.0) * x * c1 - (j + 2.0 * lambda - 2.0) * c0) / j;
    c0 = c1;
    c1 = c2;
  }
  return c1;
}

double gegenbauer_at_one(int k, double lambda) {
  double v = 1.0;
  for (int j = 0; j < k; ++j) v *= (2.0 * lambda + j) / (j + 1.0);
  return v;
}

double kernel(double x, double lambda, double n, const Vec& weights) {
  double phi = 0;
  for (size_t k = 0; k < weights.size(); ++k) {
    const double g = std::min(1.0, std::max(0.0, n - double(k) + 1.0));
    if (g == 0.0) continue;
    phi += weights[k] * g * gegenbauer(int(k), lambda, x) / gegenbauer_at_one(int(k), lambda);
  }
  return phi;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("oracle matmul: inner dimensions differ");
  Mat c{a.rows, b.cols, Vec(size_t(a.rows) * size_t(b.cols), 0.0)};
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0;
      for (int t = 0; t < a.cols; ++t) s += a(i, t) * b(t, j);
      c(i, j) = s;
    }
  return c;
}

Vec rmsnorm(const Vec& row, const Vec& gain, double eps) {
  double ms = 0;
  for (double v : row) ms += v * v;
  ms /= double(row.size());
  const double r = std::sqrt(ms + eps);
  Vec out(row.size());
  for (size_t i = 0; i < row.size(); ++i) out[i] = row[i] / r * gain[i];
  return out;
}

double gelu(double x) {
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

namespace {

Vec head_slice(const Mat& m, int row, int h, int d) {
  Vec v(static_cast<size_t>(d));
  for (int t = 0; t < d; ++t) v[size_t(t)] = m(row, h * d + t);
  return v;
}

Vec unit(Vec v) {
  double n = 0;
  for (double a : v) n += a * a;
  n = std::max(std::sqrt(n), 1e-12);
  for (double& a : v) a /= n;
  return v;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Mat apply_rows(const Mat& x, const Vec& gain, double eps) {
  Mat out = x;
  for (int i = 0; i < x.rows; ++i) {
    Vec row(x.data.begin() + i * x.cols, x.data.begin() + (i + 1) * x.cols);
    const Vec n = rmsnorm(row, gain, eps);
    std::copy(n.begin(), n.end(), out.data.begin() + i * x.cols);
  }
  return out;
}

}  // namespace

Mat sko_aggregate(const Mat& x, const SkoWeights& w) {
  const int N = x.rows, D = x.cols, H = w.heads, d = D / H;
  const double lambda = (w.q - 1) / 2.0;
  const Mat Q = matmul(x, w.w_q), K = matmul(x, w.w_k), V = matmul(x, w.w_v);
  Mat out{N, D, Vec(size_t(N) * size_t(D), 0.0)};
  for (int h = 0; h < H; ++h)
    for (int i = 0; i < N; ++i) {
      const Vec qi = unit(head_slice(Q, i, h, d));
      for (int j = 0; j <= i; ++j) {
        const Vec kj = unit(head_slice(K, j, h, d));
        const double s = std::clamp(dot(qi, kj), -1.0, 1.0);
        const double phi = kernel(s, lambda, w.degrees[size_t(h)], w.kernel_weights[size_t(h)]);
        for (int t = 0; t < d; ++t) out(i, h * d + t) += phi * V(j, h * d + t);
      }
      for (int t = 0; t < d; ++t) out(i, h * d + t) /= double(i + 1);
    }
  return out;
}

Mat sko_attention(const Mat& x, const SkoWeights& w) {
  return matmul(apply_rows(sko_aggregate(x, w), w.rms_gain, w.rms_eps), w.w_o);
}

Mat softmax_attention(const Mat& x, const SoftmaxWeights& w) {
  const int N = x.rows, D = x.cols, H = w.heads, d = D / H;
  const Mat Q = matmul(x, w.w_q), K = matmul(x, w.w_k), V = matmul(x, w.w_v);
  Mat out{N, D, Vec(size_t(N) * size_t(D), 0.0)};
  for (int h = 0; h < H; ++h)
    for (int i = 0; i < N; ++i) {
      const Vec qi = head_slice(Q, i, h, d);
      Vec scores(size_t(i) + 1);
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j <= i; ++j) {
        scores[size_t(j)] = dot(qi, head_slice(K, j, h, d)) / std::sqrt(double(d));
        mx = std::max(mx, scores[size_t(j)]);
      }
      double z = 0;
      for (double& s : scores) z += (s = std::exp(s - mx));
      for (int j = 0; j <= i; ++j)
        for (int t = 0; t < d; ++t) out(i, h * d + t) += scores[size_t(j)] / z * V(j, h * d + t);
    }
  return matmul(out, w.w_o);
}

Mat lm_logits(const std::vector<std::int32_t>& tokens, const LmWeights& w) {
  const int n = int(tokens.size()), D = w.token_embedding.cols;
  Mat x{n, D, Vec(size_t(n) * size_t(D))};
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < D; ++c) x(i, c) = w.token_embedding(tokens[size_t(i)], c) + w.position_embedding(i, c);

  for (const auto& b : w.blocks) {
    const Mat h1 = apply_rows(x, b.norm1_gain, w.rms_eps);
    const Mat a = b.use_sko ? sko_attention(h1, b.sko) : softmax_attention(h1, b.softmax);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += a.data[i];
    Mat hidden = matmul(apply_rows(x, b.norm2_gain, w.rms_eps), b.fc_w);
    for (int i = 0; i < hidden.rows; ++i)
      for (int c = 0; c < hidden.cols; ++c) hidden(i, c) = gelu(hidden(i, c) + b.fc_b[size_t(c)]);
    const Mat m = matmul(hidden, b.proj_w);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < D; ++c) x(i, c) += m(i, c) + b.proj_b[size_t(c)];
  }
  x = apply_rows(x, w.final_gain, w.rms_eps);
  if (!w.lm_head.data.empty()) return matmul(x, w.lm_head);
  const Mat& e = w.token_embedding;
  Mat logits{n, e.rows, Vec(size_t(n) * size_t(e.rows))};
  for (int i = 0; i < n; ++i)
    for (int v = 0; v < e.rows; ++v) {
      double s = 0;
      for (int c = 0; c < D; ++c) s += x(i, c) * e(v, c);
      logits(i, v) = s;
    }
  return logits;
}

double cross_entropy(const Mat& logits, const std::vector<std::int32_t>& targets) {
  double total = 0;
  for (int i = 0; i < logits.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < logits.cols; ++v) mx = std::max(mx, logits(i, v));
    double z = 0;
    for (int v = 0; v < logits.cols; ++v) z += std::exp(logits(i, v) - mx);
    total += std::log(z) + mx - logits(i, targets[size_t(i)]);
  }
  return total / logits.rows;
}

double ScalarAdam::step(double param, double grad, double lr, double beta1, double beta2, double eps,
                        double weight_decay) {
  ++t;
  param -= lr * weight_decay * param;
  m = beta1 * m + (1 - beta1) * grad;
  v = beta2 * v + (1 - beta2) * grad * grad;
  const double m_hat = m / (1 - std::pow(beta1, t));
  const double v_hat = v / (1 - std::pow(beta2, t));
  return param - lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace sko::oracle
