#include "sko/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sko {

namespace {

template <typename Scalar>
using NodeT = detail::Node<Scalar>;

template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;

template <typename Scalar>
MatMap<Scalar> as_matrix(Buffer<Scalar>& b, Index offset, Index rows, Index cols) {
  return MatMap<Scalar>(b.data() + offset, rows, cols);
}

template <typename Scalar>
ConstMatMap<Scalar> as_matrix(const Buffer<Scalar>& b, Index offset, Index rows, Index cols) {
  return ConstMatMap<Scalar>(b.data() + offset, rows, cols);
}

// Broadcasting of two shapes aligned at their trailing axes.
struct Broadcast {
  enum class Kind { Same, BSuffix, ASuffix, General };
  Kind kind = Kind::General;
  Shape out;
  std::vector<Index> stride_a;  // per output axis, 0 where broadcast
  std::vector<Index> stride_b;
  Index size = 1;
};

std::vector<Index> contiguous_strides(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (Index i = Index(s.size()) - 2; i >= 0; --i) st[size_t(i)] = st[size_t(i + 1)] * s[size_t(i + 1)];
  return st;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  const size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (size_t i = 0; i < r; ++i) {
    const Index ia = Index(i) - Index(r - a.size());
    const Index ib = Index(i) - Index(r - b.size());
    const Index da = ia >= 0 ? a[size_t(ia)] : 1;
    const Index db = ib >= 0 ? b[size_t(ib)] : 1;
    if (da != db && da != 1 && db != 1)
      throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                           " are not broadcastable");
    p.out[i] = std::max(da, db);
    if (ia >= 0 && da != 1) p.stride_a[i] = sa[size_t(ia)];
    if (ib >= 0 && db != 1) p.stride_b[i] = sb[size_t(ib)];
  }
  p.size = numel(p.out);
  if (a == b)
    p.kind = Broadcast::Kind::Same;
  else if (p.out == a && is_suffix(b, a))
    p.kind = Broadcast::Kind::BSuffix;
  else if (p.out == b && is_suffix(a, b))
    p.kind = Broadcast::Kind::ASuffix;
  return p;
}

// Calls f(i, ia, ib) for every output element i with the matching input offsets.
template <typename F>
void for_each_broadcast(const Broadcast& p, Index na, Index nb, F&& f) {
  switch (p.kind) {
    case Broadcast::Kind::Same:
      for (Index i = 0; i < p.size; ++i) f(i, i, i);
      return;
    case Broadcast::Kind::BSuffix:
      for (Index i = 0; i < p.size; ++i) f(i, i, i % nb);
      return;
    case Broadcast::Kind::ASuffix:
      for (Index i = 0; i < p.size; ++i) f(i, i % na, i);
      return;
    case Broadcast::Kind::General:
      break;
  }
  const size_t r = p.out.size();
  std::vector<Index> idx(r, 0);
  Index ia = 0, ib = 0;
  for (Index i = 0; i < p.size; ++i) {
    f(i, ia, ib);
    for (size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < p.out[ax]) {
        ia += p.stride_a[ax];
        ib += p.stride_b[ax];
        break;
      }
      ia -= p.stride_a[ax] * (p.out[ax] - 1);
      ib -= p.stride_b[ax] * (p.out[ax] - 1);
      idx[ax] = 0;
    }
  }
}

template <typename Scalar>
Shape row_shape_check(const Tensor<Scalar>& x, const char* op) {
  if (x.rank() < 1) throw DimensionError(std::string(op) + ": needs rank >= 1, got scalar");
  return x.shape();
}

}  // namespace

// ------------------------------------------------------------------ matmul

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2))
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  const Index m = a.dim(-2), k = a.dim(-1), p = b.dim(-1);

  if (b.rank() == 2) {
    // Fold every leading axis of a into the row dimension.
    const Index rows = a.numel() / k;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(p);
    Buffer<Scalar> out(rows * p);
    as_matrix(out, 0, rows, p).noalias() =
        as_matrix(a.values(), 0, rows, k) * as_matrix(b.values(), 0, k, p);
    return detail::make_result<Scalar>(
        std::move(out_shape), std::move(out), {a, b}, [rows, k, p](NodeT<Scalar>& self) {
          auto& pa = self.parents[0];
          auto& pb = self.parents[1];
          auto g = as_matrix(std::as_const(self.grad), 0, rows, p);
          if (pa->requires_grad)
            as_matrix(pa->grad_buffer(), 0, rows, k).noalias() +=
                g * as_matrix(std::as_const(pb->value), 0, k, p).transpose();
          if (pb->requires_grad)
            as_matrix(pb->grad_buffer(), 0, k, p).noalias() +=
                as_matrix(std::as_const(pa->value), 0, rows, k).transpose() * g;
        });
  }

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const Broadcast plan = plan_broadcast(batch_a, batch_b, "matmul");
  Shape out_shape = plan.out;
  out_shape.push_back(m);
  out_shape.push_back(p);
  Buffer<Scalar> out(plan.size * m * p);
  for_each_broadcast(plan, numel(batch_a), numel(batch_b), [&](Index i, Index ia, Index ib) {
    as_matrix(out, i * m * p, m, p).noalias() =
        as_matrix(a.values(), ia * m * k, m, k) * as_matrix(b.values(), ib * k * p, k, p);
  });
  const Index na = numel(batch_a), nb = numel(batch_b);
  return detail::make_result<Scalar>(
      std::move(out_shape), std::move(out), {a, b},
      [plan, na, nb, m, k, p](NodeT<Scalar>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const bool wa = pa->requires_grad, wb = pb->requires_grad;
        if (wa) pa->grad_buffer();
        if (wb) pb->grad_buffer();
        for_each_broadcast(plan, na, nb, [&](Index i, Index ia, Index ib) {
          auto g = as_matrix(std::as_const(self.grad), i * m * p, m, p);
          if (wa)
            as_matrix(pa->grad, ia * m * k, m, k).noalias() +=
                g * as_matrix(std::as_const(pb->value), ib * k * p, k, p).transpose();
          if (wb)
            as_matrix(pb->grad, ib * k * p, k, p).noalias() +=
                as_matrix(std::as_const(pa->value), ia * m * k, m, k).transpose() * g;
        });
      });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
  if (x.rank() < 2) throw DimensionError("transpose: needs rank >= 2, got " + to_string(x.shape()));
  const Index r = x.dim(-2), c = x.dim(-1);
  const Index batches = x.numel() / std::max<Index>(r * c, 1);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Buffer<Scalar> out(x.numel());
  for (Index bi = 0; bi < batches; ++bi)
    as_matrix(out, bi * r * c, c, r) = as_matrix(x.values(), bi * r * c, r, c).transpose();
  return detail::make_result<Scalar>(
      std::move(out_shape), std::move(out), {x}, [batches, r, c](NodeT<Scalar>& self) {
        auto& px = self.parents[0];
        auto& gx = px->grad_buffer();
        for (Index bi = 0; bi < batches; ++bi)
          as_matrix(gx, bi * r * c, r, c) +=
              as_matrix(std::as_const(self.grad), bi * r * c, c, r).transpose();
      });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  return detail::make_result<Scalar>(std::move(shape), x.values(), {x}, [](NodeT<Scalar>& self) {
    self.parents[0]->grad_buffer() += self.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> split_heads(const Tensor<Scalar>& x, Index heads) {
  if (x.rank() != 3 || heads <= 0 || x.dim(2) % heads != 0)
    throw DimensionError("split_heads: shape " + to_string(x.shape()) + " cannot split into " +
                         std::to_string(heads) + " heads");
  const Index B = x.dim(0), N = x.dim(1), D = x.dim(2), d = D / heads, H = heads;
  Buffer<Scalar> out(x.numel());
  const auto& v = x.values();
  for (Index b = 0; b < B; ++b)
    for (Index n = 0; n < N; ++n)
      for (Index h = 0; h < H; ++h)
        out.segment(((b * H + h) * N + n) * d, d) = v.segment((b * N + n) * D + h * d, d);
  return detail::make_result<Scalar>(Shape{B, H, N, d}, std::move(out), {x},
                                     [B, N, H, d, D](NodeT<Scalar>& self) {
                                       auto& gx = self.parents[0]->grad_buffer();
                                       for (Index b = 0; b < B; ++b)
                                         for (Index n = 0; n < N; ++n)
                                           for (Index h = 0; h < H; ++h)
                                             gx.segment((b * N + n) * D + h * d, d) +=
                                                 self.grad.segment(((b * H + h) * N + n) * d, d);
                                     });
}

template <typename Scalar>
Tensor<Scalar> merge_heads(const Tensor<Scalar>& x) {
  if (x.rank() != 4) throw DimensionError("merge_heads: expected [B,H,N,d], got " + to_string(x.shape()));
  const Index B = x.dim(0), H = x.dim(1), N = x.dim(2), d = x.dim(3), D = H * d;
  Buffer<Scalar> out(x.numel());
  const auto& v = x.values();
  for (Index b = 0; b < B; ++b)
    for (Index n = 0; n < N; ++n)
      for (Index h = 0; h < H; ++h)
        out.segment((b * N + n) * D + h * d, d) = v.segment(((b * H + h) * N + n) * d, d);
  return detail::make_result<Scalar>(Shape{B, N, D}, std::move(out), {x},
                                     [B, N, H, d, D](NodeT<Scalar>& self) {
                                       auto& gx = self.parents[0]->grad_buffer();
                                       for (Index b = 0; b < B; ++b)
                                         for (Index n = 0; n < N; ++n)
                                           for (Index h = 0; h < H; ++h)
                                             gx.segment(((b * H + h) * N + n) * d, d) +=
                                                 self.grad.segment((b * N + n) * D + h * d, d);
                                     });
}

// ------------------------------------------------------------- elementwise

namespace {

enum class BinOp { Add, Sub, Mul, Div };

template <typename Scalar>
Tensor<Scalar> binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, BinOp op, const char* name) {
  const Broadcast plan = plan_broadcast(a.shape(), b.shape(), name);
  const auto& va = a.values();
  const auto& vb = b.values();
  if (op == BinOp::Div && (vb == Scalar(0)).any())
    throw NumericError(std::string(name) + ": division by zero");
  Buffer<Scalar> out(plan.size);
  if (plan.kind == Broadcast::Kind::Same) {
    switch (op) {
      case BinOp::Add: out = va + vb; break;
      case BinOp::Sub: out = va - vb; break;
      case BinOp::Mul: out = va * vb; break;
      case BinOp::Div: out = va / vb; break;
    }
  } else {
    for_each_broadcast(plan, va.size(), vb.size(), [&](Index i, Index ia, Index ib) {
      switch (op) {
        case BinOp::Add: out[i] = va[ia] + vb[ib]; break;
        case BinOp::Sub: out[i] = va[ia] - vb[ib]; break;
        case BinOp::Mul: out[i] = va[ia] * vb[ib]; break;
        case BinOp::Div: out[i] = va[ia] / vb[ib]; break;
      }
    });
  }
  const Index na = va.size(), nb = vb.size();
  return detail::make_result<Scalar>(
      plan.out, std::move(out), {a, b}, [plan, op, na, nb](NodeT<Scalar>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const bool wa = pa->requires_grad, wb = pb->requires_grad;
        const auto& g = self.grad;
        const auto& xa = pa->value;
        const auto& xb = pb->value;
        Scalar* ga = wa ? pa->grad_buffer().data() : nullptr;
        Scalar* gb = wb ? pb->grad_buffer().data() : nullptr;
        for_each_broadcast(plan, na, nb, [&](Index i, Index ia, Index ib) {
          switch (op) {
            case BinOp::Add:
              if (ga) ga[ia] += g[i];
              if (gb) gb[ib] += g[i];
              break;
            case BinOp::Sub:
              if (ga) ga[ia] += g[i];
              if (gb) gb[ib] -= g[i];
              break;
            case BinOp::Mul:
              if (ga) ga[ia] += g[i] * xb[ib];
              if (gb) gb[ib] += g[i] * xa[ia];
              break;
            case BinOp::Div:
              if (ga) ga[ia] += g[i] / xb[ib];
              if (gb) gb[ib] -= g[i] * xa[ia] / (xb[ib] * xb[ib]);
              break;
          }
        });
      });
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, BinOp::Add, "add");
}
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, BinOp::Sub, "sub");
}
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, BinOp::Mul, "mul");
}
template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, BinOp::Div, "div");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  return detail::make_result<Scalar>(x.shape(), x.values() * factor, {x},
                                     [factor](NodeT<Scalar>& self) {
                                       self.parents[0]->grad_buffer() += self.grad * factor;
                                     });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar offset) {
  return detail::make_result<Scalar>(x.shape(), x.values() + offset, {x}, [](NodeT<Scalar>& self) {
    self.parents[0]->grad_buffer() += self.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& x, Scalar lo, Scalar hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return detail::make_result<Scalar>(
      x.shape(), x.values().max(lo).min(hi), {x}, [lo, hi](NodeT<Scalar>& self) {
        const auto& v = self.parents[0]->value;
        self.parents[0]->grad_buffer() +=
            ((v > lo) && (v < hi)).select(self.grad, Buffer<Scalar>::Zero(v.size()));
      });
}

template <typename Scalar>
Tensor<Scalar> divide_rows(const Tensor<Scalar>& x, const Tensor<Scalar>& m) {
  if (x.rank() < 2 || m.rank() != 1 || m.dim(0) != x.dim(-2))
    throw DimensionError("divide_rows: cannot divide " + to_string(x.shape()) + " by " +
                         to_string(m.shape()));
  return div(x, reshape(m, Shape{m.dim(0), 1}));
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar a = Scalar(0.044715);
  const auto& v = x.values();
  Buffer<Scalar> t = (c * (v + a * v.cube())).tanh();
  Buffer<Scalar> out = Scalar(0.5) * v * (Scalar(1) + t);
  return detail::make_result<Scalar>(x.shape(), std::move(out), {x}, [c, a](NodeT<Scalar>& self) {
    const auto& v = self.parents[0]->value;
    const Buffer<Scalar> t = (c * (v + a * v.cube())).tanh();
    const Buffer<Scalar> dy = Scalar(0.5) * (Scalar(1) + t) +
                              Scalar(0.5) * v * (Scalar(1) - t.square()) * c *
                                  (Scalar(1) + Scalar(3) * a * v.square());
    self.parents[0]->grad_buffer() += self.grad * dy;
  });
}

// --------------------------------------------------------------- row-wise

template <typename Scalar>
Tensor<Scalar> l2_normalize_rows(const Tensor<Scalar>& x, Scalar eps) {
  row_shape_check(x, "l2_normalize_rows");
  const Index d = x.dim(-1);
  const Index rows = d == 0 ? 0 : x.numel() / d;
  auto in = as_matrix(x.values(), 0, rows, d);
  Buffer<Scalar> norms = in.rowwise().norm().array();
  Buffer<Scalar> out(x.numel());
  as_matrix(out, 0, rows, d) = in.array().colwise() / norms.max(eps);
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), {x},
      [rows, d, eps, norms = std::move(norms)](NodeT<Scalar>& self) {
        auto y = as_matrix(std::as_const(self.value), 0, rows, d);
        auto g = as_matrix(std::as_const(self.grad), 0, rows, d);
        auto gx = as_matrix(self.parents[0]->grad_buffer(), 0, rows, d);
        for (Index r = 0; r < rows; ++r) {
          if (norms[r] > eps)
            gx.row(r) += (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms[r];
          else
            gx.row(r) += g.row(r) / eps;
        }
      });
}

template <typename Scalar>
Tensor<Scalar> rmsnorm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, Scalar eps) {
  row_shape_check(x, "rmsnorm");
  const Index d = x.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != d)
    throw DimensionError("rmsnorm: gain shape " + to_string(gain.shape()) +
                         " does not match last axis of " + to_string(x.shape()));
  const Index rows = d == 0 ? 0 : x.numel() / d;
  auto in = as_matrix(x.values(), 0, rows, d);
  Buffer<Scalar> rms = (in.array().square().rowwise().sum() / Scalar(d) + eps).sqrt();
  Buffer<Scalar> out(x.numel());
  auto o = as_matrix(out, 0, rows, d);
  o = (in.array().colwise() / rms).rowwise() * gain.values().transpose();
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), {x, gain},
      [rows, d, rms = std::move(rms)](NodeT<Scalar>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto in = as_matrix(std::as_const(px->value), 0, rows, d);
        auto g = as_matrix(std::as_const(self.grad), 0, rows, d);
        const RowMatrix<Scalar> xhat = (in.array().colwise() / rms).matrix();
        if (pg->requires_grad)
          pg->grad_buffer() += (g.array() * xhat.array()).colwise().sum().transpose();
        if (px->requires_grad) {
          const auto& gain = pg->value;
          const RowMatrix<Scalar> gy = (g.array().rowwise() * gain.transpose()).matrix();
          const Buffer<Scalar> proj = (gy.array() * xhat.array()).rowwise().sum() / Scalar(d);
          as_matrix(px->grad_buffer(), 0, rows, d).array() +=
              (gy.array() - xhat.array().colwise() * proj).colwise() / rms;
        }
      });
}

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x) {
  row_shape_check(x, "softmax_rows");
  const Index d = x.dim(-1);
  const Index rows = d == 0 ? 0 : x.numel() / d;
  auto in = as_matrix(x.values(), 0, rows, d);
  Buffer<Scalar> out(x.numel());
  auto o = as_matrix(out, 0, rows, d);
  for (Index r = 0; r < rows; ++r) {
    const Scalar mx = in.row(r).maxCoeff();
    o.row(r) = (in.row(r).array() - mx).exp().matrix();
    o.row(r) /= o.row(r).sum();
  }
  return detail::make_result<Scalar>(x.shape(), std::move(out), {x}, [rows, d](NodeT<Scalar>& self) {
    auto y = as_matrix(std::as_const(self.value), 0, rows, d);
    auto g = as_matrix(std::as_const(self.grad), 0, rows, d);
    auto gx = as_matrix(self.parents[0]->grad_buffer(), 0, rows, d);
    for (Index r = 0; r < rows; ++r) {
      const Scalar dot = y.row(r).dot(g.row(r));
      gx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

template <typename Scalar>
Tensor<Scalar> tril_mask(const Tensor<Scalar>& x, Scalar fill) {
  if (x.rank() < 2) throw DimensionError("tril_mask: needs rank >= 2, got " + to_string(x.shape()));
  const Index n = x.dim(-2), m = x.dim(-1);
  const Index batches = n * m == 0 ? 0 : x.numel() / (n * m);
  Buffer<Scalar> out = x.values();
  for (Index b = 0; b < batches; ++b) {
    auto o = as_matrix(out, b * n * m, n, m);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < m; ++j) o(i, j) = fill;
  }
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), {x},
      [batches, n, m](NodeT<Scalar>& self) {
        auto& gx = self.parents[0]->grad_buffer();
        for (Index b = 0; b < batches; ++b) {
          auto go = as_matrix(std::as_const(self.grad), b * n * m, n, m);
          auto gi = as_matrix(gx, b * n * m, n, m);
          for (Index i = 0; i < n; ++i) {
            const Index keep = std::min(i + 1, m);
            gi.row(i).head(keep) += go.row(i).head(keep);
          }
        }
      },
      !std::isfinite(double(fill)));
}

// ---------------------------------------------------------- reductions

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(Shape{}, Buffer<Scalar>::Constant(1, x.values().sum()), {x},
                                     [](NodeT<Scalar>& self) {
                                       self.parents[0]->grad_buffer() += self.grad[0];
                                     });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  const Scalar n = Scalar(x.numel());
  return detail::make_result<Scalar>(Shape{}, Buffer<Scalar>::Constant(1, x.values().sum() / n),
                                     {x}, [n](NodeT<Scalar>& self) {
                                       self.parents[0]->grad_buffer() += self.grad[0] / n;
                                     });
}

template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const std::int32_t> targets) {
  row_shape_check(logits, "cross_entropy");
  const Index V = logits.dim(-1);
  const Index rows = V == 0 ? 0 : logits.numel() / V;
  if (Index(targets.size()) != rows)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + to_string(logits.shape()));
  if (rows == 0) throw DimensionError("cross_entropy: no positions");
  for (auto t : targets)
    if (t < 0 || t >= V)
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                              " outside vocabulary of size " + std::to_string(V));
  auto in = as_matrix(logits.values(), 0, rows, V);
  Buffer<Scalar> lse(rows);
  Scalar total = 0;
  for (Index r = 0; r < rows; ++r) {
    const Scalar mx = in.row(r).maxCoeff();
    lse[r] = mx + std::log((in.row(r).array() - mx).exp().sum());
    total += lse[r] - in(r, targets[size_t(r)]);
  }
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return detail::make_result<Scalar>(
      Shape{}, Buffer<Scalar>::Constant(1, total / Scalar(rows)), {logits},
      [rows, V, lse = std::move(lse), tgt = std::move(tgt)](NodeT<Scalar>& self) {
        auto in = as_matrix(std::as_const(self.parents[0]->value), 0, rows, V);
        auto gx = as_matrix(self.parents[0]->grad_buffer(), 0, rows, V);
        const Scalar g = self.grad[0] / Scalar(rows);
        for (Index r = 0; r < rows; ++r) {
          gx.row(r).array() += g * (in.row(r).array() - lse[r]).exp();
          gx(r, tgt[size_t(r)]) -= g;
        }
      });
}

template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const std::int32_t> ids,
                         const Shape& index_shape) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be [V, D], got " + to_string(table.shape()));
  if (numel(index_shape) != Index(ids.size()))
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for index shape " +
                         to_string(index_shape));
  const Index V = table.dim(0), D = table.dim(1);
  for (auto id : ids)
    if (id < 0 || id >= V)
      throw std::out_of_range("embedding: token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(V));
  Shape out_shape = index_shape;
  out_shape.push_back(D);
  Buffer<Scalar> out(Index(ids.size()) * D);
  for (size_t r = 0; r < ids.size(); ++r) out.segment(Index(r) * D, D) = table.values().segment(ids[r] * D, D);
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return detail::make_result<Scalar>(std::move(out_shape), std::move(out), {table},
                                     [D, idv = std::move(idv)](NodeT<Scalar>& self) {
                                       auto& gt = self.parents[0]->grad_buffer();
                                       for (size_t r = 0; r < idv.size(); ++r)
                                         gt.segment(idv[r] * D, D) += self.grad.segment(Index(r) * D, D);
                                     });
}

#define SKO_INSTANTIATE(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> transpose(const Tensor<T>&);                                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> split_heads(const Tensor<T>&, Index);                                   \
  template Tensor<T> merge_heads(const Tensor<T>&);                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                          \
  template Tensor<T> divide_rows(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> gelu(const Tensor<T>&);                                                 \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, T);                                 \
  template Tensor<T> rmsnorm(const Tensor<T>&, const Tensor<T>&, T);                         \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                         \
  template Tensor<T> tril_mask(const Tensor<T>&, T);                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);         \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>, const Shape&);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
