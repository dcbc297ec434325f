#include "sko/ultraspherical.hpp"

#include "sko/ops.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace sko {

namespace {

template <typename Scalar>
using NodeT = detail::Node<Scalar>;

template <typename Scalar>
void check_cosine_range(const Tensor<Scalar>& x) {
  if (x.numel() == 0) return;
  const double lo = double(x.values().minCoeff());
  const double hi = double(x.values().maxCoeff());
  if (!x.values().isFinite().all()) throw NumericError("ultraspherical: non-finite input similarity");
  if (!(lo >= -1 - kCosineTolerance && hi <= 1 + kCosineTolerance))
    throw std::domain_error("ultraspherical: input outside [-1, 1] (min " + std::to_string(lo) +
                            ", max " + std::to_string(hi) + "); rows must be L2-normalised");
}

// [H] coefficients repeated over each head's N x M block.
template <typename Scalar>
Tensor<Scalar> broadcast_heads(const Tensor<Scalar>& coef, const Shape& shape, Index block) {
  const Index H = coef.numel();
  const Index blocks = numel(shape) / block;
  Buffer<Scalar> out(numel(shape));
  for (Index b = 0; b < blocks; ++b) out.segment(b * block, block).setConstant(coef[b % H]);
  return detail::make_result<Scalar>(shape, std::move(out), {coef},
                                     [H, blocks, block](NodeT<Scalar>& self) {
                                       auto& gc = self.parents[0]->grad_buffer();
                                       for (Index b = 0; b < blocks; ++b)
                                         gc[b % H] += self.grad.segment(b * block, block).sum();
                                     });
}

// phi + coef[h] * r over each head block.
template <typename Scalar>
Tensor<Scalar> gated_accumulate(const Tensor<Scalar>& phi, const Tensor<Scalar>& r,
                                const Tensor<Scalar>& coef, Index block) {
  const Index H = coef.numel();
  const Index blocks = phi.numel() / block;
  Buffer<Scalar> out(phi.numel());
  for (Index b = 0; b < blocks; ++b)
    out.segment(b * block, block) =
        phi.values().segment(b * block, block) + coef[b % H] * r.values().segment(b * block, block);
  return detail::make_result<Scalar>(
      phi.shape(), std::move(out), {phi, r, coef}, [H, blocks, block](NodeT<Scalar>& self) {
        auto& pphi = self.parents[0];
        auto& pr = self.parents[1];
        auto& pc = self.parents[2];
        const auto& g = self.grad;
        if (pphi->requires_grad) pphi->grad_buffer() += g;
        if (pr->requires_grad) {
          auto& gr = pr->grad_buffer();
          for (Index b = 0; b < blocks; ++b)
            gr.segment(b * block, block) += pc->value[b % H] * g.segment(b * block, block);
        }
        if (pc->requires_grad) {
          auto& gc = pc->grad_buffer();
          for (Index b = 0; b < blocks; ++b)
            gc[b % H] += (g.segment(b * block, block) * pr->value.segment(b * block, block)).sum();
        }
      });
}

// c1 * x * r1 - c2 * r2; r2 == nullptr stands for the constant R_0 = 1.
template <typename Scalar>
Tensor<Scalar> recurrence_step(const Tensor<Scalar>& x, const Tensor<Scalar>& r1,
                               const Tensor<Scalar>* r2, Scalar c1, Scalar c2) {
  Buffer<Scalar> out;
  if (r2)
    out = c1 * (x.values() * r1.values()) - c2 * r2->values();
  else
    out = c1 * (x.values() * r1.values()) - c2;
  std::vector<Tensor<Scalar>> parents{x, r1};
  if (r2) parents.push_back(*r2);
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), std::move(parents), [c1, c2](NodeT<Scalar>& self) {
        auto& px = self.parents[0];
        auto& pr1 = self.parents[1];
        const auto& g = self.grad;
        if (px->requires_grad) px->grad_buffer() += c1 * (g * pr1->value);
        if (pr1->requires_grad) pr1->grad_buffer() += c1 * (g * px->value);
        if (self.parents.size() > 2 && self.parents[2]->requires_grad)
          self.parents[2]->grad_buffer() -= c2 * g;
      });
}

// W[:, k] as an [H] tensor.
template <typename Scalar>
Tensor<Scalar> weight_column(const Tensor<Scalar>& w, Index k) {
  const Index H = w.dim(0), cols = w.dim(1);
  Buffer<Scalar> out(H);
  for (Index h = 0; h < H; ++h) out[h] = w.values()[h * cols + k];
  return detail::make_result<Scalar>(Shape{H}, std::move(out), {w},
                                     [H, cols, k](NodeT<Scalar>& self) {
                                       auto& gw = self.parents[0]->grad_buffer();
                                       for (Index h = 0; h < H; ++h) gw[h * cols + k] += self.grad[h];
                                     });
}

}  // namespace

// ------------------------------------------------------------ KernelParams

template <typename Scalar>
KernelParams<Scalar> KernelParams<Scalar>::create(int q, const std::vector<double>& degrees,
                                                  bool learn_degrees, double weight_init) {
  if (q < 2) throw std::invalid_argument("KernelParams: q must be >= 2, got " + std::to_string(q));
  if (degrees.empty()) throw std::invalid_argument("KernelParams: need at least one head degree");
  double max_n = 0;
  for (double n : degrees) {
    if (!(n >= 0) || !std::isfinite(n))
      throw std::invalid_argument("KernelParams: degrees must be finite and >= 0");
    max_n = std::max(max_n, n);
  }
  KernelParams p;
  p.q = q;
  p.max_degree = static_cast<int>(std::ceil(max_n));
  const Index H = Index(degrees.size());
  std::vector<Scalar> deg(degrees.begin(), degrees.end());
  p.degrees = Tensor<Scalar>::from_vector(Shape{H}, deg, learn_degrees);
  p.weights = Tensor<Scalar>::full(Shape{H, p.max_degree + 1}, Scalar(weight_init), true);
  return p;
}

template <typename Scalar>
void KernelParams<Scalar>::validate() const {
  if (q < 2) throw std::invalid_argument("KernelParams: q must be >= 2");
  if (degrees.rank() != 1) throw DimensionError("KernelParams: degrees must be rank 1");
  if (weights.rank() != 2 || weights.dim(0) != heads() || weights.dim(1) != max_degree + 1)
    throw DimensionError("KernelParams: weights shape " + to_string(weights.shape()) +
                         " inconsistent with " + std::to_string(heads()) + " heads and K = " +
                         std::to_string(max_degree));
  if ((degrees.values() < Scalar(0)).any())
    throw std::invalid_argument("KernelParams: degrees must be >= 0");
  if (double(degrees.values().maxCoeff()) > max_degree)
    throw std::invalid_argument("KernelParams: degree exceeds K");
}

template <typename Scalar>
void KernelParams<Scalar>::clamp_degrees() {
  degrees.mutable_values() = degrees.values().max(Scalar(0)).min(Scalar(max_degree));
}

template <typename Scalar>
Tensor<Scalar> gated_weights(const KernelParams<Scalar>& params, int k) {
  const Tensor<Scalar> g = clamp(add_scalar(params.degrees, Scalar(1 - k)), Scalar(0), Scalar(1));
  return mul(weight_column(params.weights, k), g);
}

// ------------------------------------------------------------- evaluation

template <typename Scalar>
std::vector<Tensor<Scalar>> eval_polynomials(const Tensor<Scalar>& x, double lambda, int K) {
  if (K < 0) throw std::invalid_argument("eval_polynomials: K must be >= 0");
  check_cosine_range(x);
  std::vector<Tensor<Scalar>> r;
  r.reserve(size_t(K) + 1);
  r.push_back(Tensor<Scalar>::ones(x.shape()));
  if (K == 0) return r;
  r.push_back(clamp(x, Scalar(-1), Scalar(1)));
  for (int k = 2; k <= K; ++k) {
    const auto c = recurrence_coeffs(k, lambda);
    const Tensor<Scalar>* prev2 = k == 2 ? nullptr : &r[size_t(k - 2)];
    r.push_back(recurrence_step(r[1], r[size_t(k - 1)], prev2, Scalar(c.c1), Scalar(c.c2)));
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> eval_kernel(Tensor<Scalar> x, const KernelParams<Scalar>& params) {
  params.validate();
  const Index H = params.heads();
  if (x.rank() < 3 || x.dim(-3) != H)
    throw DimensionError("eval_kernel: expected [..., " + std::to_string(H) + ", N, M], got " +
                         to_string(x.shape()));
  check_cosine_range(x);
  const int K = params.max_degree;
  const double lambda = params.lambda();
  const Index block = x.dim(-2) * x.dim(-1);
  const Shape shape = x.shape();

  if (detail::recording<Scalar>({&x, &params.weights, &params.degrees})) {
    const Tensor<Scalar> s = clamp(x, Scalar(-1), Scalar(1));
    x = Tensor<Scalar>();
    Tensor<Scalar> phi = broadcast_heads(gated_weights(params, 0), shape, block);
    if (K == 0) return phi;
    phi = gated_accumulate(phi, s, gated_weights(params, 1), block);
    Tensor<Scalar> prev2;
    Tensor<Scalar> prev = s;
    for (int k = 2; k <= K; ++k) {
      const auto c = recurrence_coeffs(k, lambda);
      Tensor<Scalar> cur = recurrence_step(s, prev, k == 2 ? nullptr : &prev2, Scalar(c.c1), Scalar(c.c2));
      phi = gated_accumulate(phi, cur, gated_weights(params, k), block);
      prev2 = std::move(prev);
      prev = std::move(cur);
    }
    return phi;
  }

  // Inference: rolling window over (R_{k-2}, R_{k-1}), updated in place.
  NoGradScope<Scalar> no_grad;
  Tensor<Scalar> s;
  if (x.node().use_count() == 1) {
    s = std::move(x);
    s.mutable_values() = s.values().max(Scalar(-1)).min(Scalar(1));
  } else {
    s = Tensor<Scalar>::from_buffer(shape, x.values().max(Scalar(-1)).min(Scalar(1)));
    x = Tensor<Scalar>();
  }
  std::vector<Scalar> coef(size_t(H) * size_t(K + 1));
  for (int k = 0; k <= K; ++k) {
    const Tensor<Scalar> gk = gated_weights(params, k);
    for (Index h = 0; h < H; ++h) coef[size_t(k * H + h)] = gk[h];
  }
  const Index blocks = s.numel() / std::max<Index>(block, 1);
  Tensor<Scalar> phi = Tensor<Scalar>::zeros(shape);
  auto& pv = phi.mutable_values();
  const auto& sv = s.values();
  for (Index b = 0; b < blocks; ++b) pv.segment(b * block, block).setConstant(coef[size_t(b % H)]);
  if (K == 0) return phi;
  for (Index b = 0; b < blocks; ++b)
    pv.segment(b * block, block) =
        pv.segment(b * block, block) + coef[size_t(H + b % H)] * sv.segment(b * block, block);

  Tensor<Scalar> prev2;  // R_{k-2}; empty while it is R_0 = 1 or aliases s
  Tensor<Scalar> prev;   // R_{k-1}; empty while it is s itself
  for (int k = 2; k <= K; ++k) {
    const auto c = recurrence_coeffs(k, lambda);
    const Scalar c1 = Scalar(c.c1), c2 = Scalar(c.c2);
    const Buffer<Scalar>& r1 = prev.defined() ? prev.values() : sv;
    Tensor<Scalar> cur;
    if (k == 2) {
      cur = Tensor<Scalar>::from_buffer(shape, c1 * (sv * r1) - c2);
    } else if (k == 3) {
      cur = Tensor<Scalar>::from_buffer(shape, c1 * (sv * r1) - c2 * sv);
    } else {
      cur = std::move(prev2);
      auto& cv = cur.mutable_values();
      cv = c1 * (sv * r1) - c2 * cv;
    }
    const auto& rv = cur.values();
    for (Index b = 0; b < blocks; ++b)
      pv.segment(b * block, block) =
          pv.segment(b * block, block) + coef[size_t(k * H + b % H)] * rv.segment(b * block, block);
    prev2 = std::move(prev);
    prev = std::move(cur);
  }
  return phi;
}

template <typename Scalar>
std::vector<ProfilePoint> kernel_profile(const KernelParams<Scalar>& params, Index head,
                                         Index grid_size) {
  const Index H = params.heads();
  if (head < 0 || head >= H)
    throw std::out_of_range("kernel_profile: head " + std::to_string(head) + " outside [0, " +
                            std::to_string(H) + ")");
  if (grid_size < 2) throw std::invalid_argument("kernel_profile: grid_size must be >= 2");
  NoGradScope<Scalar> no_grad;
  Buffer<Scalar> grid(H * grid_size);
  for (Index h = 0; h < H; ++h)
    for (Index i = 0; i < grid_size; ++i)
      grid[h * grid_size + i] = Scalar(-1.0 + 2.0 * double(i) / double(grid_size - 1));
  const Tensor<Scalar> phi =
      eval_kernel(Tensor<Scalar>::from_buffer(Shape{H, 1, grid_size}, std::move(grid)), params);
  std::vector<ProfilePoint> out;
  out.reserve(size_t(grid_size));
  for (Index i = 0; i < grid_size; ++i)
    out.push_back({-1.0 + 2.0 * double(i) / double(grid_size - 1),
                   double(phi[head * grid_size + i])});
  return out;
}

void write_profile_csv(std::ostream& os, const std::vector<ProfilePoint>& profile) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << "x,phi\n" << std::setprecision(17);
  for (const auto& p : profile) os << p.x << ',' << p.phi << '\n';
  os.flags(flags);
  os.precision(prec);
}

#define SKO_INSTANTIATE(T)                                                                   \
  template struct KernelParams<T>;                                                           \
  template Tensor<T> gated_weights(const KernelParams<T>&, int);                             \
  template std::vector<Tensor<T>> eval_polynomials(const Tensor<T>&, double, int);           \
  template Tensor<T> eval_kernel(Tensor<T>, const KernelParams<T>&);                         \
  template std::vector<ProfilePoint> kernel_profile(const KernelParams<T>&, Index, Index);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
