#include "cagsr/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cagsr/autodiff/kernels.hpp"
#include "cagsr/common/error.hpp"

namespace cagsr::ad {

namespace {

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a,
                        const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
  }
}

template <typename T>
void require_matrix(const char* op, const BasicTensor<T>& a) {
  if (a.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(a.shape()));
  }
}

// Splits `shape` around `axis` into (outer, length, inner) strides.
struct AxisView {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

}  // namespace

template <typename T>
bool BasicTape<T>::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::record(
    Tensor out, std::vector<Tensor> inputs, std::function<void()> backward_fn) {
  if (consumed_) {
    throw ContractError("tape: recording after backward(); start a new tape");
  }
  out.set_requires_grad(true);
  nodes_.push_back(Node{std::move(inputs), out, std::move(backward_fn)});
  return out;
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::matmul(const Tensor& a,
                                                   const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  std::vector<T> c(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  Tensor out({m, n}, std::move(c));
  if (!tracks({&a, &b})) return out;
  return record(out, {a, b}, [a, b, out, m, k, n]() mutable {
    const T* G = out.grad().data();
    if (a.requires_grad()) {
      T* GA = a.ensure_grad().data();
      const T* B = b.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          const T* g = G + i * n;
          const T* brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
          GA[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      T* GB = b.ensure_grad().data();
      const T* A = a.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const T* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = A[i * k + p];
          T* gb = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += aip * g[j];
        }
      }
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.size(0), n = a.size(1);
  std::vector<T> t(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  Tensor out({n, m}, std::move(t));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, m, n]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::reshape(const Tensor& a,
                                                    Shape shape) {
  if (ad::numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::slice_cols(const Tensor& a,
                                                       std::size_t begin,
                                                       std::size_t count) {
  require_matrix("slice_cols", a);
  const std::size_t m = a.size(0), n = a.size(1);
  if (begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " +
                         shape_str(a.shape()));
  }
  std::vector<T> s(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.data().data() + i * n + begin, count, s.data() + i * count);
  Tensor out({m, count}, std::move(s));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, m, n, begin, count]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j)
        ga[i * n + begin + j] += g[i * count + j];
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::concat_cols(
    std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].size(0);
  std::size_t n = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (p.size(0) != m) {
      throw DimensionError("concat_cols: row counts differ (" +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()) + ")");
    }
    n += p.size(1);
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<T> c(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.size(1);
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.data().data() + i * w, w, c.data() + i * n + col);
    col += w;
  }
  Tensor out({m, n}, std::move(c));
  if (!recording() || !any_grad) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record(out, inputs, [inputs, out, m, n]() mutable {
    auto g = out.grad();
    std::size_t col = 0;
    for (auto& p : inputs) {
      const std::size_t w = p.size(1);
      if (p.requires_grad()) {
        auto gp = p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + col + j];
      }
      col += w;
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t rank = parts[0].dim();
  if (rank < 1 || rank > 2) {
    throw DimensionError("concat: expected vectors or matrices, got " +
                         shape_str(parts[0].shape()));
  }
  std::size_t rows = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.dim() != rank || (rank == 2 && p.size(1) != parts[0].size(1))) {
      throw DimensionError("concat: incompatible " + shape_str(parts[0].shape()) +
                           " and " + shape_str(p.shape()));
    }
    rows += p.size(0);
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<T> c;
  c.reserve(rows * (rank == 2 ? parts[0].size(1) : 1));
  for (const auto& p : parts) c.insert(c.end(), p.data().begin(), p.data().end());
  Shape shape = rank == 1 ? Shape{rows} : Shape{rows, parts[0].size(1)};
  Tensor out(std::move(shape), std::move(c));
  if (!recording() || !any_grad) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record(out, inputs, [inputs, out]() mutable {
    auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : inputs) {
      if (p.requires_grad()) {
        auto gp = p.ensure_grad();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      }
      offset += p.numel();
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] + b[i];
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a, &b})) return out;
  return record(out, {a, b}, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] - b[i];
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a, &b})) return out;
  return record(out, {a, b}, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] * b[i];
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a, &b})) return out;
  return record(out, {a, b}, [a, b, out]() mutable {
    auto g = out.grad();
    // Read both operands before writing: a and b may alias (x * x).
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::add_bias(const Tensor& a,
                                                     const Tensor& bias) {
  if (a.dim() != 2 || bias.dim() != 1 || bias.size(0) != a.size(1)) {
    throw DimensionError("add_bias: cannot broadcast " + shape_str(bias.shape()) +
                         " over " + shape_str(a.shape()));
  }
  const std::size_t m = a.size(0), n = a.size(1);
  std::vector<T> c(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = a[i * n + j] + bias[j];
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a, &bias})) return out;
  return record(out, {a, bias}, [a, bias, out, m, n]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::scale(const Tensor& a, T factor) {
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] * factor;
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::exp(const Tensor& a) {
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::exp(a[i]);
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * out[i];
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::gelu(const Tensor& a) {
  // tanh approximation
  const T c = kGeluC<T>;
  const T k = T(0.044715);
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T x = a[i];
    y[i] = T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x)));
  }
  Tensor out(a.shape(), std::move(y));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, c, k]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = a[i];
      const T th = std::tanh(c * (x + k * x * x * x));
      const T dth = (T(1) - th * th) * c * (T(1) + T(3) * k * x * x);
      ga[i] += g[i] * (T(0.5) * (T(1) + th) + T(0.5) * x * dth);
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::clamp(const Tensor& a, T lo, T hi) {
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::clamp(a[i], lo, hi);
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, lo, hi]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (a[i] >= lo && a[i] <= hi) ga[i] += g[i];
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::minimum(const Tensor& a,
                                                    const Tensor& b) {
  require_same_shape("minimum", a, b);
  std::vector<T> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::min(a[i], b[i]);
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a, &b})) return out;
  // Ties route the gradient to `a`.
  return record(out, {a, b}, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] <= b[i]) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (b[i] < a[i]) gb[i] += g[i];
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::softmax(const Tensor& a,
                                                    std::size_t axis) {
  const AxisView v = axis_view(a.shape(), axis);
  std::vector<T> y(a.numel());
  std::vector<T> row(v.length), prob(v.length);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      for (std::size_t l = 0; l < v.length; ++l) row[l] = a[base + l * v.inner];
      kernels::softmax<T>(row, prob);
      for (std::size_t l = 0; l < v.length; ++l) y[base + l * v.inner] = prob[l];
    }
  }
  Tensor out(a.shape(), std::move(y));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, v]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.length * v.inner + in;
        T dot = 0;
        for (std::size_t l = 0; l < v.length; ++l) {
          const std::size_t idx = base + l * v.inner;
          dot += g[idx] * out[idx];
        }
        for (std::size_t l = 0; l < v.length; ++l) {
          const std::size_t idx = base + l * v.inner;
          ga[idx] += out[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::log_softmax(const Tensor& a,
                                                        std::size_t axis) {
  const AxisView v = axis_view(a.shape(), axis);
  std::vector<T> y(a.numel());
  std::vector<T> row(v.length);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      for (std::size_t l = 0; l < v.length; ++l) row[l] = a[base + l * v.inner];
      const T lse = kernels::log_sum_exp<T>(row);
      for (std::size_t l = 0; l < v.length; ++l) y[base + l * v.inner] = row[l] - lse;
    }
  }
  Tensor out(a.shape(), std::move(y));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, v]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.length * v.inner + in;
        T gsum = 0;
        for (std::size_t l = 0; l < v.length; ++l) gsum += g[base + l * v.inner];
        for (std::size_t l = 0; l < v.length; ++l) {
          const std::size_t idx = base + l * v.inner;
          ga[idx] += g[idx] - std::exp(out[idx]) * gsum;
        }
      }
    }
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::layer_norm(const Tensor& x,
                                                       const Tensor& gamma,
                                                       const Tensor& beta,
                                                       T eps) {
  if (x.dim() != 2 || gamma.dim() != 1 || beta.dim() != 1 ||
      gamma.size(0) != x.size(1) || beta.size(0) != x.size(1)) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) +
                         " with gamma " + shape_str(gamma.shape()) +
                         " and beta " + shape_str(beta.shape()));
  }
  const std::size_t m = x.size(0), n = x.size(1);
  std::vector<T> y(m * n), xhat(m * n), rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* r = x.data().data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<T>(n);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (r[j] - mu) * rstd[i];
      y[i * n + j] = xhat[i * n + j] * gamma[j] + beta[j];
    }
  }
  Tensor out(x.shape(), std::move(y));
  if (!tracks({&x, &gamma, &beta})) return out;
  return record(out, {x, gamma, beta},
                [x, gamma, beta, out, m, n, xhat = std::move(xhat),
                 rstd = std::move(rstd)]() mutable {
                  auto g = out.grad();
                  if (gamma.requires_grad()) {
                    auto gg = gamma.ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j)
                        gg[j] += g[i * n + j] * xhat[i * n + j];
                  }
                  if (beta.requires_grad()) {
                    auto gb = beta.ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                  }
                  if (x.requires_grad()) {
                    auto gx = x.ensure_grad();
                    for (std::size_t i = 0; i < m; ++i) {
                      T sum_dy = 0, sum_dy_xhat = 0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const T dy = g[i * n + j] * gamma[j];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat[i * n + j];
                      }
                      const T inv_n = T(1) / static_cast<T>(n);
                      for (std::size_t j = 0; j < n; ++j) {
                        const T dy = g[i * n + j] * gamma[j];
                        gx[i * n + j] += rstd[i] * (dy - inv_n * sum_dy -
                                                    xhat[i * n + j] * inv_n * sum_dy_xhat);
                      }
                    }
                  }
                });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::mask_future(const Tensor& a,
                                                        std::size_t offset) {
  require_matrix("mask_future", a);
  const std::size_t m = a.size(0), n = a.size(1);
  std::vector<T> c(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + offset + 1; j < n; ++j)
      c[i * n + j] = -std::numeric_limits<T>::infinity();
  Tensor out(a.shape(), std::move(c));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, m, n, offset]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < std::min(n, i + offset + 1); ++j)
        ga[i * n + j] += g[i * n + j];
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::embedding(const Tensor& table,
                                                      std::span<const int> ids) {
  require_matrix("embedding", table);
  const std::size_t rows = table.size(0), d = table.size(1);
  std::vector<T> c(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw InputError("embedding: id " + std::to_string(ids[i]) +
                       " outside table of " + std::to_string(rows) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * d, d, c.data() + i * d);
  }
  Tensor out({ids.size(), d}, std::move(c));
  if (!tracks({&table})) return out;
  std::vector<int> idx(ids.begin(), ids.end());
  return record(out, {table}, [table, out, d, idx = std::move(idx)]() mutable {
    auto g = out.grad();
    auto gt = table.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::token_log_probs(
    const Tensor& logits, std::span<const int> targets) {
  require_matrix("token_log_probs", logits);
  const std::size_t n = logits.size(0), v = logits.size(1);
  if (targets.size() != n) {
    throw DimensionError("token_log_probs: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  std::vector<T> lp(n), lse(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw InputError("token_log_probs: target " + std::to_string(targets[i]) +
                       " outside vocabulary of " + std::to_string(v));
    }
    std::span<const T> row(logits.data().data() + i * v, v);
    lse[i] = kernels::log_sum_exp<T>(row);
    lp[i] = row[targets[i]] - lse[i];
  }
  Tensor out({n}, std::move(lp));
  if (!tracks({&logits})) return out;
  std::vector<int> tg(targets.begin(), targets.end());
  return record(out, {logits},
                [logits, out, n, v, tg = std::move(tg), lse = std::move(lse)]() mutable {
                  auto g = out.grad();
                  auto gl = logits.ensure_grad();
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < v; ++j)
                      gl[i * v + j] -= g[i] * std::exp(logits[i * v + j] - lse[i]);
                    gl[i * v + tg[i]] += g[i];
                  }
                });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::cross_entropy(
    const Tensor& logits, std::span<const int> targets) {
  if (targets.empty()) throw DimensionError("cross_entropy: no targets");
  return scale(sum(token_log_probs(logits, targets)),
               T(-1) / static_cast<T>(targets.size()));
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::sum(const Tensor& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out]() mutable {
    const T g = out.grad()[0];
    auto ga = a.ensure_grad();
    for (auto& x : ga) x += g;
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::mean_rows(const Tensor& a) {
  require_matrix("mean_rows", a);
  const std::size_t m = a.size(0), n = a.size(1);
  if (m == 0) throw DimensionError("mean_rows: no rows");
  std::vector<T> c(n, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[j] += a[i * n + j];
  const T inv = T(1) / static_cast<T>(m);
  for (auto& x : c) x *= inv;
  Tensor out({1, n}, std::move(c));
  if (!tracks({&a})) return out;
  return record(out, {a}, [a, out, m, n, inv]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
  });
}

template <typename T>
typename BasicTape<T>::Tensor BasicTape<T>::detach(const Tensor& a) {
  return Tensor(a.shape(), std::vector<T>(a.data().begin(), a.data().end()));
}

template <typename T>
void BasicTape<T>::backward(const Tensor& loss) {
  if (consumed_) {
    throw ContractError("backward: tape already consumed; re-run the forward pass");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(), [&](const Node& node) {
    return node.output.same_storage(loss);
  });
  if (it == nodes_.rend()) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  consumed_ = true;
  Tensor seed = loss;
  seed.ensure_grad()[0] += T(1);
  for (; it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  // Inputs that were recorded but not reached get explicit zero gradients.
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (in.requires_grad()) in.ensure_grad();
    }
  }
  std::vector<Node>().swap(nodes_);
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace cagsr::ad
