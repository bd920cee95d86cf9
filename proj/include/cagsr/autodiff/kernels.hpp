#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace cagsr::ad::kernels {

// Max-subtracted log(sum(exp(x))). Shared by the tape's log-prob ops and the
// sampler so that recorded and re-scored log-probabilities agree bitwise.
template <typename T>
T log_sum_exp(std::span<const T> x) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  T sum = 0;
  for (T v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

template <typename T>
void softmax(std::span<const T> x, std::span<T> out) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : x) mx = std::max(mx, v);
  T sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  const T inv = T(1) / sum;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] *= inv;
}

}  // namespace cagsr::ad::kernels
