#pragma once

#include <cstdint>
#include <vector>

#include "cagsr/autodiff/tensor.hpp"

namespace cagsr::ad {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;  // one buffer per parameter
  std::vector<std::vector<T>> v;
  AdamOptions options;
};

// Bias-corrected Adam over a fixed parameter list. step() consumes the
// gradients (requires every parameter to have one) and zeroes them.
template <typename T>
class BasicAdam {
 public:
  BasicAdam(std::vector<BasicTensor<T>> params, AdamOptions options);

  void step();
  void zero_grad();

  const AdamState<T>& state() const { return state_; }
  void load_state(AdamState<T> state);
  const std::vector<BasicTensor<T>>& params() const { return params_; }
  void set_lr(double lr) { state_.options.lr = lr; }

 private:
  std::vector<BasicTensor<T>> params_;
  AdamState<T> state_;
};

using Adam = BasicAdam<float>;
using Adam64 = BasicAdam<double>;

}  // namespace cagsr::ad
