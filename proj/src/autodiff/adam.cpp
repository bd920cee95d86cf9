#include "cagsr/autodiff/adam.hpp"

#include <cmath>

#include "cagsr/common/error.hpp"

namespace cagsr::ad {

template <typename T>
BasicAdam<T>::BasicAdam(std::vector<BasicTensor<T>> params, AdamOptions options)
    : params_(std::move(params)) {
  state_.options = options;
  for (const auto& p : params_) {
    state_.m.emplace_back(p.numel(), T(0));
    state_.v.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void BasicAdam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " " +
                          shape_str(params_[i].shape()) + " has no gradient");
    }
  }
  ++state_.step;
  const auto& o = state_.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state_.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state_.step));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T step_size = static_cast<T>(o.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].data();
    auto g = params_[i].grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
    params_[i].zero_grad();
  }
}

template <typename T>
void BasicAdam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void BasicAdam<T>::load_state(AdamState<T> state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ContractError("adam: state holds " + std::to_string(state.m.size()) +
                        " buffers for " + std::to_string(params_.size()) +
                        " parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (state.m[i].size() != params_[i].numel() ||
        state.v[i].size() != params_[i].numel()) {
      throw ContractError("adam: state buffer " + std::to_string(i) +
                          " does not match parameter size");
    }
  }
  state_ = std::move(state);
}

template class BasicAdam<float>;
template class BasicAdam<double>;

}  // namespace cagsr::ad
