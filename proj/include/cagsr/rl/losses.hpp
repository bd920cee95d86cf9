#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cagsr/autodiff/tape.hpp"
#include "cagsr/common/error.hpp"

namespace cagsr::rl {

// Per-token clipped surrogate min(r A, clip(r, 1-eps, 1+eps) A).
template <typename T>
T clipped_objective(T ratio, T advantage, T eps) {
  return std::min(ratio * advantage, std::clamp(ratio, T(1) - eps, T(1) + eps) * advantage);
}

template <typename T>
struct PolicyLoss {
  ad::BasicTensor<T> loss;     // scalar, to minimize
  double clip_fraction = 0.0;  // tokens where the clipped branch is strictly smaller
  double mean_ratio = 0.0;
};

// -mean_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t) with
// r_t = exp(logp_new - logp_old). Gradients flow through logp_new only.
// A non-finite ratio throws ContractError.
template <typename T>
PolicyLoss<T> ppo_loss(ad::BasicTape<T>& tape, const ad::BasicTensor<T>& logp_new,
                       std::span<const T> logp_old, std::span<const T> advantages, T eps) {
  using Tensor = ad::BasicTensor<T>;
  const std::size_t n = logp_new.numel();
  if (logp_old.size() != n || advantages.size() != n || n == 0) {
    throw DimensionError("ppo_loss: " + std::to_string(n) + " new log-probs, " +
                         std::to_string(logp_old.size()) + " old, " +
                         std::to_string(advantages.size()) + " advantages");
  }
  const Tensor old({n}, std::vector<T>(logp_old.begin(), logp_old.end()));
  const Tensor adv({n}, std::vector<T>(advantages.begin(), advantages.end()));
  const Tensor flat = logp_new.dim() == 1 ? logp_new : tape.reshape(logp_new, {n});
  const Tensor ratio = tape.exp(tape.sub(flat, old));
  PolicyLoss<T> out;
  std::size_t clipped = 0;
  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T r = ratio[i];
    if (!std::isfinite(r)) {
      throw ContractError("ppo_loss: non-finite probability ratio at token " + std::to_string(i));
    }
    const T unclipped = r * advantages[i];
    const T clip = std::clamp(r, T(1) - eps, T(1) + eps) * advantages[i];
    if (clip < unclipped) ++clipped;
    ratio_sum += r;
  }
  const Tensor surrogate = tape.minimum(tape.mul(ratio, adv),
                                        tape.mul(tape.clamp(ratio, T(1) - eps, T(1) + eps), adv));
  out.loss = tape.scale(tape.mean(surrogate), T(-1));
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  out.mean_ratio = ratio_sum / static_cast<double>(n);
  return out;
}

// REINFORCE with baseline: -mean_t A_t log pi(y_t).
template <typename T>
ad::BasicTensor<T> reinforce_loss(ad::BasicTape<T>& tape, const ad::BasicTensor<T>& logp_new,
                                  std::span<const T> advantages) {
  const std::size_t n = logp_new.numel();
  if (advantages.size() != n || n == 0) {
    throw DimensionError("reinforce_loss: " + std::to_string(n) + " log-probs, " +
                         std::to_string(advantages.size()) + " advantages");
  }
  const ad::BasicTensor<T> adv({n}, std::vector<T>(advantages.begin(), advantages.end()));
  const auto flat = logp_new.dim() == 1 ? logp_new : tape.reshape(logp_new, {n});
  return tape.scale(tape.mean(tape.mul(flat, adv)), T(-1));
}

// Mean squared error between value predictions and observed rewards.
template <typename T>
ad::BasicTensor<T> value_loss(ad::BasicTape<T>& tape, const ad::BasicTensor<T>& values,
                              std::span<const T> rewards) {
  const std::size_t n = values.numel();
  if (rewards.size() != n || n == 0) {
    throw DimensionError("value_loss: " + std::to_string(n) + " values, " +
                         std::to_string(rewards.size()) + " rewards");
  }
  const ad::BasicTensor<T> target({n}, std::vector<T>(rewards.begin(), rewards.end()));
  const auto flat = values.dim() == 1 ? values : tape.reshape(values, {n});
  const auto diff = tape.sub(flat, target);
  return tape.mean(tape.mul(diff, diff));
}

}  // namespace cagsr::rl
