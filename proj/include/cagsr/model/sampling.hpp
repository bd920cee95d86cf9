#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "cagsr/common/json_util.hpp"
#include "cagsr/common/rng.hpp"

namespace cagsr::model {

enum class SamplingStrategy { kTopK, kNucleus };

struct SamplingConfig {
  SamplingStrategy strategy = SamplingStrategy::kNucleus;
  int top_k = 0;          // <= 0 keeps the whole vocabulary
  double top_p = 0.95;
  double temperature = 1.0;  // <= kGreedyTemperature decodes greedily
  // EOS cannot be drawn before this many tokens have been generated.
  // Recorded log-probabilities stay those of the unconstrained policy.
  int min_response_len = 1;
  std::uint64_t seed = 0;

  static constexpr double kGreedyTemperature = 1e-6;

  static SamplingConfig greedy() {
    SamplingConfig c;
    c.temperature = 0.0;
    return c;
  }
  bool is_greedy() const { return temperature <= kGreedyTemperature; }
  void validate() const;
};

Json to_json(const SamplingConfig& c);
SamplingConfig sampling_config_from_json(const Json& j, const std::string& path = "sampling");

// Argmax with ties resolved to the lowest id.
int argmax(std::span<const float> logits);

// Draws one token id from the temperature-scaled, top-k / nucleus truncated
// distribution over `logits`. Consumes exactly one uniform from `rng` unless
// decoding greedily.
int sample_token(std::span<const float> logits, const SamplingConfig& cfg, Rng& rng);

}  // namespace cagsr::model
