#pragma once

#include <cstdint>
#include <span>

#include "cagsr/data/stats.hpp"
#include "cagsr/model/transformer.hpp"
#include "cagsr/rl/types.hpp"

namespace cagsr::rl {

// Prompts with their salient sets and entropy floors resolved.
std::vector<RolloutPrompt> make_rollout_prompts(std::span<const std::vector<int>> prompts,
                                                const data::CorpusStats& stats,
                                                const reward::RewardConfig& cfg);

// The attention-shaped reward for a sampled candidate.
Scorer cagsr_scorer(const reward::RewardConfig& cfg);

// Samples n candidates per prompt under the current policy and scores them.
// logprob_old and value_old are snapshots of the policy at call time.
// Candidate streams for prompt slot i are seeded by
// derive_seed(sampling.seed, i). A prompt whose generation or scoring throws
// is skipped with a warning on stderr; if fewer than half of the prompts
// survive the call throws std::runtime_error.
RolloutBatch collect_rollouts(const model::PolicyModel& model, std::span<const RolloutPrompt> prompts,
                              const Scorer& scorer, const model::SamplingConfig& sampling,
                              int candidates_per_prompt);

inline constexpr double kMinAdvantageStdev = 1e-8;

// A = R - V per entry; with normalize, shifted and scaled to mean 0 and
// population stdev 1. A batch whose stdev is at most kMinAdvantageStdev has
// no usable signal and gets all-zero advantages.
void compute_advantages(RolloutBatch& batch, bool normalize);

}  // namespace cagsr::rl
