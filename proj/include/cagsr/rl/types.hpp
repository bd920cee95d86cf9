#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cagsr/autodiff/adam.hpp"
#include "cagsr/common/json_util.hpp"
#include "cagsr/model/sampling.hpp"
#include "cagsr/model/trace.hpp"
#include "cagsr/reward/reward.hpp"

namespace cagsr::rl {

enum class Algorithm { kPpo, kReinforce };

struct TrainConfig {
  int batch_prompts = 16;          // B
  int candidates_per_prompt = 4;   // N
  double ppo_epsilon = 0.2;
  int ppo_epochs = 4;
  int minibatches = 4;             // per epoch; minibatch size is B*N / minibatches
  double value_loss_weight = 0.5;
  bool reward_normalize = true;
  ad::AdamOptions optimizer{3e-4, 0.9, 0.999, 1e-8};
  int total_iterations = 200;
  int checkpoint_every = 10;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::kPpo;
  model::SamplingConfig sampling;

  void validate() const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");

// A training prompt with its precomputed salient positions.
struct RolloutPrompt {
  std::vector<int> tokens;
  reward::SalientSet salient;
  double entropy_floor = 0.0;  // reported in metrics only
};

// Scores one sampled candidate for a prompt.
using Scorer = std::function<reward::RewardBreakdown(const RolloutPrompt&, const model::Candidate&)>;

struct RolloutEntry {
  int prompt_index = 0;  // into RolloutBatch::prompts
  model::Candidate candidate;
  reward::RewardBreakdown reward;
  double relevance = 0.0;
  double value_old = 0.0;      // V_old(x)
  double raw_advantage = 0.0;  // reward.total - value_old
  double advantage = 0.0;      // after optional normalization
};

struct RolloutBatch {
  std::vector<RolloutPrompt> prompts;
  std::vector<RolloutEntry> entries;
  int skipped_prompts = 0;
};

struct IterationMetrics {
  int iteration = 0;
  double mean_reward = 0, min_reward = 0, max_reward = 0;
  double mean_coverage = 0;
  double mean_entropy = 0;
  double mean_entropy_floor = 0;
  double mean_repeat_penalty = 0;
  double mean_relevance = 0;
  double mean_response_length = 0;
  double empty_fraction = 0;
  double mean_advantage = 0;  // before normalization
  double clip_fraction = 0;   // over every token of every update
  double value_loss = 0;      // mean over updates
  double policy_loss = 0;     // mean over updates
  // Per-update clip fractions, in update order. Not serialized.
  std::vector<double> update_clip_fractions;
};

// Stable field order for the metrics stream.
Json to_json(const IterationMetrics& m);

}  // namespace cagsr::rl
