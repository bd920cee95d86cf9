#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>

#include "cagsr/autodiff/adam.hpp"
#include "cagsr/model/transformer.hpp"
#include "cagsr/rl/types.hpp"

namespace cagsr::rl {

// Fills the batch-statistics fields of IterationMetrics from a scored batch.
IterationMetrics batch_metrics(const RolloutBatch& batch);

// ppo_epochs passes over the batch (one pass for REINFORCE). Each pass
// shuffles the prompts and splits them into cfg.minibatches groups, so all
// candidates of a prompt share a minibatch. Every minibatch minimizes
// policy_loss + value_loss_weight * value_loss and takes one optimizer step.
// On a non-finite loss or ratio the model and optimizer are restored to
// their state at entry and std::runtime_error is thrown.
IterationMetrics train_iteration(model::PolicyModel& model, ad::Adam& optimizer,
                                 const RolloutBatch& batch, const TrainConfig& cfg, int iteration);

// The training prompt slots used by an iteration: consecutive windows over a
// stream of per-pass shuffles of [0, n_prompts).
std::vector<int> iteration_prompt_indices(const TrainConfig& cfg, int iteration, int n_prompts);

struct TrainOptions {
  // When set: checkpoints/latest.ckpt, metrics.jsonl and final.ckpt are
  // written here, and an existing latest.ckpt is resumed from.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const IterationMetrics&)> on_iteration;
};

struct TrainResult {
  int start_iteration = 0;  // > 0 when resumed
  std::vector<IterationMetrics> metrics;  // iterations run by this call
  double heldout_mean_reward = 0.0;       // greedy decoding
  int heldout_count = 0;
};

TrainResult train(model::PolicyModel& model, std::span<const RolloutPrompt> train_prompts,
                  std::span<const RolloutPrompt> heldout_prompts, const Scorer& scorer,
                  const TrainConfig& cfg, const TrainOptions& options = {});

// Mean greedy-decoding reward over a prompt set.
double greedy_mean_reward(const model::PolicyModel& model, std::span<const RolloutPrompt> prompts,
                          const Scorer& scorer);

}  // namespace cagsr::rl
