#include <cmath>
#include <string>

#include "cagsr/rl/rollout.hpp"
#include "cagsr/rl/types.hpp"

namespace cagsr::rl {

void TrainConfig::validate() const {
  if (batch_prompts < 1) throw ConfigError("train.batch_prompts must be >= 1");
  if (candidates_per_prompt < 1) throw ConfigError("train.candidates_per_prompt must be >= 1");
  if (!(ppo_epsilon > 0.0 && ppo_epsilon < 1.0)) throw ConfigError("train.ppo_epsilon must be in (0, 1)");
  if (ppo_epochs < 1) throw ConfigError("train.ppo_epochs must be >= 1");
  if (minibatches < 1) throw ConfigError("train.minibatches must be >= 1");
  if (value_loss_weight < 0.0) throw ConfigError("train.value_loss_weight must be >= 0");
  if (!(optimizer.lr > 0.0)) throw ConfigError("train.optimizer.lr must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("train.optimizer.beta1 must be in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("train.optimizer.beta2 must be in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw ConfigError("train.optimizer.eps must be > 0");
  if (total_iterations < 0) throw ConfigError("train.total_iterations must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  sampling.validate();
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["batch_prompts"] = c.batch_prompts;
  j["candidates_per_prompt"] = c.candidates_per_prompt;
  j["ppo_epsilon"] = c.ppo_epsilon;
  j["ppo_epochs"] = c.ppo_epochs;
  j["minibatches"] = c.minibatches;
  j["value_loss_weight"] = c.value_loss_weight;
  j["reward_normalize"] = c.reward_normalize;
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps}};
  j["total_iterations"] = c.total_iterations;
  j["checkpoint_every"] = c.checkpoint_every;
  j["seed"] = c.seed;
  j["algorithm"] = c.algorithm == Algorithm::kPpo ? "ppo" : "reinforce";
  j["sampling"] = model::to_json(c.sampling);
  return j;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  StrictReader r(j, path);
  r.read("batch_prompts", c.batch_prompts);
  r.read("candidates_per_prompt", c.candidates_per_prompt);
  r.read("ppo_epsilon", c.ppo_epsilon);
  r.read("ppo_epochs", c.ppo_epochs);
  r.read("minibatches", c.minibatches);
  r.read("value_loss_weight", c.value_loss_weight);
  r.read("reward_normalize", c.reward_normalize);
  if (const Json* opt = r.child("optimizer")) {
    StrictReader o(*opt, r.child_path("optimizer"));
    o.read("lr", c.optimizer.lr);
    o.read("beta1", c.optimizer.beta1);
    o.read("beta2", c.optimizer.beta2);
    o.read("eps", c.optimizer.eps);
    o.finish();
  }
  r.read("total_iterations", c.total_iterations);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("seed", c.seed);
  std::string algorithm = c.algorithm == Algorithm::kPpo ? "ppo" : "reinforce";
  r.read("algorithm", algorithm);
  if (algorithm == "ppo") {
    c.algorithm = Algorithm::kPpo;
  } else if (algorithm == "reinforce") {
    c.algorithm = Algorithm::kReinforce;
  } else {
    throw ConfigError(r.child_path("algorithm") + " must be \"ppo\" or \"reinforce\"");
  }
  if (const Json* s = r.child("sampling")) {
    c.sampling = model::sampling_config_from_json(*s, r.child_path("sampling"));
  }
  r.finish();
  c.validate();
  return c;
}

Json to_json(const IterationMetrics& m) {
  Json j;
  j["iteration"] = m.iteration;
  j["mean_reward"] = m.mean_reward;
  j["min_reward"] = m.min_reward;
  j["max_reward"] = m.max_reward;
  j["mean_coverage"] = m.mean_coverage;
  j["mean_entropy"] = m.mean_entropy;
  j["mean_entropy_floor"] = m.mean_entropy_floor;
  j["mean_repeat_penalty"] = m.mean_repeat_penalty;
  j["mean_advantage"] = m.mean_advantage;
  j["clip_fraction"] = m.clip_fraction;
  j["value_loss"] = m.value_loss;
  j["policy_loss"] = m.policy_loss;
  j["mean_relevance"] = m.mean_relevance;
  j["mean_response_length"] = m.mean_response_length;
  j["empty_fraction"] = m.empty_fraction;
  return j;
}

void compute_advantages(RolloutBatch& batch, bool normalize) {
  for (auto& e : batch.entries) {
    e.raw_advantage = e.reward.total - e.value_old;
    e.advantage = e.raw_advantage;
  }
  if (!normalize || batch.entries.empty()) return;
  double mean = 0.0;
  for (const auto& e : batch.entries) mean += e.raw_advantage;
  mean /= static_cast<double>(batch.entries.size());
  double var = 0.0;
  for (const auto& e : batch.entries) var += (e.raw_advantage - mean) * (e.raw_advantage - mean);
  var /= static_cast<double>(batch.entries.size());
  const double stdev = std::sqrt(var);
  for (auto& e : batch.entries) e.advantage = stdev > kMinAdvantageStdev ? (e.raw_advantage - mean) / stdev : 0.0;
}

}  // namespace cagsr::rl
