#include "cagsr/rl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cagsr/common/rng.hpp"
#include "cagsr/model/checkpoint.hpp"
#include "cagsr/rl/losses.hpp"
#include "cagsr/rl/rollout.hpp"

namespace cagsr::rl {

namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kPromptOrderStream = 0x70;
constexpr std::uint64_t kSamplingStream = 0x73;
constexpr std::uint64_t kMinibatchStream = 0x6d;

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  std::size_t clipped_tokens = 0;
  std::size_t tokens = 0;
};

UpdateStats update_minibatch(model::PolicyModel& model, ad::Adam& optimizer, const RolloutBatch& batch,
                             std::span<const std::vector<int>> groups, const TrainConfig& cfg) {
  ad::Tape tape;
  std::vector<ad::Tensor> logps;
  std::vector<ad::Tensor> values;
  std::vector<float> logp_old;
  std::vector<float> advantages;
  std::vector<float> rewards;
  for (const auto& group : groups) {
    const RolloutPrompt& prompt = batch.prompts[batch.entries[group.front()].prompt_index];
    const auto enc = model.encode(tape, prompt.tokens);
    const auto v = tape.reshape(model.value(tape, enc), {1});
    for (int idx : group) {
      const RolloutEntry& e = batch.entries[idx];
      const auto& cand = e.candidate;
      logps.push_back(model.log_prob(tape, enc, cand.token_ids));
      logp_old.insert(logp_old.end(), cand.logprob_old.begin(), cand.logprob_old.end());
      advantages.insert(advantages.end(), cand.token_ids.size(), static_cast<float>(e.advantage));
      values.push_back(v);
      rewards.push_back(static_cast<float>(e.reward.total));
    }
  }
  const auto logp_new = tape.concat(logps);
  UpdateStats stats;
  stats.tokens = logp_new.numel();
  ad::Tensor policy;
  if (cfg.algorithm == Algorithm::kPpo) {
    auto pl = ppo_loss<float>(tape, logp_new, logp_old, advantages, static_cast<float>(cfg.ppo_epsilon));
    policy = pl.loss;
    stats.clipped_tokens = static_cast<std::size_t>(std::llround(pl.clip_fraction * stats.tokens));
  } else {
    policy = reinforce_loss<float>(tape, logp_new, advantages);
  }
  const auto vloss = value_loss<float>(tape, tape.concat(values), rewards);
  const auto loss = tape.add(policy, tape.scale(vloss, static_cast<float>(cfg.value_loss_weight)));
  stats.policy_loss = policy.item();
  stats.value_loss = vloss.item();
  if (!std::isfinite(loss.item())) {
    throw ContractError("non-finite loss (policy " + std::to_string(stats.policy_loss) + ", value " +
                        std::to_string(stats.value_loss) + ")");
  }
  tape.backward(loss);
  optimizer.step();
  return stats;
}

}  // namespace

IterationMetrics batch_metrics(const RolloutBatch& batch) {
  IterationMetrics m;
  const auto& entries = batch.entries;
  if (entries.empty()) return m;
  const double n = static_cast<double>(entries.size());
  m.min_reward = entries.front().reward.total;
  m.max_reward = entries.front().reward.total;
  std::size_t with_steps = 0;
  std::size_t empty = 0;
  for (const auto& e : entries) {
    const auto& r = e.reward;
    m.mean_reward += r.total;
    m.min_reward = std::min(m.min_reward, r.total);
    m.max_reward = std::max(m.max_reward, r.total);
    m.mean_coverage += r.coverage;
    m.mean_repeat_penalty += r.repeat_penalty;
    if (!r.entropy_per_step.empty()) {
      m.mean_entropy += r.mean_entropy();
      ++with_steps;
    }
    if (r.empty_response) ++empty;
    m.mean_relevance += e.relevance;
    m.mean_response_length += static_cast<double>(e.candidate.content().size());
    m.mean_advantage += e.raw_advantage;
    m.mean_entropy_floor += batch.prompts[e.prompt_index].entropy_floor;
  }
  m.mean_reward /= n;
  m.mean_coverage /= n;
  m.mean_repeat_penalty /= n;
  m.mean_entropy = with_steps ? m.mean_entropy / static_cast<double>(with_steps) : 0.0;
  m.mean_relevance /= n;
  m.mean_response_length /= n;
  m.mean_advantage /= n;
  m.mean_entropy_floor /= n;
  m.empty_fraction = static_cast<double>(empty) / n;
  return m;
}

IterationMetrics train_iteration(model::PolicyModel& model, ad::Adam& optimizer,
                                 const RolloutBatch& batch, const TrainConfig& cfg, int iteration) {
  IterationMetrics m = batch_metrics(batch);
  m.iteration = iteration;

  std::vector<std::vector<int>> groups;
  std::vector<int> group_of(batch.prompts.size(), -1);
  for (std::size_t i = 0; i < batch.entries.size(); ++i) {
    const int p = batch.entries[i].prompt_index;
    if (group_of[p] < 0) {
      group_of[p] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[group_of[p]].push_back(static_cast<int>(i));
  }
  if (groups.empty()) return m;

  const auto snapshot = model.clone();
  const auto optimizer_state = optimizer.state();
  const int epochs = cfg.algorithm == Algorithm::kPpo ? cfg.ppo_epochs : 1;
  const std::size_t n_mb = std::min<std::size_t>(cfg.minibatches, groups.size());
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(iteration), kMinibatchStream));
  std::size_t clipped = 0;
  std::size_t tokens = 0;
  int updates = 0;
  try {
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::vector<std::vector<int>> order = groups;
      rng.shuffle(order.begin(), order.end());
      for (std::size_t mb = 0; mb < n_mb; ++mb) {
        const std::size_t lo = mb * order.size() / n_mb;
        const std::size_t hi = (mb + 1) * order.size() / n_mb;
        const auto s = update_minibatch(model, optimizer, batch,
                                        std::span<const std::vector<int>>(order).subspan(lo, hi - lo), cfg);
        m.update_clip_fractions.push_back(static_cast<double>(s.clipped_tokens) /
                                          static_cast<double>(s.tokens));
        m.policy_loss += s.policy_loss;
        m.value_loss += s.value_loss;
        clipped += s.clipped_tokens;
        tokens += s.tokens;
        ++updates;
      }
    }
  } catch (const std::exception& ex) {
    model.copy_parameters_from(snapshot);
    optimizer.load_state(optimizer_state);
    throw std::runtime_error("iteration " + std::to_string(iteration) +
                             " aborted, parameters restored: " + ex.what());
  }
  m.policy_loss /= updates;
  m.value_loss /= updates;
  m.clip_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
  return m;
}

std::vector<int> iteration_prompt_indices(const TrainConfig& cfg, int iteration, int n_prompts) {
  if (n_prompts <= 0) throw InputError("iteration_prompt_indices: no training prompts");
  std::vector<int> out;
  out.reserve(cfg.batch_prompts);
  std::int64_t cached_pass = -1;
  std::vector<int> perm(n_prompts);
  for (int k = 0; k < cfg.batch_prompts; ++k) {
    const std::int64_t slot = static_cast<std::int64_t>(iteration) * cfg.batch_prompts + k;
    const std::int64_t pass = slot / n_prompts;
    if (pass != cached_pass) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(pass), kPromptOrderStream));
      rng.shuffle(perm.begin(), perm.end());
      cached_pass = pass;
    }
    out.push_back(perm[slot % n_prompts]);
  }
  return out;
}

double greedy_mean_reward(const model::PolicyModel& model, std::span<const RolloutPrompt> prompts,
                          const Scorer& scorer) {
  if (prompts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : prompts) {
    const auto cands = model.generate(p.tokens, model::SamplingConfig::greedy(), 1);
    total += scorer(p, cands.front()).total;
  }
  return total / static_cast<double>(prompts.size());
}

namespace {

void truncate_lines(const fs::path& path, int keep) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string kept;
  std::string line;
  for (int i = 0; i < keep && std::getline(in, line); ++i) kept += line + "\n";
  in.close();
  ad::write_file_atomic(path, kept);
}

}  // namespace

TrainResult train(model::PolicyModel& model, std::span<const RolloutPrompt> train_prompts,
                  std::span<const RolloutPrompt> heldout_prompts, const Scorer& scorer,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (train_prompts.empty()) throw InputError("train: no training prompts");
  ad::Adam optimizer(model.parameters(), cfg.optimizer);
  TrainResult result;

  fs::path latest, metrics_path;
  std::ofstream metrics_out;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir / "checkpoints");
    latest = *options.out_dir / "checkpoints" / "latest.ckpt";
    metrics_path = *options.out_dir / "metrics.jsonl";
    if (fs::exists(latest)) {
      const auto ar = ad::Archive::load(latest);
      if (model::to_json(model::checkpoint_model_config(ar)).dump() !=
          model::to_json(model.config()).dump()) {
        throw ConfigError("train: " + latest.string() + " was written for a different model config");
      }
      model::load_parameters(ar, model);
      if (auto st = model::adam_state_from_checkpoint(ar, model)) {
        st->options = cfg.optimizer;
        optimizer.load_state(std::move(*st));
      }
      result.start_iteration = ar.metadata.at("extra").at("iteration").get<int>();
    }
    truncate_lines(metrics_path, result.start_iteration);
    metrics_out.open(metrics_path, std::ios::app);
    if (!metrics_out) throw std::runtime_error("train: cannot open " + metrics_path.string());
  }

  const auto save_latest = [&](int next_iteration) {
    Json extra;
    extra["iteration"] = next_iteration;
    model::save_checkpoint(latest, model, &optimizer.state(), extra);
  };

  for (int it = result.start_iteration; it < cfg.total_iterations; ++it) {
    const auto idx = iteration_prompt_indices(cfg, it, static_cast<int>(train_prompts.size()));
    std::vector<RolloutPrompt> prompts;
    prompts.reserve(idx.size());
    for (int i : idx) prompts.push_back(train_prompts[i]);
    model::SamplingConfig sampling = cfg.sampling;
    sampling.seed = derive_seed(cfg.seed ^ cfg.sampling.seed, static_cast<std::uint64_t>(it), kSamplingStream);

    RolloutBatch batch = collect_rollouts(model, prompts, scorer, sampling, cfg.candidates_per_prompt);
    compute_advantages(batch, cfg.reward_normalize);
    IterationMetrics m = train_iteration(model, optimizer, batch, cfg, it);

    if (metrics_out.is_open()) {
      metrics_out << to_json(m).dump() << "\n";
      metrics_out.flush();
    }
    if (options.on_iteration) options.on_iteration(m);
    result.metrics.push_back(std::move(m));
    if (options.out_dir && ((it + 1) % cfg.checkpoint_every == 0 || it + 1 == cfg.total_iterations)) {
      save_latest(it + 1);
    }
  }

  if (options.out_dir) {
    Json extra;
    extra["iteration"] = std::max(cfg.total_iterations, result.start_iteration);
    model::save_checkpoint(*options.out_dir / "final.ckpt", model, &optimizer.state(), extra);
  }
  result.heldout_count = static_cast<int>(heldout_prompts.size());
  result.heldout_mean_reward = greedy_mean_reward(model, heldout_prompts, scorer);
  return result;
}

}  // namespace cagsr::rl
