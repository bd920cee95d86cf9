#include "cagsr/rl/rollout.hpp"

#include <iostream>
#include <stdexcept>

#include "cagsr/common/rng.hpp"
#include "cagsr/eval/metrics.hpp"

namespace cagsr::rl {

std::vector<RolloutPrompt> make_rollout_prompts(std::span<const std::vector<int>> prompts,
                                                const data::CorpusStats& stats,
                                                const reward::RewardConfig& cfg) {
  std::vector<RolloutPrompt> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    RolloutPrompt rp;
    rp.tokens = p;
    rp.salient = reward::select_salient(p, stats, cfg);
    rp.entropy_floor = cfg.floor_for(static_cast<int>(p.size()));
    out.push_back(std::move(rp));
  }
  return out;
}

Scorer cagsr_scorer(const reward::RewardConfig& cfg) {
  return [cfg](const RolloutPrompt& prompt, const model::Candidate& cand) {
    return reward::score_candidate(prompt.tokens, cand, prompt.salient, cfg);
  };
}

RolloutBatch collect_rollouts(const model::PolicyModel& model, std::span<const RolloutPrompt> prompts,
                              const Scorer& scorer, const model::SamplingConfig& sampling,
                              int candidates_per_prompt) {
  if (candidates_per_prompt < 1) throw ConfigError("collect_rollouts: candidates_per_prompt must be >= 1");
  RolloutBatch batch;
  batch.prompts.assign(prompts.begin(), prompts.end());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const RolloutPrompt& prompt = prompts[i];
    std::vector<RolloutEntry> entries;
    try {
      ad::Tape tape(ad::Tape::Mode::kInference);
      const auto enc = model.encode(tape, prompt.tokens);
      const double value_old = model.value(tape, enc).item();
      model::SamplingConfig s = sampling;
      s.seed = derive_seed(sampling.seed, i);
      auto candidates = model.generate(enc, s, candidates_per_prompt);
      for (auto& cand : candidates) {
        RolloutEntry e;
        e.prompt_index = static_cast<int>(i);
        e.reward = scorer(prompt, cand);
        if (!prompt.salient.indices.empty()) {
          e.relevance = eval::relevance_proxy(prompt.tokens, cand.content(), prompt.salient);
        }
        e.value_old = value_old;
        e.candidate = std::move(cand);
        entries.push_back(std::move(e));
      }
    } catch (const std::exception& ex) {
      std::cerr << "warning: skipping rollout prompt " << i << ": " << ex.what() << "\n";
      ++batch.skipped_prompts;
      continue;
    }
    for (auto& e : entries) batch.entries.push_back(std::move(e));
  }
  if (2 * batch.skipped_prompts > static_cast<int>(prompts.size()) || batch.entries.empty()) {
    throw std::runtime_error("collect_rollouts: " + std::to_string(batch.skipped_prompts) + " of " +
                             std::to_string(prompts.size()) +
                             " prompts failed; fewer than half of the batch remains");
  }
  return batch;
}

}  // namespace cagsr::rl
