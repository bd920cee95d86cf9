#include "cagsr/reward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cagsr/common/error.hpp"
#include "cagsr/common/tokens.hpp"

namespace cagsr::reward {

namespace {
constexpr double kLogGuard = 1e-12;
}

double RewardConfig::floor_for(int prompt_len) const {
  if (entropy_floor) return *entropy_floor;
  return prompt_len > 0 ? entropy_floor_scale * std::log(static_cast<double>(prompt_len)) : 0.0;
}

void RewardConfig::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0) {
    throw ConfigError("reward: alpha, beta and gamma must be nonnegative");
  }
  if (ngram_n < 2) throw ConfigError("reward.ngram_n must be >= 2");
  if (entropy_floor && *entropy_floor < 0) throw ConfigError("reward.entropy_floor must be >= 0");
  if (entropy_floor_scale < 0) throw ConfigError("reward.entropy_floor_scale must be >= 0");
  if (!(salient_fraction > 0 && salient_fraction <= 1)) {
    throw ConfigError("reward.salient_fraction must be in (0, 1]");
  }
}

Json to_json(const RewardConfig& c) {
  Json j{{"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma}, {"ngram_n", c.ngram_n}};
  j["entropy_floor"] = c.entropy_floor ? Json(*c.entropy_floor) : Json(nullptr);
  j["entropy_floor_scale"] = c.entropy_floor_scale;
  j["salient_fraction"] = c.salient_fraction;
  j["empty_response_reward"] = c.empty_response_reward;
  return j;
}

RewardConfig reward_config_from_json(const Json& j, const std::string& path) {
  RewardConfig c;
  StrictReader r(j, path);
  r.read("alpha", c.alpha);
  r.read("beta", c.beta);
  r.read("gamma", c.gamma);
  r.read("ngram_n", c.ngram_n);
  r.read("entropy_floor", c.entropy_floor);
  r.read("entropy_floor_scale", c.entropy_floor_scale);
  r.read("salient_fraction", c.salient_fraction);
  r.read("empty_response_reward", c.empty_response_reward);
  r.finish();
  c.validate();
  return c;
}

double RewardBreakdown::mean_entropy() const {
  if (entropy_per_step.empty()) return 0.0;
  return std::accumulate(entropy_per_step.begin(), entropy_per_step.end(), 0.0) /
         static_cast<double>(entropy_per_step.size());
}

SalientSet select_salient(std::span<const int> prompt, const data::CorpusStats& stats,
                          const RewardConfig& cfg) {
  std::vector<int> eligible;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    const int tok = prompt[i];
    if (!is_special_token(tok) && !cfg.stopword_ids.count(tok)) eligible.push_back(static_cast<int>(i));
  }
  SalientSet out;
  if (eligible.empty()) {
    for (std::size_t i = 0; i < prompt.size(); ++i)
      if (!is_special_token(prompt[i])) out.indices.push_back(static_cast<int>(i));
    if (out.indices.empty()) {
      out.indices.resize(prompt.size());
      std::iota(out.indices.begin(), out.indices.end(), 0);
    }
    return out;
  }
  // The small epsilon keeps e.g. 0.3 * 10 from rounding up to 4.
  const auto wanted = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.salient_fraction * static_cast<double>(prompt.size()) - 1e-9)));
  std::stable_sort(eligible.begin(), eligible.end(), [&](int a, int b) {
    return stats.idf(prompt[a]) > stats.idf(prompt[b]);
  });
  eligible.resize(std::min(wanted, eligible.size()));
  std::sort(eligible.begin(), eligible.end());
  out.indices = std::move(eligible);
  return out;
}

AttentionMatrix aggregate_attention(const model::AttentionTrace& trace) {
  trace.validate();
  AttentionMatrix out;
  out.rows = trace.response_len;
  out.cols = trace.prompt_len;
  out.values.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  const double inv = 1.0 / static_cast<double>(trace.num_layers);
  for (int t = 0; t < trace.response_len; ++t) {
    double* dst = out.values.data() + static_cast<std::size_t>(t) * out.cols;
    for (int l = 0; l < trace.num_layers; ++l) {
      auto src = trace.row(t, l);
      for (int j = 0; j < out.cols; ++j) dst[j] += static_cast<double>(src[j]);
    }
    for (int j = 0; j < out.cols; ++j) dst[j] *= inv;
  }
  return out;
}

double coverage(const AttentionMatrix& attn, const SalientSet& salient) {
  if (salient.indices.empty()) throw ContractError("coverage: salient set is empty");
  for (int j : salient.indices) {
    if (j < 0 || j >= attn.cols) {
      throw ContractError("coverage: salient position " + std::to_string(j) +
                          " outside prompt of length " + std::to_string(attn.cols));
    }
  }
  if (attn.rows == 0) return 0.0;
  double mass = 0.0;
  for (int t = 0; t < attn.rows; ++t) {
    auto row = attn.row(t);
    for (int j : salient.indices) mass += row[j];
  }
  return mass / (static_cast<double>(attn.rows) * static_cast<double>(salient.indices.size()));
}

double row_entropy(std::span<const double> row) {
  double h = 0.0;
  for (double a : row) h -= a * std::log(a + kLogGuard);
  return std::max(0.0, h);
}

FocusResult focus(const AttentionMatrix& attn, double entropy_floor) {
  FocusResult out;
  out.entropy_per_step.reserve(attn.rows);
  double acc = 0.0;
  for (int t = 0; t < attn.rows; ++t) {
    const double h = row_entropy(attn.row(t));
    out.entropy_per_step.push_back(h);
    acc += std::max(h, entropy_floor);
  }
  out.focus = attn.rows ? -acc / static_cast<double>(attn.rows) : 0.0;
  return out;
}

FocusResult focus(const AttentionMatrix& attn, const RewardConfig& cfg) {
  return focus(attn, cfg.floor_for(attn.cols));
}

double repeat_penalty(std::span<const int> tokens, int n) {
  if (n < 1) throw ContractError("repeat_penalty: n must be positive");
  if (tokens.size() < static_cast<std::size_t>(n)) return 0.0;
  const std::size_t total = tokens.size() - n + 1;
  std::map<std::vector<int>, int> seen;
  for (std::size_t i = 0; i < total; ++i) {
    seen.emplace(std::vector<int>(tokens.begin() + i, tokens.begin() + i + n), 0);
  }
  return 1.0 - static_cast<double>(seen.size()) / static_cast<double>(total);
}

RewardBreakdown reward(std::span<const int> prompt, std::span<const int> response,
                       const model::AttentionTrace& trace, const SalientSet& salient,
                       const RewardConfig& cfg) {
  if (trace.prompt_len != static_cast<int>(prompt.size()) ||
      trace.response_len != static_cast<int>(response.size())) {
    throw ContractError("reward: trace covers " + std::to_string(trace.response_len) + "x" +
                        std::to_string(trace.prompt_len) + " but response/prompt have " +
                        std::to_string(response.size()) + "/" + std::to_string(prompt.size()) +
                        " tokens");
  }
  RewardBreakdown out;
  if (response.empty()) {
    out.empty_response = true;
    out.total = cfg.empty_response_reward;
    return out;
  }
  const AttentionMatrix attn = aggregate_attention(trace);
  out.coverage = coverage(attn, salient);
  FocusResult f = focus(attn, cfg);
  out.focus = f.focus;
  out.entropy_per_step = std::move(f.entropy_per_step);
  out.repeat_penalty = repeat_penalty(response, cfg.ngram_n);
  out.total = cfg.alpha * out.coverage + cfg.beta * out.focus - cfg.gamma * out.repeat_penalty;
  return out;
}

RewardBreakdown score_candidate(std::span<const int> prompt, const model::Candidate& cand,
                                const SalientSet& salient, const RewardConfig& cfg) {
  const auto content = cand.content();
  return reward(prompt, content, cand.trace.prefix(static_cast<int>(content.size())), salient, cfg);
}

}  // namespace cagsr::reward
