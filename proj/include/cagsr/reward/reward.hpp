#pragma once

#include <optional>
#include <set>
#include <span>
#include <vector>

#include "cagsr/common/json_util.hpp"
#include "cagsr/data/stats.hpp"
#include "cagsr/model/trace.hpp"

namespace cagsr::reward {

struct RewardConfig {
  double alpha = 1.0;  // coverage weight
  double beta = 0.5;   // focus weight
  double gamma = 1.0;  // repetition weight
  int ngram_n = 2;
  // Absolute entropy floor; when unset the floor is entropy_floor_scale * ln|x|.
  std::optional<double> entropy_floor;
  double entropy_floor_scale = 0.05;
  double salient_fraction = 0.3;
  std::set<int> stopword_ids;
  // Total assigned to responses with no content tokens.
  double empty_response_reward = -1.0;

  double floor_for(int prompt_len) const;
  void validate() const;
};

// Stopword ids are vocabulary-specific, so they are not part of the JSON form;
// callers resolve them (see cli config "reward.stopwords").
Json to_json(const RewardConfig& cfg);
RewardConfig reward_config_from_json(const Json& j, const std::string& path = "reward");

struct SalientSet {
  std::vector<int> indices;  // ascending prompt positions
};

// Head- and layer-aggregated attention: one row per decoding step, one
// column per prompt position.
struct AttentionMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  std::span<const double> row(int t) const {
    return {values.data() + static_cast<std::size_t>(t) * cols, static_cast<std::size_t>(cols)};
  }
};

struct FocusResult {
  double focus = 0.0;                   // -mean(max(entropy_t, floor))
  std::vector<double> entropy_per_step;  // raw entropies, before the floor
};

struct RewardBreakdown {
  double coverage = 0.0;
  double focus = 0.0;
  double repeat_penalty = 0.0;
  std::vector<double> entropy_per_step;
  double total = 0.0;
  bool empty_response = false;

  double mean_entropy() const;
};

// Top ceil(salient_fraction * |x|) positions by idf, skipping stopwords and
// special tokens; ties go to the earlier position. If every position is
// excluded, all non-special positions are returned (or all positions, if the
// prompt is nothing but special tokens).
SalientSet select_salient(std::span<const int> prompt, const data::CorpusStats& stats,
                          const RewardConfig& cfg);

// Mean over traced layers at every step.
AttentionMatrix aggregate_attention(const model::AttentionTrace& trace);

// (1 / (|y| |I|)) * sum_t sum_{j in I} A[t, j]; 0 when |y| = 0.
double coverage(const AttentionMatrix& attn, const SalientSet& salient);

// Shannon entropy (natural log) of one attention row, with 1e-12 added
// inside the log and the result clamped at 0.
double row_entropy(std::span<const double> row);

FocusResult focus(const AttentionMatrix& attn, double entropy_floor);
FocusResult focus(const AttentionMatrix& attn, const RewardConfig& cfg);

// 1 - distinct/total over n-grams; 0 when the response has fewer than n tokens.
double repeat_penalty(std::span<const int> tokens, int n);

// R = alpha * coverage + beta * focus - gamma * repeat_penalty for a
// response whose trace covers exactly its tokens (EOS excluded).
RewardBreakdown reward(std::span<const int> prompt, std::span<const int> response,
                       const model::AttentionTrace& trace, const SalientSet& salient,
                       const RewardConfig& cfg);

// Scores a sampled candidate: strips the terminating EOS and the trace row
// that produced it, then applies reward().
RewardBreakdown score_candidate(std::span<const int> prompt, const model::Candidate& cand,
                                const SalientSet& salient, const RewardConfig& cfg);

}  // namespace cagsr::reward
