#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cagsr/common/json_util.hpp"
#include "cagsr/data/stats.hpp"
#include "cagsr/data/vocab.hpp"
#include "cagsr/eval/metrics.hpp"
#include "cagsr/model/trace_io.hpp"
#include "cagsr/reward/reward.hpp"

namespace cagsr::eval {

struct EvalRecord {
  std::int64_t id = 0;
  std::vector<int> prompt;
  std::vector<int> reference;
  std::vector<int> response;  // greedy content tokens, EOS stripped
  RougeL rouge;
  double relevance = 0.0;
  reward::RewardBreakdown reward;
  bool exact_match = false;
};

struct EvalReport {
  std::size_t count = 0;
  double mean_relevance = 0.0;
  double mean_rouge_l_f1 = 0.0;
  double perplexity = 0.0;
  double mean_coverage = 0.0;
  double mean_entropy = 0.0;
  double mean_repeat_penalty = 0.0;
  double mean_reward = 0.0;
  double exact_match = 0.0;
  std::vector<EvalRecord> records;
  std::vector<model::TraceRecord> traces;  // greedy traces, one per example
};

// Greedy-decodes every example and aggregates the metric suite.
EvalReport evaluate(const model::PolicyModel& model, std::span<const data::TokenizedExample> examples,
                    const data::CorpusStats& stats, const reward::RewardConfig& reward_cfg);

// Summary fields only, stable order.
Json summary_json(const EvalReport& report);
// One object per record; token streams rendered as text.
Json record_json(const EvalRecord& record, const data::Vocabulary& vocab);

}  // namespace cagsr::eval
