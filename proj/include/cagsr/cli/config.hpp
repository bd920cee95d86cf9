#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cagsr/common/json_util.hpp"
#include "cagsr/data/corpus.hpp"
#include "cagsr/data/pretrain.hpp"
#include "cagsr/data/vocab.hpp"
#include "cagsr/model/config.hpp"
#include "cagsr/reward/reward.hpp"
#include "cagsr/rl/types.hpp"

namespace cagsr::cli {

// Input locations. Empty means "not given"; commands that need one fail
// with a usage error naming the key.
struct Paths {
  std::string data;        // directory written by make-data
  std::string checkpoint;  // model checkpoint to start from / evaluate
  std::string traces;      // attention-trace dump for `score`
};

// The whole configuration tree. Sub-seeds for model initialization,
// pretraining and RL are all taken from `seed`; the corpus and the split
// have their own seeds so that one dataset can serve several runs.
struct RunConfig {
  std::uint64_t seed = 0;
  data::CorpusConfig data;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  model::ModelConfig model;  // vocab_size 0 = size of the vocabulary
  reward::RewardConfig reward;
  std::vector<std::string> stopwords{"query", ";", "facts", ":", "="};
  data::PretrainOptions pretrain;
  rl::TrainConfig train;
  std::string eval_split = "test";
  Paths paths;

  RunConfig();
};

// A RunConfig with train.seed / pretrain.seed synchronized to `seed`.
Json to_json(const RunConfig& c);
// Strict: unknown keys and wrong types throw ConfigError naming the key.
RunConfig run_config_from_json(const Json& j);

// Applies "a.b.c=value" to a JSON tree. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(Json& tree, const std::string& assignment);

// Resolves reward.stopwords against a vocabulary (absent words are ignored).
reward::RewardConfig resolve_reward(const RunConfig& c, const data::Vocabulary& vocab);

}  // namespace cagsr::cli
