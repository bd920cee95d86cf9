#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cagsr/common/json_util.hpp"

namespace cagsr::data {

struct Example {
  std::int64_t id = 0;
  std::string prompt;
  std::string answer;
};

// Key-value lookup task:
//   "query k7 ; facts : k3 = v12 k7 = v4 v9 k21 = v30"  ->  "v4 v9"
// The queried key's fact sits among `distractors_per_prompt` other facts in
// random order; each block of n_keys examples queries every key once. Every
// key has one value of 1..max_value_len value tokens, fixed for the whole
// corpus, and each fact states it.
struct CorpusConfig {
  int size = 2000;
  int n_keys = 50;
  int n_values = 100;
  int distractors_per_prompt = 2;
  int max_value_len = 2;
  std::uint64_t seed = 0;

  static constexpr int kMinPromptTokens = 5;
  static constexpr int kMaxPromptTokens = 20;
  static constexpr int kMaxAnswerTokens = 4;

  // Throws ConfigError when no generated prompt could meet the length bounds.
  void validate() const;
};

Json to_json(const CorpusConfig& c);
CorpusConfig corpus_config_from_json(const Json& j, const std::string& path = "data");

std::vector<Example> build_toy_corpus(const CorpusConfig& cfg);

struct Splits {
  std::vector<Example> train, valid, test;
};

// Seeded shuffle, then cut by `ratios` (train, valid, test). Train and valid
// sizes are rounded; test takes the remainder.
Splits split(std::span<const Example> dataset, const std::array<double, 3>& ratios,
             std::uint64_t seed);

// Line-delimited JSON records {"id", "prompt", "answer"}.
void write_dataset(const std::filesystem::path& path, std::span<const Example> examples);
std::vector<Example> read_dataset(const std::filesystem::path& path);

}  // namespace cagsr::data
