#include "cagsr/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cagsr/common/error.hpp"
#include "cagsr/common/rng.hpp"

namespace cagsr::data {

void CorpusConfig::validate() const {
  if (size < 10) throw ConfigError("data.size must be >= 10");
  if (n_keys < distractors_per_prompt + 1) {
    throw ConfigError("data.n_keys must exceed distractors_per_prompt");
  }
  if (n_values < 1) throw ConfigError("data.n_values must be >= 1");
  if (distractors_per_prompt < 0) throw ConfigError("data.distractors_per_prompt must be >= 0");
  if (max_value_len < 1 || max_value_len > kMaxAnswerTokens) {
    throw ConfigError("data.max_value_len must be in [1, " + std::to_string(kMaxAnswerTokens) + "]");
  }
  // "query k ; facts :" plus (distractors + 1) facts of "k = v..."
  const int longest = 5 + (distractors_per_prompt + 1) * (2 + max_value_len);
  if (longest > kMaxPromptTokens) {
    throw ConfigError("data: prompts can reach " + std::to_string(longest) +
                      " tokens; reduce distractors_per_prompt or max_value_len to stay within " +
                      std::to_string(kMaxPromptTokens));
  }
}

Json to_json(const CorpusConfig& c) {
  return Json{{"size", c.size},
              {"n_keys", c.n_keys},
              {"n_values", c.n_values},
              {"distractors_per_prompt", c.distractors_per_prompt},
              {"max_value_len", c.max_value_len}};
}

CorpusConfig corpus_config_from_json(const Json& j, const std::string& path) {
  CorpusConfig c;
  StrictReader r(j, path);
  r.read("size", c.size);
  r.read("n_keys", c.n_keys);
  r.read("n_values", c.n_values);
  r.read("distractors_per_prompt", c.distractors_per_prompt);
  r.read("max_value_len", c.max_value_len);
  r.finish();
  c.validate();
  return c;
}

std::vector<Example> build_toy_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xC0235));
  // Each key owns one value sequence for the whole corpus.
  std::vector<std::string> values(cfg.n_keys);
  for (auto& value : values) {
    const auto len = rng.uniform_int(1, cfg.max_value_len);
    for (int t = 0; t < len; ++t) {
      if (t) value += ' ';
      value += "v" + std::to_string(rng.uniform_int(0, cfg.n_values - 1));
    }
  }
  std::vector<Example> out;
  out.reserve(cfg.size);
  std::vector<int> keys(cfg.n_keys), schedule(cfg.n_keys);
  std::iota(schedule.begin(), schedule.end(), 0);
  for (int i = 0; i < cfg.size; ++i) {
    // Query targets are stratified: each block of n_keys examples asks for
    // every key once, in shuffled order.
    if (i % cfg.n_keys == 0) rng.shuffle(schedule.begin(), schedule.end());
    const int query = schedule[i % cfg.n_keys];
    std::iota(keys.begin(), keys.end(), 0);
    std::swap(keys[0], keys[query]);
    // Partial Fisher-Yates over the rest picks distinct distractors.
    const int n_facts = cfg.distractors_per_prompt + 1;
    for (int f = 1; f < n_facts; ++f) {
      const auto j = rng.uniform_int(f, cfg.n_keys - 1);
      std::swap(keys[f], keys[j]);
    }
    std::vector<int> fact_keys(keys.begin(), keys.begin() + n_facts);
    rng.shuffle(fact_keys.begin(), fact_keys.end());

    std::string prompt = "query k" + std::to_string(query) + " ; facts :";
    for (int key : fact_keys) prompt += " k" + std::to_string(key) + " = " + values[key];
    out.push_back(Example{i, std::move(prompt), values[query]});
  }
  return out;
}

Splits split(std::span<const Example> dataset, const std::array<double, 3>& ratios,
             std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5B117));
  rng.shuffle(order.begin(), order.end());
  const auto n = static_cast<double>(dataset.size());
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
  const auto n_valid =
      std::min(dataset.size() - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));
  Splits s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Example& ex = dataset[order[i]];
    if (i < n_train) {
      s.train.push_back(ex);
    } else if (i < n_train + n_valid) {
      s.valid.push_back(ex);
    } else {
      s.test.push_back(ex);
    }
  }
  return s;
}

void write_dataset(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& ex : examples) {
    out << Json{{"id", ex.id}, {"prompt", ex.prompt}, {"answer", ex.answer}}.dump() << '\n';
  }
}

std::vector<Example> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path.string());
  std::vector<Example> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = Json::parse(line);
      out.push_back(Example{j.at("id").get<std::int64_t>(), j.at("prompt").get<std::string>(),
                            j.at("answer").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cagsr::data
