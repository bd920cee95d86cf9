#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cagsr/data/corpus.hpp"

namespace cagsr::data {

// Closed whitespace vocabulary. Ids 0-3 are <pad>, <bos>, <eos>, <unk>;
// the remaining tokens follow in sorted order.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // includes specials

  static Vocabulary from_examples(std::span<const Example> examples);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_whitespace(std::string_view text);
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize(std::span<const int> ids, const Vocabulary& vocab);

struct TokenizedExample {
  std::int64_t id = 0;
  std::vector<int> prompt;
  std::vector<int> answer;
};

std::vector<TokenizedExample> tokenize_examples(std::span<const Example> examples,
                                                const Vocabulary& vocab);
std::vector<std::vector<int>> prompts_of(std::span<const TokenizedExample> examples);

}  // namespace cagsr::data
