#include "cagsr/data/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "cagsr/common/error.hpp"
#include "cagsr/common/tokens.hpp"

namespace cagsr::data {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecials.size() ||
      !std::equal(kSpecials.begin(), kSpecials.end(), tokens_.begin())) {
    throw InputError("vocabulary must start with <pad> <bos> <eos> <unk>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw InputError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::from_examples(std::span<const Example> examples) {
  std::set<std::string> seen;
  for (const auto& ex : examples) {
    for (auto& t : split_whitespace(ex.prompt)) seen.insert(t);
    for (auto& t : split_whitespace(ex.answer)) seen.insert(t);
  }
  std::vector<std::string> tokens = kSpecials;
  for (const auto& t : seen)
    if (std::find(kSpecials.begin(), kSpecials.end(), t) == kSpecials.end()) tokens.push_back(t);
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw InputError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& t : split_whitespace(text)) ids.push_back(vocab.id(t));
  return ids;
}

std::string detokenize(std::span<const int> ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

std::vector<TokenizedExample> tokenize_examples(std::span<const Example> examples,
                                                const Vocabulary& vocab) {
  std::vector<TokenizedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples)
    out.push_back({ex.id, tokenize(ex.prompt, vocab), tokenize(ex.answer, vocab)});
  return out;
}

std::vector<std::vector<int>> prompts_of(std::span<const TokenizedExample> examples) {
  std::vector<std::vector<int>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.prompt);
  return out;
}

}  // namespace cagsr::data
