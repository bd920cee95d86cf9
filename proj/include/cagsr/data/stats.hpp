#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace cagsr::data {

// Document frequencies over training prompts. Each prompt is one document
// and each token id is counted at most once per document.
struct CorpusStats {
  std::int64_t num_documents = 0;
  std::map<int, std::int64_t> df;

  // Tokens never seen in training count as df = 1 (maximum idf).
  std::int64_t document_frequency(int token) const {
    auto it = df.find(token);
    return it == df.end() ? 1 : it->second;
  }
  double idf(int token) const {
    return std::log(static_cast<double>(num_documents) /
                    static_cast<double>(document_frequency(token)));
  }
};

CorpusStats corpus_stats(std::span<const std::vector<int>> prompts);

}  // namespace cagsr::data
