#include "cagsr/data/stats.hpp"

#include <set>

#include "cagsr/common/error.hpp"

namespace cagsr::data {

CorpusStats corpus_stats(std::span<const std::vector<int>> prompts) {
  if (prompts.empty()) throw InputError("corpus_stats: no documents");
  CorpusStats stats;
  stats.num_documents = static_cast<std::int64_t>(prompts.size());
  for (const auto& doc : prompts) {
    for (int tok : std::set<int>(doc.begin(), doc.end())) ++stats.df[tok];
  }
  return stats;
}

}  // namespace cagsr::data
