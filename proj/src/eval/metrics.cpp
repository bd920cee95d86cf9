#include "cagsr/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cagsr/common/error.hpp"
#include "cagsr/data/pretrain.hpp"

namespace cagsr::eval {

std::size_t lcs_length(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeL rouge_l(std::span<const int> hypothesis, std::span<const int> reference) {
  RougeL r;
  if (hypothesis.empty() || reference.empty()) return r;
  const auto lcs = static_cast<double>(lcs_length(hypothesis, reference));
  if (lcs == 0.0) return r;
  r.precision = lcs / static_cast<double>(hypothesis.size());
  r.recall = lcs / static_cast<double>(reference.size());
  r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double relevance_proxy(std::span<const int> prompt, std::span<const int> response,
                       const reward::SalientSet& salient) {
  if (salient.indices.empty()) throw ContractError("relevance_proxy: salient set is empty");
  std::set<int> types;
  for (int j : salient.indices) types.insert(prompt[j]);
  const std::set<int> said(response.begin(), response.end());
  std::size_t hit = 0;
  for (int t : types) hit += said.count(t);
  return static_cast<double>(hit) / static_cast<double>(types.size());
}

double perplexity(const model::PolicyModel& model, std::span<const data::TokenizedExample> examples) {
  return std::exp(data::mean_token_nll(model, examples));
}

}  // namespace cagsr::eval
