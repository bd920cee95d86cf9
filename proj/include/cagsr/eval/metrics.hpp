#pragma once

#include <span>

#include "cagsr/data/vocab.hpp"
#include "cagsr/model/transformer.hpp"
#include "cagsr/reward/reward.hpp"

namespace cagsr::eval {

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

std::size_t lcs_length(std::span<const int> a, std::span<const int> b);

// LCS-based ROUGE-L; all zeros when either side is empty.
RougeL rouge_l(std::span<const int> hypothesis, std::span<const int> reference);

// Fraction of distinct salient prompt tokens that occur anywhere in the response.
double relevance_proxy(std::span<const int> prompt, std::span<const int> response,
                       const reward::SalientSet& salient);

// exp(mean NLL) over answer+EOS tokens, teacher forced.
double perplexity(const model::PolicyModel& model, std::span<const data::TokenizedExample> examples);

}  // namespace cagsr::eval
