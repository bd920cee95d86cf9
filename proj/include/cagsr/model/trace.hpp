#pragma once

#include <span>
#include <vector>

namespace cagsr::model {

// Cross-attention captured while decoding one response. For every decoding
// step t and every traced layer l there is one distribution over the prompt
// positions (heads already aggregated). Rows are stored step-major:
// row index = t * num_layers + l.
struct AttentionTrace {
  int prompt_len = 0;
  int response_len = 0;
  int num_layers = 0;
  std::vector<int> layer_indices;  // decoder layer index of each traced layer
  std::vector<float> rows;         // (response_len * num_layers) x prompt_len

  std::span<const float> row(int step, int layer) const {
    const auto offset = static_cast<std::size_t>((step * num_layers + layer) * prompt_len);
    return {rows.data() + offset, static_cast<std::size_t>(prompt_len)};
  }
  int row_count() const { return response_len * num_layers; }

  // ContractError when the row buffer does not match the header.
  void validate() const;
  // The first `steps` decoding steps.
  AttentionTrace prefix(int steps) const;
};

struct Candidate {
  std::vector<int> token_ids;       // sampled tokens, including a final EOS if one was drawn
  std::vector<float> logprob_old;   // log pi(y_t | x, y_<t) at sampling time
  AttentionTrace trace;
  bool ended_with_eos = false;

  // Tokens before the terminating EOS.
  std::span<const int> content() const {
    return {token_ids.data(), token_ids.size() - (ended_with_eos ? 1 : 0)};
  }
};

}  // namespace cagsr::model
