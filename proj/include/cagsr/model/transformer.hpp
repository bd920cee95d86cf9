#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cagsr/autodiff/tape.hpp"
#include "cagsr/model/config.hpp"
#include "cagsr/model/sampling.hpp"
#include "cagsr/model/trace.hpp"

namespace cagsr::model {

template <typename T>
struct AttentionWeights {
  ad::BasicTensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct EncoderLayer {
  ad::BasicTensor<T> ln1_g, ln1_b;
  AttentionWeights<T> self_attn;
  ad::BasicTensor<T> ln2_g, ln2_b;
  ad::BasicTensor<T> ff_w1, ff_b1, ff_w2, ff_b2;
};

template <typename T>
struct DecoderLayer {
  ad::BasicTensor<T> ln1_g, ln1_b;
  AttentionWeights<T> self_attn;
  ad::BasicTensor<T> ln2_g, ln2_b;
  AttentionWeights<T> cross_attn;
  ad::BasicTensor<T> ln3_g, ln3_b;
  ad::BasicTensor<T> ff_w1, ff_b1, ff_w2, ff_b2;
};

// Encoder states plus each decoder layer's cross-attention keys/values, which
// depend only on the prompt and are reused across decoding steps.
template <typename T>
struct EncoderOutput {
  std::vector<int> prompt;
  ad::BasicTensor<T> states;                 // |x| x d_model
  std::vector<ad::BasicTensor<T>> cross_k;   // per decoder layer, |x| x d_model
  std::vector<ad::BasicTensor<T>> cross_v;
};

template <typename T>
struct DecoderOutput {
  ad::BasicTensor<T> logits;  // decoder positions x vocab
  // Aggregated cross-attention per traced layer (positions x |x|); values
  // only, not part of the gradient graph.
  std::vector<std::vector<T>> traced_attention;
};

template <typename T>
struct StepOutput {
  std::vector<T> logits;                 // vocab_size
  std::vector<std::vector<T>> attention;  // trace_layers rows of |x|
};

// Encoder-decoder transformer policy pi_theta(y | x) with a scalar value
// head V(x) on the mean-pooled encoder output. Pre-LN blocks, learned
// absolute positions, GELU feed-forward.
template <typename T>
class Transformer {
 public:
  using Tensor = ad::BasicTensor<T>;
  using Tape = ad::BasicTape<T>;

  Transformer(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Named parameters in a stable order (checkpoint manifest order).
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  // Everything except the value head.
  std::vector<Tensor> policy_parameters() const;
  std::vector<Tensor> value_parameters() const;
  Tensor parameter(const std::string& name) const;

  // Deep copy of all parameter values.
  Transformer clone() const;
  void copy_parameters_from(const Transformer& other);

  // Zeroes the output projection (uniform next-token distribution).
  void zero_output_projection();

  EncoderOutput<T> encode(Tape& tape, std::span<const int> prompt) const;
  // Runs the decoder over `decoder_input` (BOS first) in one teacher-forced
  // pass. When `capture` is set, fills traced_attention.
  DecoderOutput<T> decode(Tape& tape, const EncoderOutput<T>& enc,
                          std::span<const int> decoder_input, bool capture) const;

  // Next-token logits after `prefix` (response tokens so far, without BOS)
  // and the traced cross-attention rows for that step.
  StepOutput<T> decode_step(const EncoderOutput<T>& enc, std::span<const int> prefix) const;
  StepOutput<T> decode_step(std::span<const int> prompt, std::span<const int> prefix) const;

  // Samples `n_candidates` responses. Candidate c draws from its own stream
  // seeded by (sampling.seed, c).
  std::vector<Candidate> generate(std::span<const int> prompt, const SamplingConfig& sampling,
                                  int n_candidates) const;
  std::vector<Candidate> generate(const EncoderOutput<T>& enc, const SamplingConfig& sampling,
                                  int n_candidates) const;

  // Per-token log pi(y_t | x, y_<t), teacher forced; shape [|y|].
  Tensor log_prob(Tape& tape, const EncoderOutput<T>& enc, std::span<const int> response) const;
  std::vector<T> log_prob(std::span<const int> prompt, std::span<const int> response) const;

  // V(x) as a scalar tensor.
  Tensor value(Tape& tape, const EncoderOutput<T>& enc) const;
  T value_estimate(std::span<const int> prompt) const;

 private:
  Tensor& add_param(const std::string& name, ad::Shape shape);
  void init_parameters(std::uint64_t seed);
  Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) const;
  Tensor attention(Tape& tape, const AttentionWeights<T>& w, const Tensor& q_in,
                   const Tensor& k, const Tensor& v, bool causal,
                   std::vector<Tensor>* head_probs) const;
  Tensor feed_forward(Tape& tape, const Tensor& x, const Tensor& w1, const Tensor& b1,
                      const Tensor& w2, const Tensor& b2) const;
  std::vector<T> aggregate_heads(const std::vector<Tensor>& head_probs) const;
  void bind_parameters();

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tensor tok_emb_, enc_pos_, dec_pos_;
  std::vector<EncoderLayer<T>> encoder_;
  Tensor enc_ln_g_, enc_ln_b_;
  std::vector<DecoderLayer<T>> decoder_;
  Tensor dec_ln_g_, dec_ln_b_;
  Tensor out_w_, out_b_;
  Tensor v_w1_, v_b1_, v_w2_, v_b2_;
};

using PolicyModel = Transformer<float>;

}  // namespace cagsr::model
