#include "cagsr/model/transformer.hpp"

#include <cmath>
#include <limits>

#include "cagsr/autodiff/kernels.hpp"
#include "cagsr/common/error.hpp"
#include "cagsr/common/rng.hpp"
#include "cagsr/common/tokens.hpp"

namespace cagsr::model {

using ad::Shape;

template <typename T>
typename Transformer<T>::Tensor& Transformer<T>::add_param(const std::string& name,
                                                           Shape shape) {
  params_.emplace_back(name, Tensor::zeros(std::move(shape), true));
  return params_.back().second;
}

template <typename T>
Transformer<T>::Transformer(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto V = static_cast<std::size_t>(config_.vocab_size);
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ff = static_cast<std::size_t>(config_.d_ff);
  const auto vh = static_cast<std::size_t>(config_.value_hidden);

  params_.reserve(64);
  tok_emb_ = add_param("tok_emb", {V, d});
  enc_pos_ = add_param("enc_pos", {static_cast<std::size_t>(config_.max_prompt_len), d});
  dec_pos_ = add_param("dec_pos", {static_cast<std::size_t>(config_.max_response_len), d});

  auto make_attn = [&](const std::string& p) {
    AttentionWeights<T> w;
    w.wq = add_param(p + ".wq", {d, d});
    w.bq = add_param(p + ".bq", {d});
    w.wk = add_param(p + ".wk", {d, d});
    w.bk = add_param(p + ".bk", {d});
    w.wv = add_param(p + ".wv", {d, d});
    w.bv = add_param(p + ".bv", {d});
    w.wo = add_param(p + ".wo", {d, d});
    w.bo = add_param(p + ".bo", {d});
    return w;
  };

  for (int l = 0; l < config_.n_encoder_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayer<T> layer;
    layer.ln1_g = add_param(p + ".ln1.g", {d});
    layer.ln1_b = add_param(p + ".ln1.b", {d});
    layer.self_attn = make_attn(p + ".self");
    layer.ln2_g = add_param(p + ".ln2.g", {d});
    layer.ln2_b = add_param(p + ".ln2.b", {d});
    layer.ff_w1 = add_param(p + ".ff.w1", {d, ff});
    layer.ff_b1 = add_param(p + ".ff.b1", {ff});
    layer.ff_w2 = add_param(p + ".ff.w2", {ff, d});
    layer.ff_b2 = add_param(p + ".ff.b2", {d});
    encoder_.push_back(std::move(layer));
  }
  enc_ln_g_ = add_param("enc.ln.g", {d});
  enc_ln_b_ = add_param("enc.ln.b", {d});

  for (int l = 0; l < config_.n_decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayer<T> layer;
    layer.ln1_g = add_param(p + ".ln1.g", {d});
    layer.ln1_b = add_param(p + ".ln1.b", {d});
    layer.self_attn = make_attn(p + ".self");
    layer.ln2_g = add_param(p + ".ln2.g", {d});
    layer.ln2_b = add_param(p + ".ln2.b", {d});
    layer.cross_attn = make_attn(p + ".cross");
    layer.ln3_g = add_param(p + ".ln3.g", {d});
    layer.ln3_b = add_param(p + ".ln3.b", {d});
    layer.ff_w1 = add_param(p + ".ff.w1", {d, ff});
    layer.ff_b1 = add_param(p + ".ff.b1", {ff});
    layer.ff_w2 = add_param(p + ".ff.w2", {ff, d});
    layer.ff_b2 = add_param(p + ".ff.b2", {d});
    decoder_.push_back(std::move(layer));
  }
  dec_ln_g_ = add_param("dec.ln.g", {d});
  dec_ln_b_ = add_param("dec.ln.b", {d});
  out_w_ = add_param("out.w", {d, V});
  out_b_ = add_param("out.b", {V});

  v_w1_ = add_param("value.w1", {d, vh});
  v_b1_ = add_param("value.b1", {vh});
  v_w2_ = add_param("value.w2", {vh, 1});
  v_b2_ = add_param("value.b2", {1});

  init_parameters(seed);
}

template <typename T>
void Transformer<T>::init_parameters(std::uint64_t seed) {
  Rng rng(seed);
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto& [name, t] : params_) {
    auto w = t.data();
    if (name == "value.w2" || name == "value.b2") continue;  // V(x) = 0 at init
    if (ends_with(name, ".g")) {
      std::fill(w.begin(), w.end(), T(1));
    } else if (name == "tok_emb" || name == "enc_pos" || name == "dec_pos") {
      for (auto& x : w) x = static_cast<T>(0.1 * rng.normal());
    } else if (t.dim() == 2) {
      const double std = 1.0 / std::sqrt(static_cast<double>(t.size(0)));
      for (auto& x : w) x = static_cast<T>(std * rng.normal());
    }
    // biases and LN betas stay zero
  }
}

template <typename T>
std::vector<typename Transformer<T>::Tensor> Transformer<T>::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

template <typename T>
std::vector<typename Transformer<T>::Tensor> Transformer<T>::policy_parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_)
    if (name.rfind("value.", 0) != 0) out.push_back(t);
  return out;
}

template <typename T>
std::vector<typename Transformer<T>::Tensor> Transformer<T>::value_parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_)
    if (name.rfind("value.", 0) == 0) out.push_back(t);
  return out;
}

template <typename T>
typename Transformer<T>::Tensor Transformer<T>::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw InputError("model: no parameter named '" + name + "'");
}

template <typename T>
Transformer<T> Transformer<T>::clone() const {
  Transformer copy(config_, 0);
  copy.copy_parameters_from(*this);
  return copy;
}

template <typename T>
void Transformer<T>::copy_parameters_from(const Transformer& other) {
  if (other.params_.size() != params_.size()) {
    throw DimensionError("model: parameter count mismatch in copy");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i].second.copy_from(other.params_[i].second);
  }
}

template <typename T>
void Transformer<T>::zero_output_projection() {
  for (auto* t : {&out_w_, &out_b_}) {
    auto w = t->data();
    std::fill(w.begin(), w.end(), T(0));
  }
}

template <typename T>
typename Transformer<T>::Tensor Transformer<T>::linear(Tape& tape, const Tensor& x,
                                                       const Tensor& w, const Tensor& b) const {
  return tape.add_bias(tape.matmul(x, w), b);
}

template <typename T>
typename Transformer<T>::Tensor Transformer<T>::attention(Tape& tape, const AttentionWeights<T>& w,
                                                          const Tensor& q_in, const Tensor& k,
                                                          const Tensor& v, bool causal,
                                                          std::vector<Tensor>* head_probs) const {
  const Tensor q = linear(tape, q_in, w.wq, w.bq);
  const auto dh = static_cast<std::size_t>(config_.head_dim());
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Tensor> heads;
  heads.reserve(config_.n_heads);
  for (int h = 0; h < config_.n_heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dh;
    Tensor qh = tape.slice_cols(q, off, dh);
    Tensor kh = tape.slice_cols(k, off, dh);
    Tensor vh = tape.slice_cols(v, off, dh);
    Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    if (causal) scores = tape.mask_future(scores);
    Tensor probs = tape.softmax(scores, 1);
    if (head_probs) head_probs->push_back(probs);
    heads.push_back(tape.matmul(probs, vh));
  }
  return linear(tape, tape.concat_cols(heads), w.wo, w.bo);
}

template <typename T>
typename Transformer<T>::Tensor Transformer<T>::feed_forward(Tape& tape, const Tensor& x,
                                                             const Tensor& w1, const Tensor& b1,
                                                             const Tensor& w2,
                                                             const Tensor& b2) const {
  return linear(tape, tape.gelu(linear(tape, x, w1, b1)), w2, b2);
}

template <typename T>
std::vector<T> Transformer<T>::aggregate_heads(const std::vector<Tensor>& head_probs) const {
  if (config_.trace_head >= 0) {
    const auto& p = head_probs.at(config_.trace_head);
    return std::vector<T>(p.data().begin(), p.data().end());
  }
  std::vector<T> mean(head_probs.front().numel(), T(0));
  for (const auto& p : head_probs)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
  const T inv = T(1) / static_cast<T>(head_probs.size());
  for (auto& x : mean) x *= inv;
  return mean;
}

namespace {

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  return ids;
}

}  // namespace

template <typename T>
EncoderOutput<T> Transformer<T>::encode(Tape& tape, std::span<const int> prompt) const {
  if (prompt.empty() || prompt.size() > static_cast<std::size_t>(config_.max_prompt_len)) {
    throw InputError("encode: prompt length " + std::to_string(prompt.size()) +
                     " outside [1, " + std::to_string(config_.max_prompt_len) + "]");
  }
  const auto positions = iota_ids(prompt.size());
  Tensor x = tape.add(tape.embedding(tok_emb_, prompt), tape.embedding(enc_pos_, positions));
  for (const auto& layer : encoder_) {
    Tensor h = tape.layer_norm(x, layer.ln1_g, layer.ln1_b);
    Tensor k = linear(tape, h, layer.self_attn.wk, layer.self_attn.bk);
    Tensor v = linear(tape, h, layer.self_attn.wv, layer.self_attn.bv);
    x = tape.add(x, attention(tape, layer.self_attn, h, k, v, false, nullptr));
    h = tape.layer_norm(x, layer.ln2_g, layer.ln2_b);
    x = tape.add(x, feed_forward(tape, h, layer.ff_w1, layer.ff_b1, layer.ff_w2, layer.ff_b2));
  }
  EncoderOutput<T> out;
  out.prompt.assign(prompt.begin(), prompt.end());
  out.states = tape.layer_norm(x, enc_ln_g_, enc_ln_b_);
  for (const auto& layer : decoder_) {
    out.cross_k.push_back(linear(tape, out.states, layer.cross_attn.wk, layer.cross_attn.bk));
    out.cross_v.push_back(linear(tape, out.states, layer.cross_attn.wv, layer.cross_attn.bv));
  }
  return out;
}

template <typename T>
DecoderOutput<T> Transformer<T>::decode(Tape& tape, const EncoderOutput<T>& enc,
                                        std::span<const int> decoder_input, bool capture) const {
  if (decoder_input.empty() ||
      decoder_input.size() > static_cast<std::size_t>(config_.max_response_len)) {
    throw InputError("decode: decoder input length " + std::to_string(decoder_input.size()) +
                     " outside [1, " + std::to_string(config_.max_response_len) + "]");
  }
  const auto positions = iota_ids(decoder_input.size());
  Tensor x = tape.add(tape.embedding(tok_emb_, decoder_input), tape.embedding(dec_pos_, positions));
  DecoderOutput<T> out;
  const int first_traced = config_.n_decoder_layers - config_.trace_layers;
  for (int l = 0; l < config_.n_decoder_layers; ++l) {
    const auto& layer = decoder_[l];
    Tensor h = tape.layer_norm(x, layer.ln1_g, layer.ln1_b);
    Tensor k = linear(tape, h, layer.self_attn.wk, layer.self_attn.bk);
    Tensor v = linear(tape, h, layer.self_attn.wv, layer.self_attn.bv);
    x = tape.add(x, attention(tape, layer.self_attn, h, k, v, true, nullptr));

    h = tape.layer_norm(x, layer.ln2_g, layer.ln2_b);
    const bool traced = capture && l >= first_traced;
    std::vector<Tensor> head_probs;
    x = tape.add(x, attention(tape, layer.cross_attn, h, enc.cross_k[l], enc.cross_v[l], false,
                              traced ? &head_probs : nullptr));
    if (traced) out.traced_attention.push_back(aggregate_heads(head_probs));

    h = tape.layer_norm(x, layer.ln3_g, layer.ln3_b);
    x = tape.add(x, feed_forward(tape, h, layer.ff_w1, layer.ff_b1, layer.ff_w2, layer.ff_b2));
  }
  x = tape.layer_norm(x, dec_ln_g_, dec_ln_b_);
  out.logits = linear(tape, x, out_w_, out_b_);
  return out;
}

template <typename T>
StepOutput<T> Transformer<T>::decode_step(const EncoderOutput<T>& enc,
                                          std::span<const int> prefix) const {
  if (prefix.size() >= static_cast<std::size_t>(config_.max_response_len)) {
    throw InputError("decode_step: prefix length " + std::to_string(prefix.size()) +
                     " must be below max_response_len " +
                     std::to_string(config_.max_response_len));
  }
  std::vector<int> input;
  input.reserve(prefix.size() + 1);
  input.push_back(kBosId);
  input.insert(input.end(), prefix.begin(), prefix.end());

  Tape tape(Tape::Mode::kInference);
  DecoderOutput<T> dec = decode(tape, enc, input, true);
  const std::size_t m = input.size();
  const auto V = static_cast<std::size_t>(config_.vocab_size);
  const std::size_t n = enc.prompt.size();

  StepOutput<T> step;
  step.logits.assign(dec.logits.data().begin() + (m - 1) * V, dec.logits.data().begin() + m * V);
  for (const auto& rows : dec.traced_attention) {
    step.attention.emplace_back(rows.begin() + (m - 1) * n, rows.begin() + m * n);
  }
  return step;
}

template <typename T>
StepOutput<T> Transformer<T>::decode_step(std::span<const int> prompt,
                                          std::span<const int> prefix) const {
  Tape tape(Tape::Mode::kInference);
  return decode_step(encode(tape, prompt), prefix);
}

template <typename T>
std::vector<Candidate> Transformer<T>::generate(std::span<const int> prompt,
                                                const SamplingConfig& sampling,
                                                int n_candidates) const {
  Tape tape(Tape::Mode::kInference);
  return generate(encode(tape, prompt), sampling, n_candidates);
}

template <typename T>
std::vector<Candidate> Transformer<T>::generate(const EncoderOutput<T>& enc,
                                                const SamplingConfig& sampling,
                                                int n_candidates) const {
  if (n_candidates < 1) throw InputError("generate: n_candidates must be >= 1");
  const int prompt_len = static_cast<int>(enc.prompt.size());
  std::vector<int> layer_indices;
  for (int l = config_.n_decoder_layers - config_.trace_layers; l < config_.n_decoder_layers; ++l)
    layer_indices.push_back(l);

  std::vector<Candidate> out;
  out.reserve(n_candidates);
  for (int c = 0; c < n_candidates; ++c) {
    Rng rng(derive_seed(sampling.seed, static_cast<std::uint64_t>(c)));
    Candidate cand;
    cand.trace.prompt_len = prompt_len;
    cand.trace.num_layers = config_.trace_layers;
    cand.trace.layer_indices = layer_indices;
    while (cand.token_ids.size() < static_cast<std::size_t>(config_.max_response_len)) {
      StepOutput<T> step = decode_step(enc, cand.token_ids);
      std::vector<float> logits(step.logits.begin(), step.logits.end());
      if (cand.token_ids.size() < static_cast<std::size_t>(sampling.min_response_len)) {
        logits[kEosId] = -std::numeric_limits<float>::infinity();
      }
      const int tok = sample_token(logits, sampling, rng);
      const T lse = ad::kernels::log_sum_exp<T>(step.logits);
      cand.token_ids.push_back(tok);
      cand.logprob_old.push_back(static_cast<float>(step.logits[tok] - lse));
      for (const auto& row : step.attention)
        cand.trace.rows.insert(cand.trace.rows.end(), row.begin(), row.end());
      if (tok == kEosId) {
        cand.ended_with_eos = true;
        break;
      }
    }
    cand.trace.response_len = static_cast<int>(cand.token_ids.size());
    out.push_back(std::move(cand));
  }
  return out;
}

template <typename T>
typename Transformer<T>::Tensor Transformer<T>::log_prob(Tape& tape, const EncoderOutput<T>& enc,
                                                         std::span<const int> response) const {
  if (response.empty()) throw InputError("log_prob: response must be nonempty");
  for (int id : response) {
    if (id < 0 || id >= config_.vocab_size) {
      throw InputError("log_prob: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> input;
  input.reserve(response.size());
  input.push_back(kBosId);
  input.insert(input.end(), response.begin(), response.end() - 1);
  DecoderOutput<T> dec = decode(tape, enc, input, false);
  return tape.token_log_probs(dec.logits, response);
}

template <typename T>
std::vector<T> Transformer<T>::log_prob(std::span<const int> prompt,
                                        std::span<const int> response) const {
  Tape tape(Tape::Mode::kInference);
  Tensor lp = log_prob(tape, encode(tape, prompt), response);
  return std::vector<T>(lp.data().begin(), lp.data().end());
}

template <typename T>
typename Transformer<T>::Tensor Transformer<T>::value(Tape& tape, const EncoderOutput<T>& enc) const {
  Tensor pooled = tape.mean_rows(enc.states);
  if (!config_.value_trunk_grad) pooled = tape.detach(pooled);
  Tensor h = tape.gelu(linear(tape, pooled, v_w1_, v_b1_));
  return tape.reshape(linear(tape, h, v_w2_, v_b2_), {});
}

template <typename T>
T Transformer<T>::value_estimate(std::span<const int> prompt) const {
  Tape tape(Tape::Mode::kInference);
  return value(tape, encode(tape, prompt)).item();
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace cagsr::model
