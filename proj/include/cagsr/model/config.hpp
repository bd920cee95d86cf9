#pragma once

#include "cagsr/common/json_util.hpp"

namespace cagsr::model {

struct ModelConfig {
  int vocab_size = 128;
  int d_model = 64;
  int n_heads = 4;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int d_ff = 128;
  int max_prompt_len = 32;
  int max_response_len = 16;
  // Number of final decoder layers whose cross-attention is traced.
  int trace_layers = 1;
  // -1 averages heads; otherwise trace that single head.
  int trace_head = -1;
  int value_hidden = 32;
  // When false the value loss does not back-propagate into the encoder.
  bool value_trunk_grad = true;

  int head_dim() const { return d_model / n_heads; }
  // Throws ConfigError on violated invariants.
  void validate() const;
};

Json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");

}  // namespace cagsr::model
