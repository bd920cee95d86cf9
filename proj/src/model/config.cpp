#include "cagsr/model/config.hpp"

namespace cagsr::model {

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(std::string("model: ") + msg);
  };
  require(vocab_size > 4, "vocab_size must exceed the 4 special tokens");
  require(d_model > 0 && n_heads > 0, "d_model and n_heads must be positive");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(n_encoder_layers >= 1 && n_decoder_layers >= 1, "need at least one encoder and decoder layer");
  require(d_ff > 0 && value_hidden > 0, "d_ff and value_hidden must be positive");
  require(max_prompt_len >= 1 && max_response_len >= 1, "max lengths must be positive");
  require(trace_layers >= 1 && trace_layers <= n_decoder_layers,
          "trace_layers must be in [1, n_decoder_layers]");
  require(trace_head >= -1 && trace_head < n_heads, "trace_head must be -1 or a valid head index");
}

Json to_json(const ModelConfig& c) {
  return Json{{"vocab_size", c.vocab_size},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_encoder_layers", c.n_encoder_layers},
              {"n_decoder_layers", c.n_decoder_layers},
              {"d_ff", c.d_ff},
              {"max_prompt_len", c.max_prompt_len},
              {"max_response_len", c.max_response_len},
              {"trace_layers", c.trace_layers},
              {"trace_head", c.trace_head},
              {"value_hidden", c.value_hidden},
              {"value_trunk_grad", c.value_trunk_grad}};
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  ModelConfig c;
  StrictReader r(j, path);
  r.read("vocab_size", c.vocab_size);
  r.read("d_model", c.d_model);
  r.read("n_heads", c.n_heads);
  r.read("n_encoder_layers", c.n_encoder_layers);
  r.read("n_decoder_layers", c.n_decoder_layers);
  r.read("d_ff", c.d_ff);
  r.read("max_prompt_len", c.max_prompt_len);
  r.read("max_response_len", c.max_response_len);
  r.read("trace_layers", c.trace_layers);
  r.read("trace_head", c.trace_head);
  r.read("value_hidden", c.value_hidden);
  r.read("value_trunk_grad", c.value_trunk_grad);
  r.finish();
  return c;
}

}  // namespace cagsr::model
