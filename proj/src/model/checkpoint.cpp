#include "cagsr/model/checkpoint.hpp"

#include <type_traits>

#include "cagsr/common/error.hpp"

namespace cagsr::model {

namespace {

template <typename T>
constexpr const char* dtype_tag() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

}  // namespace

template <typename T>
ad::Archive make_checkpoint(const Transformer<T>& model, const ad::AdamState<T>* adam,
                            const Json& extra) {
  ad::Archive ar;
  ar.metadata["kind"] = "cagsr_checkpoint";
  ar.metadata["dtype"] = dtype_tag<T>();
  ar.metadata["model_config"] = to_json(model.config());
  const auto& params = model.named_parameters();
  for (const auto& [name, t] : params) ar.add("param/" + name, t.shape(), t.data());
  if (adam) {
    if (adam->m.size() != params.size()) {
      throw ContractError("checkpoint: optimizer state does not cover all parameters");
    }
    ar.metadata["adam"] = {{"step", adam->step},
                           {"lr", adam->options.lr},
                           {"beta1", adam->options.beta1},
                           {"beta2", adam->options.beta2},
                           {"eps", adam->options.eps}};
    for (std::size_t i = 0; i < params.size(); ++i)
      ar.add("adam.m/" + params[i].first, params[i].second.shape(), std::span<const T>(adam->m[i]));
    for (std::size_t i = 0; i < params.size(); ++i)
      ar.add("adam.v/" + params[i].first, params[i].second.shape(), std::span<const T>(adam->v[i]));
  }
  if (!extra.empty()) ar.metadata["extra"] = extra;
  return ar;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Transformer<T>& model,
                     const ad::AdamState<T>* adam, const Json& extra) {
  make_checkpoint(model, adam, extra).save(path);
}

ModelConfig checkpoint_model_config(const ad::Archive& ar) {
  if (ar.metadata.value("kind", "") != "cagsr_checkpoint") {
    throw InputError("archive is not a model checkpoint");
  }
  return model_config_from_json(ar.metadata.at("model_config"), "model_config");
}

template <typename T>
void load_parameters(const ad::Archive& ar, Transformer<T>& model) {
  for (const auto& [name, t] : model.named_parameters()) {
    const auto& e = ar.entry("param/" + name);
    if (e.shape != t.shape()) {
      throw InputError("checkpoint: parameter '" + name + "' has shape " + ad::shape_str(e.shape) +
                       ", model expects " + ad::shape_str(t.shape()));
    }
    auto values = ar.get_real<T>("param/" + name);
    auto dst = ad::BasicTensor<T>(t).data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

template <typename T>
Transformer<T> model_from_checkpoint(const ad::Archive& ar) {
  Transformer<T> model(checkpoint_model_config(ar), 0);
  load_parameters(ar, model);
  return model;
}

template <typename T>
std::optional<ad::AdamState<T>> adam_state_from_checkpoint(const ad::Archive& ar,
                                                           const Transformer<T>& model) {
  if (!ar.metadata.contains("adam")) return std::nullopt;
  const auto& meta = ar.metadata.at("adam");
  ad::AdamState<T> state;
  state.step = meta.at("step").get<std::int64_t>();
  state.options.lr = meta.at("lr").get<double>();
  state.options.beta1 = meta.at("beta1").get<double>();
  state.options.beta2 = meta.at("beta2").get<double>();
  state.options.eps = meta.at("eps").get<double>();
  for (const auto& [name, t] : model.named_parameters()) {
    state.m.push_back(ar.get_real<T>("adam.m/" + name));
    state.v.push_back(ar.get_real<T>("adam.v/" + name));
  }
  return state;
}

template ad::Archive make_checkpoint<float>(const Transformer<float>&, const ad::AdamState<float>*, const Json&);
template ad::Archive make_checkpoint<double>(const Transformer<double>&, const ad::AdamState<double>*, const Json&);
template void save_checkpoint<float>(const std::filesystem::path&, const Transformer<float>&, const ad::AdamState<float>*, const Json&);
template void save_checkpoint<double>(const std::filesystem::path&, const Transformer<double>&, const ad::AdamState<double>*, const Json&);
template Transformer<float> model_from_checkpoint<float>(const ad::Archive&);
template Transformer<double> model_from_checkpoint<double>(const ad::Archive&);
template void load_parameters<float>(const ad::Archive&, Transformer<float>&);
template void load_parameters<double>(const ad::Archive&, Transformer<double>&);
template std::optional<ad::AdamState<float>> adam_state_from_checkpoint<float>(const ad::Archive&, const Transformer<float>&);
template std::optional<ad::AdamState<double>> adam_state_from_checkpoint<double>(const ad::Archive&, const Transformer<double>&);

}  // namespace cagsr::model
