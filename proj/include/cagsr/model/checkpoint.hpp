#pragma once

#include <filesystem>
#include <optional>

#include "cagsr/autodiff/adam.hpp"
#include "cagsr/autodiff/archive.hpp"
#include "cagsr/model/transformer.hpp"

namespace cagsr::model {

// Checkpoints are archives whose metadata carries
//   {"kind": "cagsr_checkpoint", "dtype", "model_config", "adam"?, "extra"?}
// and whose arrays are "param/<name>" in named_parameters() order, followed
// (when optimizer state is saved) by "adam.m/<name>" and "adam.v/<name>".
template <typename T>
ad::Archive make_checkpoint(const Transformer<T>& model, const ad::AdamState<T>* adam = nullptr,
                            const Json& extra = Json::object());

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Transformer<T>& model,
                     const ad::AdamState<T>* adam = nullptr, const Json& extra = Json::object());

ModelConfig checkpoint_model_config(const ad::Archive& ar);

template <typename T>
Transformer<T> model_from_checkpoint(const ad::Archive& ar);

// Overwrites the parameters of `model` (config must match).
template <typename T>
void load_parameters(const ad::Archive& ar, Transformer<T>& model);

// Adam state aligned with model.parameters(), if the checkpoint has one.
template <typename T>
std::optional<ad::AdamState<T>> adam_state_from_checkpoint(const ad::Archive& ar,
                                                           const Transformer<T>& model);

}  // namespace cagsr::model
