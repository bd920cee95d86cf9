#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cagsr/autodiff/adam.hpp"
#include "cagsr/data/vocab.hpp"
#include "cagsr/model/transformer.hpp"

namespace cagsr::data {

struct PretrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;  // mean token NLL over the epoch's batches
  double valid_loss = 0.0;  // mean token NLL on the validation split
};

// Teacher-forced targets: the answer followed by EOS.
std::vector<int> answer_targets(const TokenizedExample& ex);

// Mean per-token NLL of answer+EOS, teacher forced, no gradients.
double mean_token_nll(const model::PolicyModel& model, std::span<const TokenizedExample> examples);

// Supervised cross-entropy training of the policy (value head untouched).
// Throws std::runtime_error if the loss becomes non-finite.
std::vector<EpochReport> pretrain_supervised(
    model::PolicyModel& model, std::span<const TokenizedExample> train,
    std::span<const TokenizedExample> valid, const PretrainOptions& options,
    const std::function<void(const EpochReport&)>& on_epoch = {});

}  // namespace cagsr::data
