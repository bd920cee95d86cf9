#include "cagsr/data/pretrain.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cagsr/common/rng.hpp"
#include "cagsr/common/tokens.hpp"

namespace cagsr::data {

std::vector<int> answer_targets(const TokenizedExample& ex) {
  std::vector<int> y = ex.answer;
  y.push_back(kEosId);
  return y;
}

double mean_token_nll(const model::PolicyModel& model, std::span<const TokenizedExample> examples) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    const auto lp = model.log_prob(ex.prompt, answer_targets(ex));
    for (float v : lp) nll -= v;
    tokens += lp.size();
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

std::vector<EpochReport> pretrain_supervised(
    model::PolicyModel& model, std::span<const TokenizedExample> train,
    std::span<const TokenizedExample> valid, const PretrainOptions& options,
    const std::function<void(const EpochReport&)>& on_epoch) {
  std::vector<EpochReport> reports;
  if (options.epochs <= 0 || train.empty()) return reports;

  ad::Adam optimizer(model.policy_parameters(), ad::AdamOptions{options.lr});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(std::max(1, options.batch_size));

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng rng(derive_seed(options.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      model::PolicyModel::Tape tape;
      std::vector<ad::Tensor> token_lps;
      std::size_t n_tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train[order[i]];
        const auto enc = model.encode(tape, ex.prompt);
        token_lps.push_back(model.log_prob(tape, enc, answer_targets(ex)));
        n_tokens += token_lps.back().numel();
      }
      ad::Tensor loss = tape.scale(tape.sum(tape.concat(token_lps)),
                                   -1.0f / static_cast<float>(n_tokens));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting " + std::to_string(start));
      }
      tape.backward(loss);
      optimizer.step();
      epoch_nll += value * static_cast<double>(n_tokens);
      epoch_tokens += n_tokens;
    }
    EpochReport report{epoch, epoch_nll / static_cast<double>(epoch_tokens),
                       valid.empty() ? 0.0 : mean_token_nll(model, valid)};
    reports.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return reports;
}

}  // namespace cagsr::data
