#include "cagsr/model/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace cagsr::model {

void SamplingConfig::validate() const {
  if (temperature < 0.0) throw ConfigError("sampling.temperature must be >= 0");
  if (strategy == SamplingStrategy::kNucleus && (top_p <= 0.0 || top_p > 1.0)) {
    throw ConfigError("sampling.top_p must be in (0, 1]");
  }
  if (min_response_len < 0) throw ConfigError("sampling.min_response_len must be >= 0");
}

Json to_json(const SamplingConfig& c) {
  return Json{{"strategy", c.strategy == SamplingStrategy::kTopK ? "top_k" : "nucleus"},
              {"top_k", c.top_k},
              {"top_p", c.top_p},
              {"temperature", c.temperature},
              {"min_response_len", c.min_response_len}};
}

SamplingConfig sampling_config_from_json(const Json& j, const std::string& path) {
  SamplingConfig c;
  StrictReader r(j, path);
  std::string strategy = "nucleus";
  r.read("strategy", strategy);
  if (strategy == "top_k") {
    c.strategy = SamplingStrategy::kTopK;
  } else if (strategy == "nucleus") {
    c.strategy = SamplingStrategy::kNucleus;
  } else {
    throw ConfigError(r.child_path("strategy") + " must be \"top_k\" or \"nucleus\"");
  }
  r.read("top_k", c.top_k);
  r.read("top_p", c.top_p);
  r.read("temperature", c.temperature);
  r.read("min_response_len", c.min_response_len);
  r.finish();
  c.validate();
  return c;
}

int argmax(std::span<const float> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

int sample_token(std::span<const float> logits, const SamplingConfig& cfg, Rng& rng) {
  if (cfg.is_greedy()) return argmax(logits);

  const std::size_t v = logits.size();
  std::vector<int> order(v);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits[a] > logits[b]; });

  std::size_t keep = v;
  if (cfg.strategy == SamplingStrategy::kTopK && cfg.top_k > 0) {
    keep = std::min<std::size_t>(keep, static_cast<std::size_t>(cfg.top_k));
  }

  const double mx = logits[order[0]];
  std::vector<double> p(keep);
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    p[i] = std::exp((static_cast<double>(logits[order[i]]) - mx) / cfg.temperature);
    total += p[i];
  }

  if (cfg.strategy == SamplingStrategy::kNucleus && cfg.top_p < 1.0) {
    double cum = 0.0;
    std::size_t cut = keep;
    for (std::size_t i = 0; i < keep; ++i) {
      cum += p[i] / total;
      if (cum >= cfg.top_p) {
        cut = i + 1;
        break;
      }
    }
    keep = cut;
    total = std::accumulate(p.begin(), p.begin() + keep, 0.0);
  }

  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    cum += p[i];
    if (u < cum) return order[i];
  }
  return order[keep - 1];
}

}  // namespace cagsr::model
