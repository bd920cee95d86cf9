#pragma once

// Random gradient-check cases for every differentiable tape op, plus the
// end-to-end sequence log-prob of a tiny transformer.

#include <functional>
#include <string>
#include <vector>

#include "cagsr/model/transformer.hpp"
#include "gradcheck.hpp"

namespace cagsr::testing {

using InputGen = std::function<std::vector<GradInput>(Rng&)>;

struct OpCase {
  std::string name;
  InputGen inputs;
  std::function<GradCheck(const std::vector<GradInput>&, std::uint64_t, bool)> check;
};

template <typename Fn>
OpCase make_case(std::string name, InputGen gen, Fn fn) {
  return {std::move(name), std::move(gen),
          [fn](const std::vector<GradInput>& in, std::uint64_t seed, bool use_double) {
            return use_double ? check_gradients<double>(fn, in, seed) : check_gradients<float>(fn, in, seed);
          }};
}

inline std::size_t dim_in(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

inline std::vector<OpCase> op_cases() {
  std::vector<OpCase> c;
  auto matrix = [](std::size_t lo = 1) {
    return [lo](Rng& r) { return std::vector{random_input({dim_in(r, lo, 8), dim_in(r, lo, 8)}, r)}; };
  };
  auto pair_same = [](Rng& r) {
    const ad::Shape s{dim_in(r, 1, 8), dim_in(r, 1, 8)};
    return std::vector{random_input(s, r), random_input(s, r)};
  };

  c.push_back(make_case(
      "matmul",
      [](Rng& r) {
        const auto m = dim_in(r, 1, 8), k = dim_in(r, 1, 8), n = dim_in(r, 1, 8);
        return std::vector{random_input({m, k}, r), random_input({k, n}, r)};
      },
      [](auto& t, const auto& x) { return t.matmul(x[0], x[1]); }));
  c.push_back(make_case("transpose", matrix(), [](auto& t, const auto& x) { return t.transpose(x[0]); }));
  c.push_back(make_case("reshape", matrix(), [](auto& t, const auto& x) {
    return t.reshape(x[0], {x[0].numel()});
  }));
  c.push_back(make_case("slice_cols", matrix(2), [](auto& t, const auto& x) {
    return t.slice_cols(x[0], 1, x[0].size(1) - 1);
  }));
  c.push_back(make_case(
      "concat_cols",
      [](Rng& r) {
        const auto m = dim_in(r, 1, 8);
        return std::vector{random_input({m, dim_in(r, 1, 4)}, r), random_input({m, dim_in(r, 1, 4)}, r)};
      },
      [](auto& t, const auto& x) { return t.concat_cols(std::span(x)); }));
  c.push_back(make_case(
      "concat",
      [](Rng& r) {
        const auto n = dim_in(r, 1, 8);
        return std::vector{random_input({dim_in(r, 1, 4), n}, r), random_input({dim_in(r, 1, 4), n}, r)};
      },
      [](auto& t, const auto& x) { return t.concat(std::span(x)); }));
  c.push_back(make_case("add", pair_same, [](auto& t, const auto& x) { return t.add(x[0], x[1]); }));
  c.push_back(make_case("sub", pair_same, [](auto& t, const auto& x) { return t.sub(x[0], x[1]); }));
  c.push_back(make_case("mul", pair_same, [](auto& t, const auto& x) { return t.mul(x[0], x[1]); }));
  c.push_back(make_case(
      "add_bias",
      [](Rng& r) {
        const auto m = dim_in(r, 1, 8), n = dim_in(r, 1, 8);
        return std::vector{random_input({m, n}, r), random_input({n}, r)};
      },
      [](auto& t, const auto& x) { return t.add_bias(x[0], x[1]); }));
  c.push_back(make_case("scale", matrix(), [](auto& t, const auto& x) { return t.scale(x[0], 1.7); }));
  c.push_back(make_case(
      "exp", [](Rng& r) { return std::vector{random_input({dim_in(r, 1, 8), dim_in(r, 1, 8)}, r, 0.5)}; },
      [](auto& t, const auto& x) { return t.exp(x[0]); }));
  c.push_back(make_case("gelu", matrix(), [](auto& t, const auto& x) { return t.gelu(x[0]); }));
  c.push_back(make_case(
      "clamp",
      [](Rng& r) {
        auto in = random_input({dim_in(r, 1, 8), dim_in(r, 1, 8)}, r);
        // Keep points away from the kinks at +-0.5.
        for (auto& v : in.values) {
          if (std::abs(std::abs(v) - 0.5) < 0.05) v += v > 0 ? 0.1 : -0.1;
        }
        return std::vector{in};
      },
      [](auto& t, const auto& x) { return t.clamp(x[0], -0.5, 0.5); }));
  c.push_back(make_case(
      "minimum",
      [](Rng& r) {
        auto a = random_input({dim_in(r, 1, 8), dim_in(r, 1, 8)}, r);
        auto b = a;
        for (auto& v : b.values) v += (r.uniform() < 0.5 ? -1.0 : 1.0) * (0.1 + r.uniform());
        return std::vector{a, b};
      },
      [](auto& t, const auto& x) { return t.minimum(x[0], x[1]); }));
  c.push_back(make_case("softmax_rows", matrix(), [](auto& t, const auto& x) { return t.softmax(x[0], 1); }));
  c.push_back(make_case("softmax_cols", matrix(), [](auto& t, const auto& x) { return t.softmax(x[0], 0); }));
  c.push_back(make_case("log_softmax", matrix(), [](auto& t, const auto& x) { return t.log_softmax(x[0], 1); }));
  c.push_back(make_case(
      "layer_norm",
      [](Rng& r) {
        const auto m = dim_in(r, 1, 8), n = dim_in(r, 2, 8);
        return std::vector{random_input({m, n}, r), random_input({n}, r), random_input({n}, r)};
      },
      [](auto& t, const auto& x) { return t.layer_norm(x[0], x[1], x[2]); }));
  c.push_back(make_case(
      "masked_softmax",
      [](Rng& r) {
        const auto n = dim_in(r, 1, 8);
        return std::vector{random_input({n, n}, r)};
      },
      [](auto& t, const auto& x) { return t.softmax(t.mask_future(x[0]), 1); }));
  c.push_back(make_case(
      "embedding",
      [](Rng& r) { return std::vector{random_input({dim_in(r, 3, 8), dim_in(r, 1, 8)}, r)}; },
      [](auto& t, const auto& x) {
        const std::vector<int> ids{2, 0, 2, 1};
        return t.embedding(x[0], ids);
      }));
  c.push_back(make_case(
      "token_log_probs",
      [](Rng& r) { return std::vector{random_input({4, dim_in(r, 6, 8)}, r)}; },
      [](auto& t, const auto& x) {
        const std::vector<int> targets{1, 0, 5, 3};
        return t.token_log_probs(x[0], targets);
      }));
  c.push_back(make_case(
      "cross_entropy",
      [](Rng& r) { return std::vector{random_input({4, dim_in(r, 6, 8)}, r)}; },
      [](auto& t, const auto& x) {
        const std::vector<int> targets{4, 4, 0, 2};
        return t.cross_entropy(x[0], targets);
      }));
  c.push_back(make_case("sum", matrix(), [](auto& t, const auto& x) { return t.sum(t.mul(x[0], x[0])); }));
  c.push_back(make_case("mean", matrix(), [](auto& t, const auto& x) { return t.mean(t.mul(x[0], x[0])); }));
  c.push_back(make_case("mean_rows", matrix(), [](auto& t, const auto& x) { return t.mean_rows(x[0]); }));
  return c;
}

inline model::ModelConfig tiny_model_config() {
  model::ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_encoder_layers = 2;
  cfg.n_decoder_layers = 2;
  cfg.d_ff = 16;
  cfg.max_prompt_len = 8;
  cfg.max_response_len = 6;
  cfg.trace_layers = 2;
  cfg.value_hidden = 4;
  return cfg;
}

template <typename T>
void copy_parameters(const model::Transformer<float>& from, model::Transformer<T>& to) {
  const auto& src = from.named_parameters();
  const auto& dst = to.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto out = dst[i].second;
    auto in = src[i].second.data();
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<T>(in[j]);
  }
}

struct SequenceCase {
  std::vector<int> prompt;
  std::vector<int> response;
};

inline SequenceCase random_sequence_case(Rng& rng, const model::ModelConfig& cfg) {
  SequenceCase s;
  const auto px = rng.uniform_int(1, cfg.max_prompt_len);
  const auto py = rng.uniform_int(1, cfg.max_response_len - 1);
  for (int i = 0; i < px; ++i) s.prompt.push_back(static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 1)));
  for (int i = 0; i < py; ++i) s.response.push_back(static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 1)));
  return s;
}

// Gradient of sum_t log pi(y_t | x, y_<t) with respect to every policy
// parameter, back-propagated in precision T and compared with central
// differences of the double-precision model at the same parameter values.
template <typename T>
GradCheck sequence_logprob_gradcheck(std::uint64_t seed, double h = 1e-4) {
  const auto cfg = tiny_model_config();
  Rng rng(seed);
  const model::Transformer<float> base(cfg, seed);
  const auto sc = random_sequence_case(rng, cfg);

  GradCheck r;
  model::Transformer<T> m(cfg, seed);
  copy_parameters(base, m);
  {
    ad::BasicTape<T> tape;
    const auto enc = m.encode(tape, sc.prompt);
    const auto loss = tape.sum(m.log_prob(tape, enc, sc.response));
    tape.backward(loss);
    for (const auto& p : m.policy_parameters()) {
      if (p.has_grad()) {
        for (T g : p.grad()) r.analytic.push_back(static_cast<double>(g));
      } else {
        r.analytic.insert(r.analytic.end(), p.numel(), 0.0);
      }
    }
  }
  model::Transformer<double> md(cfg, seed);
  copy_parameters(base, md);
  auto total = [&]() {
    double s = 0.0;
    for (double v : md.log_prob(sc.prompt, sc.response)) s += v;
    return s;
  };
  for (auto p : md.policy_parameters()) {
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto set = [&](double x) {
        d[i] = x;
        return total();
      };
      r.numeric.push_back(central_difference(set, d[i], h));
    }
  }
  r.relative_error = relative_error(r.analytic, r.numeric);
  return r;
}

}  // namespace cagsr::testing
