#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "doctest.h"

#include "cagsr/autodiff/adam.hpp"
#include "cagsr/autodiff/archive.hpp"
#include "cagsr/common/error.hpp"
#include "cagsr/common/tokens.hpp"
#include "cagsr/model/checkpoint.hpp"
#include "cagsr/model/trace_io.hpp"
#include "cagsr/model/transformer.hpp"
#include "support/op_cases.hpp"

using namespace cagsr;
using model::PolicyModel;

namespace {

model::ModelConfig small_config() {
  auto c = testing::tiny_model_config();
  c.vocab_size = 16;
  c.d_model = 16;
  c.max_prompt_len = 12;
  c.max_response_len = 8;
  return c;
}

std::vector<int> random_prompt(Rng& rng, const model::ModelConfig& c) {
  std::vector<int> p(static_cast<std::size_t>(rng.uniform_int(1, c.max_prompt_len)));
  for (auto& t : p) t = static_cast<int>(rng.uniform_int(kNumSpecialTokens, c.vocab_size - 1));
  return p;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("cagsr_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("archive round-trips bit-exactly") {
  ad::Archive ar;
  ar.metadata["note"] = "x";
  const std::vector<float> f{1.0f, -0.0f, std::nextafter(1.0f, 2.0f), 3.4e38f, 1e-45f};
  const std::vector<double> d{M_PI, -1e-300};
  const std::vector<std::int32_t> i{-7, 0, 1 << 30};
  ar.add("f", {5}, std::span<const float>(f));
  ar.add("d", {1, 2}, std::span<const double>(d));
  ar.add("i", {3}, std::span<const std::int32_t>(i));
  CHECK_THROWS_AS(ar.add("f", {5}, std::span<const float>(f)), ContractError);
  CHECK_THROWS_AS(ar.add("g", {4}, std::span<const float>(f)), DimensionError);

  const auto dir = temp_dir("archive");
  ar.save(dir / "a.bin");
  const auto back = ad::Archive::load(dir / "a.bin");
  CHECK(back.metadata["note"] == "x");
  const auto f2 = back.get_f32("f");
  CHECK(std::memcmp(f2.data(), f.data(), f.size() * sizeof(float)) == 0);
  CHECK(back.get_f64("d") == d);
  CHECK(back.get_i32("i") == i);
  CHECK(back.serialize() == ar.serialize());
  CHECK_THROWS_AS(back.get_f32("i"), InputError);
  CHECK_THROWS_AS(ad::Archive::parse("not an archive"), InputError);
  auto bytes = ar.serialize();
  CHECK_THROWS_AS(ad::Archive::parse(bytes.substr(0, 20)), InputError);
}

TEST_CASE("checkpoint round-trip restores parameters and optimizer state") {
  const auto cfg = small_config();
  PolicyModel m(cfg, 3);
  ad::Adam opt(m.parameters(), {0.01});
  {
    ad::Tape tape;
    const std::vector<int> x{5, 6, 7}, y{8, 9};
    const auto enc = m.encode(tape, x);
    tape.backward(tape.add(tape.sum(m.log_prob(tape, enc, y)), m.value(tape, enc)));
    opt.step();
  }
  const auto dir = temp_dir("ckpt");
  model::save_checkpoint(dir / "m.ckpt", m, &opt.state(), Json{{"iteration", 4}});
  const auto ar = ad::Archive::load(dir / "m.ckpt");
  CHECK(ar.metadata["extra"]["iteration"] == 4);
  auto back = model::model_from_checkpoint<float>(ar);
  const auto& a = m.named_parameters();
  const auto& b = back.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::memcmp(a[i].second.data().data(), b[i].second.data().data(),
                      a[i].second.numel() * sizeof(float)) == 0);
  }
  const auto st = model::adam_state_from_checkpoint<float>(ar, back);
  REQUIRE(st.has_value());
  CHECK(st->step == 1);
  CHECK(st->m == opt.state().m);
  CHECK(st->v == opt.state().v);

  auto other = cfg;
  other.d_model = 8;
  PolicyModel wrong(other, 0);
  CHECK_THROWS(model::load_parameters(ar, wrong));
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.trace_layers = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(model::model_config_from_json(Json{{"d_modle", 8}}), ConfigError);
  const auto j = model::to_json(small_config());
  CHECK(model::to_json(model::model_config_from_json(j)) == j);
}

TEST_CASE("encoder shape, determinism and positions") {
  const auto cfg = small_config();
  PolicyModel m(cfg, 1);
  ad::Tape tape(ad::Tape::Mode::kInference);
  const std::vector<int> x{4, 9, 5, 11};
  const auto a = m.encode(tape, x);
  const auto b = m.encode(tape, x);
  CHECK(a.states.shape() == ad::Shape{4, 16});
  CHECK(std::equal(a.states.data().begin(), a.states.data().end(), b.states.data().begin()));

  const std::vector<int> swapped{9, 4, 5, 11};
  const auto s = m.encode(tape, swapped);
  // Same multiset of tokens; only positions differ.
  double diff = 0.0;
  for (std::size_t i = 0; i < 16; ++i) diff += std::abs(a.states.at(0, i) - s.states.at(1, i));
  CHECK(diff > 1e-3);

  const std::vector<int> too_long(cfg.max_prompt_len + 1, 5);
  CHECK_THROWS_AS(m.encode(tape, too_long), InputError);
  const std::vector<int> bad_id{cfg.vocab_size};
  CHECK_THROWS_AS(m.encode(tape, bad_id), InputError);
}

TEST_CASE("traced cross-attention rows are distributions") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto cfg = small_config();
    cfg.trace_layers = static_cast<int>(rng.uniform_int(1, 2));
    PolicyModel m(cfg, static_cast<std::uint64_t>(trial));
    const auto x = random_prompt(rng, cfg);
    std::vector<int> prefix(static_cast<std::size_t>(rng.uniform_int(0, cfg.max_response_len - 1)));
    for (auto& t : prefix) t = static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 1));
    const auto step = m.decode_step(x, prefix);
    CHECK(step.logits.size() == static_cast<std::size_t>(cfg.vocab_size));
    REQUIRE(step.attention.size() == static_cast<std::size_t>(cfg.trace_layers));
    for (const auto& row : step.attention) {
      CHECK(row.size() == x.size());
      CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-5);
    }
  }
}

TEST_CASE("zeroed output projection gives a uniform policy") {
  auto cfg = small_config();
  PolicyModel m(cfg, 2);
  m.zero_output_projection();
  const std::vector<int> x{4, 5, 6}, y{7, 8, 2};
  const auto step = m.decode_step(x, std::vector<int>{7});
  for (float l : step.logits) CHECK(l == step.logits[0]);
  for (float lp : m.log_prob(x, y)) CHECK(lp == doctest::Approx(-std::log(16.0)).epsilon(1e-6));
}

TEST_CASE("causality: later prefix tokens do not affect earlier logits") {
  const auto cfg = small_config();
  PolicyModel m(cfg, 4);
  ad::Tape tape(ad::Tape::Mode::kInference);
  const std::vector<int> x{4, 5, 6, 7};
  const auto enc = m.encode(tape, x);
  std::vector<int> in{kBosId, 8, 9, 10, 11};
  const auto a = m.decode(tape, enc, in, false).logits;
  in[3] = 12;
  in[4] = 13;
  const auto b = m.decode(tape, enc, in, false).logits;
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  for (std::size_t i = 0; i < 3 * v; ++i) CHECK(a[i] == b[i]);
  double later = 0.0;
  for (std::size_t i = 3 * v; i < 5 * v; ++i) later += std::abs(a[i] - b[i]);
  CHECK(later > 0.0);
}

TEST_CASE("generation") {
  const auto cfg = small_config();
  PolicyModel m(cfg, 6);
  const std::vector<int> x{4, 5, 6, 7, 8};
  model::SamplingConfig s;
  s.seed = 17;

  const auto c1 = m.generate(x, s, 4);
  REQUIRE(c1.size() == 4);
  for (const auto& c : c1) {
    CHECK(!c.token_ids.empty());
    CHECK(c.token_ids.size() <= static_cast<std::size_t>(cfg.max_response_len));
    CHECK(c.logprob_old.size() == c.token_ids.size());
    CHECK(c.trace.response_len == static_cast<int>(c.token_ids.size()));
    CHECK_NOTHROW(c.trace.validate());
    CHECK(c.ended_with_eos == (c.token_ids.back() == kEosId));
    // log_prob re-scoring under unchanged parameters
    const auto lp = m.log_prob(x, c.token_ids);
    for (std::size_t t = 0; t < lp.size(); ++t) CHECK(std::abs(lp[t] - c.logprob_old[t]) <= 1e-5);
  }

  const auto c2 = m.generate(x, s, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c1[i].token_ids == c2[i].token_ids);
    CHECK(c1[i].logprob_old == c2[i].logprob_old);
    CHECK(c1[i].trace.rows == c2[i].trace.rows);
  }
  s.seed = 18;
  const auto c3 = m.generate(x, s, 4);
  bool differs = false;
  for (std::size_t i = 0; i < 4; ++i) differs |= c1[i].token_ids != c3[i].token_ids;
  CHECK(differs);

  const auto g1 = m.generate(x, model::SamplingConfig::greedy(), 3);
  CHECK(g1[0].token_ids == g1[1].token_ids);
  CHECK(g1[0].token_ids == m.generate(x, model::SamplingConfig::greedy(), 1)[0].token_ids);
}

TEST_CASE("min_response_len keeps EOS out of the first tokens") {
  auto cfg = small_config();
  PolicyModel m(cfg, 8);
  // Make EOS overwhelmingly likely.
  m.parameter("out.b")[kEosId] = 50.0f;
  const std::vector<int> x{4, 5, 6};
  model::SamplingConfig s;
  s.min_response_len = 0;
  CHECK(m.generate(x, s, 1)[0].token_ids == std::vector<int>{kEosId});
  s.min_response_len = 2;
  const auto c = m.generate(x, s, 3);
  for (const auto& cand : c) {
    REQUIRE(cand.token_ids.size() == 3);
    CHECK(cand.token_ids[0] != kEosId);
    CHECK(cand.token_ids[1] != kEosId);
    CHECK(cand.token_ids[2] == kEosId);
    // Recorded under the unconstrained policy: the forced tokens are unlikely.
    CHECK(cand.logprob_old[0] < -40.0f);
  }
}

TEST_CASE("sampling") {
  std::vector<float> logits{1.0f, 3.0f, 2.0f, 3.0f};
  CHECK(model::argmax(logits) == 1);
  Rng rng(1);
  model::SamplingConfig s;
  s.strategy = model::SamplingStrategy::kTopK;
  s.top_k = 1;
  for (int i = 0; i < 20; ++i) CHECK(model::sample_token(logits, s, rng) == 1);
  s.top_k = 2;
  for (int i = 0; i < 50; ++i) {
    const int t = model::sample_token(logits, s, rng);
    CHECK((t == 1 || t == 3));
  }
  s = {};
  s.top_p = 0.01;
  for (int i = 0; i < 20; ++i) CHECK(model::sample_token(logits, s, rng) == 1);
  s.top_p = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  // Full-vocabulary sampling frequencies follow softmax.
  s = {};
  s.top_p = 1.0;
  std::vector<int> counts(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[model::sample_token(logits, s, rng)];
  double z = 0.0;
  for (float l : logits) z += std::exp(l);
  for (int k = 0; k < 4; ++k) CHECK(counts[k] / double(n) == doctest::Approx(std::exp(logits[k]) / z).epsilon(0.05));
}

TEST_CASE("value head") {
  const auto cfg = small_config();
  PolicyModel m(cfg, 9);
  Rng rng(3);
  std::vector<std::vector<int>> prompts;
  for (int i = 0; i < 8; ++i) prompts.push_back(random_prompt(rng, cfg));
  for (const auto& p : prompts) {
    CHECK(m.value_estimate(p) == 0.0f);
    CHECK(m.value_estimate(p) == m.value_estimate(p));
  }
  ad::Adam opt(m.value_parameters(), {3e-3});
  for (int step = 0; step < 500; ++step) {
    ad::Tape tape;
    const auto& p = prompts[step % prompts.size()];
    const auto d = tape.sub(m.value(tape, m.encode(tape, p)), ad::Tensor::scalar(0.7f));
    tape.backward(tape.mul(d, d));
    opt.step();
    for (const auto& q : m.policy_parameters()) q.clear_grad();
  }
  for (const auto& p : prompts) CHECK(std::abs(m.value_estimate(p) - 0.7f) <= 0.05f);
}

TEST_CASE("value gradient stops at the trunk when frozen") {
  auto cfg = small_config();
  cfg.value_trunk_grad = false;
  PolicyModel m(cfg, 10);
  ad::Tape tape;
  const std::vector<int> x{4, 5};
  tape.backward(m.value(tape, m.encode(tape, x)));
  for (const auto& p : m.policy_parameters()) {
    if (p.has_grad()) {
      for (float g : p.grad()) CHECK(g == 0.0f);
    }
  }
  bool value_grad = false;
  for (const auto& p : m.value_parameters()) value_grad |= p.has_grad();
  CHECK(value_grad);
}

TEST_CASE("trace dump round-trip") {
  const auto cfg = small_config();
  PolicyModel m(cfg, 11);
  const std::vector<int> x{4, 5, 6};
  model::SamplingConfig s;
  s.seed = 2;
  std::vector<model::TraceRecord> recs;
  int k = 0;
  for (const auto& c : m.generate(x, s, 3)) {
    recs.push_back({"c" + std::to_string(k++), x, c.token_ids, c.trace});
  }
  const auto dir = temp_dir("traces");
  model::write_trace_dump(dir / "t.bin", recs);
  const auto back = model::read_trace_dump(dir / "t.bin");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].response == recs[i].response);
    CHECK(back[i].trace.rows == recs[i].trace.rows);
    CHECK(back[i].trace.layer_indices == recs[i].trace.layer_indices);
  }
  recs[0].response.push_back(4);
  CHECK_THROWS_AS(model::write_trace_dump(dir / "u.bin", recs), ContractError);
}
