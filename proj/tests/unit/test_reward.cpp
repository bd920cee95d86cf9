#include <cmath>
#include <numeric>

#include "doctest.h"

#include "cagsr/common/error.hpp"
#include "cagsr/common/tokens.hpp"
#include "cagsr/reward/reward.hpp"
#include "support/reward_oracle.hpp"

using namespace cagsr;
using reward::AttentionMatrix;
using reward::RewardBreakdown;
using reward::RewardConfig;
using reward::SalientSet;
using reward::aggregate_attention;
using reward::coverage;
using reward::focus;
using reward::repeat_penalty;
using reward::row_entropy;
using reward::select_salient;
using reward::score_candidate;
using reward::to_json;
using reward::reward_config_from_json;

namespace {

AttentionMatrix matrix(int rows, int cols, std::vector<double> v) { return {rows, cols, std::move(v)}; }

model::AttentionTrace trace_of(int prompt_len, int layers, std::vector<float> rows) {
  model::AttentionTrace t;
  t.prompt_len = prompt_len;
  t.num_layers = layers;
  t.response_len = static_cast<int>(rows.size()) / (prompt_len * layers);
  for (int l = 0; l < layers; ++l) t.layer_indices.push_back(l);
  t.rows = std::move(rows);
  return t;
}

}  // namespace

TEST_CASE("salient selection by idf") {
  // D = 4: k17 in 1 doc, red in 2, the in 4.
  data::CorpusStats stats;
  stats.num_documents = 4;
  const int the = 10, red = 11, k17 = 12;
  stats.df = {{the, 4}, {red, 2}, {k17, 1}};
  CHECK(stats.idf(k17) == doctest::Approx(std::log(4.0)));
  CHECK(stats.idf(red) == doctest::Approx(std::log(2.0)));
  CHECK(stats.idf(the) == 0.0);

  RewardConfig cfg;
  cfg.salient_fraction = 2.0 / 3.0;
  const std::vector<int> prompt{the, red, k17};
  CHECK(select_salient(prompt, stats, cfg).indices == std::vector<int>{1, 2});

  cfg.salient_fraction = 0.3;
  CHECK(select_salient(prompt, stats, cfg).indices == std::vector<int>{2});

  cfg.stopword_ids = {the, red, k17};
  const std::vector<int> with_special{kBosId, the, red};
  CHECK(select_salient(with_special, stats, cfg).indices == std::vector<int>{1, 2});
  const std::vector<int> only_special{kBosId, kEosId};
  CHECK(select_salient(only_special, stats, cfg).indices == std::vector<int>{0, 1});

  // Unseen tokens are maximally rare; ties keep the earlier position.
  cfg.stopword_ids.clear();
  const std::vector<int> unseen{the, 50, 51};
  cfg.salient_fraction = 0.3;
  CHECK(select_salient(unseen, stats, cfg).indices == std::vector<int>{1});
}

TEST_CASE("aggregation") {
  const auto one = trace_of(2, 1, {0.2f, 0.8f, 0.5f, 0.5f});
  const auto a1 = aggregate_attention(one);
  CHECK(a1.rows == 2);
  CHECK(a1.values[0] == doctest::Approx(0.2));
  CHECK(a1.values[3] == doctest::Approx(0.5));
  const auto two = trace_of(2, 2, {0.2f, 0.8f, 0.4f, 0.6f});
  const auto a2 = aggregate_attention(two);
  REQUIRE(a2.rows == 1);
  CHECK(a2.values[0] == doctest::Approx(0.3));
  CHECK(a2.values[1] == doctest::Approx(0.7));
}

TEST_CASE("coverage") {
  SalientSet s{{0, 2}};
  CHECK(coverage(matrix(2, 3, {0.5, 0, 0.5, 0.1, 0, 0.9}), s) == doctest::Approx(0.5));
  CHECK(coverage(matrix(1, 3, {0, 1, 0}), s) == 0.0);
  CHECK(coverage(matrix(2, 3, {0.3, 0.4, 0.3, 0.5, 0.2, 0.3}), s) == doctest::Approx(0.35));
  CHECK_THROWS_AS(coverage(matrix(1, 3, {1, 0, 0}), SalientSet{{3}}), ContractError);
}

TEST_CASE("coverage never decreases when mass moves onto a salient position") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int cols = static_cast<int>(rng.uniform_int(2, 10));
    const int rows = static_cast<int>(rng.uniform_int(1, 6));
    const auto tr = testing::random_trace(rng, cols, rows, 1);
    auto a = aggregate_attention(tr);
    SalientSet s{{static_cast<int>(rng.uniform_int(0, cols - 1))}};
    const double before = coverage(a, s);
    const int t = static_cast<int>(rng.uniform_int(0, rows - 1));
    const double add = rng.uniform();
    auto row = a.values.begin() + static_cast<std::ptrdiff_t>(t) * cols;
    for (int j = 0; j < cols; ++j) {
      row[j] = (j == s.indices[0]) ? (row[j] + add) / (1 + add) : row[j] / (1 + add);
    }
    CHECK(coverage(a, s) >= before - 1e-12);
  }
}

TEST_CASE("focus") {
  CHECK(row_entropy(std::vector<double>{0, 1, 0}) == 0.0);
  CHECK(row_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)));
  auto f = focus(matrix(2, 2, {0.5, 0.5, 1, 0}), 0.0);
  CHECK(f.focus == doctest::Approx(-0.3466).epsilon(1e-4));
  CHECK(f.entropy_per_step[0] == doctest::Approx(std::log(2.0)));
  CHECK(f.entropy_per_step[1] == 0.0);
  CHECK(focus(matrix(1, 3, {1, 0, 0}), 0.0).focus == 0.0);
  // The floor caps how much sharpening can earn.
  CHECK(focus(matrix(1, 3, {1, 0, 0}), 0.2).focus == doctest::Approx(-0.2));

  RewardConfig cfg;
  CHECK(cfg.floor_for(10) == doctest::Approx(0.05 * std::log(10.0)));
  cfg.entropy_floor = 0.0;
  CHECK(cfg.floor_for(10) == 0.0);
}

TEST_CASE("focus extremes: one-hot rows maximize it, uniform rows minimize it") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const int cols = static_cast<int>(rng.uniform_int(2, 12));
    const int rows = static_cast<int>(rng.uniform_int(1, 5));
    const double floor = rng.uniform() < 0.5 ? 0.0 : 0.05 * std::log(cols);
    const auto a = aggregate_attention(testing::random_trace(rng, cols, rows, 1));
    std::vector<double> onehot(static_cast<std::size_t>(rows) * cols, 0.0), uniform(onehot.size(), 1.0 / cols);
    for (int t = 0; t < rows; ++t) onehot[static_cast<std::size_t>(t) * cols + rng.uniform_int(0, cols - 1)] = 1.0;
    const double hi = focus(matrix(rows, cols, onehot), floor).focus;
    const double lo = focus(matrix(rows, cols, uniform), floor).focus;
    CHECK(hi == doctest::Approx(-floor));
    CHECK(lo == doctest::Approx(-std::log(cols)));
    const double f = focus(a, floor).focus;
    CHECK(f <= hi + 1e-12);
    CHECK(f >= lo - 1e-12);
  }
}

TEST_CASE("repeat penalty") {
  CHECK(repeat_penalty(std::vector<int>{1, 2, 3, 4}, 2) == 0.0);
  CHECK(repeat_penalty(std::vector<int>{7}, 2) == 0.0);
  CHECK(repeat_penalty(std::vector<int>{}, 2) == 0.0);
  CHECK(repeat_penalty(std::vector<int>{1, 2, 1, 2, 1}, 2) == doctest::Approx(0.5));
  CHECK(repeat_penalty(std::vector<int>{5, 5, 5, 5}, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(repeat_penalty(std::vector<int>{1, 2, 1, 2, 1}, 3) == doctest::Approx(1.0 / 3.0));

  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> y(static_cast<std::size_t>(rng.uniform_int(0, 12)));
    for (auto& t : y) t = static_cast<int>(rng.uniform_int(0, 3));
    const double p = repeat_penalty(y, 2);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    if (y.size() >= 2) {
      bool repeated = false;
      for (std::size_t i = 0; i + 1 < y.size(); ++i)
        for (std::size_t k = 0; k < i; ++k) repeated |= y[i] == y[k] && y[i + 1] == y[k + 1];
      CHECK((p == 0.0) == !repeated);
    }
  }
}

TEST_CASE("composite reward") {
  RewardConfig cfg;
  cfg.entropy_floor = 0.0;
  SalientSet s{{0, 2}};

  SUBCASE("weights from the component values") {
    // Step 0: mass 0.5 on position 0 and 0.5 on position 1 (entropy ln 2,
    // salient mass 0.5); step 1: one-hot on position 2. Response 9 9 9 has
    // two identical bigrams.
    const auto tr = trace_of(3, 1, {0.5f, 0.5f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f, 1.0f});
    const std::vector<int> prompt{4, 5, 6}, y{9, 9, 9};
    const auto r = reward::reward(prompt, y, tr, s, cfg);
    CHECK(r.coverage == doctest::Approx(2.5 / 6));
    CHECK(r.focus == doctest::Approx(-std::log(2.0) / 3));
    CHECK(r.repeat_penalty == doctest::Approx(0.5));
    CHECK(r.total == doctest::Approx(2.5 / 6 - 0.5 * std::log(2.0) / 3 - 0.5));
    // 0.35 - 0.5 * 0.3466 - 0.5
    CHECK(1.0 * 0.35 + 0.5 * (-std::log(2.0) / 2) - 1.0 * 0.5 == doctest::Approx(-0.3233).epsilon(1e-4));
  }
  SUBCASE("empty response") {
    const std::vector<int> prompt{4, 5, 6};
    const auto r = reward::reward(prompt, std::vector<int>{}, trace_of(3, 1, {}), s, cfg);
    CHECK(r.empty_response);
    CHECK(r.total == -1.0);
  }
  SUBCASE("length mismatch") {
    const std::vector<int> prompt{4, 5, 6}, y{9, 9};
    CHECK_THROWS_AS(reward::reward(prompt, y, trace_of(3, 1, {1, 0, 0}), s, cfg), ContractError);
  }
}

TEST_CASE("ablation identity: a zero weight removes exactly its term") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int px = static_cast<int>(rng.uniform_int(2, 10)), ty = static_cast<int>(rng.uniform_int(1, 8));
    const auto tr = testing::random_trace(rng, px, ty, 2);
    std::vector<int> prompt(px, 5), y(ty);
    for (auto& t : y) t = static_cast<int>(rng.uniform_int(4, 6));
    SalientSet s{{0}};
    RewardConfig full;
    const auto f = reward::reward(prompt, y, tr, s, full);
    auto no_cov = full, no_focus = full, no_rep = full;
    no_cov.alpha = 0;
    no_focus.beta = 0;
    no_rep.gamma = 0;
    CHECK(reward::reward(prompt, y, tr, s, no_cov).total == 0.5 * f.focus - 1.0 * f.repeat_penalty);
    CHECK(reward::reward(prompt, y, tr, s, no_focus).total == 1.0 * f.coverage - 1.0 * f.repeat_penalty);
    CHECK(reward::reward(prompt, y, tr, s, no_rep).total == 1.0 * f.coverage + 0.5 * f.focus);
    auto cov_only = full;
    cov_only.beta = cov_only.gamma = 0;
    CHECK(reward::reward(prompt, y, tr, s, cov_only).total == f.coverage);
  }
}

TEST_CASE("oracle equivalence on random traces") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int px = static_cast<int>(rng.uniform_int(1, 16));
    const int ty = static_cast<int>(rng.uniform_int(1, 12));
    const int layers = static_cast<int>(rng.uniform_int(1, 3));
    const auto tr = testing::random_trace(rng, px, ty, layers);
    std::vector<int> prompt(px), y(ty);
    for (auto& t : prompt) t = static_cast<int>(rng.uniform_int(4, 30));
    for (auto& t : y) t = static_cast<int>(rng.uniform_int(4, 8));
    SalientSet s;
    for (int j = 0; j < px; ++j)
      if (rng.uniform() < 0.4) s.indices.push_back(j);
    if (s.indices.empty()) s.indices.push_back(0);
    RewardConfig cfg;
    const double floor = cfg.floor_for(px);
    const auto r = reward::reward(prompt, y, tr, s, cfg);
    const auto o = testing::oracle_reward(y, tr, s.indices, 1.0, 0.5, 1.0, floor, 2);
    CHECK(std::abs(r.coverage - o.coverage) <= 1e-6);
    CHECK(std::abs(r.focus - o.focus) <= 1e-6);
    CHECK(std::abs(r.repeat_penalty - o.repeat_penalty) <= 1e-6);
    CHECK(std::abs(r.total - o.total) <= 1e-6);
    for (int t = 0; t < ty; ++t) CHECK(std::abs(r.entropy_per_step[t] - o.entropies[t]) <= 1e-6);
  }
}

TEST_CASE("score_candidate drops the EOS step") {
  model::Candidate c;
  c.token_ids = {5, 6, kEosId};
  c.ended_with_eos = true;
  c.trace = trace_of(2, 1, {1, 0, 1, 0, 0, 1});
  const std::vector<int> prompt{7, 8};
  RewardConfig cfg;
  cfg.entropy_floor = 0.0;
  const auto r = score_candidate(prompt, c, SalientSet{{0}}, cfg);
  CHECK(r.coverage == doctest::Approx(1.0));
  CHECK(r.entropy_per_step.size() == 2);

  c.token_ids = {kEosId};
  c.trace = trace_of(2, 1, {0.5f, 0.5f});
  const auto e = score_candidate(prompt, c, SalientSet{{0}}, cfg);
  CHECK(e.empty_response);
  CHECK(e.total == -1.0);
}

TEST_CASE("reward config json") {
  RewardConfig c;
  c.gamma = 0.0;
  c.entropy_floor = 0.1;
  const auto j = to_json(c);
  const auto back = reward_config_from_json(j);
  CHECK(back.gamma == 0.0);
  CHECK(back.entropy_floor == 0.1);
  CHECK(to_json(back) == j);
  CHECK_THROWS_AS(reward_config_from_json(Json{{"alpah", 1.0}}), ConfigError);
  CHECK_THROWS_AS(reward_config_from_json(Json{{"alpha", -1.0}}), ConfigError);
}
