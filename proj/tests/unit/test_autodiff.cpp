#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "cagsr/autodiff/adam.hpp"
#include "cagsr/autodiff/tape.hpp"
#include "cagsr/common/error.hpp"
#include "support/op_cases.hpp"

using namespace cagsr;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor mat(ad::Shape s, std::vector<float> v, bool grad = false) { return Tensor(std::move(s), std::move(v), grad); }

}  // namespace

TEST_CASE("matmul arithmetic and identity") {
  Tape tape;
  auto c = tape.matmul(mat({2, 2}, {1, 2, 3, 4}), mat({2, 2}, {5, 6, 7, 8}));
  CHECK(std::vector<float>(c.data().begin(), c.data().end()) == std::vector<float>{19, 22, 43, 50});

  auto a = mat({2, 3}, {1.5f, -2, 0.25f, 4, 5, -6});
  auto eye = mat({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto ai = tape.matmul(a, eye);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ai[i] == a[i]);

  CHECK_THROWS_AS(tape.matmul(a, a), DimensionError);
}

TEST_CASE("grad of sum(A B) w.r.t. A is ones * B^T") {
  auto a = mat({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = mat({3, 2}, {0.5f, -1, 2, 0, 1, 3}, true);
  Tape tape;
  tape.backward(tape.sum(tape.matmul(a, b)));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(a.grad()[i * 3 + k] == doctest::Approx(b.at(k, 0) + b.at(k, 1)));
    }
  }
}

TEST_CASE("softmax examples") {
  Tape tape;
  auto s = tape.softmax(mat({3}, {0, 0, 0}), 0);
  for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3));
  s = tape.softmax(mat({2}, {std::log(2.0f), 0}), 0);
  CHECK(s[0] == doctest::Approx(2.0 / 3));
  CHECK(s[1] == doctest::Approx(1.0 / 3));
  s = tape.softmax(mat({2}, {1000, 0}), 0);
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one for arbitrary finite inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const double scale = std::pow(10.0, rng.uniform_int(-2, 3));
    std::vector<double> v(m * n);
    for (auto& x : v) x = scale * rng.normal();
    ad::Tape64 tape64;
    for (std::size_t axis : {0u, 1u}) {
      auto s = tape64.softmax(ad::Tensor64({m, n}, v), axis);
      const std::size_t outer = axis == 1 ? m : n, inner = axis == 1 ? n : m;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) total += axis == 1 ? s.at(o, i) : s.at(i, o);
        CHECK(std::abs(total - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("backward rules on simple graphs") {
  SUBCASE("sum(A*A) gives 2A") {
    auto a = mat({2, 2}, {1, -2, 3, 0.5f}, true);
    Tape tape;
    tape.backward(tape.sum(tape.mul(a, a)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad()[i] == doctest::Approx(2 * a[i]));
  }
  SUBCASE("an unused parameter gets no gradient contribution") {
    auto a = mat({2}, {1, 2}, true);
    auto unused = mat({3}, {1, 2, 3}, true);
    unused.ensure_grad();
    Tape tape;
    tape.backward(tape.sum(a));
    for (float g : unused.grad()) CHECK(g == 0.0f);
  }
  SUBCASE("gradients accumulate across tapes") {
    auto a = mat({2}, {1, 2}, true);
    for (int k = 0; k < 2; ++k) {
      Tape tape;
      tape.backward(tape.sum(tape.scale(a, 3.0f)));
    }
    CHECK(a.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("detach cuts the graph") {
    auto a = mat({2}, {1, 2}, true);
    Tape tape;
    auto y = tape.add(tape.detach(tape.mul(a, a)), a);
    tape.backward(tape.sum(y));
    CHECK(a.grad()[0] == doctest::Approx(1.0));
    CHECK(a.grad()[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("backward contracts") {
  auto a = mat({2}, {1, 2}, true);
  SUBCASE("second backward on a tape is rejected") {
    Tape tape;
    auto loss = tape.sum(tape.mul(a, a));
    tape.backward(loss);
    const std::vector<float> first(a.grad().begin(), a.grad().end());
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
    CHECK(std::vector<float>(a.grad().begin(), a.grad().end()) == first);
  }
  SUBCASE("non-scalar loss") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.mul(a, a)), ContractError);
  }
  SUBCASE("loss from another tape") {
    Tape t1, t2;
    auto loss = t1.sum(t1.mul(a, a));
    CHECK_THROWS_AS(t2.backward(loss), ContractError);
  }
  SUBCASE("bad ids and shapes") {
    Tape tape;
    const std::vector<int> bad{5};
    CHECK_THROWS_AS(tape.embedding(mat({2, 2}, {1, 2, 3, 4}), bad), InputError);
    CHECK_THROWS_AS(tape.add(a, mat({3}, {1, 2, 3})), DimensionError);
  }
}

TEST_CASE("every op matches a finite-difference oracle") {
  for (const auto& op : testing::op_cases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(derive_seed(seed, 0x6f70));
      const auto inputs = op.inputs(rng);
      const auto r32 = op.check(inputs, seed, false);
      const auto r64 = op.check(inputs, seed, true);
      INFO(op.name << " seed " << seed);
      CHECK(r32.relative_error <= 1e-3);
      CHECK(r64.relative_error <= 1e-6);
    }
  }
}

TEST_CASE("sequence log-prob gradient of a tiny transformer") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    INFO("seed " << seed);
    CHECK(testing::sequence_logprob_gradcheck<double>(seed).relative_error <= 1e-6);
    CHECK(testing::sequence_logprob_gradcheck<float>(seed).relative_error <= 1e-3);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient is a fixed point") {
    auto w = mat({3}, {1, -2, 3}, true);
    ad::Adam opt({w}, {0.1});
    w.ensure_grad();
    opt.step();
    CHECK(w[0] == 1.0f);
    CHECK(w[1] == -2.0f);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    auto w = mat({3}, {0, 0, 0}, true);
    ad::Adam opt({w}, {0.01});
    auto g = w.ensure_grad();
    g[0] = 5.0f;
    g[1] = -0.2f;
    g[2] = 1e-3f;
    opt.step();
    CHECK(w[0] == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(w[2] == doctest::Approx(-0.01).epsilon(1e-3));
    for (float v : w.grad()) CHECK(v == 0.0f);
  }
  SUBCASE("converges on (w - 3)^2") {
    auto w = mat({1}, {0}, true);
    ad::Adam opt({w}, {0.1});
    for (int i = 0; i < 200; ++i) {
      Tape tape;
      auto d = tape.sub(w, mat({1}, {3}));
      tape.backward(tape.sum(tape.mul(d, d)));
      opt.step();
    }
    CHECK(std::abs(w[0] - 3.0f) < 0.05f);
  }
  SUBCASE("missing gradient is rejected") {
    auto w = mat({1}, {0}, true);
    ad::Adam opt({w}, {});
    CHECK_THROWS_AS(opt.step(), ContractError);
  }
}
