/*
 * Copyright (c) 2026 The adapl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "adapl/parallel.hpp"
#include "adapl/similarity.hpp"
#include "adapl/synth_bench.hpp"
#include "adapl/trainer.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

using namespace adapl;
using adapl::testing::naive_dot;
using adapl::testing::random_unit;

namespace {

LabelState clean(int y) {
  LabelState s;
  s.y_hat = y;
  s.clean = true;
  return s;
}

LabelState noisy(int y_hat, int y_h, double lambda) {
  LabelState s;
  s.y_hat = y_hat;
  s.clean = false;
  RefinedLabel r;
  r.y_h = y_h;
  r.lambda = lambda;
  s.refined = r;
  return s;
}

RealMatrix orthonormal_z(std::size_t c, std::size_t d) {
  RealMatrix z(c, d);
  for (std::size_t i = 0; i < c; ++i) z(i, i) = 1.0;
  return z;
}

// Per-sample log-probabilities by direct exp/sum.
std::vector<double> log_probs(std::span<const float> x, const RealMatrix& z, double tau) {
  std::vector<double> logits(z.rows());
  for (std::size_t c = 0; c < z.rows(); ++c) {
    const double norm = std::sqrt(naive_dot(z.row(c), z.row(c)));
    logits[c] = tau * naive_dot(x, z.row(c)) / norm;
  }
  double total = 0.0;
  for (double l : logits) total += std::exp(l);
  for (double& l : logits) l -= std::log(total);
  return logits;
}

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0;
}

}  // namespace

TEST_CASE("loss_st examples") {
  const auto z = orthonormal_z(3, 4);
  const auto x = random_unit(2, 4, 1);
  const std::vector<LabelState> none{noisy(0, 1, 0.5), noisy(2, 2, 0.5)};
  CHECK(loss_st(x, z, none, 100.0) == 0.0);

  const EmbeddingMatrix exact(1, 4, {1, 0, 0, 0});
  const std::vector<LabelState> one{clean(0)};
  CHECK(std::abs(loss_st(exact, z, one, 1000.0)) < 1e-12);
}

TEST_CASE("losses match per-sample recomputation") {
  const auto inst = adapl::testing::gradient_instance(3, 6, 12, 40);
  for (double tau : {1.0, 10.0, 100.0}) {
    double st = 0.0, n = 0.0;
    std::vector<double> mean(6, 0.0);
    for (std::size_t i = 0; i < inst.strong.rows(); ++i) {
      const auto lp = log_probs(inst.strong.row(i), inst.z, tau);
      const auto& s = inst.states[i];
      if (s.clean) st -= lp[s.y_hat];
      else n -= s.refined->lambda * lp[s.refined->y_h];
      for (std::size_t c = 0; c < 6; ++c) mean[c] += std::exp(lp[c]) / 40.0;
    }
    double reg = 0.0;
    for (double m : mean) reg -= std::log(std::max(m, 1e-12)) / 6.0;
    CHECK(std::abs(loss_st(inst.strong, inst.z, inst.states, tau) - st / 40.0) < 1e-10);
    CHECK(std::abs(loss_n(inst.strong, inst.z, inst.states, tau) - n / 40.0) < 1e-10);
    CHECK(std::abs(loss_reg(inst.strong, inst.z, tau) - reg) < 1e-10);
  }
}

TEST_CASE("loss_n examples") {
  const auto z = orthonormal_z(3, 4);
  const auto x = random_unit(3, 4, 2);
  const std::vector<LabelState> all_clean{clean(0), clean(1), clean(2)};
  CHECK(loss_n(x, z, all_clean, 100.0) == 0.0);

  // Logits (-a, a) with 2a = ln(e^2 - 1) give probs[0] = e^-2.
  const double a = 0.5 * std::log(std::exp(2.0) - 1.0);
  RealMatrix z2(2, 3, {1, 0, 0, -1, 0, 0});
  EmbeddingMatrix batch(4, 3);
  batch(0, 0) = static_cast<float>(-a);
  batch(0, 1) = static_cast<float>(std::sqrt(1.0 - a * a));
  for (std::size_t i = 1; i < 4; ++i) batch(i, 2) = 1.0f;
  const std::vector<LabelState> states{noisy(1, 0, 0.5), clean(0), clean(1), clean(0)};
  CHECK(loss_n(batch, z2, states, 1.0) == doctest::Approx(0.25).epsilon(1e-6));

  std::vector<LabelState> broken = states;
  broken[0].refined.reset();
  CHECK_THROWS_AS(loss_n(batch, z2, broken, 1.0), ValidationError);
}

TEST_CASE("loss_reg examples") {
  const auto z = orthonormal_z(10, 11);
  EmbeddingMatrix x(1, 11);
  x(0, 10) = 1.0f;
  CHECK(std::abs(loss_reg(x, z, 100.0) - std::log(10.0)) < 1e-9);

  EmbeddingMatrix collapsed(4, 11);
  for (std::size_t i = 0; i < 4; ++i) collapsed(i, 0) = 1.0f;
  CHECK(loss_reg(collapsed, z, 100.0) > std::log(10.0));
  // p-bar of the other classes underflows; the clamp keeps the value finite.
  CHECK(std::isfinite(loss_reg(collapsed, z, 2000.0)));
}

TEST_CASE("losses are nonnegative and the regularizer is bounded below by ln C") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = adapl::testing::gradient_instance(seed);
    for (double tau : {0.5, 10.0, 100.0}) {
      CHECK(loss_st(inst.strong, inst.z, inst.states, tau) >= 0.0);
      CHECK(loss_n(inst.strong, inst.z, inst.states, tau) >= 0.0);
      CHECK(loss_reg(inst.strong, inst.z, tau) >= std::log(5.0) - 1e-12);
    }
  }
}

TEST_CASE("all-clean states contribute nothing to the noisy loss") {
  auto inst = adapl::testing::gradient_instance(4);
  for (auto& s : inst.states) {
    s.clean = true;
    s.refined.reset();
  }
  const auto lg = loss_and_grad(inst.strong, inst.z, inst.states, 100.0, {});
  CHECK(lg.loss.n == 0.0);
  CHECK(lg.loss.total == lg.loss.st + lg.loss.reg);
}

TEST_CASE("saturated clean predictions have a vanishing gradient") {
  const auto z = orthonormal_z(4, 6);
  EmbeddingMatrix x(4, 6);
  std::vector<LabelState> states;
  for (std::size_t i = 0; i < 4; ++i) {
    x(i, i) = 1.0f;
    states.push_back(clean(static_cast<int>(i)));
  }
  const auto g = grad_total(x, z, states, 100.0, {1.0, 0.0, 0.0});
  for (double v : g.data()) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("two-class gradient matches the hand derivation") {
  // L = -log p_0 with logits (<x, z0/|z0|>, <x, z1/|z1|>) at tau = 1.
  // dL/dz_c = (p_c - [c == 0]) * (x - zhat_c <zhat_c, x>) / |z_c|.
  RealMatrix z(2, 2, {1.0, 0.0, 0.0, 2.0});
  EmbeddingMatrix x(1, 2, {0.6f, 0.8f});
  const std::vector<LabelState> states{clean(0)};
  const double x0 = 0.6f, x1 = 0.8f;
  const double p0 = 1.0 / (1.0 + std::exp(x1 - x0));
  const double p1 = 1.0 - p0;
  const auto g = grad_total(x, z, states, 1.0, {1.0, 0.0, 0.0});
  CHECK(std::abs(g(0, 0) - 0.0) < 1e-15);
  CHECK(std::abs(g(0, 1) - (p0 - 1.0) * x1) < 1e-15);
  CHECK(std::abs(g(1, 0) - p1 * x0 / 2.0) < 1e-15);
  CHECK(std::abs(g(1, 1) - 0.0) < 1e-15);
  CHECK(loss_st(x, z, states, 1.0) == doctest::Approx(-std::log(p0)).epsilon(1e-14));
}

TEST_CASE("gradient agrees with central differences") {
  SUBCASE("tau 1, step 1e-3") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = adapl::testing::check_gradient(adapl::testing::gradient_instance(seed), 1.0, 1e-3);
      CAPTURE(seed);
      CHECK(r.checked > 40);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
  SUBCASE("tau 100 with a step small enough for its curvature") {
    // Truncation error of the difference quotient grows like (tau * step)^2.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = adapl::testing::check_gradient(adapl::testing::gradient_instance(seed), 100.0, 1e-5);
      CAPTURE(seed);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
  SUBCASE("unequal loss weights") {
    const auto inst = adapl::testing::gradient_instance(9);
    const auto r = adapl::testing::check_gradient(inst, 5.0, 1e-4, 1e-8, {0.3, 2.0, 0.7});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("difference error shrinks quadratically with the step") {
    const auto inst = adapl::testing::gradient_instance(2);
    const double coarse = adapl::testing::check_gradient(inst, 100.0, 1e-3).max_rel_error;
    const double fine = adapl::testing::check_gradient(inst, 100.0, 1e-4).max_rel_error;
    CHECK(fine < coarse / 50.0);
  }
}

TEST_CASE("gradient is tangent to each prototype row") {
  const auto inst = adapl::testing::gradient_instance(6);
  const auto g = grad_total(inst.strong, inst.z, inst.states, 100.0, {});
  for (std::size_t c = 0; c < g.rows(); ++c) {
    CHECK(std::abs(naive_dot(g.row(c), inst.z.row(c))) < 1e-12);
  }
}

TEST_CASE("adamw with zero gradient leaves unit rows in place") {
  RealMatrix z = adapl::testing::random_unit_real(3, 5, 3);
  const RealMatrix start = z;
  AdamWState state;
  for (int t = 0; t < 3; ++t) adamw_step(z, RealMatrix(3, 5), state, 0.1, {0.9, 0.999, 1e-8, 0.0});
  for (std::size_t k = 0; k < z.data().size(); ++k) CHECK(std::abs(z.data()[k] - start.data()[k]) < 1e-15);

  // Decoupled decay only rescales rows, which renormalization undoes.
  adamw_step(z, RealMatrix(3, 5), state, 0.1, {0.9, 0.999, 1e-8, 0.5});
  for (std::size_t k = 0; k < z.data().size(); ++k) CHECK(std::abs(z.data()[k] - start.data()[k]) < 1e-15);
}

TEST_CASE("first adamw step moves against the gradient sign") {
  RealMatrix z = to_real(random_unit(2, 6, 4));
  // Tangent gradient so renormalization is second order.
  RealMatrix g = to_real(random_unit(2, 6, 5));
  for (std::size_t c = 0; c < 2; ++c) {
    const double r = naive_dot(g.row(c), z.row(c));
    for (std::size_t k = 0; k < 6; ++k) g(c, k) -= r * z(c, k);
  }
  const RealMatrix start = z;
  AdamWState state;
  const double lr = 1e-3;
  adamw_step(z, g, state, lr, {});

  RealMatrix expect = start;
  for (std::size_t k = 0; k < expect.data().size(); ++k) {
    const double gk = g.data()[k];
    expect.data()[k] -= lr * gk / (std::abs(gk) + 1e-8);
  }
  expect = normalize_rows(expect);
  for (std::size_t k = 0; k < z.data().size(); ++k) {
    CHECK(std::abs(z.data()[k] - expect.data()[k]) < 1e-12);
    const double moved = z.data()[k] - start.data()[k];
    CHECK(moved * g.data()[k] < 0.0);
  }
  CHECK(state.step == 1);
}

TEST_CASE("adamw decreases a quadratic surrogate monotonically") {
  const RealMatrix target = to_real(random_unit(4, 8, 6));
  RealMatrix z = to_real(random_unit(4, 8, 7));
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t k = 0; k < z.data().size(); ++k) {
      const double diff = z.data()[k] - target.data()[k];
      total += 0.5 * diff * diff;
    }
    return total;
  };
  AdamWState state;
  double prev = loss();
  for (int t = 0; t < 10; ++t) {
    RealMatrix g(4, 8);
    for (std::size_t k = 0; k < g.data().size(); ++k) g.data()[k] = z.data()[k] - target.data()[k];
    adamw_step(z, g, state, 0.02, {});
    const double now = loss();
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adamw rejects mismatched shapes") {
  RealMatrix z(2, 3, {1, 0, 0, 0, 1, 0});
  AdamWState state;
  CHECK_THROWS_AS(adamw_step(z, RealMatrix(3, 3), state, 0.1, {}), ValidationError);
}

TEST_CASE("cosine_lr examples") {
  CHECK(cosine_lr(0, 100, 5e-5) == 5e-5);
  CHECK(std::abs(cosine_lr(100, 100, 5e-5)) < 1e-20);
  CHECK(std::abs(cosine_lr(50, 100, 5e-5) - 2.5e-5) < 1e-18);
  double prev = 1.0;
  for (std::size_t s = 0; s <= 100; ++s) {
    const double lr = cosine_lr(s, 100, 1.0);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(101, 100, 1.0), ValidationError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.k_n = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("zero epochs trains nothing") {
  const auto b = generate(oracle_benchmark_spec());
  TrainConfig c;
  c.epochs = 0;
  const auto r = run_training(b, c);
  CHECK(r.metrics.empty());
  CHECK(r.z == to_real(b.catalog.z));
  CHECK_FALSE(r.bank.has_value());
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const auto b = generate(oracle_benchmark_spec());
  TrainConfig c;
  c.strategy = CrossSetStrategy::kRandom;
  c.epochs = 3;
  c.seed = 11;
  set_max_threads(1);
  const auto first = run_training(b, c);
  set_max_threads(0);
  const auto second = run_training(b, c);
  REQUIRE(first.metrics.size() == 3);
  CHECK(first.z == second.z);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto& x = first.metrics[e];
    const auto& y = second.metrics[e];
    CHECK(x.clean_count == y.clean_count);
    CHECK(same_bits(x.pseudo_acc, y.pseudo_acc));
    CHECK(same_bits(x.test_acc, y.test_acc));
    CHECK(same_bits(x.loss_st, y.loss_st));
    CHECK(same_bits(x.loss_n, y.loss_n));
    CHECK(same_bits(x.loss_reg, y.loss_reg));
  }
}

TEST_CASE("metrics stay within their ranges") {
  const auto b = generate(oracle_benchmark_spec());
  TrainConfig c;
  c.strategy = CrossSetStrategy::kConfusion;
  c.epochs = 4;
  const auto r = run_training(b, c);
  for (const auto& m : r.metrics) {
    CHECK(m.clean_count <= b.weak.rows());
    for (double f : {m.pseudo_acc, m.clean_acc, m.test_acc}) {
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
    CHECK((std::isnan(m.refined_acc) == (m.clean_count == b.weak.rows())));
  }
  for (std::size_t c2 = 0; c2 < r.z.rows(); ++c2) {
    CHECK(std::abs(naive_dot(r.z.row(c2), r.z.row(c2)) - 1.0) < 1e-12);
  }
}

TEST_CASE("label_epoch initializes the bank from zero-shot labels") {
  const auto b = generate(oracle_benchmark_spec());
  std::optional<MemoryBank> bank;
  const auto labels = label_epoch(b, to_real(b.catalog.z), bank, {}, 1);
  REQUIRE(bank.has_value());
  for (std::size_t i = 0; i < b.weak.rows(); ++i) {
    CHECK(bank->label(i) == labels.records[i].y_hat);
    CHECK(bank->weight(i) == labels.records[i].omega);
    CHECK(labels.states[i].refined.has_value() == !labels.states[i].clean);
  }
}

TEST_CASE("training without ground truth reports NaN accuracies") {
  auto b = generate(oracle_benchmark_spec());
  b.truth_train.reset();
  b.truth_test.reset();
  TrainConfig c;
  c.epochs = 1;
  const auto r = run_training(b, c);
  REQUIRE(r.metrics.size() == 1);
  CHECK(std::isnan(r.metrics[0].pseudo_acc));
  CHECK(std::isnan(r.metrics[0].test_acc));
  CHECK(std::isnan(r.zero_shot_test_acc));
  CHECK(r.metrics[0].clean_count <= b.weak.rows());
}
