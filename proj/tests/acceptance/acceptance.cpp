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
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Everything runs on synthetic bundles.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "adapl/cli.hpp"
#include "adapl/nalr.hpp"
#include "adapl/pics.hpp"
#include "adapl/synth_bench.hpp"
#include "adapl/trainer.hpp"
#include "gradient_check.hpp"
#include "oracle_compare.hpp"
#include "test_support.hpp"

using namespace adapl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---- pinned tolerances and budgets ----
constexpr double kGradStep = 1e-3;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradFloor = 1e-8;
constexpr double kGradBudgetSeconds = 10.0;
constexpr double kOracleTol = 1e-5;
constexpr double kThreshold = 0.95;
constexpr double kTrainBudgetSeconds = 60.0;
constexpr double kLnTen = 2.302585093;
constexpr double kClosedFormTol = 1e-9;
constexpr double kLambdaAtOne = 0.731058579;

// ---- regression constants, frozen from the first run on the seed-42 benchmark ----
// Smallest (clean_acc - pseudo_acc) over the 15 epochs, per strategy.
constexpr double kFrozenMinAccMargin[3] = {0.0, 0.0, 0.0212105263};
// Epoch-1 PICS clean count minus threshold-baseline count, per strategy.
constexpr long kFrozenCountMargin[3] = {1657, 1653, 1580};
constexpr double kMarginDriftTol = 1e-9;

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s  %-22s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

constexpr CrossSetStrategy kStrategies[3] = {CrossSetStrategy::kConfidence,
                                             CrossSetStrategy::kRandom,
                                             CrossSetStrategy::kConfusion};

void gradient_correctness() {
  const auto start = Clock::now();
  bool pass = true;
  std::string detail;
  for (double tau : {1.0, 100.0}) {
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = testing::check_gradient(testing::gradient_instance(seed, 5, 16, 32), tau,
                                             kGradStep, kGradFloor);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
    }
    pass = pass && worst < kGradRelTol;
    detail += fmt::format("tau={:g}: max rel err {:.3e} over {} entries; ", tau, worst, checked);
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < kGradBudgetSeconds;
  detail += fmt::format("{:.2f}s (limit {:g}s, tol {:g}, step {:g})", elapsed,
                        kGradBudgetSeconds, kGradRelTol, kGradStep);
  report(pass, "gradient-correctness", detail);
}

void oracle_equivalence() {
  const auto bundle = generate(oracle_benchmark_spec());
  bool pass = true;
  std::string detail = fmt::format("N={}; ", bundle.weak.rows());
  for (auto s : kStrategies) {
    TrainConfig config;
    config.strategy = s;
    config.seed = 42;
    const auto r = testing::compare_with_oracle(bundle, config, 2, kOracleTol);
    pass = pass && r.mismatches == 0;
    detail += fmt::format("{}: {} mismatches, {} refined, max delta {:.1e}{}; ", to_string(s),
                          r.mismatches, r.noisy, r.max_real_delta,
                          r.mismatches ? " (" + r.first_mismatch + ")" : "");
  }
  detail += fmt::format("2 epochs each, tol {:g}", kOracleTol);
  report(pass, "oracle-equivalence", detail);
}

struct StrategyRun {
  TrainResult result;
  std::size_t threshold_count = 0;
  std::size_t epoch1_clean = 0;
  double seconds = 0.0;
};

StrategyRun run_benchmark(const EmbeddingBundle& bundle, CrossSetStrategy s) {
  StrategyRun run;
  TrainConfig config;
  config.strategy = s;
  const auto start = Clock::now();
  run.result = run_training(bundle, config);
  run.seconds = seconds_since(start);

  // Epoch-1 threshold baseline on the same zero-shot pass.
  std::optional<MemoryBank> bank;
  const auto labels = label_epoch(bundle, to_real(bundle.catalog.z), bank, config, 1);
  const auto mask = threshold_filter(labels.records, kThreshold);
  run.threshold_count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  for (const auto& st : labels.states) run.epoch1_clean += st.clean;
  return run;
}

void filtering_quality(const std::vector<StrategyRun>& runs) {
  bool pass = true;
  std::string detail;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& metrics = runs[k].result.metrics;
    double min_margin = 1.0;
    bool every_epoch = !metrics.empty();
    for (const auto& m : metrics) {
      const double margin = m.clean_acc - m.pseudo_acc;
      min_margin = std::min(min_margin, margin);
      every_epoch = every_epoch && m.clean_acc >= m.pseudo_acc;
    }
    const long count_margin = static_cast<long>(metrics.front().clean_count) -
                              static_cast<long>(runs[k].threshold_count);
    const bool counts_ok = count_margin >= 0 &&
                           metrics.front().clean_count == runs[k].epoch1_clean;
    const bool frozen_ok = std::abs(min_margin - kFrozenMinAccMargin[k]) <= kMarginDriftTol &&
                           count_margin == kFrozenCountMargin[k];
    pass = pass && every_epoch && counts_ok && frozen_ok;
    detail += fmt::format("{}: min acc margin {:+.10f} (frozen {:+.10f}), epoch-1 clean {} vs "
                          "threshold {} ({:+d}, frozen {:+d}); ",
                          to_string(kStrategies[k]), min_margin, kFrozenMinAccMargin[k],
                          metrics.front().clean_count, runs[k].threshold_count, count_margin,
                          kFrozenCountMargin[k]);
  }
  detail += fmt::format("threshold {:g}", kThreshold);
  report(pass, "filtering-quality", detail);
}

void training_improves(const std::vector<StrategyRun>& runs) {
  bool pass = true;
  std::string detail;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& r = runs[k].result;
    const double final_acc = r.metrics.back().test_acc;
    const bool ok = r.metrics.size() == 15 && final_acc > r.zero_shot_test_acc &&
                    runs[k].seconds < kTrainBudgetSeconds;
    pass = pass && ok;
    detail += fmt::format("{}: {:.4f} -> {:.4f} ({:+.4f}) in {:.2f}s; ",
                          to_string(kStrategies[k]), r.zero_shot_test_acc, final_acc,
                          final_acc - r.zero_shot_test_acc, runs[k].seconds);
  }
  detail += fmt::format("15 epochs, limit {:g}s per run", kTrainBudgetSeconds);
  report(pass, "training-improves", detail);
}

void closed_forms() {
  // Ten orthonormal prototypes and a feature orthogonal to all of them.
  RealMatrix z(10, 11);
  for (std::size_t c = 0; c < 10; ++c) z(c, c) = 1.0;
  EmbeddingMatrix x(1, 11);
  x(0, 10) = 1.0f;
  const double reg = loss_reg(x, z, 100.0);

  const double lambda0 = sigmoid(0.0);
  EmbeddingMatrix f(2, 2, {1, 0, 1, 0});
  EmbeddingMatrix t(2, 2, {1, 0, 0, 1});
  const std::vector<std::size_t> nb{1};
  const double lambda1 = adaptive_weight(f.row(0), t.row(0), nb, f, t).lambda;

  // Every record shares one label, so no cross set can be formed.
  const auto feats = testing::random_unit(4, 5, 1);
  const std::vector<BankEntry> entries(4, BankEntry{2, 0.5});
  const auto bank = init_bank(feats, entries, 3);
  std::vector<PseudoLabelRecord> rec(4);
  for (auto& r : rec) {
    r.y_hat = 2;
    r.y_second = 0;
    r.omega = 0.5;
    r.probs = {0.25, 0.25, 0.5};
  }
  const auto protos = compute_prototypes(bank, to_real(testing::random_unit(3, 5, 2)));
  bool empty_ok = true;
  for (auto s : kStrategies) {
    const auto scores = score_samples(bank, protos, rec, {s, 3, {0, 1}});
    for (std::size_t i = 0; i < 4; ++i) {
      empty_ok = empty_ok && scores.cross_set[i].empty() && scores.psi[i] == -1.0 &&
                 scores.clean[i];
    }
  }

  const bool pass = std::abs(reg - kLnTen) < kClosedFormTol &&
                    std::abs(reg - std::log(10.0)) < kClosedFormTol && lambda0 == 0.5 &&
                    std::abs(lambda1 - kLambdaAtOne) < kClosedFormTol && empty_ok;
  report(pass, "closed-form",
         fmt::format("loss_reg(uniform, C=10)={:.12f}; lambda(0)={:.17g}; lambda(1)={:.12f}; "
                     "empty cross set psi=-1 and clean: {}",
                     reg, lambda0, lambda1, empty_ok ? "yes" : "no"));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  testing::TempDir dir("acceptance");
  std::ofstream(dir / "spec.json") << "{}";
  std::ostringstream out, err;
  bool pass = run_cli({"synth", "--spec", (dir / "spec.json").string(), "--out",
                       (dir / "bundle").string()}, out, err) == 0;
  for (const char* run : {"a", "b"}) {
    pass = pass && run_cli({"train", "--bundle", (dir / "bundle").string(), "--strategy", "rs",
                            "--seed", "42", "--out", (dir / run).string()},
                           out, err) == 0;
  }
  const auto a = slurp(dir / "a" / "metrics.csv");
  const auto b = slurp(dir / "b" / "metrics.csv");
  pass = pass && !a.empty() && a == b;
  report(pass, "determinism",
         fmt::format("two `train` runs (rs, seed 42): metrics.csv {} bytes, {}", a.size(),
                     a == b ? "byte-identical" : "DIFFER"));
}

}  // namespace

int main() {
  gradient_correctness();
  oracle_equivalence();

  const auto bundle = generate(benchmark_spec());
  std::vector<StrategyRun> runs;
  for (auto s : kStrategies) runs.push_back(run_benchmark(bundle, s));
  filtering_quality(runs);
  training_improves(runs);

  closed_forms();
  determinism();
  std::printf("INFO  reference-accuracy     published real-dataset accuracies are not "
              "targeted; the checks above stand in for them\n");
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
