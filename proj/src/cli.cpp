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
#include "adapl/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "adapl/embedding_store.hpp"
#include "adapl/memory_bank.hpp"
#include "adapl/parallel.hpp"
#include "adapl/pics.hpp"
#include "adapl/pseudo_labeler.hpp"
#include "adapl/synth_bench.hpp"
#include "adapl/trainer.hpp"

namespace adapl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kLabelHeader[] = "index,y_hat,omega,y_second";
constexpr char kFilterHeader[] = "index,y_hat,omega,phi,psi,clean";
constexpr char kRefineHeader[] = "index,r_hat,y_h,delta_zeta,lambda,neighbors";
constexpr char kMetricsHeader[] =
    "epoch,pseudo_acc,clean_count,clean_acc,refined_acc,test_acc,loss_st,loss_n,loss_reg";

std::string num(double v) { return fmt::format("{:.10g}", v); }

json num_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

// CSV goes to `path` when given, otherwise to `fallback`.
class CsvSink {
 public:
  CsvSink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
      if (!*file_) throw IoError(fmt::format("cannot open {} for writing", path));
      stream_ = file_.get();
    }
  }
  std::ostream& stream() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) throw IoError("CSV write failure");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

struct Options {
  std::string bundle;
  std::string out;
  std::string spec;
  std::string z_path;
  std::string strategy = "cs";
  std::string omega_mode = "softmax";
  std::string neighbor_metric = "text";
  double threshold = 0.95;
  std::size_t threads = 0;
  TrainConfig train;
};

OmegaMode parse_omega_mode(const std::string& name) {
  if (name == "softmax") return OmegaMode::kSoftmax;
  if (name == "raw-cosine") return OmegaMode::kRawCosine;
  throw ValidationError(
      fmt::format("unknown omega mode '{}' (expected softmax or raw-cosine)", name));
}

TrainConfig resolve_config(const Options& opt) {
  TrainConfig c = opt.train;
  c.strategy = parse_strategy(opt.strategy);
  c.omega_mode = parse_omega_mode(opt.omega_mode);
  c.neighbor_metric = parse_neighbor_metric(opt.neighbor_metric);
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw IoError(fmt::format("write failure on {}", path.string()));
}

int cmd_synth(const Options& opt, std::ostream& out) {
  const SynthSpec spec = read_synth_spec(opt.spec);
  const EmbeddingBundle bundle = generate(spec);
  save_bundle(bundle, opt.out);
  const RealMatrix z = to_real(bundle.catalog.z);
  json summary = {{"bundle", opt.out},
                  {"N", bundle.weak.rows()},
                  {"N_test", bundle.test->rows()},
                  {"zero_shot_train_acc", evaluate_accuracy(bundle.weak, z, *bundle.truth_train)},
                  {"zero_shot_test_acc", evaluate_accuracy(*bundle.test, z, *bundle.truth_test)}};
  out << summary.dump() << "\n";
  return 0;
}

int cmd_label(const Options& opt, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(opt);
  const EmbeddingBundle bundle = load_bundle(opt.bundle);
  const RealMatrix z = to_real(bundle.catalog.z);
  const auto records = zero_shot_label(bundle.weak, z, config.tau, config.omega_mode);

  CsvSink sink(opt.out, out);
  auto& csv = sink.stream();
  csv << kLabelHeader << "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    csv << i << ',' << r.y_hat << ',' << num(r.omega) << ',' << r.y_second << '\n';
  }
  sink.finish();

  json summary = {{"N", records.size()}};
  if (bundle.truth_train) {
    summary["train_acc"] = evaluate_accuracy(bundle.weak, z, *bundle.truth_train);
  }
  if (bundle.test && bundle.truth_test) {
    summary["test_acc"] = evaluate_accuracy(*bundle.test, z, *bundle.truth_test);
  }
  (opt.out.empty() ? err : out) << summary.dump() << "\n";
  return 0;
}

int cmd_filter(const Options& opt, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(opt);
  const EmbeddingBundle bundle = load_bundle(opt.bundle);
  std::optional<MemoryBank> bank;
  const auto labels = label_epoch(bundle, to_real(bundle.catalog.z), bank, config, 1);

  CsvSink sink(opt.out, out);
  auto& csv = sink.stream();
  csv << kFilterHeader << "\n";
  std::size_t clean = 0;
  for (std::size_t i = 0; i < labels.states.size(); ++i) {
    const auto& s = labels.states[i];
    clean += s.clean;
    csv << i << ',' << s.y_hat << ',' << num(s.omega) << ',' << num(s.phi) << ','
        << num(s.psi) << ',' << (s.clean ? 1 : 0) << '\n';
  }
  sink.finish();

  std::size_t confident = 0;
  for (bool b : threshold_filter(labels.records, opt.threshold)) confident += b;
  json summary = {{"strategy", std::string(to_string(config.strategy))},
                  {"N", labels.states.size()},
                  {"clean_count", clean},
                  {"threshold", opt.threshold},
                  {"threshold_count", confident}};
  (opt.out.empty() ? err : out) << summary.dump() << "\n";
  return 0;
}

int cmd_refine(const Options& opt, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(opt);
  const EmbeddingBundle bundle = load_bundle(opt.bundle);
  std::optional<MemoryBank> bank;
  const auto labels = label_epoch(bundle, to_real(bundle.catalog.z), bank, config, 1);

  CsvSink sink(opt.out, out);
  auto& csv = sink.stream();
  csv << kRefineHeader << "\n";
  std::size_t noisy = 0;
  for (std::size_t i = 0; i < labels.states.size(); ++i) {
    const auto& s = labels.states[i];
    if (s.clean) continue;
    ++noisy;
    const auto& r = *s.refined;
    csv << i << ',' << r.r_hat << ',' << r.y_h << ',' << num(r.delta_zeta) << ','
        << num(r.lambda) << ',';
    for (std::size_t k = 0; k < r.neighbors.size(); ++k) {
      csv << (k ? ";" : "") << r.neighbors[k];
    }
    csv << '\n';
  }
  sink.finish();
  json summary = {{"strategy", std::string(to_string(config.strategy))},
                  {"N", labels.states.size()},
                  {"noisy_count", noisy}};
  (opt.out.empty() ? err : out) << summary.dump() << "\n";
  return 0;
}

int cmd_train(const Options& opt, std::ostream& out) {
  const TrainConfig config = resolve_config(opt);
  const EmbeddingBundle bundle = load_bundle(opt.bundle);
  const fs::path dir(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  const TrainResult result = run_training(bundle, config);

  std::ostringstream csv;
  csv << kMetricsHeader << "\n";
  for (const auto& m : result.metrics) {
    csv << m.epoch << ',' << num(m.pseudo_acc) << ',' << m.clean_count << ','
        << num(m.clean_acc) << ',' << num(m.refined_acc) << ',' << num(m.test_acc)
        << ',' << num(m.loss_st) << ',' << num(m.loss_n) << ',' << num(m.loss_reg)
        << '\n';
  }
  write_text(dir / "metrics.csv", csv.str());
  write_blob(dir / "z_final.f32", to_embedding(result.z));
  if (result.bank) save_bank(*result.bank, dir / "bank.f32", dir / "bank.json");

  json summary = {
      {"strategy", std::string(to_string(config.strategy))},
      {"epochs", config.epochs},
      {"batch", config.batch},
      {"lr", config.lr},
      {"tau", config.tau},
      {"k", config.k},
      {"k_n", config.k_n},
      {"seed", config.seed},
      {"zero_shot_test_acc", num_or_null(result.zero_shot_test_acc)},
      {"final_test_acc", result.metrics.empty()
                             ? num_or_null(result.zero_shot_test_acc)
                             : num_or_null(result.metrics.back().test_acc)}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const Options& opt, std::ostream& out) {
  const EmbeddingBundle bundle = load_bundle(opt.bundle);
  const EmbeddingMatrix z = read_blob(opt.z_path, bundle.num_classes(), bundle.dim());
  check_unit_rows(z, opt.z_path);
  json result;
  if (bundle.test && bundle.truth_test) {
    result = {{"split", "test"},
              {"n", bundle.test->rows()},
              {"test_acc", evaluate_accuracy(*bundle.test, to_real(z), *bundle.truth_test)}};
  } else if (bundle.truth_train) {
    result = {{"split", "train"},
              {"n", bundle.weak.rows()},
              {"test_acc", evaluate_accuracy(bundle.weak, to_real(z), *bundle.truth_train)}};
  } else {
    throw ValidationError("bundle has no ground-truth labels to evaluate against");
  }
  out << result.dump() << "\n";
  return 0;
}

void add_pipeline_options(CLI::App* cmd, Options& opt) {
  cmd->add_option("--tau", opt.train.tau, "Logit scale applied to cosines")
      ->capture_default_str();
  cmd->add_option("--strategy", opt.strategy, "Cross-class set: cs, rs or fs")
      ->capture_default_str();
  cmd->add_option("--k", opt.train.k, "Cross-class set size")->capture_default_str();
  cmd->add_option("--kn", opt.train.k_n, "Neighbors per noisy sample")
      ->capture_default_str();
  cmd->add_option("--seed", opt.train.seed, "Seed for every random choice")
      ->capture_default_str();
  cmd->add_option("--omega-mode", opt.omega_mode, "softmax or raw-cosine")
      ->capture_default_str();
  cmd->add_option("--neighbor-metric", opt.neighbor_metric, "text or image")
      ->capture_default_str();
}

}  // namespace

SynthSpec read_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("missing spec file {}", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path, e.what()));
  }
  if (!j.is_object()) throw ValidationError(fmt::format("{}: expected a JSON object", path));
  SynthSpec s = benchmark_spec();
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "C") s.num_classes = value.get<std::size_t>();
      else if (key == "d") s.dim = value.get<std::size_t>();
      else if (key == "n_per_class") s.n_per_class = value.get<std::size_t>();
      else if (key == "n_test_per_class") s.n_test_per_class = value.get<std::size_t>();
      else if (key == "center_separation") s.center_separation = value.get<double>();
      else if (key == "within_noise") s.within_noise = value.get<double>();
      else if (key == "strong_jitter") s.strong_jitter = value.get<double>();
      else if (key == "M") s.descriptions_per_class = value.get<std::size_t>();
      else if (key == "desc_noise") s.desc_noise = value.get<double>();
      else if (key == "mislabel_rate") s.mislabel_rate = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw ValidationError(fmt::format("{}: unknown key '{}'", path, key));
    } catch (const json::exception& e) {
      throw ValidationError(fmt::format("{}: bad value for '{}': {}", path, key, e.what()));
    }
  }
  s.validate();
  return s;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive pseudo-labeling over precomputed embedding bundles", "adapl"};
  app.require_subcommand(0, 1);
  Options opt;
  app.add_option("--threads", opt.threads, "Worker thread cap (0 = all cores)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic benchmark bundle");
  synth->add_option("--spec", opt.spec,
                    "JSON spec (keys: C, d, n_per_class, n_test_per_class, "
                    "center_separation, within_noise, strong_jitter, M, "
                    "desc_noise, mislabel_rate, seed)")
      ->required();
  synth->add_option("--out", opt.out, "Bundle directory")->required();

  auto* label = app.add_subcommand("label", "Zero-shot labels (CSV) and accuracy");
  label->add_option("--bundle", opt.bundle, "Bundle directory")->required();
  label->add_option("--out", opt.out, "CSV path (default: stdout)");
  label->add_option("--tau", opt.train.tau, "Logit scale")->capture_default_str();
  label->add_option("--omega-mode", opt.omega_mode, "softmax or raw-cosine")
      ->capture_default_str();

  auto* filter = app.add_subcommand("filter", "Clean/noisy scores (CSV)");
  filter->add_option("--bundle", opt.bundle, "Bundle directory")->required();
  filter->add_option("--out", opt.out, "CSV path (default: stdout)");
  filter->add_option("--threshold", opt.threshold, "Confidence baseline threshold")
      ->capture_default_str();
  add_pipeline_options(filter, opt);

  auto* refine = app.add_subcommand("refine", "Refined labels for noisy samples (CSV)");
  refine->add_option("--bundle", opt.bundle, "Bundle directory")->required();
  refine->add_option("--out", opt.out, "CSV path (default: stdout)");
  add_pipeline_options(refine, opt);

  auto* train = app.add_subcommand("train", "Train text prototypes");
  train->add_option("--bundle", opt.bundle, "Bundle directory")->required();
  train->add_option("--out", opt.out, "Output directory")->required();
  train->add_option("--epochs", opt.train.epochs)->capture_default_str();
  train->add_option("--batch", opt.train.batch)->capture_default_str();
  train->add_option("--lr", opt.train.lr)->capture_default_str();
  train->add_option("--weight-decay", opt.train.weight_decay)->capture_default_str();
  train->add_option("--w-st", opt.train.weights.st, "Weight of the clean loss")
      ->capture_default_str();
  train->add_option("--w-n", opt.train.weights.n, "Weight of the noisy loss")
      ->capture_default_str();
  train->add_option("--w-reg", opt.train.weights.reg, "Weight of the balance term")
      ->capture_default_str();
  add_pipeline_options(train, opt);

  auto* eval = app.add_subcommand("eval", "Test accuracy of a prototype checkpoint");
  eval->add_option("--bundle", opt.bundle, "Bundle directory")->required();
  eval->add_option("--z", opt.z_path, "Prototype blob (C x d)")->required();

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("adapl");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return 2;
  }

  set_max_threads(opt.threads);
  try {
    if (synth->parsed()) return cmd_synth(opt, out);
    if (label->parsed()) return cmd_label(opt, out, err);
    if (filter->parsed()) return cmd_filter(opt, out, err);
    if (refine->parsed()) return cmd_refine(opt, out, err);
    if (train->parsed()) return cmd_train(opt, out);
    if (eval->parsed()) return cmd_eval(opt, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace adapl
