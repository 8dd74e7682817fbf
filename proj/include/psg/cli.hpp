// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSG_CLI_HPP_
#define PSG_CLI_HPP_

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "psg/config.hpp"
#include "psg/continual.hpp"
#include "psg/data.hpp"
#include "psg/distill.hpp"
#include "psg/error.hpp"
#include "psg/eval.hpp"
#include "psg/generator.hpp"
#include "psg/parallel.hpp"
#include "psg/privacy.hpp"
#include "psg/synthetic.hpp"

namespace psg {

// Process exit statuses.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitIo = 2,
  kExitValidation = 3,
  kExitPrivacy = 4,
};

inline constexpr const char* kOutputRootEnv = "PSG_OUTPUT_ROOT";

namespace cli {

struct LoadedData {
  LabeledDataset train;
  LabeledDataset test;
};

inline LabeledDataset load_split(const DataConfig& d, bool train) {
  const Provenance role = train ? Provenance::kRealTrain : Provenance::kRealTest;
  const char* which = train ? "train" : "test";
  LabeledDataset ds;
  if (d.format == DataFormat::kIdx) {
    const std::string& img = train ? d.train_images : d.test_images;
    const std::string& lab = train ? d.train_labels : d.test_labels;
    if (img.empty() || lab.empty()) {
      throw ConfigError(std::string("data.") + which + "_images",
                        "idx data needs image and label paths");
    }
    ds = load_idx(img, lab, role);
  } else {
    const std::string& path = train ? d.train_csv : d.test_csv;
    if (path.empty()) {
      throw ConfigError(std::string("data.") + which + "_csv", "csv path missing");
    }
    ds = load_csv(path, role);
  }
  if (!d.classes.empty()) ds = select_classes(ds, d.classes, d.limit_per_class);
  if (d.downsample) ds = downsample2x(ds);
  ds.validate();
  if (ds.size() == 0) throw InvalidArgument(std::string(which) + " split is empty");
  return ds;
}

inline LabeledDataset load_train(const RunConfig& c) {
  LabeledDataset train = load_split(c.data, true);
  if (c.data.normalize) train = apply_normalization(train, fit_normalization(train));
  return train;
}

// Test data standardized with constants recorded by an earlier run.
inline LabeledDataset load_test(const RunConfig& c,
                                const std::optional<NormalizationRecord>& norm) {
  LabeledDataset test = load_split(c.data, false);
  if (c.data.normalize) {
    if (!norm) {
      throw ConfigError("data.normalize",
                        "normalization constants unavailable for test data");
    }
    test = apply_normalization(test, *norm);
  }
  return test;
}

inline nlohmann::json norm_json(const std::optional<NormalizationRecord>& n) {
  if (!n) return nullptr;
  return {{"mean", n->mean}, {"std", n->std}};
}

inline std::optional<NormalizationRecord> norm_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  try {
    return NormalizationRecord{j.at("mean").get<std::vector<double>>(),
                               j.at("std").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad normalization record: ") + e.what());
  }
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << s;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline std::filesystem::path output_dir(const std::string& flag,
                                        const RunConfig* c,
                                        const std::string& command) {
  std::filesystem::path dir;
  if (!flag.empty()) {
    dir = flag;
  } else if (c && !c->output_dir.empty()) {
    dir = c->output_dir;
  } else {
    const char* root = std::getenv(kOutputRootEnv);
    dir = std::filesystem::path(root && *root ? root : "psg_out") / command;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

// Timing lives in its own file so reports stay byte-stable across reruns.
inline void write_distill_outputs(const std::filesystem::path& dir,
                                  const RunConfig& c, const DistillResult& r,
                                  const LabeledDataset& train) {
  save_synthetic(r.set, (dir / "synthetic.psg").string());
  nlohmann::json rep = r.report.to_json();
  const double wall = rep["wall_time_s"].get<double>();
  rep.erase("wall_time_s");
  nlohmann::json j;
  j["config"] = c.to_json();
  j["distill"] = rep;
  j["normalization"] = norm_json(train.normalization);
  j["train_size"] = train.size();
  j["accountant"] = accountant_to_json(r.accountant, c.distill.privacy.delta,
                                       r.report.q, r.report.sigma);
  write_json(dir / "report.json", j);
  write_json(dir / "accountant.json", j["accountant"]);
  write_json(dir / "timing.json", {{"wall_time_s", wall}});
}

inline int cmd_calibrate(double epsilon, double delta, double q, long steps,
                         const std::string& out_flag) {
  const auto orders = default_orders();
  const double sigma = calibrate_noise(epsilon, delta, q, steps, orders);
  AccountantState acc = accumulate(AccountantState::with_orders(orders), q,
                                   sigma, steps);
  const auto dp = rdp_to_dp(acc, delta);
  const auto dir = output_dir(out_flag, nullptr, "calibrate");
  write_json(dir / "accountant.json", accountant_to_json(acc, delta, q, sigma));
  nlohmann::json j = {{"sigma", sigma},
                      {"epsilon", dp.epsilon},
                      {"best_order", dp.best_order},
                      {"target_epsilon", epsilon},
                      {"delta", delta},
                      {"q", q},
                      {"steps", steps},
                      {"accountant", (dir / "accountant.json").string()}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_report(const std::string& path, std::optional<double> delta) {
  const nlohmann::json j = read_json(path);
  const AccountantState acc = accountant_from_json(j);
  double d = 0.0;
  if (delta) {
    d = *delta;
  } else if (j.contains("delta")) {
    d = j["delta"].get<double>();
  } else {
    throw InvalidArgument("accountant file has no delta; pass --delta");
  }
  const auto dp = rdp_to_dp(acc, d);
  std::cout << nlohmann::json({{"epsilon", dp.epsilon},
                               {"best_order", dp.best_order},
                               {"delta", d},
                               {"steps", acc.steps_consumed}})
                   .dump(2)
            << "\n";
  return kExitOk;
}

inline int cmd_distill(const std::string& config_path, bool prior,
                       const std::string& out_flag) {
  const RunConfig c = load_config(config_path);
  const LabeledDataset train = load_train(c);
  const auto dir = output_dir(out_flag, &c, prior ? "distill-prior" : "distill");
  const DistillResult r = prior
                              ? psg_train_with_prior(train, c.distill, c.generator)
                              : psg_train(train, c.distill);
  write_distill_outputs(dir, c, r, train);
  std::cout << (dir / "synthetic.psg").string() << "\n";
  return kExitOk;
}

// Reads only the synthetic set, its report and real test data.
inline int cmd_eval(const std::string& config_path, const std::string& set_path,
                    std::string report_path, const std::string& out_flag) {
  const RunConfig c = load_config(config_path);
  const SyntheticSet set = load_synthetic(set_path);
  if (report_path.empty()) {
    report_path =
        (std::filesystem::path(set_path).parent_path() / "report.json").string();
  }
  std::optional<NormalizationRecord> norm;
  if (c.data.normalize) norm = norm_from_json(read_json(report_path).at("normalization"));
  const LabeledDataset test = load_test(c, norm);
  if (test.example_shape() != set.example_shape() ||
      test.num_classes != set.num_classes) {
    throw ShapeError("synthetic set " + shape_str(set.example_shape()) +
                     " does not match test data " + shape_str(test.example_shape()));
  }
  const auto rows = cross_arch_report(set, c.eval_archs, test, c.eval);
  const auto dir = output_dir(out_flag, &c, "eval");
  nlohmann::json j = {{"config", c.to_json()},
                      {"synthetic", set_path},
                      {"test_size", test.size()},
                      {"results", arch_report_json(rows)}};
  write_json(dir / "eval.json", j);
  std::cout << j["results"].dump(2) << "\n";
  return kExitOk;
}

inline int cmd_continual(const std::string& config_path,
                         const std::string& out_flag) {
  const RunConfig c = load_config(config_path);
  if (c.continual.partitions.empty()) {
    throw ConfigError("continual.partitions", "no partitions given");
  }
  const LabeledDataset train = load_train(c);
  const LabeledDataset test = load_test(c, train.normalization);
  const ContinualReport rep = run_continual(train, test, c.continual);
  const auto dir = output_dir(out_flag, &c, "continual");
  nlohmann::json j = {{"config", c.to_json()}, {"continual", rep.to_json()}};
  write_json(dir / "continual.json", j);
  std::cout << j["continual"]["average_accuracy"].dump() << "\n";
  return kExitOk;
}

inline int cmd_export(const std::string& set_path, const std::string& report_path,
                      const std::string& out_flag) {
  const SyntheticSet set = load_synthetic(set_path);
  std::optional<NormalizationRecord> norm;
  if (!report_path.empty()) norm = norm_from_json(read_json(report_path).at("normalization"));
  const auto dir = output_dir(out_flag, nullptr, "export-images");
  const auto path = dir / "synthetic.pgm";
  export_pgm_grid(set, path.string(), norm);
  std::cout << path.string() << "\n";
  return kExitOk;
}

}  // namespace cli

// Parses argv, runs one subcommand and maps failures to exit statuses.
// Diagnostics go to `err`; results go to standard output.
inline int run_command(int argc, const char* const* argv,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Private synthetic set generation"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);

  std::string config, out, set_path, report_path, accountant;
  double epsilon = 0, delta = 1e-5, q = 0;
  long steps = 0;
  std::optional<double> report_delta;

  auto* cal = app.add_subcommand("calibrate", "noise multiplier for a budget");
  cal->add_option("--epsilon", epsilon)->required();
  cal->add_option("--delta", delta);
  cal->add_option("--q", q)->required();
  cal->add_option("--steps", steps)->required();
  cal->add_option("--out", out);

  auto* rep = app.add_subcommand("report", "epsilon of an accountant file");
  rep->add_option("accountant", accountant)->required();
  rep->add_option("--delta", report_delta);

  auto* dis = app.add_subcommand("distill", "learn a private synthetic set");
  auto* dpr = app.add_subcommand("distill-prior", "same, with a generator prior");
  auto* con = app.add_subcommand("continual", "class-incremental stages");
  for (auto* s : {dis, dpr, con}) {
    s->add_option("--config", config)->required();
    s->add_option("--out", out);
  }
  auto* ev = app.add_subcommand("eval", "train on a synthetic set, test on real data");
  ev->add_option("--config", config)->required();
  ev->add_option("--synthetic", set_path)->required();
  ev->add_option("--report", report_path);
  ev->add_option("--out", out);

  auto* ex = app.add_subcommand("export-images", "write a PGM grid");
  ex->add_option("--synthetic", set_path)->required();
  ex->add_option("--report", report_path);
  ex->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    set_max_threads(threads);
    if (*cal) return cli::cmd_calibrate(epsilon, delta, q, steps, out);
    if (*rep) return cli::cmd_report(accountant, report_delta);
    if (*dis) return cli::cmd_distill(config, false, out);
    if (*dpr) return cli::cmd_distill(config, true, out);
    if (*ev) return cli::cmd_eval(config, set_path, report_path, out);
    if (*con) return cli::cmd_continual(config, out);
    if (*ex) return cli::cmd_export(set_path, report_path, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const PrivacyInfeasible& e) {
    err << "error: " << e.what() << "\n";
    return kExitPrivacy;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace psg

#endif  // PSG_CLI_HPP_
